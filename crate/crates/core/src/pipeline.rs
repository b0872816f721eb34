//! Frame generation over an event stream.
//!
//! A [`Pipeline`] owns one accumulator and one FIFO and is fed events in
//! timestamp order. Every event is pushed to the FIFO first; in write mode the
//! FIFO is drained into the accumulator immediately. When the head of the
//! queue belongs to a later window (or the event count is reached) the
//! accumulator is read out into a [`Frame`].
//!
//! Under [`TimingMode::HardwareTimed`] a readout keeps the accumulator in read
//! mode for `ceil(W*H / X)` clock cycles, starting at the window boundary.
//! Events arriving during that interval wait in the FIFO and, if it fills up,
//! the oldest of them are dropped. [`TimingMode::Behavioral`] readouts take no
//! time and never lose events. [`Buffering::PingPong`] alternates two
//! accumulators, so readouts never stall the input.
//!
//! Timestamps double as the model clock.

use std::fmt;

use crate::error::ConfigError;
use crate::evio::{Event, Frame, Polarity, SensorGeometry};
use crate::hwmodel::{
    map_event_to_address, readout_latency, Accumulator, AddressError, EventFifo, TimingConfig,
    DEFAULT_CLOCK_HZ, DEFAULT_FIFO_CAPACITY,
};
use crate::repr::{
    self, build_decode_lut, update_cell, CellCode, DecodeLut, ExpDecayTable, ReprKind,
    Representation,
};
use crate::Scalar;

/// When frames are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trigger {
    /// Tumbling windows `[n*tau, (n+1)*tau)`.
    TimeWindow { tau_us: u64 },
    /// One frame per `events` accepted events.
    CountWindow { events: u64 },
    /// Keep `n_us` of history, emit every `k_us`, show the last `m_us`.
    Rolling { n_us: u64, m_us: u64, k_us: u64 },
}

impl Trigger {
    /// Rolling window with 8 ms history, 4 ms coverage and a 1 ms step.
    pub const DEFAULT_ROLLING: Trigger = Trigger::Rolling {
        n_us: 8_000,
        m_us: 4_000,
        k_us: 1_000,
    };

    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            Trigger::TimeWindow { tau_us } => {
                if tau_us == 0 {
                    return Err(repr::ZeroTau.into());
                }
            }
            Trigger::CountWindow { events } => {
                if events == 0 {
                    return Err(ConfigError::ZeroCount);
                }
            }
            Trigger::Rolling { n_us, m_us, k_us } => {
                let (n, m, k) = (n_us, m_us, k_us);
                if k == 0 || k > m || m > n {
                    return Err(ConfigError::RollingOrder { n, m, k });
                }
                if m % k != 0 || n % k != 0 {
                    return Err(ConfigError::RollingDivisibility { n, m, k });
                }
                if n / k > 256 {
                    return Err(ConfigError::RollingSlots(n / k));
                }
            }
        }
        Ok(())
    }

    /// Number of sub-window slots of a rolling trigger, 1 otherwise.
    pub fn slots(&self) -> u64 {
        match *self {
            Trigger::Rolling { n_us, k_us, .. } => n_us / k_us.max(1),
            _ => 1,
        }
    }
}

/// How events are held while the accumulator is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Buffering {
    Fifo { capacity: usize },
    PingPong,
    /// FIFO without a depth limit.
    Unbounded,
}

impl Default for Buffering {
    fn default() -> Self {
        Buffering::Fifo {
            capacity: DEFAULT_FIFO_CAPACITY,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TimingMode {
    #[default]
    Behavioral,
    HardwareTimed { clock_hz: u64 },
}

impl TimingMode {
    pub fn hardware() -> Self {
        TimingMode::HardwareTimed {
            clock_hz: DEFAULT_CLOCK_HZ,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    /// The decay interval of `repr` is replaced by the window length for
    /// time windows, the window span for count windows and `M` for rolling
    /// windows.
    pub repr: Representation,
    pub geometry: SensorGeometry,
    pub banks: usize,
    pub trigger: Trigger,
    pub buffering: Buffering,
    pub timing: TimingMode,
}

impl PipelineConfig {
    pub fn new(repr: Representation, geometry: SensorGeometry, trigger: Trigger) -> Self {
        PipelineConfig {
            repr,
            geometry,
            banks: 1,
            trigger,
            buffering: Buffering::default(),
            timing: TimingMode::Behavioral,
        }
    }

    pub fn with_banks(mut self, banks: usize) -> Self {
        self.banks = banks;
        self
    }

    pub fn with_buffering(mut self, buffering: Buffering) -> Self {
        self.buffering = buffering;
        self
    }

    pub fn with_timing(mut self, timing: TimingMode) -> Self {
        self.timing = timing;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.trigger.validate()?;
        if self.banks == 0 {
            return Err(ConfigError::ZeroBanks);
        }
        if !(self.geometry.width() as usize).is_multiple_of(self.banks) {
            return Err(ConfigError::BanksNotDividingWidth {
                width: self.geometry.width(),
                banks: self.banks,
            });
        }
        if let Buffering::Fifo { capacity: 0 } = self.buffering {
            return Err(ConfigError::ZeroFifoCapacity);
        }
        if let TimingMode::HardwareTimed { clock_hz: 0 } = self.timing {
            return Err(ConfigError::ZeroClock);
        }
        if self.buffering == Buffering::PingPong && matches!(self.trigger, Trigger::Rolling { .. })
        {
            return Err(ConfigError::PingPongRolling);
        }
        Ok(())
    }

    /// Readout duration in whole microseconds; 0 for behavioral timing.
    pub fn readout_us(&self) -> u64 {
        match self.timing {
            TimingMode::Behavioral => 0,
            TimingMode::HardwareTimed { clock_hz } => {
                let timing = TimingConfig {
                    clock_hz,
                    pixels_per_clock: self.banks,
                };
                readout_latency(self.geometry, timing).as_micros_ceil()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub frames_emitted: u64,
    pub events_offered: u64,
    /// Events written into the accumulator.
    pub events_processed: u64,
    pub events_dropped: u64,
    pub fifo_max_occupancy: u64,
    pub modeled_readout_busy_us: u64,
}

impl PipelineStats {
    /// Events still waiting in the FIFO (or in a pending count window).
    pub fn events_in_flight(&self) -> u64 {
        self.events_offered - self.events_processed - self.events_dropped
    }
}

impl fmt::Display for PipelineStats {
    /// One `key=value` pair per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames_emitted={}", self.frames_emitted)?;
        writeln!(f, "events_offered={}", self.events_offered)?;
        writeln!(f, "events_processed={}", self.events_processed)?;
        writeln!(f, "events_dropped={}", self.events_dropped)?;
        writeln!(f, "fifo_max_occupancy={}", self.fifo_max_occupancy)?;
        writeln!(f, "modeled_readout_busy_us={}", self.modeled_readout_busy_us)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("timestamp decreases from {prev} to {next}")]
    Order { prev: u64, next: u64 },
    #[error(transparent)]
    Address(#[from] AddressError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("pipeline was flushed and accepts no more events")]
    Finished,
}

/// Accumulator cell for rolling windows: the representation code plus the
/// sub-window slot it was written in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RollingCell {
    pub code: CellCode,
    pub slot: u8,
    pub occupied: bool,
    /// Timestamp of the latest event, used by the decay representation.
    pub stamp: u64,
}

#[derive(Clone, Debug)]
enum Store {
    Plain(Accumulator<CellCode>),
    Rolling(Accumulator<RollingCell>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Write,
    Reading { until: u64 },
}

/// Streaming frame generator. See the module docs for the timing model.
#[derive(Clone, Debug)]
pub struct Pipeline {
    config: PipelineConfig,
    store: Store,
    fifo: EventFifo<Event>,
    lut: DecodeLut,
    exp: Option<ExpDecayTable>,
    readout_us: u64,
    stalls: bool,
    mode: Mode,
    busy_until: u64,
    /// Current window (time, rolling) or frame ordinal (count).
    window: Option<u64>,
    in_window: u64,
    first_t: u64,
    last_written_t: u64,
    pending: Vec<Event>,
    last_arrival: Option<u64>,
    next_index: u64,
    stats: PipelineStats,
    dropped: Option<Vec<Event>>,
    finished: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let store = match config.trigger {
            Trigger::Rolling { .. } => Store::Rolling(Accumulator::new(config.geometry, config.banks)?),
            _ => Store::Plain(Accumulator::new(config.geometry, config.banks)?),
        };
        let fifo = match config.buffering {
            Buffering::Fifo { capacity } => EventFifo::new(capacity)?,
            Buffering::PingPong | Buffering::Unbounded => EventFifo::unbounded(),
        };
        let exp = (config.repr.kind == ReprKind::ExpDecayTS)
            .then(|| match config.trigger {
                Trigger::TimeWindow { tau_us } => Some(ExpDecayTable::new(tau_us)),
                Trigger::Rolling { m_us, .. } => Some(ExpDecayTable::new(m_us)),
                Trigger::CountWindow { .. } => None,
            })
            .flatten();
        let readout_us = config.readout_us();
        Ok(Pipeline {
            store,
            fifo,
            lut: build_decode_lut(config.repr),
            exp,
            readout_us,
            stalls: readout_us > 0 && config.buffering != Buffering::PingPong,
            mode: Mode::Write,
            busy_until: 0,
            window: None,
            in_window: 0,
            first_t: 0,
            last_written_t: 0,
            pending: Vec::new(),
            last_arrival: None,
            next_index: 0,
            stats: PipelineStats::default(),
            dropped: None,
            finished: false,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Keep a copy of every event evicted from the FIFO.
    pub fn track_drops(&mut self) {
        self.dropped.get_or_insert_with(Vec::new);
    }

    pub fn dropped_events(&self) -> &[Event] {
        self.dropped.as_deref().unwrap_or(&[])
    }

    pub fn stats(&self) -> PipelineStats {
        let mut s = self.stats;
        s.fifo_max_occupancy = self.fifo.max_occupancy() as u64;
        s.events_dropped = self.fifo.drop_count();
        s
    }

    /// Offers one event. Frames completed as a consequence go to `sink`.
    pub fn feed<F: FnMut(Frame)>(&mut self, event: Event, sink: &mut F) -> Result<(), PipelineError> {
        if self.finished {
            return Err(PipelineError::Finished);
        }
        map_event_to_address(&event, self.config.geometry)?;
        if let Some(prev) = self.last_arrival {
            if event.t < prev {
                return Err(PipelineError::Order {
                    prev,
                    next: event.t,
                });
            }
        }
        self.last_arrival = Some(event.t);
        self.stats.events_offered += 1;

        if self.fifo.is_empty() && self.mode == Mode::Write && self.fits_open_window(event.t) {
            // same outcome as push, settle, pop
            self.fifo.pass_through();
            self.write(event);
            if let Trigger::CountWindow { .. } = self.config.trigger {
                // a full count window is read out right away
                self.settle(event.t, sink);
            }
            return Ok(());
        }
        self.settle(event.t, sink);
        let in_read = matches!(self.mode, Mode::Reading { .. });
        if let Some(evicted) = self.fifo.push(event, in_read) {
            if let Some(log) = self.dropped.as_mut() {
                log.push(evicted);
            }
        }
        self.settle(event.t, sink);
        Ok(())
    }

    /// Offers a slice of events; equivalent to calling [`feed`](Self::feed)
    /// on each. Runs that land in the open window with nothing queued take a
    /// shortcut past the FIFO.
    pub fn feed_all<F: FnMut(Frame)>(&mut self, events: &[Event], sink: &mut F) -> Result<(), PipelineError> {
        let geometry = self.config.geometry;
        let mut i = 0;
        while i < events.len() {
            if let (false, true, Some(step), Some(n)) = (
                self.finished,
                self.fifo.is_empty() && self.mode == Mode::Write,
                self.step_us(),
                self.window,
            ) {
                let end = n.saturating_add(1).saturating_mul(step);
                let mut last = self.last_arrival.unwrap_or(0);
                let start = i;
                while let Some(&e) = events.get(i) {
                    if e.t >= end || e.t < last || !geometry.contains(e.x, e.y) {
                        break;
                    }
                    last = e.t;
                    self.write(e);
                    i += 1;
                }
                let run = (i - start) as u64;
                if run > 0 {
                    self.last_arrival = Some(last);
                    self.stats.events_offered += run;
                    self.fifo.pass_through_n(run);
                    continue;
                }
            }
            self.feed(events[i], sink)?;
            i += 1;
        }
        Ok(())
    }

    /// Completes pending readouts, drains the FIFO and emits the final
    /// partial window. The pipeline accepts no events afterwards.
    pub fn flush<F: FnMut(Frame)>(&mut self, sink: &mut F) {
        if self.finished {
            return;
        }
        self.settle(u64::MAX, sink);
        let partial = match self.config.trigger {
            Trigger::CountWindow { .. } => self.in_window > 0,
            _ => self.window.is_some(),
        };
        if partial {
            let start = self.default_start();
            self.readout(start, sink);
        }
        self.finish_readout();
        self.finished = true;
    }

    fn finish_readout(&mut self) {
        if let Mode::Reading { .. } = self.mode {
            self.mode = Mode::Write;
            match &mut self.store {
                Store::Plain(acc) => acc.end_readout(),
                Store::Rolling(acc) => acc.end_readout(),
            }
        }
    }

    /// Whether an event at `t` would be written into the current window
    /// without any readout firing first.
    #[inline]
    fn fits_open_window(&self, t: u64) -> bool {
        match self.config.trigger {
            Trigger::CountWindow { events } => self.in_window < events,
            Trigger::TimeWindow { tau_us: step } | Trigger::Rolling { k_us: step, .. } => {
                self.window.is_some_and(|n| t < n.saturating_add(1).saturating_mul(step))
            }
        }
    }

    fn step_us(&self) -> Option<u64> {
        match self.config.trigger {
            Trigger::TimeWindow { tau_us } => Some(tau_us),
            Trigger::Rolling { k_us, .. } => Some(k_us),
            Trigger::CountWindow { .. } => None,
        }
    }

    fn window_end(&self) -> u64 {
        let n = self.window.unwrap_or(0);
        match self.step_us() {
            Some(step) => n.saturating_add(1).saturating_mul(step),
            None => self.last_written_t,
        }
    }

    fn default_start(&self) -> u64 {
        self.window_end().max(self.busy_until)
    }

    /// Advances the model clock to `now`.
    fn settle<F: FnMut(Frame)>(&mut self, now: u64, sink: &mut F) {
        loop {
            if let Mode::Reading { until } = self.mode {
                if until > now {
                    return;
                }
                self.finish_readout();
            }
            if let Trigger::CountWindow { events } = self.config.trigger {
                if self.in_window >= events {
                    let start = self.default_start();
                    self.readout(start, sink);
                    continue;
                }
            }
            let Some(head_t) = self.fifo.front().map(|e| e.t) else {
                return;
            };
            if let Some(step) = self.step_us() {
                let n = *self.window.get_or_insert(head_t / step);
                let end = n.saturating_add(1).saturating_mul(step);
                if head_t >= end {
                    let start = end.max(self.busy_until);
                    self.readout(start, sink);
                    continue;
                }
            }
            let event = self.fifo.pop().expect("queue head checked above");
            self.write(event);
        }
    }

    #[inline]
    fn write(&mut self, event: Event) {
        if self.in_window == 0 {
            self.first_t = event.t;
        }
        self.in_window += 1;
        self.last_written_t = event.t;
        self.stats.events_processed += 1;
        if matches!(self.config.trigger, Trigger::CountWindow { .. }) && self.window.is_none() {
            self.window = Some(0);
        }

        let address = event.y as usize * self.config.geometry.width() as usize + event.x as usize;
        let repr = self.config.repr;
        let result = match self.config.trigger {
            Trigger::TimeWindow { .. } => {
                let t_end = self.window_end();
                let Store::Plain(acc) = &mut self.store else {
                    unreachable!("time windows use plain cells")
                };
                match &self.exp {
                    Some(table) => acc.update_with(address, |_| table.encode(event.t, t_end, event.p)),
                    None => acc.update_with(address, |old| update_cell(repr, old, &event, t_end)),
                }
            }
            Trigger::CountWindow { .. } => {
                if repr.kind.is_time_dependent() {
                    // the window end is only known once the count is reached
                    self.pending.push(event);
                    Ok(())
                } else {
                    let Store::Plain(acc) = &mut self.store else {
                        unreachable!("count windows use plain cells")
                    };
                    acc.update_with(address, |old| update_cell(repr, old, &event, event.t))
                }
            }
            Trigger::Rolling { k_us, .. } => {
                let n = self.window.unwrap_or(0);
                let slot = (n % self.config.trigger.slots()) as u8;
                let t_end = (n + 1) * k_us;
                let table = self.exp.as_ref();
                let Store::Rolling(acc) = &mut self.store else {
                    unreachable!("rolling windows use rolling cells")
                };
                acc.update_with(address, |cell| {
                    let base = if cell.occupied && cell.slot == slot {
                        cell.code
                    } else {
                        CellCode::BACKGROUND
                    };
                    let code = match table {
                        Some(t) => t.encode(event.t, t_end, event.p),
                        None => update_cell(repr, base, &event, t_end),
                    };
                    RollingCell {
                        code,
                        slot,
                        occupied: true,
                        stamp: event.t,
                    }
                })
            }
        };
        debug_assert!(result.is_ok(), "write issued while reading");
    }

    fn commit_pending(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let t_end = self.last_written_t;
        let tau = t_end.saturating_sub(self.first_t).max(1);
        let Store::Plain(acc) = &mut self.store else {
            unreachable!("count windows use plain cells")
        };
        let width = self.config.geometry.width() as usize;
        for e in self.pending.drain(..) {
            let m = repr::exp_decay_magnitude::<Scalar>(t_end - e.t, tau);
            let address = e.y as usize * width + e.x as usize;
            let _ = acc.update_with(address, |_| CellCode::exp_decay(e.p, m));
        }
    }

    fn readout<F: FnMut(Frame)>(&mut self, start: u64, sink: &mut F) {
        let t_end = self.window_end();
        let index = self.next_index;
        let frame = match self.config.trigger {
            Trigger::TimeWindow { .. } | Trigger::CountWindow { .. } => {
                self.commit_pending();
                let Store::Plain(acc) = &mut self.store else {
                    unreachable!()
                };
                acc.begin_readout(&self.lut, t_end, index)
            }
            Trigger::Rolling { m_us, k_us, .. } => {
                let n = self.window.unwrap_or(0);
                let slots = self.config.trigger.slots();
                let visible = m_us / k_us;
                let reset_slot = ((n + 1) % slots) as u8;
                let kind = self.config.repr.kind;
                let lut = &self.lut;
                let exp = self.exp.as_ref();
                let Store::Rolling(acc) = &mut self.store else {
                    unreachable!()
                };
                let pixels = acc.begin_readout_with(|cell| {
                    let mut gray = lut.decode(CellCode::BACKGROUND);
                    if cell.occupied {
                        let age = (n + slots - cell.slot as u64) % slots;
                        if age < visible {
                            gray = match (kind, exp) {
                                (ReprKind::ExpDecayTS, Some(table)) => {
                                    lut.decode(table.encode(cell.stamp, t_end, polarity_of(cell.code)))
                                }
                                _ => lut.decode(cell.code),
                            };
                        }
                        if cell.slot == reset_slot {
                            *cell = RollingCell::default();
                        }
                    }
                    gray
                });
                Frame {
                    width: self.config.geometry.width(),
                    height: self.config.geometry.height(),
                    pixels,
                    t_end,
                    window_index: index,
                }
            }
        };
        sink(frame);
        self.next_index += 1;
        self.stats.frames_emitted += 1;
        self.stats.modeled_readout_busy_us += self.readout_us;
        self.window = Some(self.window.map_or(0, |n| n + 1));
        self.in_window = 0;

        self.busy_until = start.saturating_add(self.readout_us);
        if self.stalls {
            self.mode = Mode::Reading {
                until: self.busy_until,
            };
        } else {
            match &mut self.store {
                Store::Plain(acc) => acc.end_readout(),
                Store::Rolling(acc) => acc.end_readout(),
            }
        }
    }
}

fn polarity_of(code: CellCode) -> Polarity {
    if code.exp_parts().0 {
        Polarity::Negative
    } else {
        Polarity::Positive
    }
}

/// Feeds `events` through a fresh pipeline, collecting every frame.
pub fn run(
    events: &[Event],
    config: PipelineConfig,
    flush: bool,
) -> Result<(Vec<Frame>, PipelineStats), PipelineError> {
    let mut pipeline = Pipeline::new(config)?;
    let mut frames = Vec::new();
    let mut sink = |f: Frame| frames.push(f);
    pipeline.feed_all(events, &mut sink)?;
    if flush {
        pipeline.flush(&mut sink);
    }
    Ok((frames, pipeline.stats()))
}

fn run_expecting(
    events: &[Event],
    config: PipelineConfig,
    flush: bool,
    ok: fn(&Trigger) -> bool,
    expected: &'static str,
) -> Result<(Vec<Frame>, PipelineStats), PipelineError> {
    if !ok(&config.trigger) {
        return Err(ConfigError::WrongTrigger { expected }.into());
    }
    run(events, config, flush)
}

pub fn run_time_windowed(
    events: &[Event],
    config: PipelineConfig,
    flush: bool,
) -> Result<(Vec<Frame>, PipelineStats), PipelineError> {
    run_expecting(
        events,
        config,
        flush,
        |t| matches!(t, Trigger::TimeWindow { .. }),
        "time window",
    )
}

pub fn run_count_windowed(
    events: &[Event],
    config: PipelineConfig,
    flush: bool,
) -> Result<(Vec<Frame>, PipelineStats), PipelineError> {
    run_expecting(
        events,
        config,
        flush,
        |t| matches!(t, Trigger::CountWindow { .. }),
        "count window",
    )
}

pub fn run_rolling_window(
    events: &[Event],
    config: PipelineConfig,
    flush: bool,
) -> Result<(Vec<Frame>, PipelineStats), PipelineError> {
    run_expecting(
        events,
        config,
        flush,
        |t| matches!(t, Trigger::Rolling { .. }),
        "rolling window",
    )
}
