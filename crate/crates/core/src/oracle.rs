//! Brute-force reference frames.
//!
//! Everything here works on fully materialised event lists, evaluates the
//! representation definitions directly in `f64`, and has no FIFO, banking
//! or reset mechanics. It exists to check the streaming pipeline.

use crate::error::ConfigError;
use crate::evio::{Event, Frame, Polarity, SensorGeometry};
use crate::pipeline::Trigger;
use crate::repr::{ReprKind, Representation};
use crate::scalar::round_half_up;

/// Events of one window, kept whole.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DenseWindow {
    pub t_start: u64,
    pub t_end: u64,
    pub events: Vec<Event>,
}

impl DenseWindow {
    /// Selects the events with `t_start <= t < t_end`.
    pub fn select(events: &[Event], t_start: u64, t_end: u64) -> Self {
        DenseWindow {
            t_start,
            t_end,
            events: events
                .iter()
                .filter(|e| e.t >= t_start && e.t < t_end)
                .copied()
                .collect(),
        }
    }
}

fn exp_gray(e: &Event, t_end: u64, tau_us: u64) -> u8 {
    let age = t_end.saturating_sub(e.t).min(tau_us) as f64;
    let m = round_half_up(127.0 * (-age / tau_us as f64).exp()) as u8;
    match e.p {
        Polarity::Positive => 128 + m,
        Polarity::Negative => 128 - m,
    }
}

fn frequency_gray(sum: i32) -> u8 {
    let g = round_half_up(255.0 / (1.0 + (-(sum as f64) / 2.0).exp()));
    g.clamp(0.0, 255.0) as u8
}

/// Gray value of one pixel given its events in time order.
fn pixel_value(kind: ReprKind, events: &[&Event], t_end: u64, tau_us: u64) -> u8 {
    let Some(last) = events.last() else {
        return match kind {
            ReprKind::Binary => 0,
            _ => 128,
        };
    };
    match kind {
        ReprKind::Binary => 255,
        ReprKind::EventFrame => match last.p {
            Polarity::Positive => 255,
            Polarity::Negative => 0,
        },
        ReprKind::ExpDecayTS => exp_gray(last, t_end, tau_us),
        ReprKind::EventFrequency => {
            // 5-bit counter: every step is clamped
            let sum = events
                .iter()
                .fold(0i32, |s, e| (s + e.p.sign() as i32).clamp(-16, 15));
            frequency_gray(sum)
        }
    }
}

fn per_pixel(events: &[Event], geometry: SensorGeometry) -> Vec<Vec<&Event>> {
    let mut order: Vec<&Event> = events.iter().collect();
    // stable: equal timestamps keep stream order
    order.sort_by_key(|e| e.t);
    let mut pixels = vec![Vec::new(); geometry.pixel_count()];
    for e in order {
        if geometry.contains(e.x, e.y) {
            pixels[e.y as usize * geometry.width() as usize + e.x as usize].push(e);
        }
    }
    pixels
}

/// Frame for the events of one window ending at `t_end`. The decay interval
/// is `repr.tau_us()`.
pub fn dense_frame(
    events: &[Event],
    repr: Representation,
    geometry: SensorGeometry,
    t_end: u64,
) -> Frame {
    let pixels = per_pixel(events, geometry)
        .iter()
        .map(|evs| pixel_value(repr.kind, evs, t_end, repr.tau_us()))
        .collect();
    Frame {
        width: geometry.width(),
        height: geometry.height(),
        pixels,
        t_end,
        window_index: 0,
    }
}

fn check_rolling(n_us: u64, m_us: u64, k_us: u64) -> Result<(), ConfigError> {
    Trigger::Rolling { n_us, m_us, k_us }.validate()
}

/// Frame emitted at the end of absolute sub-window `n` of a rolling window.
///
/// Each pixel takes its latest event from sub-windows `(n - N/K, n]` and is
/// shown only if that sub-window also lies in `(n - M/K, n]`. Frequency sums
/// run over the events sharing the latest event's sub-window; the decay uses
/// `t_end = (n + 1) * K` and interval `M`.
pub fn rolling_frame(
    events: &[Event],
    n_us: u64,
    m_us: u64,
    k_us: u64,
    n: u64,
    kind: ReprKind,
    geometry: SensorGeometry,
) -> Result<Frame, ConfigError> {
    check_rolling(n_us, m_us, k_us)?;
    let history = n_us / k_us;
    let visible = m_us / k_us;
    let t_end = (n + 1) * k_us;
    let sub = |e: &Event| e.t / k_us;
    let retained: Vec<Event> = events
        .iter()
        .filter(|e| sub(e) <= n && sub(e) + history > n)
        .copied()
        .collect();
    let pixels = per_pixel(&retained, geometry)
        .iter()
        .map(|evs| {
            let latest = match evs.last() {
                Some(e) if n - sub(e) < visible => sub(e),
                _ => return pixel_value(kind, &[], t_end, m_us),
            };
            let same: Vec<&Event> = evs.iter().copied().filter(|e| sub(e) == latest).collect();
            pixel_value(kind, &same, t_end, m_us)
        })
        .collect();
    Ok(Frame {
        width: geometry.width(),
        height: geometry.height(),
        pixels,
        t_end,
        window_index: 0,
    })
}

/// Whole frame sequence a lossless pipeline should produce for a stream in
/// timestamp order.
pub fn reference_frames(
    events: &[Event],
    repr: Representation,
    geometry: SensorGeometry,
    trigger: Trigger,
    flush: bool,
) -> Result<Vec<Frame>, ConfigError> {
    trigger.validate()?;
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Ok(Vec::new());
    };
    let mut frames = Vec::new();
    match trigger {
        Trigger::TimeWindow { tau_us } => {
            let (n0, n1) = (first.t / tau_us, last.t / tau_us);
            let end = if flush { n1 + 1 } else { n1 };
            for n in n0..end {
                let w = DenseWindow::select(events, n * tau_us, (n + 1) * tau_us);
                frames.push(dense_frame(&w.events, repr.with_tau(tau_us), geometry, w.t_end));
            }
        }
        Trigger::CountWindow { events: z } => {
            for chunk in events.chunks(z as usize) {
                if chunk.len() < z as usize && !flush {
                    break;
                }
                let t_end = chunk[chunk.len() - 1].t;
                let tau = (t_end - chunk[0].t).max(1);
                frames.push(dense_frame(chunk, repr.with_tau(tau), geometry, t_end));
            }
        }
        Trigger::Rolling { n_us, m_us, k_us } => {
            let (n0, n1) = (first.t / k_us, last.t / k_us);
            let end = if flush { n1 + 1 } else { n1 };
            for n in n0..end {
                frames.push(rolling_frame(events, n_us, m_us, k_us, n, repr.kind, geometry)?);
            }
        }
    }
    for (i, f) in frames.iter_mut().enumerate() {
        f.window_index = i as u64;
    }
    Ok(frames)
}
