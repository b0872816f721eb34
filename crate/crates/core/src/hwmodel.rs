//! Behavioral model of the accumulator datapath.
//!
//! The accumulator is a dual-port memory of one cell per pixel, optionally
//! split into `X` banks so that a readout cycle produces `X` consecutive
//! pixels. Pixel `(x, y)` lives at `address = y * width + x`, in bank
//! `x mod X` at offset `address div X`. Reading a cell resets it to the
//! background code one cycle later, which the model collapses into the same
//! step.
//!
//! Incoming events always pass through an [`EventFifo`] first. While the
//! accumulator is being read the FIFO holds them; when it is full in that
//! state the oldest queued event is discarded to admit the newest.

use std::collections::VecDeque;

pub use crate::error::ConfigError;
use crate::evio::{Event, Frame, SensorGeometry};
use crate::repr::{update_cell, CellCode, DecodeLut, Representation};

/// FIFO depth of the reference design.
pub const DEFAULT_FIFO_CAPACITY: usize = 32_768;

/// Modelled clock. Not a property of any particular board.
pub const DEFAULT_CLOCK_HZ: u64 = 100_000_000;

/// `y * width + x`
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("event at ({x}, {y}) is outside the {geometry} sensor")]
pub struct AddressError {
    pub x: u16,
    pub y: u16,
    pub geometry: SensorGeometry,
}

pub fn map_event_to_address(event: &Event, geometry: SensorGeometry) -> Result<usize, AddressError> {
    if !geometry.contains(event.x, event.y) {
        return Err(AddressError {
            x: event.x,
            y: event.y,
            geometry,
        });
    }
    Ok(event.y as usize * geometry.width() as usize + event.x as usize)
}

/// Bank and in-bank offset of a linear address.
pub fn bank_and_offset(
    address: usize,
    banks: usize,
    geometry: SensorGeometry,
) -> Result<(usize, usize), ConfigError> {
    check_banks(banks, geometry)?;
    let x = address % geometry.width() as usize;
    Ok((x % banks, address / banks))
}

fn check_banks(banks: usize, geometry: SensorGeometry) -> Result<(), ConfigError> {
    if banks == 0 {
        return Err(ConfigError::ZeroBanks);
    }
    if !(geometry.width() as usize).is_multiple_of(banks) {
        return Err(ConfigError::BanksNotDividingWidth {
            width: geometry.width(),
            banks,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessMode {
    Write,
    Read,
}

/// Write attempted while the accumulator was being read out.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("accumulator is in read mode; events must be queued until readout finishes")]
pub struct ReadModeViolation;

/// Banked per-pixel cell store.
///
/// `C` is the cell type; the plain representations use [`CellCode`], the
/// rolling window adds a sub-window index.
#[derive(Clone, Debug)]
pub struct Accumulator<C = CellCode> {
    geometry: SensorGeometry,
    banks: Vec<Vec<C>>,
    mode: AccessMode,
}

impl<C: Copy + Default> Accumulator<C> {
    pub fn new(geometry: SensorGeometry, banks: usize) -> Result<Self, ConfigError> {
        check_banks(banks, geometry)?;
        let per_bank = geometry.pixel_count() / banks;
        Ok(Accumulator {
            geometry,
            banks: vec![vec![C::default(); per_bank]; banks],
            mode: AccessMode::Write,
        })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn bank_count(&self) -> usize {
        self.banks.len()
    }

    pub fn mode(&self) -> AccessMode {
        self.mode
    }

    #[inline]
    fn locate(&self, address: usize) -> (usize, usize) {
        // banks divide the width, so address mod X == x mod X
        let x = self.banks.len();
        if x == 1 {
            return (0, address);
        }
        (address % x, address / x)
    }

    pub fn cell(&self, address: usize) -> C {
        let (b, o) = self.locate(address);
        self.banks[b][o]
    }

    /// Read-modify-write of the cell at `address`.
    #[inline]
    pub fn update_with(
        &mut self,
        address: usize,
        f: impl FnOnce(C) -> C,
    ) -> Result<(), ReadModeViolation> {
        if self.mode == AccessMode::Read {
            return Err(ReadModeViolation);
        }
        let (b, o) = self.locate(address);
        let cell = &mut self.banks[b][o];
        *cell = f(*cell);
        Ok(())
    }

    /// Walks every cell in readout order (cycle `c` serves addresses
    /// `c*X .. c*X+X`) and returns the produced gray values in raster order.
    /// `visit` may modify the cell, e.g. to reset it. Leaves the
    /// accumulator in read mode until [`end_readout`](Self::end_readout).
    pub fn begin_readout_with(&mut self, mut visit: impl FnMut(&mut C) -> u8) -> Vec<u8> {
        self.mode = AccessMode::Read;
        let x = self.banks.len();
        let mut pixels = vec![0u8; self.geometry.pixel_count()];
        for (cycle, out) in pixels.chunks_exact_mut(x).enumerate() {
            for (bank, px) in self.banks.iter_mut().zip(out.iter_mut()) {
                *px = visit(&mut bank[cycle]);
            }
        }
        pixels
    }

    pub fn end_readout(&mut self) {
        self.mode = AccessMode::Write;
    }
}

impl Accumulator<CellCode> {
    /// Applies `event` to its cell.
    pub fn write(
        &mut self,
        event: &Event,
        repr: Representation,
        t_end: u64,
    ) -> Result<(), ReadModeViolation> {
        let address = event.y as usize * self.geometry.width() as usize + event.x as usize;
        self.update_with(address, |old| update_cell(repr, old, event, t_end))
    }

    /// Decodes every cell, resets it to background, and returns to write mode.
    pub fn readout(&mut self, lut: &DecodeLut, t_end: u64, window_index: u64) -> Frame {
        let frame = self.begin_readout(lut, t_end, window_index);
        self.end_readout();
        frame
    }

    /// Like [`readout`](Self::readout) but stays in read mode.
    pub fn begin_readout(&mut self, lut: &DecodeLut, t_end: u64, window_index: u64) -> Frame {
        let pixels = if self.banks.len() == 1 {
            // one bank is already in raster order; this loop vectorises
            self.mode = AccessMode::Read;
            let cells = &mut self.banks[0];
            let pixels = cells.iter().map(|&c| lut.decode(c)).collect();
            cells.fill(CellCode::BACKGROUND);
            pixels
        } else {
            self.begin_readout_with(|cell| {
                let g = lut.decode(*cell);
                *cell = CellCode::BACKGROUND;
                g
            })
        };
        Frame {
            width: self.geometry.width(),
            height: self.geometry.height(),
            pixels,
            t_end,
            window_index,
        }
    }

    /// Number of cells not holding the background code.
    pub fn occupied_cells(&self) -> usize {
        self.banks
            .iter()
            .flatten()
            .filter(|c| **c != CellCode::BACKGROUND)
            .count()
    }
}

/// Bounded FIFO with drop-oldest overflow.
#[derive(Clone, Debug)]
pub struct EventFifo<T = Event> {
    queue: VecDeque<T>,
    capacity: Option<usize>,
    pushes: u64,
    pops: u64,
    dropped_in_read: u64,
    dropped_in_write: u64,
    max_occupancy: usize,
}

impl<T> EventFifo<T> {
    pub fn new(capacity: usize) -> Result<Self, ConfigError> {
        if capacity == 0 {
            return Err(ConfigError::ZeroFifoCapacity);
        }
        Ok(Self::with_capacity(Some(capacity)))
    }

    /// Never drops. Stands in for a large external-memory queue.
    pub fn unbounded() -> Self {
        Self::with_capacity(None)
    }

    fn with_capacity(capacity: Option<usize>) -> Self {
        EventFifo {
            queue: VecDeque::with_capacity(capacity.unwrap_or(0).min(DEFAULT_FIFO_CAPACITY)),
            capacity,
            pushes: 0,
            pops: 0,
            dropped_in_read: 0,
            dropped_in_write: 0,
            max_occupancy: 0,
        }
    }

    /// Appends `item`, evicting and returning the oldest element when full.
    pub fn push(&mut self, item: T, in_read_mode: bool) -> Option<T> {
        self.pushes += 1;
        let evicted = match self.capacity {
            Some(cap) if self.queue.len() >= cap => {
                if in_read_mode {
                    self.dropped_in_read += 1;
                } else {
                    self.dropped_in_write += 1;
                }
                self.queue.pop_front()
            }
            _ => None,
        };
        self.queue.push_back(item);
        self.max_occupancy = self.max_occupancy.max(self.queue.len());
        evicted
    }

    /// Bookkeeping of a push immediately followed by its pop on an empty
    /// queue, without moving the item.
    #[inline]
    pub fn pass_through(&mut self) {
        debug_assert!(self.queue.is_empty());
        self.pushes += 1;
        self.pops += 1;
        self.max_occupancy = self.max_occupancy.max(1);
    }

    /// [`pass_through`](Self::pass_through) repeated `n` times.
    pub fn pass_through_n(&mut self, n: u64) {
        debug_assert!(self.queue.is_empty());
        if n > 0 {
            self.pushes += n;
            self.pops += n;
            self.max_occupancy = self.max_occupancy.max(1);
        }
    }

    pub fn pop(&mut self) -> Option<T> {
        let item = self.queue.pop_front();
        if item.is_some() {
            self.pops += 1;
        }
        item
    }

    pub fn front(&self) -> Option<&T> {
        self.queue.front()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.queue.iter()
    }

    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    pub fn pops(&self) -> u64 {
        self.pops
    }

    /// Evictions of either kind.
    pub fn drop_count(&self) -> u64 {
        self.dropped_in_read + self.dropped_in_write
    }

    pub fn dropped_in_read(&self) -> u64 {
        self.dropped_in_read
    }

    /// Evictions while the accumulator was accepting writes. The pipeline
    /// drains the queue on every event in write mode, so this stays 0 there.
    pub fn dropped_in_write(&self) -> u64 {
        self.dropped_in_write
    }

    pub fn max_occupancy(&self) -> usize {
        self.max_occupancy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimingConfig {
    pub clock_hz: u64,
    pub pixels_per_clock: usize,
}

impl TimingConfig {
    pub fn new(clock_hz: u64, pixels_per_clock: usize) -> Result<Self, ConfigError> {
        if clock_hz == 0 {
            return Err(ConfigError::ZeroClock);
        }
        if pixels_per_clock == 0 {
            return Err(ConfigError::ZeroBanks);
        }
        Ok(TimingConfig {
            clock_hz,
            pixels_per_clock,
        })
    }
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            clock_hz: DEFAULT_CLOCK_HZ,
            pixels_per_clock: 1,
        }
    }
}

/// Duration of a full readout, kept as an exact cycle count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadoutLatency {
    pub cycles: u64,
    pub clock_hz: u64,
}

impl ReadoutLatency {
    /// Exact microseconds if the cycle count is a whole number of them.
    pub fn as_micros_exact(&self) -> Option<u64> {
        let num = self.cycles as u128 * 1_000_000;
        let den = self.clock_hz as u128;
        num.is_multiple_of(den).then(|| (num / den) as u64)
    }

    /// Microseconds rounded up.
    pub fn as_micros_ceil(&self) -> u64 {
        let num = self.cycles as u128 * 1_000_000;
        num.div_ceil(self.clock_hz as u128) as u64
    }

    pub fn as_secs_f64(&self) -> f64 {
        self.cycles as f64 / self.clock_hz as f64
    }
}

/// `ceil(W*H / X)` clock cycles.
pub fn readout_latency(geometry: SensorGeometry, timing: TimingConfig) -> ReadoutLatency {
    let x = timing.pixels_per_clock.max(1) as u64;
    ReadoutLatency {
        cycles: (geometry.pixel_count() as u64).div_ceil(x),
        clock_hz: timing.clock_hz.max(1),
    }
}
