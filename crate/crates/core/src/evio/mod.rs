//! Event and frame types plus their on-disk formats.
//!
//! Events travel as CSV text (`t,x,y,p`, one per line), frames leave as
//! binary PGM.

mod csv;
mod pgm;
mod synth;

use std::fmt;

pub use csv::{
    format_event_line, parse_event_line, read_event_stream, EventBatchReader, EventReader, EventStream,
    OrderPolicy, ParseError, ReadError,
};
pub use pgm::{frame_file_name, read_pgm, write_frame_pgm, PgmError};
pub use synth::{generate_synthetic_events, Pattern, SynthError, SynthParams};

/// Sign of a brightness change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// `+1` or `-1`.
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }
}

/// One camera event. Timestamps are integer microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.t, self.x, self.y, self.p.sign())
    }
}

/// Sensor resolution in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    width: u16,
    height: u16,
}

/// Rejected geometry.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("sensor geometry must be at least 1x1, got {width}x{height}")]
pub struct GeometryError {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    pub const HD: SensorGeometry = SensorGeometry {
        width: 1280,
        height: 720,
    };

    pub fn new(width: u16, height: u16) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError { width, height });
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        SensorGeometry::HD
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// 8-bit grayscale image emitted at the end of a window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub width: u16,
    pub height: u16,
    /// Row-major gray values, `width * height` long.
    pub pixels: Vec<u8>,
    /// End of the accumulation window in microseconds.
    pub t_end: u64,
    /// Ordinal of the frame within its run, starting at 0.
    pub window_index: u64,
}

impl Frame {
    pub fn filled(geometry: SensorGeometry, value: u8, t_end: u64, window_index: u64) -> Self {
        Frame {
            width: geometry.width(),
            height: geometry.height(),
            pixels: vec![value; geometry.pixel_count()],
            t_end,
            window_index,
        }
    }

    pub fn pixel(&self, x: u16, y: u16) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// First pixel where `self` and `other` differ, as `(address, self, other)`.
    pub fn first_difference(&self, other: &Frame) -> Option<(usize, u8, u8)> {
        if self.pixels.len() != other.pixels.len() {
            let n = self.pixels.len().min(other.pixels.len());
            return Some((n, 0, 0));
        }
        self.pixels
            .iter()
            .zip(&other.pixels)
            .position(|(a, b)| a != b)
            .map(|i| (i, self.pixels[i], other.pixels[i]))
    }
}
