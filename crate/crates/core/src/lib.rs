//! Event-camera frame generation.
//!
//! Converts asynchronous `{t, x, y, p}` event streams into 8-bit grayscale
//! frames using four per-pixel representations (binary frame, event frame,
//! exponentially decaying time surface, event frequency), while modelling the
//! memory datapath a BRAM-based FPGA accumulator would use: banked storage with
//! reset-on-read, a bounded drop-oldest FIFO, ping-pong buffering, rolling
//! windows and count-triggered frames. The [`resource`] module estimates the
//! on-chip memory such a design needs on concrete SoC FPGA boards.
//!
//! Real-valued kernels (the exponential decay and the frequency sigmoid) are
//! generic over [`scalar::Real`]; the crate root fixes the working precision
//! through [`Scalar`].

mod error;
pub mod evio;
pub mod hwmodel;
pub mod oracle;
pub mod pipeline;
pub mod repr;
pub mod resource;
pub mod scalar;

pub use error::ConfigError;
pub use evio::{Event, Frame, Polarity, SensorGeometry};
pub use hwmodel::{Accumulator, EventFifo, TimingConfig};
pub use pipeline::{Buffering, Pipeline, PipelineConfig, PipelineStats, TimingMode, Trigger};
pub use repr::{CellCode, ReprKind, Representation};
pub use resource::{PlatformProfile, ResourceEstimate};

/// Working precision for every real-valued evaluation in the crate.
pub type Scalar = f64;

pub use repr::{DecodeLut, ExpDecayTable};
