use crate::evio::GeometryError;
use crate::repr::ZeroTau;

/// Invalid model or pipeline configuration.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("bank count must be at least 1")]
    ZeroBanks,
    #[error("image width {width} is not divisible by the bank count {banks}")]
    BanksNotDividingWidth { width: u16, banks: usize },
    #[error("FIFO capacity must be at least 1")]
    ZeroFifoCapacity,
    #[error("clock frequency must be positive")]
    ZeroClock,
    #[error("count window needs at least one event per frame")]
    ZeroCount,
    #[error(transparent)]
    Tau(#[from] ZeroTau),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("rolling window requires 0 < K <= M <= N, got N={n} M={m} K={k}")]
    RollingOrder { n: u64, m: u64, k: u64 },
    #[error("rolling window step K={k} must divide both M={m} and N={n}")]
    RollingDivisibility { n: u64, m: u64, k: u64 },
    #[error("rolling window needs at most 256 sub-windows, got {0}")]
    RollingSlots(u64),
    #[error("this entry point expects a {expected} trigger")]
    WrongTrigger { expected: &'static str },
    #[error("ping-pong buffering swaps whole accumulators and cannot carry rolling-window state")]
    PingPongRolling,
}
