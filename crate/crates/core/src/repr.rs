//! Per-pixel representation kernels.
//!
//! Each representation stores a small code per pixel and decodes it to an
//! 8-bit gray level on readout:
//!
//! | kind            | bits | stored code                                        |
//! |-----------------|------|----------------------------------------------------|
//! | binary          | 1    | 0 = no event, 1 = event                            |
//! | event frame     | 2    | 0 = none, 1 = positive, 2 = negative               |
//! | exp. decay TS   | 8    | sign-magnitude, bit 7 = negative, 0 = no event     |
//! | event frequency | 5    | two's-complement polarity sum clamped to [-16, 15] |
//!
//! Code 0 is the background value of every representation.

use std::fmt;
use std::str::FromStr;

use crate::evio::{Event, Polarity};
use crate::scalar::{self, lit, Real};
use crate::Scalar;

/// Default accumulation interval: 10 ms.
pub const DEFAULT_TAU_US: u64 = 10_000;

/// Largest exponential-decay magnitude.
pub const EXP_MAX_MAGNITUDE: u8 = 127;

/// Inclusive bounds of the event-frequency counter.
pub const FREQ_MIN: i8 = -16;
pub const FREQ_MAX: i8 = 15;

const EXP_SIGN: u8 = 0x80;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReprKind {
    Binary,
    EventFrame,
    ExpDecayTS,
    EventFrequency,
}

impl ReprKind {
    pub const ALL: [ReprKind; 4] = [
        ReprKind::Binary,
        ReprKind::EventFrame,
        ReprKind::ExpDecayTS,
        ReprKind::EventFrequency,
    ];

    /// Stored bits per pixel.
    pub fn bits(self) -> u32 {
        match self {
            ReprKind::Binary => 1,
            ReprKind::EventFrame => 2,
            ReprKind::ExpDecayTS => 8,
            ReprKind::EventFrequency => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReprKind::Binary => "binary",
            ReprKind::EventFrame => "event-frame",
            ReprKind::ExpDecayTS => "exp-decay",
            ReprKind::EventFrequency => "event-frequency",
        }
    }

    /// Whether the decoded value depends on event timestamps.
    pub fn is_time_dependent(self) -> bool {
        self == ReprKind::ExpDecayTS
    }
}

impl fmt::Display for ReprKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown representation {0:?} (expected binary, event-frame, exp-decay or event-frequency)")]
pub struct UnknownRepr(pub String);

impl FromStr for ReprKind {
    type Err = UnknownRepr;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "binary" => Ok(ReprKind::Binary),
            "event-frame" => Ok(ReprKind::EventFrame),
            "exp-decay" | "exp-decay-ts" | "time-surface" => Ok(ReprKind::ExpDecayTS),
            "event-frequency" | "frequency" => Ok(ReprKind::EventFrequency),
            _ => Err(UnknownRepr(s.to_string())),
        }
    }
}

/// A representation together with its accumulation interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Representation {
    pub kind: ReprKind,
    tau_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("accumulation interval must be positive")]
pub struct ZeroTau;

impl Representation {
    pub fn new(kind: ReprKind, tau_us: u64) -> Result<Self, ZeroTau> {
        if tau_us == 0 {
            return Err(ZeroTau);
        }
        Ok(Representation { kind, tau_us })
    }

    pub fn with_default_tau(kind: ReprKind) -> Self {
        Representation {
            kind,
            tau_us: DEFAULT_TAU_US,
        }
    }

    pub fn tau_us(&self) -> u64 {
        self.tau_us
    }

    /// Same kind with a different interval; zero is raised to 1 µs.
    pub fn with_tau(self, tau_us: u64) -> Self {
        Representation {
            kind: self.kind,
            tau_us: tau_us.max(1),
        }
    }
}

/// Raw per-pixel code. Its meaning depends on the representation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CellCode(pub u8);

impl CellCode {
    pub const BACKGROUND: CellCode = CellCode(0);

    pub const EVENT_FRAME_NONE: CellCode = CellCode(0);
    pub const EVENT_FRAME_POS: CellCode = CellCode(1);
    pub const EVENT_FRAME_NEG: CellCode = CellCode(2);

    pub fn event_frame(p: Polarity) -> Self {
        match p {
            Polarity::Positive => Self::EVENT_FRAME_POS,
            Polarity::Negative => Self::EVENT_FRAME_NEG,
        }
    }

    /// Sign-magnitude exponential-decay code. Magnitudes above 127 saturate.
    pub fn exp_decay(p: Polarity, magnitude: u8) -> Self {
        let m = magnitude.min(EXP_MAX_MAGNITUDE);
        match p {
            Polarity::Positive => CellCode(m),
            Polarity::Negative => CellCode(EXP_SIGN | m),
        }
    }

    /// `(negative, magnitude)` of an exponential-decay code.
    pub fn exp_parts(self) -> (bool, u8) {
        (self.0 & EXP_SIGN != 0, self.0 & !EXP_SIGN)
    }

    /// 5-bit two's-complement encoding of a clamped polarity sum.
    pub fn frequency(sum: i8) -> Self {
        CellCode((sum.clamp(FREQ_MIN, FREQ_MAX) as u8) & 0x1f)
    }

    /// Sign-extended polarity sum of a 5-bit frequency code.
    pub fn frequency_sum(self) -> i8 {
        ((self.0 << 3) as i8) >> 3
    }

    pub fn is_valid_for(self, kind: ReprKind) -> bool {
        match kind {
            ReprKind::Binary => self.0 <= 1,
            ReprKind::EventFrame => self.0 <= 2,
            ReprKind::ExpDecayTS => true,
            ReprKind::EventFrequency => self.0 < 32,
        }
    }
}

/// `t_end - t_event` fell outside `[0, tau]`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("event at {t_event} us is outside the decay interval ({t_end} - {tau_us}, {t_end}]")]
pub struct DecayRangeError {
    pub t_event: u64,
    pub t_end: u64,
    pub tau_us: u64,
}

/// `round(127 * exp(-dt / tau))` evaluated in `F`.
pub fn exp_decay_magnitude<F: Real>(dt_us: u64, tau_us: u64) -> u8 {
    let dt = F::from_u64(dt_us).unwrap_or_else(F::infinity);
    let tau = F::from_u64(tau_us.max(1)).unwrap_or_else(F::one);
    let m = scalar::round_half_up(lit::<F>(EXP_MAX_MAGNITUDE as f64) * (-dt / tau).exp());
    m.to_u8().unwrap_or(0).min(EXP_MAX_MAGNITUDE)
}

/// `round(255 / (1 + exp(-x / 2)))` evaluated in `F`.
pub fn frequency_gray<F: Real>(sum: i8) -> u8 {
    let x = lit::<F>(sum as f64);
    scalar::to_gray(lit::<F>(255.0) / (F::one() + (-x / lit(2.0)).exp()))
}

/// Encodes an event at `t_event` for a window ending at `t_end`.
pub fn encode_exp_decay(
    t_event: u64,
    t_end: u64,
    tau_us: u64,
    p: Polarity,
) -> Result<CellCode, DecayRangeError> {
    let err = DecayRangeError {
        t_event,
        t_end,
        tau_us,
    };
    let dt = t_end.checked_sub(t_event).ok_or(err.clone())?;
    if dt > tau_us || tau_us == 0 {
        return Err(err);
    }
    Ok(CellCode::exp_decay(p, exp_decay_magnitude::<Scalar>(dt, tau_us)))
}

/// Precomputed exponential-decay magnitudes for every `dt` in `0..=tau`.
///
/// Entries are produced by [`exp_decay_magnitude`], so a lookup is
/// bit-identical to direct evaluation at the same precision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpDecayTable {
    tau_us: u64,
    magnitudes: Vec<u8>,
}

impl ExpDecayTable {
    /// Intervals above this are evaluated on demand instead of tabulated.
    pub const MAX_TABULATED_TAU: u64 = 1 << 20;

    pub fn new(tau_us: u64) -> Self {
        Self::build_in::<Scalar>(tau_us)
    }

    pub fn build_in<F: Real>(tau_us: u64) -> Self {
        let tau_us = tau_us.max(1);
        let magnitudes = if tau_us <= Self::MAX_TABULATED_TAU {
            (0..=tau_us).map(|dt| exp_decay_magnitude::<F>(dt, tau_us)).collect()
        } else {
            Vec::new()
        };
        ExpDecayTable { tau_us, magnitudes }
    }

    pub fn tau_us(&self) -> u64 {
        self.tau_us
    }

    /// Magnitude for `dt`; `dt` beyond `tau` saturates at the `tau` entry.
    #[inline]
    pub fn magnitude(&self, dt_us: u64) -> u8 {
        let dt = dt_us.min(self.tau_us);
        match self.magnitudes.get(dt as usize) {
            Some(&m) => m,
            None => exp_decay_magnitude::<Scalar>(dt, self.tau_us),
        }
    }

    #[inline]
    pub fn encode(&self, t_event: u64, t_end: u64, p: Polarity) -> CellCode {
        CellCode::exp_decay(p, self.magnitude(t_end.saturating_sub(t_event)))
    }
}

/// New code of a cell after `event` arrives, for a window ending at `t_end`.
///
/// Binary sets, event frame and exponential decay overwrite with the latest
/// event, frequency adds the polarity with saturation. A decay event outside
/// `[t_end - tau, t_end]` is clamped to the nearest end of that interval.
pub fn update_cell(repr: Representation, old: CellCode, event: &Event, t_end: u64) -> CellCode {
    match repr.kind {
        ReprKind::Binary => CellCode(1),
        ReprKind::EventFrame => CellCode::event_frame(event.p),
        ReprKind::ExpDecayTS => {
            let dt = t_end.saturating_sub(event.t).min(repr.tau_us);
            CellCode::exp_decay(event.p, exp_decay_magnitude::<Scalar>(dt, repr.tau_us))
        }
        ReprKind::EventFrequency => frequency_step(old, event.p),
    }
}

#[inline]
pub(crate) fn frequency_step(old: CellCode, p: Polarity) -> CellCode {
    let sum = old.frequency_sum();
    let next = match p {
        Polarity::Positive => sum.saturating_add(1).min(FREQ_MAX),
        Polarity::Negative => sum.saturating_sub(1).max(FREQ_MIN),
    };
    CellCode::frequency(next)
}

/// Gray level of a stored code, evaluated in `F`.
pub fn decode_cell_in<F: Real>(kind: ReprKind, code: CellCode) -> u8 {
    match kind {
        ReprKind::Binary => {
            if code.0 == 0 {
                0
            } else {
                255
            }
        }
        ReprKind::EventFrame => match code {
            CellCode::EVENT_FRAME_POS => 255,
            CellCode::EVENT_FRAME_NEG => 0,
            _ => 128,
        },
        ReprKind::ExpDecayTS => {
            let (negative, m) = code.exp_parts();
            if negative {
                128 - m
            } else {
                128 + m.min(127)
            }
        }
        ReprKind::EventFrequency => frequency_gray::<F>(code.frequency_sum()),
    }
}

pub fn decode_cell(repr: Representation, code: CellCode) -> u8 {
    decode_cell_in::<Scalar>(repr.kind, code)
}

/// Code-to-gray table with one entry per possible stored code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeLut {
    kind: ReprKind,
    /// Padded to every `u8` so lookups need no bounds check; codes the
    /// representation cannot produce decode to 128.
    table: Box<[u8; 256]>,
    len: usize,
}

impl DecodeLut {
    pub fn build_in<F: Real>(kind: ReprKind) -> Self {
        let len = 1usize << kind.bits();
        let mut table = Box::new([128u8; 256]);
        for (c, slot) in table.iter_mut().enumerate().take(len) {
            *slot = decode_cell_in::<F>(kind, CellCode(c as u8));
        }
        DecodeLut { kind, table, len }
    }

    pub fn kind(&self) -> ReprKind {
        self.kind
    }

    pub fn table(&self) -> &[u8] {
        &self.table[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn decode(&self, code: CellCode) -> u8 {
        self.table[code.0 as usize]
    }
}

pub fn build_decode_lut(repr: Representation) -> DecodeLut {
    DecodeLut::build_in::<Scalar>(repr.kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(t: u64, p: Polarity) -> Event {
        Event::new(t, 0, 0, p)
    }

    fn repr(kind: ReprKind) -> Representation {
        Representation::with_default_tau(kind)
    }

    #[test]
    fn frequency_saturates_high() {
        let r = repr(ReprKind::EventFrequency);
        let c = update_cell(r, CellCode::frequency(15), &ev(0, Polarity::Positive), 0);
        assert_eq!(c.frequency_sum(), 15);
        let c = update_cell(r, CellCode::frequency(-16), &ev(0, Polarity::Negative), 0);
        assert_eq!(c.frequency_sum(), -16);
    }

    #[test]
    fn event_frame_latest_overwrites() {
        let r = repr(ReprKind::EventFrame);
        let c = update_cell(r, CellCode::EVENT_FRAME_NEG, &ev(0, Polarity::Positive), 0);
        assert_eq!(c, CellCode::EVENT_FRAME_POS);
    }

    #[test]
    fn binary_is_idempotent() {
        let r = repr(ReprKind::Binary);
        for p in [Polarity::Positive, Polarity::Negative] {
            assert_eq!(update_cell(r, CellCode(1), &ev(0, p), 0), CellCode(1));
            assert_eq!(update_cell(r, CellCode(0), &ev(0, p), 0), CellCode(1));
        }
    }

    #[test]
    fn exp_decay_reference_points() {
        let tau = 10_000;
        let c = encode_exp_decay(50_000, 50_000, tau, Polarity::Positive).unwrap();
        assert_eq!(c.exp_parts(), (false, 127));
        // round(127 / e) = round(46.72)
        let c = encode_exp_decay(40_000, 50_000, tau, Polarity::Positive).unwrap();
        assert_eq!(c.exp_parts(), (false, 47));
        // round(127 / sqrt(e)) = round(77.03)
        let c = encode_exp_decay(45_000, 50_000, tau, Polarity::Negative).unwrap();
        assert_eq!(c.exp_parts(), (true, 77));
    }

    #[test]
    fn exp_decay_range_errors() {
        assert!(encode_exp_decay(39_999, 50_000, 10_000, Polarity::Positive).is_err());
        assert!(encode_exp_decay(50_001, 50_000, 10_000, Polarity::Positive).is_err());
    }

    #[test]
    fn event_frame_decode() {
        let r = repr(ReprKind::EventFrame);
        assert_eq!(decode_cell(r, CellCode::EVENT_FRAME_POS), 255);
        assert_eq!(decode_cell(r, CellCode::EVENT_FRAME_NEG), 0);
        assert_eq!(decode_cell(r, CellCode::EVENT_FRAME_NONE), 128);
    }

    #[test]
    fn frequency_decode_endpoints() {
        let r = repr(ReprKind::EventFrequency);
        assert_eq!(decode_cell(r, CellCode::frequency(0)), 128);
        assert_eq!(decode_cell(r, CellCode::frequency(-16)), 0);
        assert_eq!(decode_cell(r, CellCode::frequency(15)), 255);
        // 255 / (1 + e^-0.5) = 158.73
        assert_eq!(decode_cell(r, CellCode::frequency(1)), 159);
    }

    #[test]
    fn exp_decode_layout() {
        let r = repr(ReprKind::ExpDecayTS);
        assert_eq!(decode_cell(r, CellCode::BACKGROUND), 128);
        assert_eq!(decode_cell(r, CellCode::exp_decay(Polarity::Positive, 127)), 255);
        assert_eq!(decode_cell(r, CellCode::exp_decay(Polarity::Negative, 127)), 1);
        assert_eq!(decode_cell(r, CellCode::exp_decay(Polarity::Negative, 47)), 81);
    }

    #[test]
    fn frequency_code_round_trips() {
        for s in FREQ_MIN..=FREQ_MAX {
            let c = CellCode::frequency(s);
            assert!(c.0 < 32);
            assert_eq!(c.frequency_sum(), s);
        }
        assert_eq!(CellCode::frequency(100).frequency_sum(), 15);
    }

    #[test]
    fn lut_sizes_and_entries() {
        assert_eq!(build_decode_lut(repr(ReprKind::EventFrequency)).len(), 32);
        assert_eq!(build_decode_lut(repr(ReprKind::Binary)).len(), 2);
        assert_eq!(build_decode_lut(repr(ReprKind::ExpDecayTS)).len(), 256);
        let ef = build_decode_lut(repr(ReprKind::EventFrame));
        assert_eq!(ef.len(), 4);
        assert_eq!(ef.decode(CellCode::EVENT_FRAME_NONE), 128);
    }

    #[test]
    fn lut_matches_direct_decode_exhaustively() {
        for kind in ReprKind::ALL {
            let r = repr(kind);
            let lut = build_decode_lut(r);
            for c in 0..lut.len() {
                let code = CellCode(c as u8);
                if code.is_valid_for(kind) {
                    assert_eq!(lut.decode(code), decode_cell(r, code), "{kind} code {c}");
                }
            }
        }
    }

    #[test]
    fn frequency_lut_is_monotone() {
        let lut = build_decode_lut(repr(ReprKind::EventFrequency));
        let grays: Vec<u8> = (FREQ_MIN..=FREQ_MAX)
            .map(|s| lut.decode(CellCode::frequency(s)))
            .collect();
        assert!(grays.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn frequency_decode_is_symmetric() {
        for x in -15i8..=15 {
            let a = frequency_gray::<f64>(x) as u16 + frequency_gray::<f64>(-x) as u16;
            assert!(a == 255 || a == 256, "x = {x}: {a}");
        }
    }

    #[test]
    fn exp_decay_monotone_in_age() {
        let tau = 10_000;
        let table = ExpDecayTable::new(tau);
        for p in [Polarity::Positive, Polarity::Negative] {
            let mut last = u8::MAX;
            for dt in 0..=tau {
                let g = decode_cell(repr(ReprKind::ExpDecayTS), table.encode(0, dt, p));
                let dist = (g as i16 - 128).unsigned_abs() as u8;
                assert!(dist <= last);
                last = dist;
            }
        }
    }

    #[test]
    fn table_matches_direct_encoding() {
        let tau = 2_500;
        let table = ExpDecayTable::new(tau);
        for dt in 0..=tau {
            assert_eq!(
                table.encode(10_000 - dt, 10_000, Polarity::Negative),
                encode_exp_decay(10_000 - dt, 10_000, tau, Polarity::Negative).unwrap()
            );
        }
        let huge = ExpDecayTable::new(ExpDecayTable::MAX_TABULATED_TAU + 1);
        assert_eq!(huge.magnitude(0), 127);
    }

    #[test]
    fn decode_lut_agrees_across_precisions() {
        for kind in ReprKind::ALL {
            assert_eq!(
                DecodeLut::build_in::<f32>(kind),
                DecodeLut::build_in::<f64>(kind)
            );
        }
    }

    #[test]
    fn parse_names() {
        for kind in ReprKind::ALL {
            assert_eq!(kind.name().parse::<ReprKind>().unwrap(), kind);
        }
        assert!("gray".parse::<ReprKind>().is_err());
    }

    proptest! {
        #[test]
        fn frequency_stays_clamped(ps in proptest::collection::vec(any::<bool>(), 0..100)) {
            let r = repr(ReprKind::EventFrequency);
            let mut c = CellCode::BACKGROUND;
            for p in ps {
                let p = if p { Polarity::Positive } else { Polarity::Negative };
                c = update_cell(r, c, &ev(0, p), 0);
                prop_assert!((FREQ_MIN..=FREQ_MAX).contains(&c.frequency_sum()));
                prop_assert!(c.is_valid_for(ReprKind::EventFrequency));
            }
        }
    }
}
