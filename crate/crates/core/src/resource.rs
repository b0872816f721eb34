//! On-chip memory estimates for the accumulator and FIFO.
//!
//! A BRAM block is modelled as 32768 data bits allocated in half-block
//! pieces. Each of the `X` accumulator banks is rounded up to a half block
//! separately, which is why splitting the accumulator costs a little extra.

use std::fmt;

use crate::error::ConfigError;
use crate::evio::SensorGeometry;
use crate::pipeline::{Buffering, PipelineConfig, Trigger};
use crate::repr::ReprKind;

/// Data bits per BRAM block, parity excluded.
pub const BLOCK_DATA_BITS: u64 = 32_768;

/// Packed `t, x, y, p` FIFO element.
pub const DEFAULT_FIFO_ELEMENT_BITS: u32 = 64;

/// FIFO depth used when comparing representations.
pub const COMPARISON_FIFO_CAPACITY: usize = 512;

/// Accumulator layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Basic,
    /// Rolling window with `slots` sub-window indices per cell.
    Rolling { slots: u64 },
}

impl Variant {
    pub fn of_trigger(trigger: &Trigger) -> Self {
        match trigger {
            Trigger::Rolling { .. } => Variant::Rolling {
                slots: trigger.slots(),
            },
            _ => Variant::Basic,
        }
    }
}

fn ceil_log2(v: u64) -> u32 {
    if v <= 1 {
        0
    } else {
        64 - (v - 1).leading_zeros()
    }
}

/// Stored bits per pixel, including the sub-window index of rolling windows.
pub fn bits_per_pixel(kind: ReprKind, variant: Variant) -> u32 {
    match variant {
        Variant::Basic => kind.bits(),
        Variant::Rolling { slots } => kind.bits() + ceil_log2(slots),
    }
}

/// A block count in units of half blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfBlocks(pub u64);

impl HalfBlocks {
    /// Smallest half-block multiple holding `bits`.
    pub fn for_bits(bits: u64) -> Self {
        HalfBlocks((bits * 2).div_ceil(BLOCK_DATA_BITS))
    }

    pub fn from_blocks(blocks: u32) -> Self {
        HalfBlocks(blocks as u64 * 2)
    }

    pub fn as_blocks(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl std::ops::Add for HalfBlocks {
    type Output = HalfBlocks;

    fn add(self, rhs: Self) -> Self {
        HalfBlocks(self.0 + rhs.0)
    }
}

impl std::ops::Mul<u64> for HalfBlocks {
    type Output = HalfBlocks;

    fn mul(self, rhs: u64) -> Self {
        HalfBlocks(self.0 * rhs)
    }
}

impl fmt::Display for HalfBlocks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}.5", self.0 / 2)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResourceEstimate {
    pub cell_bits: u32,
    pub banks: usize,
    /// Bits of one accumulator.
    pub accumulator_bits: u64,
    pub fifo_bits: u64,
    /// Blocks of one accumulator, summed over its banks.
    pub accumulator_blocks: HalfBlocks,
    pub fifo_blocks: HalfBlocks,
    /// 2 with ping-pong buffering.
    pub pingpong_multiplier: u64,
}

impl ResourceEstimate {
    pub fn bram_blocks(&self) -> HalfBlocks {
        self.accumulator_blocks * self.pingpong_multiplier + self.fifo_blocks
    }
}

/// Sizing from the individual parameters.
pub fn estimate(
    kind: ReprKind,
    variant: Variant,
    geometry: SensorGeometry,
    banks: usize,
    pingpong: bool,
    fifo_capacity: usize,
    fifo_element_bits: u32,
) -> Result<ResourceEstimate, ConfigError> {
    if banks == 0 {
        return Err(ConfigError::ZeroBanks);
    }
    if !(geometry.width() as usize).is_multiple_of(banks) {
        return Err(ConfigError::BanksNotDividingWidth {
            width: geometry.width(),
            banks,
        });
    }
    let cell_bits = bits_per_pixel(kind, variant);
    let accumulator_bits = cell_bits as u64 * geometry.pixel_count() as u64;
    let per_bank = HalfBlocks::for_bits(accumulator_bits / banks as u64);
    let fifo_bits = fifo_capacity as u64 * fifo_element_bits as u64;
    Ok(ResourceEstimate {
        cell_bits,
        banks,
        accumulator_bits,
        fifo_bits,
        accumulator_blocks: per_bank * banks as u64,
        fifo_blocks: HalfBlocks::for_bits(fifo_bits),
        pingpong_multiplier: if pingpong { 2 } else { 1 },
    })
}

/// Sizing of a pipeline configuration with an explicit FIFO.
pub fn estimate_blocks(
    config: &PipelineConfig,
    fifo_capacity: usize,
    fifo_element_bits: u32,
) -> Result<ResourceEstimate, ConfigError> {
    estimate(
        config.repr.kind,
        Variant::of_trigger(&config.trigger),
        config.geometry,
        config.banks,
        config.buffering == Buffering::PingPong,
        fifo_capacity,
        fifo_element_bits,
    )
}

/// Memory resources of a board.
#[derive(Clone, Debug, PartialEq)]
pub struct PlatformProfile {
    pub name: String,
    pub bram_blocks: u32,
    pub uram_blocks: u32,
    pub external_ram_gb: f64,
}

impl PlatformProfile {
    pub fn new(name: &str, bram_blocks: u32, uram_blocks: u32, external_ram_gb: f64) -> Self {
        PlatformProfile {
            name: name.to_string(),
            bram_blocks,
            uram_blocks,
            external_ram_gb,
        }
    }
}

/// ZCU104, Kria KV260 and Zybo Z7-20.
pub fn builtin_platforms() -> Vec<PlatformProfile> {
    vec![
        PlatformProfile::new("zcu104", 312, 96, 4.5),
        PlatformProfile::new("kv260", 144, 64, 4.0),
        PlatformProfile::new("zybo-z7-20", 140, 0, 1.0),
    ]
}

fn normalize(name: &str) -> String {
    name.chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Case- and punctuation-insensitive lookup; `kria-kv260` matches `kv260`.
pub fn find_platform<'a>(platforms: &'a [PlatformProfile], name: &str) -> Option<&'a PlatformProfile> {
    let wanted = normalize(name);
    let wanted = wanted.strip_prefix("kria").unwrap_or(&wanted);
    platforms.iter().find(|p| {
        let n = normalize(&p.name);
        n.strip_prefix("kria").unwrap_or(&n) == wanted
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub platform: String,
    pub feasible_bram: bool,
    /// Spare blocks (negative when over budget), in half blocks.
    pub margin: i64,
    pub needs_uram_or_external: bool,
    /// Over the BRAM budget on a board that has Ultra RAM.
    pub uram_fallback: bool,
}

impl FitReport {
    pub fn margin_blocks(&self) -> f64 {
        self.margin as f64 / 2.0
    }
}

pub fn check_platform_fit(estimate: &ResourceEstimate, platform: &PlatformProfile) -> FitReport {
    let need = estimate.bram_blocks();
    let have = HalfBlocks::from_blocks(platform.bram_blocks);
    let feasible_bram = need <= have;
    FitReport {
        platform: platform.name.clone(),
        feasible_bram,
        margin: have.0 as i64 - need.0 as i64,
        needs_uram_or_external: !feasible_bram
            && (platform.uram_blocks > 0 || platform.external_ram_gb > 0.0),
        uram_fallback: !feasible_bram && platform.uram_blocks > 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("platform file line {line}: {message}")]
pub struct PlatformFileError {
    pub line: usize,
    pub message: String,
}

/// Parses `key = value` stanzas separated by blank lines. Keys are `name`,
/// `bram_blocks`, `uram_blocks` and `external_ram_gb`; the last two default
/// to 0. `#` starts a comment.
pub fn parse_platform_file(text: &str) -> Result<Vec<PlatformProfile>, PlatformFileError> {
    #[derive(Default)]
    struct Partial {
        start: usize,
        name: Option<String>,
        bram: Option<u32>,
        uram: u32,
        ext: f64,
    }

    fn close(p: Partial, out: &mut Vec<PlatformProfile>) -> Result<(), PlatformFileError> {
        let err = |m: &str| PlatformFileError {
            line: p.start,
            message: m.to_string(),
        };
        let name = p.name.clone().ok_or_else(|| err("stanza without `name`"))?;
        let bram = p.bram.ok_or_else(|| err("stanza without `bram_blocks`"))?;
        out.push(PlatformProfile {
            name,
            bram_blocks: bram,
            uram_blocks: p.uram,
            external_ram_gb: p.ext,
        });
        Ok(())
    }

    let mut out = Vec::new();
    let mut current: Option<Partial> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            if let Some(p) = current.take() {
                close(p, &mut out)?;
            }
            continue;
        }
        let err = |m: String| PlatformFileError {
            line: line_no,
            message: m,
        };
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        let p = current.get_or_insert_with(|| Partial {
            start: line_no,
            ..Partial::default()
        });
        match key {
            "name" => p.name = Some(value.to_string()),
            "bram_blocks" => {
                p.bram = Some(value.parse().map_err(|_| err(format!("bad bram_blocks {value:?}")))?)
            }
            "uram_blocks" => {
                p.uram = value.parse().map_err(|_| err(format!("bad uram_blocks {value:?}")))?
            }
            "external_ram_gb" => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| err(format!("bad external_ram_gb {value:?}")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(err(format!("external_ram_gb must be non-negative, got {v}")));
                }
                p.ext = v;
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    if let Some(p) = current.take() {
        close(p, &mut out)?;
    }
    Ok(out)
}
