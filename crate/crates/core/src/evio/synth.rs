use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{Event, Polarity, SensorGeometry};

/// Synthetic scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    /// A filled disc bouncing horizontally across the sensor.
    MovingDot,
    /// A full-height bar bouncing horizontally across the sensor.
    MovingEdge,
    /// Poisson-distributed events at uniformly random pixels.
    UniformNoise,
}

impl FromStr for Pattern {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "moving_dot" => Ok(Pattern::MovingDot),
            "moving_edge" => Ok(Pattern::MovingEdge),
            "uniform_noise" => Ok(Pattern::UniformNoise),
            _ => Err(SynthError::UnknownPattern(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("event rate must be positive and finite, got {0}")]
    Rate(f64),
    #[error("unknown pattern {0:?} (expected moving_dot, moving_edge or uniform_noise)")]
    UnknownPattern(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthParams {
    pub geometry: SensorGeometry,
    pub duration_us: u64,
    pub pattern: Pattern,
    /// Mean event rate in events per second.
    pub rate: f64,
    pub seed: u64,
}

/// Generates a deterministic event sequence with non-decreasing timestamps in
/// `[0, duration_us)`.
///
/// Moving patterns emit `+1` on pixels the object enters and `-1` on pixels it
/// leaves; the object speed is chosen so the mean rate is close to `rate`.
pub fn generate_synthetic_events(params: &SynthParams) -> Result<Vec<Event>, SynthError> {
    if !(params.rate.is_finite() && params.rate > 0.0) {
        return Err(SynthError::Rate(params.rate));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    Ok(match params.pattern {
        Pattern::UniformNoise => uniform_noise(params, &mut rng),
        Pattern::MovingDot => {
            let g = params.geometry;
            let radius = (g.width().min(g.height()) / 16).max(1) as i32;
            let cy = rng.gen_range(0..g.height()) as i32;
            let r2 = radius * radius;
            moving_shape(params, &mut rng, radius, g.width() as i32, |cx, x, y| {
                let (dx, dy) = (x - cx, y - cy);
                dx * dx + dy * dy <= r2
            })
        }
        Pattern::MovingEdge => {
            let bar = (params.geometry.width() / 10).max(1) as i32;
            let positions = params.geometry.width() as i32 - bar + 1;
            moving_shape(params, &mut rng, bar, positions, |left, x, _| {
                x >= left && x < left + bar
            })
        }
    })
}

fn uniform_noise(params: &SynthParams, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let g = params.geometry;
    let per_us = params.rate / 1e6;
    let gap = Exp::new(per_us).expect("rate checked positive");
    let end = params.duration_us as f64;
    let mut events = Vec::with_capacity((end * per_us) as usize + 16);
    let mut now = 0.0;
    loop {
        now += gap.sample(rng);
        if now >= end {
            break;
        }
        events.push(Event {
            t: now as u64,
            x: rng.gen_range(0..g.width()),
            y: rng.gen_range(0..g.height()),
            p: if rng.gen::<bool>() {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
        });
    }
    events
}

/// Drives a shape whose horizontal anchor bounces over `0..positions`, one
/// pixel per step. `covers(anchor, x, y)` defines the shape.
fn moving_shape<F>(
    params: &SynthParams,
    rng: &mut ChaCha8Rng,
    extent: i32,
    positions: i32,
    covers: F,
) -> Vec<Event>
where
    F: Fn(i32, i32, i32) -> bool,
{
    let g = params.geometry;
    let (w, h) = (g.width() as i32, g.height() as i32);
    if positions < 2 {
        return Vec::new();
    }
    let mut anchor = rng.gen_range(0..positions);
    let mut dir = if rng.gen::<bool>() { 1 } else { -1 };

    let step_events = |from: i32, to: i32, out: &mut Vec<(u16, u16, Polarity)>| {
        out.clear();
        let lo = (from.min(to) - extent - 1).max(0);
        let hi = (from.max(to) + extent + 1).min(w - 1);
        for y in 0..h {
            for x in lo..=hi {
                match (covers(from, x, y), covers(to, x, y)) {
                    (false, true) => out.push((x as u16, y as u16, Polarity::Positive)),
                    (true, false) => out.push((x as u16, y as u16, Polarity::Negative)),
                    _ => {}
                }
            }
        }
    };

    // calibrate step length from a representative interior step
    let mut scratch = Vec::new();
    step_events(positions / 2 - 1, positions / 2, &mut scratch);
    let per_step = scratch.len().max(1) as f64;
    let step_us = (per_step / params.rate * 1e6).max(1.0);

    let end = params.duration_us as f64;
    let mut events = Vec::new();
    let mut start = 0.0;
    while start < end {
        let mut next = anchor + dir;
        if !(0..positions).contains(&next) {
            dir = -dir;
            next = anchor + dir;
        }
        step_events(anchor, next, &mut scratch);
        let limit = (start + step_us).min(end);
        let mut batch: Vec<Event> = scratch
            .iter()
            .map(|&(x, y, p)| Event {
                t: rng.gen_range(start..limit) as u64,
                x,
                y,
                p,
            })
            .collect();
        batch.sort_by_key(|e| e.t);
        events.extend(batch);
        anchor = next;
        start += step_us;
    }
    events
}
