//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p evframe-cli --test acceptance`; append `-- <ids>`
//! to run only some criteria.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::Write as _;
use std::time::{Duration, Instant};

use evframe::evio::format_event_line;
use evframe::hwmodel::readout_latency;
use evframe::oracle::{dense_frame, rolling_frame, DenseWindow};
use evframe::pipeline::run;
use evframe::repr::decode_cell;
use evframe::resource::{
    builtin_platforms, check_platform_fit, estimate, find_platform, Variant,
};
use evframe::{
    Buffering, CellCode, Event, EventFifo, PipelineConfig, Polarity, ReprKind,
    Representation, SensorGeometry, TimingConfig, TimingMode, Trigger,
};
use evframe_cli::{
    convert, estimate_report, BufferingArg, ConvertArgs, EstimateArgs, FormatArg, GeometryArgs,
    OrderArg, PipelineArgs, TimingArg,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_stream(seed: u64, n: usize, span_us: u64, g: SensorGeometry) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ts: Vec<u64> = (0..n).map(|_| rng.gen_range(0..span_us)).collect();
    ts.sort_unstable();
    ts.into_iter()
        .map(|t| {
            let p = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            // a hot corner makes frequency counters saturate
            let (x, y) = if rng.gen_bool(0.2) {
                (rng.gen_range(0..3), rng.gen_range(0..2))
            } else {
                (rng.gen_range(0..g.width()), rng.gen_range(0..g.height()))
            };
            Event::new(t, x, y, p)
        })
        .collect()
}

fn geometry_64x48() -> SensorGeometry {
    SensorGeometry::new(64, 48).unwrap()
}

fn estimate_args(repr: ReprKind, banks: usize, rolling: Option<(u64, u64, u64)>) -> EstimateArgs {
    EstimateArgs {
        repr,
        banks,
        rolling,
        pingpong: false,
        fifo_capacity: 512,
        fifo_element_bits: 64,
        geometry: GeometryArgs {
            width: 1280,
            height: 720,
        },
        platform: Vec::new(),
        platform_file: None,
        format: FormatArg::Kv,
    }
}

fn kv_total(args: &EstimateArgs) -> Result<String, String> {
    let report = estimate_report(args).map_err(|e| e.to_string())?;
    report
        .lines()
        .find_map(|l| l.strip_prefix("total_blocks="))
        .map(str::to_string)
        .ok_or_else(|| "no total_blocks line".to_string())
}

fn c1_block_rows() -> Outcome {
    let rows = [
        (ReprKind::Binary, None, "29.5"),
        (ReprKind::EventFrame, None, "57.5"),
        (ReprKind::ExpDecayTS, None, "226"),
        (ReprKind::EventFrequency, None, "142"),
        (ReprKind::EventFrame, Some((8_000, 4_000, 1_000)), "142"),
    ];
    let mut got = Vec::new();
    for (kind, rolling, want) in rows {
        let total = kv_total(&estimate_args(kind, 1, rolling))?;
        ensure(total == want, || format!("{} rolling={rolling:?}: {total} != {want}", kind.name()))?;
        got.push(total);
    }
    let bits = estimate(ReprKind::EventFrame, Variant::Rolling { slots: 8 }, SensorGeometry::HD, 1, false, 512, 64)
        .map_err(|e| e.to_string())?
        .cell_bits;
    ensure(bits == 5, || format!("rolling cell bits {bits} != 5"))?;
    Ok(format!("blocks {}", got.join(" / ")))
}

fn c2_multiple_banks() -> Outcome {
    let total = kv_total(&estimate_args(ReprKind::EventFrame, 8, None))?;
    ensure(total == "61", || format!("{total} != 61"))?;
    Ok("event-frame X=8: 61 blocks".into())
}

fn c3_platform_verdicts() -> Outcome {
    let platforms = builtin_platforms();
    let zybo = find_platform(&platforms, "zybo-z7-20").unwrap();
    let zcu = find_platform(&platforms, "zcu104").unwrap();
    let kv = find_platform(&platforms, "kv260").unwrap();
    let rows = [
        (ReprKind::Binary, Variant::Basic, true),
        (ReprKind::EventFrame, Variant::Basic, true),
        (ReprKind::ExpDecayTS, Variant::Basic, false),
        (ReprKind::EventFrequency, Variant::Basic, false),
        (ReprKind::EventFrame, Variant::Rolling { slots: 8 }, false),
    ];
    for (kind, variant, zybo_ok) in rows {
        let est = estimate(kind, variant, SensorGeometry::HD, 1, false, 512, 64).map_err(|e| e.to_string())?;
        let name = format!("{} {variant:?}", kind.name());
        ensure(check_platform_fit(&est, zybo).feasible_bram == zybo_ok, || format!("zybo verdict for {name}"))?;
        ensure(check_platform_fit(&est, zcu).feasible_bram, || format!("zcu104 rejects {name}"))?;
    }
    let exp = estimate(ReprKind::ExpDecayTS, Variant::Basic, SensorGeometry::HD, 1, false, 512, 64).unwrap();
    let fit = check_platform_fit(&exp, kv);
    ensure(!fit.feasible_bram && fit.uram_fallback, || format!("kv260 exp-decay: {fit:?}"))?;
    Ok("zybo: binary+event-frame only; zcu104: all 5; kv260 exp-decay -> URAM".into())
}

fn c4_oracle_equivalence() -> Outcome {
    let g = geometry_64x48();
    let tau = 10_000;
    let started = Instant::now();
    let mut frames = 0usize;
    for kind in ReprKind::ALL {
        let repr = Representation::new(kind, tau).unwrap();
        let config = PipelineConfig::new(repr, g, Trigger::TimeWindow { tau_us: tau });
        for seed in 0..100 {
            let events = random_stream(seed, 10_000, 50_000, g);
            let (got, _) = run(&events, config, true).map_err(|e| e.to_string())?;
            let first_window = events[0].t / tau;
            for (i, f) in got.iter().enumerate() {
                let n = first_window + i as u64;
                let w = DenseWindow::select(&events, n * tau, (n + 1) * tau);
                let want = dense_frame(&w.events, repr, g, w.t_end);
                ensure(f.t_end == w.t_end, || format!("{} seed {seed} frame {i}: t_end", kind.name()))?;
                if let Some((px, a, b)) = f.first_difference(&want) {
                    return Err(format!("{} seed {seed} frame {i} pixel {px}: {a} vs {b}", kind.name()));
                }
            }
            let last_window = events[events.len() - 1].t / tau;
            ensure(got.len() as u64 == last_window - first_window + 1, || "frame count".into())?;
            frames += got.len();
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("4 x 100 streams, {frames} frames, 0 mismatching pixels, {:.2}s", elapsed.as_secs_f64()))
}

fn c5_bank_invariance() -> Outcome {
    let g = geometry_64x48();
    let triggers = [Trigger::TimeWindow { tau_us: 10_000 }, Trigger::DEFAULT_ROLLING];
    let mut runs = 0;
    for kind in ReprKind::ALL {
        for trigger in triggers {
            let config = PipelineConfig::new(Representation::with_default_tau(kind), g, trigger);
            for seed in 0..100 {
                let events = random_stream(seed, 10_000, 50_000, g);
                let (base, _) = run(&events, config, true).map_err(|e| e.to_string())?;
                for banks in [2, 4, 8] {
                    let (other, _) = run(&events, config.with_banks(banks), true).map_err(|e| e.to_string())?;
                    ensure(base == other, || format!("{} {trigger:?} seed {seed} X={banks}", kind.name()))?;
                    runs += 1;
                }
            }
        }
    }
    Ok(format!("X in 1,2,4,8: {runs} comparisons identical"))
}

fn c6_rolling_equivalence() -> Outcome {
    let g = geometry_64x48();
    let mut frames = 0usize;
    for (n_us, m_us, k_us) in [(8_000, 4_000, 1_000), (4_000, 2_000, 1_000), (4_000, 4_000, 2_000)] {
        let trigger = Trigger::Rolling { n_us, m_us, k_us };
        for kind in ReprKind::ALL {
            let config = PipelineConfig::new(Representation::with_default_tau(kind), g, trigger);
            for seed in 0..50 {
                let events = random_stream(1_000 + seed, 5_000, 30_000, g);
                let (got, _) = run(&events, config, true).map_err(|e| e.to_string())?;
                let n0 = events[0].t / k_us;
                let n1 = events[events.len() - 1].t / k_us;
                ensure(got.len() as u64 == n1 - n0 + 1, || "frame count".into())?;
                for (i, f) in got.iter().enumerate() {
                    let want = rolling_frame(&events, n_us, m_us, k_us, n0 + i as u64, kind, g)
                        .map_err(|e| e.to_string())?;
                    if let Some((px, a, b)) = f.first_difference(&want) {
                        return Err(format!(
                            "({n_us},{m_us},{k_us}) {} seed {seed} frame {i} pixel {px}: {a} vs {b}",
                            kind.name()
                        ));
                    }
                }
                frames += got.len();
            }
        }
    }
    Ok(format!("3 configs x 4 reprs x 50 streams, {frames} frames identical"))
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Push { read: bool },
    Pop,
}

/// Checks one operation sequence against the drop-oldest law.
fn fifo_law(capacity: usize, ops: &[Op]) -> Result<(), String> {
    let mut fifo = EventFifo::<u32>::new(capacity).unwrap();
    let mut pushed: Vec<u32> = Vec::new();
    let mut popped: Vec<u32> = Vec::new();
    let (mut dropped_r, mut dropped_w) = (0u64, 0u64);
    for (step, &op) in ops.iter().enumerate() {
        match op {
            Op::Push { read } => {
                let id = pushed.len() as u32;
                let full = fifo.len() == capacity;
                let evicted = fifo.push(id, read);
                if full {
                    if read { dropped_r += 1 } else { dropped_w += 1 }
                }
                ensure(evicted.is_some() == full, || format!("step {step}: eviction when full={full}"))?;
                pushed.push(id);
            }
            Op::Pop => {
                if let Some(v) = fifo.pop() {
                    popped.push(v);
                }
            }
        }
        // retained = the newest pushes that were neither popped nor evicted,
        // which is a suffix of the push order of length <= capacity
        let retained: Vec<u32> = fifo.iter().copied().collect();
        ensure(retained.len() <= capacity, || format!("step {step}: over capacity"))?;
        let start = pushed.len() - retained.len();
        ensure(retained == pushed[start..], || format!("step {step}: retained {retained:?} not newest"))?;
        ensure(popped.iter().all(|&p| (p as usize) < start), || format!("step {step}: popped a retained id"))?;
        ensure(popped.windows(2).all(|w| w[0] < w[1]), || format!("step {step}: pops out of order"))?;
        ensure(
            fifo.pushes() == fifo.pops() + fifo.len() as u64 + fifo.drop_count(),
            || format!("step {step}: conservation"),
        )?;
        ensure(
            fifo.dropped_in_read() == dropped_r && fifo.dropped_in_write() == dropped_w,
            || format!("step {step}: drop counters"),
        )?;
    }
    Ok(())
}

fn c7_fifo_law() -> Outcome {
    const ALPHABET: [Op; 3] = [Op::Push { read: true }, Op::Push { read: false }, Op::Pop];
    let mut sequences = 0u64;
    let mut ops = Vec::with_capacity(12);
    for capacity in 1..=8 {
        for len in 0..=12u32 {
            for mut code in 0..3u64.pow(len) {
                ops.clear();
                for _ in 0..len {
                    ops.push(ALPHABET[(code % 3) as usize]);
                    code /= 3;
                }
                fifo_law(capacity, &ops).map_err(|e| format!("cap {capacity} {ops:?}: {e}"))?;
                sequences += 1;
            }
        }
    }

    // randomized at full size against a plain deque model
    let capacity = 32_768;
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fifo = EventFifo::<u64>::new(capacity).unwrap();
        let mut model: VecDeque<u64> = VecDeque::new();
        let mut drops = 0u64;
        for id in 0..300_000u64 {
            if rng.gen_bool(0.6) {
                let read = rng.gen_bool(0.5);
                if model.len() == capacity {
                    model.pop_front();
                    drops += 1;
                }
                model.push_back(id);
                fifo.push(id, read);
            } else {
                ensure(fifo.pop() == model.pop_front(), || format!("seed {seed} op {id}: pop"))?;
            }
        }
        ensure(fifo.iter().copied().eq(model.iter().copied()), || format!("seed {seed}: contents"))?;
        ensure(fifo.drop_count() == drops && drops > 0, || format!("seed {seed}: drops {drops}"))?;
        ensure(
            fifo.pushes() == fifo.pops() + fifo.len() as u64 + fifo.drop_count(),
            || format!("seed {seed}: conservation"),
        )?;
    }
    Ok(format!("{sequences} exhaustive sequences (cap<=8, len<=12) + 4 x 300k random ops at 32768"))
}

fn c8_latency_scaling() -> Outcome {
    let mut parts = Vec::new();
    for x in [1usize, 2, 4, 8] {
        let timing = TimingConfig::new(100_000_000, x).map_err(|e| e.to_string())?;
        let lat = readout_latency(SensorGeometry::HD, timing);
        let us = lat.as_micros_exact().ok_or_else(|| format!("X={x}: not a whole microsecond"))?;
        ensure(us * x as u64 == 9_216, || format!("X={x}: {us} us"))?;
        parts.push(format!("X={x}:{us}us"));
    }
    Ok(parts.join(" "))
}

fn c9_decode_fixed_points() -> Outcome {
    let ef = Representation::with_default_tau(ReprKind::EventFrame);
    let fq = Representation::with_default_tau(ReprKind::EventFrequency);
    let checks = [
        ("event-frame +", decode_cell(ef, CellCode::event_frame(Polarity::Positive)), 255),
        ("event-frame -", decode_cell(ef, CellCode::event_frame(Polarity::Negative)), 0),
        ("event-frame none", decode_cell(ef, CellCode::EVENT_FRAME_NONE), 128),
        ("frequency -16", decode_cell(fq, CellCode::frequency(-16)), 0),
        ("frequency 15", decode_cell(fq, CellCode::frequency(15)), 255),
        ("frequency 0", decode_cell(fq, CellCode::frequency(0)), 128),
    ];
    for (name, got, want) in checks {
        ensure(got == want, || format!("{name}: {got} != {want}"))?;
    }
    Ok("+->255 -->0 none->128; x=-16->0 x=15->255 x=0->128".into())
}

/// Bursts of `burst` events right after each 10 ms boundary on an HD sensor.
fn overload_stream(seed: u64, windows: u64, burst: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    for w in 0..windows {
        let base = w * 10_000;
        for i in 0..burst {
            let t = base + i * 5_000 / burst;
            let p = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            events.push(Event::new(t, rng.gen_range(0..1280), rng.gen_range(0..720), p));
        }
    }
    events
}

fn c10_pingpong_lossless() -> Outcome {
    let g = SensorGeometry::HD;
    let mut fifo_drops = 0;
    for kind in ReprKind::ALL {
        for seed in 0..3 {
            let events = overload_stream(seed, 4, 40_000);
            let base = PipelineConfig::new(
                Representation::with_default_tau(kind),
                g,
                Trigger::TimeWindow { tau_us: 10_000 },
            );
            let hw = base.with_timing(TimingMode::hardware());
            let (behavioral, _) = run(&events, base, true).map_err(|e| e.to_string())?;
            let (_, fifo_stats) = run(&events, hw, true).map_err(|e| e.to_string())?;
            ensure(fifo_stats.events_dropped > 0, || format!("{} seed {seed}: FIFO did not drop", kind.name()))?;
            fifo_drops += fifo_stats.events_dropped;
            let (pp, pp_stats) = run(&events, hw.with_buffering(Buffering::PingPong), true).map_err(|e| e.to_string())?;
            ensure(pp_stats.events_dropped == 0, || format!("{} seed {seed}: ping-pong dropped", kind.name()))?;
            ensure(pp == behavioral, || format!("{} seed {seed}: frames differ", kind.name()))?;
        }
    }
    Ok(format!("12 overload streams: ping-pong 0 drops, frames equal; FIFO dropped {fifo_drops}"))
}

fn c11_throughput() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("hd.csv");
    // 4M events at 20M events/s: 200 ms, 20 frames
    let n = 4_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut text = String::with_capacity(n as usize * 20);
    for i in 0..n {
        let p = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
        let e = Event::new(i / 20, rng.gen_range(0..1280), rng.gen_range(0..720), p);
        text.push_str(&format_event_line(&e));
        text.push('\n');
    }
    std::fs::write(&input, &text).map_err(|e| e.to_string())?;
    drop(text);
    // settle writeback and pull the file through the page cache before timing
    let warm = std::fs::File::open(&input).and_then(|mut f| {
        f.sync_all()?;
        std::io::copy(&mut f, &mut std::io::sink())
    });
    warm.map_err(|e| e.to_string())?;

    let args = ConvertArgs {
        pipeline: PipelineArgs {
            repr: ReprKind::EventFrame,
            tau_us: Some(10_000),
            count: None,
            rolling: None,
            geometry: GeometryArgs {
                width: 1280,
                height: 720,
            },
            banks: 1,
            buffering: BufferingArg::Fifo,
            fifo_capacity: None,
            timing: TimingArg::Behavioral,
            clock_hz: None,
            no_flush: false,
        },
        order: OrderArg::Strict,
        input,
        out_dir: dir.path().join("out"),
    };
    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let started = Instant::now();
        let summary = convert(&args).map_err(|e| e.to_string())?;
        best = best.min(started.elapsed().as_secs_f64());
        ensure(summary.stats.events_processed == n, || "lost events".into())?;
        ensure(summary.stats.frames_emitted == 20, || format!("{} frames", summary.stats.frames_emitted))?;
    }
    let rate = n as f64 / best;
    let mut msg = String::new();
    let _ = write!(msg, "{:.1}M events/s (HD event-frame, CSV in, 20 PGM frames out)", rate / 1e6);
    ensure(rate >= 10e6, || format!("{msg}; need >= 10M"))?;
    Ok(msg)
}

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "block RAM totals per representation", c1_block_rows),
        (2, "multiple-bank event frame", c2_multiple_banks),
        (3, "platform fit verdicts", c3_platform_verdicts),
        (4, "pipeline equals dense oracle", c4_oracle_equivalence),
        (5, "bank invariance", c5_bank_invariance),
        (6, "rolling window equals oracle", c6_rolling_equivalence),
        (7, "FIFO drop-oldest law", c7_fifo_law),
        (8, "readout latency scaling", c8_latency_scaling),
        (9, "decode fixed points", c9_decode_fixed_points),
        (10, "ping-pong losslessness", c10_pingpong_lossless),
        (11, "convert throughput", c11_throughput),
    ];
    // `cargo test --test acceptance -- 4 7` runs a subset
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let result = check();
        let secs = started.elapsed().as_secs_f64();
        let line = match &result {
            Ok(detail) => format!("criterion {id:>2} PASS  {name}: {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                format!("criterion {id:>2} FAIL  {name}: {why} [{secs:.2}s]")
            }
        };
        println!("{line}");
        let _ = std::io::stdout().flush();
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
