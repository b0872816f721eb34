//! Command implementations behind the `evframe` binary.
//!
//! Everything returns a [`CliError`] instead of exiting so the commands can be
//! driven from tests; [`main_with_args`] maps errors to exit codes.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evframe::evio::{
    frame_file_name, generate_synthetic_events, read_event_stream, write_frame_pgm, EventBatchReader,
    OrderPolicy, Pattern, ReadError, SynthParams,
};
use evframe::oracle::reference_frames;
use evframe::pipeline::{run, PipelineError};
use evframe::resource::{
    builtin_platforms, check_platform_fit, estimate, find_platform, parse_platform_file,
    FitReport, Variant, COMPARISON_FIFO_CAPACITY, DEFAULT_FIFO_ELEMENT_BITS,
};
use evframe::{
    Buffering, ConfigError, Event, Frame, Pipeline, PipelineConfig, PipelineStats, PlatformProfile,
    ReprKind, Representation, SensorGeometry, TimingMode, Trigger,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

/// Batches in flight; bounds reader memory.
const QUEUE_DEPTH: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<ReadError> for CliError {
    fn from(e: ReadError) -> Self {
        match e {
            ReadError::Io(source) => CliError::Io {
                context: "reading events".into(),
                source,
            },
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => CliError::Config(c),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "evframe", version, about = "Event-camera streams to grayscale frames")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert a `t,x,y,p` CSV stream into PGM frames.
    Convert(ConvertArgs),
    /// Estimate block RAM usage and check it against FPGA boards.
    Estimate(EstimateArgs),
    /// Write a synthetic event stream as CSV.
    Synth(SynthArgs),
    /// Run the pipeline and the dense reference side by side.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BufferingArg {
    Fifo,
    PingPong,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TimingArg {
    Behavioral,
    Hardware,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    /// Reject a decreasing timestamp.
    Strict,
    /// Sort the whole input first (reads it into memory).
    Sort,
    /// Skip events with a decreasing timestamp and report how many.
    Warn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Table,
    Kv,
}

fn parse_repr(s: &str) -> Result<ReprKind, String> {
    s.parse().map_err(|e: evframe::repr::UnknownRepr| e.to_string())
}

/// `N,M,K` in microseconds.
pub fn parse_rolling(s: &str) -> Result<(u64, u64, u64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected N,M,K in microseconds, got {s:?}"));
    }
    let mut v = [0u64; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("not an integer: {p:?}"))?;
    }
    Ok((v[0], v[1], v[2]))
}

#[derive(Args, Debug, Clone)]
pub struct GeometryArgs {
    #[arg(long, default_value_t = 1280)]
    pub width: u16,
    #[arg(long, default_value_t = 720)]
    pub height: u16,
}

impl GeometryArgs {
    fn geometry(&self) -> Result<SensorGeometry, CliError> {
        Ok(SensorGeometry::new(self.width, self.height).map_err(ConfigError::from)?)
    }
}

#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    #[arg(long, value_parser = parse_repr, default_value = "event-frame")]
    pub repr: ReprKind,
    /// Window length for time-triggered frames [default: 10000].
    #[arg(long, conflicts_with_all = ["count", "rolling"])]
    pub tau_us: Option<u64>,
    /// Emit a frame every Z events.
    #[arg(long, value_name = "Z", conflicts_with = "rolling")]
    pub count: Option<u64>,
    /// Rolling window N,M,K in microseconds (e.g. 8000,4000,1000).
    #[arg(long, value_name = "N,M,K", value_parser = parse_rolling)]
    pub rolling: Option<(u64, u64, u64)>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Memory banks read in parallel (pixels per clock).
    #[arg(long, default_value_t = 1)]
    pub banks: usize,
    #[arg(long, value_enum, default_value_t = BufferingArg::Fifo)]
    pub buffering: BufferingArg,
    /// Queue depth for `--buffering fifo` [default: 32768].
    #[arg(long)]
    pub fifo_capacity: Option<usize>,
    #[arg(long, value_enum, default_value_t = TimingArg::Behavioral)]
    pub timing: TimingArg,
    /// Accumulator clock for `--timing hardware` [default: 100000000].
    #[arg(long)]
    pub clock_hz: Option<u64>,
    /// Leave the last, incomplete window unemitted.
    #[arg(long)]
    pub no_flush: bool,
}

impl PipelineArgs {
    pub fn trigger(&self) -> Trigger {
        if let Some(events) = self.count {
            Trigger::CountWindow { events }
        } else if let Some((n_us, m_us, k_us)) = self.rolling {
            Trigger::Rolling { n_us, m_us, k_us }
        } else {
            Trigger::TimeWindow {
                tau_us: self.tau_us.unwrap_or(evframe::repr::DEFAULT_TAU_US),
            }
        }
    }

    pub fn config(&self) -> Result<PipelineConfig, CliError> {
        if self.fifo_capacity.is_some() && self.buffering != BufferingArg::Fifo {
            return Err(CliError::Usage(
                "--fifo-capacity only applies to --buffering fifo".into(),
            ));
        }
        if self.clock_hz.is_some() && self.timing != TimingArg::Hardware {
            return Err(CliError::Usage(
                "--clock-hz only applies to --timing hardware".into(),
            ));
        }
        let geometry = self.geometry.geometry()?;
        let buffering = match self.buffering {
            BufferingArg::Fifo => Buffering::Fifo {
                capacity: self
                    .fifo_capacity
                    .unwrap_or(evframe::hwmodel::DEFAULT_FIFO_CAPACITY),
            },
            BufferingArg::PingPong => Buffering::PingPong,
            BufferingArg::Unbounded => Buffering::Unbounded,
        };
        let timing = match self.timing {
            TimingArg::Behavioral => TimingMode::Behavioral,
            TimingArg::Hardware => TimingMode::HardwareTimed {
                clock_hz: self.clock_hz.unwrap_or(evframe::hwmodel::DEFAULT_CLOCK_HZ),
            },
        };
        let trigger = self.trigger();
        let tau = match trigger {
            Trigger::TimeWindow { tau_us } => tau_us,
            _ => evframe::repr::DEFAULT_TAU_US,
        };
        let repr = Representation::new(self.repr, tau).map_err(ConfigError::from)?;
        let config = PipelineConfig::new(repr, geometry, trigger)
            .with_banks(self.banks)
            .with_buffering(buffering)
            .with_timing(timing);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug, Clone)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, value_enum, default_value_t = OrderArg::Strict)]
    pub order: OrderArg,
    /// Event CSV (`t,x,y,p`); `-` reads standard input.
    pub input: PathBuf,
    /// Directory for `frame_NNNNNN.pgm` and `stats.txt`; created if missing.
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    #[arg(long, value_parser = parse_repr)]
    pub repr: ReprKind,
    #[arg(long, default_value_t = 1)]
    pub banks: usize,
    /// Size the rolling-window variant for N,M,K (microseconds).
    #[arg(long, value_name = "N,M,K", value_parser = parse_rolling)]
    pub rolling: Option<(u64, u64, u64)>,
    /// Two accumulators instead of one.
    #[arg(long)]
    pub pingpong: bool,
    #[arg(long, default_value_t = COMPARISON_FIFO_CAPACITY)]
    pub fifo_capacity: usize,
    #[arg(long, default_value_t = DEFAULT_FIFO_ELEMENT_BITS)]
    pub fifo_element_bits: u32,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Only report this board (repeatable). Default: every known board.
    #[arg(long)]
    pub platform: Vec<String>,
    /// Extra board definitions (`key = value` stanzas).
    #[arg(long)]
    pub platform_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    pub format: FormatArg,
}

#[derive(Args, Debug, Clone)]
pub struct SynthSource {
    #[arg(long, default_value = "moving_dot")]
    pub pattern: String,
    #[arg(long, default_value_t = 100_000)]
    pub duration_us: u64,
    /// Mean events per second.
    #[arg(long, default_value_t = 1_000_000.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SynthSource {
    fn generate(&self, geometry: SensorGeometry) -> Result<Vec<Event>, CliError> {
        let pattern: Pattern = self
            .pattern
            .parse()
            .map_err(|e: evframe::evio::SynthError| CliError::Usage(e.to_string()))?;
        generate_synthetic_events(&SynthParams {
            geometry,
            duration_us: self.duration_us,
            pattern,
            rate: self.rate,
            seed: self.seed,
        })
        .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[command(flatten)]
    pub source: SynthSource,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Output CSV; `-` writes standard output.
    pub output: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Generate the input instead of reading a file.
    #[arg(long, value_name = "PATTERN", conflicts_with = "input")]
    pub synthetic: Option<String>,
    #[arg(long, default_value_t = 0, requires = "synthetic")]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000, requires = "synthetic")]
    pub duration_us: u64,
    #[arg(long, default_value_t = 1_000_000.0, requires = "synthetic")]
    pub rate: f64,
    #[arg(long, value_enum, default_value_t = OrderArg::Strict)]
    pub order: OrderArg,
    /// Event CSV (`t,x,y,p`).
    #[arg(required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command, printing
/// diagnostics to stderr. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match execute(&cli.command, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = out.flush();
            eprintln!("evframe: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Convert(a) => {
            let summary = convert(a)?;
            if summary.skipped_out_of_order > 0 {
                eprintln!(
                    "evframe: warning: skipped {} events with decreasing timestamps",
                    summary.skipped_out_of_order
                );
            }
            Ok(())
        }
        Command::Estimate(a) => cmd_estimate(a, out),
        Command::Synth(a) => synth(a),
        Command::Compare(a) => {
            let report = compare(a)?;
            writeln!(out, "{report}").map_err(CliError::io("writing report"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvertSummary {
    pub stats: PipelineStats,
    pub skipped_out_of_order: u64,
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead + Send>, CliError> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(CliError::io(format!("opening {}", path.display())))?;
    Ok(Box::new(BufReader::with_capacity(1 << 20, f)))
}

/// Writes each frame as soon as it is produced.
struct FrameWriter<'a> {
    dir: &'a Path,
    index: u64,
    error: Option<CliError>,
}

impl FrameWriter<'_> {
    fn write(&mut self, frame: Frame) {
        if self.error.is_some() {
            return;
        }
        let path = self.dir.join(frame_file_name(self.index));
        self.index += 1;
        let result = File::create(&path).and_then(|f| {
            let mut w = BufWriter::new(f);
            write_frame_pgm(&frame, &mut w)?;
            w.flush()
        });
        if let Err(e) = result {
            self.error = Some(CliError::Io {
                context: format!("writing {}", path.display()),
                source: e,
            });
        }
    }
}

pub fn convert(args: &ConvertArgs) -> Result<ConvertSummary, CliError> {
    let config = args.pipeline.config()?;
    let source = open_input(&args.input)?;
    fs::create_dir_all(&args.out_dir)
        .map_err(CliError::io(format!("creating {}", args.out_dir.display())))?;

    let mut pipeline = Pipeline::new(config)?;
    let mut writer = FrameWriter {
        dir: &args.out_dir,
        index: 0,
        error: None,
    };
    let mut skipped = 0;

    if args.order == OrderArg::Sort {
        let stream = read_event_stream(source, config.geometry, OrderPolicy::Sort)?;
        pipeline.feed_all(&stream.events, &mut |f| writer.write(f))?;
    } else {
        let strict = args.order == OrderArg::Strict;
        let geometry = config.geometry;
        let (tx, rx) = mpsc::sync_channel::<Result<Vec<Event>, ReadError>>(QUEUE_DEPTH);
        let reader = thread::spawn(move || read_batches(source, geometry, strict, tx));
        for batch in rx {
            pipeline.feed_all(&batch?, &mut |f| writer.write(f))?;
            if let Some(e) = writer.error.take() {
                return Err(e);
            }
        }
        skipped = reader.join().expect("reader thread panicked");
    }
    if !args.pipeline.no_flush {
        pipeline.flush(&mut |f| writer.write(f));
    }
    if let Some(e) = writer.error.take() {
        return Err(e);
    }
    let stats = pipeline.stats();
    let stats_path = args.out_dir.join("stats.txt");
    fs::write(&stats_path, stats.to_string())
        .map_err(CliError::io(format!("writing {}", stats_path.display())))?;
    Ok(ConvertSummary {
        stats,
        skipped_out_of_order: skipped,
    })
}

/// Reader side of `convert`. Returns the number of skipped out-of-order
/// events; stops early if the receiver hangs up.
fn read_batches(
    source: Box<dyn BufRead + Send>,
    geometry: SensorGeometry,
    strict: bool,
    tx: mpsc::SyncSender<Result<Vec<Event>, ReadError>>,
) -> u64 {
    let policy = if strict { OrderPolicy::Strict } else { OrderPolicy::Warn };
    let mut reader = EventBatchReader::new(source, geometry, policy);
    let mut last = 0u64;
    let mut skipped = 0;
    loop {
        let mut batch = Vec::with_capacity(1 << 16);
        let more = reader.next_batch(&mut batch);
        if !strict {
            batch.retain(|e| {
                let keep = e.t >= last;
                if keep {
                    last = e.t;
                } else {
                    skipped += 1;
                }
                keep
            });
        }
        match more {
            Ok(true) => {
                if tx.send(Ok(batch)).is_err() {
                    return skipped;
                }
            }
            Ok(false) => return skipped,
            Err(e) => {
                // events before the bad line still go through
                let _ = tx.send(Ok(batch));
                let _ = tx.send(Err(e));
                return skipped;
            }
        }
    }
}

fn fmt_half(half: i64) -> String {
    let sign = if half < 0 { "-" } else { "" };
    let a = half.unsigned_abs();
    if a.is_multiple_of(2) {
        format!("{sign}{}", a / 2)
    } else {
        format!("{sign}{}.5", a / 2)
    }
}

/// One-line verdict, e.g. `226 blocks, feasible, margin 86`.
pub fn verdict_line(total_half_blocks: u64, fit: &FitReport) -> String {
    let total = fmt_half(total_half_blocks as i64);
    if fit.feasible_bram {
        format!("{total} blocks, feasible, margin {}", fmt_half(fit.margin))
    } else {
        let fallback = if fit.uram_fallback {
            ", URAM fallback"
        } else if fit.needs_uram_or_external {
            ", external RAM only"
        } else {
            ""
        };
        format!(
            "{total} blocks, infeasible, short {}{fallback}",
            fmt_half(-fit.margin)
        )
    }
}

fn load_platforms(args: &EstimateArgs) -> Result<Vec<PlatformProfile>, CliError> {
    let mut all = Vec::new();
    if let Some(path) = &args.platform_file {
        let text = fs::read_to_string(path)
            .map_err(CliError::io(format!("reading {}", path.display())))?;
        all = parse_platform_file(&text).map_err(|e| CliError::Data(e.to_string()))?;
    }
    all.extend(builtin_platforms());
    if args.platform.is_empty() {
        // file entries shadow builtins of the same name
        let mut seen = Vec::new();
        all.retain(|p| {
            let fresh = find_platform(&seen, &p.name).is_none();
            seen.push(p.clone());
            fresh
        });
        return Ok(all);
    }
    args.platform
        .iter()
        .map(|name| {
            find_platform(&all, name)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("unknown platform {name:?}")))
        })
        .collect()
}

fn cmd_estimate(args: &EstimateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    out.write_all(estimate_report(args)?.as_bytes())
        .map_err(CliError::io("writing report"))
}

/// The text `estimate` prints.
pub fn estimate_report(args: &EstimateArgs) -> Result<String, CliError> {
    let geometry = args.geometry.geometry()?;
    let variant = match args.rolling {
        Some((n_us, m_us, k_us)) => {
            let t = Trigger::Rolling { n_us, m_us, k_us };
            t.validate()?;
            Variant::of_trigger(&t)
        }
        None => Variant::Basic,
    };
    let est = estimate(
        args.repr,
        variant,
        geometry,
        args.banks,
        args.pingpong,
        args.fifo_capacity,
        args.fifo_element_bits,
    )?;
    let platforms = load_platforms(args)?;
    let total = est.bram_blocks();
    let variant_name = match variant {
        Variant::Basic => "basic".to_string(),
        Variant::Rolling { slots } => format!("rolling ({slots} sub-windows)"),
    };
    let mut s = String::new();
    use std::fmt::Write as _;
    match args.format {
        FormatArg::Table => {
            let _ = writeln!(s, "representation     {}", args.repr.name());
            let _ = writeln!(s, "variant            {variant_name}");
            let _ = writeln!(s, "geometry           {geometry}");
            let _ = writeln!(s, "cell bits          {}", est.cell_bits);
            let _ = writeln!(s, "banks              {}", est.banks);
            let _ = writeln!(
                s,
                "accumulator        {} blocks{}",
                est.accumulator_blocks,
                if est.pingpong_multiplier > 1 { " x2 (ping-pong)" } else { "" }
            );
            let _ = writeln!(s, "fifo               {} blocks", est.fifo_blocks);
            let _ = writeln!(s, "total              {total} blocks");
            for p in &platforms {
                let fit = check_platform_fit(&est, p);
                let _ = writeln!(s, "{:<18} {}", p.name, verdict_line(total.0, &fit));
            }
        }
        FormatArg::Kv => {
            let _ = writeln!(s, "repr={}", args.repr.name());
            let _ = writeln!(s, "cell_bits={}", est.cell_bits);
            let _ = writeln!(s, "banks={}", est.banks);
            let _ = writeln!(s, "accumulator_bits={}", est.accumulator_bits);
            let _ = writeln!(s, "fifo_bits={}", est.fifo_bits);
            let _ = writeln!(s, "accumulator_blocks={}", est.accumulator_blocks);
            let _ = writeln!(s, "pingpong_multiplier={}", est.pingpong_multiplier);
            let _ = writeln!(s, "fifo_blocks={}", est.fifo_blocks);
            let _ = writeln!(s, "total_blocks={total}");
            for p in &platforms {
                let fit = check_platform_fit(&est, p);
                let _ = writeln!(s, "{}.feasible={}", p.name, fit.feasible_bram);
                let _ = writeln!(s, "{}.margin={}", p.name, fmt_half(fit.margin));
                let _ = writeln!(s, "{}.uram_fallback={}", p.name, fit.uram_fallback);
            }
        }
    }
    Ok(s)
}

fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let events = args.source.generate(args.geometry.geometry()?)?;
    let sink: Box<dyn Write> = if args.output.as_os_str() == "-" {
        Box::new(io::stdout().lock())
    } else {
        Box::new(
            File::create(&args.output)
                .map_err(CliError::io(format!("creating {}", args.output.display())))?,
        )
    };
    let mut w = BufWriter::new(sink);
    let ctx = || format!("writing {}", args.output.display());
    writeln!(w, "# t,x,y,p").map_err(CliError::io(ctx()))?;
    for e in &events {
        writeln!(w, "{e}").map_err(CliError::io(ctx()))?;
    }
    w.flush().map_err(CliError::io(ctx()))
}

/// Runs `compare`. On success returns a one-line summary; a difference is
/// reported as [`CliError::Mismatch`].
pub fn compare(args: &CompareArgs) -> Result<String, CliError> {
    let config = args.pipeline.config()?;
    let events = match (&args.synthetic, &args.input) {
        (Some(pattern), _) => SynthSource {
            pattern: pattern.clone(),
            duration_us: args.duration_us,
            rate: args.rate,
            seed: args.seed,
        }
        .generate(config.geometry)?,
        (None, Some(path)) => {
            let policy = match args.order {
                OrderArg::Strict => OrderPolicy::Strict,
                OrderArg::Sort => OrderPolicy::Sort,
                OrderArg::Warn => OrderPolicy::Warn,
            };
            let mut stream = read_event_stream(open_input(path)?, config.geometry, policy)?;
            if args.order == OrderArg::Warn {
                let mut last = 0;
                stream.events.retain(|e| {
                    let keep = e.t >= last;
                    last = last.max(e.t);
                    keep
                });
            }
            stream.events
        }
        (None, None) => return Err(CliError::Usage("no input given".into())),
    };
    let flush = !args.pipeline.no_flush;
    let (got, stats) = run(&events, config, flush)?;
    let want = reference_frames(&events, config.repr, config.geometry, config.trigger, flush)?;
    if let Some(diff) = first_mismatch(&want, &got, config.geometry) {
        return Err(CliError::Mismatch(format!(
            "{diff} ({} events dropped)",
            stats.events_dropped
        )));
    }
    Ok(format!(
        "identical: {} frames, {} events",
        got.len(),
        events.len()
    ))
}

fn first_mismatch(want: &[Frame], got: &[Frame], geometry: SensorGeometry) -> Option<String> {
    for (i, (w, g)) in want.iter().zip(got).enumerate() {
        if let Some((px, expected, actual)) = w.first_difference(g) {
            let width = geometry.width() as usize;
            return Some(format!(
                "mismatch: frame {i} pixel {px} (x={}, y={}): expected {expected}, got {actual}",
                px % width,
                px / width
            ));
        }
    }
    (want.len() != got.len()).then(|| {
        format!(
            "mismatch: expected {} frames, got {}",
            want.len(),
            got.len()
        )
    })
}
