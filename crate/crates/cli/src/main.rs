//! `evsparse`: run, benchmark and calibrate the event token sparsification
//! pipeline.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evsparse_core::ablation::{run_ablation, Sweep};
use evsparse_core::error::{Error, Result};
use evsparse_core::intensity::{GridResolution, KernelParams};
use evsparse_core::io::{load_events, save_events, EventFormat};
use evsparse_core::pipeline::{calibrate_tau, run_pipeline, write_tokens, PipelineConfig, TauSetting};
use evsparse_core::probe::capacity_probe;
use evsparse_core::synth::{generate_synthetic, SyntheticKind, SyntheticSpec};
use evsparse_core::temporal::write_trace;
use evsparse_core::{EncoderConfig, EventStream, SensorGeometry};
use serde::Serialize;

const THREADS_ENV: &str = "EVSPARSE_THREADS";

#[derive(Parser)]
#[command(
    name = "evsparse",
    version,
    about = "Spatiotemporal token sparsification for event streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on an event file.
    Run(RunArgs),
    /// Write a synthetic event stream.
    Synth(SynthArgs),
    /// Sweep stage toggles, bin duration or alpha and tabulate efficiency.
    Ablate(AblateArgs),
    /// Check that a stream of N bins fits through the pipeline.
    Probe(ProbeArgs),
    /// Suggest a stage-1 threshold from the input's adjacent-bin distances.
    CalibrateTau(CalibrateArgs),
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// Bin duration in milliseconds.
    #[arg(long, default_value_t = 10.0)]
    bin_ms: f64,
    /// Sample grid per bin, NXxNYxNT.
    #[arg(long, default_value = "16x16x8")]
    grid: String,
    #[arg(long, default_value_t = 2.0)]
    sigma_x: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma_y: f64,
    /// Temporal kernel width in microseconds [default: bin duration / 4].
    #[arg(long)]
    sigma_t_us: Option<f64>,
    /// Skip event/sample pairs further apart than this many sigmas.
    #[arg(long)]
    truncate_sigmas: Option<f64>,
}

impl KernelArgs {
    fn bin_us(&self) -> Result<u64> {
        if self.bin_ms.is_nan() || self.bin_ms <= 0.0 {
            return Err(Error::Usage(format!("--bin-ms must be positive, got {}", self.bin_ms)));
        }
        Ok((self.bin_ms * 1e3).round() as u64)
    }

    fn grid(&self) -> Result<GridResolution> {
        let parts: Vec<usize> = self
            .grid
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Usage(format!("--grid expects NXxNYxNT, got '{}'", self.grid)))?;
        match parts[..] {
            [nx, ny, nt] => GridResolution::new(nx, ny, nt),
            _ => Err(Error::Usage(format!("--grid expects NXxNYxNT, got '{}'", self.grid))),
        }
    }

    fn kernel(&self) -> Result<KernelParams> {
        let sigma_t = self.sigma_t_us.unwrap_or(self.bin_us()? as f64 / 4.0);
        let k = KernelParams::new(self.sigma_x, self.sigma_y, sigma_t)?;
        let k = match self.truncate_sigmas {
            Some(c) => k.truncated(c),
            None => k,
        };
        k.validate()?;
        Ok(k)
    }

    /// `None` when every kernel knob is at its bin-derived default.
    fn explicit_kernel(&self) -> Result<Option<KernelParams>> {
        let default = self.sigma_x == 2.0 && self.sigma_y == 2.0;
        if default && self.sigma_t_us.is_none() && self.truncate_sigmas.is_none() {
            Ok(None)
        } else {
            self.kernel().map(Some)
        }
    }
}

#[derive(Args, Clone)]
struct PipelineArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// Fixed stage-1 distance threshold [default: calibrated per input].
    #[arg(long)]
    tau: Option<f64>,
    /// Percentile used to calibrate tau when --tau is absent.
    #[arg(long, default_value_t = 25.0)]
    tau_percentile: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.85)]
    score_threshold: f64,
    #[arg(long)]
    max_window_ms: Option<f64>,
    #[arg(long)]
    target_windows: Option<usize>,
    /// Fraction of patch tokens kept per window.
    #[arg(long, default_value_t = 0.25)]
    rho: f64,
    #[arg(long, default_value_t = 16)]
    patch_size: usize,
    #[arg(long, default_value_t = 64)]
    embed_dim: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Encoder weight seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Seed of the density encoder and pruning attention.
    #[arg(long, default_value_t = 7)]
    sdga_seed: u64,
    #[arg(long)]
    no_temporal: bool,
    #[arg(long)]
    no_spatial: bool,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let config = PipelineConfig {
            bin_duration_us: self.kernel.bin_us()?,
            kernel: self.kernel.explicit_kernel()?,
            grid: self.kernel.grid()?,
            tau: match self.tau {
                Some(t) => TauSetting::Fixed(t),
                None => TauSetting::Percentile(self.tau_percentile),
            },
            alpha: self.alpha,
            score_threshold: self.score_threshold,
            max_window_span_us: self.max_window_ms.map(|ms| (ms * 1e3).round() as u64),
            target_windows: self.target_windows,
            encoder: EncoderConfig {
                patch_size: self.patch_size,
                embed_dim: self.embed_dim,
                heads: self.heads,
                layers: self.layers,
                seed: self.seed,
            },
            rho: self.rho,
            sdga_seed: self.sdga_seed,
            temporal_on: !self.no_temporal,
            spatial_on: !self.no_spatial,
            geometry: None,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// csv or bin [default: from the file extension].
    #[arg(long)]
    format: Option<String>,
}

impl InputArgs {
    fn load(&self) -> Result<EventStream> {
        let format = match &self.format {
            Some(f) => f.parse()?,
            None => EventFormat::from_path(&self.input),
        };
        let stream = load_events(&self.input, format)?;
        if stream.was_resorted() {
            eprintln!(
                "warning: {} was not time-ordered; events were re-sorted",
                self.input.display()
            );
        }
        Ok(stream)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Efficiency report (JSON) [default: stdout].
    #[arg(long)]
    report: Option<PathBuf>,
    /// Kept tokens, one JSON line per window.
    #[arg(long)]
    tokens: Option<PathBuf>,
    /// Omit token vectors from --tokens output.
    #[arg(long)]
    no_vectors: bool,
    /// Merge decisions, one JSON line each.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Per-window density, modulation, importance and kept indices (JSON).
    #[arg(long)]
    debug_dump: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct WorkloadArgs {
    #[arg(long, default_value = "two_phase")]
    kind: String,
    #[arg(long, default_value_t = 1000.0)]
    duration_ms: f64,
    /// Mean events per second.
    #[arg(long, default_value_t = 20_000.0)]
    rate: f64,
    #[arg(long, default_value_t = 128)]
    width: u32,
    #[arg(long, default_value_t = 128)]
    height: u32,
    /// Repetition period of static_scene, milliseconds.
    #[arg(long, default_value_t = 5.0)]
    period_ms: f64,
}

impl WorkloadArgs {
    fn spec(&self, seed: u64) -> Result<SyntheticSpec> {
        let kind: SyntheticKind = self.kind.parse()?;
        let spec = SyntheticSpec {
            kind,
            duration_us: (self.duration_ms * 1e3).round() as u64,
            rate: self.rate,
            geometry: SensorGeometry::new(self.width, self.height)?,
            seed,
            period_us: (self.period_ms * 1e3).round() as u64,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// csv or bin [default: from the file extension].
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    /// components, interval or alpha.
    #[arg(long)]
    sweep: String,
    /// Comma-separated sweep values (ms for interval) [default: 5,10,20,30 or 0.1,0.2,0.4,0.6].
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Event file; a synthetic workload is generated when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Seed of the synthetic workload.
    #[arg(long, default_value_t = 7)]
    workload_seed: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Full table as JSON [default: stdout].
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    bins: usize,
    #[arg(long, default_value_t = 7)]
    workload_seed: u64,
    #[arg(long, default_value_t = 4096)]
    memory_budget_mb: u64,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Probe report (JSON) [default: stdout].
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 25.0)]
    percentile: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Pretty JSON to `path`, or stdout.
fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable") + "\n";
    match path.filter(|p| *p != Path::new("-")) {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_err(p))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = args.pipeline.config()?;
    let stream = args.input.load()?;
    let out = run_pipeline(&stream, &config)?;
    if let Some(path) = &args.tokens {
        let mut w = create(path)?;
        write_tokens(&mut w, &out.windows, !args.no_vectors)
            .and_then(|_| w.flush())
            .map_err(io_err(path))?;
    }
    if let Some(path) = &args.trace {
        let mut w = create(path)?;
        write_trace(&mut w, &out.trace)
            .and_then(|_| w.flush())
            .map_err(io_err(path))?;
    }
    if let Some(path) = &args.debug_dump {
        emit_json(&out.sdga_debug, Some(path))?;
    }
    emit_json(&out.report, args.report.as_deref())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = args.workload.spec(args.seed)?;
    let stream = generate_synthetic(&spec)?;
    let format = match &args.format {
        Some(f) => f.parse()?,
        None => EventFormat::from_path(&args.out),
    };
    save_events(&args.out, format, &stream)?;
    eprintln!("wrote {} events to {}", stream.len(), args.out.display());
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let sweep: Sweep = args.sweep.parse()?;
    let config = args.pipeline.config()?;
    let stream = match &args.input {
        Some(path) => InputArgs {
            input: path.clone(),
            format: None,
        }
        .load()?,
        None => generate_synthetic(&args.workload.spec(args.workload_seed)?)?,
    };
    let table = run_ablation(&stream, &config, sweep, args.values.as_deref())?;
    if let Some(path) = &args.csv {
        let mut w = create(path)?;
        w.write_all(table.to_csv().as_bytes())
            .and_then(|_| w.flush())
            .map_err(io_err(path))?;
    }
    emit_json(&table, args.json.as_deref())
}

fn cmd_probe(args: ProbeArgs) -> Result<()> {
    let config = args.pipeline.config()?;
    let budget = args.memory_budget_mb.saturating_mul(1 << 20);
    let report = capacity_probe(args.bins, &config, args.workload_seed, budget)?;
    emit_json(&report, args.report.as_deref())?;
    if report.success {
        Ok(())
    } else {
        Err(Error::Resource(report.failure.unwrap_or_else(|| "probe failed".into())))
    }
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let stream = args.input.load()?;
    let suggestion = calibrate_tau(
        &stream,
        args.kernel.bin_us()?,
        &args.kernel.kernel()?,
        args.kernel.grid()?,
        args.percentile,
    )?;
    emit_json(&suggestion, None)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Resource(format!("cannot start thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Probe(a) => cmd_probe(a),
        Command::CalibrateTau(a) => cmd_calibrate(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
