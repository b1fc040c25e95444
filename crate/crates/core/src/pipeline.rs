//! End-to-end pipeline: binning, temporal merging, encoding, spatial pruning,
//! and efficiency accounting.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::HeadConfig;
use crate::binning::{segment_into_bins, EventBin, DEFAULT_BIN_DURATION_US};
use crate::encoder::{rasterize, Encoder, EncoderConfig, EventFrame, TokenSequence};
use crate::error::{Error, Result};
use crate::events::{EventStream, SensorGeometry};
use crate::intensity::{adjacent_distances, GridResolution, GridSpec, KernelParams};
use crate::spatial::{Sdga, SdgaDebug, DEFAULT_KEEP_RATIO};
use crate::temporal::{
    merge_stage1_with_distances, merge_stage2, windows_from_bins, Embedding, MergeConfig, MergeDecision, MetaWindow,
    DEFAULT_ALPHA, DEFAULT_SCORE_THRESHOLD,
};

pub const DEFAULT_TAU_PERCENTILE: f64 = 25.0;

/// How stage 1's threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSetting {
    Fixed(f64),
    /// Calibrate on the input's adjacent-bin distances at this percentile.
    Percentile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub bin_duration_us: u64,
    /// `None` derives the kernel from the bin duration.
    pub kernel: Option<KernelParams>,
    pub grid: GridResolution,
    pub tau: TauSetting,
    pub alpha: f64,
    pub score_threshold: f64,
    pub max_window_span_us: Option<u64>,
    pub target_windows: Option<usize>,
    pub encoder: EncoderConfig,
    pub rho: f64,
    /// Seed for the density encoder and the pruning attention projections.
    pub sdga_seed: u64,
    pub temporal_on: bool,
    pub spatial_on: bool,
    /// Expected sensor geometry; checked against the stream when set.
    pub geometry: Option<SensorGeometry>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bin_duration_us: DEFAULT_BIN_DURATION_US,
            kernel: None,
            grid: GridResolution::default(),
            tau: TauSetting::Percentile(DEFAULT_TAU_PERCENTILE),
            alpha: DEFAULT_ALPHA,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            max_window_span_us: None,
            target_windows: None,
            encoder: EncoderConfig::default(),
            rho: DEFAULT_KEEP_RATIO,
            sdga_seed: 7,
            temporal_on: true,
            spatial_on: true,
            geometry: None,
        }
    }
}

impl PipelineConfig {
    pub fn kernel(&self) -> KernelParams {
        self.kernel
            .unwrap_or_else(|| KernelParams::for_bin_duration(self.bin_duration_us))
    }

    pub fn grid_for(&self, geometry: SensorGeometry) -> GridSpec {
        self.grid.over(geometry, self.bin_duration_us)
    }

    pub fn merge_config(&self, tau: f64) -> MergeConfig {
        MergeConfig {
            tau,
            alpha: self.alpha,
            score_threshold: self.score_threshold,
            max_window_span: self.max_window_span_us,
            target_windows: self.target_windows,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_duration_us == 0 {
            return Err(Error::usage("bin duration must be positive"));
        }
        self.kernel().validate()?;
        GridResolution::new(self.grid.nx, self.grid.ny, self.grid.nt)?;
        match self.tau {
            TauSetting::Fixed(t) => self.merge_config(t).validate()?,
            TauSetting::Percentile(p) => {
                if !(0.0..=100.0).contains(&p) {
                    return Err(Error::usage(format!("percentile must lie in [0, 100], got {p}")));
                }
                self.merge_config(1.0).validate()?;
            }
        }
        self.encoder.validate()?;
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::usage(format!("keep ratio must lie in (0, 1], got {}", self.rho)));
        }
        Ok(())
    }
}

/// Stage wall times in milliseconds and the pipeline's token emission rate.
/// Everything here varies run to run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub segment_ms: f64,
    pub temporal_ms: f64,
    pub encode_ms: f64,
    pub spatial_ms: f64,
    pub total_ms: f64,
    /// Kept tokens emitted per second of pipeline wall time. This is not an
    /// LLM decoding rate.
    pub pipeline_tokens_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub events: usize,
    pub bins_in: usize,
    pub stage1_windows: usize,
    pub windows_out: usize,
    pub tokens_in: usize,
    pub tokens_out: usize,
    pub temporal_reduction: f64,
    pub spatial_reduction: f64,
    pub temporal_on: bool,
    pub spatial_on: bool,
    pub bin_duration_us: u64,
    pub alpha: f64,
    pub rho: f64,
    /// Stage-1 threshold actually used, when the temporal stage ran.
    pub tau: Option<f64>,
    pub timings: StageTimings,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Kept tokens of one output window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTokens {
    pub window_id: usize,
    pub first_bin: usize,
    pub last_bin: usize,
    pub t_start: u64,
    pub t_end: u64,
    pub event_count: usize,
    pub kept_indices: Vec<usize>,
    /// `k × d`, rows aligned with `kept_indices`.
    pub tokens: Array2<f64>,
}

#[derive(Serialize)]
struct TokenLine<'a> {
    window_id: usize,
    t_start: u64,
    t_end: u64,
    first_bin: usize,
    last_bin: usize,
    event_count: usize,
    kept_indices: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<Vec<f64>>>,
}

/// One JSON object per window; `include_vectors = false` drops token values.
pub fn write_tokens<W: Write>(w: &mut W, windows: &[WindowTokens], include_vectors: bool) -> std::io::Result<()> {
    for win in windows {
        let line = TokenLine {
            window_id: win.window_id,
            t_start: win.t_start,
            t_end: win.t_end,
            first_bin: win.first_bin,
            last_bin: win.last_bin,
            event_count: win.event_count,
            kept_indices: &win.kept_indices,
            tokens: include_vectors.then(|| win.tokens.rows().into_iter().map(|r| r.to_vec()).collect()),
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub windows: Vec<WindowTokens>,
    pub report: EfficiencyReport,
    pub trace: Vec<MergeDecision>,
    /// Per-window pruning internals; empty when the spatial stage is off.
    pub sdga_debug: Vec<SdgaDebug>,
}

/// Encoder output plus the stage-2 embedding: the CLS vector minus the CLS
/// of an empty frame. The seeded encoder's CLS is dominated by a
/// content-independent component; removing it leaves the part that responds
/// to the window's events.
struct EncodedWindow {
    tokens: TokenSequence,
    embedding: Vec<f64>,
}

impl EncodedWindow {
    fn new(tokens: TokenSequence, baseline: &Array1<f64>) -> Self {
        let embedding = (&tokens.cls - baseline).to_vec();
        Self { tokens, embedding }
    }
}

impl Embedding for EncodedWindow {
    fn vector(&self) -> &[f64] {
        &self.embedding
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Kept indices and their token rows for one window.
type Selected = (Vec<usize>, Array2<f64>);

pub fn run_pipeline(stream: &EventStream, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let geometry = stream.geometry();
    if let Some(expected) = config.geometry {
        if expected != geometry {
            return Err(Error::usage(format!(
                "stream is {}x{} but the pipeline expects {}x{}",
                geometry.width, geometry.height, expected.width, expected.height
            )));
        }
    }
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let bins = segment_into_bins(stream, config.bin_duration_us)?;
    timings.segment_ms = ms_since(t);

    let encoder = Encoder::new(config.encoder)?;
    let baseline = encoder.encode(&EventFrame::zeros(geometry)).cls;
    let encode = |w: &MetaWindow| EncodedWindow::new(encoder.encode(&rasterize(w, geometry)), &baseline);

    let t = Instant::now();
    let mut trace = Vec::new();
    let mut tau_used = None;
    let (windows, sequences, stage1_windows) = if config.temporal_on && !bins.is_empty() {
        let kernel = config.kernel();
        let grid = config.grid_for(geometry);
        let distances = adjacent_distances(&bins, &kernel, &grid);
        let tau = match config.tau {
            TauSetting::Fixed(t) => t,
            TauSetting::Percentile(p) => suggest_tau(&distances, p),
        };
        tau_used = Some(tau);
        let merge = config.merge_config(tau);
        let s1 = merge_stage1_with_distances(&bins, &distances, &merge)?;
        let stage1_windows = s1.windows.len();
        trace.extend(s1.trace);
        let s2 = merge_stage2(s1.windows, encode, &merge)?;
        trace.extend(s2.trace);
        timings.temporal_ms = ms_since(t);
        let seqs = s2.embeddings.into_iter().map(|e| e.tokens).collect();
        (s2.windows, seqs, stage1_windows)
    } else {
        let windows = windows_from_bins(&bins);
        let t = Instant::now();
        let seqs: Vec<TokenSequence> = windows.par_iter().map(|w| encode(w).tokens).collect();
        timings.encode_ms = ms_since(t);
        let n = windows.len();
        (windows, seqs, n)
    };

    let t = Instant::now();
    let tokens_in: usize = sequences.iter().map(TokenSequence::len).sum();
    let (selected, sdga_debug): (Vec<Selected>, Vec<SdgaDebug>) = if config.spatial_on {
        let sdga = Sdga::seeded(
            HeadConfig::new(config.encoder.embed_dim, config.encoder.heads)?,
            config.rho,
            config.sdga_seed,
        )?;
        let results = windows
            .par_iter()
            .zip(sequences.par_iter())
            .map(|(w, seq)| sdga.apply(w, seq))
            .collect::<Result<Vec<_>>>()?;
        results
            .into_iter()
            .map(|(sel, dbg)| ((sel.kept_indices, sel.outputs), dbg))
            .unzip()
    } else {
        let all = sequences
            .into_iter()
            .map(|seq| ((0..seq.len()).collect(), seq.patches))
            .collect();
        (all, Vec::new())
    };
    timings.spatial_ms = if config.spatial_on { ms_since(t) } else { 0.0 };

    let out_windows: Vec<WindowTokens> = windows
        .iter()
        .zip(selected)
        .enumerate()
        .map(|(id, (w, (kept_indices, tokens)))| WindowTokens {
            window_id: id,
            first_bin: w.first_bin,
            last_bin: w.last_bin,
            t_start: w.t_start,
            t_end: w.t_end,
            event_count: w.event_count(),
            kept_indices,
            tokens,
        })
        .collect();
    let tokens_out: usize = out_windows.iter().map(|w| w.kept_indices.len()).sum();
    timings.total_ms = ms_since(start);
    timings.pipeline_tokens_per_second = if timings.total_ms > 0.0 {
        tokens_out as f64 / (timings.total_ms / 1e3)
    } else {
        0.0
    };

    let report = EfficiencyReport {
        events: stream.len(),
        bins_in: bins.len(),
        stage1_windows,
        windows_out: out_windows.len(),
        tokens_in,
        tokens_out,
        temporal_reduction: ratio(bins.len(), out_windows.len()),
        spatial_reduction: ratio(tokens_in, tokens_out),
        temporal_on: config.temporal_on,
        spatial_on: config.spatial_on,
        bin_duration_us: config.bin_duration_us,
        alpha: config.alpha,
        rho: config.rho,
        tau: tau_used,
        timings,
    };
    Ok(PipelineOutput {
        windows: out_windows,
        report,
        trace,
        sdga_debug,
    })
}

/// Nearest-rank percentile of `values` (which need not be sorted).
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Threshold just above the `pct`-th percentile distance, so that pair and
/// every closer one merges under the strict `d < tau` rule. Always > 0.
pub fn suggest_tau(distances: &[f64], pct: f64) -> f64 {
    if distances.is_empty() {
        return f64::MIN_POSITIVE;
    }
    let d = percentile(distances, pct);
    d * (1.0 + 1e-9) + 1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSuggestion {
    pub tau: f64,
    pub percentile: f64,
    pub distance_at_percentile: f64,
    pub pairs: usize,
    pub min_distance: f64,
    pub median_distance: f64,
    pub max_distance: f64,
}

/// Samples every adjacent-bin distance of the stream and suggests a `tau`.
pub fn calibrate_tau(
    stream: &EventStream,
    bin_duration_us: u64,
    kernel: &KernelParams,
    grid: GridResolution,
    pct: f64,
) -> Result<TauSuggestion> {
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::usage(format!("percentile must lie in [0, 100], got {pct}")));
    }
    kernel.validate()?;
    let bins: Vec<EventBin> = segment_into_bins(stream, bin_duration_us)?;
    if bins.len() < 2 {
        return Err(Error::usage(format!(
            "need at least two bins to calibrate, stream yields {}",
            bins.len()
        )));
    }
    let spec = grid.over(stream.geometry(), bin_duration_us);
    let d = adjacent_distances(&bins, kernel, &spec);
    Ok(TauSuggestion {
        tau: suggest_tau(&d, pct),
        percentile: pct,
        distance_at_percentile: percentile(&d, pct),
        pairs: d.len(),
        min_distance: percentile(&d, 0.0),
        median_distance: percentile(&d, 50.0),
        max_distance: percentile(&d, 100.0),
    })
}
