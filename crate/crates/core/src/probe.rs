//! Long-stream capacity probe.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoder::PatchLayout;
use crate::error::{Error, Result};
use crate::events::Event;
use crate::pipeline::{run_pipeline, EfficiencyReport, PipelineConfig};
use crate::synth::{generate_synthetic, SyntheticKind, SyntheticSpec};

pub const DEFAULT_MEMORY_BUDGET_BYTES: u64 = 4 << 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub bins_requested: usize,
    pub bins_processed: usize,
    pub events: usize,
    pub success: bool,
    /// Bin count at which the probe failed, if it did.
    pub failed_at_bins: Option<usize>,
    pub failure: Option<String>,
    pub memory_budget_bytes: u64,
    pub estimated_peak_bytes: u64,
    /// Process high-water mark (Linux `VmHWM`) after the run, if available.
    pub measured_peak_rss_bytes: Option<u64>,
    pub wall_ms: f64,
    pub report: Option<EfficiencyReport>,
}

/// Rough estimate of the pipeline's live data for `bins` bins.
pub fn estimate_peak_bytes(config: &PipelineConfig, spec: &SyntheticSpec, bins: usize, events: usize) -> u64 {
    let layout = PatchLayout::new(
        spec.geometry.width as usize,
        spec.geometry.height as usize,
        config.encoder.patch_size,
    );
    let n = layout.len() as u64 + 1;
    let d = config.encoder.embed_dim as u64;
    let bins = bins as u64;
    let grid = (config.grid.nx * config.grid.ny * config.grid.nt) as u64;
    let events = events as u64 * std::mem::size_of::<Event>() as u64;
    let fields = if config.temporal_on { bins * grid * 8 } else { 0 };
    let frames = spec.geometry.pixels() as u64 * 8;
    // token sequences, plus one worker's encoder scratch (activations, 4d MLP
    // and n×n attention per head). Independent of the pool size so reports
    // match across thread counts.
    let tokens = bins * n * d * 8;
    let scratch = n * d * 8 * 8 + n * n * 8 * (config.encoder.heads as u64 + 1) + frames;
    3 * events + fields + tokens + scratch
}

fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Runs the pipeline on a `two_phase` stream of exactly `max_bins` bins.
/// Budget overruns and panics become a failed report; only invalid arguments
/// are returned as errors.
pub fn capacity_probe(max_bins: usize, config: &PipelineConfig, seed: u64, budget_bytes: u64) -> Result<ProbeReport> {
    if max_bins == 0 {
        return Err(Error::usage("probe needs at least one bin"));
    }
    config.validate()?;
    let start = Instant::now();
    let spec = SyntheticSpec::new(SyntheticKind::TwoPhase, max_bins as u64 * config.bin_duration_us, seed);
    let stream = generate_synthetic(&spec)?;
    let estimated = estimate_peak_bytes(config, &spec, max_bins, stream.len());

    let mut report = ProbeReport {
        bins_requested: max_bins,
        bins_processed: 0,
        events: stream.len(),
        success: false,
        failed_at_bins: None,
        failure: None,
        memory_budget_bytes: budget_bytes,
        estimated_peak_bytes: estimated,
        measured_peak_rss_bytes: None,
        wall_ms: 0.0,
        report: None,
    };

    let outcome = if estimated > budget_bytes {
        Err(Error::Resource(format!(
            "estimated {estimated} bytes exceeds budget of {budget_bytes}"
        )))
    } else {
        catch_unwind(AssertUnwindSafe(|| run_pipeline(&stream, config))).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "pipeline panicked".into());
            Err(Error::Resource(msg))
        })
    };
    match outcome {
        Ok(out) => {
            report.bins_processed = out.report.bins_in;
            report.success = out.report.bins_in == max_bins;
            if !report.success {
                report.failed_at_bins = Some(max_bins);
                report.failure = Some(format!("stream produced {} bins", out.report.bins_in));
            }
            report.report = Some(out.report);
        }
        Err(e) => {
            report.failed_at_bins = Some(max_bins);
            report.failure = Some(match e {
                Error::Resource(msg) => msg,
                other => other.to_string(),
            });
        }
    }
    report.measured_peak_rss_bytes = peak_rss_bytes();
    if let Some(rss) = report.measured_peak_rss_bytes {
        if report.success && rss > budget_bytes {
            report.success = false;
            report.failed_at_bins = Some(max_bins);
            report.failure = Some(format!("peak RSS {rss} bytes exceeds budget of {budget_bytes}"));
        }
    }
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}
