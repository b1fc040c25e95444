//! Ablation sweeps over stage toggles, bin duration and density decay.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::pipeline::{run_pipeline, EfficiencyReport, PipelineConfig};

/// Bin durations of the interval sweep, milliseconds.
pub const INTERVAL_GRID_MS: [f64; 4] = [5.0, 10.0, 20.0, 30.0];
pub const ALPHA_GRID: [f64; 4] = [0.1, 0.2, 0.4, 0.6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// temporal/spatial stages off/off, on/off, off/on, on/on.
    Components,
    Interval,
    Alpha,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "components" => Ok(Sweep::Components),
            "interval" => Ok(Sweep::Interval),
            "alpha" => Ok(Sweep::Alpha),
            other => Err(Error::usage(format!("unknown sweep '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub report: EfficiencyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub sweep: Sweep,
    pub rows: Vec<AblationRow>,
}

fn configs(base: &PipelineConfig, sweep: Sweep, values: Option<&[f64]>) -> Result<Vec<(String, PipelineConfig)>> {
    Ok(match sweep {
        Sweep::Components => {
            if values.is_some() {
                return Err(Error::usage("the components sweep takes no values"));
            }
            [(false, false), (true, false), (false, true), (true, true)]
                .into_iter()
                .map(|(t, s)| {
                    let label = format!(
                        "temporal={},spatial={}",
                        if t { "on" } else { "off" },
                        if s { "on" } else { "off" }
                    );
                    let cfg = PipelineConfig {
                        temporal_on: t,
                        spatial_on: s,
                        ..*base
                    };
                    (label, cfg)
                })
                .collect()
        }
        Sweep::Interval => values
            .unwrap_or(&INTERVAL_GRID_MS)
            .iter()
            .map(|&ms| {
                if ms.is_nan() || ms <= 0.0 {
                    return Err(Error::usage(format!("bin duration must be positive, got {ms} ms")));
                }
                let cfg = PipelineConfig {
                    bin_duration_us: (ms * 1e3).round() as u64,
                    ..*base
                };
                Ok((format!("bin={ms}ms"), cfg))
            })
            .collect::<Result<_>>()?,
        Sweep::Alpha => values
            .unwrap_or(&ALPHA_GRID)
            .iter()
            .map(|&alpha| {
                let cfg = PipelineConfig { alpha, ..*base };
                (format!("alpha={alpha}"), cfg)
            })
            .collect(),
    })
}

/// One pipeline run per configuration of the sweep. `values` overrides the
/// default grid of the interval (ms) and alpha sweeps.
pub fn run_ablation(
    stream: &EventStream,
    base: &PipelineConfig,
    sweep: Sweep,
    values: Option<&[f64]>,
) -> Result<AblationTable> {
    let rows = configs(base, sweep, values)?
        .into_iter()
        .map(|(label, cfg)| {
            let report = run_pipeline(stream, &cfg)?.report;
            Ok(AblationRow { label, report })
        })
        .collect::<Result<_>>()?;
    Ok(AblationTable { sweep, rows })
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "label,temporal_on,spatial_on,bin_ms,alpha,tau,bins_in,stage1_windows,windows_out,tokens_in,tokens_out,\
             temporal_reduction,spatial_reduction,segment_ms,temporal_ms,encode_ms,spatial_ms,total_ms,\
             pipeline_tokens_per_second\n",
        );
        for row in &self.rows {
            let r = &row.report;
            let t = &r.timings;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.3},{:.3},{:.3},{:.3},{:.3},{:.1}",
                row.label.replace(',', ";"),
                r.temporal_on,
                r.spatial_on,
                r.bin_duration_us as f64 / 1e3,
                r.alpha,
                r.tau.map(|v| format!("{v:e}")).unwrap_or_default(),
                r.bins_in,
                r.stage1_windows,
                r.windows_out,
                r.tokens_in,
                r.tokens_out,
                r.temporal_reduction,
                r.spatial_reduction,
                t.segment_ms,
                t.temporal_ms,
                t.encode_ms,
                t.spatial_ms,
                t.total_ms,
                t.pipeline_tokens_per_second,
            );
        }
        out
    }
}
