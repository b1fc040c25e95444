//! Adaptive temporal window aggregation.
//!
//! Stage 1 greedily merges adjacent bins whose intensity fields are closer
//! than `tau`. Stage 2 repeatedly merges the adjacent pair of windows with
//! the highest density-attenuated cosine score `S · exp(-alpha · r)`.

use std::io::Write;

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::EventBin;
use crate::error::{Error, Result};
use crate::events::Event;
use crate::intensity::{adjacent_distances, GridSpec, KernelParams};
use crate::numerics::cosine;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.85;

/// A contiguous run of bins `first_bin..=last_bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaWindow {
    pub first_bin: usize,
    pub last_bin: usize,
    pub t_start: u64,
    pub t_end: u64,
    pub events: Vec<Event>,
    pub source_count: usize,
}

impl MetaWindow {
    pub fn from_bin(bin: &EventBin) -> Self {
        Self {
            first_bin: bin.index,
            last_bin: bin.index,
            t_start: bin.t_start,
            t_end: bin.t_end,
            events: bin.events.clone(),
            source_count: 1,
        }
    }

    /// Concatenates `self` with the window immediately to its right.
    pub fn merged_with(&self, right: &MetaWindow) -> MetaWindow {
        debug_assert_eq!(self.last_bin + 1, right.first_bin);
        let mut events = Vec::with_capacity(self.events.len() + right.events.len());
        events.extend_from_slice(&self.events);
        events.extend_from_slice(&right.events);
        MetaWindow {
            first_bin: self.first_bin,
            last_bin: right.last_bin,
            t_start: self.t_start,
            t_end: right.t_end,
            events,
            source_count: self.source_count + right.source_count,
        }
    }

    fn absorb(&mut self, bin: &EventBin) {
        debug_assert_eq!(self.last_bin + 1, bin.index);
        self.last_bin = bin.index;
        self.t_end = bin.t_end;
        self.events.extend_from_slice(&bin.events);
        self.source_count += 1;
    }

    pub fn duration(&self) -> u64 {
        self.t_end - self.t_start
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// Treats the window as a single bin (e.g. to compare windows by field).
    pub fn as_bin(&self) -> EventBin {
        EventBin::new(self.first_bin, self.t_start, self.t_end, self.events.clone())
    }
}

/// One window per bin, no merging.
pub fn windows_from_bins(bins: &[EventBin]) -> Vec<MetaWindow> {
    bins.iter().map(MetaWindow::from_bin).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Stage-1 distance threshold; bins merge when strictly closer.
    pub tau: f64,
    pub alpha: f64,
    pub score_threshold: f64,
    /// Longest allowed window, microseconds. `None` is unbounded.
    pub max_window_span: Option<u64>,
    pub target_windows: Option<usize>,
}

impl MergeConfig {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            alpha: DEFAULT_ALPHA,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            max_window_span: None,
            target_windows: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::usage(format!("tau must be > 0, got {}", self.tau)));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::usage(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(-1.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::usage(format!(
                "score threshold must lie in [-1, 1], got {}",
                self.score_threshold
            )));
        }
        if self.max_window_span == Some(0) {
            return Err(Error::usage("max window span must be positive"));
        }
        Ok(())
    }

    fn span_allows(&self, t_start: u64, t_end: u64) -> bool {
        self.max_window_span.is_none_or(|max| t_end - t_start <= max)
    }
}

/// One merge decision. Stage 1 indexes bins; stage 2 indexes positions in
/// the window sequence as it stood when the decision was taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeDecision {
    pub stage: u8,
    pub left_index: usize,
    pub right_index: usize,
    pub metric_value: f64,
    pub merged: bool,
}

/// Writes one JSON object per line.
pub fn write_trace<W: Write>(w: &mut W, trace: &[MergeDecision]) -> std::io::Result<()> {
    for d in trace {
        serde_json::to_writer(&mut *w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Stage1Outcome {
    pub windows: Vec<MetaWindow>,
    pub trace: Vec<MergeDecision>,
}

/// Left-to-right greedy scan. The open window absorbs the next bin iff the
/// distance between its last bin and that bin is below `tau` and the span
/// limit allows it.
pub fn merge_stage1(
    bins: &[EventBin],
    kernel: &KernelParams,
    grid: &GridSpec,
    config: &MergeConfig,
) -> Result<Stage1Outcome> {
    kernel.validate()?;
    let distances = adjacent_distances(bins, kernel, grid);
    merge_stage1_with_distances(bins, &distances, config)
}

/// Stage 1 with `distances[i] = distance(bins[i], bins[i + 1])` supplied by
/// the caller.
pub fn merge_stage1_with_distances(
    bins: &[EventBin],
    distances: &[f64],
    config: &MergeConfig,
) -> Result<Stage1Outcome> {
    config.validate()?;
    let Some(first) = bins.first() else {
        return Ok(Stage1Outcome {
            windows: Vec::new(),
            trace: Vec::new(),
        });
    };
    if distances.len() + 1 != bins.len() {
        return Err(Error::usage(format!(
            "{} bins need {} adjacent distances, got {}",
            bins.len(),
            bins.len() - 1,
            distances.len()
        )));
    }
    if !bins
        .windows(2)
        .all(|w| w[0].t_end == w[1].t_start && w[0].index + 1 == w[1].index)
    {
        return Err(Error::usage("bins must be contiguous and ordered"));
    }

    let mut windows = Vec::new();
    let mut trace = Vec::with_capacity(distances.len());
    let mut open = MetaWindow::from_bin(first);
    for (bin, &d) in bins[1..].iter().zip(distances) {
        let merged = d < config.tau && config.span_allows(open.t_start, bin.t_end);
        trace.push(MergeDecision {
            stage: 1,
            left_index: bin.index - 1,
            right_index: bin.index,
            metric_value: d,
            merged,
        });
        if merged {
            open.absorb(bin);
        } else {
            windows.push(std::mem::replace(&mut open, MetaWindow::from_bin(bin)));
        }
    }
    windows.push(open);
    Ok(Stage1Outcome { windows, trace })
}

/// Cosine similarity; 0 when either vector has norm below 1e-12.
pub fn window_similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "embedding dimensions differ");
    cosine(ArrayView1::from(a), ArrayView1::from(b))
}

/// Event rate of each window normalised by the batch maximum. All-empty
/// batches give all zeros.
pub fn density_factor(windows: &[MetaWindow]) -> Vec<f64> {
    let rates: Vec<f64> = windows
        .iter()
        .map(|w| w.event_count() as f64 / w.duration() as f64)
        .collect();
    let max = rates.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return vec![0.0; windows.len()];
    }
    rates.into_iter().map(|r| r / max).collect()
}

/// `A = S · exp(-alpha · r)`.
#[inline]
pub fn merging_score(similarity: f64, density: f64, alpha: f64) -> f64 {
    similarity * (-alpha * density).exp()
}

/// Anything stage 2 can compare by cosine.
pub trait Embedding {
    fn vector(&self) -> &[f64];
}

impl Embedding for Vec<f64> {
    fn vector(&self) -> &[f64] {
        self
    }
}

#[derive(Debug, Clone)]
pub struct Stage2Outcome<T> {
    pub windows: Vec<MetaWindow>,
    /// `embeddings[i]` encodes `windows[i]`.
    pub embeddings: Vec<T>,
    pub trace: Vec<MergeDecision>,
}

/// Best-pair-first semantic merging.
///
/// Each round scores every adjacent pair `i, i+1` with
/// `merging_score(cos(z_i, z_{i+1}), r_i, alpha)`, where `r` is recomputed
/// over the current windows. The best pair (lowest index on ties) merges if
/// its score reaches `score_threshold`; the merged window is re-encoded.
/// Stops when no pair qualifies or `target_windows` is reached.
pub fn merge_stage2<T, F>(windows: Vec<MetaWindow>, encode: F, config: &MergeConfig) -> Result<Stage2Outcome<T>>
where
    T: Embedding + Send,
    F: Fn(&MetaWindow) -> T + Sync,
{
    config.validate()?;
    let mut windows = windows;
    let mut embeddings: Vec<T> = windows.par_iter().map(&encode).collect();
    let mut trace = Vec::new();

    loop {
        if windows.len() < 2 || config.target_windows.is_some_and(|t| windows.len() <= t) {
            break;
        }
        let r = density_factor(&windows);
        let mut best: Option<(usize, f64)> = None;
        for i in 0..windows.len() - 1 {
            if !config.span_allows(windows[i].t_start, windows[i + 1].t_end) {
                continue;
            }
            let s = window_similarity(embeddings[i].vector(), embeddings[i + 1].vector());
            let a = merging_score(s, r[i], config.alpha);
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
        let Some((i, score)) = best else { break };
        let merged = score >= config.score_threshold;
        trace.push(MergeDecision {
            stage: 2,
            left_index: i,
            right_index: i + 1,
            metric_value: score,
            merged,
        });
        if !merged {
            break;
        }
        let joined = windows[i].merged_with(&windows[i + 1]);
        embeddings[i] = encode(&joined);
        embeddings.remove(i + 1);
        windows[i] = joined;
        windows.remove(i + 1);
    }
    Ok(Stage2Outcome {
        windows,
        embeddings,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{Polarity, SensorGeometry};
    use crate::intensity::{bin_distance, GridResolution};

    fn pattern(t0: u64) -> Vec<Event> {
        vec![
            Event::new(t0 + 10, 3, 3, Polarity::On),
            Event::new(t0 + 40, 9, 12, Polarity::Off),
            Event::new(t0 + 70, 14, 1, Polarity::On),
        ]
    }

    fn bins(pats: &[bool]) -> Vec<EventBin> {
        pats.iter()
            .enumerate()
            .map(|(i, &dense)| {
                let t0 = i as u64 * 100;
                EventBin::new(i, t0, t0 + 100, if dense { pattern(t0) } else { vec![] })
            })
            .collect()
    }

    fn grid() -> GridSpec {
        GridResolution::new(8, 8, 4)
            .unwrap()
            .over(SensorGeometry::new(16, 16).unwrap(), 100)
    }

    #[test]
    fn identical_bins_collapse() {
        let k = KernelParams::for_bin_duration(100);
        let out = merge_stage1(&bins(&[true; 4]), &k, &grid(), &MergeConfig::new(1e-12)).unwrap();
        assert_eq!(out.windows.len(), 1);
        assert_eq!(out.windows[0].source_count, 4);
        assert_eq!(out.windows[0].event_count(), 12);
        assert!(out.trace.iter().all(|d| d.merged && d.metric_value == 0.0));
    }

    #[test]
    fn alternating_dense_empty_never_merges() {
        let k = KernelParams::for_bin_duration(100);
        let bs = bins(&[true, false, true, false, true]);
        let gap = bin_distance(&bs[0], &bs[1], &k, &grid());
        let out = merge_stage1(&bs, &k, &grid(), &MergeConfig::new(gap / 2.0)).unwrap();
        assert_eq!(out.windows.len(), 5);
        assert!(out.trace.iter().all(|d| !d.merged));
    }

    #[test]
    fn all_empty_is_one_window() {
        let k = KernelParams::for_bin_duration(100);
        let out = merge_stage1(&bins(&[false; 6]), &k, &grid(), &MergeConfig::new(0.5)).unwrap();
        assert_eq!(out.windows.len(), 1);
        assert!(merge_stage1(&[], &k, &grid(), &MergeConfig::new(0.5))
            .unwrap()
            .windows
            .is_empty());
    }

    #[test]
    fn span_limit_splits_runs() {
        let k = KernelParams::for_bin_duration(100);
        let mut cfg = MergeConfig::new(1.0);
        cfg.max_window_span = Some(200);
        let out = merge_stage1(&bins(&[false; 5]), &k, &grid(), &cfg).unwrap();
        let spans: Vec<(usize, usize)> = out.windows.iter().map(|w| (w.first_bin, w.last_bin)).collect();
        assert_eq!(spans, vec![(0, 1), (2, 3), (4, 4)]);
    }

    #[test]
    fn config_validation() {
        assert!(MergeConfig::new(0.0).validate().is_err());
        let mut c = MergeConfig::new(1.0);
        c.alpha = -0.1;
        assert!(c.validate().is_err());
        c.alpha = 0.1;
        c.score_threshold = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn density_factor_examples() {
        let w = |count: usize, dur: u64| MetaWindow {
            first_bin: 0,
            last_bin: 0,
            t_start: 0,
            t_end: dur,
            events: vec![Event::new(0, 0, 0, Polarity::On); count],
            source_count: 1,
        };
        assert_eq!(density_factor(&[w(100, 10), w(50, 10)]), vec![1.0, 0.5]);
        assert_eq!(density_factor(&[w(0, 10), w(0, 30)]), vec![0.0, 0.0]);
        assert_eq!(
            density_factor(&[w(30, 10_000), w(60, 10_000), w(90, 30_000)]),
            vec![0.5, 1.0, 0.5]
        );
    }

    #[test]
    fn merging_score_examples() {
        assert_eq!(merging_score(0.9, 0.7, 0.0), 0.9);
        assert_eq!(merging_score(0.9, 0.0, 0.1), 0.9);
        // 0.9 * exp(-0.05)
        assert!((merging_score(0.9, 0.5, 0.1) - 0.856_106_482_050_642_7).abs() < 1e-15);
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(window_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((window_similarity(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
        assert!((window_similarity(&[3.0, 4.0], &[4.0, 3.0]) - 0.96).abs() < 1e-15);
        assert_eq!(window_similarity(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn stage2_single_window_unchanged() {
        let ws = windows_from_bins(&bins(&[true]));
        let out = merge_stage2(ws.clone(), |_| vec![1.0, 0.0], &MergeConfig::new(1.0)).unwrap();
        assert_eq!(out.windows, ws);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn stage2_identical_empty_windows_merge() {
        let ws = windows_from_bins(&bins(&[false, false]));
        let mut cfg = MergeConfig::new(1.0);
        cfg.score_threshold = 1.0;
        let out = merge_stage2(ws, |_| vec![0.3, 0.4], &cfg).unwrap();
        assert_eq!(out.windows.len(), 1);
        assert_eq!(out.windows[0].source_count, 2);
    }

    #[test]
    fn stage2_respects_target() {
        let ws = windows_from_bins(&bins(&[false; 6]));
        let mut cfg = MergeConfig::new(1.0);
        cfg.target_windows = Some(4);
        let out = merge_stage2(ws, |_| vec![1.0], &cfg).unwrap();
        assert_eq!(out.windows.len(), 4);
        // ties resolve to the lowest index each round
        assert_eq!(out.windows[0].source_count, 3);
    }
}
