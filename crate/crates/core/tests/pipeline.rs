mod common;

use common::{random_events, rng};
use evsparse_core::ablation::{run_ablation, Sweep};
use evsparse_core::intensity::adjacent_distances;
use evsparse_core::pipeline::{percentile, suggest_tau, write_tokens, TauSetting};
use evsparse_core::{
    calibrate_tau, capacity_probe, generate_synthetic, run_pipeline, segment_into_bins, Error, EventStream,
    GridResolution, KernelParams, PipelineConfig, SensorGeometry, SyntheticKind, SyntheticSpec,
};
use proptest::prelude::*;

fn synth(kind: SyntheticKind, duration_ms: u64, seed: u64) -> EventStream {
    generate_synthetic(&SyntheticSpec::new(kind, duration_ms * 1_000, seed)).unwrap()
}

fn small_config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.encoder.embed_dim = 32;
    c.encoder.layers = 1;
    c
}

#[test]
fn both_stages_off_reduce_nothing() {
    let s = synth(SyntheticKind::TwoPhase, 100, 1);
    let cfg = PipelineConfig {
        temporal_on: false,
        spatial_on: false,
        ..small_config()
    };
    let out = run_pipeline(&s, &cfg).unwrap();
    let r = &out.report;
    assert_eq!((r.temporal_reduction, r.spatial_reduction), (1.0, 1.0));
    assert_eq!(r.windows_out, r.bins_in);
    assert_eq!(r.tokens_out, r.tokens_in);
    assert!(out.trace.is_empty() && out.sdga_debug.is_empty());
    assert_eq!(r.tau, None);
}

#[test]
fn static_scene_collapses_to_one_window() {
    let s = synth(SyntheticKind::StaticScene, 100, 1);
    let out = run_pipeline(&s, &small_config()).unwrap();
    assert_eq!(out.report.bins_in, 10);
    assert_eq!(out.report.stage1_windows, 1);
    assert_eq!(out.report.windows_out, 1);
    assert_eq!(out.report.temporal_reduction, 10.0);
}

#[test]
fn keep_ratio_quarter_of_64_tokens_keeps_16() {
    let s = synth(SyntheticKind::StaticScene, 10, 1);
    let cfg = PipelineConfig {
        rho: 0.25,
        ..small_config()
    };
    let out = run_pipeline(&s, &cfg).unwrap();
    assert_eq!(out.report.tokens_in, 64);
    assert_eq!(out.report.tokens_out, 16);
    assert_eq!(out.windows[0].tokens.nrows(), 16);
}

#[test]
fn two_phase_splits_at_the_phase_boundary() {
    for seed in 0..10 {
        let s = synth(SyntheticKind::TwoPhase, 100, seed);
        let cfg = small_config();
        let bins = segment_into_bins(&s, cfg.bin_duration_us).unwrap();
        assert_eq!(bins.len(), 10);
        let d = adjacent_distances(&bins, &cfg.kernel(), &cfg.grid_for(s.geometry()));
        // Largest gap in the sorted distances separates the two populations.
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        let (gap_at, _) = sorted
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i, w[1] - w[0]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let tau = 0.5 * (sorted[gap_at] + sorted[gap_at + 1]);
        let out = run_pipeline(
            &s,
            &PipelineConfig {
                tau: TauSetting::Fixed(tau),
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(out.report.stage1_windows, 2, "seed {seed}, distances {d:?}");
        let splits: Vec<usize> = out
            .trace
            .iter()
            .filter(|t| t.stage == 1 && !t.merged)
            .map(|t| t.right_index)
            .collect();
        assert_eq!(splits, vec![5], "seed {seed}");
    }
}

#[test]
fn report_is_identical_across_thread_pools() {
    let s = synth(SyntheticKind::TwoPhase, 200, 3);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_pipeline(&s, &small_config()).unwrap())
    };
    let (a, b) = (run(1), run(8));
    let strip = |mut r: evsparse_core::EfficiencyReport| {
        r.timings = Default::default();
        r
    };
    assert_eq!(strip(a.report), strip(b.report));
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.sdga_debug, b.sdga_debug);
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    write_tokens(&mut ta, &a.windows, true).unwrap();
    write_tokens(&mut tb, &b.windows, true).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn geometry_mismatch_is_a_usage_error() {
    let s = synth(SyntheticKind::StaticScene, 20, 1);
    let cfg = PipelineConfig {
        geometry: Some(SensorGeometry::new(64, 64).unwrap()),
        ..small_config()
    };
    assert!(matches!(run_pipeline(&s, &cfg), Err(Error::Usage(_))));
}

#[test]
fn empty_stream_yields_empty_report() {
    let s = EventStream::empty(SensorGeometry::new(32, 32).unwrap());
    let out = run_pipeline(&s, &small_config()).unwrap();
    assert_eq!(
        (out.report.bins_in, out.report.windows_out, out.report.tokens_out),
        (0, 0, 0)
    );
    assert_eq!(out.report.temporal_reduction, 1.0);
}

#[test]
fn tau_helpers() {
    assert_eq!(percentile(&[3.0, 1.0, 2.0, 4.0], 25.0), 1.0);
    assert_eq!(percentile(&[3.0, 1.0, 2.0, 4.0], 50.0), 2.0);
    assert_eq!(percentile(&[3.0, 1.0, 2.0, 4.0], 100.0), 4.0);
    let t = suggest_tau(&[0.0, 0.0, 5.0], 50.0);
    assert!(t > 0.0 && t < 1e-9);
    let s = synth(SyntheticKind::TwoPhase, 100, 1);
    let k = KernelParams::for_bin_duration(10_000);
    let g = GridResolution::default();
    let low = calibrate_tau(&s, 10_000, &k, g, 10.0).unwrap();
    let high = calibrate_tau(&s, 10_000, &k, g, 90.0).unwrap();
    assert_eq!(low.pairs, 9);
    assert!(low.tau <= high.tau);
    assert!(high.max_distance >= high.median_distance && high.median_distance >= high.min_distance);
    let short = synth(SyntheticKind::StaticScene, 5, 1);
    assert!(matches!(
        calibrate_tau(&short, 10_000, &k, g, 25.0),
        Err(Error::Usage(_))
    ));
}

#[test]
fn interval_sweep_on_static_scene_is_non_increasing() {
    let s = synth(SyntheticKind::StaticScene, 600, 1);
    let table = run_ablation(&s, &small_config(), Sweep::Interval, None).unwrap();
    let r: Vec<f64> = table.rows.iter().map(|row| row.report.temporal_reduction).collect();
    assert_eq!(r.len(), 4);
    assert!(r.windows(2).all(|w| w[1] <= w[0]), "{r:?}");
}

#[test]
fn component_sweep_has_four_rows_and_respects_toggles() {
    let s = synth(SyntheticKind::TwoPhase, 100, 1);
    let table = run_ablation(&s, &small_config(), Sweep::Components, None).unwrap();
    assert_eq!(table.rows.len(), 4);
    for row in &table.rows {
        let r = &row.report;
        if !r.temporal_on {
            assert_eq!(r.temporal_reduction, 1.0);
        }
        if !r.spatial_on {
            assert_eq!(r.spatial_reduction, 1.0);
        }
    }
    assert!(run_ablation(&s, &small_config(), Sweep::Components, Some(&[1.0])).is_err());
    let csv = table.to_csv();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn probe_examples() {
    let cfg = small_config();
    let ok = capacity_probe(10, &cfg, 7, 4 << 30).unwrap();
    assert!(ok.success);
    assert_eq!(ok.bins_processed, 10);
    assert!(matches!(capacity_probe(0, &cfg, 7, 4 << 30), Err(Error::Usage(_))));
    let starved = capacity_probe(10, &cfg, 7, 1024).unwrap();
    assert!(!starved.success);
    assert_eq!(starved.failed_at_bins, Some(10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn report_consistency(seed in any::<u64>(), n in 0usize..1500, rho in 0.05f64..=1.0, alpha in 0.0f64..1.0,
                          temporal in any::<bool>(), spatial in any::<bool>(), pct in 0.0f64..=100.0) {
        let mut r = rng(seed);
        let events = random_events(&mut r, n, 40, 30, 0, 60_000);
        let s = EventStream::new(SensorGeometry::new(40, 30).unwrap(), events).unwrap();
        let cfg = PipelineConfig {
            rho, alpha, temporal_on: temporal, spatial_on: spatial, tau: TauSetting::Percentile(pct),
            ..small_config()
        };
        let out = run_pipeline(&s, &cfg).unwrap();
        let rep = &out.report;
        prop_assert!(rep.tokens_out <= rep.tokens_in);
        prop_assert!(rep.windows_out <= rep.stage1_windows && rep.stage1_windows <= rep.bins_in);
        prop_assert!(rep.temporal_reduction >= 1.0 && rep.spatial_reduction >= 1.0);
        if !temporal { prop_assert_eq!(rep.temporal_reduction, 1.0); }
        if !spatial { prop_assert_eq!(rep.spatial_reduction, 1.0); }
        prop_assert_eq!(out.windows.iter().map(|w| w.event_count).sum::<usize>(), n);
        prop_assert!(out.windows.windows(2).all(|w| w[0].last_bin + 1 == w[1].first_bin));
    }

    #[test]
    fn synthetic_streams_are_reproducible(kind in prop::sample::select(SyntheticKind::ALL.to_vec()), seed in any::<u64>()) {
        let spec = SyntheticSpec::new(kind, 50_000, seed);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        prop_assert_eq!(a.events(), b.events());
        prop_assert!(a.events().iter().all(|e| e.t < 50_000));
        prop_assert!(!a.was_resorted());
    }
}

#[test]
fn poisson_count_is_within_five_sigma() {
    for seed in 0..5 {
        let mut spec = SyntheticSpec::new(SyntheticKind::PoissonNoise, 2_000_000, seed);
        spec.rate = 5_000.0;
        let n = generate_synthetic(&spec).unwrap().len() as f64;
        let mean = spec.rate * 2.0;
        assert!(
            (n - mean).abs() <= 5.0 * mean.sqrt(),
            "seed {seed}: {n} events, expected {mean}"
        );
    }
}
