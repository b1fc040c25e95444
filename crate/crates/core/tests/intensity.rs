mod common;

use common::{brute_field, l2, random_bin, rng};
use evsparse_core::{
    bin_distance, intensity_at, intensity_field, segment_into_bins, Event, EventBin, EventStream, GridResolution,
    KernelParams, Polarity, SensorGeometry,
};
use proptest::prelude::*;

const W: u16 = 24;
const H: u16 = 18;
const DUR: u64 = 10_000;

fn setup(nx: usize, ny: usize, nt: usize) -> (KernelParams, evsparse_core::GridSpec) {
    let kernel = KernelParams::for_bin_duration(DUR);
    let geometry = SensorGeometry::new(W.into(), H.into()).unwrap();
    (kernel, GridResolution::new(nx, ny, nt).unwrap().over(geometry, DUR))
}

#[test]
fn field_matches_brute_force_untruncated() {
    let (kernel, grid) = setup(8, 8, 4);
    let mut r = rng(1);
    for _ in 0..100 {
        let bin = random_bin(&mut r, 100, W, H, DUR);
        let got = intensity_field(&bin, &kernel, &grid);
        let want = brute_field(&bin, 2.0, 2.0, DUR as f64 / 4.0, (8, 8, 4), W as f64, H as f64);
        for (g, w) in got.values.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9, "{g} vs {w}");
        }
    }
}

#[test]
fn truncated_field_within_1e6() {
    let (kernel, grid) = setup(16, 16, 8);
    let kernel = kernel.truncated(evsparse_core::intensity::DEFAULT_TRUNCATION_SIGMAS);
    let mut r = rng(2);
    for _ in 0..50 {
        let bin = random_bin(&mut r, 100, W, H, DUR);
        let got = intensity_field(&bin, &kernel, &grid);
        let want = brute_field(&bin, 2.0, 2.0, DUR as f64 / 4.0, (16, 16, 8), W as f64, H as f64);
        for (g, w) in got.values.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-6, "{g} vs {w}");
        }
    }
}

#[test]
fn point_evaluation_matches_field_samples() {
    let (kernel, grid) = setup(8, 8, 4);
    let mut r = rng(3);
    let bin = random_bin(&mut r, 40, W, H, DUR);
    let field = intensity_field(&bin, &kernel, &grid);
    for i in 0..8 {
        for j in 0..8 {
            for k in 0..4 {
                let p = grid.sample_point(i, j, k, bin.t_start);
                assert!((intensity_at(&bin, &kernel, p) - field.at(i, j, k)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn single_event_at_its_own_location_is_one() {
    let kernel = KernelParams::new(2.0, 2.0, 2500.0).unwrap();
    let bin = EventBin::new(0, 0, DUR, vec![Event::new(500, 7, 9, Polarity::On)]);
    assert_eq!(intensity_at(&bin, &kernel, (7.0, 9.0, 500.0)), 1.0);
    let off = EventBin::new(0, 0, DUR, vec![Event::new(500, 7, 9, Polarity::Off)]);
    assert_eq!(intensity_at(&off, &kernel, (7.0, 9.0, 500.0)), -1.0);
    let empty = EventBin::new(0, 0, DUR, vec![]);
    assert_eq!(intensity_at(&empty, &kernel, (7.0, 9.0, 500.0)), 0.0);
}

#[test]
fn distance_examples() {
    let (kernel, grid) = setup(8, 8, 4);
    let mut r = rng(4);
    let a = random_bin(&mut r, 20, W, H, DUR);
    assert_eq!(bin_distance(&a, &a, &kernel, &grid), 0.0);

    let one = EventBin::new(0, 0, DUR, vec![Event::new(2500, 5, 5, Polarity::On)]);
    let empty = EventBin::new(1, DUR, 2 * DUR, vec![]);
    let norm = intensity_field(&one, &kernel, &grid).norm();
    assert_eq!(bin_distance(&one, &empty, &kernel, &grid), norm);

    for _ in 0..20 {
        let mut a = random_bin(&mut r, 0, W, H, DUR);
        let mut b = random_bin(&mut r, 0, W, H, DUR);
        a.events = common::random_events(&mut r, 20, W, H, a.t_start, DUR);
        b.events = common::random_events(&mut r, 20, W, H, b.t_start, DUR);
        let fa = brute_field(&a, 2.0, 2.0, 2500.0, (8, 8, 4), W as f64, H as f64);
        let fb = brute_field(&b, 2.0, 2.0, 2500.0, (8, 8, 4), W as f64, H as f64);
        assert!((bin_distance(&a, &b, &kernel, &grid) - l2(&fa, &fb)).abs() <= 1e-9);
    }
}

#[test]
fn shifted_copies_have_zero_distance() {
    let (kernel, grid) = setup(8, 8, 4);
    let mut r = rng(5);
    let a = random_bin(&mut r, 30, W, H, DUR);
    let shift = 7 * DUR;
    let b = EventBin::new(
        9,
        a.t_start + shift,
        a.t_end + shift,
        a.events.iter().map(|e| Event { t: e.t + shift, ..*e }).collect(),
    );
    assert_eq!(bin_distance(&a, &b, &kernel, &grid), 0.0);
}

fn arb_bin(max: usize) -> impl Strategy<Value = EventBin> {
    (any::<u64>(), 0..=max).prop_map(|(seed, n)| {
        let mut r = rng(seed);
        let t0 = DUR * (seed % 4);
        EventBin::new(0, t0, t0 + DUR, common::random_events(&mut r, n, W, H, t0, DUR))
    })
}

fn union(a: &EventBin, b: &EventBin) -> EventBin {
    let shift = |e: &Event, from: u64| Event { t: e.t - from, ..*e };
    let mut events: Vec<Event> = a.events.iter().map(|e| shift(e, a.t_start)).collect();
    events.extend(b.events.iter().map(|e| shift(e, b.t_start)));
    events.sort_by_key(|e| e.t);
    EventBin::new(0, 0, DUR, events)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_is_linear_in_the_event_set(a in arb_bin(40), b in arb_bin(40)) {
        let (kernel, grid) = setup(8, 8, 4);
        let fa = intensity_field(&a, &kernel, &grid);
        let fb = intensity_field(&b, &kernel, &grid);
        let fu = intensity_field(&union(&a, &b), &kernel, &grid);
        for ((u, x), y) in fu.values.iter().zip(&fa.values).zip(&fb.values) {
            prop_assert!((u - (x + y)).abs() <= 1e-9);
        }
    }

    #[test]
    fn flipping_polarity_negates_the_field(a in arb_bin(60)) {
        let (kernel, grid) = setup(8, 8, 4);
        let flipped = EventBin::new(
            a.index,
            a.t_start,
            a.t_end,
            a.events.iter().map(|e| Event { p: e.p.flipped(), ..*e }).collect(),
        );
        let f = intensity_field(&a, &kernel, &grid);
        let g = intensity_field(&flipped, &kernel, &grid);
        for (x, y) in f.values.iter().zip(&g.values) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn distance_is_a_metric(a in arb_bin(30), b in arb_bin(30), c in arb_bin(30)) {
        let (kernel, grid) = setup(8, 8, 4);
        let ab = bin_distance(&a, &b, &kernel, &grid);
        let ba = bin_distance(&b, &a, &kernel, &grid);
        let bc = bin_distance(&b, &c, &kernel, &grid);
        let ac = bin_distance(&a, &c, &kernel, &grid);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn fields_are_bit_identical_across_calls(a in arb_bin(60)) {
        let (kernel, grid) = setup(8, 8, 4);
        let f = intensity_field(&a, &kernel, &grid);
        let g = intensity_field(&a.clone(), &kernel, &grid);
        prop_assert_eq!(f, g);
    }

    #[test]
    fn binning_partitions_the_stream(seed in any::<u64>(), n in 0usize..300, bin in 1u64..20_000) {
        let mut r = rng(seed);
        let events = common::random_events(&mut r, n, W, H, 1_000, 100_000);
        let stream = EventStream::new(SensorGeometry::new(W.into(), H.into()).unwrap(), events.clone()).unwrap();
        let bins = segment_into_bins(&stream, bin).unwrap();
        let flat: Vec<Event> = bins.iter().flat_map(|b| b.events.iter().copied()).collect();
        prop_assert_eq!(flat, events);
        for (i, b) in bins.iter().enumerate() {
            prop_assert_eq!(b.index, i);
            prop_assert_eq!(b.t_end - b.t_start, bin);
            prop_assert!(b.events.iter().all(|e| e.t >= b.t_start && e.t < b.t_end));
        }
        prop_assert!(bins.windows(2).all(|w| w[0].t_end == w[1].t_start));
    }
}
