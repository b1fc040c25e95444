//! Seeded synthetic event workloads.

use std::f64::consts::TAU;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, EventStream, Polarity, SensorGeometry};

/// Dot speed for `moving_dot`, pixels per second.
pub const DOT_SPEED_PX_PER_S: f64 = 100.0;
pub const DOT_RADIUS_PX: f64 = 4.0;
/// Number of distinct emission points around the dot's rim.
const DOT_RIM_POINTS: u64 = 20;

const BURST_PERIOD_US: u64 = 100_000;
const BURST_LEN_US: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// One random pattern repeated every `period_us`.
    StaticScene,
    /// ON events on the rim of a dot moving at constant velocity, bouncing
    /// off the sensor edges. Events are emitted at a fixed interval and cycle
    /// through a fixed set of rim angles.
    MovingDot,
    /// Sparse background noise with a dense blob every 100 ms.
    Burst,
    /// Homogeneous Poisson process over the whole sensor.
    PoissonNoise,
    /// `static_scene` for the first half, `moving_dot` for the second.
    TwoPhase,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 5] = [
        SyntheticKind::StaticScene,
        SyntheticKind::MovingDot,
        SyntheticKind::Burst,
        SyntheticKind::PoissonNoise,
        SyntheticKind::TwoPhase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::StaticScene => "static_scene",
            SyntheticKind::MovingDot => "moving_dot",
            SyntheticKind::Burst => "burst",
            SyntheticKind::PoissonNoise => "poisson_noise",
            SyntheticKind::TwoPhase => "two_phase",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown synthetic kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub duration_us: u64,
    /// Mean events per second.
    pub rate: f64,
    pub geometry: SensorGeometry,
    pub seed: u64,
    /// Repetition period of `static_scene`.
    pub period_us: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, duration_us: u64, seed: u64) -> Self {
        Self {
            kind,
            duration_us,
            rate: 20_000.0,
            geometry: SensorGeometry {
                width: 128,
                height: 128,
            },
            seed,
            period_us: 5_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration_us == 0 {
            return Err(Error::usage("synthetic duration must be positive"));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::usage(format!("event rate must be positive, got {}", self.rate)));
        }
        if self.period_us == 0 {
            return Err(Error::usage("static period must be positive"));
        }
        SensorGeometry::new(self.geometry.width, self.geometry.height)?;
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<EventStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let events = match spec.kind {
        SyntheticKind::StaticScene => static_scene(spec, 0, spec.duration_us, &mut rng),
        SyntheticKind::MovingDot => moving_dot(spec, 0, spec.duration_us, &mut rng),
        SyntheticKind::Burst => burst(spec, &mut rng),
        SyntheticKind::PoissonNoise => poisson(spec.rate, 0, spec.duration_us, spec.geometry, &mut rng),
        SyntheticKind::TwoPhase => {
            let half = spec.duration_us / 2;
            let mut ev = static_scene(spec, 0, half, &mut rng);
            ev.extend(moving_dot(spec, half, spec.duration_us, &mut rng));
            ev
        }
    };
    EventStream::new(spec.geometry, events)
}

fn random_pixel(g: SensorGeometry, rng: &mut ChaCha8Rng) -> (u16, u16) {
    (
        rng.random_range(0..g.width) as u16,
        rng.random_range(0..g.height) as u16,
    )
}

fn random_polarity(rng: &mut ChaCha8Rng) -> Polarity {
    if rng.random_bool(0.5) {
        Polarity::On
    } else {
        Polarity::Off
    }
}

fn static_scene(spec: &SyntheticSpec, start: u64, end: u64, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let per_period = ((spec.rate * spec.period_us as f64 / 1e6).round() as usize).max(1);
    let mut pattern: Vec<(u64, u16, u16, Polarity)> = (0..per_period)
        .map(|i| {
            let dt = if i == 0 { 0 } else { rng.random_range(0..spec.period_us) };
            let (x, y) = random_pixel(spec.geometry, rng);
            (dt, x, y, random_polarity(rng))
        })
        .collect();
    pattern.sort_by_key(|p| p.0);

    let mut events = Vec::new();
    let mut t0 = start;
    while t0 < end {
        events.extend(
            pattern
                .iter()
                .map(|&(dt, x, y, p)| Event::new(t0 + dt, x, y, p))
                .filter(|e| e.t < end),
        );
        t0 += spec.period_us;
    }
    events
}

/// Reflects `v` into `[lo, hi]`.
fn bounce(v: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let m = (v - lo).rem_euclid(2.0 * span);
    lo + if m > span { 2.0 * span - m } else { m }
}

fn moving_dot(spec: &SyntheticSpec, start: u64, end: u64, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let g = spec.geometry;
    let (w, h) = (f64::from(g.width - 1), f64::from(g.height - 1));
    let r = DOT_RADIUS_PX.min(w / 2.0).min(h / 2.0);
    let cx0 = rng.random_range(r..=w - r);
    let cy0 = rng.random_range(r..=h - r);
    let heading = rng.random_range(0.0..TAU);
    let (vx, vy) = (
        DOT_SPEED_PX_PER_S * heading.cos() / 1e6,
        DOT_SPEED_PX_PER_S * heading.sin() / 1e6,
    );
    let interval = ((1e6 / spec.rate).round() as u64).max(1);

    let mut events = Vec::new();
    let mut t = start;
    let mut k = 0u64;
    while t < end {
        let elapsed = (t - start) as f64;
        let cx = bounce(cx0 + vx * elapsed, r, w - r);
        let cy = bounce(cy0 + vy * elapsed, r, h - r);
        let theta = TAU * (k % DOT_RIM_POINTS) as f64 / DOT_RIM_POINTS as f64;
        let x = (cx + r * theta.cos()).round().clamp(0.0, w) as u16;
        let y = (cy + r * theta.sin()).round().clamp(0.0, h) as u16;
        events.push(Event::new(t, x, y, Polarity::On));
        t += interval;
        k += 1;
    }
    events
}

fn poisson(rate: f64, start: u64, end: u64, g: SensorGeometry, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let gap = Exp::new(rate / 1e6).expect("positive rate");
    let mut events = Vec::new();
    let mut t = start as f64;
    loop {
        t += gap.sample(rng);
        if t >= end as f64 {
            break;
        }
        let (x, y) = random_pixel(g, rng);
        events.push(Event::new(t as u64, x, y, random_polarity(rng)));
    }
    events
}

fn burst(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let g = spec.geometry;
    let mut events = poisson(spec.rate * 0.1, 0, spec.duration_us, g, rng);
    let spread = Normal::new(0.0, 8.0).expect("valid sigma");
    let mut t0 = 0;
    while t0 < spec.duration_us {
        let end = (t0 + BURST_LEN_US).min(spec.duration_us);
        let (cx, cy) = random_pixel(g, rng);
        let blob = poisson(spec.rate * 2.0, t0, end, g, rng);
        events.extend(blob.into_iter().map(|e| {
            let x = (f64::from(cx) + spread.sample(rng))
                .round()
                .clamp(0.0, f64::from(g.width - 1));
            let y = (f64::from(cy) + spread.sample(rng))
                .round()
                .clamp(0.0, f64::from(g.height - 1));
            Event::new(e.t, x as u16, y as u16, e.p)
        }));
        t0 += BURST_PERIOD_US;
    }
    // the stream constructor sorts; keep generation order for equal stamps
    events.sort_by_key(|e| e.t);
    events
}
