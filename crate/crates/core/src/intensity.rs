//! Polarity-weighted Gaussian intensity field of a bin and the L2 distance
//! between sampled fields.
//!
//! A bin is read as a point process with intensity
//! `λ(x, y, t) = Σ_n p_n · exp(-(x-x_n)²/2σx² - (y-y_n)²/2σy² - (t-t_n)²/2σt²)`.
//! Fields are sampled on a uniform lattice whose time axis is relative to the
//! bin's own start, so two bins holding the same relative events produce
//! bit-identical fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::EventBin;
use crate::error::{Error, Result};
use crate::events::SensorGeometry;

/// Cut-off radius (in σ units) used by [`KernelParams::truncated`].
pub const DEFAULT_TRUNCATION_SIGMAS: f64 = 6.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Microseconds.
    pub sigma_t: f64,
    /// Skip event/sample pairs whose normalised distance exceeds this many σ.
    /// `None` evaluates every pair.
    #[serde(default)]
    pub truncate_at: Option<f64>,
}

impl KernelParams {
    pub fn new(sigma_x: f64, sigma_y: f64, sigma_t: f64) -> Result<Self> {
        for (name, v) in [("sigma_x", sigma_x), ("sigma_y", sigma_y), ("sigma_t", sigma_t)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::usage(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self {
            sigma_x,
            sigma_y,
            sigma_t,
            truncate_at: None,
        })
    }

    /// 2 px spatial blur and a quarter-bin of temporal blur.
    pub fn for_bin_duration(bin_duration_us: u64) -> Self {
        Self {
            sigma_x: 2.0,
            sigma_y: 2.0,
            sigma_t: bin_duration_us as f64 / 4.0,
            truncate_at: None,
        }
    }

    pub fn truncated(self, sigmas: f64) -> Self {
        Self {
            truncate_at: Some(sigmas),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.sigma_x, self.sigma_y, self.sigma_t)?;
        match self.truncate_at {
            Some(c) if c.is_nan() || c <= 0.0 => {
                Err(Error::usage(format!("truncation radius must be positive, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

/// Samples per axis; the extents come from the sensor and the bin duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridResolution {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
}

impl Default for GridResolution {
    fn default() -> Self {
        Self { nx: 16, ny: 16, nt: 8 }
    }
}

impl GridResolution {
    pub fn new(nx: usize, ny: usize, nt: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nt == 0 {
            return Err(Error::usage(format!("grid axes must be >= 1, got {nx}x{ny}x{nt}")));
        }
        Ok(Self { nx, ny, nt })
    }

    pub fn over(self, geometry: SensorGeometry, duration_us: u64) -> GridSpec {
        GridSpec {
            nx: self.nx,
            ny: self.ny,
            nt: self.nt,
            width: f64::from(geometry.width),
            height: f64::from(geometry.height),
            duration: duration_us as f64,
        }
    }
}

/// Axis-uniform sample lattice over `width × height × duration`. Samples sit
/// at cell centres; pixel `x` has its centre at coordinate `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub width: f64,
    pub height: f64,
    /// Microseconds, measured from the bin start.
    pub duration: f64,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn xs(&self) -> Vec<f64> {
        axis(self.nx, self.width, -0.5)
    }

    pub fn ys(&self) -> Vec<f64> {
        axis(self.ny, self.height, -0.5)
    }

    /// Sample times relative to the bin start.
    pub fn ts(&self) -> Vec<f64> {
        axis(self.nt, self.duration, 0.0)
    }

    #[inline]
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nt + k
    }

    /// Absolute sample point `(x, y, t)` for a bin starting at `t_start`.
    pub fn sample_point(&self, i: usize, j: usize, k: usize, t_start: u64) -> (f64, f64, f64) {
        let x = (i as f64 + 0.5) * self.width / self.nx as f64 - 0.5;
        let y = (j as f64 + 0.5) * self.height / self.ny as f64 - 0.5;
        let t = (k as f64 + 0.5) * self.duration / self.nt as f64;
        (x, y, t_start as f64 + t)
    }
}

fn axis(n: usize, extent: f64, shift: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) * extent / n as f64 + shift).collect()
}

/// Intensity sampled on a [`GridSpec`], stored `[i][j][k]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl IntensityField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.flat_index(i, j, k)]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unweighted L2 norm of the sample-wise difference.
    pub fn distance(&self, other: &IntensityField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::usage(format!(
                "cannot compare fields on different grids ({:?} vs {:?})",
                self.grid, other.grid
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// Point evaluation at an absolute `(x, y, t)`. Never truncates.
pub fn intensity_at(bin: &EventBin, kernel: &KernelParams, point: (f64, f64, f64)) -> f64 {
    let (x, y, t) = point;
    let (cx, cy, ct) = inv_two_sigma_sq(kernel);
    bin.events
        .iter()
        .map(|e| {
            let dx = x - f64::from(e.x);
            let dy = y - f64::from(e.y);
            let dt = t - e.t as f64;
            e.p.weight() * (-(dx * dx * cx) - dy * dy * cy - dt * dt * ct).exp()
        })
        .sum()
}

fn inv_two_sigma_sq(k: &KernelParams) -> (f64, f64, f64) {
    (
        1.0 / (2.0 * k.sigma_x * k.sigma_x),
        1.0 / (2.0 * k.sigma_y * k.sigma_y),
        1.0 / (2.0 * k.sigma_t * k.sigma_t),
    )
}

/// Samples the bin's field on `grid`, with times taken relative to
/// `bin.t_start`.
///
/// The Gaussian factorises per axis, so each event contributes an outer
/// product of three 1-D profiles. Contributions are accumulated in event
/// order at every sample point.
pub fn intensity_field(bin: &EventBin, kernel: &KernelParams, grid: &GridSpec) -> IntensityField {
    let mut field = IntensityField::zeros(*grid);
    let (xs, ys, ts) = (grid.xs(), grid.ys(), grid.ts());
    let (cx, cy, ct) = inv_two_sigma_sq(kernel);
    let cutoff_sq = kernel.truncate_at.map(|c| c * c / 2.0);

    let mut qx = vec![0.0; grid.nx];
    let mut qy = vec![0.0; grid.ny];
    let mut qt = vec![0.0; grid.nt];
    let mut gx = vec![0.0; grid.nx];
    let mut gy = vec![0.0; grid.ny];
    let mut gt = vec![0.0; grid.nt];

    for e in &bin.events {
        let (ex, ey, et) = (f64::from(e.x), f64::from(e.y), (e.t - bin.t_start) as f64);
        profile(&xs, ex, cx, &mut qx, &mut gx);
        profile(&ys, ey, cy, &mut qy, &mut gy);
        profile(&ts, et, ct, &mut qt, &mut gt);
        let w = e.p.weight();
        for i in 0..grid.nx {
            let a = w * gx[i];
            for j in 0..grid.ny {
                let b = a * gy[j];
                let base = grid.flat_index(i, j, 0);
                let row = &mut field.values[base..base + grid.nt];
                match cutoff_sq {
                    None => {
                        for (v, g) in row.iter_mut().zip(&gt) {
                            *v += b * g;
                        }
                    }
                    Some(limit) => {
                        let qxy = qx[i] + qy[j];
                        if qxy > limit {
                            continue;
                        }
                        for k in 0..grid.nt {
                            if qxy + qt[k] <= limit {
                                row[k] += b * gt[k];
                            }
                        }
                    }
                }
            }
        }
    }
    field
}

fn profile(samples: &[f64], centre: f64, c: f64, q: &mut [f64], g: &mut [f64]) {
    for ((s, q), g) in samples.iter().zip(q.iter_mut()).zip(g.iter_mut()) {
        let d = s - centre;
        *q = d * d * c;
        *g = (-*q).exp();
    }
}

/// L2 distance between the two bins' fields on a shared grid.
pub fn bin_distance(a: &EventBin, b: &EventBin, kernel: &KernelParams, grid: &GridSpec) -> f64 {
    intensity_field(a, kernel, grid)
        .distance(&intensity_field(b, kernel, grid))
        .expect("fields sampled on the same grid")
}

/// `d[i] = distance(bins[i], bins[i + 1])`. Fields are evaluated in parallel;
/// each distance is computed on one thread, so the result does not depend on
/// the pool size.
pub fn adjacent_distances(bins: &[EventBin], kernel: &KernelParams, grid: &GridSpec) -> Vec<f64> {
    let fields: Vec<IntensityField> = bins.par_iter().map(|b| intensity_field(b, kernel, grid)).collect();
    fields
        .windows(2)
        .map(|w| w[0].distance(&w[1]).expect("shared grid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{Event, Polarity};

    fn bin(events: Vec<Event>) -> EventBin {
        EventBin::new(0, 0, 100, events)
    }

    #[test]
    fn point_at_event_is_one() {
        let b = bin(vec![Event::new(0, 0, 0, Polarity::On)]);
        let k = KernelParams::new(3.0, 0.7, 11.0).unwrap();
        assert_eq!(intensity_at(&b, &k, (0.0, 0.0, 0.0)), 1.0);
        assert_eq!(intensity_at(&bin(vec![]), &k, (3.0, 1.0, 5.0)), 0.0);
    }

    #[test]
    fn unit_offset_gives_exp_minus_half() {
        let b = bin(vec![Event::new(0, 0, 0, Polarity::On)]);
        let k = KernelParams::new(1.0, 1.0, 1.0).unwrap();
        let v = intensity_at(&b, &k, (1.0, 0.0, 0.0));
        assert!((v - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn empty_bin_field_is_zero() {
        let g = GridResolution::default().over(SensorGeometry::new(32, 32).unwrap(), 100);
        let f = intensity_field(&bin(vec![]), &KernelParams::for_bin_duration(100), &g);
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert_eq!(f.values.len(), 16 * 16 * 8);
    }

    #[test]
    fn self_distance_zero_and_vs_empty_is_norm() {
        let g = GridResolution::new(8, 8, 4)
            .unwrap()
            .over(SensorGeometry::new(16, 16).unwrap(), 100);
        let k = KernelParams::for_bin_duration(100);
        let a = bin(vec![Event::new(10, 3, 4, Polarity::On)]);
        assert_eq!(bin_distance(&a, &a, &k, &g), 0.0);
        let d = bin_distance(&a, &bin(vec![]), &k, &g);
        assert!((d - intensity_field(&a, &k, &g).norm()).abs() < 1e-12);
    }

    #[test]
    fn time_shift_is_invisible() {
        let g = GridResolution::new(4, 4, 4)
            .unwrap()
            .over(SensorGeometry::new(8, 8).unwrap(), 100);
        let k = KernelParams::for_bin_duration(100);
        let a = EventBin::new(0, 0, 100, vec![Event::new(13, 2, 2, Polarity::Off)]);
        let b = EventBin::new(7, 700, 800, vec![Event::new(713, 2, 2, Polarity::Off)]);
        assert_eq!(intensity_field(&a, &k, &g), intensity_field(&b, &k, &g));
    }

    #[test]
    fn mismatched_grids_rejected() {
        let geo = SensorGeometry::new(8, 8).unwrap();
        let a = IntensityField::zeros(GridResolution::new(2, 2, 2).unwrap().over(geo, 10));
        let b = IntensityField::zeros(GridResolution::new(2, 2, 3).unwrap().over(geo, 10));
        assert!(matches!(a.distance(&b), Err(Error::Usage(_))));
    }

    #[test]
    fn kernel_validation() {
        assert!(KernelParams::new(0.0, 1.0, 1.0).is_err());
        assert!(KernelParams::new(1.0, f64::NAN, 1.0).is_err());
        assert!(KernelParams::for_bin_duration(10).truncated(-1.0).validate().is_err());
    }
}
