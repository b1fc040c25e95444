//! Small numeric kernels shared by the encoder and the density-guided
//! attention.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact GELU, `0.5·u·(1 + erf(u/√2))`.
#[inline]
pub fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + libm::erf(u / std::f64::consts::SQRT_2))
}

/// Numerically stable softmax of each row, in place.
pub fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Row-wise layer norm with affine parameters; eps 1e-5.
pub fn layer_norm(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let d = row.len() as f64;
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gamma).zip(beta) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    out
}

pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let (aa, bb) = (a.dot(&a), b.dot(&b));
    if aa < 1e-24 || bb < 1e-24 {
        return 0.0;
    }
    (a.dot(&b) / (aa * bb).sqrt()).clamp(-1.0, 1.0)
}

/// Deterministic weight source. Draw order is part of the model definition:
/// changing it changes every seeded weight.
pub struct WeightRng(ChaCha8Rng);

impl WeightRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.random_range(lo..hi)
    }

    /// `rows × cols` matrix, uniform in `±sqrt(3 / rows)` (unit-variance
    /// activations for unit-variance inputs).
    pub fn matrix(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        let a = (3.0 / rows as f64).sqrt();
        Array2::from_shape_simple_fn((rows, cols), || self.uniform(-a, a))
    }

    pub fn vector(&mut self, len: usize, scale: f64) -> Array1<f64> {
        Array1::from_shape_simple_fn(len, || self.uniform(-scale, scale))
    }
}
