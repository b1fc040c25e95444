//! Multi-head self-attention with an optional additive key bias.

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax_rows, WeightRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub dim: usize,
    pub heads: usize,
}

impl HeadConfig {
    pub fn new(dim: usize, heads: usize) -> Result<Self> {
        if dim == 0 || heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::usage(format!(
                "embedding dim {dim} must be a positive multiple of head count {heads}"
            )));
        }
        Ok(Self { dim, heads })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `n × d`, after the output projection.
    pub outputs: Array2<f64>,
    /// `n × n`, averaged over heads. Row `i` is query `i`.
    pub weights: Array2<f64>,
}

/// Projection weights are `d × d` and applied as `x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub config: HeadConfig,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn seeded(config: HeadConfig, rng: &mut WeightRng) -> Self {
        let d = config.dim;
        Self {
            config,
            wq: rng.matrix(d, d),
            wk: rng.matrix(d, d),
            wv: rng.matrix(d, d),
            wo: rng.matrix(d, d),
        }
    }

    /// Per head: `softmax(Q_h K_hᵀ / √d_k + bias_j) V_h`; heads are
    /// concatenated and projected by `wo`. `key_bias[j]` is added to every
    /// query's logit for key `j`.
    pub fn forward(&self, x: &Array2<f64>, key_bias: Option<&Array1<f64>>) -> AttentionOutput {
        let n = x.nrows();
        let dk = self.config.head_dim();
        if let Some(b) = key_bias {
            assert_eq!(b.len(), n, "key bias length must match token count");
        }
        let q = x.dot(&self.wq);
        let k = x.dot(&self.wk);
        let v = x.dot(&self.wv);
        let scale = 1.0 / (dk as f64).sqrt();

        let mut concat = Array2::<f64>::zeros((n, self.config.dim));
        let mut weights = Array2::<f64>::zeros((n, n));
        for h in 0..self.config.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let mut logits = q.slice(cols).dot(&k.slice(cols).t());
            logits.mapv_inplace(|v| v * scale);
            if let Some(b) = key_bias {
                logits += &b.view().insert_axis(Axis(0));
            }
            softmax_rows(&mut logits);
            concat.slice_mut(cols).assign(&logits.dot(&v.slice(cols)));
            weights += &logits;
        }
        weights.mapv_inplace(|w| w / self.config.heads as f64);
        AttentionOutput {
            outputs: concat.dot(&self.wo),
            weights,
        }
    }
}
