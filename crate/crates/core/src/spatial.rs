//! Density-guided attention and token pruning.
//!
//! Each patch token gets the number of window events inside its rectangle.
//! Max-normalised densities pass through `GELU(w·D + b)` and the result is
//! added to every query's attention logit for that key. Tokens are then
//! ranked by the attention mass they receive and the top `⌈ρn⌉` survive.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionOutput, HeadConfig, MultiHeadAttention};
use crate::encoder::{PatchLayout, TokenSequence};
use crate::error::{Error, Result};
use crate::numerics::{gelu, WeightRng};
use crate::temporal::MetaWindow;

pub const DEFAULT_KEEP_RATIO: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMap {
    pub raw: Vec<u64>,
    /// `raw / max(raw)`; all zeros when the window is empty.
    pub normalized: Vec<f64>,
}

pub fn token_density(window: &MetaWindow, layout: &PatchLayout) -> DensityMap {
    let mut raw = vec![0u64; layout.len()];
    for e in &window.events {
        raw[layout.token_at(e.x as usize, e.y as usize)] += 1;
    }
    let max = raw.iter().copied().max().unwrap_or(0);
    let normalized = if max == 0 {
        vec![0.0; raw.len()]
    } else {
        raw.iter().map(|&c| c as f64 / max as f64).collect()
    };
    DensityMap { raw, normalized }
}

/// Scalar linear map followed by GELU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEncoder {
    pub weight: f64,
    pub bias: f64,
}

impl DensityEncoder {
    pub fn new(weight: f64, bias: f64) -> Result<Self> {
        if !weight.is_finite() || !bias.is_finite() {
            return Err(Error::usage("density encoder parameters must be finite"));
        }
        Ok(Self { weight, bias })
    }

    /// Weight in `[0.5, 2)` so denser patches always attract more attention;
    /// bias in `[-0.25, 0.25)`.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = WeightRng::new(seed);
        Self {
            weight: rng.uniform(0.5, 2.0),
            bias: rng.uniform(-0.25, 0.25),
        }
    }

    pub fn apply(&self, density: f64) -> f64 {
        gelu(self.weight * density + self.bias)
    }
}

pub fn density_encode(density: &DensityMap, enc: &DensityEncoder) -> Array1<f64> {
    density.normalized.iter().map(|&d| enc.apply(d)).collect()
}

/// Attention over patch tokens with `f` added along the key axis for every
/// query and head.
pub fn modulated_attention(tokens: &Array2<f64>, f: &Array1<f64>, attention: &MultiHeadAttention) -> AttentionOutput {
    attention.forward(tokens, Some(f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Strictly increasing.
    pub kept_indices: Vec<usize>,
    /// `k × d`, rows aligned with `kept_indices`.
    pub outputs: Array2<f64>,
    /// Attention mass received by each of the `n` tokens.
    pub importance: Array1<f64>,
}

/// `⌈ρn⌉`, robust to `ρ·n` landing a rounding error above an integer.
pub fn keep_count(n: usize, rho: f64) -> usize {
    let exact = rho * n as f64;
    let k = (exact - exact.abs() * 1e-12).ceil() as usize;
    k.clamp(1.min(n), n)
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::usage(format!("keep ratio must lie in (0, 1], got {rho}")))
    }
}

/// Keeps the `⌈ρn⌉` tokens with the largest column sums of `weights`
/// (lower index wins ties), returned in original order.
pub fn token_selector(outputs: &Array2<f64>, weights: &Array2<f64>, rho: f64) -> Result<SelectionResult> {
    check_rho(rho)?;
    let n = weights.ncols();
    if outputs.nrows() != n || weights.nrows() != n {
        return Err(Error::usage(format!(
            "selector shapes disagree: outputs {:?}, weights {:?}",
            outputs.dim(),
            weights.dim()
        )));
    }
    let importance = weights.sum_axis(Axis(0));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    let mut kept_indices = order[..keep_count(n, rho)].to_vec();
    kept_indices.sort_unstable();
    let outputs = outputs.select(Axis(0), &kept_indices);
    Ok(SelectionResult {
        kept_indices,
        outputs,
        importance,
    })
}

/// Intermediate values of one SDGA pass, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdgaDebug {
    pub density_raw: Vec<u64>,
    pub density_normalized: Vec<f64>,
    pub modulation: Vec<f64>,
    pub importance: Vec<f64>,
    pub kept_indices: Vec<usize>,
}

/// Density encoder, attention projections and keep ratio.
#[derive(Debug, Clone)]
pub struct Sdga {
    pub density: DensityEncoder,
    pub attention: MultiHeadAttention,
    pub rho: f64,
}

impl Sdga {
    pub fn new(density: DensityEncoder, attention: MultiHeadAttention, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(Self {
            density,
            attention,
            rho,
        })
    }

    /// Density encoder and projections drawn from `seed`.
    pub fn seeded(heads: HeadConfig, rho: f64, seed: u64) -> Result<Self> {
        let mut rng = WeightRng::new(seed ^ 0x5d6a_0000_0000_0001);
        let attention = MultiHeadAttention::seeded(heads, &mut rng);
        Self::new(DensityEncoder::seeded(seed), attention, rho)
    }

    pub fn apply(&self, window: &MetaWindow, tokens: &TokenSequence) -> Result<(SelectionResult, SdgaDebug)> {
        let density = token_density(window, &tokens.layout);
        let f = density_encode(&density, &self.density);
        let att = modulated_attention(&tokens.patches, &f, &self.attention);
        let sel = token_selector(&att.outputs, &att.weights, self.rho)?;
        let debug = SdgaDebug {
            density_raw: density.raw,
            density_normalized: density.normalized,
            modulation: f.to_vec(),
            importance: sel.importance.to_vec(),
            kept_indices: sel.kept_indices.clone(),
        };
        Ok((sel, debug))
    }
}

/// density → encoding → modulated attention → selection.
pub fn sdga(
    window: &MetaWindow,
    tokens: &TokenSequence,
    enc: &DensityEncoder,
    attention: &MultiHeadAttention,
    rho: f64,
) -> Result<SelectionResult> {
    check_rho(rho)?;
    let density = token_density(window, &tokens.layout);
    let f = density_encode(&density, enc);
    let att = modulated_attention(&tokens.patches, &f, attention);
    token_selector(&att.outputs, &att.weights, rho)
}
