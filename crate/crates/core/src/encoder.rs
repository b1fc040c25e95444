//! Deterministic toy patch encoder.
//!
//! A window is rasterised into ON/OFF count images, cut into `P × P` patches
//! (zero-padded on the bottom/right), linearly projected after `log1p`
//! scaling, given sinusoidal positions, and passed with a CLS token through
//! `L` pre-norm transformer blocks. All weights come from a seeded ChaCha
//! stream, so a given `(frame, config)` always yields the same tokens.

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::{HeadConfig, MultiHeadAttention};
use crate::error::{Error, Result};
use crate::events::{Polarity, SensorGeometry};
use crate::numerics::{gelu, layer_norm, WeightRng};
use crate::temporal::{Embedding, MetaWindow};

/// Per-pixel ON and OFF event counts, row-major (`y * width + x`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFrame {
    pub width: usize,
    pub height: usize,
    pub on: Vec<u32>,
    pub off: Vec<u32>,
}

impl EventFrame {
    pub fn zeros(geometry: SensorGeometry) -> Self {
        let n = geometry.pixels();
        Self {
            width: geometry.width as usize,
            height: geometry.height as usize,
            on: vec![0; n],
            off: vec![0; n],
        }
    }

    pub fn total(&self) -> u64 {
        self.on.iter().chain(&self.off).map(|&c| u64::from(c)).sum()
    }
}

pub fn rasterize(window: &MetaWindow, geometry: SensorGeometry) -> EventFrame {
    let mut frame = EventFrame::zeros(geometry);
    for e in &window.events {
        let idx = e.y as usize * frame.width + e.x as usize;
        match e.p {
            Polarity::On => frame.on[idx] += 1,
            Polarity::Off => frame.off[idx] += 1,
        }
    }
    frame
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            patch_size: 16,
            embed_dim: 64,
            heads: 4,
            layers: 2,
            seed: 42,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::usage("patch size must be positive"));
        }
        HeadConfig::new(self.embed_dim, self.heads)?;
        Ok(())
    }

    /// Short stable digest of the config, used to version golden snapshots.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "p{}-d{}-h{}-l{}-s{}",
            self.patch_size, self.embed_dim, self.heads, self.layers, self.seed
        ));
        h.finalize()[..6].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)` in the padded frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Raster-order patch grid: token `j` covers column `j % cols`, row `j / cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLayout {
    pub patch_size: usize,
    pub cols: usize,
    pub rows: usize,
}

impl PatchLayout {
    pub fn new(width: usize, height: usize, patch_size: usize) -> Self {
        Self {
            patch_size,
            cols: width.div_ceil(patch_size),
            rows: height.div_ceil(patch_size),
        }
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rect(&self, token: usize) -> PixelRect {
        let p = self.patch_size;
        let (cx, cy) = (token % self.cols, token / self.cols);
        PixelRect {
            x0: cx * p,
            y0: cy * p,
            x1: (cx + 1) * p,
            y1: (cy + 1) * p,
        }
    }

    pub fn token_at(&self, x: usize, y: usize) -> usize {
        (y / self.patch_size) * self.cols + x / self.patch_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub cls: Array1<f64>,
    /// `n × d`, one row per patch in layout order.
    pub patches: Array2<f64>,
    pub layout: PatchLayout,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.patches.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Embedding for TokenSequence {
    fn vector(&self) -> &[f64] {
        self.cls.as_slice().expect("cls is contiguous")
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln1: (Array1<f64>, Array1<f64>),
    attn: MultiHeadAttention,
    ln2: (Array1<f64>, Array1<f64>),
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl Block {
    fn forward(&self, x: &Array2<f64>, attn_log: Option<&mut Vec<Array2<f64>>>) -> Array2<f64> {
        let a = self.attn.forward(&layer_norm(x, &self.ln1.0, &self.ln1.1), None);
        if let Some(log) = attn_log {
            log.push(a.weights);
        }
        let h = x + &a.outputs;
        let mut hidden = layer_norm(&h, &self.ln2.0, &self.ln2.1).dot(&self.w1) + &self.b1;
        hidden.mapv_inplace(gelu);
        h + &(hidden.dot(&self.w2) + &self.b2)
    }
}

/// Immutable after construction; `encode` takes `&self` and is safe to call
/// from many threads.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    patch_proj: Array2<f64>,
    patch_bias: Array1<f64>,
    cls: Array1<f64>,
    blocks: Vec<Block>,
    final_norm: (Array1<f64>, Array1<f64>),
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let patch_len = 2 * config.patch_size * config.patch_size;
        let heads = HeadConfig::new(d, config.heads)?;
        let mut rng = WeightRng::new(config.seed);
        let ln = || (Array1::ones(d), Array1::zeros(d));

        let patch_proj = rng.matrix(patch_len, d);
        let patch_bias = rng.vector(d, 0.02);
        let cls = rng.vector(d, 1.0);
        let blocks = (0..config.layers)
            .map(|_| {
                let attn = MultiHeadAttention::seeded(heads, &mut rng);
                let w1 = rng.matrix(d, 4 * d);
                let b1 = rng.vector(4 * d, 0.02);
                let w2 = rng.matrix(4 * d, d);
                let b2 = rng.vector(d, 0.02);
                Block {
                    ln1: ln(),
                    attn,
                    ln2: ln(),
                    w1,
                    b1,
                    w2,
                    b2,
                }
            })
            .collect();
        Ok(Self {
            config,
            patch_proj,
            patch_bias,
            cls,
            blocks,
            final_norm: ln(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layout_for(&self, width: usize, height: usize) -> PatchLayout {
        PatchLayout::new(width, height, self.config.patch_size)
    }

    pub fn encode(&self, frame: &EventFrame) -> TokenSequence {
        self.run(frame, None)
    }

    /// Like [`encode`](Self::encode), also returning each block's
    /// head-averaged attention weights.
    pub fn encode_with_attention(&self, frame: &EventFrame) -> (TokenSequence, Vec<Array2<f64>>) {
        let mut log = Vec::with_capacity(self.blocks.len());
        let tokens = self.run(frame, Some(&mut log));
        (tokens, log)
    }

    fn run(&self, frame: &EventFrame, mut attn_log: Option<&mut Vec<Array2<f64>>>) -> TokenSequence {
        let layout = self.layout_for(frame.width, frame.height);
        let n = layout.len();
        let d = self.config.embed_dim;

        let patches = patchify(frame, &layout);
        let mut x = Array2::<f64>::zeros((n + 1, d));
        x.row_mut(0).assign(&self.cls);
        x.slice_mut(s![1.., ..])
            .assign(&(patches.dot(&self.patch_proj) + &self.patch_bias));
        x += &sinusoidal_positions(n + 1, d);

        for block in &self.blocks {
            x = block.forward(&x, attn_log.as_deref_mut());
        }
        let x = layer_norm(&x, &self.final_norm.0, &self.final_norm.1);
        TokenSequence {
            cls: x.row(0).to_owned(),
            patches: x.slice(s![1.., ..]).to_owned(),
            layout,
        }
    }
}

/// `n × 2P²` matrix of log1p counts; each row is the ON patch then the OFF
/// patch, both row-major. Pixels beyond the frame are zero.
fn patchify(frame: &EventFrame, layout: &PatchLayout) -> Array2<f64> {
    let p = layout.patch_size;
    let mut out = Array2::<f64>::zeros((layout.len(), 2 * p * p));
    for (token, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let r = layout.rect(token);
        for y in r.y0..r.y1.min(frame.height) {
            for x in r.x0..r.x1.min(frame.width) {
                let src = y * frame.width + x;
                let dst = (y - r.y0) * p + (x - r.x0);
                row[dst] = f64::from(frame.on[src]).ln_1p();
                row[p * p + dst] = f64::from(frame.off[src]).ln_1p();
            }
        }
    }
    out
}

fn sinusoidal_positions(len: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, dim), |(pos, i)| {
        let freq = 10_000f64.powf(-((i - i % 2) as f64) / dim as f64);
        let angle = pos as f64 * freq;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
