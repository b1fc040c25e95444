//! Spatiotemporal token sparsification for event-camera streams.
//!
//! The pipeline cuts a stream into fixed bins, merges runs of similar bins
//! into windows (first by intensity-field distance, then by a
//! density-attenuated embedding similarity), encodes each window into patch
//! tokens, and prunes the tokens that receive the least density-modulated
//! attention.

pub mod ablation;
pub mod attention;
pub mod binning;
pub mod encoder;
pub mod error;
pub mod events;
pub mod intensity;
pub mod io;
pub mod numerics;
pub mod pipeline;
pub mod probe;
pub mod spatial;
pub mod synth;
pub mod temporal;

pub use ablation::{run_ablation, AblationRow, AblationTable, Sweep};
pub use binning::{segment_into_bins, EventBin};
pub use encoder::{rasterize, Encoder, EncoderConfig, EventFrame, PatchLayout, PixelRect, TokenSequence};
pub use error::{Error, Result};
pub use events::{Event, EventStream, Polarity, SensorGeometry};
pub use intensity::{
    bin_distance, intensity_at, intensity_field, GridResolution, GridSpec, IntensityField, KernelParams,
};
pub use io::{load_events, save_events, EventFormat};
pub use pipeline::{calibrate_tau, run_pipeline, EfficiencyReport, PipelineConfig, PipelineOutput, TauSetting};
pub use probe::{capacity_probe, ProbeReport};
pub use spatial::{
    density_encode, modulated_attention, sdga, token_density, token_selector, DensityEncoder, DensityMap, Sdga,
    SelectionResult,
};
pub use synth::{generate_synthetic, SyntheticKind, SyntheticSpec};
pub use temporal::{
    density_factor, merge_stage1, merge_stage2, merging_score, window_similarity, MergeConfig, MergeDecision,
    MetaWindow,
};
