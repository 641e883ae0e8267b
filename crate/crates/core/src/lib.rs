//! Hyperspectral light-field (H-LF) stereo matching.
//!
//! Every view of an H-LF samples a different narrow spectral band, so the
//! usual brightness-constancy matching costs break down. This crate provides:
//!
//! * [`descriptor`]: a spectral-invariant pyramid descriptor built from
//!   overlapping gradient-magnitude/direction histograms,
//! * [`metric`]: NCC and the bidirectional weighted NCC (BWNCC) over
//!   descriptor fields,
//! * [`mrf`]: max-flow / min-cut and alpha-expansion,
//! * [`pairwise`]: two-view cross-spectral matching with occlusion and
//!   uniqueness handling,
//! * [`stereo`]: central-view disparity from the correspondence and
//!   spectral-aware defocus cues,
//! * [`completion`]: plenoptic cube completion (every band at every view),
//! * [`render`]: color-sensor emulation and spectral refocusing,
//! * [`bench`]: procedural scenes, synthetic H-LF rendering and metrics.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod completion;
pub mod config;
pub mod descriptor;
pub mod error;
pub mod metric;
pub mod model;
pub mod mrf;
pub mod pairwise;
pub mod render;
pub mod stereo;

pub use config::Config;
pub use error::{HlfError, Result};
pub use model::{
    CameraSpectralResponse, DisparityMap, HyperspectralLightField, RgbImage, SpectralBand,
    SpectralImage, ViewIndex,
};
