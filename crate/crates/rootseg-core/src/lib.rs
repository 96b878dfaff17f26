//! rootseg-core — segmenting and quantifying plant roots in soil images.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! 1. **imagecore** – pixel containers, mirror padding, tile planning,
//!    extraction/assembly and binarization.
//! 2. **synthdata** – deterministic synthetic root scenes with exact
//!    ground-truth masks.
//! 3. **frangi** – multiscale Hessian vesselness baseline segmenter with
//!    connected-component denoising.
//! 4. **cmaes** – CMA-ES black-box minimizer used to tune the Frangi
//!    baseline against `1 - mean(F1)`.
//! 5. **augment** – input normalization, color jitter and elastic grid
//!    deformation.
//! 6. **net** – minimal U-Net (valid 3x3 convolutions, group norm after
//!    ReLU, learned up-convolutions) with forward and backward passes
//!    implemented from scratch.
//! 7. **train** – Dice + cross-entropy loss, SGD with Nesterov momentum,
//!    per-epoch instance selection, dataset split and the training loop.
//! 8. **analysis** – segmentation metrics, skeleton-based root length,
//!    line-intersect simulation and correlation statistics.
//! 9. **dataio** – PNG codecs, dataset manifests and image/mask pairing.

pub mod analysis;
pub mod augment;
pub mod cmaes;
pub mod dataio;
pub mod error;
pub mod frangi;
pub mod imagecore;
pub mod net;
pub mod rng;
pub mod synthdata;
pub mod train;

pub use error::{Error, Result};
pub use imagecore::{RasterImage, TileSpec};
