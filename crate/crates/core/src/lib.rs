//! Coarse-to-fine relighting and background harmonization for human images
//! and videos.
//!
//! The crate is organised around the stages of the pipeline:
//!
//! - [`sh`]: real spherical harmonics up to band 4 (25 coefficients), envmap
//!   projection, azimuthal rotation and irradiance convolution.
//! - [`imaging`]: linear-light pixel containers, PNG codecs, normal maps,
//!   masks, compositing and the `FLO1` flow format.
//! - [`pipeline`]: coarse shading, harmonization, the swappable fine-stage
//!   relighter, lighting reversion and guided refinement.
//! - [`temporal`]: dense flow, warping and the recurrent spatio-temporal
//!   shading blend used for video.
//! - [`metrics`]: L1 / PSNR / SSIM and their flow-warped temporal variants.
//! - [`scenario`]: analytic Lambertian sphere sequences with exact ground truth.

pub mod error;
pub mod filter;
pub mod imaging;
pub mod metrics;
pub mod pipeline;
pub mod scenario;
pub mod sh;
pub mod temporal;

pub use error::{Error, Flagged, Result, Warning};
pub use imaging::{FlowField, ImageBuffer, Mask, NormalMap};
pub use sh::{Direction, EnvMap, ShCoefficients};
