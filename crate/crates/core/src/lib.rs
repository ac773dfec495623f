//! Latent recalibration of conditional normalizing flows.

pub mod calibration;
mod error;
pub mod flow;
pub mod hdr;
pub mod metrics;
pub mod norm_laws;
pub mod recal;
pub mod rng;
mod scalar;
pub mod special;

pub use calibration::{CalibrationMap, Estimator, FittedMap};
pub use error::{Error, Result};
pub use flow::{base_log_density, latent_norm, sample_base, AffineGaussianFlow, ConditionalFlow};
pub use hdr::{hpd, BaseModel, DensityModel, HdrRecalibrator, HdrSamples};
pub use norm_laws::{Latent, LatentKind, NormFamily, NormLaw};
pub use recal::{calibration_norms, RadialRecalibrator};
pub use scalar::{norm, Real};

/// Double-precision instantiations.
pub mod f64 {
    pub type RadialRecalibrator = crate::RadialRecalibrator<f64>;
    pub type HdrRecalibrator = crate::HdrRecalibrator<f64>;
    pub type FittedMap = crate::FittedMap<f64>;
    pub type AffineGaussianFlow = crate::AffineGaussianFlow<f64>;
}

/// Single-precision instantiations.
pub mod f32 {
    pub type RadialRecalibrator = crate::RadialRecalibrator<f32>;
    pub type HdrRecalibrator = crate::HdrRecalibrator<f32>;
    pub type FittedMap = crate::FittedMap<f32>;
    pub type AffineGaussianFlow = crate::AffineGaussianFlow<f32>;
}
