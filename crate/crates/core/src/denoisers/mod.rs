//! The denoiser interface and its implementations.
//!
//! Every denoiser takes an image and a noise level `sigma >= 0`. Denoisers
//! that have no tunable strength (linear maps, the perturbed proximal map,
//! the small convolutional network) accept and ignore `sigma`.

mod equivariant;
mod haar;
mod linear;
mod perturbed;
mod tiny_conv;

use std::sync::Arc;

pub use equivariant::{
    MonteCarloEquivariantDenoiser, ReynoldsEquivariantDenoiser, REYNOLDS_GROUP_LIMIT,
};
pub use haar::{haar_forward, haar_inverse, soft_threshold, HaarSoftThresholdDenoiser};
pub use linear::{CirculantDenoiser, LinearMatrixDenoiser};
pub use perturbed::{build_equivariant_b1, PerturbedProxDenoiser};
pub use tiny_conv::{TinyConvDenoiser, REFERENCE_CHANNELS, REFERENCE_SEED, WEIGHT_MAGIC};

use crate::error::{Error, Result};
use crate::grid::Image;

pub trait Denoiser: Send + Sync {
    /// Same-shape denoised image.
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image>;

    fn name(&self) -> &str;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        (**self).denoise(x, sigma)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        (**self).denoise(x, sigma)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Arc<D> {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        (**self).denoise(x, sigma)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    Ok(())
}

pub(crate) fn check_output(name: &str, out: Image) -> Result<Image> {
    if !out.is_finite() {
        return Err(Error::NonFinite(format!("{name} output")));
    }
    Ok(out)
}

/// `D(x) = x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        check_sigma(sigma)?;
        Ok(x.clone())
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Adapts a closure into a denoiser; `sigma` is passed through.
pub struct FnDenoiser<F> {
    name: String,
    f: F,
}

impl<F> FnDenoiser<F>
where
    F: Fn(&Image, f64) -> Result<Image> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self {
            name: name.into(),
            f,
        }
    }
}

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&Image, f64) -> Result<Image> + Send + Sync,
{
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        check_sigma(sigma)?;
        (self.f)(x, sigma)
    }

    fn name(&self) -> &str {
        &self.name
    }
}
