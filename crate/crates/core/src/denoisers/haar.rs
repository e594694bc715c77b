use std::f64::consts::FRAC_1_SQRT_2;

use super::{check_sigma, Denoiser};
use crate::error::{Error, Result};
use crate::grid::Image;

/// Soft thresholding, the proximal map of `t |.|`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn check_levels(height: usize, width: usize, levels: usize) -> Result<()> {
    let block = 1usize << levels;
    if levels == 0 || !height.is_multiple_of(block) || !width.is_multiple_of(block) {
        return Err(Error::InvalidArgument(format!(
            "{levels} Haar levels need both sides divisible by {block}, got {height}x{width}"
        )));
    }
    Ok(())
}

fn analyse(buf: &mut [f64], scratch: &mut [f64]) {
    let half = buf.len() / 2;
    for k in 0..half {
        let (a, b) = (buf[2 * k], buf[2 * k + 1]);
        scratch[k] = (a + b) * FRAC_1_SQRT_2;
        scratch[half + k] = (a - b) * FRAC_1_SQRT_2;
    }
    buf.copy_from_slice(&scratch[..buf.len()]);
}

fn synthesise(buf: &mut [f64], scratch: &mut [f64]) {
    let half = buf.len() / 2;
    for k in 0..half {
        let (a, d) = (buf[k], buf[half + k]);
        scratch[2 * k] = (a + d) * FRAC_1_SQRT_2;
        scratch[2 * k + 1] = (a - d) * FRAC_1_SQRT_2;
    }
    buf.copy_from_slice(&scratch[..buf.len()]);
}

/// Orthonormal decimated 2D Haar transform, Mallat layout (coarse
/// approximation in the top-left corner).
pub fn haar_forward(x: &Image, levels: usize) -> Result<Image> {
    let (h, w) = x.shape();
    check_levels(h, w, levels)?;
    let mut data = x.data().to_vec();
    let mut scratch = vec![0.0; h.max(w)];
    let mut column = vec![0.0; h];
    let (mut bh, mut bw) = (h, w);
    for _ in 0..levels {
        for i in 0..bh {
            analyse(&mut data[i * w..i * w + bw], &mut scratch);
        }
        for j in 0..bw {
            for i in 0..bh {
                column[i] = data[i * w + j];
            }
            analyse(&mut column[..bh], &mut scratch);
            for i in 0..bh {
                data[i * w + j] = column[i];
            }
        }
        bh /= 2;
        bw /= 2;
    }
    Ok(Image::from_vec_unchecked(h, w, data))
}

pub fn haar_inverse(coeffs: &Image, levels: usize) -> Result<Image> {
    let (h, w) = coeffs.shape();
    check_levels(h, w, levels)?;
    let mut data = coeffs.data().to_vec();
    let mut scratch = vec![0.0; h.max(w)];
    let mut column = vec![0.0; h];
    for level in (0..levels).rev() {
        let (bh, bw) = (h >> level, w >> level);
        for j in 0..bw {
            for i in 0..bh {
                column[i] = data[i * w + j];
            }
            synthesise(&mut column[..bh], &mut scratch);
            for i in 0..bh {
                data[i * w + j] = column[i];
            }
        }
        for i in 0..bh {
            synthesise(&mut data[i * w..i * w + bw], &mut scratch);
        }
    }
    Ok(Image::from_vec_unchecked(h, w, data))
}

/// `prox_{t ||Psi .||_1}` with `Psi` the orthonormal Haar transform and
/// `t = scale * sigma`. Every coefficient, approximation included, is
/// thresholded, so this is the exact proximal map.
///
/// The transform is decimated: the denoiser commutes with flips and quarter
/// turns of images whose sides are multiples of `2^levels`, and with shifts
/// that are multiples of `2^levels`, but not with other shifts.
#[derive(Debug, Clone)]
pub struct HaarSoftThresholdDenoiser {
    levels: usize,
    scale: f64,
}

impl HaarSoftThresholdDenoiser {
    pub fn new(levels: usize, scale: f64) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidArgument(
                "Haar levels must be positive".into(),
            ));
        }
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold scale must be positive, got {scale}"
            )));
        }
        Ok(Self { levels, scale })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl Denoiser for HaarSoftThresholdDenoiser {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        check_sigma(sigma)?;
        let t = self.scale * sigma;
        let coeffs = haar_forward(x, self.levels)?;
        if t == 0.0 {
            return haar_inverse(&coeffs, self.levels);
        }
        let shrunk = coeffs.map(|v| soft_threshold(v, t));
        haar_inverse(&shrunk, self.levels)
    }

    fn name(&self) -> &str {
        "haar"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::GroupElement;
    use crate::rng::SeededRng;

    fn random(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = SeededRng::new(seed);
        Image::from_fn(h, w, |_, _| rng.gaussian())
    }

    #[test]
    fn transform_is_orthonormal() {
        let x = random(8, 16, 1);
        let c = haar_forward(&x, 3).unwrap();
        assert!((c.norm2() - x.norm2()).abs() < 1e-12);
        let back = haar_inverse(&c, 3).unwrap();
        assert!(back.sub(&x).unwrap().norm2() < 1e-12);
    }

    #[test]
    fn constant_image_has_only_dc() {
        let c = haar_forward(&Image::filled(4, 4, 1.0), 2).unwrap();
        assert!((c.get(0, 0) - 4.0).abs() < 1e-14);
        assert!(c.data()[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_threshold_is_identity() {
        let x = random(8, 8, 2);
        let d = HaarSoftThresholdDenoiser::new(2, 1.0).unwrap();
        let y = d.denoise(&x, 0.0).unwrap();
        assert!(y.sub(&x).unwrap().norm2() < 1e-12);
    }

    #[test]
    fn bad_sizes() {
        let d = HaarSoftThresholdDenoiser::new(2, 1.0).unwrap();
        assert!(d.denoise(&Image::zeros(6, 8), 0.1).is_err());
        assert!(HaarSoftThresholdDenoiser::new(0, 1.0).is_err());
        assert!(HaarSoftThresholdDenoiser::new(1, 0.0).is_err());
    }

    #[test]
    fn equivariance_pattern() {
        let x = random(8, 8, 3);
        let d = HaarSoftThresholdDenoiser::new(2, 1.0).unwrap();
        let residual = |g: GroupElement| {
            let lhs = d.denoise(&g.apply(&x).unwrap(), 0.5).unwrap();
            let rhs = g.apply(&d.denoise(&x, 0.5).unwrap()).unwrap();
            lhs.sub(&rhs).unwrap().norm2()
        };
        assert!(residual(GroupElement::rotation(1)) < 1e-12);
        assert!(residual(GroupElement::flip_horizontal()) < 1e-12);
        assert!(residual(GroupElement::translation(4, 0)) < 1e-12);
        assert!(residual(GroupElement::translation(1, 0)) > 1e-3);
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(1.0, 0.5), 0.5);
        assert_eq!(soft_threshold(-0.2, 0.5), 0.0);
        assert_eq!(soft_threshold(-2.0, 0.5), -1.5);
    }
}
