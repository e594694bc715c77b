//! A one-hidden-layer residual convolutional denoiser with fixed weights.
//!
//! `D(x) = x - W2 * relu(W1 * x + b)` where `W1` holds `k1` filters of size
//! `ks x ks`, `W2` maps the `k1` hidden channels back to one channel, and `*`
//! is circular cross-correlation:
//! `(w * x)[i, j] = sum_{a,b} w[a, b] x[(i + a - c) mod H, (j + b - c) mod W]`
//! with `c = ks / 2`.
//!
//! Weight file layout (little-endian): the 8-byte magic `EQPNPTC1`, `k1` as
//! `u32`, `ks` as `u32`, then `f64` values for `W1` (`k1 * ks * ks`, filter
//! major, row-major within a filter), `b` (`k1`) and `W2` (`k1 * ks * ks`).

use std::path::Path;

use super::{check_output, check_sigma, Denoiser};
use crate::error::{Error, Result};
use crate::grid::Image;
use crate::rng::SeededRng;

pub const WEIGHT_MAGIC: &[u8; 8] = b"EQPNPTC1";
const HEADER_LEN: usize = 16;

/// Seed of the checked-in reference weights.
pub const REFERENCE_SEED: u64 = 20_240_611;
pub const REFERENCE_CHANNELS: usize = 8;

static REFERENCE_WEIGHTS: &[u8] = include_bytes!("../../assets/tiny_conv_reference.bin");

#[derive(Debug, Clone, PartialEq)]
pub struct TinyConvDenoiser {
    channels: usize,
    kernel_size: usize,
    w1: Vec<f64>,
    bias: Vec<f64>,
    w2: Vec<f64>,
}

impl TinyConvDenoiser {
    pub fn new(
        channels: usize,
        kernel_size: usize,
        w1: Vec<f64>,
        bias: Vec<f64>,
        w2: Vec<f64>,
    ) -> Result<Self> {
        let per_bank = channels * kernel_size * kernel_size;
        if channels == 0 || kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "need at least one channel and an odd kernel size, got {channels} / {kernel_size}"
            )));
        }
        if w1.len() != per_bank || w2.len() != per_bank || bias.len() != channels {
            return Err(Error::DimensionMismatch(format!(
                "weights for {channels} channels of {kernel_size}x{kernel_size}: \
                 got {} / {} / {}",
                w1.len(),
                bias.len(),
                w2.len()
            )));
        }
        if w1.iter().chain(&bias).chain(&w2).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tiny conv weights".into()));
        }
        Ok(Self {
            channels,
            kernel_size,
            w1,
            bias,
            w2,
        })
    }

    /// Gaussian weights from a seed: `W1 ~ N(0, 0.3^2)`, `b ~ N(0, 0.1^2)`,
    /// `W2 ~ N(0, (0.3 / k1)^2)`.
    pub fn random(channels: usize, kernel_size: usize, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let per_bank = channels * kernel_size * kernel_size;
        let w1 = (0..per_bank).map(|_| 0.3 * rng.gaussian()).collect();
        let bias = (0..channels).map(|_| 0.1 * rng.gaussian()).collect();
        let w2 = (0..per_bank)
            .map(|_| 0.3 / channels as f64 * rng.gaussian())
            .collect();
        Self::new(channels, kernel_size, w1, bias, w2)
    }

    /// The checked-in weight set (equal to `random(8, 3, REFERENCE_SEED)`).
    pub fn reference() -> Self {
        Self::from_bytes(REFERENCE_WEIGHTS).expect("embedded weights are valid")
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (self.w1.len() * 2 + self.channels));
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.kernel_size as u32).to_le_bytes());
        for v in self.w1.iter().chain(&self.bias).chain(&self.w2) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != WEIGHT_MAGIC {
            return Err(Error::Format("tiny conv weights: bad magic".into()));
        }
        let channels = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let kernel_size = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let per_bank = channels
            .checked_mul(kernel_size)
            .and_then(|v| v.checked_mul(kernel_size))
            .ok_or_else(|| Error::Format("tiny conv weights: header overflow".into()))?;
        let count = 2 * per_bank + channels;
        let expected = HEADER_LEN + 8 * count;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "tiny conv weights: expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let w1 = values[..per_bank].to_vec();
        let bias = values[per_bank..per_bank + channels].to_vec();
        let w2 = values[per_bank + channels..].to_vec();
        Self::new(channels, kernel_size, w1, bias, w2)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    fn correlate(&self, x: &[f64], h: usize, w: usize, kernel: &[f64], out: &mut [f64]) {
        let ks = self.kernel_size;
        let c = ks / 2;
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for a in 0..ks {
                    let r = (i + h + a - c) % h;
                    let row = &x[r * w..(r + 1) * w];
                    for b in 0..ks {
                        acc += kernel[a * ks + b] * row[(j + w + b - c) % w];
                    }
                }
                out[i * w + j] += acc;
            }
        }
    }
}

impl Denoiser for TinyConvDenoiser {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        check_sigma(sigma)?;
        let (h, w) = x.shape();
        let n = h * w;
        let taps = self.kernel_size * self.kernel_size;
        let mut residual = vec![0.0; n];
        let mut hidden = vec![0.0; n];
        for ch in 0..self.channels {
            hidden.iter_mut().for_each(|v| *v = self.bias[ch]);
            self.correlate(
                x.data(),
                h,
                w,
                &self.w1[ch * taps..(ch + 1) * taps],
                &mut hidden,
            );
            hidden.iter_mut().for_each(|v| *v = v.max(0.0));
            self.correlate(
                &hidden,
                h,
                w,
                &self.w2[ch * taps..(ch + 1) * taps],
                &mut residual,
            );
        }
        let out = x.data().iter().zip(&residual).map(|(a, r)| a - r).collect();
        check_output("tiny_conv", Image::from_vec_unchecked(h, w, out))
    }

    fn name(&self) -> &str {
        "tiny_conv"
    }
}
