use num_complex::Complex64;

use super::{check_sigma, Denoiser};
use crate::error::{Error, Result};
use crate::grid::{apply_transfer, embed_kernel, fft2, ComplexImage, DenseMatrix, Image};
use crate::groups::MATRIX_PIXEL_CAP;

/// `D(x) = M vec(x)`.
#[derive(Debug, Clone)]
pub struct LinearMatrixDenoiser {
    matrix: DenseMatrix,
}

impl LinearMatrixDenoiser {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "linear denoiser needs a square matrix, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if matrix.rows() > MATRIX_PIXEL_CAP {
            return Err(Error::SizeCap {
                what: "linear denoiser dimension",
                size: matrix.rows(),
                cap: MATRIX_PIXEL_CAP,
            });
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }
}

impl Denoiser for LinearMatrixDenoiser {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        check_sigma(sigma)?;
        if x.len() != self.matrix.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image for a {}-dimensional linear denoiser",
                x.height(),
                x.width(),
                self.matrix.cols()
            )));
        }
        let out = self.matrix.matvec(x.data())?;
        Ok(Image::from_vec_unchecked(x.height(), x.width(), out))
    }

    fn name(&self) -> &str {
        "linear"
    }
}

/// Shift-equivariant linear denoiser `M = circ(d)`:
/// `(Mx)[p] = sum_q d[p - q] x[q]` with indices taken modulo the image size.
#[derive(Debug, Clone)]
pub struct CirculantDenoiser {
    filter: Image,
    transfer: ComplexImage,
    even_real: bool,
}

impl CirculantDenoiser {
    /// `filter` is a full-size image indexed from the origin. With
    /// `symmetrize`, the filter is replaced by its even part
    /// `(d[k] + d[-k]) / 2`, which makes the frequency response real.
    pub fn new(filter: Image, symmetrize: bool) -> Self {
        let filter = if symmetrize {
            even_part(&filter)
        } else {
            filter
        };
        let (h, w) = filter.shape();
        let mut transfer = fft2(&filter);
        let s = ((h * w) as f64).sqrt();
        for v in transfer.data_mut() {
            *v *= s;
        }
        if symmetrize {
            for v in transfer.data_mut() {
                *v = Complex64::new(v.re, 0.0);
            }
        }
        Self {
            filter,
            transfer,
            even_real: symmetrize,
        }
    }

    /// Builds the filter from a small centred kernel, as for blur kernels.
    pub fn from_kernel(
        kernel: &Image,
        height: usize,
        width: usize,
        symmetrize: bool,
    ) -> Result<Self> {
        Ok(Self::new(embed_kernel(kernel, height, width)?, symmetrize))
    }

    pub fn filter(&self) -> &Image {
        &self.filter
    }

    pub fn transfer(&self) -> &ComplexImage {
        &self.transfer
    }

    pub fn is_even_real(&self) -> bool {
        self.even_real
    }

    /// Explicit `n x n` circulant matrix.
    pub fn matrix(&self) -> Result<DenseMatrix> {
        let (h, w) = self.filter.shape();
        let n = h * w;
        if n > MATRIX_PIXEL_CAP {
            return Err(Error::SizeCap {
                what: "circulant matrix pixel count",
                size: n,
                cap: MATRIX_PIXEL_CAP,
            });
        }
        let mut m = DenseMatrix::zeros(n, n);
        for p in 0..n {
            let (pi, pj) = (p / w, p % w);
            for q in 0..n {
                let (qi, qj) = (q / w, q % w);
                let di = (pi + h - qi) % h;
                let dj = (pj + w - qj) % w;
                m.set(p, q, self.filter.get(di, dj));
            }
        }
        Ok(m)
    }
}

fn even_part(d: &Image) -> Image {
    let (h, w) = d.shape();
    Image::from_fn(h, w, |i, j| {
        0.5 * (d.get(i, j) + d.get((h - i) % h, (w - j) % w))
    })
}

impl Denoiser for CirculantDenoiser {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        check_sigma(sigma)?;
        apply_transfer(x, &self.transfer)
    }

    fn name(&self) -> &str {
        "circulant"
    }
}
