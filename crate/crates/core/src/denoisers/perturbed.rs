use super::haar::soft_threshold;
use super::{check_sigma, Denoiser};
use crate::error::{Error, Result};
use crate::grid::{frobenius, DenseMatrix, Image};
use crate::groups::{conjugate_matrix, Group, MATRIX_PIXEL_CAP};
use crate::rng::SeededRng;

const ORTHOGONALITY_TOL: f64 = 1e-10;

/// A slightly perturbed proximal map, `D(x) = (B1^T + P) soft_t(B1 x)`,
/// with `B1` orthogonal. For `P = 0` this is exactly `prox_{t ||B1 .||_1}`.
///
/// The threshold `t` is fixed at construction (it plays the role of
/// `gamma * lambda`), so `sigma` is ignored.
#[derive(Debug, Clone)]
pub struct PerturbedProxDenoiser {
    b1: DenseMatrix,
    perturbation: DenseMatrix,
    b2: DenseMatrix,
    threshold: f64,
}

impl PerturbedProxDenoiser {
    pub fn new(b1: DenseMatrix, perturbation: DenseMatrix, threshold: f64) -> Result<Self> {
        if !b1.is_square() || b1.rows() != perturbation.rows() || !perturbation.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "B1 is {}x{}, P is {}x{}",
                b1.rows(),
                b1.cols(),
                perturbation.rows(),
                perturbation.cols()
            )));
        }
        if !(threshold > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold must be positive, got {threshold}"
            )));
        }
        let gram = b1.transpose().matmul(&b1)?;
        let defect = frobenius(&gram.sub(&DenseMatrix::identity(b1.rows()))?);
        if defect >= ORTHOGONALITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "B1 is not orthogonal: ||B1^T B1 - I||_F = {defect:e}"
            )));
        }
        let b2 = b1.transpose().add(&perturbation)?;
        Ok(Self {
            b1,
            perturbation,
            b2,
            threshold,
        })
    }

    pub fn b1(&self) -> &DenseMatrix {
        &self.b1
    }

    pub fn perturbation(&self) -> &DenseMatrix {
        &self.perturbation
    }

    /// `B2 = B1^T + P`.
    pub fn b2(&self) -> &DenseMatrix {
        &self.b2
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Same `B1` and threshold with a different perturbation.
    pub fn with_perturbation(&self, perturbation: DenseMatrix) -> Result<Self> {
        Self::new(self.b1.clone(), perturbation, self.threshold)
    }
}

impl Denoiser for PerturbedProxDenoiser {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        check_sigma(sigma)?;
        if x.len() != self.b1.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image for a {}-dimensional perturbed prox",
                x.height(),
                x.width(),
                self.b1.cols()
            )));
        }
        let t = self.threshold;
        let coeffs: Vec<f64> = self
            .b1
            .matvec(x.data())?
            .into_iter()
            .map(|v| soft_threshold(v, t))
            .collect();
        let out = self.b2.matvec(&coeffs)?;
        Ok(Image::from_vec_unchecked(x.height(), x.width(), out))
    }

    fn name(&self) -> &str {
        "perturbed_prox"
    }
}

const B1_ATTEMPTS: usize = 10;

/// Random orthogonal matrix commuting with every `T_g` of `group` acting on
/// `height x width` images.
///
/// A Gaussian matrix is projected onto the commutant by group averaging,
/// `G_avg = (1/|G|) sum_g T_g^{-1} G T_g`, and replaced by its polar factor
/// `U V^T` (from the SVD `G_avg = U S V^T`). The commutant is closed under
/// transposition and the polar factor of an invertible element is a
/// function of it, so the result stays equivariant. Near-singular averages
/// are redrawn, up to ten times.
pub fn build_equivariant_b1(
    group: &Group,
    height: usize,
    width: usize,
    rng: &mut SeededRng,
) -> Result<DenseMatrix> {
    let n = height * width;
    if n > MATRIX_PIXEL_CAP {
        return Err(Error::SizeCap {
            what: "B1 dimension",
            size: n,
            cap: MATRIX_PIXEL_CAP,
        });
    }
    let perms = group
        .elements()
        .iter()
        .map(|g| g.permutation(height, width))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..B1_ATTEMPTS {
        let draw = DenseMatrix::new(n, n, rng.gaussian_vec(n * n))?;
        let mut avg = DenseMatrix::zeros(n, n);
        for perm in &perms {
            avg = avg.add(&conjugate_matrix(&draw, perm))?;
        }
        let avg = avg.scale(1.0 / perms.len() as f64).to_dmatrix();
        let svd = avg.svd(true, true);
        let (s_max, s_min) = svd
            .singular_values
            .iter()
            .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| {
                (hi.max(s), lo.min(s))
            });
        if s_min <= 1e-8 * s_max {
            continue;
        }
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            continue;
        };
        return Ok(DenseMatrix::from_dmatrix(&(u * v_t)));
    }
    Err(Error::Degenerate(format!(
        "group-averaged matrix stayed rank deficient after {B1_ATTEMPTS} draws"
    )))
}
