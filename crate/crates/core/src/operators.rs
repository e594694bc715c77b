//! Linear forward operators `A` with exact adjoints, and measurement helpers.
//!
//! Every operator fixes its input image shape at construction. Real
//! measurements are images; the MRI operator produces complex k-space data.
//! The adjoint is with respect to the real inner product
//! `<u, v> = Re sum conj(u_k) v_k`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{ensure_same_shape, Error, Result};
use crate::exec::{try_map_indexed, ExecPolicy};
use crate::grid::{
    apply_transfer, fft2, ifft2_complex, kernel_transfer, ComplexImage, DenseMatrix, Image,
};
use crate::groups::MATRIX_PIXEL_CAP;
use crate::rng::SeededRng;

/// Output of a forward operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    Real(Image),
    Complex(ComplexImage),
}

impl Measurement {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Measurement::Real(y) => y.shape(),
            Measurement::Complex(y) => y.shape(),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Measurement::Complex(_))
    }

    pub fn as_real(&self) -> Option<&Image> {
        match self {
            Measurement::Real(y) => Some(y),
            Measurement::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&ComplexImage> {
        match self {
            Measurement::Complex(y) => Some(y),
            Measurement::Real(_) => None,
        }
    }

    pub fn norm2(&self) -> f64 {
        match self {
            Measurement::Real(y) => y.norm2(),
            Measurement::Complex(y) => y.norm2(),
        }
    }

    /// Real inner product.
    pub fn dot(&self, other: &Measurement) -> Result<f64> {
        match (self, other) {
            (Measurement::Real(a), Measurement::Real(b)) => {
                ensure_same_shape("measurement dot", a.shape(), b.shape())?;
                crate::grid::dot(a.data(), b.data())
            }
            (Measurement::Complex(a), Measurement::Complex(b)) => a.real_dot(b),
            _ => Err(Error::DimensionMismatch(
                "real vs complex measurement".into(),
            )),
        }
    }

    pub fn sub(&self, other: &Measurement) -> Result<Measurement> {
        match (self, other) {
            (Measurement::Real(a), Measurement::Real(b)) => Ok(Measurement::Real(a.sub(b)?)),
            (Measurement::Complex(a), Measurement::Complex(b)) => {
                ensure_same_shape("measurement sub", a.shape(), b.shape())?;
                let data = a.data().iter().zip(b.data()).map(|(u, v)| u - v).collect();
                Ok(Measurement::Complex(ComplexImage::new(
                    a.height(),
                    a.width(),
                    data,
                )?))
            }
            _ => Err(Error::DimensionMismatch(
                "real vs complex measurement".into(),
            )),
        }
    }

    /// Flattened real coordinates; complex entries contribute `(re, im)` pairs.
    pub fn to_real_vec(&self) -> Vec<f64> {
        match self {
            Measurement::Real(y) => y.data().to_vec(),
            Measurement::Complex(y) => y.data().iter().flat_map(|c| [c.re, c.im]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Measurement::Real(y) => y.is_finite(),
            Measurement::Complex(y) => y
                .data()
                .iter()
                .all(|c| c.re.is_finite() && c.im.is_finite()),
        }
    }
}

pub trait LinearOperator: Send + Sync {
    fn input_shape(&self) -> (usize, usize);
    fn output_shape(&self) -> (usize, usize);
    fn apply(&self, x: &Image) -> Result<Measurement>;
    fn adjoint(&self, y: &Measurement) -> Result<Image>;
    fn name(&self) -> &str;

    /// `A^T A x`.
    fn normal(&self, x: &Image) -> Result<Image> {
        self.adjoint(&self.apply(x)?)
    }
}

impl<A: LinearOperator + ?Sized> LinearOperator for &A {
    fn input_shape(&self) -> (usize, usize) {
        (**self).input_shape()
    }
    fn output_shape(&self) -> (usize, usize) {
        (**self).output_shape()
    }
    fn apply(&self, x: &Image) -> Result<Measurement> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &Measurement) -> Result<Image> {
        (**self).adjoint(y)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<A: LinearOperator + ?Sized> LinearOperator for Box<A> {
    fn input_shape(&self) -> (usize, usize) {
        (**self).input_shape()
    }
    fn output_shape(&self) -> (usize, usize) {
        (**self).output_shape()
    }
    fn apply(&self, x: &Image) -> Result<Measurement> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &Measurement) -> Result<Image> {
        (**self).adjoint(y)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<A: LinearOperator + ?Sized> LinearOperator for Arc<A> {
    fn input_shape(&self) -> (usize, usize) {
        (**self).input_shape()
    }
    fn output_shape(&self) -> (usize, usize) {
        (**self).output_shape()
    }
    fn apply(&self, x: &Image) -> Result<Measurement> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &Measurement) -> Result<Image> {
        (**self).adjoint(y)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

fn check_input(op: &str, expected: (usize, usize), x: &Image) -> Result<()> {
    ensure_same_shape(op, expected, x.shape())
}

fn real_measurement<'a>(
    op: &str,
    expected: (usize, usize),
    y: &'a Measurement,
) -> Result<&'a Image> {
    let y = y
        .as_real()
        .ok_or_else(|| Error::DimensionMismatch(format!("{op} expects a real measurement")))?;
    ensure_same_shape(op, expected, y.shape())?;
    Ok(y)
}

fn check_binary_mask(what: &str, mask: &Image) -> Result<()> {
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!(
            "{what} mask entries must be 0 or 1"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct IdentityOperator {
    shape: (usize, usize),
}

impl IdentityOperator {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            shape: (height, width),
        }
    }
}

impl LinearOperator for IdentityOperator {
    fn input_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn output_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn apply(&self, x: &Image) -> Result<Measurement> {
        check_input("identity", self.shape, x)?;
        Ok(Measurement::Real(x.clone()))
    }
    fn adjoint(&self, y: &Measurement) -> Result<Image> {
        Ok(real_measurement("identity adjoint", self.shape, y)?.clone())
    }
    fn name(&self) -> &str {
        "identity"
    }
}

/// Circular convolution `y = h * x`.
#[derive(Debug, Clone)]
pub struct BlurOperator {
    kernel: Image,
    shape: (usize, usize),
    transfer: ComplexImage,
    adjoint_transfer: ComplexImage,
}

impl BlurOperator {
    pub fn new(kernel: Image, height: usize, width: usize) -> Result<Self> {
        let transfer = kernel_transfer(&kernel, height, width)?;
        let adjoint_transfer = transfer.conj();
        Ok(Self {
            kernel,
            shape: (height, width),
            transfer,
            adjoint_transfer,
        })
    }

    pub fn kernel(&self) -> &Image {
        &self.kernel
    }
}

impl LinearOperator for BlurOperator {
    fn input_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn output_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn apply(&self, x: &Image) -> Result<Measurement> {
        check_input("blur", self.shape, x)?;
        Ok(Measurement::Real(apply_transfer(x, &self.transfer)?))
    }
    fn adjoint(&self, y: &Measurement) -> Result<Image> {
        let y = real_measurement("blur adjoint", self.shape, y)?;
        apply_transfer(y, &self.adjoint_transfer)
    }
    fn name(&self) -> &str {
        "blur"
    }
}

/// `y = mask ⊙ x`, kept at full size with zeros at missing pixels.
#[derive(Debug, Clone)]
pub struct InpaintingOperator {
    mask: Image,
}

impl InpaintingOperator {
    pub fn new(mask: Image) -> Result<Self> {
        check_binary_mask("inpainting", &mask)?;
        Ok(Self { mask })
    }

    /// Each pixel kept independently with probability `keep_rate`.
    pub fn random(
        height: usize,
        width: usize,
        keep_rate: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&keep_rate) {
            return Err(Error::InvalidArgument(format!(
                "keep rate must lie in [0, 1], got {keep_rate}"
            )));
        }
        let mask = Image::from_fn(height, width, |_, _| {
            if rng.uniform() < keep_rate {
                1.0
            } else {
                0.0
            }
        });
        Self::new(mask)
    }

    pub fn mask(&self) -> &Image {
        &self.mask
    }

    /// Fraction of observed pixels.
    pub fn keep_rate(&self) -> f64 {
        self.mask.sum() / self.mask.len() as f64
    }
}

impl LinearOperator for InpaintingOperator {
    fn input_shape(&self) -> (usize, usize) {
        self.mask.shape()
    }
    fn output_shape(&self) -> (usize, usize) {
        self.mask.shape()
    }
    fn apply(&self, x: &Image) -> Result<Measurement> {
        check_input("inpainting", self.mask.shape(), x)?;
        Ok(Measurement::Real(x.hadamard(&self.mask)?))
    }
    fn adjoint(&self, y: &Measurement) -> Result<Image> {
        real_measurement("inpainting adjoint", self.mask.shape(), y)?.hadamard(&self.mask)
    }
    fn name(&self) -> &str {
        "inpainting"
    }
}

/// Undersampled Fourier measurements `y = M ⊙ F x` with the unitary DFT.
#[derive(Debug, Clone)]
pub struct MriOperator {
    mask: Image,
    acceleration: Option<usize>,
}

impl MriOperator {
    pub fn new(mask: Image) -> Result<Self> {
        check_binary_mask("mri", &mask)?;
        Ok(Self {
            mask,
            acceleration: None,
        })
    }

    /// Column mask from [`make_mri_mask`].
    pub fn random(
        height: usize,
        width: usize,
        acceleration: usize,
        center_fraction: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mask = make_mri_mask(height, width, acceleration, center_fraction, rng)?;
        Ok(Self {
            mask,
            acceleration: Some(acceleration),
        })
    }

    pub fn mask(&self) -> &Image {
        &self.mask
    }

    pub fn acceleration(&self) -> Option<usize> {
        self.acceleration
    }

    pub fn sampled_fraction(&self) -> f64 {
        self.mask.sum() / self.mask.len() as f64
    }

    fn masked(&self, spectrum: &ComplexImage) -> ComplexImage {
        let data = spectrum
            .data()
            .iter()
            .zip(self.mask.data())
            .map(|(c, &m)| c * m)
            .collect();
        ComplexImage::new(spectrum.height(), spectrum.width(), data).expect("same shape")
    }
}

impl LinearOperator for MriOperator {
    fn input_shape(&self) -> (usize, usize) {
        self.mask.shape()
    }
    fn output_shape(&self) -> (usize, usize) {
        self.mask.shape()
    }
    fn apply(&self, x: &Image) -> Result<Measurement> {
        check_input("mri", self.mask.shape(), x)?;
        Ok(Measurement::Complex(self.masked(&fft2(x))))
    }
    fn adjoint(&self, y: &Measurement) -> Result<Image> {
        let y = y
            .as_complex()
            .ok_or_else(|| Error::DimensionMismatch("mri adjoint expects k-space data".into()))?;
        ensure_same_shape("mri adjoint", self.mask.shape(), y.shape())?;
        // x is real, so the adjoint keeps the real part of F* M y.
        Ok(ifft2_complex(&self.masked(y)).real_part())
    }
    fn name(&self) -> &str {
        "mri"
    }
}

/// `y = (h * x)` sampled at pixels `(S i, S j)`.
#[derive(Debug, Clone)]
pub struct SuperResolutionOperator {
    blur: BlurOperator,
    factor: usize,
}

impl SuperResolutionOperator {
    pub fn new(kernel: Image, factor: usize, height: usize, width: usize) -> Result<Self> {
        if factor == 0 || !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "factor {factor} must divide the {height}x{width} image"
            )));
        }
        Ok(Self {
            blur: BlurOperator::new(kernel, height, width)?,
            factor,
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn kernel(&self) -> &Image {
        self.blur.kernel()
    }
}

impl LinearOperator for SuperResolutionOperator {
    fn input_shape(&self) -> (usize, usize) {
        self.blur.input_shape()
    }
    fn output_shape(&self) -> (usize, usize) {
        let (h, w) = self.blur.input_shape();
        (h / self.factor, w / self.factor)
    }
    fn apply(&self, x: &Image) -> Result<Measurement> {
        let Measurement::Real(blurred) = self.blur.apply(x)? else {
            unreachable!("blur output is real")
        };
        let s = self.factor;
        let (oh, ow) = self.output_shape();
        Ok(Measurement::Real(Image::from_fn(oh, ow, |i, j| {
            blurred.get(i * s, j * s)
        })))
    }
    fn adjoint(&self, y: &Measurement) -> Result<Image> {
        let y = real_measurement("sr adjoint", self.output_shape(), y)?;
        let (h, w) = self.input_shape();
        let s = self.factor;
        let mut up = Image::zeros(h, w);
        for i in 0..y.height() {
            for j in 0..y.width() {
                up.set(i * s, j * s, y.get(i, j));
            }
        }
        self.blur.adjoint(&Measurement::Real(up))
    }
    fn name(&self) -> &str {
        "sr"
    }
}

/// Explicit matrix acting on the row-major vectorisation of the input.
/// Measurements are `1 x rows` images.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DenseMatrix,
    transpose: DenseMatrix,
    shape: (usize, usize),
}

impl DenseOperator {
    pub fn new(matrix: DenseMatrix, height: usize, width: usize) -> Result<Self> {
        if matrix.cols() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix on a {height}x{width} image",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let transpose = matrix.transpose();
        Ok(Self {
            matrix,
            transpose,
            shape: (height, width),
        })
    }

    /// Acts on `1 x cols` row images.
    pub fn on_vectors(matrix: DenseMatrix) -> Result<Self> {
        let cols = matrix.cols();
        Self::new(matrix, 1, cols)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn input_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn output_shape(&self) -> (usize, usize) {
        (1, self.matrix.rows())
    }
    fn apply(&self, x: &Image) -> Result<Measurement> {
        check_input("dense", self.shape, x)?;
        let y = self.matrix.matvec(x.data())?;
        Ok(Measurement::Real(Image::from_vec_unchecked(1, y.len(), y)))
    }
    fn adjoint(&self, y: &Measurement) -> Result<Image> {
        let y = real_measurement("dense adjoint", self.output_shape(), y)?;
        let x = self.transpose.matvec(y.data())?;
        Ok(Image::from_vec_unchecked(self.shape.0, self.shape.1, x))
    }
    fn name(&self) -> &str {
        "dense"
    }
}

/// Pointwise scaling `y = d ⊙ x`.
#[derive(Debug, Clone)]
pub struct DiagonalOperator {
    diagonal: Image,
}

impl DiagonalOperator {
    pub fn new(diagonal: Image) -> Self {
        Self { diagonal }
    }

    /// `diag(values)` acting on `1 x n` row images.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Ok(Self::new(Image::new(1, values.len(), values.to_vec())?))
    }

    pub fn diagonal(&self) -> &Image {
        &self.diagonal
    }
}

impl LinearOperator for DiagonalOperator {
    fn input_shape(&self) -> (usize, usize) {
        self.diagonal.shape()
    }
    fn output_shape(&self) -> (usize, usize) {
        self.diagonal.shape()
    }
    fn apply(&self, x: &Image) -> Result<Measurement> {
        check_input("diagonal", self.diagonal.shape(), x)?;
        Ok(Measurement::Real(x.hadamard(&self.diagonal)?))
    }
    fn adjoint(&self, y: &Measurement) -> Result<Image> {
        real_measurement("diagonal adjoint", self.diagonal.shape(), y)?.hadamard(&self.diagonal)
    }
    fn name(&self) -> &str {
        "diagonal"
    }
}

fn check_matrix_cap(what: &'static str, n: usize) -> Result<()> {
    if n > MATRIX_PIXEL_CAP {
        return Err(Error::SizeCap {
            what,
            size: n,
            cap: MATRIX_PIXEL_CAP,
        });
    }
    Ok(())
}

/// `A^T A` with entry `(i, j) = <A e_j, A e_i>`, from forward images of the
/// canonical basis.
pub fn gram_matrix(a: &dyn LinearOperator, policy: ExecPolicy) -> Result<DenseMatrix> {
    let (h, w) = a.input_shape();
    let n = h * w;
    check_matrix_cap("gram matrix", n)?;
    let columns = try_map_indexed(policy, n, |k| {
        Ok::<_, Error>(a.apply(&Image::basis(h, w, k / w, k % w))?.to_real_vec())
    })?;
    let rows = try_map_indexed(policy, n, |i| {
        (0..n)
            .map(|j| crate::grid::dot(&columns[i], &columns[j]))
            .collect::<Result<Vec<f64>>>()
    })?;
    DenseMatrix::from_rows(&rows)
}

/// `A^T A` assembled column by column from `adjoint(apply(e_j))`.
pub fn normal_matrix(a: &dyn LinearOperator, policy: ExecPolicy) -> Result<DenseMatrix> {
    let (h, w) = a.input_shape();
    let n = h * w;
    check_matrix_cap("normal matrix", n)?;
    let columns = try_map_indexed(policy, n, |k| {
        Ok::<_, Error>(a.normal(&Image::basis(h, w, k / w, k % w))?.into_data())
    })?;
    DenseMatrix::from_columns(n, &columns)
}

/// `y = A x + noise_std * g` with `g` standard Gaussian. Complex measurements
/// get independent noise of standard deviation `noise_std` on each of the
/// real and imaginary parts.
pub fn simulate(
    a: &dyn LinearOperator,
    x_true: &Image,
    noise_std: f64,
    rng: &mut SeededRng,
) -> Result<Measurement> {
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise std must be finite and non-negative, got {noise_std}"
        )));
    }
    let clean = a.apply(x_true)?;
    if noise_std == 0.0 {
        return Ok(clean);
    }
    Ok(match clean {
        Measurement::Real(y) => {
            let (h, w) = y.shape();
            let data = y
                .data()
                .iter()
                .map(|v| v + noise_std * rng.gaussian())
                .collect();
            Measurement::Real(Image::new(h, w, data)?)
        }
        Measurement::Complex(y) => {
            let data = y
                .data()
                .iter()
                .map(|c| c + Complex64::new(noise_std * rng.gaussian(), noise_std * rng.gaussian()))
                .collect();
            Measurement::Complex(ComplexImage::new(y.height(), y.width(), data)?)
        }
    })
}

/// Normalised isotropic Gaussian, `k[i, j] ∝ exp(-((i-c)^2 + (j-c)^2) / (2 std^2))`.
pub fn make_gaussian_kernel(std: f64, side: usize) -> Result<Image> {
    if side.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "kernel side must be odd, got {side}"
        )));
    }
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kernel std must be positive, got {std}"
        )));
    }
    let c = (side / 2) as f64;
    let k = Image::from_fn(side, side, |i, j| {
        let (di, dj) = (i as f64 - c, j as f64 - c);
        (-(di * di + dj * dj) / (2.0 * std * std)).exp()
    });
    let total = k.sum();
    Ok(k.scale(1.0 / total))
}

/// Orientation of a line kernel, measured counter-clockwise from the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineAngle {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl LineAngle {
    /// Row and column step along the line.
    fn step(self) -> (i64, i64) {
        match self {
            LineAngle::Deg0 => (0, 1),
            LineAngle::Deg45 => (-1, 1),
            LineAngle::Deg90 => (-1, 0),
            LineAngle::Deg135 => (-1, -1),
        }
    }

    pub fn from_degrees(deg: u32) -> Result<Self> {
        match deg {
            0 => Ok(LineAngle::Deg0),
            45 => Ok(LineAngle::Deg45),
            90 => Ok(LineAngle::Deg90),
            135 => Ok(LineAngle::Deg135),
            _ => Err(Error::InvalidArgument(format!(
                "line angle must be 0, 45, 90 or 135 degrees, got {deg}"
            ))),
        }
    }

    pub fn degrees(self) -> u32 {
        match self {
            LineAngle::Deg0 => 0,
            LineAngle::Deg45 => 45,
            LineAngle::Deg90 => 90,
            LineAngle::Deg135 => 135,
        }
    }
}

/// Default motion-blur substitute: a 9-pixel diagonal segment.
pub const DEFAULT_LINE_LENGTH: usize = 9;

/// One-pixel-wide segment of `length` pixels through the centre of an odd
/// `side x side` kernel (`side = length` rounded up to odd), each pixel
/// weighted `1 / length`. Even lengths extend one pixel further on the
/// negative side.
pub fn make_line_kernel(length: usize, angle: LineAngle) -> Result<Image> {
    if length == 0 {
        return Err(Error::InvalidArgument(
            "line kernel length must be at least 1".into(),
        ));
    }
    let side = length | 1;
    let c = (side / 2) as i64;
    let (di, dj) = angle.step();
    let mut k = Image::zeros(side, side);
    let start = -((length / 2) as i64);
    for t in start..start + length as i64 {
        let (i, j) = (c + t * di, c + t * dj);
        k.set(i as usize, j as usize, 1.0 / length as f64);
    }
    Ok(k)
}

/// Cartesian column mask: a fully sampled band of `ceil(center_fraction * w)`
/// lowest-frequency columns (frequencies `-floor(c/2) ..= ceil(c/2) - 1` in
/// FFT order) plus distinct random columns up to `w / acceleration` in total.
pub fn make_mri_mask(
    height: usize,
    width: usize,
    acceleration: usize,
    center_fraction: f64,
    rng: &mut SeededRng,
) -> Result<Image> {
    if acceleration != 4 && acceleration != 8 {
        return Err(Error::InvalidArgument(format!(
            "acceleration must be 4 or 8, got {acceleration}"
        )));
    }
    if !(center_fraction > 0.0 && center_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "center fraction must lie in (0, 1), got {center_fraction}"
        )));
    }
    let budget = width / acceleration;
    let center = (center_fraction * width as f64).ceil() as usize;
    if center > budget || budget == 0 {
        return Err(Error::InvalidArgument(format!(
            "centre band of {center} columns does not fit a budget of {budget} of {width}"
        )));
    }
    let mut sampled = vec![false; width];
    let lo = -((center / 2) as i64);
    for f in lo..lo + center as i64 {
        sampled[f.rem_euclid(width as i64) as usize] = true;
    }
    let outer: Vec<usize> = (0..width).filter(|&j| !sampled[j]).collect();
    for k in rng.sample_distinct(outer.len(), budget - center) {
        sampled[outer[k]] = true;
    }
    Ok(Image::from_fn(height, width, |_, j| {
        if sampled[j] {
            1.0
        } else {
            0.0
        }
    }))
}

/// All-ones k-space mask (no undersampling).
pub fn full_mri_mask(height: usize, width: usize) -> Image {
    Image::filled(height, width, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(h: usize, w: usize, rng: &mut SeededRng) -> Image {
        Image::from_fn(h, w, |_, _| rng.gaussian())
    }

    fn random_measurement(a: &dyn LinearOperator, rng: &mut SeededRng) -> Measurement {
        let (h, w) = a.output_shape();
        match a
            .apply(&Image::zeros(a.input_shape().0, a.input_shape().1))
            .unwrap()
        {
            Measurement::Real(_) => Measurement::Real(random_image(h, w, rng)),
            Measurement::Complex(_) => {
                let data = (0..h * w)
                    .map(|_| Complex64::new(rng.gaussian(), rng.gaussian()))
                    .collect();
                Measurement::Complex(ComplexImage::new(h, w, data).unwrap())
            }
        }
    }

    fn all_operators(rng: &mut SeededRng) -> Vec<Box<dyn LinearOperator>> {
        let dense = DenseMatrix::new(3, 6, rng.gaussian_vec(18)).unwrap();
        vec![
            Box::new(IdentityOperator::new(5, 7)),
            Box::new(
                BlurOperator::new(make_line_kernel(5, LineAngle::Deg45).unwrap(), 8, 8).unwrap(),
            ),
            Box::new(InpaintingOperator::random(6, 5, 0.5, rng).unwrap()),
            Box::new(MriOperator::random(8, 16, 4, 0.1, rng).unwrap()),
            Box::new(
                SuperResolutionOperator::new(make_gaussian_kernel(1.0, 5).unwrap(), 2, 8, 12)
                    .unwrap(),
            ),
            Box::new(DenseOperator::new(dense, 2, 3).unwrap()),
            Box::new(DiagonalOperator::new(random_image(4, 4, rng))),
        ]
    }

    #[test]
    fn adjoint_identities() {
        let mut rng = SeededRng::new(11);
        for a in all_operators(&mut rng.derive("ops")) {
            for _ in 0..20 {
                let (h, w) = a.input_shape();
                let x = random_image(h, w, &mut rng);
                let y = random_measurement(a.as_ref(), &mut rng);
                let lhs = a.apply(&x).unwrap().dot(&y).unwrap();
                let rhs = crate::grid::dot(x.data(), a.adjoint(&y).unwrap().data()).unwrap();
                assert!(
                    (lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()),
                    "{}: {lhs} vs {rhs}",
                    a.name()
                );
            }
        }
    }

    #[test]
    fn gram_paths_agree() {
        let mut rng = SeededRng::new(5);
        for a in all_operators(&mut rng) {
            let g = gram_matrix(a.as_ref(), ExecPolicy::Parallel).unwrap();
            let n = normal_matrix(a.as_ref(), ExecPolicy::Sequential).unwrap();
            assert!(
                crate::grid::frobenius(&g.sub(&n).unwrap()) < 1e-12,
                "{}",
                a.name()
            );
            assert!(crate::grid::frobenius(&g.sub(&g.transpose()).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn delta_blur_is_identity() {
        let mut rng = SeededRng::new(1);
        let x = random_image(6, 6, &mut rng);
        let delta = Image::basis(3, 3, 1, 1);
        let a = BlurOperator::new(delta, 6, 6).unwrap();
        let y = a.apply(&x).unwrap();
        assert!(y.as_real().unwrap().sub(&x).unwrap().norm2() < 1e-12);
    }

    #[test]
    fn inpainting_projection() {
        let mut rng = SeededRng::new(2);
        let a = InpaintingOperator::random(4, 4, 0.5, &mut rng).unwrap();
        let g = gram_matrix(&a, ExecPolicy::Sequential).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let want = if i == j { a.mask().data()[i] } else { 0.0 };
                assert_eq!(g.get(i, j), want);
            }
        }
        let x = random_image(4, 4, &mut rng);
        let once = a.normal(&x).unwrap();
        assert_eq!(a.normal(&once).unwrap(), once);
        assert_eq!(once, x.hadamard(a.mask()).unwrap());
    }

    #[test]
    fn full_mask_mri_is_isometry() {
        let mut rng = SeededRng::new(3);
        let a = MriOperator::new(full_mri_mask(8, 8)).unwrap();
        let x = random_image(8, 8, &mut rng);
        assert!((a.apply(&x).unwrap().norm2() - x.norm2()).abs() < 1e-10);
        assert!(a.normal(&x).unwrap().sub(&x).unwrap().norm2() < 1e-10);
    }

    #[test]
    fn diag_gram() {
        let a = DiagonalOperator::from_values(&[2.0, 1.0]).unwrap();
        let g = gram_matrix(&a, ExecPolicy::Sequential).unwrap();
        assert_eq!(g, DenseMatrix::diagonal(&[4.0, 1.0]));
        let id = gram_matrix(&IdentityOperator::new(3, 3), ExecPolicy::Sequential).unwrap();
        assert_eq!(id, DenseMatrix::identity(9));
    }

    #[test]
    fn simulate_noise() {
        let a = IdentityOperator::new(250, 400);
        let x = Image::filled(250, 400, 0.5);
        let exact = simulate(&a, &x, 0.0, &mut SeededRng::new(1)).unwrap();
        assert_eq!(exact.as_real().unwrap(), &x);
        let y = simulate(&a, &x, 0.05, &mut SeededRng::new(9)).unwrap();
        let again = simulate(&a, &x, 0.05, &mut SeededRng::new(9)).unwrap();
        assert_eq!(y, again);
        let r = y.as_real().unwrap().sub(&x).unwrap();
        let mean = r.sum() / r.len() as f64;
        let var = r
            .data()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (r.len() - 1) as f64;
        assert!((var.sqrt() / 0.05 - 1.0).abs() < 0.02);
    }

    #[test]
    fn gaussian_kernels() {
        let delta = make_gaussian_kernel(1e-6, 5).unwrap();
        assert!(delta.sub(&Image::basis(5, 5, 2, 2)).unwrap().norm2() < 1e-9);
        let k = make_gaussian_kernel(1.0, 7).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(k.get(i, j), k.get(6 - i, 6 - j));
            }
        }
        // Normaliser: (sum_{t=-3..3} e^{-t^2/2})^2.
        let z: f64 = (-3..=3).map(|t: i32| (-(t * t) as f64 / 2.0).exp()).sum();
        assert!((k.get(3, 3) - 1.0 / (z * z)).abs() < 1e-15);
        assert!((k.sum() - 1.0).abs() < 1e-14);
        assert!(make_gaussian_kernel(1.0, 4).is_err());
    }

    #[test]
    fn line_kernels() {
        let k = make_line_kernel(DEFAULT_LINE_LENGTH, LineAngle::Deg45).unwrap();
        assert_eq!(k.shape(), (9, 9));
        for t in 0..9 {
            assert!((k.get(8 - t, t) - 1.0 / 9.0).abs() < 1e-15);
        }
        assert!((k.sum() - 1.0).abs() < 1e-14);
        let h = make_line_kernel(4, LineAngle::Deg0).unwrap();
        assert_eq!(h.shape(), (5, 5));
        assert_eq!(h.data().iter().filter(|&&v| v > 0.0).count(), 4);
        assert!(make_line_kernel(0, LineAngle::Deg90).is_err());
    }

    #[test]
    fn mri_mask_counts() {
        let m = make_mri_mask(64, 64, 4, 0.08, &mut SeededRng::new(4)).unwrap();
        let columns: Vec<usize> = (0..64).filter(|&j| m.get(0, j) == 1.0).collect();
        assert_eq!(columns.len(), 16);
        for j in [61, 62, 63, 0, 1, 2] {
            assert!(columns.contains(&j));
        }
        for i in 0..64 {
            for j in 0..64 {
                assert_eq!(m.get(i, j), m.get(0, j));
            }
        }
        assert_eq!(
            m,
            make_mri_mask(64, 64, 4, 0.08, &mut SeededRng::new(4)).unwrap()
        );
        assert!(make_mri_mask(64, 64, 8, 0.2, &mut SeededRng::new(4)).is_err());
        assert!(make_mri_mask(64, 64, 2, 0.08, &mut SeededRng::new(4)).is_err());
    }

    /// `T_s` applied to a measurement grid of either kind.
    fn shift_measurement(s: crate::groups::GroupElement, y: &Measurement) -> Measurement {
        let (h, w) = y.shape();
        let perm = s.permutation(h, w).unwrap();
        match y {
            Measurement::Real(y) => Measurement::Real(s.apply(y).unwrap()),
            Measurement::Complex(y) => {
                let data = perm.iter().map(|&k| y.data()[k]).collect();
                Measurement::Complex(ComplexImage::new(h, w, data).unwrap())
            }
        }
    }

    #[test]
    fn shift_equivariance_dichotomy() {
        use crate::groups::GroupElement;
        let mut rng = SeededRng::new(6);
        let blur =
            BlurOperator::new(make_line_kernel(5, LineAngle::Deg135).unwrap(), 8, 8).unwrap();
        let inpaint = InpaintingOperator::random(8, 8, 0.5, &mut rng).unwrap();
        let mri = MriOperator::random(8, 16, 4, 0.1, &mut rng).unwrap();
        let residual = |a: &dyn LinearOperator, s: GroupElement, x: &Image| {
            let lhs = a.apply(&s.apply(x).unwrap()).unwrap();
            let rhs = shift_measurement(s, &a.apply(x).unwrap());
            lhs.sub(&rhs).unwrap().norm2()
        };
        let x8 = random_image(8, 8, &mut rng);
        let x816 = random_image(8, 16, &mut rng);
        let s = GroupElement::translation(1, 3);
        assert!(residual(&blur, s, &x8) < 1e-12);
        assert!(residual(&inpaint, s, &x8) > 1e-3);
        assert!(residual(&mri, s, &x816) > 1e-3);
        // A Fourier mask is diagonal in the same basis as every shift, so
        // the MRI normal operator itself still commutes with shifts.
        let normal = mri.normal(&s.apply(&x816).unwrap()).unwrap();
        let shifted = s.apply(&mri.normal(&x816).unwrap()).unwrap();
        assert!(normal.sub(&shifted).unwrap().norm2() < 1e-10);
    }
}
