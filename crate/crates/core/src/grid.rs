//! Numeric carriers: real and complex images, small dense matrices, the
//! unitary 2D FFT, circular convolution and image metrics.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{ensure_same_shape, Error, Result};

/// Real-valued image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} image needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image value at index {bad}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds an image without the finiteness scan. Dimensions are still checked.
    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Row vector image `1 x n`, used for the small dense toy problems.
    pub fn from_slice_row(values: &[f64]) -> Self {
        Self::from_vec_unchecked(1, values.len(), values.to_vec())
    }

    /// Unit impulse at `(i, j)`.
    pub fn basis(height: usize, width: usize, i: usize, j: usize) -> Self {
        let mut e = Self::zeros(height, width);
        e.data[i * width + j] = 1.0;
        e
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.width + j] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image::from_vec_unchecked(
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    fn zip_with(&self, other: &Image, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        ensure_same_shape(what, self.shape(), other.shape())?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Image::from_vec_unchecked(self.height, self.width, data))
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Image) -> Result<Image> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Image {
        self.map(|v| v * s)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Image) -> Result<()> {
        ensure_same_shape("axpy", self.shape(), other.shape())?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.data)
    }

    /// Copy of the `h x w` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Image> {
        if top + h > self.height || left + w > self.width || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "crop {h}x{w} at ({top},{left}) outside {}x{} image",
                self.height, self.width
            )));
        }
        Ok(Image::from_fn(h, w, |i, j| self.get(top + i, left + j)))
    }
}

/// Complex-valued image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} complex image needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn from_real(x: &Image) -> Self {
        Self {
            height: x.height,
            width: x.width,
            data: x.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.width + j]
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn real_part(&self) -> Image {
        Image::from_vec_unchecked(
            self.height,
            self.width,
            self.data.iter().map(|c| c.re).collect(),
        )
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.data.iter().fold(0.0, |m, c| m.max(c.im.abs()))
    }

    pub fn hadamard(&self, other: &ComplexImage) -> Result<ComplexImage> {
        ensure_same_shape("complex hadamard", self.shape(), other.shape())?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(ComplexImage {
            height: self.height,
            width: self.width,
            data,
        })
    }

    pub fn conj(&self) -> ComplexImage {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|c| c.conj()).collect(),
        }
    }

    /// Real inner product `Re <self, other>`, the one used for adjoints.
    pub fn real_dot(&self, other: &ComplexImage) -> Result<f64> {
        ensure_same_shape("complex dot", self.shape(), other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum())
    }
}

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged matrix rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.entries[i * n + i] = v;
        }
        m
    }

    /// Assembles a matrix from its columns.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::DimensionMismatch(format!(
                    "column {j} has {} entries, expected {rows}",
                    col.len()
                )));
            }
            for (i, &v) in col.iter().enumerate() {
                m.entries[i * cols + j] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.entries[j * self.rows + i] = self.entries[i * self.cols + j];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "matvec: {}x{} matrix with vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| dot_unchecked(self.row(i), x))
            .collect())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.entries[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.entries[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let other_row = &other.entries[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
        ensure_same_shape("matrix", (self.rows, self.cols), (other.rows, other.cols))?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|v| v * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.entries)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> DenseMatrix {
        let (rows, cols) = m.shape();
        let mut out = DenseMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.entries[i * cols + j] = m[(i, j)];
            }
        }
        out
    }
}

fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dot(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "dot of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(dot_unchecked(x, y))
}

pub fn norm2(x: &[f64]) -> f64 {
    dot_unchecked(x, x).sqrt()
}

pub fn frobenius(m: &DenseMatrix) -> f64 {
    norm2(m.entries())
}

/// PSNR in dB; `f64::INFINITY` when the images are identical.
pub fn psnr(x: &Image, reference: &Image, peak: f64) -> Result<f64> {
    ensure_same_shape("psnr", x.shape(), reference.shape())?;
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "psnr peak must be positive, got {peak}"
        )));
    }
    let mse = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

fn fft2_in_place(height: usize, width: usize, data: &mut [Complex64], inverse: bool) {
    let row_fft = plan(width, inverse);
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = plan(height, inverse);
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for j in 0..width {
        for i in 0..height {
            column[i] = data[i * width + j];
        }
        col_fft.process(&mut column);
        for i in 0..height {
            data[i * width + j] = column[i];
        }
    }
    let s = 1.0 / ((height * width) as f64).sqrt();
    for v in data.iter_mut() {
        *v *= s;
    }
}

/// Unitary 2D DFT (scale `1/sqrt(HW)`).
pub fn fft2(x: &Image) -> ComplexImage {
    fft2_complex(&ComplexImage::from_real(x))
}

pub fn fft2_complex(x: &ComplexImage) -> ComplexImage {
    let mut out = x.clone();
    fft2_in_place(out.height, out.width, &mut out.data, false);
    out
}

pub fn ifft2_complex(x: &ComplexImage) -> ComplexImage {
    let mut out = x.clone();
    fft2_in_place(out.height, out.width, &mut out.data, true);
    out
}

/// Inverse unitary DFT keeping the real part.
///
/// The input is expected to be Hermitian (the transform of a real image);
/// debug builds assert the discarded imaginary part is below `1e-9` relative
/// to the signal.
pub fn ifft2(x: &ComplexImage) -> Image {
    let out = ifft2_complex(x);
    debug_assert!(
        out.max_abs_imag() <= 1e-9 * (1.0 + out.norm2()),
        "ifft2 of a non-Hermitian spectrum (imaginary residue {})",
        out.max_abs_imag()
    );
    out.real_part()
}

/// Embeds a small kernel into an `h x w` grid with its centre
/// `(kh / 2, kw / 2)` at pixel `(0, 0)`; negative offsets wrap around.
pub fn embed_kernel(kernel: &Image, height: usize, width: usize) -> Result<Image> {
    let (kh, kw) = kernel.shape();
    if kh > height || kw > width {
        return Err(Error::InvalidArgument(format!(
            "{kh}x{kw} kernel larger than {height}x{width} image"
        )));
    }
    let (ci, cj) = (kh / 2, kw / 2);
    let mut out = Image::zeros(height, width);
    for a in 0..kh {
        for b in 0..kw {
            let i = (a + height - ci) % height;
            let j = (b + width - cj) % width;
            out.data[i * width + j] += kernel.get(a, b);
        }
    }
    Ok(out)
}

/// Spectrum of an embedded kernel scaled so that pointwise multiplication
/// in the unitary Fourier domain is exactly circular convolution.
pub fn kernel_transfer(kernel: &Image, height: usize, width: usize) -> Result<ComplexImage> {
    let embedded = embed_kernel(kernel, height, width)?;
    let mut spectrum = fft2(&embedded);
    let s = ((height * width) as f64).sqrt();
    for v in spectrum.data_mut() {
        *v *= s;
    }
    Ok(spectrum)
}

/// Multiplies the spectrum of `x` by `transfer` and returns to pixel space.
pub fn apply_transfer(x: &Image, transfer: &ComplexImage) -> Result<Image> {
    ensure_same_shape("transfer", x.shape(), transfer.shape())?;
    let spectrum = fft2(x).hadamard(transfer)?;
    Ok(ifft2(&spectrum))
}

/// Circular convolution `out[p] = sum_q k[q] x[p - q]` with the kernel
/// embedded by [`embed_kernel`].
pub fn circular_convolve(x: &Image, kernel: &Image) -> Result<Image> {
    let transfer = kernel_transfer(kernel, x.height(), x.width())?;
    apply_transfer(x, &transfer)
}
