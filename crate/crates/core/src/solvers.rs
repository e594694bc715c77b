//! PnP forward-backward, RED gradient descent and unadjusted Langevin
//! iterations, optionally with an equivariant denoiser at every step.
//!
//! Trace record `k` (1-based) describes the step `x_{k-1} -> x_k`:
//! `residual = ‖x_k − x_{k-1}‖ / ‖x_{k-1}‖`, and the data fidelity
//! `½‖A x_k − y‖²` and PSNR are evaluated at the new iterate. When
//! `x_{k-1} = 0` the residual falls back to the absolute step length.
//!
//! Randomness: the Monte-Carlo group draws come from the `mc-group` child of
//! the config seed and the Langevin noise from the `ula` child. Within a ULA
//! step the group element is drawn before the noise image.

use std::fmt::Write as _;
use std::time::Instant;

use crate::denoisers::{Denoiser, MonteCarloEquivariantDenoiser, ReynoldsEquivariantDenoiser};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::grid::{psnr, Image};
use crate::groups::GroupSpec;
use crate::operators::{LinearOperator, Measurement};
use crate::rng::SeededRng;

/// Iterations stored one-to-one before the trace starts keeping every 10th.
pub const TRACE_FULL_LIMIT: usize = 100_000;
pub const TRACE_DECIMATION: usize = 10;
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 1e6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equivariance {
    None,
    MonteCarlo(GroupSpec),
    Reynolds(GroupSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// `x_0 = A^T y`.
    Adjoint,
    Zeros,
    Given(Image),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub gamma: f64,
    /// RED/ULA weight; must be `None` for PnP.
    pub lambda: Option<f64>,
    pub sigma: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub equivariance: Equivariance,
    pub init: Init,
    /// ULA iterations discarded before statistics accumulate.
    pub burn_in: usize,
    pub stop_tol: Option<f64>,
    /// Run aborts once `‖x_k‖ > factor * scale`, where `scale = ‖x_0‖`, or
    /// `‖A^T y‖` when `x_0 = 0`, or 1 when both vanish.
    pub divergence_factor: f64,
    /// When false, ULA skips its injected noise (test-only degenerate mode).
    pub langevin_noise: bool,
    pub psnr_peak: f64,
    pub policy: ExecPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda: None,
            sigma: 0.0,
            max_iters: DEFAULT_MAX_ITERS,
            seed: 0,
            equivariance: Equivariance::None,
            init: Init::Adjoint,
            burn_in: 0,
            stop_tol: None,
            divergence_factor: DEFAULT_DIVERGENCE_FACTOR,
            langevin_noise: true,
            psnr_peak: 1.0,
            policy: ExecPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Algorithm {
    Pnp,
    Red,
    Ula,
}

impl SolverConfig {
    fn validate(&self, algorithm: Algorithm) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.sigma >= 0.0) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(self.divergence_factor > 0.0) {
            return bad("divergence factor must be positive".into());
        }
        match (algorithm, self.lambda) {
            (Algorithm::Pnp, Some(_)) => {
                return bad(
                    "lambda is not a PnP parameter; set the denoiser strength instead".into(),
                )
            }
            (Algorithm::Red | Algorithm::Ula, None) => return bad("RED and ULA need lambda".into()),
            (Algorithm::Red | Algorithm::Ula, Some(l)) if !(l > 0.0) || !l.is_finite() => {
                return bad(format!("lambda must be positive, got {l}"))
            }
            _ => {}
        }
        if algorithm == Algorithm::Ula && self.burn_in >= self.max_iters {
            return bad(format!(
                "burn_in {} must be below max_iters {}",
                self.burn_in, self.max_iters
            ));
        }
        if let Some(tol) = self.stop_tol {
            if !(tol >= 0.0) {
                return bad(format!("stop_tol must be non-negative, got {tol}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub residual: f64,
    pub data_fidelity: f64,
    pub psnr: Option<f64>,
    /// Seconds spent on this iteration.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// Iteration after which only every `TRACE_DECIMATION`-th record is kept.
    pub decimated_after: Option<usize>,
}

impl Trace {
    fn push(&mut self, record: TraceRecord) {
        if record.iter > TRACE_FULL_LIMIT {
            self.decimated_after = Some(TRACE_FULL_LIMIT);
            if !record.iter.is_multiple_of(TRACE_DECIMATION) {
                return;
            }
        }
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// `iter,residual,data_fidelity,psnr`; psnr is empty without ground truth.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,residual,data_fidelity,psnr\n");
        for r in &self.records {
            let _ = write!(out, "{},{},{},", r.iter, r.residual, r.data_fidelity);
            if let Some(p) = r.psnr {
                let _ = write!(out, "{p}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Divergence {
    NormExceeded { norm: f64, bound: f64 },
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    /// All `max_iters` iterations ran.
    Completed,
    /// `stop_tol` met at this iteration.
    Converged { iter: usize },
    /// Guard tripped at this iteration; the returned image is the last
    /// iterate that passed the guard.
    Diverged { iter: usize, reason: Divergence },
}

impl RunStatus {
    pub fn is_diverged(&self) -> bool {
        matches!(self, RunStatus::Diverged { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Converged { .. } => "converged",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverRun {
    pub x: Image,
    pub trace: Trace,
    pub status: RunStatus,
}

/// Online per-pixel mean and unbiased variance (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct UlaStats {
    shape: (usize, usize),
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl UlaStats {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            shape: (height, width),
            count: 0,
            mean: vec![0.0; height * width],
            m2: vec![0.0; height * width],
        }
    }

    pub fn push(&mut self, x: &Image) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x.data()) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn samples_counted(&self) -> usize {
        self.count
    }

    pub fn sample_mean(&self) -> Image {
        Image::from_vec_unchecked(self.shape.0, self.shape.1, self.mean.clone())
    }

    /// Zero until two samples are available.
    pub fn sample_variance(&self) -> Image {
        let denom = self.count.saturating_sub(1).max(1) as f64;
        let data = self.m2.iter().map(|s| (s / denom).max(0.0)).collect();
        Image::from_vec_unchecked(self.shape.0, self.shape.1, data)
    }
}

#[derive(Debug, Clone)]
pub struct UlaRun {
    pub stats: UlaStats,
    pub last: Image,
    pub trace: Trace,
    pub status: RunStatus,
}

/// The per-iteration denoiser, possibly wrapped.
#[allow(clippy::large_enum_variant)]
enum StepDenoiser<'a> {
    Plain(&'a dyn Denoiser),
    MonteCarlo(MonteCarloEquivariantDenoiser<&'a dyn Denoiser>),
    Reynolds(ReynoldsEquivariantDenoiser<&'a dyn Denoiser>),
}

impl<'a> StepDenoiser<'a> {
    fn new(d: &'a dyn Denoiser, cfg: &SolverConfig, shape: (usize, usize)) -> Result<Self> {
        let root = SeededRng::new(cfg.seed);
        Ok(match cfg.equivariance {
            Equivariance::None => StepDenoiser::Plain(d),
            Equivariance::MonteCarlo(spec) => {
                StepDenoiser::MonteCarlo(MonteCarloEquivariantDenoiser::new(
                    d,
                    spec.build(shape.0, shape.1)?,
                    root.derive("mc-group"),
                ))
            }
            Equivariance::Reynolds(spec) => StepDenoiser::Reynolds(
                ReynoldsEquivariantDenoiser::new(d, spec.build(shape.0, shape.1)?)?
                    .with_policy(cfg.policy),
            ),
        })
    }

    fn denoise(&mut self, x: &Image, sigma: f64) -> Result<Image> {
        match self {
            StepDenoiser::Plain(d) => d.denoise(x, sigma),
            StepDenoiser::MonteCarlo(d) => d.denoise(x, sigma),
            StepDenoiser::Reynolds(d) => d.denoise(x, sigma),
        }
    }
}

fn initial_point(a: &dyn LinearOperator, y: &Measurement, init: &Init) -> Result<Image> {
    let (h, w) = a.input_shape();
    match init {
        Init::Adjoint => a.adjoint(y),
        Init::Zeros => Ok(Image::zeros(h, w)),
        Init::Given(x) => {
            crate::error::ensure_same_shape("initial point", (h, w), x.shape())?;
            Ok(x.clone())
        }
    }
}

fn data_fidelity(a: &dyn LinearOperator, x: &Image, y: &Measurement) -> Result<f64> {
    let r = a.apply(x)?.sub(y)?;
    Ok(0.5 * r.norm2().powi(2))
}

/// Relative step, with the absolute step when the previous iterate is zero.
pub fn relative_change(next: &Image, prev: &Image) -> f64 {
    let step = next
        .data()
        .iter()
        .zip(prev.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if step == 0.0 {
        return 0.0;
    }
    let base = prev.norm2();
    if base > 0.0 {
        step / base
    } else {
        step
    }
}

/// Gradient step `x - gamma A^T (A x - y)`.
fn gradient_step(a: &dyn LinearOperator, y: &Measurement, x: &Image, gamma: f64) -> Result<Image> {
    let grad = a.adjoint(&a.apply(x)?.sub(y)?)?;
    let mut out = x.clone();
    out.axpy(-gamma, &grad)?;
    Ok(out)
}

struct Loop<'a> {
    a: &'a dyn LinearOperator,
    y: &'a Measurement,
    cfg: &'a SolverConfig,
    gt: Option<&'a Image>,
    bound: f64,
    trace: Trace,
}

enum StepOutcome {
    Continue,
    Stop(RunStatus),
}

impl<'a> Loop<'a> {
    fn new(
        a: &'a dyn LinearOperator,
        y: &'a Measurement,
        cfg: &'a SolverConfig,
        gt: Option<&'a Image>,
        x0: &Image,
    ) -> Result<Self> {
        if let Some(gt) = gt {
            crate::error::ensure_same_shape("ground truth", a.input_shape(), gt.shape())?;
        }
        let mut scale = x0.norm2();
        if scale == 0.0 {
            scale = a.adjoint(y)?.norm2();
        }
        if scale == 0.0 || !scale.is_finite() {
            scale = 1.0;
        }
        Ok(Self {
            a,
            y,
            cfg,
            gt,
            bound: cfg.divergence_factor * scale,
            trace: Trace::default(),
        })
    }

    /// Checks the guard, records the step and applies the stopping rule.
    fn record(
        &mut self,
        k: usize,
        next: &Image,
        prev: &Image,
        started: Instant,
    ) -> Result<StepOutcome> {
        if !next.is_finite() {
            return Ok(StepOutcome::Stop(RunStatus::Diverged {
                iter: k,
                reason: Divergence::NonFinite,
            }));
        }
        let norm = next.norm2();
        if norm > self.bound {
            return Ok(StepOutcome::Stop(RunStatus::Diverged {
                iter: k,
                reason: Divergence::NormExceeded {
                    norm,
                    bound: self.bound,
                },
            }));
        }
        let residual = relative_change(next, prev);
        let fidelity = data_fidelity(self.a, next, self.y)?;
        let psnr = match self.gt {
            Some(gt) => Some(psnr(next, gt, self.cfg.psnr_peak)?),
            None => None,
        };
        self.trace.push(TraceRecord {
            iter: k,
            residual,
            data_fidelity: fidelity,
            psnr,
            wall_time: started.elapsed().as_secs_f64(),
        });
        if let Some(tol) = self.cfg.stop_tol {
            if residual <= tol {
                return Ok(StepOutcome::Stop(RunStatus::Converged { iter: k }));
            }
        }
        Ok(StepOutcome::Continue)
    }
}

/// Denoiser failures caused by non-finite values become a divergence status.
fn denoise_or_diverge(
    d: &mut StepDenoiser<'_>,
    x: &Image,
    sigma: f64,
    k: usize,
) -> Result<std::result::Result<Image, RunStatus>> {
    match d.denoise(x, sigma) {
        Ok(v) => Ok(Ok(v)),
        Err(Error::NonFinite(_)) => Ok(Err(RunStatus::Diverged {
            iter: k,
            reason: Divergence::NonFinite,
        })),
        Err(e) => Err(e),
    }
}

fn run_deterministic(
    algorithm: Algorithm,
    a: &dyn LinearOperator,
    y: &Measurement,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    gt: Option<&Image>,
    observer: &mut dyn FnMut(usize, &Image),
) -> Result<SolverRun> {
    cfg.validate(algorithm)?;
    let mut x = initial_point(a, y, &cfg.init)?;
    let mut den = StepDenoiser::new(d, cfg, a.input_shape())?;
    let mut lp = Loop::new(a, y, cfg, gt, &x)?;
    observer(0, &x);
    let gamma = cfg.gamma;
    let mut status = RunStatus::Completed;
    for k in 1..=cfg.max_iters {
        let started = Instant::now();
        let next = match algorithm {
            Algorithm::Pnp => {
                let z = gradient_step(a, y, &x, gamma)?;
                match denoise_or_diverge(&mut den, &z, cfg.sigma, k)? {
                    Ok(v) => v,
                    Err(s) => {
                        status = s;
                        break;
                    }
                }
            }
            Algorithm::Red | Algorithm::Ula => {
                let dx = match denoise_or_diverge(&mut den, &x, cfg.sigma, k)? {
                    Ok(v) => v,
                    Err(s) => {
                        status = s;
                        break;
                    }
                };
                red_update(a, y, &x, &dx, gamma, cfg.lambda.unwrap_or(0.0))?
            }
        };
        match lp.record(k, &next, &x, started)? {
            StepOutcome::Continue => {
                observer(k, &next);
                x = next;
            }
            StepOutcome::Stop(s @ RunStatus::Converged { .. }) => {
                observer(k, &next);
                x = next;
                status = s;
                break;
            }
            StepOutcome::Stop(s) => {
                status = s;
                break;
            }
        }
    }
    Ok(SolverRun {
        x,
        trace: lp.trace,
        status,
    })
}

/// `x - gamma A^T (A x - y) - gamma lambda (x - D(x))`.
fn red_update(
    a: &dyn LinearOperator,
    y: &Measurement,
    x: &Image,
    dx: &Image,
    gamma: f64,
    lambda: f64,
) -> Result<Image> {
    let mut next = gradient_step(a, y, x, gamma)?;
    next.axpy(-gamma * lambda, x)?;
    next.axpy(gamma * lambda, dx)?;
    Ok(next)
}

/// `x_{k+1} = D(x_k − γ A^T (A x_k − y))`.
pub fn pnp_fb(
    a: &dyn LinearOperator,
    y: &Measurement,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    gt: Option<&Image>,
) -> Result<SolverRun> {
    run_deterministic(Algorithm::Pnp, a, y, d, cfg, gt, &mut |_, _| {})
}

/// [`pnp_fb`] calling `observer(k, x_k)` for `x_0` and every accepted iterate.
pub fn pnp_fb_observed(
    a: &dyn LinearOperator,
    y: &Measurement,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    gt: Option<&Image>,
    observer: &mut dyn FnMut(usize, &Image),
) -> Result<SolverRun> {
    run_deterministic(Algorithm::Pnp, a, y, d, cfg, gt, observer)
}

/// `x_{k+1} = x_k − γ A^T (A x_k − y) − γ λ (x_k − D(x_k))`.
pub fn red_gd(
    a: &dyn LinearOperator,
    y: &Measurement,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    gt: Option<&Image>,
) -> Result<SolverRun> {
    run_deterministic(Algorithm::Red, a, y, d, cfg, gt, &mut |_, _| {})
}

pub fn red_gd_observed(
    a: &dyn LinearOperator,
    y: &Measurement,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    gt: Option<&Image>,
    observer: &mut dyn FnMut(usize, &Image),
) -> Result<SolverRun> {
    run_deterministic(Algorithm::Red, a, y, d, cfg, gt, observer)
}

/// RED update plus `√(2γ) ε_k`; statistics accumulate over iterates
/// `k > burn_in`. `stop_tol` is ignored.
pub fn ula(
    a: &dyn LinearOperator,
    y: &Measurement,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    gt: Option<&Image>,
) -> Result<UlaRun> {
    ula_observed(a, y, d, cfg, gt, &mut |_, _| {})
}

pub fn ula_observed(
    a: &dyn LinearOperator,
    y: &Measurement,
    d: &dyn Denoiser,
    cfg: &SolverConfig,
    gt: Option<&Image>,
    observer: &mut dyn FnMut(usize, &Image),
) -> Result<UlaRun> {
    cfg.validate(Algorithm::Ula)?;
    let cfg_no_stop = SolverConfig {
        stop_tol: None,
        ..cfg.clone()
    };
    let cfg = &cfg_no_stop;
    let (h, w) = a.input_shape();
    let mut x = initial_point(a, y, &cfg.init)?;
    let mut den = StepDenoiser::new(d, cfg, (h, w))?;
    let mut noise = SeededRng::new(cfg.seed).derive("ula");
    let mut lp = Loop::new(a, y, cfg, gt, &x)?;
    let mut stats = UlaStats::new(h, w);
    let lambda = cfg.lambda.expect("validated");
    let scale = (2.0 * cfg.gamma).sqrt();
    observer(0, &x);
    let mut status = RunStatus::Completed;
    for k in 1..=cfg.max_iters {
        let started = Instant::now();
        let dx = match denoise_or_diverge(&mut den, &x, cfg.sigma, k)? {
            Ok(v) => v,
            Err(s) => {
                status = s;
                break;
            }
        };
        let mut next = red_update(a, y, &x, &dx, cfg.gamma, lambda)?;
        if cfg.langevin_noise {
            for v in next.data_mut() {
                *v += scale * noise.gaussian();
            }
        }
        match lp.record(k, &next, &x, started)? {
            StepOutcome::Continue => {}
            StepOutcome::Stop(s) => {
                status = s;
                break;
            }
        }
        observer(k, &next);
        if k > cfg.burn_in {
            stats.push(&next);
        }
        x = next;
    }
    Ok(UlaRun {
        stats,
        last: x,
        trace: lp.trace,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::{IdentityDenoiser, LinearMatrixDenoiser};
    use crate::grid::DenseMatrix;
    use crate::operators::{DiagonalOperator, IdentityOperator};

    fn diag21() -> DiagonalOperator {
        DiagonalOperator::from_values(&[2.0, 1.0]).unwrap()
    }

    fn real(v: &[f64]) -> Measurement {
        Measurement::Real(Image::from_slice_row(v))
    }

    #[test]
    fn one_step_fixed_point() {
        let a = IdentityOperator::new(1, 3);
        let y = real(&[0.3, -1.0, 2.0]);
        let cfg = SolverConfig {
            gamma: 1.0,
            max_iters: 3,
            init: Init::Zeros,
            ..Default::default()
        };
        let mut iterates = Vec::new();
        let run = pnp_fb_observed(&a, &y, &IdentityDenoiser, &cfg, None, &mut |_, x| {
            iterates.push(x.clone())
        })
        .unwrap();
        assert_eq!(&iterates[1], y.as_real().unwrap());
        assert_eq!(run.trace.records[1].residual, 0.0);
        assert_eq!(run.status, RunStatus::Completed);
    }

    #[test]
    fn lambda_rejected_for_pnp() {
        let cfg = SolverConfig {
            lambda: Some(1.0),
            ..Default::default()
        };
        let err = pnp_fb(&diag21(), &real(&[1.0, 1.0]), &IdentityDenoiser, &cfg, None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let cfg = SolverConfig::default();
        assert!(red_gd(&diag21(), &real(&[1.0, 1.0]), &IdentityDenoiser, &cfg, None).is_err());
    }

    #[test]
    fn red_identity_is_least_squares() {
        let cfg = SolverConfig {
            gamma: 0.1,
            lambda: Some(3.0),
            max_iters: 2000,
            ..Default::default()
        };
        let run = red_gd(&diag21(), &real(&[1.0, 0.5]), &IdentityDenoiser, &cfg, None).unwrap();
        assert!((run.x.data()[0] - 0.5).abs() < 1e-12);
        assert!((run.x.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn divergence_guard() {
        let grow = LinearMatrixDenoiser::new(DenseMatrix::diagonal(&[3.0, 3.0])).unwrap();
        let cfg = SolverConfig {
            gamma: 0.01,
            max_iters: 1000,
            ..Default::default()
        };
        let run = pnp_fb(&diag21(), &real(&[1.0, 1.0]), &grow, &cfg, None).unwrap();
        let RunStatus::Diverged { iter, reason } = run.status else {
            panic!("expected divergence")
        };
        assert!(iter < 20);
        assert!(matches!(reason, Divergence::NormExceeded { .. }));
        assert_eq!(run.trace.records.len(), iter - 1);
    }

    #[test]
    fn stop_tol_and_residual_definition() {
        let m = LinearMatrixDenoiser::new(DenseMatrix::diagonal(&[0.5, 0.5])).unwrap();
        let cfg = SolverConfig {
            gamma: 0.1,
            max_iters: 500,
            stop_tol: Some(1e-6),
            ..Default::default()
        };
        let mut xs = Vec::new();
        let run = pnp_fb_observed(
            &diag21(),
            &real(&[1.0, 2.0]),
            &m,
            &cfg,
            None,
            &mut |_, x| xs.push(x.clone()),
        )
        .unwrap();
        assert!(matches!(run.status, RunStatus::Converged { .. }));
        for (k, r) in run.trace.records.iter().enumerate() {
            assert_eq!(r.iter, k + 1);
            assert_eq!(r.residual, relative_change(&xs[k + 1], &xs[k]));
        }
    }

    #[test]
    fn welford_matches_two_pass() {
        let mut rng = SeededRng::new(2);
        let samples: Vec<Image> = (0..50)
            .map(|_| Image::from_fn(1, 3, |_, _| rng.gaussian()))
            .collect();
        let mut stats = UlaStats::new(1, 3);
        samples.iter().for_each(|s| stats.push(s));
        for p in 0..3 {
            let vals: Vec<f64> = samples.iter().map(|s| s.data()[p]).collect();
            let mean = vals.iter().sum::<f64>() / 50.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 49.0;
            assert!((stats.sample_mean().data()[p] - mean).abs() < 1e-12);
            assert!((stats.sample_variance().data()[p] - var).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_decimation() {
        let mut t = Trace::default();
        for k in 1..=TRACE_FULL_LIMIT + 25 {
            t.push(TraceRecord {
                iter: k,
                residual: 0.0,
                data_fidelity: 0.0,
                psnr: None,
                wall_time: 0.0,
            });
        }
        assert_eq!(t.records.len(), TRACE_FULL_LIMIT + 2);
        assert_eq!(t.decimated_after, Some(TRACE_FULL_LIMIT));
        assert!(t
            .to_csv()
            .starts_with("iter,residual,data_fidelity,psnr\n1,0,0,\n"));
    }
}
