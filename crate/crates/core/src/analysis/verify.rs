//! Executable verifiers. Each returns a [`PropositionVerdict`]; a failed
//! check is a verdict, not an error.

use std::fmt;

use super::{
    equivariance_residual, fourier_offdiagonal_ratio, reynolds_matrix_average, spectral_norm_svd,
    symmetry_error,
};
use crate::denoisers::{CirculantDenoiser, Denoiser, ReynoldsEquivariantDenoiser};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, ExecPolicy};
use crate::grid::{frobenius, DenseMatrix, Image};
use crate::groups::{Group, GroupSpec};
use crate::operators::{gram_matrix, InpaintingOperator, LinearOperator};
use crate::rng::SeededRng;

pub const PROP1_TOL: f64 = 1e-10;
pub const PROP2_MARGIN: f64 = 1e-10;
/// Principal components with a larger commutator residual count as non-equivariant.
pub const PROP2_EQUIVARIANCE_TOL: f64 = 1e-8;
pub const PROP3_DENOISER_TOL: f64 = 1e-8;
pub const PROP3_GRAM_TOL: f64 = 1e-3;
pub const RISK_MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropositionId {
    One,
    Two,
    Three,
    Risk,
}

impl fmt::Display for PropositionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PropositionId::One => "prop1",
            PropositionId::Two => "prop2",
            PropositionId::Three => "prop3",
            PropositionId::Risk => "risk",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub passed: bool,
    pub values: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropositionVerdict {
    pub proposition: PropositionId,
    pub passed: bool,
    /// The check could not run because its hypothesis does not hold.
    pub premise_violated: bool,
    pub measured: Vec<(&'static str, f64)>,
    pub tolerance: f64,
    pub trials: usize,
    pub counterexample: Option<String>,
    pub records: Vec<TrialRecord>,
}

impl PropositionVerdict {
    fn new(proposition: PropositionId, tolerance: f64, records: Vec<TrialRecord>) -> Self {
        let failed = records.iter().find(|r| !r.passed);
        let counterexample =
            failed.map(|r| format!("trial {}: {}", r.trial, fmt_values(&r.values)));
        Self {
            proposition,
            passed: failed.is_none() && !records.is_empty(),
            premise_violated: false,
            measured: Vec::new(),
            tolerance,
            trials: records.len(),
            counterexample,
            records,
        }
    }

    pub fn measured(&self, key: &str) -> Option<f64> {
        self.measured
            .iter()
            .find(|(k, _)| *k == key)
            .map(|&(_, v)| v)
    }

    /// One `key=value` line per trial.
    pub fn record_lines(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| {
                format!(
                    "proposition={} trial={} passed={} {}",
                    self.proposition,
                    r.trial,
                    r.passed,
                    fmt_values(&r.values)
                )
            })
            .collect()
    }
}

fn fmt_values(values: &[(&'static str, f64)]) -> String {
    values
        .iter()
        .map(|(k, v)| format!("{k}={v:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

impl fmt::Display for PropositionVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.premise_violated {
            "PREMISE VIOLATED"
        } else if self.passed {
            "PASS"
        } else {
            "FAIL"
        };
        write!(
            f,
            "{}: {status} ({} trials, tolerance {:e})",
            self.proposition, self.trials, self.tolerance
        )?;
        if !self.measured.is_empty() {
            write!(f, " {}", fmt_values(&self.measured))?;
        }
        if let Some(c) = &self.counterexample {
            write!(f, "; counterexample {c}")?;
        }
        Ok(())
    }
}

/// Averages over the shift-flip product group as flips after shifts; exact
/// because every element factors uniquely as `s ∘ f`.
fn shift_flip_average(m: &DenseMatrix, n_side: usize) -> Result<DenseMatrix> {
    let shifts = GroupSpec::Shifts { stride: 1 }.build(n_side, n_side)?;
    let flips = GroupSpec::Flips.build(n_side, n_side)?;
    let inner = reynolds_matrix_average(m, &shifts, n_side, n_side)?;
    reynolds_matrix_average(&inner, &flips, n_side, n_side)
}

fn asymmetry(m: &DenseMatrix) -> Result<f64> {
    Ok(frobenius(&m.sub(&m.transpose())?))
}

/// Random circulant denoisers on `n_side x n_side` images become symmetric
/// after averaging over shifts and flips; even real filters give symmetric
/// circulants without averaging.
pub fn verify_prop1(
    trials: usize,
    n_side: usize,
    rng: &SeededRng,
    policy: ExecPolicy,
) -> Result<PropositionVerdict> {
    if n_side * n_side > 256 {
        return Err(Error::SizeCap {
            what: "prop1 shift group order",
            size: n_side * n_side,
            cap: 256,
        });
    }
    let records = try_map_indexed(policy, trials, |t| {
        let mut r = rng.derive_indexed("prop1", t as u64);
        let filter = Image::from_fn(n_side, n_side, |_, _| r.gaussian());
        let m = CirculantDenoiser::new(filter.clone(), false).matrix()?;
        let before = symmetry_error(&m)?;
        let averaged = shift_flip_average(&m, n_side)?;
        let after = asymmetry(&averaged)?;
        let even = asymmetry(&CirculantDenoiser::new(filter, true).matrix()?)?;
        Ok::<_, Error>(TrialRecord {
            trial: t,
            passed: before > 0.0 && after < PROP1_TOL && even == 0.0,
            values: vec![
                ("symmetry_error_before", before),
                ("asymmetry_after", after),
                ("asymmetry_even", even),
            ],
        })
    })?;
    let worst = records.iter().map(|r| r.values[1].1).fold(0.0, f64::max);
    let mut v = PropositionVerdict::new(PropositionId::One, PROP1_TOL, records);
    v.measured = vec![("max_asymmetry_after", worst)];
    Ok(v)
}

/// Outcome of the principal-component test for one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop2Instance {
    pub norm: f64,
    pub averaged_norm: f64,
    /// `max_g ‖T_g⁻¹ u₁v₁ᵀ T_g − u₁v₁ᵀ‖_F`.
    pub principal_residual: f64,
    pub spectral_gap: f64,
}

impl Prop2Instance {
    pub fn principal_equivariant(&self) -> bool {
        self.principal_residual <= PROP2_EQUIVARIANCE_TOL
    }

    /// Strict decrease beyond the margin when the principal component is not
    /// equivariant; equality otherwise.
    pub fn holds(&self) -> bool {
        if self.principal_equivariant() {
            (self.averaged_norm - self.norm).abs() <= 1e-12 * self.norm
        } else {
            self.averaged_norm < self.norm - PROP2_MARGIN
        }
    }
}

pub fn prop2_instance(
    m: &DenseMatrix,
    group: &Group,
    height: usize,
    width: usize,
) -> Result<Prop2Instance> {
    let svd = m.to_dmatrix().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Degenerate("svd failed".into())),
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = order[0];
    let norm = svd.singular_values[top];
    let second = order.get(1).map_or(0.0, |&k| svd.singular_values[k]);
    let n = m.rows();
    let mut principal = DenseMatrix::zeros(n, m.cols());
    for i in 0..n {
        for j in 0..m.cols() {
            principal.set(i, j, u[(i, top)] * v_t[(top, j)]);
        }
    }
    let averaged = reynolds_matrix_average(m, group, height, width)?;
    Ok(Prop2Instance {
        norm,
        averaged_norm: spectral_norm_svd(&averaged),
        principal_residual: equivariance_residual(&principal, group, height, width)?,
        spectral_gap: norm - second,
    })
}

const PROP2_GAP: f64 = 1e-6;
const PROP2_REDRAWS: usize = 10;

/// Group averaging strictly lowers the operator norm of random matrices whose
/// leading singular pair is not equivariant, and leaves equivariant matrices'
/// norms unchanged.
pub fn verify_prop2(
    trials: usize,
    height: usize,
    width: usize,
    group: &Group,
    rng: &SeededRng,
    policy: ExecPolicy,
) -> Result<PropositionVerdict> {
    let n = height * width;
    if n > 256 {
        return Err(Error::SizeCap {
            what: "prop2 matrix dimension",
            size: n,
            cap: 256,
        });
    }
    let records = try_map_indexed(policy, trials, |t| {
        let mut r = rng.derive_indexed("prop2", t as u64);
        let mut draw = None;
        for _ in 0..PROP2_REDRAWS {
            let m = DenseMatrix::new(n, n, r.gaussian_vec(n * n))?;
            let inst = prop2_instance(&m, group, height, width)?;
            if inst.spectral_gap > PROP2_GAP * inst.norm {
                draw = Some((m, inst));
                break;
            }
        }
        let (m, inst) = draw.ok_or_else(|| {
            Error::Degenerate("no draw with a distinct top singular value".into())
        })?;
        let equivariant = reynolds_matrix_average(&m, group, height, width)?;
        let eq_inst = prop2_instance(&equivariant, group, height, width)?;
        let eq_gap = (eq_inst.averaged_norm - eq_inst.norm).abs();
        Ok::<_, Error>(TrialRecord {
            trial: t,
            passed: !inst.principal_equivariant() && inst.holds() && eq_gap <= 1e-12 * eq_inst.norm,
            values: vec![
                ("norm", inst.norm),
                ("averaged_norm", inst.averaged_norm),
                ("margin", inst.norm - inst.averaged_norm),
                ("principal_residual", inst.principal_residual),
                ("equivariant_norm_change", eq_gap),
            ],
        })
    })?;
    let min_margin = records
        .iter()
        .map(|r| r.values[2].1)
        .fold(f64::INFINITY, f64::min);
    let mut v = PropositionVerdict::new(PropositionId::Two, PROP2_MARGIN, records);
    v.measured = vec![("min_margin", min_margin)];
    Ok(v)
}

const PROP3_DENOISER_SEED: u64 = 0x0005_eed3;

/// A shift-equivariant linear denoiser is diagonal in the Fourier basis while
/// the normal operator of a non-shift-equivariant `A` is not.
pub fn verify_prop3(a: &dyn LinearOperator, n_side: usize) -> Result<PropositionVerdict> {
    let shape = (n_side, n_side);
    crate::error::ensure_same_shape("prop3 operator", shape, a.input_shape())?;
    let gram = gram_matrix(a, ExecPolicy::Sequential)?;
    let shifts = GroupSpec::Shifts { stride: 1 }.build(n_side, n_side)?;
    let commutator = equivariance_residual(&gram, &shifts, n_side, n_side)?;
    let gram_norm = frobenius(&gram);
    let mut rng = SeededRng::new(PROP3_DENOISER_SEED);
    let filter = Image::from_fn(n_side, n_side, |_, _| rng.gaussian());
    let m = CirculantDenoiser::new(filter, false).matrix()?;
    let m_ratio = fourier_offdiagonal_ratio(&m, n_side, n_side)?;
    let g_ratio = fourier_offdiagonal_ratio(&gram, n_side, n_side)?;
    let premise = commutator > 1e-10 * gram_norm.max(f64::MIN_POSITIVE);
    let record = TrialRecord {
        trial: 0,
        passed: premise && m_ratio < PROP3_DENOISER_TOL && g_ratio > PROP3_GRAM_TOL,
        values: vec![
            ("gram_shift_commutator", commutator),
            ("denoiser_offdiag_ratio", m_ratio),
            ("gram_offdiag_ratio", g_ratio),
        ],
    };
    let mut v = PropositionVerdict::new(PropositionId::Three, PROP3_DENOISER_TOL, vec![record]);
    v.premise_violated = !premise;
    if !premise {
        v.passed = false;
        v.counterexample = Some("A^T A commutes with every shift".into());
    }
    v.measured = vec![
        ("denoiser_offdiag_ratio", m_ratio),
        ("gram_offdiag_ratio", g_ratio),
    ];
    Ok(v)
}

const PROP3_REDRAWS: usize = 100;

/// [`verify_prop3`] over `masks` random inpainting masks on
/// `n_side x n_side` grids. Masks whose normal operator commutes with shifts
/// (all pixels kept or all dropped) are redrawn; draw `k` of mask `t` uses
/// the `prop3` child stream with index `t * 100 + k`.
pub fn verify_prop3_random_inpainting(
    masks: usize,
    n_side: usize,
    keep_rate: f64,
    rng: &SeededRng,
) -> Result<PropositionVerdict> {
    let mut records = Vec::with_capacity(masks);
    let mut worst_denoiser = 0.0f64;
    let mut least_gram = f64::INFINITY;
    for t in 0..masks {
        let mut found = None;
        for k in 0..PROP3_REDRAWS {
            let mut r = rng.derive_indexed("prop3", (t * PROP3_REDRAWS + k) as u64);
            let a = InpaintingOperator::random(n_side, n_side, keep_rate, &mut r)?;
            let v = verify_prop3(&a, n_side)?;
            if !v.premise_violated {
                found = Some(v);
                break;
            }
        }
        let v = found.ok_or_else(|| {
            Error::Degenerate("every inpainting mask commuted with shifts".into())
        })?;
        let m_ratio = v.measured("denoiser_offdiag_ratio").unwrap_or(f64::NAN);
        let g_ratio = v.measured("gram_offdiag_ratio").unwrap_or(f64::NAN);
        worst_denoiser = worst_denoiser.max(m_ratio);
        least_gram = least_gram.min(g_ratio);
        let mut record = v.records.into_iter().next().expect("one record");
        record.trial = t;
        records.push(record);
    }
    let mut v = PropositionVerdict::new(PropositionId::Three, PROP3_DENOISER_TOL, records);
    v.measured = vec![
        ("max_denoiser_offdiag_ratio", worst_denoiser),
        ("min_gram_offdiag_ratio", least_gram),
    ];
    Ok(v)
}

/// Group-invariant image: the orbit average of a uniform random draw.
pub fn invariant_signal(
    group: &Group,
    height: usize,
    width: usize,
    rng: &mut SeededRng,
) -> Result<Image> {
    let u = Image::from_fn(height, width, |_, _| rng.uniform());
    let mut acc = Image::zeros(height, width);
    for g in group.elements() {
        acc.axpy(1.0, &g.apply(&u)?)?;
    }
    Ok(acc.scale(1.0 / group.order() as f64))
}

/// Paired Monte-Carlo comparison of `E‖D_G(x+ε) − x‖` against
/// `E‖D(x+ε) − x‖` over group-invariant signals with `ε ~ N(0, σ²I)`.
/// Passes when the averaged risk is at most the base risk plus two paired
/// standard errors.
#[allow(clippy::too_many_arguments)]
pub fn verify_risk_inequality(
    d: &dyn Denoiser,
    group: &Group,
    height: usize,
    width: usize,
    sigma: f64,
    samples: usize,
    rng: &SeededRng,
    policy: ExecPolicy,
) -> Result<PropositionVerdict> {
    if samples < RISK_MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "risk estimate needs at least {RISK_MIN_SAMPLES} samples, got {samples}"
        )));
    }
    let averaged =
        ReynoldsEquivariantDenoiser::new(d, group.clone())?.with_policy(ExecPolicy::Sequential);
    let pairs = try_map_indexed(policy, samples, |i| {
        let mut r = rng.derive_indexed("risk", i as u64);
        let x = invariant_signal(group, height, width, &mut r)?;
        let z = x.map(|v| v + sigma * r.gaussian());
        let base = d.denoise(&z, sigma)?.sub(&x)?.norm2();
        let eq = averaged.denoise(&z, sigma)?.sub(&x)?.norm2();
        Ok::<_, Error>((base, eq))
    })?;
    let n = samples as f64;
    let base_risk = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let eq_risk = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let diffs: Vec<f64> = pairs.iter().map(|p| p.1 - p.0).collect();
    let mean_diff = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|v| (v - mean_diff).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let max_abs_diff = diffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let passed = eq_risk <= base_risk + 2.0 * se;
    let records = pairs
        .iter()
        .enumerate()
        .map(|(i, &(b, e))| TrialRecord {
            trial: i,
            passed: true,
            values: vec![("base_error", b), ("averaged_error", e)],
        })
        .collect();
    let mut v = PropositionVerdict::new(PropositionId::Risk, 2.0, records);
    v.passed = passed;
    if !passed {
        v.counterexample = Some(format!(
            "averaged risk {eq_risk:e} exceeds base {base_risk:e} + 2 se {se:e}"
        ));
    }
    v.measured = vec![
        ("base_risk", base_risk),
        ("averaged_risk", eq_risk),
        ("mean_paired_difference", mean_diff),
        ("paired_standard_error", se),
        ("max_abs_paired_difference", max_abs_diff),
    ];
    Ok(v)
}
