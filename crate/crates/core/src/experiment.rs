//! Recipe runner behind the command-line tool.
//!
//! Random streams are children of the config seed: `mask` (random
//! operators), `noise` (measurement and input noise), `denoiser` (random
//! denoiser parameters), `mc-group` and `ula` (solvers), `patches`
//! (analysis crops), `prop1`, `prop2`, `prop3` and `risk` (verifiers).
//!
//! Artifacts are written under the output directory by plain file name.
//! Everything except `timing.txt` is byte-identical across runs of the same
//! config on the same build.

use std::fmt::{self, Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::analysis::{
    jacobian_fd, reynolds_matrix_average, spectral_norm, symmetry_error, verify_prop1,
    verify_prop2, verify_prop3_random_inpainting, verify_risk_inequality, PropositionVerdict,
};
use crate::config::{
    Algorithm, B1Kind, DenoiserSpec, ExperimentConfig, InitKind, InputSpec, Mode, OperatorSpec,
    Recipe, ReportSection, SolverSection,
};
use crate::denoisers::{
    build_equivariant_b1, soft_threshold, CirculantDenoiser, Denoiser, FnDenoiser,
    HaarSoftThresholdDenoiser, IdentityDenoiser, LinearMatrixDenoiser,
    MonteCarloEquivariantDenoiser, PerturbedProxDenoiser, ReynoldsEquivariantDenoiser,
    TinyConvDenoiser,
};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::grid::{frobenius, psnr, DenseMatrix, Image};
use crate::groups::{Group, GroupSpec};
use crate::io::{encode_pgm, encode_raw, load_image, make_phantom};
use crate::operators::{
    gram_matrix, make_gaussian_kernel, make_line_kernel, simulate, BlurOperator, DenseOperator,
    DiagonalOperator, IdentityOperator, InpaintingOperator, LineAngle, LinearOperator, MriOperator,
    SuperResolutionOperator,
};
use crate::rng::SeededRng;
use crate::solvers::{pnp_fb, red_gd, ula, Equivariance, Init, RunStatus, SolverConfig, Trace};
use crate::toy::toy_example;

/// Process exit status of a recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    Diverged,
    ConfigError,
    VerifierFailed,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Diverged => 2,
            ExitStatus::ConfigError => 3,
            ExitStatus::VerifierFailed => 4,
        }
    }

    pub fn worst(self, other: ExitStatus) -> ExitStatus {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }
}

/// Ordered `key=value` record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: ExitStatus,
    pub summary: Summary,
    /// File names written under the output directory, in write order.
    pub artifacts: Vec<String>,
    pub wall_time: f64,
}

/// Exit status for an error returned by [`run_experiment`], or `None` for
/// failures outside the recipe contract (I/O, numerical breakdown).
pub fn exit_status_for(err: &Error) -> Option<ExitStatus> {
    match err {
        Error::Config(_) => Some(ExitStatus::ConfigError),
        _ => None,
    }
}

struct OutputDir {
    root: PathBuf,
    report: ReportSection,
    written: Vec<String>,
}

impl OutputDir {
    fn create(root: &Path, report: &ReportSection) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            report: report.clone(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let plain = !name.is_empty()
            && name != "."
            && name != ".."
            && !name.contains(['/', '\\'])
            && Path::new(name).file_name().is_some_and(|f| f == name);
        if !plain {
            return Err(Error::InvalidArgument(format!(
                "artifact name `{name}` is not a plain file name"
            )));
        }
        fs::write(self.root.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn image(&mut self, stem: &str, x: &Image) -> Result<()> {
        if !self.report.images {
            return Ok(());
        }
        self.write(&format!("{stem}.eqimg"), &encode_raw(x))?;
        if self.report.pgm_previews {
            self.write(&format!("{stem}.pgm"), &encode_pgm(x)?)?;
        }
        Ok(())
    }

    fn trace(&mut self, stem: &str, trace: &Trace) -> Result<()> {
        if self.report.trace {
            self.write(&format!("{stem}.csv"), trace.to_csv().as_bytes())?;
        }
        Ok(())
    }
}

fn as_config(context: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(format!("{context}: {other}")),
    }
}

pub fn load_input(spec: &InputSpec) -> Result<Image> {
    match (&spec.phantom, &spec.path, spec.height, spec.width) {
        (Some(name), None, Some(h), Some(w)) => make_phantom(name, h, w),
        (None, Some(path), None, None) => load_image(path),
        _ => Err(Error::Config(
            "[input] needs exactly one of `phantom` or `path`".into(),
        )),
    }
}

/// Random operators (inpainting, MRI) draw from `rng`.
pub fn build_operator(
    spec: &OperatorSpec,
    height: usize,
    width: usize,
    rng: &mut SeededRng,
) -> Result<Box<dyn LinearOperator>> {
    Ok(match spec {
        OperatorSpec::Identity => Box::new(IdentityOperator::new(height, width)),
        OperatorSpec::BlurGaussian { std, side } => Box::new(BlurOperator::new(
            make_gaussian_kernel(*std, *side)?,
            height,
            width,
        )?),
        OperatorSpec::BlurLine { length, angle } => Box::new(BlurOperator::new(
            make_line_kernel(*length, LineAngle::from_degrees(*angle)?)?,
            height,
            width,
        )?),
        OperatorSpec::Inpainting { keep_rate } => {
            Box::new(InpaintingOperator::random(height, width, *keep_rate, rng)?)
        }
        OperatorSpec::Mri {
            acceleration,
            center_fraction,
        } => Box::new(MriOperator::random(
            height,
            width,
            *acceleration,
            *center_fraction,
            rng,
        )?),
        OperatorSpec::Sr { factor, std, side } => Box::new(SuperResolutionOperator::new(
            make_gaussian_kernel(*std, *side)?,
            *factor,
            height,
            width,
        )?),
        OperatorSpec::Dense { matrix } => Box::new(DenseOperator::new(
            DenseMatrix::from_rows(matrix)?,
            height,
            width,
        )?),
        OperatorSpec::Diagonal { values } => {
            if height != 1 || width != values.len() {
                return Err(Error::DimensionMismatch(format!(
                    "diagonal operator with {} entries needs a 1x{} input, got {height}x{width}",
                    values.len(),
                    values.len()
                )));
            }
            Box::new(DiagonalOperator::from_values(values)?)
        }
    })
}

/// Random denoiser parameters (`P`, equivariant `B1`) draw from `rng`.
pub fn build_denoiser(
    spec: &DenoiserSpec,
    group: Option<GroupSpec>,
    height: usize,
    width: usize,
    rng: &mut SeededRng,
) -> Result<Box<dyn Denoiser>> {
    Ok(match spec {
        DenoiserSpec::Identity => Box::new(IdentityDenoiser),
        DenoiserSpec::Linear { matrix } => {
            Box::new(LinearMatrixDenoiser::new(DenseMatrix::from_rows(matrix)?)?)
        }
        DenoiserSpec::Circulant { kernel, symmetrize } => {
            let k = Image::new(kernel.len(), kernel[0].len(), kernel.concat())?;
            Box::new(CirculantDenoiser::from_kernel(
                &k,
                height,
                width,
                *symmetrize,
            )?)
        }
        DenoiserSpec::Haar { levels, scale } => {
            Box::new(HaarSoftThresholdDenoiser::new(*levels, *scale)?)
        }
        DenoiserSpec::PerturbedProx {
            b1,
            perturbation_std,
            threshold,
        } => {
            let n = height * width;
            let b1 = match b1 {
                B1Kind::Identity => DenseMatrix::identity(n),
                B1Kind::Equivariant => {
                    let spec = group.ok_or_else(|| {
                        Error::Config("b1 = \"equivariant\" needs a group".into())
                    })?;
                    build_equivariant_b1(&spec.build(height, width)?, height, width, rng)?
                }
            };
            let p = DenseMatrix::new(n, n, rng.gaussian_vec(n * n))?.scale(*perturbation_std);
            Box::new(PerturbedProxDenoiser::new(b1, p, *threshold)?)
        }
        DenoiserSpec::TinyConv { weights } => Box::new(match weights {
            Some(path) => TinyConvDenoiser::load(path)?,
            None => TinyConvDenoiser::reference(),
        }),
    })
}

fn equivariance(mode: Mode, group: Option<GroupSpec>) -> Result<Equivariance> {
    let group =
        || group.ok_or_else(|| Error::Config(format!("mode `{}` needs a group", mode.as_str())));
    Ok(match mode {
        Mode::None => Equivariance::None,
        Mode::Mc => Equivariance::MonteCarlo(group()?),
        Mode::Reynolds => Equivariance::Reynolds(group()?),
    })
}

fn solver_config(
    s: &SolverSection,
    mode: Mode,
    group: Option<GroupSpec>,
    seed: u64,
) -> Result<SolverConfig> {
    let init = match (s.init, &s.init_image) {
        (InitKind::Adjoint, _) => Init::Adjoint,
        (InitKind::Zeros, _) => Init::Zeros,
        (InitKind::Given, Some(p)) => Init::Given(load_image(p)?),
        (InitKind::Given, None) => {
            return Err(Error::Config("init = \"given\" needs init_image".into()))
        }
    };
    Ok(SolverConfig {
        gamma: s.gamma,
        lambda: s.lambda,
        sigma: s.sigma,
        max_iters: s.max_iters,
        seed,
        equivariance: equivariance(mode, group)?,
        init,
        burn_in: s.burn_in,
        stop_tol: s.stop_tol,
        divergence_factor: s.divergence_factor,
        langevin_noise: true,
        psnr_peak: s.psnr_peak,
        policy: ExecPolicy::Parallel,
    })
}

fn push_status(summary: &mut Summary, prefix: &str, status: &RunStatus) {
    summary.push(format!("{prefix}.status"), status.label());
    if let RunStatus::Diverged { iter, .. } = status {
        summary.push(format!("{prefix}.diverged_at"), iter);
    }
}

fn push_trace_tail(summary: &mut Summary, prefix: &str, trace: &Trace) {
    if let Some(r) = trace.last() {
        summary.push(format!("{prefix}.iterations"), r.iter);
        summary.push(format!("{prefix}.final_residual"), r.residual);
        summary.push(format!("{prefix}.final_data_fidelity"), r.data_fidelity);
    }
}

/// Runs one validated experiment and writes its artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let started = Instant::now();
    cfg.validate()?;
    let mut out = OutputDir::create(&cfg.output_dir, &cfg.report)?;
    let mut summary = Summary::default();
    summary.push("recipe", cfg.recipe.as_str());
    summary.push("seed", cfg.seed);
    let status = match cfg.recipe {
        Recipe::Solve => run_solve(cfg, &mut out, &mut summary)?,
        Recipe::Sample => run_sample(cfg, &mut out, &mut summary)?,
        Recipe::Analyze => run_analyze(cfg, &mut out, &mut summary)?,
        Recipe::VerifyProps => run_verify(cfg, &mut out, &mut summary)?,
        Recipe::Toy2d => run_toy2d(&mut out, &mut summary)?,
        Recipe::Denoise => run_denoise(cfg, &mut out, &mut summary)?,
    };
    summary.push("exit_code", status.code());
    out.write("summary.txt", summary.to_string().as_bytes())?;
    let wall_time = started.elapsed().as_secs_f64();
    out.write(
        "timing.txt",
        format!("wall_time_s={wall_time}\n").as_bytes(),
    )?;
    Ok(Outcome {
        status,
        summary,
        artifacts: out.written,
        wall_time,
    })
}

struct Problem {
    x_true: Image,
    a: Box<dyn LinearOperator>,
    y: crate::operators::Measurement,
    denoiser: Box<dyn Denoiser>,
}

fn setup_problem(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<Problem> {
    let root = SeededRng::new(cfg.seed);
    let spec = (
        cfg.input.as_ref(),
        cfg.problem.as_ref(),
        cfg.denoiser.as_ref(),
    );
    let (Some(input), Some(problem), Some(dspec)) = spec else {
        return Err(Error::Config(
            "missing [input], [problem] or [denoiser]".into(),
        ));
    };
    let x_true = load_input(input).map_err(as_config("input"))?;
    let (h, w) = x_true.shape();
    let a = build_operator(&problem.operator, h, w, &mut root.derive("mask"))
        .map_err(as_config("problem"))?;
    let y = simulate(
        a.as_ref(),
        &x_true,
        problem.noise_std,
        &mut root.derive("noise"),
    )?;
    let denoiser = build_denoiser(dspec, cfg.group, h, w, &mut root.derive("denoiser"))
        .map_err(as_config("denoiser"))?;
    let baseline = a.adjoint(&y)?;
    summary.push("operator", a.name());
    summary.push("denoiser", denoiser.name());
    summary.push("adjoint_psnr", psnr(&baseline, &x_true, 1.0)?);
    out.image("ground_truth", &x_true)?;
    out.image("adjoint", &baseline)?;
    Ok(Problem {
        x_true,
        a,
        y,
        denoiser,
    })
}

fn run_solve(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<ExitStatus> {
    let p = setup_problem(cfg, out, summary)?;
    let section = cfg.solver.as_ref().expect("validated");
    let mut status = ExitStatus::Success;
    for &mode in &section.modes {
        let sc = solver_config(section, mode, cfg.group, cfg.seed).map_err(as_config("solver"))?;
        let run = match section.algorithm {
            Algorithm::Pnp => pnp_fb(
                p.a.as_ref(),
                &p.y,
                p.denoiser.as_ref(),
                &sc,
                Some(&p.x_true),
            ),
            Algorithm::Red => red_gd(
                p.a.as_ref(),
                &p.y,
                p.denoiser.as_ref(),
                &sc,
                Some(&p.x_true),
            ),
        }?;
        let m = mode.as_str();
        push_status(summary, m, &run.status);
        push_trace_tail(summary, m, &run.trace);
        summary.push(
            format!("{m}.final_psnr"),
            psnr(&run.x, &p.x_true, section.psnr_peak)?,
        );
        out.image(&format!("recon_{m}"), &run.x)?;
        out.trace(&format!("trace_{m}"), &run.trace)?;
        if run.status.is_diverged() {
            status = ExitStatus::Diverged;
        }
    }
    Ok(status)
}

fn run_sample(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<ExitStatus> {
    let p = setup_problem(cfg, out, summary)?;
    let section = cfg.solver.as_ref().expect("validated");
    let mut status = ExitStatus::Success;
    for &mode in &section.modes {
        let sc = solver_config(section, mode, cfg.group, cfg.seed).map_err(as_config("solver"))?;
        let run = ula(
            p.a.as_ref(),
            &p.y,
            p.denoiser.as_ref(),
            &sc,
            Some(&p.x_true),
        )?;
        let m = mode.as_str();
        push_status(summary, m, &run.status);
        push_trace_tail(summary, m, &run.trace);
        let mean = run.stats.sample_mean();
        let var = run.stats.sample_variance();
        summary.push(format!("{m}.samples"), run.stats.samples_counted());
        // No statistics when the chain stopped before the end of burn-in.
        if run.stats.samples_counted() > 0 {
            summary.push(
                format!("{m}.mean_psnr"),
                psnr(&mean, &p.x_true, section.psnr_peak)?,
            );
            summary.push(format!("{m}.mean_variance"), var.sum() / var.len() as f64);
            out.image(&format!("mean_{m}"), &mean)?;
            out.image(&format!("variance_{m}"), &var)?;
        }
        out.trace(&format!("trace_{m}"), &run.trace)?;
        if run.status.is_diverged() {
            status = ExitStatus::Diverged;
        }
    }
    Ok(status)
}

/// Exact matrices for linear denoisers, so symmetric `M` reports exactly zero.
fn exact_jacobian(
    spec: &DenoiserSpec,
    group: Option<&Group>,
    side: usize,
) -> Result<Option<DenseMatrix>> {
    let DenoiserSpec::Linear { matrix } = spec else {
        return Ok(None);
    };
    let m = DenseMatrix::from_rows(matrix)?;
    Ok(Some(match group {
        None => m,
        Some(g) => reynolds_matrix_average(&m, g, side, side)?,
    }))
}

fn run_analyze(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<ExitStatus> {
    let root = SeededRng::new(cfg.seed);
    let a = &cfg.analysis;
    let image = load_input(cfg.input.as_ref().expect("validated")).map_err(as_config("input"))?;
    let ps = a.patch_size;
    if image.height() < ps || image.width() < ps {
        return Err(Error::Config(format!(
            "patch size {ps} exceeds the {}x{} input",
            image.height(),
            image.width()
        )));
    }
    let dspec = cfg.denoiser.as_ref().expect("validated");
    let base = build_denoiser(dspec, cfg.group, ps, ps, &mut root.derive("denoiser"))
        .map_err(as_config("denoiser"))?;
    let group = cfg
        .group
        .map(|g| g.build(ps, ps))
        .transpose()
        .map_err(as_config("group"))?;
    let averaged = group
        .clone()
        .map(|g| ReynoldsEquivariantDenoiser::new(base.as_ref(), g))
        .transpose()
        .map_err(as_config("group"))?;
    let mut variants: Vec<(&str, &dyn Denoiser, Option<DenseMatrix>)> =
        vec![("base", base.as_ref(), exact_jacobian(dspec, None, ps)?)];
    if let (Some(d), Some(g)) = (&averaged, &group) {
        variants.push(("reynolds", d, exact_jacobian(dspec, Some(g), ps)?));
    }
    summary.push("denoiser", base.name());
    summary.push("patches", a.patches);
    summary.push("patch_size", ps);
    let mut csv =
        String::from("patch,top,left,variant,symmetry_error,local_lipschitz,composed_lipschitz\n");
    let mut patch_rng = root.derive("patches");
    let mut improved = [0usize; 3];
    for k in 0..a.patches {
        let top = patch_rng.index(image.height() - ps + 1);
        let left = patch_rng.index(image.width() - ps + 1);
        let clean = image.crop(top, left, ps, ps)?;
        let patch = clean.map(|v| v + a.patch_noise * patch_rng.gaussian());
        let step = match &cfg.problem {
            Some(problem) => {
                let op = build_operator(
                    &problem.operator,
                    ps,
                    ps,
                    &mut root.derive_indexed("mask", k as u64),
                )
                .map_err(as_config("problem"))?;
                let g = gram_matrix(op.as_ref(), ExecPolicy::Parallel)?;
                Some(DenseMatrix::identity(ps * ps).sub(&g.scale(a.gamma))?)
            }
            None => None,
        };
        let mut metrics = Vec::new();
        for (name, d, exact) in &variants {
            let j = match exact {
                Some(m) => m.clone(),
                None => jacobian_fd(*d, &patch, a.sigma, a.fd_step, ExecPolicy::Parallel)?,
            };
            let sym = symmetry_error(&j)?;
            let lip = spectral_norm(&j)?;
            let composed = step
                .as_ref()
                .map(|s| j.matmul(s).and_then(|m| spectral_norm(&m)))
                .transpose()?;
            let _ = write!(csv, "{k},{top},{left},{name},{sym},{lip},");
            if let Some(c) = composed {
                let _ = write!(csv, "{c}");
            }
            csv.push('\n');
            metrics.push([sym, lip, composed.unwrap_or(f64::NAN)]);
        }
        if metrics.len() == 2 {
            for i in 0..3 {
                if metrics[1][i] < metrics[0][i] {
                    improved[i] += 1;
                }
            }
        }
    }
    out.write("analysis.csv", csv.as_bytes())?;
    if averaged.is_some() {
        summary.push("improved.symmetry_error", improved[0]);
        summary.push("improved.local_lipschitz", improved[1]);
        if cfg.problem.is_some() {
            summary.push("improved.composed_lipschitz", improved[2]);
        }
    }
    Ok(ExitStatus::Success)
}

const RISK_THRESHOLD: f64 = 0.1;
const RISK_PERTURBATION_STD: f64 = 0.02;

fn run_verify(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<ExitStatus> {
    let root = SeededRng::new(cfg.seed);
    let v = &cfg.verify;
    let policy = ExecPolicy::Parallel;
    let mut verdicts: Vec<(String, PropositionVerdict)> = Vec::new();
    verdicts.push((
        "prop1".into(),
        verify_prop1(v.prop1_trials, v.prop1_side, &root, policy)?,
    ));
    let flips2 = GroupSpec::Flips.build(v.prop2_side, v.prop2_side)?;
    verdicts.push((
        "prop2".into(),
        verify_prop2(
            v.prop2_trials,
            v.prop2_side,
            v.prop2_side,
            &flips2,
            &root,
            policy,
        )?,
    ));
    verdicts.push((
        "prop3".into(),
        verify_prop3_random_inpainting(v.prop3_masks, v.prop3_side, v.prop3_keep_rate, &root)?,
    ));
    let n = v.risk_side;
    let flips = GroupSpec::Flips.build(n, n)?;
    let mut drng = root.derive("denoiser");
    let b1 = build_equivariant_b1(&flips, n, n, &mut drng)?;
    let p = DenseMatrix::new(n * n, n * n, drng.gaussian_vec(n * n * n * n))?
        .scale(RISK_PERTURBATION_STD);
    let prox = PerturbedProxDenoiser::new(b1, p, RISK_THRESHOLD)?;
    let tiny = TinyConvDenoiser::reference();
    let pointwise = FnDenoiser::new("pointwise_soft", |x: &Image, _| {
        Ok(x.map(|v| soft_threshold(v, RISK_THRESHOLD)))
    });
    let bases: [(&str, &dyn Denoiser); 3] = [
        ("tiny_conv", &tiny),
        ("perturbed_prox", &prox),
        ("pointwise_soft", &pointwise),
    ];
    for (name, d) in bases {
        let verdict =
            verify_risk_inequality(d, &flips, n, n, v.risk_sigma, v.risk_samples, &root, policy)?;
        verdicts.push((format!("risk.{name}"), verdict));
    }
    let mut report = String::new();
    let mut records = String::new();
    let mut all = true;
    for (key, verdict) in &verdicts {
        let _ = writeln!(report, "{key} {verdict}");
        for line in verdict.record_lines() {
            let _ = writeln!(records, "{key} {line}");
        }
        summary.push(format!("{key}.passed"), verdict.passed);
        for (m, val) in &verdict.measured {
            summary.push(format!("{key}.{m}"), val);
        }
        all &= verdict.passed;
    }
    out.write("verdicts.txt", report.as_bytes())?;
    out.write("records.txt", records.as_bytes())?;
    Ok(if all {
        ExitStatus::Success
    } else {
        ExitStatus::VerifierFailed
    })
}

fn run_toy2d(out: &mut OutputDir, summary: &mut Summary) -> Result<ExitStatus> {
    for idx in [1, 2] {
        let problem = toy_example(idx)?;
        let name = problem.name.clone();
        let minimizer = problem.oracle_minimizer()?;
        summary.push(
            format!("{name}.oracle_minimizer"),
            format!("{},{}", minimizer[0], minimizer[1]),
        );
        let p = problem.perturbation_matrix();
        let pg = reynolds_matrix_average(&p, &GroupSpec::Flips.build(1, 2)?, 1, 2)?;
        summary.push(format!("{name}.p_norm"), frobenius(&p));
        summary.push(format!("{name}.pg_norm"), frobenius(&pg));
        let mut distances = [0.0; 2];
        let mut labels = [""; 2];
        for (slot, (variant, eq)) in [("plain", false), ("equivariant", true)]
            .into_iter()
            .enumerate()
        {
            let run = problem.run(eq)?;
            let prefix = format!("{name}.{variant}");
            push_status(summary, &prefix, &run.run.status);
            push_trace_tail(summary, &prefix, &run.run.trace);
            let l = run.limit();
            summary.push(format!("{prefix}.limit"), format!("{},{}", l[0], l[1]));
            distances[slot] = run.distance_to(minimizer);
            labels[slot] = run.run.status.label();
            summary.push(format!("{prefix}.distance_to_minimizer"), distances[slot]);
            out.write(
                &format!("{prefix}.trajectory.csv"),
                run.trajectory_csv().as_bytes(),
            )?;
            out.trace(&format!("{prefix}.trace"), &run.run.trace)?;
        }
        let plain_fails = labels[0] == "diverged" || distances[0] > 1e-2;
        let eq_converges = labels[1] == "converged" && distances[1] < 1e-2;
        summary.push(format!("{name}.dichotomy"), plain_fails && eq_converges);
    }
    Ok(ExitStatus::Success)
}

fn run_denoise(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    summary: &mut Summary,
) -> Result<ExitStatus> {
    let root = SeededRng::new(cfg.seed);
    let d = &cfg.denoise;
    let clean = load_input(cfg.input.as_ref().expect("validated")).map_err(as_config("input"))?;
    let (h, w) = clean.shape();
    let mut noise = root.derive("noise");
    let noisy = clean.map(|v| v + d.noise_std * noise.gaussian());
    let base = build_denoiser(
        cfg.denoiser.as_ref().expect("validated"),
        cfg.group,
        h,
        w,
        &mut root.derive("denoiser"),
    )
    .map_err(as_config("denoiser"))?;
    summary.push("denoiser", base.name());
    summary.push("noisy_psnr", psnr(&noisy, &clean, 1.0)?);
    out.image("noisy", &noisy)?;
    for &mode in &d.modes {
        let group = || -> Result<Group> {
            cfg.group
                .ok_or_else(|| Error::Config("equivariant modes need a group".into()))?
                .build(h, w)
                .map_err(as_config("group"))
        };
        let result = match mode {
            Mode::None => base.denoise(&noisy, d.sigma)?,
            Mode::Reynolds => ReynoldsEquivariantDenoiser::new(base.as_ref(), group()?)
                .map_err(as_config("group"))?
                .denoise(&noisy, d.sigma)?,
            Mode::Mc => {
                MonteCarloEquivariantDenoiser::new(base.as_ref(), group()?, root.derive("mc-group"))
                    .denoise(&noisy, d.sigma)?
            }
        };
        let m = mode.as_str();
        summary.push(format!("{m}.psnr"), psnr(&result, &clean, 1.0)?);
        out.image(&format!("denoised_{m}"), &result)?;
    }
    Ok(ExitStatus::Success)
}
