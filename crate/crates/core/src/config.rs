//! Experiment configuration files (TOML).
//!
//! Relative paths are resolved against the directory of the config file.
//! A commented example for every recipe lives in `configs/` at the
//! repository root.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::RISK_MIN_SAMPLES;
use crate::error::{Error, Result};
use crate::groups::GroupSpec;
use crate::solvers::DEFAULT_DIVERGENCE_FACTOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    Solve,
    Sample,
    Analyze,
    VerifyProps,
    Toy2d,
    Denoise,
}

impl Recipe {
    pub fn as_str(self) -> &'static str {
        match self {
            Recipe::Solve => "solve",
            Recipe::Sample => "sample",
            Recipe::Analyze => "analyze",
            Recipe::VerifyProps => "verify-props",
            Recipe::Toy2d => "toy2d",
            Recipe::Denoise => "denoise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub recipe: Recipe,
    /// Root of every random stream; there is no clock-based default.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupSpec>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denoiser: Option<DenoiserSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub denoise: DenoiseSection,
    #[serde(default)]
    pub report: ReportSection,
}

/// Exactly one of `phantom` (with `height`, `width`) or `path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(flatten)]
    pub operator: OperatorSpec,
    /// Per real (and imaginary) component.
    #[serde(default)]
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    Identity,
    BlurGaussian {
        std: f64,
        side: usize,
    },
    /// `angle` in degrees: 0, 45, 90 or 135.
    BlurLine {
        length: usize,
        angle: u32,
    },
    Inpainting {
        keep_rate: f64,
    },
    Mri {
        acceleration: usize,
        center_fraction: f64,
    },
    Sr {
        factor: usize,
        std: f64,
        side: usize,
    },
    /// Rows of the matrix acting on the flattened image.
    Dense {
        matrix: Vec<Vec<f64>>,
    },
    /// Requires a `1 x n` input.
    Diagonal {
        values: Vec<f64>,
    },
}

impl OperatorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            OperatorSpec::Identity => "identity",
            OperatorSpec::BlurGaussian { .. } => "blur_gaussian",
            OperatorSpec::BlurLine { .. } => "blur_line",
            OperatorSpec::Inpainting { .. } => "inpainting",
            OperatorSpec::Mri { .. } => "mri",
            OperatorSpec::Sr { .. } => "sr",
            OperatorSpec::Dense { .. } => "dense",
            OperatorSpec::Diagonal { .. } => "diagonal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum B1Kind {
    Identity,
    /// Random orthogonal matrix commuting with the configured group.
    Equivariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DenoiserSpec {
    Identity,
    Linear {
        matrix: Vec<Vec<f64>>,
    },
    /// `kernel` is centred and zero-padded to the image size.
    Circulant {
        kernel: Vec<Vec<f64>>,
        #[serde(default)]
        symmetrize: bool,
    },
    Haar {
        levels: usize,
        scale: f64,
    },
    /// `P` has i.i.d. `N(0, perturbation_std^2)` entries from the `denoiser` stream.
    PerturbedProx {
        b1: B1Kind,
        perturbation_std: f64,
        threshold: f64,
    },
    /// Embedded reference weights unless `weights` is given.
    TinyConv {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pnp,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    None,
    Mc,
    Reynolds,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::None => "none",
            Mode::Mc => "mc",
            Mode::Reynolds => "reynolds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Adjoint,
    Zeros,
    /// Read from `init_image`.
    Given,
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::None]
}

fn default_divergence() -> f64 {
    DEFAULT_DIVERGENCE_FACTOR
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Ignored by `sample`, which always runs ULA.
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub sigma: f64,
    pub max_iters: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
    #[serde(default)]
    pub init: InitKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_image: Option<PathBuf>,
    /// One run per mode, each with its own output files.
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_divergence")]
    pub divergence_factor: f64,
    #[serde(default = "one")]
    pub psnr_peak: f64,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Pnp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub patches: usize,
    pub patch_size: usize,
    /// Gaussian noise added to each patch before evaluation (`patches` stream).
    pub patch_noise: f64,
    pub sigma: f64,
    pub fd_step: f64,
    /// Step in the composed constant `‖J (I − γ AᵀA)‖`, using `problem` at
    /// patch size.
    pub gamma: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            patches: 10,
            patch_size: 16,
            patch_noise: 0.0,
            sigma: 0.0,
            fd_step: crate::analysis::DEFAULT_FD_STEP,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub prop1_trials: usize,
    pub prop1_side: usize,
    pub prop2_trials: usize,
    pub prop2_side: usize,
    pub prop3_masks: usize,
    pub prop3_side: usize,
    pub prop3_keep_rate: f64,
    pub risk_samples: usize,
    pub risk_side: usize,
    pub risk_sigma: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            prop1_trials: 100,
            prop1_side: 4,
            prop2_trials: 100,
            prop2_side: 8,
            prop3_masks: 20,
            prop3_side: 4,
            prop3_keep_rate: 0.5,
            risk_samples: 10_000,
            risk_side: 8,
            risk_sigma: 0.1,
        }
    }
}

/// The `denoise` recipe: `input + noise_std * g` is denoised once per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseSection {
    pub sigma: f64,
    pub noise_std: f64,
    pub modes: Vec<Mode>,
}

impl Default for DenoiseSection {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            noise_std: 0.0,
            modes: default_modes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub trace: bool,
    pub images: bool,
    /// Also write 8-bit PGM previews next to the raw images.
    pub pgm_previews: bool,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            trace: true,
            images: true,
            pgm_previews: false,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Parses without resolving paths or validating. Parse errors carry the
    /// line and column.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(format!("{origin}: {e}")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(format!("serialize: {e}")))
    }

    /// Reads, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.validate()
            .map_err(|e| config_err(format!("{}: {}", path.display(), strip_prefix(&e))))?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        if let Some(p) = self.input.as_mut().and_then(|i| i.path.as_mut()) {
            resolve(base, p);
        }
        if let Some(DenoiserSpec::TinyConv { weights: Some(p) }) = self.denoiser.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = self.solver.as_mut().and_then(|s| s.init_image.as_mut()) {
            resolve(base, p);
        }
    }

    fn require<'a, T>(&self, section: &'a Option<T>, name: &str) -> Result<&'a T> {
        section.as_ref().ok_or_else(|| {
            config_err(format!(
                "recipe `{}` needs a [{name}] section",
                self.recipe.as_str()
            ))
        })
    }

    pub fn validate(&self) -> Result<()> {
        let needs: &[&str] = match self.recipe {
            Recipe::Solve | Recipe::Sample => &["input", "problem", "denoiser", "solver"],
            Recipe::Analyze | Recipe::Denoise => &["input", "denoiser"],
            Recipe::VerifyProps | Recipe::Toy2d => &[],
        };
        for &name in needs {
            match name {
                "input" => self.require(&self.input, name).map(|_| ())?,
                "problem" => self.require(&self.problem, name).map(|_| ())?,
                "denoiser" => self.require(&self.denoiser, name).map(|_| ())?,
                _ => self.require(&self.solver, name).map(|_| ())?,
            }
        }
        if let Some(input) = &self.input {
            validate_input(input)?;
        }
        if let Some(problem) = &self.problem {
            validate_problem(problem)?;
        }
        if let Some(d) = &self.denoiser {
            self.validate_denoiser(d)?;
        }
        if let Some(s) = &self.solver {
            self.validate_solver(s)?;
        }
        if self.recipe == Recipe::Analyze {
            let a = &self.analysis;
            if a.patches == 0 || a.patch_size == 0 {
                return Err(config_err("analysis needs at least one non-empty patch"));
            }
            if !(a.fd_step > 0.0)
                || !(a.gamma > 0.0)
                || !(a.patch_noise >= 0.0)
                || !(a.sigma >= 0.0)
            {
                return Err(config_err(
                    "analysis fd_step and gamma must be positive, noise and sigma non-negative",
                ));
            }
        }
        if self.recipe == Recipe::Denoise {
            let d = &self.denoise;
            if !(d.sigma >= 0.0) || !(d.noise_std >= 0.0) || d.modes.is_empty() {
                return Err(config_err(
                    "denoise needs sigma, noise_std >= 0 and at least one mode",
                ));
            }
            if d.modes.iter().any(|m| *m != Mode::None) && self.group.is_none() {
                return Err(config_err("equivariant modes need a top-level group"));
            }
        }
        if self.recipe == Recipe::VerifyProps {
            let v = &self.verify;
            if v.prop1_trials == 0 || v.prop2_trials == 0 || v.prop3_masks == 0 {
                return Err(config_err("verifier trial counts must be positive"));
            }
            if v.risk_samples < RISK_MIN_SAMPLES {
                return Err(config_err(format!(
                    "risk_samples must be at least {RISK_MIN_SAMPLES}, got {}",
                    v.risk_samples
                )));
            }
            if v.prop1_side == 0
                || v.prop1_side * v.prop1_side > 256
                || v.prop2_side == 0
                || v.prop2_side * v.prop2_side > 256
            {
                return Err(config_err(
                    "prop1_side and prop2_side must be between 1 and 16",
                ));
            }
            if v.prop3_side < 2 || v.risk_side == 0 {
                return Err(config_err(
                    "prop3_side must be at least 2 and risk_side positive",
                ));
            }
            if !(v.prop3_keep_rate > 0.0 && v.prop3_keep_rate < 1.0) || !(v.risk_sigma > 0.0) {
                return Err(config_err(
                    "prop3_keep_rate must lie in (0, 1) and risk_sigma be positive",
                ));
            }
        }
        Ok(())
    }

    fn validate_denoiser(&self, d: &DenoiserSpec) -> Result<()> {
        match d {
            DenoiserSpec::Haar { levels, scale } => {
                if *levels == 0 || !(*scale >= 0.0) {
                    return Err(config_err("haar needs levels >= 1 and scale >= 0"));
                }
            }
            DenoiserSpec::PerturbedProx {
                b1,
                perturbation_std,
                threshold,
            } => {
                if !(*perturbation_std >= 0.0) || !(*threshold > 0.0) {
                    return Err(config_err(
                        "perturbed_prox needs perturbation_std >= 0 and threshold > 0",
                    ));
                }
                if *b1 == B1Kind::Equivariant && self.group.is_none() {
                    return Err(config_err("b1 = \"equivariant\" needs a top-level group"));
                }
            }
            DenoiserSpec::TinyConv { weights: Some(p) } => {
                if !p.is_file() {
                    return Err(config_err(format!(
                        "weights file {} does not exist",
                        p.display()
                    )));
                }
            }
            DenoiserSpec::Linear { matrix } | DenoiserSpec::Circulant { kernel: matrix, .. } => {
                let cols = matrix.first().map_or(0, Vec::len);
                if cols == 0 || matrix.iter().any(|r| r.len() != cols) {
                    return Err(config_err(
                        "denoiser matrix rows must be non-empty and of equal length",
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn validate_solver(&self, s: &SolverSection) -> Result<()> {
        if !(s.gamma > 0.0) || s.max_iters == 0 {
            return Err(config_err("solver needs gamma > 0 and max_iters >= 1"));
        }
        if s.modes.is_empty() {
            return Err(config_err("solver.modes must list at least one mode"));
        }
        if s.modes.iter().any(|m| *m != Mode::None) && self.group.is_none() {
            return Err(config_err("equivariant modes need a top-level group"));
        }
        match (s.init, &s.init_image) {
            (InitKind::Given, None) => return Err(config_err("init = \"given\" needs init_image")),
            (InitKind::Given, Some(p)) if !p.is_file() => {
                return Err(config_err(format!(
                    "init image {} does not exist",
                    p.display()
                )))
            }
            (InitKind::Adjoint | InitKind::Zeros, Some(_)) => {
                return Err(config_err("init_image is only used with init = \"given\""))
            }
            _ => {}
        }
        match self.recipe {
            Recipe::Solve => match (s.algorithm, s.lambda) {
                (Algorithm::Pnp, Some(_)) => {
                    return Err(config_err(
                        "lambda is not a PnP parameter; set the denoiser strength instead",
                    ))
                }
                (Algorithm::Red, None) => return Err(config_err("red needs lambda")),
                _ => {}
            },
            Recipe::Sample => {
                if s.lambda.is_none() {
                    return Err(config_err("sample (ULA) needs lambda"));
                }
                if s.burn_in >= s.max_iters {
                    return Err(config_err("burn_in must be below max_iters"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn validate_input(input: &InputSpec) -> Result<()> {
    match (&input.phantom, &input.path) {
        (Some(_), Some(_)) | (None, None) => Err(config_err(
            "[input] needs exactly one of `phantom` or `path`",
        )),
        (Some(_), None) => match (input.height, input.width) {
            (Some(h), Some(w)) if h > 0 && w > 0 => Ok(()),
            _ => Err(config_err(
                "a phantom input needs positive height and width",
            )),
        },
        (None, Some(p)) => {
            if input.height.is_some() || input.width.is_some() {
                return Err(config_err(
                    "height/width come from the file for a path input",
                ));
            }
            if p.is_file() {
                Ok(())
            } else {
                Err(config_err(format!(
                    "input image {} does not exist",
                    p.display()
                )))
            }
        }
    }
}

fn validate_problem(p: &ProblemSpec) -> Result<()> {
    if !(p.noise_std >= 0.0) {
        return Err(config_err("noise_std must be non-negative"));
    }
    let ok = match &p.operator {
        OperatorSpec::Identity => true,
        OperatorSpec::BlurGaussian { std, side } => *std > 0.0 && side % 2 == 1,
        OperatorSpec::BlurLine { length, angle } => *length > 0 && [0, 45, 90, 135].contains(angle),
        OperatorSpec::Inpainting { keep_rate } => *keep_rate > 0.0 && *keep_rate <= 1.0,
        OperatorSpec::Mri {
            acceleration,
            center_fraction,
        } => [4, 8].contains(acceleration) && *center_fraction > 0.0 && *center_fraction < 1.0,
        OperatorSpec::Sr { factor, std, side } => *factor > 0 && *std > 0.0 && side % 2 == 1,
        OperatorSpec::Dense { matrix } => {
            let cols = matrix.first().map_or(0, Vec::len);
            cols > 0 && matrix.iter().all(|r| r.len() == cols)
        }
        OperatorSpec::Diagonal { values } => !values.is_empty(),
    };
    if ok {
        Ok(())
    } else {
        Err(config_err(format!(
            "invalid parameters for operator `{}`",
            p.operator.kind()
        )))
    }
}
