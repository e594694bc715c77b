use std::fs;
use std::path::{Path, PathBuf};

use eqpnp::config::{ExperimentConfig, Recipe};
use eqpnp::experiment::{run_experiment, ExitStatus};
use proptest::prelude::*;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_validate_and_round_trip() {
    let paths = shipped();
    assert!(paths.len() >= 9, "{paths:?}");
    let mut recipes = Vec::new();
    for p in &paths {
        let cfg = ExperimentConfig::load(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text, "round trip").unwrap();
        assert_eq!(back, cfg, "{}", p.display());
        recipes.push(cfg.recipe);
    }
    for r in [
        Recipe::Solve,
        Recipe::Sample,
        Recipe::Analyze,
        Recipe::VerifyProps,
        Recipe::Toy2d,
        Recipe::Denoise,
    ] {
        assert!(recipes.contains(&r), "no shipped config for {}", r.as_str());
    }
}

fn config(text: &str, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(text, "test").unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg.validate().unwrap();
    cfg
}

const SYMMETRIC_ANALYZE: &str = r#"
recipe = "analyze"
seed = 1
output_dir = "unused"

[input]
phantom = "shepp_like"
height = 8
width = 8

[denoiser]
kind = "linear"
matrix = [[0.5, 0.1, 0.0, 0.2], [0.1, 0.4, 0.3, 0.0], [0.0, 0.3, 0.6, 0.1], [0.2, 0.0, 0.1, 0.5]]

[analysis]
patches = 3
patch_size = 2
"#;

#[test]
fn symmetric_linear_denoiser_has_zero_symmetry_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config(SYMMETRIC_ANALYZE, dir.path())).unwrap();
    assert_eq!(out.status, ExitStatus::Success);
    let csv = fs::read_to_string(dir.path().join("analysis.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "symmetry_error").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(row.split(',').nth(col).unwrap(), "0", "{row}");
    }
}

const DIVERGING: &str = r#"
recipe = "solve"
seed = 1
output_dir = "unused"

[input]
phantom = "constant"
height = 1
width = 2

[problem]
kind = "diagonal"
values = [2.0, 1.0]

[denoiser]
kind = "identity"

[solver]
gamma = 3.0
max_iters = 500
"#;

#[test]
fn divergence_is_reported_not_raised() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config(DIVERGING, dir.path())).unwrap();
    assert_eq!(out.status, ExitStatus::Diverged);
    assert_eq!(out.status.code(), 2);
    assert_eq!(out.summary.get("none.status"), Some("diverged"));
    assert!(dir.path().join("trace_none.csv").exists());
}

#[test]
fn writes_stay_inside_the_output_directory() {
    let root = tempfile::tempdir().unwrap();
    let out_dir = root.path().join("nested").join("out");
    let mut cfg = ExperimentConfig::load(&configs_dir().join("deblur.toml")).unwrap();
    cfg.output_dir = out_dir.clone();
    cfg.solver.as_mut().unwrap().max_iters = 5;
    let outcome = run_experiment(&cfg).unwrap();
    let top: Vec<_> = fs::read_dir(root.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(top, vec!["nested"]);
    let mut written: Vec<String> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    written.sort();
    let mut expected = outcome.artifacts.clone();
    expected.extend(["summary.txt".to_string(), "timing.txt".to_string()]);
    expected.sort();
    expected.dedup();
    assert_eq!(written, expected);
    assert!(fs::read_dir(&out_dir)
        .unwrap()
        .all(|e| e.unwrap().file_type().unwrap().is_file()));
}

#[test]
fn missing_sections_are_config_errors() {
    let bad =
        ExperimentConfig::from_toml_str("recipe = \"solve\"\nseed = 1\noutput_dir = \"o\"\n", "t")
            .unwrap();
    let err = bad.validate().unwrap_err();
    assert_eq!(
        eqpnp::experiment::exit_status_for(&err),
        Some(ExitStatus::ConfigError)
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solve_configs_round_trip(
        seed in any::<u64>(),
        gamma in 1e-6f64..10.0,
        sigma in 0.0f64..1.0,
        iters in 1usize..100_000,
        keep in 0.01f64..1.0,
        levels in 1usize..6,
        modes in prop::sample::subsequence(vec!["none", "mc", "reynolds"], 1..=3),
        group in prop::sample::select(vec!["flips", "d4", "shifts:4", "d4_shifts:2", "flips_shifts"]),
    ) {
        let modes: Vec<String> = modes.iter().map(|m| format!("\"{m}\"")).collect();
        let text = format!(
            "recipe = \"solve\"\nseed = {seed}\ngroup = \"{group}\"\noutput_dir = \"o\"\n\
             [input]\nphantom = \"checkerboard\"\nheight = 16\nwidth = 16\n\
             [problem]\nkind = \"inpainting\"\nkeep_rate = {keep:?}\nnoise_std = 0.01\n\
             [denoiser]\nkind = \"haar\"\nlevels = {levels}\nscale = 1.5\n\
             [solver]\ngamma = {gamma:?}\nsigma = {sigma:?}\nmax_iters = {iters}\nmodes = [{}]\n",
            modes.join(", ")
        );
        let cfg = ExperimentConfig::from_toml_str(&text, "prop").unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap(), "prop").unwrap();
        prop_assert_eq!(again, cfg);
    }
}
