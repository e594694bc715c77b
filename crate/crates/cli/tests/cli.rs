use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn eqpnp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqpnp"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn eqpnp")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.txt")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

const SOLVE: &str = r#"
recipe = "solve"
seed = 5
group = "d4"
output_dir = "out"

[input]
phantom = "checkerboard"
height = 16
width = 16

[problem]
kind = "blur_gaussian"
std = 1.0
side = 5
noise_std = 0.02

[denoiser]
kind = "tiny_conv"

[solver]
gamma = 0.5
sigma = 0.05
max_iters = 20
modes = ["none", "mc", "reynolds"]
"#;

const DIVERGING: &str = r#"
recipe = "solve"
seed = 1
output_dir = "out"

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

const VERIFY: &str = r#"
recipe = "verify-props"
seed = 0
output_dir = "out"

[verify]
prop1_trials = 5
prop2_trials = 5
prop3_masks = 3
risk_samples = 1000
"#;

#[test]
fn usage_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&eqpnp(&["frobnicate"], dir.path())), 3);
    assert_eq!(code(&eqpnp(&["solve"], dir.path())), 3);
    assert_eq!(code(&eqpnp(&["--help"], dir.path())), 0);
}

#[test]
fn config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = eqpnp(&["solve", "nope.toml"], dir.path());
    assert_eq!(code(&missing), 3);

    let broken = write(dir.path(), "broken.toml", "recipe = \"solve\"\nseed = \n");
    let o = eqpnp(&["solve", broken.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3);
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("line 2"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let unknown_key = write(dir.path(), "unknown.toml", &format!("{SOLVE}\nbogus = 1\n"));
    assert_eq!(
        code(&eqpnp(
            &["solve", unknown_key.to_str().unwrap()],
            dir.path()
        )),
        3
    );

    let solve = write(dir.path(), "solve.toml", SOLVE);
    assert_eq!(
        code(&eqpnp(&["sample", solve.to_str().unwrap()], dir.path())),
        3
    );

    let two = eqpnp(
        &["solve", "solve.toml", "solve.toml", "--output-dir", "x"],
        dir.path(),
    );
    assert_eq!(code(&two), 3);
    assert!(!dir.path().join("x").exists());
}

#[test]
fn divergence_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "div.toml", DIVERGING);
    let o = eqpnp(&["solve", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("none.status=diverged"));
}

#[test]
fn solve_is_byte_deterministic_and_stays_in_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "solve.toml", SOLVE);
    for out in ["run1", "run2"] {
        let o = eqpnp(
            &["solve", cfg.to_str().unwrap(), "--output-dir", out],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = snapshot(&dir.path().join("run1"));
    assert!(a.contains_key("recon_reynolds.eqimg") && a.contains_key("trace_mc.csv"));
    assert_eq!(a, snapshot(&dir.path().join("run2")));
    let mut top: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["run1", "run2", "solve.toml"]);
}

#[test]
fn relative_output_dirs_resolve_against_the_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("cfg")).unwrap();
    fs::create_dir(dir.path().join("elsewhere")).unwrap();
    write(&dir.path().join("cfg"), "solve.toml", SOLVE);
    let o = eqpnp(
        &["solve", "../cfg/solve.toml"],
        &dir.path().join("elsewhere"),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("cfg/out/summary.txt").exists());
    assert_eq!(
        fs::read_dir(dir.path().join("elsewhere")).unwrap().count(),
        0
    );
}

#[test]
fn toy2d_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqpnp(&["toy2d", "--output-dir", "toy"], dir.path());
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("toy1.plain.status=diverged"), "{stdout}");
    assert!(stdout.contains("toy1.equivariant.status=converged"));
    for name in ["toy1", "toy2"] {
        for variant in ["plain", "equivariant"] {
            let csv = fs::read_to_string(
                dir.path()
                    .join(format!("toy/{name}.{variant}.trajectory.csv")),
            )
            .unwrap();
            let mut lines = csv.lines();
            assert_eq!(lines.next(), Some("iter,x1,x2"));
            assert_eq!(lines.next(), Some("0,15,15"));
        }
    }
}

#[test]
fn verify_props_passes_and_parallel_configs_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(
        dir.path(),
        "a.toml",
        &VERIFY.replace("\"out\"", "\"out_a\""),
    );
    let b = write(
        dir.path(),
        "b.toml",
        &VERIFY
            .replace("\"out\"", "\"out_b\"")
            .replace("seed = 0", "seed = 1"),
    );
    let o = eqpnp(
        &["verify-props", a.to_str().unwrap(), b.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for out in ["out_a", "out_b"] {
        let verdicts = fs::read_to_string(dir.path().join(out).join("verdicts.txt")).unwrap();
        assert_eq!(verdicts.lines().count(), 6, "{verdicts}");
    }
    let failing = write(
        dir.path(),
        "bad.toml",
        &VERIFY.replace("risk_samples = 1000", "risk_samples = 10"),
    );
    assert_eq!(
        code(&eqpnp(
            &["verify-props", failing.to_str().unwrap()],
            dir.path()
        )),
        3
    );
}

#[test]
fn worst_exit_code_wins_across_configs() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.toml", SOLVE);
    let div = write(
        dir.path(),
        "div.toml",
        &DIVERGING.replace("\"out\"", "\"out_div\""),
    );
    let o = eqpnp(
        &["solve", ok.to_str().unwrap(), div.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    let o = eqpnp(
        &["solve", div.to_str().unwrap(), "missing.toml"],
        dir.path(),
    );
    assert_eq!(code(&o), 3);
}
