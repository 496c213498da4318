use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use emtlab::pipeline::RunReport;

const TORSION: &str = r#"
[model]
name = "dirichlet_potential"
potential = "affine"
potential_parameters = [1.0, 0.5]

[domain]
shape = "disc"
parameters = [1.0]
spacing = 0.0625
"#;

fn emtlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emtlab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_on_torsion_succeeds_and_writes_a_valid_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "torsion.toml", TORSION);
    let out_dir = dir.path().join("out");
    let out = emtlab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("report.json")).unwrap();
    let report = RunReport::validate_json(&text).unwrap();
    assert_eq!(report.exit_code, 0);
    assert!(report.checks.iter().all(|c| c.pass));
    for file in ["fields.csv", "boundary.csv", "solution.csv", "solver_log.json", "timings.json", "config.toml"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn staged_commands_reproduce_the_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "torsion.toml", TORSION);
    let (one, staged) = (dir.path().join("one"), dir.path().join("staged"));
    assert_eq!(code(&emtlab(&["run", "--config", &cfg, "--out", one.to_str().unwrap()])), 0);
    let staged_str = staged.to_str().unwrap();
    assert_eq!(code(&emtlab(&["solve", "--config", &cfg, "--out", staged_str])), 0);
    assert_eq!(code(&emtlab(&["analyze", "--in", staged_str])), 0);
    assert!(staged.join("analysis.json").exists());
    assert_eq!(code(&emtlab(&["verify", "--in", staged_str])), 0);
    assert!(staged.join("checks.json").exists());
    assert_eq!(code(&emtlab(&["report", "--in", staged_str])), 0);
    for file in ["report.json", "fields.csv", "solution.csv"] {
        assert_eq!(fs::read(one.join(file)).unwrap(), fs::read(staged.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = TORSION.replace("\"affine\"", "\"exponential\"").replace("[1.0, 0.5]", "[1.0, 1.0]");
    let cfg = write_config(dir.path(), "exp.toml", &text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&emtlab(&["run", "--config", &cfg, "--out", a.to_str().unwrap()])), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_emtlab"))
        .args(["run", "--config", &cfg, "--out", b.to_str().unwrap()])
        .env("EMTLAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    for file in ["report.json", "fields.csv", "boundary.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn invalid_configurations_exit_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    for (name, text) in [
        ("negative.toml", TORSION.replace("[1.0]\n", "[-1.0]\n")),
        ("typo.toml", TORSION.replace("spacing", "spacng")),
        ("shape.toml", TORSION.replace("\"disc\"", "\"torus\"")),
        ("model.toml", TORSION.replace("dirichlet_potential", "dirichlet_potentail")),
    ] {
        let cfg = write_config(dir.path(), name, &text);
        let res = emtlab(&["run", "--config", &cfg, "--out", out]);
        assert_eq!(code(&res), 4, "{name}: {}", String::from_utf8_lossy(&res.stderr));
    }
    let missing = emtlab(&["run", "--config", "/nonexistent/config.toml", "--out", out]);
    assert_eq!(code(&missing), 4);
    let cfg = write_config(dir.path(), "ok.toml", TORSION);
    let threads = Command::new(env!("CARGO_BIN_EXE_emtlab"))
        .args(["check", "--config", &cfg])
        .env("EMTLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&threads), 4);
}

#[test]
fn non_convex_model_is_a_hypothesis_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[model]\nname = \"custom\"\nexpression = \"q - p^2 / 2\"\n\n[domain]\nshape = \"disc\"\nparameters = [1.0]\nspacing = 0.0625\n";
    let cfg = write_config(dir.path(), "bad.toml", text);
    let check = emtlab(&["check", "--config", &cfg]);
    assert_eq!(code(&check), 2);
    assert!(String::from_utf8_lossy(&check.stdout).contains("\"convexity_ok\": false"));
    let out = dir.path().join("out");
    assert_eq!(code(&emtlab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])), 2);
}

#[test]
fn iteration_cap_reports_an_unconverged_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = TORSION.replace("\"affine\"", "\"exponential\"").replace("[1.0, 0.5]", "[1.0, 1.0]")
        + "\n[solver]\nmax_iterations = 1\nnewton_polish = false\n";
    let cfg = write_config(dir.path(), "capped.toml", &text);
    let out = dir.path().join("out");
    let res = emtlab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 1, "{}", String::from_utf8_lossy(&res.stdout));
    let report = RunReport::validate_json(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.exit_code, 1);
}

#[test]
fn strict_mode_rejects_domains_outside_the_theorem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rect.toml",
        &TORSION.replace("\"disc\"", "\"rectangle\"").replace("[1.0]\n", "[2.0, 1.0]\n"),
    );
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(code(&emtlab(&["run", "--config", &cfg, "--out", out])), 0);
    assert_eq!(code(&emtlab(&["report", "--in", out, "--strict"])), 2);
}

#[test]
fn unreadable_run_directories_are_reported() {
    // no config.toml: nothing to rebuild the grid from
    assert_eq!(code(&emtlab(&["report", "--in", "/nonexistent/run"])), 4);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "torsion.toml", TORSION);
    let out = dir.path().join("out");
    assert_eq!(code(&emtlab(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()])), 0);
    fs::remove_file(out.join("solution.csv")).unwrap();
    assert_eq!(code(&emtlab(&["report", "--in", out.to_str().unwrap()])), 5);
}
