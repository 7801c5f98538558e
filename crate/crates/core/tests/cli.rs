//! Process-level checks of the binary: exit-code contract and artifacts.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_wavelab")
}

fn workdir(_tag: &str) -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let output = Command::new(bin())
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

const BASE: &str = "\
[domain]
n = 16

[model]
formulation = hamiltonian-vq

[time]
integrator = leapfrog
steps = 100
";

#[test]
fn successful_run_exits_zero() {
    let dir = workdir("ok");
    let cfg = dir.path().join("cfg.ini");
    write(&cfg, BASE);
    let (code, stderr) = run("run", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(dir.path().join("out/report.json").exists());
}

#[test]
fn validation_error_exits_two() {
    let dir = workdir("val");
    let cfg = dir.path().join("cfg.ini");
    write(&cfg, "[domain]\nn = 16\nbogus = 1\n");
    let (code, stderr) = run("run", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 2);
    assert!(stderr.contains("bogus"), "{stderr}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(json["error_code"], 2);
    assert_eq!(json["error_kind"], "validation");
}

#[test]
fn failed_assertion_exits_three() {
    let dir = workdir("assert");
    let cfg = dir.path().join("cfg.ini");
    write(
        &cfg,
        &format!("{BASE}\n[compare]\nagainst = mixed-grad-vs\ntol = 1e-30\n"),
    );
    let (code, _) = run("compare", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 3);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(json["pass"], false);
}

#[test]
fn solver_failure_exits_four() {
    let dir = workdir("solver");
    let cfg = dir.path().join("cfg.ini");
    // a 2D iterative solve cannot converge in one iteration
    write(
        &cfg,
        "\
[domain]
dim = 2
nx = 20
ny = 20

[model]
formulation = maxwell-tm

[time]
integrator = implicit-midpoint
steps = 5
dt = 0.01

[solver]
max_iterations = 1
",
    );
    let (code, stderr) = run("run", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 4, "stderr: {stderr}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(json["error_code"], 4);
    assert_eq!(json["error_kind"], "solver-failure");
}

#[test]
fn spectrum_reports_lambda_max() {
    let dir = workdir("spectrum");
    let cfg = dir.path().join("cfg.ini");
    write(&cfg, BASE);
    let (code, _) = run("spectrum", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 0);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    let lambda = json["lambda_max"].as_f64().unwrap();
    // CG1 Dirichlet pencil on n = 16: lambda_max = (6/h^2)(1+cos(pi h))/(2-cos(pi h))
    let h = 1.0 / 16.0;
    let c = (std::f64::consts::PI * h).cos();
    let exact = 6.0 / (h * h) * (1.0 + c) / (2.0 - c);
    assert!((lambda - exact).abs() / exact < 1e-8, "{lambda} vs {exact}");
}

#[test]
fn converge_emits_table_with_order_column() {
    let dir = workdir("converge");
    let cfg = dir.path().join("cfg.ini");
    write(
        &cfg,
        &format!("{BASE}\n[converge]\ncells = 8,16,32\nt_final = 0.5\n"),
    );
    let (code, stderr) = run("converge", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let csv = std::fs::read_to_string(dir.path().join("out/converge.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# schema: wavelab/converge"));
    assert_eq!(lines[1], "h,dt,l2_error,observed_order");
    assert_eq!(lines.len(), 5); // header comment + columns + 3 rows
}

#[test]
fn export_matrices_writes_coordinate_files() {
    let dir = workdir("export");
    let cfg = dir.path().join("cfg.ini");
    write(&cfg, BASE);
    let (code, _) = run("run", &cfg, &dir.path().join("out"), &["--export-matrices"]);
    assert_eq!(code, 0);
    let mass = std::fs::read_to_string(dir.path().join("out/matrices/mass.txt")).unwrap();
    assert!(mass.starts_with("% rows 15 cols 15"));
    // row col value triplets
    let first = mass.lines().nth(1).unwrap();
    assert_eq!(first.split_whitespace().count(), 3);
}

#[test]
fn cfl_command_locates_threshold() {
    let dir = workdir("cfl");
    let cfg = dir.path().join("cfg.ini");
    write(
        &cfg,
        "\
[domain]
n = 8

[model]
formulation = hamiltonian-vq

[time]
integrator = leapfrog
steps = 100

[cfl]
fractions = 0.5,0.9,1.1,1.5
",
    );
    let (code, stderr) = run("cfl", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(json["pass"], true);
    let csv = std::fs::read_to_string(dir.path().join("out/cfl.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6); // schema + header + 4 grid rows
}
