use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mvsgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvsgd")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const LINEAR: &str = r#"
[model]
name = "linear-oracle"
x0 = 1.0
T = 1.0
[basis]
n = 3
[sgd]
r0 = 5.0
rho = 0.7
M = 10
m_max = 200
[benchmark]
analytic = true
"#;

const KURAMOTO: &str = r#"
[model]
name = "kuramoto"
x0 = 0.5
sigma = 0.5
T = 0.5
[basis]
n = 2
[sgd]
r0 = 1.0
rho = 0.7
[benchmark]
N = 1000
seed = 11
"#;

#[test]
fn run_succeeds_and_writes_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LINEAR);
    let out = dir.path().join("out");
    let o = mvsgd(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--strict-tol"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let mut lines = agg.lines();
    assert_eq!(
        lines.next().unwrap(),
        "runs,tol_reached,diverged,mean_iterations,mean_iterations_to_tol,mean_wall_seconds"
    );
    assert!(lines.next().unwrap().starts_with("1,1,0,"));
    let report = fs::read_to_string(out.join("report_000.csv")).unwrap();
    assert!(report.starts_with("iteration,epsilon,g_estimate,learning_rate,a_0_0,"));
}

#[test]
fn missing_model_name_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[model]\nx0 = 1.0\n[basis]\nn = 2\n[sgd]\nr0 = 1.0\nrho = 0.7\n");
    let o = mvsgd(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.name"));
}

#[test]
fn unreadable_config_exits_2() {
    let o = mvsgd(&["run", "--config", "/nonexistent/exp.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn strict_tol_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &LINEAR.replace("m_max = 200", "m_max = 0"));
    let out = dir.path().join("out");
    let o = mvsgd(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--strict-tol"]);
    assert_eq!(o.status.code(), Some(4));
    // m_max = 0 still records the initial iterate.
    let report = fs::read_to_string(out.join("report_000.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
    let o = mvsgd(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
name = "polydrift"
x0 = 0.5
delta = 1.0
T = 0.1
[basis]
n = 3
[sgd]
r0 = 1e4
rho = 0.6
M = 10
m_max = 50
[benchmark]
enable = false
"#,
    );
    let out = dir.path().join("out");
    let o = mvsgd(&["run", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains(",diverged,"));
}

#[test]
fn benchmark_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), KURAMOTO);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = mvsgd(&["benchmark", "--config", &cfg, "--out-dir", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let file = |d: &Path| {
        let entries: Vec<_> = fs::read_dir(d.join("benchmark")).unwrap().map(|e| e.unwrap().path()).collect();
        assert_eq!(entries.len(), 1);
        fs::read(&entries[0]).unwrap()
    };
    assert_eq!(file(&a), file(&b));
}

#[test]
fn run_reports_are_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &KURAMOTO.replace("rho = 0.7", "rho = 0.7\nM = 5\nm_max = 10"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = mvsgd(&["run", "--config", &cfg, "--seed", "7", "--out-dir", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["report_000.csv", "curve_000.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn density_on_a_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
name = "convolution"
K = 4
sigma = 0.1
T = 0.2
[basis]
n = 2
[sgd]
r0 = 5.0
rho = 0.9
M = 4
m_max = 3
[benchmark]
N = 500
[density]
x_min = 0.5
x_max = 0.5
points = 1
"#,
    );
    let out = dir.path().join("out");
    let o = mvsgd(&["density", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("density.csv")).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "x,sgd,monte_carlo");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("5.0000000000000000e-1,"));
}

#[test]
fn density_rejects_other_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LINEAR);
    let o = mvsgd(&["density", "--config", &cfg, "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
