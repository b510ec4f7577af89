//! End-to-end commands: benchmark generation and caching, repeated SGD
//! runs with CSV artifacts, and density comparison for the convolution model.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::analysis::{density_reconstruct, HermiteSystem};
use crate::config::{ExperimentConfig, ModelConfig};
use crate::csvio::{fmt_f64, read_benchmark_csv, write_atomic, write_benchmark_csv, write_table};
use crate::curve::{GammaCurve, SampledCurve};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::SeparableModel;
use crate::sgd::{run, RunReport, Termination};
use crate::sim::simulate_particle_system;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub strict_tol: bool,
}

impl Overrides {
    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory))
    }

    fn seed(&self, cfg: &ExperimentConfig) -> u64 {
        self.seed.unwrap_or(cfg.sgd.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Diverged,
    /// Some run missed the tolerance while `--strict-tol` was set.
    TolNotReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub runs: usize,
    pub tol_reached: usize,
    pub diverged: usize,
    pub mean_iterations: f64,
    /// Mean over the runs that reached the tolerance; `NaN` if none did.
    pub mean_iterations_to_tol: f64,
    pub mean_wall_seconds: f64,
}

#[derive(Debug)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub out_dir: PathBuf,
    pub reports: Vec<RunReport>,
    pub aggregate: Aggregate,
}

#[derive(Debug)]
pub struct DensitySummary {
    pub outcome: Outcome,
    pub path: PathBuf,
    pub xs: Vec<f64>,
    pub sgd: Vec<f64>,
    pub monte_carlo: Vec<f64>,
}

/// File name of the cached particle benchmark, keyed by the model, `N`,
/// `h` and the particle seed.
pub fn benchmark_cache_name(cfg: &ExperimentConfig) -> Result<String> {
    let model = toml::to_string(&cfg.model).map_err(|e| Error::Config(e.to_string()))?;
    let key = format!(
        "{model}|N={}|h={:?}|seed={}",
        cfg.benchmark.particles, cfg.grid.h, cfg.benchmark.seed
    );
    let digest = Sha256::digest(key.as_bytes());
    Ok(format!("benchmark_{}.csv", &hex::encode(digest)[..16]))
}

fn analytic_curve(cfg: &ExperimentConfig, grid: &TimeGrid) -> Result<SampledCurve> {
    match cfg.model {
        ModelConfig::LinearOracle { x0, .. } => SampledCurve::from_fn(*grid, 1, |t| vec![x0 * t.exp()]),
        _ => Err(Error::Config("`benchmark.analytic` is only available for linear-oracle".into())),
    }
}

fn compute_benchmark(
    cfg: &ExperimentConfig,
    model: &dyn SeparableModel,
    grid: &TimeGrid,
) -> Result<(SampledCurve, Vec<f64>)> {
    if cfg.benchmark.analytic {
        return Ok((analytic_curve(cfg, grid)?, Vec::new()));
    }
    let est = simulate_particle_system(model, cfg.benchmark.particles, grid, cfg.benchmark.seed)?;
    Ok((est.curve, est.std_error))
}

fn benchmark_path(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    Ok(out_dir.join("benchmark").join(benchmark_cache_name(cfg)?))
}

/// Reads the cached benchmark if present, otherwise simulates and caches it.
fn load_or_compute_benchmark(
    cfg: &ExperimentConfig,
    model: &dyn SeparableModel,
    grid: &TimeGrid,
    out_dir: &Path,
) -> Result<SampledCurve> {
    if cfg.benchmark.analytic {
        return analytic_curve(cfg, grid);
    }
    let path = benchmark_path(cfg, out_dir)?;
    if path.exists() {
        let cached = read_benchmark_csv(fs::File::open(&path)?)?;
        if cached.grid() == grid && cached.terms() == model.dims().terms {
            return Ok(cached);
        }
    }
    let (curve, se) = compute_benchmark(cfg, model, grid)?;
    write_atomic(&path, |w| write_benchmark_csv(w, &curve, &se))?;
    Ok(curve)
}

/// Simulates the particle benchmark (or tabulates the closed form) and
/// writes it to the cache location, which is returned.
pub fn cmd_benchmark(cfg: &ExperimentConfig, ov: &Overrides) -> Result<PathBuf> {
    let model = cfg.model.build()?;
    let grid = cfg.grid()?;
    let out_dir = ov.out_dir(cfg);
    let path = benchmark_path(cfg, &out_dir)?;
    let (curve, se) = compute_benchmark(cfg, model.as_ref(), &grid)?;
    write_atomic(&path, |w| write_benchmark_csv(w, &curve, &se))?;
    Ok(path)
}

fn write_final_curve(
    path: &Path,
    cfg: &ExperimentConfig,
    report: &RunReport,
    grid: &TimeGrid,
    bench: Option<&SampledCurve>,
) -> Result<()> {
    let basis = cfg.basis()?;
    let coeffs = report.final_coeffs();
    let k = coeffs.cols();
    let mut header = vec!["t".to_string()];
    header.extend((0..k).map(|j| format!("lifted_{j}")));
    if bench.is_some() {
        header.extend((0..k).map(|j| format!("benchmark_{j}")));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let t = grid.time(i);
        let mut row = vec![t];
        row.extend(basis.lift(coeffs, t)?);
        if let Some(b) = bench {
            row.extend_from_slice(b.at(i));
        }
        rows.push(row);
    }
    write_atomic(path, |w| write_table(w, &header, rows.into_iter()))
}

fn aggregate(reports: &[RunReport]) -> Aggregate {
    let runs = reports.len();
    let reached: Vec<&RunReport> =
        reports.iter().filter(|r| r.termination == Termination::TolReached).collect();
    let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| {
        if n == 0 {
            f64::NAN
        } else {
            xs.sum::<f64>() / n as f64
        }
    };
    Aggregate {
        runs,
        tol_reached: reached.len(),
        diverged: reports.iter().filter(|r| matches!(r.termination, Termination::Diverged(_))).count(),
        mean_iterations: mean(&mut reports.iter().map(|r| r.iterations() as f64), runs),
        mean_iterations_to_tol: mean(&mut reached.iter().map(|r| r.iterations() as f64), reached.len()),
        mean_wall_seconds: mean(&mut reports.iter().map(|r| r.wall_time().as_secs_f64()), runs),
    }
}

fn outcome(reports: &[RunReport], cfg: &ExperimentConfig, strict: bool) -> Outcome {
    if reports.iter().any(|r| matches!(r.termination, Termination::Diverged(_))) {
        Outcome::Diverged
    } else if strict
        && cfg.benchmark.enable
        && reports.iter().any(|r| r.termination != Termination::TolReached)
    {
        Outcome::TolNotReached
    } else {
        Outcome::Success
    }
}

/// Runs SGD `repeat` times with seeds `seed + i` and writes, per run,
/// `report_<i>.csv`, `timings_<i>.csv` and `curve_<i>.csv`, then
/// `summary.csv` and finally `aggregate.csv`.
pub fn cmd_run(cfg: &ExperimentConfig, ov: &Overrides) -> Result<RunSummary> {
    let model = cfg.model.build()?;
    let basis = cfg.basis()?;
    let grid = cfg.grid()?;
    let sgd = cfg.sgd_config()?;
    let clamp = cfg.clamp(model.as_ref())?;
    let penalty = cfg.penalty(model.as_ref())?;
    let out_dir = ov.out_dir(cfg);
    fs::create_dir_all(&out_dir)?;
    let bench = if cfg.benchmark.enable {
        Some(load_or_compute_benchmark(cfg, model.as_ref(), &grid, &out_dir)?)
    } else {
        None
    };
    let bench_curve = bench.clone().map(GammaCurve::from);
    let base_seed = ov.seed(cfg);

    let reports: Vec<RunReport> = (0..cfg.repeat)
        .into_par_iter()
        .map(|i| -> Result<RunReport> {
            let seed = base_seed.wrapping_add(i as u64);
            let report = run(model.as_ref(), &basis, &sgd, &clamp, &penalty, &grid, bench_curve.as_ref(), seed)?;
            write_atomic(&out_dir.join(format!("report_{i:03}.csv")), |w| report.write_csv(w))?;
            write_atomic(&out_dir.join(format!("timings_{i:03}.csv")), |w| report.write_timings_csv(w))?;
            write_final_curve(&out_dir.join(format!("curve_{i:03}.csv")), cfg, &report, &grid, bench.as_ref())?;
            Ok(report)
        })
        .collect::<Result<_>>()?;

    write_atomic(&out_dir.join("summary.csv"), |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run", "seed", "termination", "iterations", "final_epsilon", "wall_seconds"])?;
        for (i, r) in reports.iter().enumerate() {
            w.write_record([
                i.to_string(),
                r.seed.to_string(),
                r.termination.label().to_string(),
                r.iterations().to_string(),
                r.final_epsilon().map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.wall_time().as_secs_f64()),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let agg = aggregate(&reports);
    write_atomic(&out_dir.join("aggregate.csv"), |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "runs",
            "tol_reached",
            "diverged",
            "mean_iterations",
            "mean_iterations_to_tol",
            "mean_wall_seconds",
        ])?;
        w.write_record([
            agg.runs.to_string(),
            agg.tol_reached.to_string(),
            agg.diverged.to_string(),
            fmt_f64(agg.mean_iterations),
            fmt_f64(agg.mean_iterations_to_tol),
            fmt_f64(agg.mean_wall_seconds),
        ])?;
        w.flush()?;
        Ok(())
    })?;

    Ok(RunSummary { outcome: outcome(&reports, cfg, ov.strict_tol), out_dir, reports, aggregate: agg })
}

/// One SGD run plus the particle benchmark on the convolution model; both
/// densities at `T` are written to `density.csv` as `x, sgd, monte_carlo`.
pub fn cmd_density(cfg: &ExperimentConfig, ov: &Overrides) -> Result<DensitySummary> {
    let ModelConfig::Convolution { k_trunc, .. } = cfg.model else {
        return Err(Error::Config("`density` requires model.name = \"convolution\"".into()));
    };
    let model = cfg.model.build()?;
    let basis = cfg.basis()?;
    let grid = cfg.grid()?;
    let sgd = cfg.sgd_config()?;
    let clamp = cfg.clamp(model.as_ref())?;
    let penalty = cfg.penalty(model.as_ref())?;
    let out_dir = ov.out_dir(cfg);
    fs::create_dir_all(&out_dir)?;

    let bench = load_or_compute_benchmark(cfg, model.as_ref(), &grid, &out_dir)?;
    let bench_curve = GammaCurve::from(bench.clone());
    let seed = ov.seed(cfg);
    let report = run(
        model.as_ref(),
        &basis,
        &sgd,
        &clamp,
        &penalty,
        &grid,
        cfg.benchmark.enable.then_some(&bench_curve),
        seed,
    )?;
    write_atomic(&out_dir.join("density_report.csv"), |w| report.write_csv(w))?;

    let system = HermiteSystem::new(k_trunc);
    let horizon = grid.horizon();
    let sgd_gamma = basis.lift(report.final_coeffs(), horizon)?;
    let mc_gamma = bench.at(grid.steps());
    let xs = cfg.density.xs();
    let w_sgd = density_reconstruct(&system, &sgd_gamma[..system.len()], &xs)?;
    let w_mc = density_reconstruct(&system, &mc_gamma[..system.len()], &xs)?;
    let path = out_dir.join("density.csv");
    let header = ["x", "sgd", "monte_carlo"].map(String::from);
    let rows = xs.iter().zip(&w_sgd).zip(&w_mc).map(|((x, s), m)| vec![*x, *s, *m]);
    write_atomic(&path, |w| write_table(w, &header, rows))?;

    Ok(DensitySummary {
        outcome: outcome(std::slice::from_ref(&report), cfg, ov.strict_tol),
        path,
        xs,
        sgd: w_sgd,
        monte_carlo: w_mc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            r#"
repeat = 2
[model]
name = "linear-oracle"
x0 = 1.0
horizon = 1.0
[basis]
degree = 3
[sgd]
r0 = 5.0
rho = 0.7
M = 10
m_max = 200
seed = 4
[benchmark]
analytic = true
[output]
directory = "{}"
"#,
            dir.display()
        ))
        .unwrap()
    }

    #[test]
    fn linear_oracle_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = linear_config(dir.path());
        let summary = cmd_run(&cfg, &Overrides::default()).unwrap();
        assert_eq!(summary.outcome, Outcome::Success);
        assert_eq!(summary.aggregate.tol_reached, 2);
        for r in &summary.reports {
            assert!(r.final_epsilon().unwrap() < 0.01);
        }
        for name in ["report_000.csv", "report_001.csv", "curve_000.csv", "timings_001.csv", "summary.csv", "aggregate.csv"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let curve = fs::read_to_string(dir.path().join("curve_000.csv")).unwrap();
        assert!(curve.starts_with("t,lifted_0,benchmark_0\n"));
        assert_eq!(curve.lines().count(), 102);
    }

    #[test]
    fn seed_override_and_strict_flag() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = linear_config(dir.path());
        cfg.repeat = 1;
        cfg.sgd.m_max = 1;
        let ov = Overrides { seed: Some(99), strict_tol: true, ..Overrides::default() };
        let summary = cmd_run(&cfg, &ov).unwrap();
        assert_eq!(summary.reports[0].seed, 99);
        assert_eq!(summary.outcome, Outcome::TolNotReached);
        let relaxed = cmd_run(&cfg, &Overrides { seed: Some(99), ..Overrides::default() }).unwrap();
        assert_eq!(relaxed.outcome, Outcome::Success);
    }

    #[test]
    fn benchmark_cache_is_deterministic_and_reused() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(&format!(
            r#"
[model]
name = "kuramoto"
x0 = 0.5
sigma = 0.5
horizon = 0.5
[basis]
degree = 3
[sgd]
r0 = 5.0
rho = 0.7
M = 50
m_max = 5
[benchmark]
N = 2000
seed = 3
[output]
directory = "{}"
"#,
            dir.path().display()
        ))
        .unwrap();
        let ov = Overrides::default();
        let p1 = cmd_benchmark(&cfg, &ov).unwrap();
        let first = fs::read(&p1).unwrap();
        let p2 = cmd_benchmark(&cfg, &ov).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(first, fs::read(&p2).unwrap());
        // The constant third component is exact.
        let curve = read_benchmark_csv(first.as_slice()).unwrap();
        assert!((0..curve.grid().len()).all(|i| curve.at(i)[2] == 1.0));

        let mut other = cfg.clone();
        other.benchmark.seed = 4;
        assert_ne!(benchmark_cache_name(&cfg).unwrap(), benchmark_cache_name(&other).unwrap());
        other.benchmark.seed = 3;
        other.grid.h = 0.005;
        assert_ne!(benchmark_cache_name(&cfg).unwrap(), benchmark_cache_name(&other).unwrap());

        // A run picks up the cached file instead of re-simulating.
        let mut curve_marked = curve.values().to_vec();
        curve_marked[0] = 0.123;
        let marked = SampledCurve::new(*curve.grid(), 3, curve_marked).unwrap();
        write_atomic(&p1, |w| write_benchmark_csv(w, &marked, &[])).unwrap();
        let grid = cfg.grid().unwrap();
        let model = cfg.model.build().unwrap();
        let loaded = load_or_compute_benchmark(&cfg, model.as_ref(), &grid, dir.path()).unwrap();
        assert_eq!(loaded.at(0)[0], 0.123);
    }

    #[test]
    fn density_requires_convolution() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = linear_config(dir.path());
        assert!(matches!(cmd_density(&cfg, &Overrides::default()), Err(Error::Config(_))));
    }

    #[test]
    fn density_with_no_iterations_uses_initial_expansion() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(&format!(
            r#"
[model]
name = "convolution"
K = 4
sigma = 0.1
T = 0.2
[basis]
degree = 2
[sgd]
r0 = 5.0
rho = 0.9
M = 4
m_max = 0
tol = 1e-9
seed = 8
[benchmark]
N = 500
[density]
x_min = 0.5
x_max = 0.5
points = 1
[output]
directory = "{}"
"#,
            dir.path().display()
        ))
        .unwrap();
        let d = cmd_density(&cfg, &Overrides::default()).unwrap();
        assert_eq!(d.xs, vec![0.5]);
        let text = fs::read_to_string(&d.path).unwrap();
        assert_eq!(text.lines().count(), 2);

        // a_0 = phi(x) for one draw x of N(0, 1), so the expansion is sum_k phi_k(x) phi_k(0.5).
        let model = cfg.model.build().unwrap();
        let a0 = crate::sgd::initial_coeffs(
            model.as_ref(),
            &cfg.basis().unwrap(),
            &Default::default(),
            8,
        )
        .unwrap();
        let sys = HermiteSystem::new(4);
        let expected = density_reconstruct(&sys, &a0.row(0)[..5], &[0.5]).unwrap();
        assert!((d.sgd[0] - expected[0]).abs() < 1e-12);
    }
}
