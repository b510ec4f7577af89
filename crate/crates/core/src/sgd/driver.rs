use std::io::Write;
use std::time::{Duration, Instant};

use super::gradient::GradientContext;
use super::settings::{learning_rate, InitMode, PlateauRule, SgdConfig};
use crate::analysis::relative_error_values;
use crate::basis::{ClampSpec, CoeffMatrix, LagrangeBasis, PenaltySpec};
use crate::csvio::fmt_f64;
use crate::curve::GammaCurve;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::SeparableModel;
use crate::sim::{derived_rng, StreamTag};

/// Iterates whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    TolReached,
    MaxIter,
    /// Moving average of the objective estimate stopped changing.
    Plateau,
    Diverged(String),
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::TolReached => "tol-reached",
            Termination::MaxIter => "m-max",
            Termination::Plateau => "plateau",
            Termination::Diverged(_) => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub coeffs: CoeffMatrix,
    /// `epsilon_m` of the unclamped lift, when a benchmark is present.
    pub epsilon: Option<f64>,
    /// Minibatch estimate of `G(a_m)`.
    pub g_estimate: Option<f64>,
    /// `eta_m`, present when the step from `a_m` was taken.
    pub learning_rate: Option<f64>,
    /// `v_{m+1}`, the step direction taken from `a_m`.
    pub gradient: Option<CoeffMatrix>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// The model relies on finite-difference state derivatives.
    pub fd_fallback: bool,
}

impl RunReport {
    /// Number of updates performed before stopping.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }

    pub fn final_coeffs(&self) -> &CoeffMatrix {
        &self.records.last().expect("a report holds at least a_0").coeffs
    }

    pub fn final_epsilon(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.epsilon)
    }

    pub fn wall_time(&self) -> Duration {
        self.records.last().map_or(Duration::ZERO, |r| r.elapsed)
    }

    /// Per-iteration CSV. Wall times are left out so that identical seeds
    /// give identical bytes; see [`Self::write_timings_csv`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let coeffs = &self.records[0].coeffs;
        let mut header: Vec<String> =
            ["iteration", "epsilon", "g_estimate", "learning_rate"].map(String::from).to_vec();
        for h in 0..coeffs.rows() {
            for j in 0..coeffs.cols() {
                header.push(format!("a_{h}_{j}"));
            }
        }
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.records {
            let mut row = vec![
                r.iteration.to_string(),
                opt(r.epsilon),
                opt(r.g_estimate),
                opt(r.learning_rate),
            ];
            row.extend(r.coeffs.as_slice().iter().map(|&v| fmt_f64(v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timings_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "elapsed_seconds"])?;
        for r in &self.records {
            w.write_record([r.iteration.to_string(), fmt_f64(r.elapsed.as_secs_f64())])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `a_m` together with the noise cursor. Noise for `v_{m+1}` is keyed by
/// iteration `m + 1`, so no increment is reused across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub m: usize,
    pub a: CoeffMatrix,
    pub last_gradient: Option<CoeffMatrix>,
}

impl IterateState {
    pub fn new(a0: CoeffMatrix) -> Self {
        IterateState { m: 0, a: a0, last_gradient: None }
    }

    pub fn noise_iteration(&self) -> u64 {
        self.m as u64 + 1
    }

    /// `a_{m+1} = a_m - eta v_{m+1}`.
    pub fn advance(&mut self, eta: f64, v: CoeffMatrix) {
        self.a.axpy(-eta, &v);
        self.last_gradient = Some(v);
        self.m += 1;
    }
}

/// `a_0` for `mode`; the initial draw uses its own stream of `seed`.
pub fn initial_coeffs(
    model: &dyn SeparableModel,
    basis: &LagrangeBasis,
    mode: &InitMode,
    seed: u64,
) -> Result<CoeffMatrix> {
    let dims = model.dims();
    match mode {
        InitMode::Explicit(a) => {
            if a.rows() != basis.len() || a.cols() != dims.terms {
                return Err(Error::Shape(format!(
                    "explicit a_0 is {}x{}, expected {}x{}",
                    a.rows(),
                    a.cols(),
                    basis.len(),
                    dims.terms
                )));
            }
            Ok(a.clone())
        }
        InitMode::PhiOfInitialDraw => {
            let mut rng = derived_rng(seed, 0, 0, StreamTag::InitialIterate);
            let mut x = vec![0.0; dims.state];
            model.initial_law().sample(&mut rng, &mut x);
            let mut phi = vec![0.0; dims.terms];
            model.phi(&x, &mut phi);
            Ok(CoeffMatrix::constant(basis.len(), &phi))
        }
    }
}

fn plateau_reached(history: &[f64], rule: PlateauRule) -> bool {
    let w = rule.window;
    if history.len() < 2 * w {
        return false;
    }
    let n = history.len();
    let recent = history[n - w..].iter().sum::<f64>() / w as f64;
    let before = history[n - 2 * w..n - w].iter().sum::<f64>() / w as f64;
    (recent - before).abs() <= rule.rel_change * before.abs()
}

/// Minibatch SGD from `a_0` until the tolerance, the plateau rule or the
/// iteration cap stops it. `epsilon_m` is measured against `benchmark`
/// with the unweighted norm whenever a benchmark is given.
#[allow(clippy::too_many_arguments)]
pub fn run(
    model: &dyn SeparableModel,
    basis: &LagrangeBasis,
    cfg: &SgdConfig,
    clamp: &ClampSpec,
    penalty: &PenaltySpec,
    grid: &TimeGrid,
    benchmark: Option<&GammaCurve>,
    seed: u64,
) -> Result<RunReport> {
    cfg.validate()?;
    let dims = model.dims();
    let active = cfg.active.clone().unwrap_or_else(|| model.active_terms());
    if active.len() != dims.terms {
        return Err(Error::Shape(format!(
            "mask has {} entries, model has {} terms",
            active.len(),
            dims.terms
        )));
    }
    if cfg.tol.is_some() && benchmark.is_none() {
        return Err(Error::MissingBenchmark);
    }
    let bench_values = match benchmark {
        Some(b) if b.terms() != dims.terms => {
            return Err(Error::Shape(format!(
                "benchmark has {} components, model has {} terms",
                b.terms(),
                dims.terms
            )))
        }
        Some(b) => Some(b.on_grid(grid)?),
        None => None,
    };

    let start = Instant::now();
    let mut state = IterateState::new(initial_coeffs(model, basis, &cfg.init, seed)?);
    let mut records = Vec::new();
    let mut history = Vec::new();
    let plateau = if cfg.tol.is_none() { cfg.plateau } else { None };

    let termination = loop {
        let ctx = GradientContext::new(model, basis, &state.a, clamp, grid, &active, cfg.weight)?;
        let epsilon = match &bench_values {
            Some(b) => Some(relative_error_values(ctx.curve().lifted(), b, grid, None, &active)?),
            None => None,
        };
        let mut record = IterationRecord {
            iteration: state.m,
            coeffs: state.a.clone(),
            epsilon,
            g_estimate: None,
            learning_rate: None,
            gradient: None,
            elapsed: Duration::ZERO,
        };
        let stop = match (cfg.tol, epsilon) {
            (Some(tol), Some(e)) if e < tol => Some(Termination::TolReached),
            _ if state.m >= cfg.max_iter => Some(Termination::MaxIter),
            _ => None,
        };
        if let Some(t) = stop {
            record.elapsed = start.elapsed();
            records.push(record);
            break t;
        }

        let mb = match ctx.minibatch(&state.a, penalty, &active, seed, state.noise_iteration(), cfg.batch)
        {
            Ok(mb) => mb,
            Err(Error::SimulationDiverged { step }) => {
                record.elapsed = start.elapsed();
                records.push(record);
                break Termination::Diverged(format!(
                    "simulation diverged at step {step} of iteration {}",
                    state.m
                ));
            }
            Err(e) => return Err(e),
        };
        record.g_estimate = Some(mb.objective);
        history.push(mb.objective);
        if let Some(rule) = plateau {
            if plateau_reached(&history, rule) {
                record.elapsed = start.elapsed();
                records.push(record);
                break Termination::Plateau;
            }
        }

        let eta = learning_rate(cfg, state.m);
        record.learning_rate = Some(eta);
        record.gradient = Some(mb.grad.clone());
        record.elapsed = start.elapsed();
        records.push(record);
        state.advance(eta, mb.grad);

        let norm = state.a.norm();
        if !state.a.is_finite() || norm > DIVERGENCE_NORM {
            break Termination::Diverged(format!(
                "|a_{}| = {norm:e} exceeds {DIVERGENCE_NORM:e}",
                state.m
            ));
        }
    };

    Ok(RunReport { seed, records, termination, fd_fallback: !model.has_state_derivatives() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::interpolate_curve;
    use crate::curve::SampledCurve;
    use crate::model::{make_kuramoto, make_linear_oracle, make_polydrift, Dims, InitialLaw};
    use crate::sim::simulate_particle_system;

    struct ConstantPhi {
        law: InitialLaw,
    }

    impl SeparableModel for ConstantPhi {
        fn name(&self) -> &str {
            "constant-phi"
        }
        fn dims(&self) -> Dims {
            Dims { state: 1, noise: 1, terms: 2 }
        }
        fn horizon(&self) -> f64 {
            1.0
        }
        fn initial_law(&self) -> &InitialLaw {
            &self.law
        }
        fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
            out[0] = -x[0];
            out[1] = 1.0;
        }
        fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
            out[0] = 1.0;
            out[1] = 0.5;
        }
        fn phi(&self, _x: &[f64], out: &mut [f64]) {
            out[0] = 0.4;
            out[1] = -1.2;
        }
        fn phi_jacobian(&self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    fn kuramoto_setup() -> (crate::model::Kuramoto, LagrangeBasis, TimeGrid) {
        let model = make_kuramoto(0.5, 0.5, 0.5).unwrap();
        let basis = LagrangeBasis::new(3, 0.5).unwrap();
        let grid = TimeGrid::new(0.5, 0.01).unwrap();
        (model, basis, grid)
    }

    fn csv_bytes(r: &RunReport) -> Vec<u8> {
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        out
    }

    #[test]
    fn stationary_point_stays_put() {
        let model = ConstantPhi { law: InitialLaw::StandardGaussian };
        let basis = LagrangeBasis::new(2, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 0.02).unwrap();
        let cfg = SgdConfig { r0: 3.0, batch: 4, max_iter: 25, tol: None, plateau: None, ..SgdConfig::default() };
        let r = run(&model, &basis, &cfg, &ClampSpec::Identity, &PenaltySpec::Zero, &grid, None, 1).unwrap();
        assert_eq!(r.termination, Termination::MaxIter);
        assert_eq!(r.records.len(), 26);
        let a0 = CoeffMatrix::constant(3, &[0.4, -1.2]);
        for rec in &r.records {
            assert_eq!(rec.coeffs, a0);
        }
    }

    #[test]
    fn initial_iterate_from_dirac() {
        let (model, basis, _) = kuramoto_setup();
        let a0 = initial_coeffs(&model, &basis, &InitMode::PhiOfInitialDraw, 3).unwrap();
        assert_eq!(a0, CoeffMatrix::constant(4, &[0.5f64.sin(), 0.5f64.cos(), 1.0]));
        let bad = InitMode::Explicit(CoeffMatrix::zeros(3, 3));
        assert!(initial_coeffs(&model, &basis, &bad, 3).is_err());
    }

    #[test]
    fn tolerance_needs_benchmark() {
        let (model, basis, grid) = kuramoto_setup();
        let cfg = SgdConfig::default();
        let r = run(&model, &basis, &cfg, &ClampSpec::Identity, &PenaltySpec::Zero, &grid, None, 0);
        assert!(matches!(r, Err(Error::MissingBenchmark)));
    }

    #[test]
    fn update_identity_and_reproducibility() {
        let (model, basis, grid) = kuramoto_setup();
        let cfg = SgdConfig { r0: 5.0, batch: 8, max_iter: 30, tol: None, plateau: None, ..SgdConfig::default() };
        let pen = PenaltySpec::quadratic(4.0).unwrap();
        let run_once = || run(&model, &basis, &cfg, &ClampSpec::Identity, &pen, &grid, None, 11).unwrap();
        let r = run_once();
        for w in r.records.windows(2) {
            let eta = w[0].learning_rate.unwrap();
            let v = w[0].gradient.as_ref().unwrap();
            for ((next, prev), g) in w[1].coeffs.as_slice().iter().zip(w[0].coeffs.as_slice()).zip(v.as_slice()) {
                let resid = next + eta * g - prev;
                assert!(resid.abs() <= 4.0 * f64::EPSILON * (prev.abs() + (eta * g).abs()));
            }
        }
        assert_eq!(csv_bytes(&r), csv_bytes(&run_once()));
        let other = run(&model, &basis, &cfg, &ClampSpec::Identity, &pen, &grid, None, 12).unwrap();
        assert_ne!(csv_bytes(&r), csv_bytes(&other));
    }

    #[test]
    fn linear_oracle_reaches_tolerance() {
        let model = make_linear_oracle(1.0, 1.0).unwrap();
        let basis = LagrangeBasis::new(3, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let exact = SampledCurve::from_fn(grid, 1, |t| vec![t.exp()]).unwrap().into();
        // Deterministic and poorly conditioned: about 2800 steps at r0 = 1.
        let cfg = SgdConfig { r0: 1.0, rho: 0.7, batch: 100, max_iter: 5000, ..SgdConfig::default() };
        let r = run(&model, &basis, &cfg, &ClampSpec::Identity, &PenaltySpec::Zero, &grid, Some(&exact), 2)
            .unwrap();
        assert_eq!(r.termination, Termination::TolReached, "after {} iterations", r.iterations());
        assert!(r.final_epsilon().unwrap() < 0.01);
    }

    #[test]
    fn divergence_is_reported() {
        let model = make_polydrift(1.0, 0.8, 1.0).unwrap();
        let basis = LagrangeBasis::new(3, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let cfg = SgdConfig { r0: 1e4, rho: 0.6, batch: 4, max_iter: 200, tol: None, plateau: None, ..SgdConfig::default() };
        let r = run(&model, &basis, &cfg, &ClampSpec::Identity, &PenaltySpec::Zero, &grid, None, 0).unwrap();
        assert!(matches!(r.termination, Termination::Diverged(_)), "{:?}", r.termination);
        assert!(r.final_coeffs().is_finite());
        for (i, rec) in r.records.iter().enumerate() {
            assert_eq!(rec.iteration, i);
        }
    }

    #[test]
    fn plateau_rule() {
        let rule = PlateauRule { window: 3, rel_change: 1e-3 };
        assert!(!plateau_reached(&[1.0; 5], rule));
        assert!(plateau_reached(&[1.0; 6], rule));
        assert!(!plateau_reached(&[2.0, 2.0, 2.0, 1.0, 1.0, 1.0], rule));

        // phi constant and no penalty: the objective estimate is exactly zero.
        let stuck = ConstantPhi { law: InitialLaw::StandardGaussian };
        let basis = LagrangeBasis::new(1, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let cfg = SgdConfig { batch: 2, max_iter: 100_000, tol: None, ..SgdConfig::default() };
        let r = run(&stuck, &basis, &cfg, &ClampSpec::Identity, &PenaltySpec::Zero, &grid, None, 0).unwrap();
        assert_eq!(r.termination, Termination::Plateau);
        assert_eq!(r.records.len(), 40);
        assert!(r.records.last().unwrap().learning_rate.is_none());
    }

    #[test]
    fn bounded_iterates_with_clamp_and_penalty() {
        let (model, basis, grid) = kuramoto_setup();
        let cfg = SgdConfig { r0: 5.0, rho: 0.7, batch: 1, max_iter: 10_000, tol: None, plateau: None, ..SgdConfig::default() };
        let clamp = ClampSpec::ball(2.0).unwrap();
        let pen = PenaltySpec::quadratic(2.0 * 2f64.sqrt() * 2.0).unwrap();
        let r = run(&model, &basis, &cfg, &clamp, &pen, &grid, None, 5).unwrap();
        assert_eq!(r.termination, Termination::MaxIter);
        let worst = r.records.iter().map(|rec| rec.coeffs.norm()).fold(0.0, f64::max);
        assert!(worst < 50.0, "max |a_m| = {worst}");
    }

    #[test]
    fn median_error_trend_is_non_increasing() {
        let (model, basis, grid) = kuramoto_setup();
        let bench = simulate_particle_system(&model, 20_000, &grid, 99).unwrap();
        let bench: GammaCurve = bench.curve.into();
        let iters = 40;
        let cfg = SgdConfig { r0: 1.0, rho: 0.7, batch: 10, max_iter: iters, tol: None, plateau: None, ..SgdConfig::default() };
        let mut quartiles = vec![Vec::new(); 4];
        for seed in 0..20 {
            let r = run(&model, &basis, &cfg, &ClampSpec::Identity, &PenaltySpec::Zero, &grid, Some(&bench), seed)
                .unwrap();
            for (q, bucket) in quartiles.iter_mut().enumerate() {
                let slice = &r.records[q * iters / 4..(q + 1) * iters / 4];
                bucket.push(slice.iter().map(|x| x.epsilon.unwrap()).sum::<f64>() / slice.len() as f64);
            }
        }
        let medians: Vec<f64> = quartiles
            .into_iter()
            .map(|mut b| {
                b.sort_by(f64::total_cmp);
                0.5 * (b[9] + b[10])
            })
            .collect();
        assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
    }

    #[test]
    fn interpolated_benchmark_start_is_tolerance_hit() {
        // Starting from the interpolant of the benchmark itself stops at once.
        let model = make_linear_oracle(1.0, 1.0).unwrap();
        let basis = LagrangeBasis::new(6, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let exact: GammaCurve = SampledCurve::from_fn(grid, 1, |t| vec![t.exp()]).unwrap().into();
        let a = interpolate_curve(&basis, &exact).unwrap();
        let cfg = SgdConfig { init: InitMode::Explicit(a), ..SgdConfig::default() };
        let r = run(&model, &basis, &cfg, &ClampSpec::Identity, &PenaltySpec::Zero, &grid, Some(&exact), 0)
            .unwrap();
        assert_eq!(r.termination, Termination::TolReached);
        assert_eq!(r.iterations(), 0);
    }
}
