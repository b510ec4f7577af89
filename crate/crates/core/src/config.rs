//! TOML experiment description.
//!
//! ```toml
//! repeat = 20
//!
//! [model]
//! name = "kuramoto"
//! x0 = 0.5
//! sigma = 0.5
//! horizon = 0.5
//!
//! [basis]
//! degree = 3
//!
//! [grid]
//! h = 0.01
//!
//! [sgd]
//! r0 = 5.0
//! rho = 0.7
//! M = 1000
//! m_max = 200
//! seed = 1
//!
//! [benchmark]
//! N = 100000
//! seed = 7
//! ```
//!
//! Defaults: `grid.h = 0.01`, `sgd.tol = 0.01`, `sgd.m_max = 1000`,
//! `sgd.M = 1`, `sgd.seed = 0`, `basis.clamp.mode = "identity"`,
//! `basis.penalty.mode = "zero"`, benchmark enabled with `N = 100000`
//! and `seed = 0`, `output.directory = "out"`, `repeat = 1`, density grid
//! 141 points on `[-3, 4]`. Without a benchmark the run stops on the
//! plateau rule or `m_max`.

use serde::{Deserialize, Serialize};

use crate::analysis::WeightKernel;
use crate::basis::{ClampSpec, LagrangeBasis, PenaltySpec};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{
    make_convolution_projected, make_kuramoto, make_linear_oracle, make_polydrift, SeparableModel,
};
use crate::sgd::{PlateauRule, SgdConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Kuramoto {
        x0: f64,
        sigma: f64,
        #[serde(alias = "T")]
        horizon: f64,
        #[serde(default, skip_serializing_if = "is_false")]
        no_drift: bool,
    },
    Polydrift {
        x0: f64,
        delta: f64,
        #[serde(alias = "T")]
        horizon: f64,
    },
    Convolution {
        #[serde(alias = "K")]
        k_trunc: usize,
        sigma: f64,
        #[serde(alias = "T")]
        horizon: f64,
    },
    LinearOracle {
        x0: f64,
        #[serde(alias = "T")]
        horizon: f64,
    },
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ModelConfig {
    pub fn horizon(&self) -> f64 {
        match *self {
            ModelConfig::Kuramoto { horizon, .. }
            | ModelConfig::Polydrift { horizon, .. }
            | ModelConfig::Convolution { horizon, .. }
            | ModelConfig::LinearOracle { horizon, .. } => horizon,
        }
    }

    pub fn build(&self) -> Result<Box<dyn SeparableModel>> {
        Ok(match *self {
            ModelConfig::Kuramoto { x0, sigma, horizon, no_drift } => {
                let m = make_kuramoto(x0, sigma, horizon)?;
                Box::new(if no_drift { m.without_drift() } else { m })
            }
            ModelConfig::Polydrift { x0, delta, horizon } => Box::new(make_polydrift(x0, delta, horizon)?),
            ModelConfig::Convolution { k_trunc, sigma, horizon } => {
                Box::new(make_convolution_projected(k_trunc, sigma, horizon)?)
            }
            ModelConfig::LinearOracle { x0, horizon } => Box::new(make_linear_oracle(x0, horizon)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClampMode {
    #[default]
    Identity,
    Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClampConfig {
    #[serde(default)]
    pub mode: ClampMode,
    /// Defaults to twice the model's bound on `|phi|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMode {
    #[default]
    Zero,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    #[serde(default)]
    pub mode: PenaltyMode,
    /// Defaults to `2 sup|phi| sqrt(n + 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(alias = "n")]
    pub degree: usize,
    #[serde(default)]
    pub clamp: ClampConfig,
    #[serde(default)]
    pub penalty: PenaltyConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_h")]
    pub h: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { h: default_h() }
    }
}

fn default_h() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    pub r0: f64,
    pub rho: f64,
    #[serde(rename = "M", default = "one")]
    pub batch: usize,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightConfig>,
}

fn one() -> usize {
    1
}

fn default_m_max() -> usize {
    1000
}

fn default_tol() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default = "yes")]
    pub enable: bool,
    #[serde(rename = "N", default = "default_particles")]
    pub particles: usize,
    #[serde(default)]
    pub seed: u64,
    /// Use the closed-form curve instead of particles (linear oracle only).
    #[serde(default, skip_serializing_if = "is_false")]
    pub analytic: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig { enable: true, particles: default_particles(), seed: 0, analytic: false }
    }
}

fn yes() -> bool {
    true
}

fn default_particles() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: default_dir() }
    }
}

fn default_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { x_min: -3.0, x_max: 4.0, points: 141 }
    }
}

impl DensityConfig {
    pub fn xs(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.x_min];
        }
        let dx = (self.x_max - self.x_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.x_min + i as f64 * dx).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "one")]
    pub repeat: usize,
    pub model: ModelConfig,
    pub basis: BasisConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub sgd: SgdSection,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub density: DensityConfig,
}

fn missing_key(table: &toml::Table, path: &[&str]) -> Option<String> {
    let mut cur = table;
    for (i, key) in path.iter().enumerate() {
        match cur.get(*key) {
            None => return Some(path[..=i].join(".")),
            Some(toml::Value::Table(t)) => cur = t,
            Some(_) => return None,
        }
    }
    None
}

fn non_finite(v: &toml::Value, path: String) -> Option<String> {
    match v {
        toml::Value::Float(f) if !f.is_finite() => Some(path),
        toml::Value::Table(t) => t.iter().find_map(|(k, v)| {
            non_finite(v, if path.is_empty() { k.clone() } else { format!("{path}.{k}") })
        }),
        _ => None,
    }
}

impl ExperimentConfig {
    /// Parses and validates a config.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for path in [&["model"][..], &["model", "name"], &["basis"], &["basis", "degree"], &["sgd"]] {
            if let Some(key) = missing_key(&table, path) {
                if key == "basis.degree" && table["basis"].get("n").is_some() {
                    continue;
                }
                return Err(Error::Config(format!("missing key `{key}`")));
            }
        }
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds every component once so that bad values surface before any
    /// simulation starts.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        let tree = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(path) = non_finite(&tree, String::new()) {
            return Err(Error::Config(format!("`{path}` must be finite")));
        }
        if self.repeat == 0 {
            return Err(Error::Config("`repeat` must be at least 1".into()));
        }
        let model = self.model.build().map_err(cfg)?;
        self.basis().map_err(cfg)?;
        self.grid().map_err(cfg)?;
        self.sgd_config().map_err(cfg)?.validate().map_err(cfg)?;
        self.clamp(model.as_ref()).map_err(cfg)?;
        self.penalty(model.as_ref()).map_err(cfg)?;
        if self.benchmark.enable && !self.benchmark.analytic && self.benchmark.particles < 2 {
            return Err(Error::Config("`benchmark.N` must be at least 2".into()));
        }
        if self.benchmark.analytic && !matches!(self.model, ModelConfig::LinearOracle { .. }) {
            return Err(Error::Config("`benchmark.analytic` is only available for linear-oracle".into()));
        }
        let d = self.density;
        if d.points == 0 || !d.x_min.is_finite() || !d.x_max.is_finite() || (d.points > 1 && d.x_max <= d.x_min) {
            return Err(Error::Config("density grid needs points >= 1 and x_min < x_max".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<LagrangeBasis> {
        LagrangeBasis::new(self.basis.degree, self.model.horizon())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.model.horizon(), self.grid.h)
    }

    pub fn sgd_config(&self) -> Result<SgdConfig> {
        let s = &self.sgd;
        let weight = s.weight.map(|w| WeightKernel::new(w.c1, w.c2)).transpose()?;
        Ok(SgdConfig {
            r0: s.r0,
            rho: s.rho,
            batch: s.batch,
            max_iter: s.m_max,
            tol: if self.benchmark.enable { Some(s.tol) } else { None },
            weight,
            init: Default::default(),
            active: None,
            plateau: Some(PlateauRule::default()),
        })
    }

    pub fn clamp(&self, model: &dyn SeparableModel) -> Result<ClampSpec> {
        let c = self.basis.clamp;
        match c.mode {
            ClampMode::Identity => Ok(ClampSpec::Identity),
            ClampMode::Ball => {
                let radius = match (c.radius, model.phi_bound()) {
                    (Some(r), _) => r,
                    (None, Some(b)) => 2.0 * b,
                    (None, None) => {
                        return Err(Error::invalid("`basis.clamp.radius` is required for unbounded phi"))
                    }
                };
                match c.smoothing {
                    Some(w) => ClampSpec::ball_with_smoothing(radius, w),
                    None => ClampSpec::ball(radius),
                }
            }
        }
    }

    pub fn penalty(&self, model: &dyn SeparableModel) -> Result<PenaltySpec> {
        let p = self.basis.penalty;
        match p.mode {
            PenaltyMode::Zero => Ok(PenaltySpec::Zero),
            PenaltyMode::Quadratic => {
                let rho = match (p.rho, model.phi_bound()) {
                    (Some(r), _) => r,
                    (None, Some(b)) => PenaltySpec::default_radius(b, self.basis.degree + 1),
                    (None, None) => {
                        return Err(Error::invalid("`basis.penalty.rho` is required for unbounded phi"))
                    }
                };
                PenaltySpec::quadratic(rho)
            }
        }
    }
}
