use std::path::{Path, PathBuf};

use ood_core::train::{Activation, LossKind, LossSpec, LrSchedule};
use serde::{Deserialize, Serialize};

use crate::error::{io, BenchError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Score names a config may request.
pub const KNOWN_SCORES: [&str; 5] = ["s1", "s2", "s3", "energy", "msp"];

/// A complete experiment: scenario, methods, scores, test
/// out-distributions and run parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    pub methods: Vec<MethodSpec>,
    pub scores: Vec<String>,
    #[serde(default)]
    pub metrics: MetricSpec,
    pub test_out: Vec<TestOutSpec>,
    #[serde(default)]
    pub run: RunSpec,
    /// Evaluate against the in-distribution restricted to points whose id
    /// starts with this prefix (training still uses the full scenario).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_in_prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    Coin {
        classes: usize,
        #[serde(default = "half")]
        common_fraction: f64,
        #[serde(default = "tenth")]
        chip_mass: f64,
        #[serde(default = "half")]
        prior_in: f64,
    },
    #[serde(rename = "gaussian_grid_2d")]
    GaussianGrid2d(BlobParams),
    #[serde(rename = "rings_2d")]
    Rings2d(RingParams),
    UniformOut(BlobParams),
    CustomFile { path: PathBuf },
}

impl ScenarioSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioSpec::Coin { .. } => "coin",
            ScenarioSpec::GaussianGrid2d(_) => "gaussian_grid_2d",
            ScenarioSpec::Rings2d(_) => "rings_2d",
            ScenarioSpec::UniformOut(_) => "uniform_out",
            ScenarioSpec::CustomFile { .. } => "custom_file",
        }
    }
}

fn half() -> f64 {
    0.5
}

fn tenth() -> f64 {
    0.1
}

fn grid() -> usize {
    64
}

fn three() -> usize {
    3
}

/// `classes` isotropic Gaussian blobs on a circle, discretised on an
/// `grid × grid` lattice over `[-1, 1]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobParams {
    #[serde(default = "grid")]
    pub grid: usize,
    #[serde(default = "three")]
    pub classes: usize,
    #[serde(default = "half")]
    pub radius: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "half")]
    pub prior_in: f64,
    #[serde(default)]
    pub out: OutShape,
    /// Each class center is moved by up to this much, drawn from the seed.
    #[serde(default)]
    pub jitter: f64,
}

fn default_sigma() -> f64 {
    0.15
}

impl Default for BlobParams {
    fn default() -> Self {
        Self { grid: 64, classes: 3, radius: 0.5, sigma: 0.15, prior_in: 0.5, out: OutShape::default(), jitter: 0.0 }
    }
}

/// Concentric rings, one per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingParams {
    #[serde(default = "grid")]
    pub grid: usize,
    #[serde(default = "two")]
    pub classes: usize,
    #[serde(default = "inner")]
    pub inner_radius: f64,
    #[serde(default = "spacing")]
    pub spacing: f64,
    #[serde(default = "width")]
    pub width: f64,
    #[serde(default = "half")]
    pub prior_in: f64,
    #[serde(default)]
    pub out: OutShape,
}

fn two() -> usize {
    2
}

fn inner() -> f64 {
    0.3
}

fn spacing() -> f64 {
    0.35
}

fn width() -> f64 {
    0.07
}

/// Training out-distribution of a generated 2D scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutShape {
    /// Centered Gaussian with full support on the grid.
    Broad { sigma: f64 },
    /// Equal to the in-distribution marginal.
    SameAsIn,
    Uniform,
}

impl Default for OutShape {
    fn default() -> Self {
        OutShape::Broad { sigma: 0.6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainer {
    /// Closed-form Bayes optimum of the objective.
    Oracle,
    /// Gradient descent on one free logit vector per point.
    Tabular,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub loss: LossSpec<f64>,
    pub trainer: Trainer,
}

impl MethodSpec {
    pub fn new(name: impl Into<String>, kind: LossKind, trainer: Trainer) -> Self {
        Self { name: name.into(), loss: LossSpec::new(kind), trainer }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub tpr_levels: Vec<f64>,
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self { tpr_levels: vec![0.95] }
    }
}

/// A report column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestOutSpec {
    pub name: String,
    pub out: OutSpec,
    /// Marks the out-distribution used for training; excluded from means.
    #[serde(default)]
    pub training: bool,
}

impl TestOutSpec {
    pub fn new(name: impl Into<String>, out: OutSpec, training: bool) -> Self {
        Self { name: name.into(), out, training }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutSpec {
    /// The scenario's own out-distribution.
    Training,
    Uniform,
    /// Gaussian bump on the grid coordinates.
    Gaussian { center: Vec<f64>, sigma: f64 },
    /// `p^C` with `α = alpha_fraction · α_max`.
    Complement { alpha_fraction: f64 },
    /// Uniform over points whose id starts with `prefix`.
    Prefix { prefix: String },
    /// JSON file holding `{"mass": [...]}` over the scenario's points.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub seeds: Vec<u64>,
    /// Tabular gradient-descent steps.
    pub steps: usize,
    pub learning_rate: f64,
    /// When present every method is run once per value, overriding its `λ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    /// Overrides every method's labeled fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled_fraction: Option<f64>,
    #[serde(default)]
    pub mlp: MlpSpec,
    /// Round trained scores to this many decimals before computing metrics,
    /// so that residual optimisation noise does not break exact ties.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_decimals: Option<i32>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            steps: 20_000,
            learning_rate: 0.5,
            lambdas: None,
            labeled_fraction: None,
            mlp: MlpSpec::default(),
            score_decimals: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_in: usize,
    /// Defaults to twice `batch_in`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_out: Option<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub schedule: LrSchedule,
    /// In-distribution training pool size.
    pub n_in: usize,
    /// Defaults to twice `n_in`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_out: Option<usize>,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            epochs: 30,
            batch_in: 64,
            batch_out: None,
            learning_rate: 0.05,
            momentum: 0.9,
            schedule: LrSchedule::Cosine,
            n_in: 2000,
            n_out: None,
        }
    }
}

/// Shared versus separate training of classifier and discriminator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub trainer: Trainer,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub labeled_fraction: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        let mut config: Self =
            serde_json::from_str(&text).map_err(|source| BenchError::Json { path: path.into(), source })?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        config.validate()?;
        Ok(config)
    }

    /// Makes file references relative to the config's directory absolute.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ScenarioSpec::CustomFile { path } = &mut self.scenario {
            fix(path);
        }
        for t in &mut self.test_out {
            if let OutSpec::File { path } = &mut t.out {
                fix(path);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.methods.is_empty() || self.scores.is_empty() || self.test_out.is_empty() {
            return bad("need at least one method, one score and one test out-distribution".into());
        }
        if let Some(s) = self.scores.iter().find(|s| !KNOWN_SCORES.contains(&s.as_str())) {
            return bad(format!("unknown score `{s}`"));
        }
        for m in &self.methods {
            m.loss.validate().map_err(|e| BenchError::Config(format!("method `{}`: {e}", m.name)))?;
        }
        let mut names: Vec<&str> = self.methods.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("method names must be unique".into());
        }
        let mut cols: Vec<&str> = self.test_out.iter().map(|t| t.name.as_str()).collect();
        cols.sort_unstable();
        if cols.windows(2).any(|w| w[0] == w[1]) {
            return bad("test out-distribution names must be unique".into());
        }
        if self.metrics.tpr_levels.is_empty() || self.metrics.tpr_levels.iter().any(|&q| !(q > 0.0 && q <= 1.0)) {
            return bad("tpr levels must lie in (0, 1]".into());
        }
        if self.run.seeds.is_empty() {
            return bad("need at least one seed".into());
        }
        if let Some(l) = &self.run.lambdas {
            if l.is_empty() || l.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return bad("lambda sweep values must all be positive".into());
            }
        }
        if let Some(f) = self.run.labeled_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("labeled fraction {f} must lie in (0, 1]"));
            }
        }
        if self.run.steps == 0 || !(self.run.learning_rate > 0.0) {
            return bad("tabular steps and learning rate must be positive".into());
        }
        let mlp = &self.run.mlp;
        if mlp.epochs == 0 || mlp.batch_in == 0 || mlp.n_in == 0 || mlp.batch_out == Some(0) || mlp.n_out == Some(0) {
            return bad("mlp epochs, batch sizes and pool sizes must be positive".into());
        }
        if let Some(c) = &self.compare {
            if c.trainer == Trainer::Oracle {
                return bad("shared vs separate comparison needs a trained model".into());
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}
