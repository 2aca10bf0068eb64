//! Experiment configuration.
//!
//! A config file is TOML. Only `experiment` is required; every other key
//! falls back to that experiment's defaults, which `vograd print-config`
//! writes out in full. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use vograd_core::estimators::BaselineState;
use vograd_core::svo::VarianceReduction;
use vograd_core::{EstimatorKind, Optimizer, OptimizerKind};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    Fig2Trajectory,
    Fig3Sweep,
    Fig4Nn,
    ClusterSim,
    MomentsTable,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Fig2Trajectory,
        Experiment::Fig3Sweep,
        Experiment::Fig4Nn,
        Experiment::ClusterSim,
        Experiment::MomentsTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig2Trajectory => "fig2_trajectory",
            Experiment::Fig3Sweep => "fig3_sweep",
            Experiment::Fig4Nn => "fig4_nn",
            Experiment::ClusterSim => "cluster_sim",
            Experiment::MomentsTable => "moments_table",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How estimators are made comparable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum BudgetMode {
    /// Every estimator gets the configured `S`.
    #[default]
    PerSample,
    /// Equal cost in plain evaluations: estimators costing one evaluation per
    /// sample (GP, GP-baseline) get `2S`, the rest (GP-AS, SPSA, DD) get `S`.
    PerEval,
}

/// Cost of one sample in plain evaluations; a dual evaluation counts as two.
pub fn cost_per_sample(kind: EstimatorKind) -> usize {
    match kind {
        EstimatorKind::Gp | EstimatorKind::GpBaseline => 1,
        EstimatorKind::GpAntithetic | EstimatorKind::Spsa | EstimatorKind::DirectionalDerivative => 2,
    }
}

pub fn samples_for(kind: EstimatorKind, samples: usize, mode: BudgetMode) -> usize {
    match mode {
        BudgetMode::PerSample => samples,
        BudgetMode::PerEval => samples * 2 / cost_per_sample(kind),
    }
}

/// An [`EstimatorKind`] that reads and writes as its short name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Estimator(pub EstimatorKind);

impl Serialize for Estimator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0.name())
    }
}

impl<'de> Deserialize<'de> for Estimator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        EstimatorKind::from_str(&s).map(Estimator).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Quadratic,
    Quartic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub dim: usize,
    /// Evaluation point; drawn from `N(0, I)` with the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub estimators: Vec<Estimator>,
    pub samples: usize,
    pub sigmas: Vec<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerName,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerName::Sgd,
            learning_rate,
            ..Self::adam(learning_rate)
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        let OptimizerKind::Adam { beta1, beta2, epsilon } = OptimizerKind::ADAM_DEFAULT else {
            unreachable!()
        };
        Self {
            kind: OptimizerName::Adam,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn build(&self) -> vograd_core::Result<Optimizer> {
        let kind = match self.kind {
            OptimizerName::Sgd => OptimizerKind::Sgd,
            OptimizerName::Adam => OptimizerKind::Adam {
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
        };
        Optimizer::new(kind, self.learning_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    None,
    Antithetic,
    Baseline,
}

impl From<Reduction> for VarianceReduction {
    fn from(r: Reduction) -> Self {
        match r {
            Reduction::None => VarianceReduction::None,
            Reduction::Antithetic => VarianceReduction::Antithetic,
            Reduction::Baseline => VarianceReduction::Baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvoConfig {
    pub mu0: Vec<f64>,
    pub sigma0: f64,
    pub samples: usize,
    pub steps: usize,
    pub seeds: usize,
    pub fixed_reduction: Reduction,
    pub learned_reduction: Reduction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineChoice {
    None,
    CurrentValue,
    MovingAverage,
}

impl BaselineChoice {
    pub fn state(self, window: usize) -> vograd_core::Result<Option<BaselineState>> {
        Ok(match self {
            BaselineChoice::None => None,
            BaselineChoice::CurrentValue => Some(BaselineState::current_value()),
            BaselineChoice::MovingAverage => Some(BaselineState::moving_average(window)?),
        })
    }
}

/// One training curve family member of the network experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnRun {
    /// Curves sharing a label form one family (for example GP across σ).
    pub label: String,
    pub estimator: Estimator,
    pub sigma: f64,
    pub baseline: BaselineChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnConfig {
    pub classes: usize,
    pub features: usize,
    pub per_class: usize,
    pub separation: f64,
    pub hidden: Vec<usize>,
    /// Perturbations per step (`S`), one per simulated worker.
    pub workers: usize,
    pub minibatch: usize,
    pub steps: usize,
    pub seeds: usize,
    pub smoothing_window: usize,
    pub baseline_window: usize,
    pub runs: Vec<NnRun>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropSpec {
    pub round: u64,
    pub worker: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Reject,
    Renormalize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    pub workers: u32,
    pub rounds: u64,
    pub mode: Estimator,
    pub sigma: f64,
    pub replicas: usize,
    pub baseline: BaselineChoice,
    pub baseline_window: usize,
    pub policy: Policy,
    #[serde(default)]
    pub drops: Vec<DropSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub master_seed: u64,
    pub budget_mode: BudgetMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub objective: ObjectiveConfig,
    pub sweep: SweepConfig,
    pub optimizer: OptimizerConfig,
    pub svo: SvoConfig,
    pub nn: NnConfig,
    pub cluster: ClusterSection,
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

fn run(label: &str, kind: EstimatorKind, sigma: f64, baseline: BaselineChoice) -> NnRun {
    NnRun {
        label: label.into(),
        estimator: Estimator(kind),
        sigma,
        baseline,
    }
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        use EstimatorKind::*;
        let (objective, sweep) = match experiment {
            Experiment::MomentsTable => (
                ObjectiveConfig {
                    kind: ObjectiveKind::Quartic,
                    dim: 10,
                    point: None,
                },
                SweepConfig {
                    estimators: EstimatorKind::ALL.map(Estimator).to_vec(),
                    samples: 1,
                    sigmas: vec![0.01, 0.03, 0.1],
                    trials: 100_000,
                },
            ),
            Experiment::ClusterSim => (
                ObjectiveConfig {
                    kind: ObjectiveKind::Quadratic,
                    dim: 100,
                    point: None,
                },
                fig3_sweep(),
            ),
            Experiment::Fig2Trajectory => (
                ObjectiveConfig {
                    kind: ObjectiveKind::Quadratic,
                    dim: 2,
                    point: None,
                },
                fig3_sweep(),
            ),
            _ => (
                ObjectiveConfig {
                    kind: ObjectiveKind::Quartic,
                    dim: 100,
                    point: None,
                },
                fig3_sweep(),
            ),
        };
        let optimizer = match experiment {
            Experiment::Fig4Nn => OptimizerConfig::adam(1e-3),
            Experiment::ClusterSim => OptimizerConfig::sgd(5.0),
            _ => OptimizerConfig::sgd(0.1),
        };
        Self {
            experiment,
            master_seed: 0,
            budget_mode: if experiment == Experiment::Fig4Nn {
                BudgetMode::PerEval
            } else {
                BudgetMode::PerSample
            },
            output: None,
            objective,
            sweep,
            optimizer,
            svo: SvoConfig {
                mu0: vec![4.0, -4.0],
                sigma0: 5.0,
                samples: 10,
                steps: 150,
                seeds: 20,
                fixed_reduction: Reduction::None,
                learned_reduction: Reduction::Baseline,
            },
            nn: NnConfig {
                classes: 10,
                features: 20,
                per_class: 200,
                separation: 1.0,
                hidden: vec![32, 16],
                workers: 64,
                minibatch: 64,
                steps: 400,
                seeds: 5,
                smoothing_window: 10,
                baseline_window: 10,
                runs: vec![
                    run("gp", GpBaseline, 1e-4, BaselineChoice::MovingAverage),
                    run("gp", GpBaseline, 1e-2, BaselineChoice::MovingAverage),
                    run("gp", GpBaseline, 1e-1, BaselineChoice::MovingAverage),
                    run("gp", GpBaseline, 1.0, BaselineChoice::MovingAverage),
                    run("gp", GpBaseline, 10.0, BaselineChoice::MovingAverage),
                    run("gp_as", GpAntithetic, 1e-4, BaselineChoice::None),
                    run("gp_as", GpAntithetic, 1e-1, BaselineChoice::None),
                    run("gp_baseline", GpBaseline, 1e-1, BaselineChoice::CurrentValue),
                    run("dd", DirectionalDerivative, 1.0, BaselineChoice::None),
                ],
            },
            cluster: ClusterSection {
                workers: 1000,
                rounds: 40,
                mode: Estimator(GpBaseline),
                sigma: 0.1,
                replicas: 4,
                baseline: BaselineChoice::CurrentValue,
                baseline_window: 10,
                policy: Policy::Renormalize,
                drops: Vec::new(),
            },
        }
    }

    /// Parses TOML, filling absent keys from the defaults of the named
    /// experiment, and validates the result.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let experiment = user
            .get("experiment")
            .ok_or_else(|| invalid("missing `experiment`"))?
            .clone()
            .try_into::<Experiment>()
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut merged = toml::Table::try_from(Self::defaults(experiment)).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Hex SHA-256 of the canonical TOML form, output path excluded.
    pub fn hash(&self) -> String {
        let canonical = Self { output: None, ..self.clone() };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.master_seed > i64::MAX as u64 {
            return Err(invalid("master_seed must fit a TOML integer (at most 2^63 - 1)"));
        }
        let o = &self.objective;
        if o.dim == 0 {
            return Err(invalid("objective.dim must be positive"));
        }
        if let Some(p) = &o.point {
            if p.len() != o.dim || p.iter().any(|v| !v.is_finite()) {
                return Err(invalid("objective.point must have `dim` finite entries"));
            }
        }
        let s = &self.sweep;
        check_sigmas("sweep.sigmas", &s.sigmas)?;
        if s.estimators.is_empty() {
            return Err(invalid("sweep.estimators is empty"));
        }
        if s.samples == 0 {
            return Err(invalid("sweep.samples must be positive"));
        }
        if s.trials < 2 {
            return Err(invalid("sweep.trials must be at least 2"));
        }
        self.optimizer
            .build()
            .map_err(|e| invalid(format!("optimizer: {e}")))?;

        let v = &self.svo;
        if !(v.sigma0 > 0.0 && v.sigma0.is_finite()) {
            return Err(invalid("svo.sigma0 must be positive"));
        }
        if v.samples == 0 || v.steps == 0 || v.seeds == 0 {
            return Err(invalid("svo.samples, svo.steps and svo.seeds must be positive"));
        }
        if self.experiment == Experiment::Fig2Trajectory && v.mu0.len() != o.dim {
            return Err(invalid("svo.mu0 must have objective.dim entries"));
        }

        let n = &self.nn;
        if n.classes < 2 || n.features == 0 || n.per_class == 0 {
            return Err(invalid("nn needs at least 2 classes, 1 feature and 1 point per class"));
        }
        if n.hidden.contains(&0) {
            return Err(invalid("nn.hidden widths must be positive"));
        }
        if n.workers == 0 || n.minibatch == 0 || n.steps == 0 || n.seeds == 0 {
            return Err(invalid("nn.workers, nn.minibatch, nn.steps and nn.seeds must be positive"));
        }
        if n.smoothing_window == 0 || n.baseline_window == 0 {
            return Err(invalid("nn windows must be positive"));
        }
        if self.experiment == Experiment::Fig4Nn && n.runs.is_empty() {
            return Err(invalid("nn.runs is empty"));
        }
        for r in &n.runs {
            if !(r.sigma > 0.0 && r.sigma.is_finite()) {
                return Err(invalid(format!("nn run `{}`: sigma must be positive", r.label)));
            }
            if r.estimator.0 == EstimatorKind::GpBaseline && r.baseline == BaselineChoice::None {
                return Err(invalid(format!("nn run `{}`: gp_baseline needs a baseline", r.label)));
            }
        }

        let c = &self.cluster;
        if c.workers == 0 || c.rounds == 0 || c.replicas == 0 {
            return Err(invalid("cluster.workers, cluster.rounds and cluster.replicas must be positive"));
        }
        if !(c.sigma > 0.0 && c.sigma.is_finite()) {
            return Err(invalid("cluster.sigma must be positive"));
        }
        if c.rounds > u32::MAX as u64 {
            return Err(invalid("cluster.rounds must fit the 32-bit wire field"));
        }
        if c.baseline_window == 0 {
            return Err(invalid("cluster.baseline_window must be positive"));
        }
        Ok(())
    }
}

fn fig3_sweep() -> SweepConfig {
    use EstimatorKind::*;
    SweepConfig {
        estimators: vec![Estimator(Gp), Estimator(GpAntithetic), Estimator(DirectionalDerivative)],
        samples: 5,
        sigmas: logspace(1e-3, 10.0, 20),
        trials: 1000,
    }
}

fn check_sigmas(name: &str, sigmas: &[f64]) -> Result<(), ConfigError> {
    if sigmas.is_empty() {
        return Err(invalid(format!("{name} is empty")));
    }
    if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(invalid(format!("{name} must be strictly positive")));
    }
    if sigmas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(format!("{name} must be strictly ascending")));
    }
    Ok(())
}

/// Overlays `user` onto `base`, recursing into tables and replacing
/// everything else.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
