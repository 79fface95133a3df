use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use qqa_core::boolfn::{BooleanFunction, FunctionSpec};
use qqa_core::qcircuit::CircuitConfig;
use qqa_core::search::{balanced_partition, SearchPlan};
use qqa_core::{OptimizerSettings, EPSILON_TOL};
use serde::{Deserialize, Serialize};

/// Fixed circuit shape for `solve`. The partition defaults to the balanced split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub t: usize,
    pub d_w: usize,
    #[serde(default)]
    pub partition: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub function: FunctionSpec,
    #[serde(default)]
    pub circuit: Option<CircuitSpec>,
    #[serde(default)]
    pub plan: Option<SearchPlan>,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    /// Overrides `plan.epsilon_target` when set.
    #[serde(default)]
    pub epsilon_target: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub quiet: bool,
}

/// A config with every nested invariant checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub function: BooleanFunction,
    pub raw: RunConfig,
    pub settings: OptimizerSettings,
    pub epsilon: f64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn resolve(self, ov: &Overrides) -> anyhow::Result<Resolved> {
        let function = self.function.build().context("field `function`")?;
        let mut settings = self.optimizer.clone();
        if let Some(seed) = ov.seed.or(self.seed) {
            settings.seed = seed;
        }
        if let Some(threads) = ov.threads.or(self.threads) {
            settings.threads = threads;
        }
        if ov.quiet {
            settings.progress_every = 0;
        }
        settings.validate().context("field `optimizer`")?;
        let epsilon = self
            .epsilon_target
            .or(self.plan.as_ref().map(|p| p.epsilon_target))
            .unwrap_or(EPSILON_TOL);
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(anyhow!("field `epsilon_target`: {epsilon} must lie in (0, 1)"));
        }
        if let Some(plan) = &self.plan {
            let plan = SearchPlan { epsilon_target: epsilon, ..plan.clone() };
            plan.validate(&function).context("field `plan`")?;
        }
        if let Some(c) = &self.circuit {
            circuit_config(&function, c).context("field `circuit`")?;
        }
        let output_dir = ov.out.clone().or_else(|| self.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
        Ok(Resolved { function, raw: self, settings, epsilon, output_dir })
    }
}

pub fn circuit_config(f: &BooleanFunction, c: &CircuitSpec) -> anyhow::Result<CircuitConfig> {
    let d_a = (f.n() + 1) * c.d_w;
    let partition = match &c.partition {
        Some(p) => p.clone(),
        None if d_a >= f.num_outputs() => balanced_partition(d_a, f.num_outputs()),
        None => return Err(anyhow!("d_A = {d_a} is smaller than the {} outputs", f.num_outputs())),
    };
    let config = CircuitConfig::new(f.n(), c.t, c.d_w, partition)?;
    config.validate_for(f)?;
    Ok(config)
}

impl Resolved {
    pub fn circuit(&self) -> anyhow::Result<CircuitConfig> {
        let spec = self.raw.circuit.as_ref().ok_or_else(|| anyhow!("missing field `circuit`"))?;
        circuit_config(&self.function, spec).context("field `circuit`")
    }

    pub fn plan(&self) -> anyhow::Result<SearchPlan> {
        let plan = self.raw.plan.as_ref().ok_or_else(|| anyhow!("missing field `plan`"))?;
        Ok(SearchPlan { epsilon_target: self.epsilon, ..plan.clone() })
    }
}
