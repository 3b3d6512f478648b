//! Run configuration: TOML on disk, resolved into library settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use synthtx::data::LoadOptions;
use synthtx::estimator::{EstimatorConfig, KernelSettings, Method};
use synthtx::inference::{GammaAveraging, InferenceOptions, MomentForm};
use synthtx::sieve::SieveConstraint;
use synthtx::simulation::{MonteCarloConfig, StudySizes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Input CSV with header `pop,arm,y,x1..xd`.
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub method: String,
    pub alpha: f64,
    pub seed: u64,
    pub data: DataSection,
    pub kernel: KernelSection,
    pub sieve: SieveSection,
    pub pointwise: PointwiseSection,
    pub inference: InferenceSection,
    pub curves: CurvesSection,
    pub simulation: SimulationSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub asinh_columns: Vec<String>,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    /// Absent: median heuristic.
    pub bandwidth_x: Option<f64>,
    pub bandwidth_y: Option<f64>,
    pub lambda: f64,
    /// Per-population λ, keyed by population id.
    pub lambda_overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SieveSection {
    pub weight_order: usize,
    pub weight_knots: usize,
    pub regression_order: usize,
    pub regression_knots: usize,
    pub constraint: String,
    pub ridge: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointwiseSection {
    pub ridge: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    pub moment: String,
    pub gamma_averaging: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvesSection {
    /// Grid bounds; absent means the range of the target covariates.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub n_source_treated: usize,
    pub n_source_control: usize,
    pub n_target: usize,
    pub replicates: usize,
    pub exchangeable: bool,
    pub methods: Vec<String>,
    pub coverage_levels: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let est = EstimatorConfig::default();
        Self {
            input: None,
            out_dir: PathBuf::from("synthtx-out"),
            method: Method::Sieve.to_string(),
            alpha: est.alpha,
            seed: 2024,
            data: DataSection::default(),
            kernel: KernelSection::default(),
            sieve: SieveSection::default(),
            pointwise: PointwiseSection::default(),
            inference: InferenceSection::default(),
            curves: CurvesSection::default(),
            simulation: SimulationSection::default(),
        }
    }
}

impl Default for KernelSection {
    fn default() -> Self {
        let k = KernelSettings::default();
        Self { bandwidth_x: k.bandwidth_x, bandwidth_y: k.bandwidth_y, lambda: k.lambda, lambda_overrides: BTreeMap::new() }
    }
}

impl Default for SieveSection {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        Self {
            weight_order: e.weight_order,
            weight_knots: e.weight_knots,
            regression_order: e.regression_order,
            regression_knots: e.regression_knots,
            constraint: e.sieve_constraint.to_string(),
            ridge: e.sieve_ridge,
        }
    }
}

impl Default for InferenceSection {
    fn default() -> Self {
        let i = InferenceOptions::default();
        Self { moment: i.moment.to_string(), gamma_averaging: i.gamma_averaging.to_string() }
    }
}

impl Default for CurvesSection {
    fn default() -> Self {
        Self { lo: None, hi: None, steps: 201 }
    }
}

impl Default for SimulationSection {
    fn default() -> Self {
        let mc = MonteCarloConfig::desk(0);
        Self {
            n_source_treated: mc.sizes.n_source_treated,
            n_source_control: mc.sizes.n_source_control,
            n_target: mc.sizes.n_target,
            replicates: mc.replicates,
            exchangeable: mc.exchangeable,
            methods: mc.methods.iter().map(|m| m.to_string()).collect(),
            coverage_levels: mc.coverage_levels.clone(),
        }
    }
}

/// Command-line overrides, applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub method: Option<String>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub paper_scale: bool,
}

impl RunConfig {
    /// Reads a config file. A report is accepted too: its `[config]` table is used.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: toml::Table = toml::from_str(text)?;
        match value.get("config") {
            Some(toml::Value::Table(cfg)) => Ok(cfg.clone().try_into()?),
            _ => Ok(value.try_into()?),
        }
    }

    /// Applies overrides and canonicalizes every field, so the result serializes to the exact
    /// settings that were used.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(p) = &o.input {
            self.input = Some(p.clone());
        }
        if let Some(m) = &o.method {
            self.method = m.clone();
        }
        if let Some(a) = o.alpha {
            self.alpha = a;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if o.paper_scale {
            let paper = MonteCarloConfig::paper(self.seed);
            self.simulation.n_source_treated = paper.sizes.n_source_treated;
            self.simulation.n_source_control = paper.sizes.n_source_control;
            self.simulation.n_target = paper.sizes.n_target;
            self.simulation.replicates = paper.replicates;
        }
        if let Some(p) = &self.input {
            let abs = std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))?;
            self.input = Some(abs);
        }
        if self.seed > i64::MAX as u64 {
            bail!("seed must be at most {}", i64::MAX);
        }
        self.method = self.method.parse::<Method>().map_err(|e| anyhow!("{e}"))?.to_string();
        self.sieve.constraint = self.sieve.constraint.parse::<SieveConstraint>().map_err(|e| anyhow!("{e}"))?.to_string();
        self.inference.moment = self.inference.moment.parse::<MomentForm>().map_err(|e| anyhow!("{e}"))?.to_string();
        self.inference.gamma_averaging =
            self.inference.gamma_averaging.parse::<GammaAveraging>().map_err(|e| anyhow!("{e}"))?.to_string();
        self.simulation.methods = self
            .simulation
            .methods
            .iter()
            .map(|m| m.parse::<Method>().map(|m| m.to_string()).map_err(|e| anyhow!("{e}")))
            .collect::<Result<_>>()?;
        // validate the remaining settings by building them once
        self.estimator()?;
        Ok(self)
    }

    pub fn input(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| anyhow!("no input file: set `input` in the config or pass --input"))
    }

    pub fn method(&self) -> Result<Method> {
        self.method.parse().map_err(|e| anyhow!("{e}"))
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions { asinh_columns: self.data.asinh_columns.clone(), standardize: self.data.standardize }
    }

    pub fn estimator(&self) -> Result<EstimatorConfig> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        let mut lambda_overrides = BTreeMap::new();
        for (k, v) in &self.kernel.lambda_overrides {
            let pop: usize = k.parse().map_err(|_| anyhow!("lambda_overrides key '{k}' is not a population id"))?;
            lambda_overrides.insert(pop, *v);
        }
        Ok(EstimatorConfig {
            kernel: KernelSettings {
                bandwidth_x: self.kernel.bandwidth_x,
                bandwidth_y: self.kernel.bandwidth_y,
                lambda: self.kernel.lambda,
                lambda_overrides,
            },
            weight_order: self.sieve.weight_order,
            weight_knots: self.sieve.weight_knots,
            regression_order: self.sieve.regression_order,
            regression_knots: self.sieve.regression_knots,
            sieve_constraint: self.sieve.constraint.parse().map_err(|e| anyhow!("{e}"))?,
            sieve_ridge: self.sieve.ridge,
            point_ridge: self.pointwise.ridge,
            alpha: self.alpha,
            inference: InferenceOptions {
                moment: self.inference.moment.parse().map_err(|e| anyhow!("{e}"))?,
                gamma_averaging: self.inference.gamma_averaging.parse().map_err(|e| anyhow!("{e}"))?,
            },
        })
    }

    pub fn monte_carlo(&self) -> Result<MonteCarloConfig> {
        let s = &self.simulation;
        Ok(MonteCarloConfig {
            replicates: s.replicates,
            sizes: StudySizes {
                n_source_treated: s.n_source_treated,
                n_source_control: s.n_source_control,
                n_target: s.n_target,
            },
            methods: s.methods.iter().map(|m| m.parse().map_err(|e| anyhow!("{e}"))).collect::<Result<_>>()?,
            coverage_levels: s.coverage_levels.clone(),
            master_seed: self.seed,
            estimator: self.estimator()?,
            exchangeable: s.exchangeable,
            fixed_params: None,
        })
    }
}
