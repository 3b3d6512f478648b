//! The synthetic treatment-group estimator, its baselines, and a pipeline that shares fitted
//! state between methods.

use std::sync::{Mutex, OnceLock};
use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::cmmd::{clamp_cmmd, cmmd_components_batch, cmmd_value, default_ridge, pointwise_weights, CmmdComponents};
use crate::data::{Dataset, Group};
use crate::error::{Error, Result};
use crate::inference::{
    adjustment_components, pool_scores, sieve_scores, variance_and_ci, ConfidenceInterval, InferenceOptions,
    ScoreContext,
};
use crate::kernel::{fit_cme, median_heuristic, BandwidthRule, CmeModel, KernelConfig, DEFAULT_LAMBDA};
use crate::linalg::{mean, pairwise_sum};
use crate::points::Points;
use crate::sieve::{
    fit_sieve_regression, fit_sieve_weights_from_components, BSplineBasis, RegressionBasis, SieveConstraint,
    SieveRegressionModel, SieveWeightModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Sieve,
    PointConstrained,
    PointUnconstrained,
    Uniform,
    Pool,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Sieve, Method::PointConstrained, Method::PointUnconstrained, Method::Uniform, Method::Pool];

    pub fn needs_embeddings(self) -> bool {
        matches!(self, Method::Sieve | Method::PointConstrained | Method::PointUnconstrained)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sieve" => Ok(Self::Sieve),
            "point_constrained" | "point-constrained" | "constrained" => Ok(Self::PointConstrained),
            "point_unconstrained" | "point-unconstrained" | "unconstrained" => Ok(Self::PointUnconstrained),
            "uniform" => Ok(Self::Uniform),
            "pool" => Ok(Self::Pool),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected sieve, point_constrained, point_unconstrained, uniform or pool)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sieve => "sieve",
            Self::PointConstrained => "point_constrained",
            Self::PointUnconstrained => "point_unconstrained",
            Self::Uniform => "uniform",
            Self::Pool => "pool",
        })
    }
}

/// Kernel choices before data-driven resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSettings {
    /// `None` selects the median heuristic.
    pub bandwidth_x: Option<f64>,
    pub bandwidth_y: Option<f64>,
    pub lambda: f64,
    /// Per-population λ, keyed by population id.
    pub lambda_overrides: BTreeMap<usize, f64>,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self { bandwidth_x: None, bandwidth_y: None, lambda: DEFAULT_LAMBDA, lambda_overrides: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub kernel: KernelSettings,
    pub weight_order: usize,
    pub weight_knots: usize,
    pub regression_order: usize,
    pub regression_knots: usize,
    pub sieve_constraint: SieveConstraint,
    /// Ridge on the average-CMMD quadratic; `None` is relative `1e-8`.
    pub sieve_ridge: Option<f64>,
    /// Ridge on `Â(x)` for pointwise weights; `None` is `1e-8 · trace(Â)/N`.
    pub point_ridge: Option<f64>,
    pub alpha: f64,
    pub inference: InferenceOptions,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSettings::default(),
            weight_order: 3,
            weight_knots: 0,
            regression_order: 3,
            regression_knots: 2,
            sieve_constraint: SieveConstraint::default(),
            sieve_ridge: None,
            point_ridge: None,
            alpha: 0.05,
            inference: InferenceOptions::default(),
        }
    }
}

/// Fitted weights in one of the supported forms.
#[derive(Debug, Clone)]
pub enum WeightModel {
    Sieve(SieveWeightModel),
    /// Weights at specific covariate points, one row per point.
    Pointwise { points: Points, weights: Vec<Vec<f64>> },
    Constant(Vec<f64>),
}

impl WeightModel {
    /// Weights at `points`; pointwise tables must have been computed at exactly these points.
    pub fn weights_at(&self, points: &Points) -> Result<Vec<Vec<f64>>> {
        match self {
            WeightModel::Sieve(m) => points
                .iter()
                .map(|x| Ok(m.eval_weights(crate::sieve::scalar_point(x)?)))
                .collect(),
            WeightModel::Pointwise { points: p, weights } => {
                if p != points {
                    return Err(Error::Input("pointwise weights were computed at different points".into()));
                }
                Ok(weights.clone())
            }
            WeightModel::Constant(w) => Ok(vec![w.clone(); points.len()]),
        }
    }
}

/// `θ̂ = (1/n₀) Σⱼ Σᵢ ŵᵢ(x₀ⱼ) ĝᵢ(x₀ⱼ)`, reduced by pairwise summation.
pub fn synthetic_theta(weights: &WeightModel, regressions: &[SieveRegressionModel], target_x: &Points) -> Result<f64> {
    if target_x.is_empty() {
        return Err(Error::Input("no target covariates".into()));
    }
    let w = weights.weights_at(target_x)?;
    let terms = target_x
        .iter()
        .zip(&w)
        .map(|(x, wx)| {
            if wx.len() != regressions.len() {
                return Err(Error::Shape(format!("{} weights for {} regressions", wx.len(), regressions.len())));
            }
            let mut s = 0.0;
            for (wi, reg) in wx.iter().zip(regressions) {
                s += wi * reg.eval_regression(x)?;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// `θ̂ − mean(target control outcomes)`.
pub fn ate(theta_hat: f64, target_control_y: &[f64]) -> Result<f64> {
    if target_control_y.is_empty() {
        return Err(Error::Input("no target control outcomes".into()));
    }
    Ok(theta_hat - mean(target_control_y))
}

/// One regression on all source treated data, averaged over the target covariates.
pub fn pool_baseline(pooled: &Group, basis: RegressionBasis, target_x: &Points) -> Result<(f64, SieveRegressionModel)> {
    let model = fit_sieve_regression(0, &pooled.x, &pooled.y, basis)?;
    let theta = synthetic_theta(&WeightModel::Constant(vec![1.0]), std::slice::from_ref(&model), target_x)?;
    Ok((theta, model))
}

/// Synthetic estimate with constant weights `1/N`.
pub fn uniform_baseline(regressions: &[SieveRegressionModel], target_x: &Points) -> Result<f64> {
    if regressions.is_empty() {
        return Err(Error::Input("no source regressions".into()));
    }
    let n = regressions.len();
    synthetic_theta(&WeightModel::Constant(vec![1.0 / n as f64; n]), regressions, target_x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub method: Method,
    pub theta_hat: f64,
    pub ate_hat: f64,
    pub variance: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
    pub n_total: usize,
    pub diagnostics: BTreeMap<String, String>,
}

/// Kernel models and CMMD components at the target covariates, fitted once per problem.
#[derive(Debug, Clone)]
pub struct EmbeddingState {
    pub kernel: KernelConfig,
    pub target: CmeModel,
    pub sources: Vec<CmeModel>,
    /// Components at each target control covariate, in dataset order.
    pub components: Vec<CmmdComponents>,
}

/// A dataset split into strata with shared bases, regressions and (lazily) embeddings.
pub struct Problem<'a> {
    data: &'a Dataset,
    config: EstimatorConfig,
    n_sources: usize,
    target: Group,
    controls: Vec<Group>,
    treated: Vec<Group>,
    weight_bases: Option<Vec<BSplineBasis>>,
    regression_basis: RegressionBasis,
    regressions: Vec<SieveRegressionModel>,
    embeddings: OnceLock<EmbeddingState>,
    weight_cache: Mutex<HashMap<Method, WeightModel>>,
}

impl<'a> Problem<'a> {
    pub fn new(data: &'a Dataset, config: EstimatorConfig) -> Result<Self> {
        data.validate_for_estimation()?;
        if !(config.alpha > 0.0 && config.alpha < 1.0) {
            return Err(Error::Input(format!("alpha must lie in (0, 1), got {}", config.alpha)));
        }
        let n_sources = data.n_sources();
        let target = data.group(0, 0);
        let controls: Vec<Group> = (1..=n_sources).map(|i| data.group(i, 0)).collect();
        let treated: Vec<Group> = (1..=n_sources).map(|i| data.group(i, 1)).collect();
        let (weight_bases, regression_basis) = if data.dim() == 1 {
            let pooled = data.covariates().first_coordinate();
            let wb = BSplineBasis::from_sample(config.weight_order, config.weight_knots, &pooled)?;
            let rb = BSplineBasis::from_sample(config.regression_order, config.regression_knots, &pooled)?;
            (Some(vec![wb; n_sources]), RegressionBasis::BSpline(rb))
        } else {
            (None, RegressionBasis::Affine { dim: data.dim() })
        };
        let regressions = treated
            .iter()
            .enumerate()
            .map(|(i, g)| fit_sieve_regression(i + 1, &g.x, &g.y, regression_basis.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            data,
            config,
            n_sources,
            target,
            controls,
            treated,
            weight_bases,
            regression_basis,
            regressions,
            embeddings: OnceLock::new(),
            weight_cache: Default::default(),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn target_x(&self) -> &Points {
        &self.target.x
    }

    pub fn regressions(&self) -> &[SieveRegressionModel] {
        &self.regressions
    }

    pub fn weight_bases(&self) -> Option<&[BSplineBasis]> {
        self.weight_bases.as_deref()
    }

    pub fn regression_basis(&self) -> &RegressionBasis {
        &self.regression_basis
    }

    /// Bandwidths from the settings or the median heuristic: covariates pooled over every
    /// row, outcomes pooled over every control row.
    pub fn resolve_kernel(&self) -> Result<KernelConfig> {
        let s = &self.config.kernel;
        let hx = match s.bandwidth_x {
            Some(h) => h,
            None => median_heuristic(self.data.covariates())?,
        };
        let hy = match s.bandwidth_y {
            Some(h) => h,
            None => {
                let ys: Vec<f64> = std::iter::once(&self.target)
                    .chain(&self.controls)
                    .flat_map(|g| g.y.iter().copied())
                    .collect();
                median_heuristic(&Points::from_scalars(&ys))?
            }
        };
        let rule = if s.bandwidth_x.is_none() || s.bandwidth_y.is_none() {
            BandwidthRule::MedianHeuristic
        } else {
            BandwidthRule::Fixed
        };
        KernelConfig::new(hx, hy, s.lambda, rule)
    }

    fn lambda_for(&self, pop: usize) -> f64 {
        self.config.kernel.lambda_overrides.get(&pop).copied().unwrap_or(self.config.kernel.lambda)
    }

    pub fn embeddings(&self) -> Result<&EmbeddingState> {
        if let Some(state) = self.embeddings.get() {
            return Ok(state);
        }
        let kernel = self.resolve_kernel()?;
        let groups: Vec<(usize, &Group)> =
            std::iter::once((0, &self.target)).chain(self.controls.iter().enumerate().map(|(i, g)| (i + 1, g))).collect();
        let mut models = groups
            .par_iter()
            .map(|&(pop, g)| fit_cme(pop, &g.x, &g.y, kernel.with_lambda(self.lambda_for(pop))?))
            .collect::<Result<Vec<_>>>()?;
        let sources = models.split_off(1);
        let target = models.pop().expect("target model");
        let components = cmmd_components_batch(&sources, &target, &self.target.x)?;
        let _ = self.embeddings.set(EmbeddingState { kernel, target, sources, components });
        Ok(self.embeddings.get().expect("just set"))
    }

    /// Fits (or returns the cached) weight model of `method`.
    pub fn fit_weights(&self, method: Method) -> Result<WeightModel> {
        if let Some(w) = self.weight_cache.lock().expect("weight cache").get(&method) {
            return Ok(w.clone());
        }
        let n = self.n_sources;
        let model = match method {
            Method::Sieve => {
                let bases = self.weight_bases.as_ref().ok_or_else(|| {
                    Error::Config(format!(
                        "sieve weights need a one-dimensional covariate (got dimension {}); use point_constrained or point_unconstrained",
                        self.data.dim()
                    ))
                })?;
                let emb = self.embeddings()?;
                WeightModel::Sieve(fit_sieve_weights_from_components(
                    &emb.components,
                    bases,
                    self.config.sieve_constraint,
                    self.config.sieve_ridge,
                )?)
            }
            Method::PointConstrained | Method::PointUnconstrained => {
                let emb = self.embeddings()?;
                let constrained = method == Method::PointConstrained;
                let weights = self.pointwise_at(&emb.components, constrained)?;
                WeightModel::Pointwise { points: self.target.x.clone(), weights }
            }
            Method::Uniform => WeightModel::Constant(vec![1.0 / n as f64; n]),
            Method::Pool => return Err(Error::Input("the pooled baseline has no weights".into())),
        };
        self.weight_cache.lock().expect("weight cache").insert(method, model.clone());
        Ok(model)
    }

    /// Pointwise weights for a list of components.
    pub fn pointwise_at(&self, comps: &[CmmdComponents], constrained: bool) -> Result<Vec<Vec<f64>>> {
        comps
            .par_iter()
            .map(|c| {
                let ridge = self.config.point_ridge.unwrap_or_else(|| default_ridge(c));
                Ok(pointwise_weights(c, constrained, ridge)?.w)
            })
            .collect()
    }

    pub fn estimate(&self, method: Method) -> Result<EstimateReport> {
        let mut diag = BTreeMap::new();
        let target_y = &self.target.y;
        diag.insert("n_target".into(), self.target.y.len().to_string());
        diag.insert("n_sources".into(), self.n_sources.to_string());
        diag.insert("covariate_dim".into(), self.data.dim().to_string());
        self.describe_regression(&mut diag);
        let clamp_count = self.regression_clamps(&self.target.x)?;
        diag.insert("regression_clamped_points".into(), clamp_count.to_string());
        let (theta_hat, variance, ci) = match method {
            Method::Pool => {
                let pooled = self.pooled_treated();
                let (theta, model) = pool_baseline(&pooled, self.regression_basis.clone(), &self.target.x)?;
                let scores = pool_scores(self.data, theta, &model, self.config.inference)?;
                let (v, ci) = variance_and_ci(&scores, self.config.alpha)?;
                diag.insert("variance_method".into(), "pooled-regression score".into());
                (theta, Some(v), Some(ci))
            }
            _ => {
                let weights = self.fit_weights(method)?;
                let theta = synthetic_theta(&weights, &self.regressions, &self.target.x)?;
                let (variance, ci) = match (&weights, method) {
                    (WeightModel::Sieve(sw), _) => {
                        self.describe_sieve(sw, &mut diag);
                        match self.sieve_inference(sw, theta) {
                            Ok((v, ci)) => {
                                diag.insert("variance_method".into(), "sieve score".into());
                                (Some(v), Some(ci))
                            }
                            Err(e) => {
                                diag.insert("variance_method".into(), format!("unavailable: {e}"));
                                (None, None)
                            }
                        }
                    }
                    (_, Method::Uniform) => {
                        diag.insert("variance_method".into(), "unavailable: no variance theory for uniform weights".into());
                        (None, None)
                    }
                    _ => {
                        diag.insert(
                            "variance_method".into(),
                            "unavailable: pointwise weights have no variance theory".into(),
                        );
                        (None, None)
                    }
                };
                if method.needs_embeddings() {
                    let emb = self.embeddings()?;
                    self.describe_kernel(emb, &mut diag);
                    let w = weights.weights_at(&self.target.x)?;
                    let (mean_d, clamps) = mean_cmmd(&emb.components, &w)?;
                    diag.insert("mean_cmmd".into(), crate::data::format_float(mean_d));
                    diag.insert("cmmd_clamped_points".into(), clamps.to_string());
                    if method != Method::Sieve {
                        let ridge = match self.config.point_ridge {
                            Some(r) => crate::data::format_float(r),
                            None => "1e-8*trace/N".into(),
                        };
                        diag.insert("point_ridge".into(), ridge);
                    }
                }
                (theta, variance, ci)
            }
        };
        Ok(EstimateReport {
            method,
            theta_hat,
            ate_hat: ate(theta_hat, target_y)?,
            variance,
            ci,
            n_total: self.data.len(),
            diagnostics: diag,
        })
    }

    fn sieve_inference(&self, sw: &SieveWeightModel, theta: f64) -> Result<(f64, ConfidenceInterval)> {
        let emb = self.embeddings()?;
        let adj = adjustment_components(
            sw,
            &self.regressions,
            &emb.components,
            &self.target.x,
            &self.treated,
            self.config.inference.gamma_averaging,
        )?;
        let ctx = ScoreContext::new(theta, sw, &self.regressions, &adj, self.data, self.config.inference.moment)?;
        let scores = sieve_scores(self.data, &emb.components, &ctx)?;
        variance_and_ci(&scores, self.config.alpha)
    }

    pub fn pooled_treated(&self) -> Group {
        let mut x = Points::new(self.data.dim());
        let mut y = Vec::new();
        for g in &self.treated {
            for (row, v) in g.x.iter().zip(&g.y) {
                x.push(row).expect("shared dimension");
                y.push(*v);
            }
        }
        Group { x, y }
    }

    fn regression_clamps(&self, points: &Points) -> Result<usize> {
        let mut count = 0;
        for x in points.iter() {
            if self.regression_basis.eval_flagged(x)?.1 {
                count += 1;
            }
        }
        Ok(count)
    }

    fn describe_regression(&self, diag: &mut BTreeMap<String, String>) {
        match &self.regression_basis {
            RegressionBasis::BSpline(b) => {
                diag.insert("regression_basis".into(), "bspline".into());
                diag.insert("regression_order".into(), b.order().to_string());
                diag.insert("regression_knots".into(), format_list(b.interior_knots()));
                let (lo, hi) = b.domain();
                diag.insert("basis_domain".into(), format_list(&[lo, hi]));
            }
            RegressionBasis::Affine { .. } => {
                diag.insert("regression_basis".into(), "affine".into());
            }
        }
    }

    fn describe_sieve(&self, sw: &SieveWeightModel, diag: &mut BTreeMap<String, String>) {
        let b = &sw.bases[0];
        diag.insert("weight_order".into(), b.order().to_string());
        diag.insert("weight_knots".into(), format_list(b.interior_knots()));
        diag.insert("sieve_constraint".into(), sw.constraint.to_string());
        diag.insert("sieve_ridge".into(), crate::data::format_float(sw.ridge));
        diag.insert("sieve_objective".into(), crate::data::format_float(sw.objective));
        diag.insert("sieve_coefficients".into(), format_list(&sw.beta_w));
        diag.insert("inference_moment".into(), self.config.inference.moment.to_string());
        diag.insert("inference_gamma_averaging".into(), self.config.inference.gamma_averaging.to_string());
    }

    fn describe_kernel(&self, emb: &EmbeddingState, diag: &mut BTreeMap<String, String>) {
        diag.insert("bandwidth_rule".into(), emb.kernel.bandwidth_rule.to_string());
        diag.insert("bandwidth_x".into(), crate::data::format_float(emb.kernel.bandwidth_x));
        diag.insert("bandwidth_y".into(), crate::data::format_float(emb.kernel.bandwidth_y));
        let lambdas: Vec<f64> = std::iter::once(&emb.target).chain(&emb.sources).map(|m| m.config.lambda).collect();
        diag.insert("lambda".into(), format_list(&lambdas));
        let jitters: Vec<f64> = std::iter::once(&emb.target).chain(&emb.sources).map(|m| m.jitter).collect();
        diag.insert("cme_jitter".into(), format_list(&jitters));
    }
}

/// Mean of `d̂(x, w(x))` over the points, with the number of rounding clamps.
pub fn mean_cmmd(comps: &[CmmdComponents], weights: &[Vec<f64>]) -> Result<(f64, usize)> {
    if comps.len() != weights.len() || comps.is_empty() {
        return Err(Error::Shape("one weight vector is needed per component".into()));
    }
    let mut clamps = 0;
    let values = comps
        .iter()
        .zip(weights)
        .map(|(c, w)| {
            let raw = cmmd_value(c, w)?;
            if raw < 0.0 {
                clamps += 1;
            }
            clamp_cmmd(raw)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((mean(&values), clamps))
}

fn format_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| crate::data::format_float(*v)).collect();
    format!("[{}]", parts.join(", "))
}
