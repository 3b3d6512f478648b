//! Mixture-of-regressions data-generating process with known target weights, and a Monte
//! Carlo harness reporting mean relative error and interval coverage.
//!
//! Source `i` has control law `Y(0) | X=x ~ Σ_j π_ij(x) N(a_j x + b_j, 1)`; the target control
//! law mixes the source laws with logistic weights `w*_i(x) ∝ exp(c_i x + d_i)`. Treated outcomes
//! apply the shared transition `g1·y + g2·x + g3·x·y + ε` to a fresh draw `y` of the unit's
//! control law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Method, Problem};
use crate::inference::normal_quantile_upper;

pub const SOURCE_X_RANGE: (f64, f64) = (-1.0, 3.0);
pub const TARGET_X_TRUNCATION: (f64, f64) = (-1.0, 3.0);
/// Hidden target treated draws per observed target row.
pub const HIDDEN_FACTOR: usize = 10;
/// Truths smaller than this are excluded from relative errors.
pub const DEGENERATE_TRUTH: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DgpParams {
    pub n_components: usize,
    pub n_sources: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `e[i][j]`, `f[i][j]`: mixture logits of component `j` in source `i + 1`.
    pub e: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub noise_sd: f64,
}

fn softmax(logits: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = logits.collect();
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|z| (z - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|z| z / s).collect()
}

impl DgpParams {
    /// Three components and three sources with randomly drawn coefficients.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::draw_sized(3, 3, rng)
    }

    pub fn draw_sized<R: Rng + ?Sized>(n_components: usize, n_sources: usize, rng: &mut R) -> Self {
        let mut normal = |sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
        let a: Vec<f64> = (0..n_components).map(|_| normal(15.0)).collect();
        let b: Vec<f64> = (0..n_components).map(|_| normal(15.0)).collect();
        let g1 = normal(10.0);
        let g2 = normal(10.0);
        let g3 = normal(10.0);
        let c: Vec<f64> = (0..n_sources).map(|_| normal(1.0)).collect();
        let d: Vec<f64> = (0..n_sources).map(|_| normal(1.5)).collect();
        let e = vec![vec![0.0; n_components]; n_sources];
        let f = (0..n_sources)
            .map(|i| (0..n_components).map(|j| if i == j { 0.8f64.ln() } else { 0.1f64.ln() }).collect())
            .collect();
        Self { n_components, n_sources, a, b, e, f, c, d, g1, g2, g3, noise_sd: 1.0 }
    }

    /// Same parameters with every source sharing one control law.
    pub fn exchangeable(mut self) -> Self {
        self.e = vec![vec![0.0; self.n_components]; self.n_sources];
        self.f = vec![vec![0.0; self.n_components]; self.n_sources];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 || self.n_sources == 0 {
            return Err(Error::Config("the generator needs at least one component and one source".into()));
        }
        let ok = self.a.len() == self.n_components
            && self.b.len() == self.n_components
            && self.c.len() == self.n_sources
            && self.d.len() == self.n_sources
            && self.e.len() == self.n_sources
            && self.f.len() == self.n_sources
            && self.e.iter().chain(&self.f).all(|r| r.len() == self.n_components);
        if !ok {
            return Err(Error::Config("generator parameter lengths are inconsistent".into()));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::Config("noise_sd must be nonnegative".into()));
        }
        Ok(())
    }

    /// `w*(x)`.
    pub fn true_weights(&self, x: f64) -> Vec<f64> {
        softmax((0..self.n_sources).map(|i| self.c[i] * x + self.d[i]))
    }

    /// Mixture probabilities of source `i` (0-based).
    pub fn mixture_probs(&self, i: usize, x: f64) -> Vec<f64> {
        softmax((0..self.n_components).map(|j| self.e[i][j] * x + self.f[i][j]))
    }

    /// `Σ_i w*_i(x) π_ij(x)`.
    pub fn target_mixture_probs(&self, x: f64) -> Vec<f64> {
        let w = self.true_weights(x);
        let mut out = vec![0.0; self.n_components];
        for (i, wi) in w.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.mixture_probs(i, x)) {
                *o += wi * p;
            }
        }
        out
    }

    fn mixture_mean(&self, probs: &[f64], x: f64) -> f64 {
        probs.iter().enumerate().map(|(j, p)| p * (self.a[j] * x + self.b[j])).sum()
    }

    /// `E[Y(0) | X=x, D=i]` for source `i` (0-based).
    pub fn control_mean(&self, i: usize, x: f64) -> f64 {
        self.mixture_mean(&self.mixture_probs(i, x), x)
    }

    /// `E[Y(1) | X=x, D=i]`; the transition is affine in `y`, so it maps the control mean.
    pub fn treated_mean(&self, i: usize, x: f64) -> f64 {
        self.transition(x, self.control_mean(i, x))
    }

    pub fn target_treated_mean(&self, x: f64) -> f64 {
        self.transition(x, self.mixture_mean(&self.target_mixture_probs(x), x))
    }

    pub fn transition(&self, x: f64, y: f64) -> f64 {
        self.g1 * y + self.g2 * x + self.g3 * x * y
    }

    /// `E[Y(1) | D=0]` by Simpson integration over the truncated-normal covariate law.
    pub fn population_theta(&self) -> f64 {
        let (lo, hi) = TARGET_X_TRUNCATION;
        let normal = StatNormal::new(0.0, 1.0).expect("standard normal");
        let mass = normal.cdf(hi) - normal.cdf(lo);
        let steps = 4000;
        let h = (hi - lo) / steps as f64;
        let f = |x: f64| self.target_treated_mean(x) * normal.pdf(x) / mass;
        let mut acc = f(lo) + f(hi);
        for k in 1..steps {
            acc += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }
}

/// Draw from `N(mean, sd²)` restricted to `[lo, hi]` by inverting the CDF.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(lo < hi) || !(sd > 0.0) || !mean.is_finite() {
        return Err(Error::Domain(format!("invalid truncated normal (mean {mean}, sd {sd}, [{lo}, {hi}])")));
    }
    let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
    // work in the lower tail, where the CDF has full relative precision
    let flip = a > 0.0;
    let (a, b) = if flip { (-b, -a) } else { (a, b) };
    let normal = StatNormal::new(0.0, 1.0).expect("standard normal");
    let (pa, pb) = (normal.cdf(a), normal.cdf(b));
    if pb - pa < 1e-12 {
        return Err(Error::Domain(format!("truncation interval [{lo}, {hi}] has negligible probability")));
    }
    let u: f64 = rng.random();
    let z = normal.inverse_cdf(pa + u * (pb - pa)).clamp(a, b);
    let z = if flip { -z } else { z };
    Ok(mean + sd * z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudySizes {
    /// Treated rows per source.
    pub n_source_treated: usize,
    /// Control rows per source.
    pub n_source_control: usize,
    pub n_target: usize,
}

impl StudySizes {
    pub fn uniform(n: usize) -> Self {
        Self { n_source_treated: n, n_source_control: n, n_target: n }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedStudy {
    pub dataset: Dataset,
    pub hidden_target_treated_y: Vec<f64>,
    pub true_theta: f64,
    pub params: DgpParams,
}

fn draw_mixture<R: Rng + ?Sized>(params: &DgpParams, probs: &[f64], x: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut j = probs.len() - 1;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            j = k;
            break;
        }
    }
    params.a[j] * x + params.b[j] + rng.sample::<f64, _>(StandardNormal)
}

fn draw_treated<R: Rng + ?Sized>(params: &DgpParams, probs: &[f64], x: f64, rng: &mut R) -> f64 {
    let y0 = draw_mixture(params, probs, x, rng);
    params.transition(x, y0) + params.noise_sd * rng.sample::<f64, _>(StandardNormal)
}

/// Simulates one study. Target rows come first, then each source's control and treated rows.
pub fn generate_study<R: Rng + ?Sized>(params: &DgpParams, sizes: StudySizes, rng: &mut R) -> Result<SimulatedStudy> {
    params.validate()?;
    if sizes.n_source_treated == 0 || sizes.n_source_control == 0 || sizes.n_target == 0 {
        return Err(Error::Config("all study sizes must be at least 1".into()));
    }
    let (tlo, thi) = TARGET_X_TRUNCATION;
    let (slo, shi) = SOURCE_X_RANGE;
    let mut data = Dataset::new(1);
    for _ in 0..sizes.n_target {
        let x = sample_truncated_normal(0.0, 1.0, tlo, thi, rng)?;
        let y = draw_mixture(params, &params.target_mixture_probs(x), x, rng);
        data.push(0, 0, y, &[x])?;
    }
    for i in 0..params.n_sources {
        for _ in 0..sizes.n_source_control {
            let x = rng.random_range(slo..shi);
            let y = draw_mixture(params, &params.mixture_probs(i, x), x, rng);
            data.push(i + 1, 0, y, &[x])?;
        }
        for _ in 0..sizes.n_source_treated {
            let x = rng.random_range(slo..shi);
            let y = draw_treated(params, &params.mixture_probs(i, x), x, rng);
            data.push(i + 1, 1, y, &[x])?;
        }
    }
    let hidden = (0..HIDDEN_FACTOR * sizes.n_target)
        .map(|_| {
            let x = sample_truncated_normal(0.0, 1.0, tlo, thi, rng)?;
            Ok(draw_treated(params, &params.target_mixture_probs(x), x, rng))
        })
        .collect::<Result<Vec<_>>>()?;
    let true_theta = crate::linalg::mean(&hidden);
    Ok(SimulatedStudy { dataset: data, hidden_target_treated_y: hidden, true_theta, params: params.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MreSummary {
    pub mre: f64,
    /// Sample standard deviation of the relative errors.
    pub sd: f64,
    pub used: usize,
    pub dropped: usize,
}

/// Mean relative error `(1/M) Σ |θ̂ − θ| / |θ|`, skipping near-zero truths.
pub fn mre(estimates: &[f64], truths: &[f64]) -> Result<MreSummary> {
    if estimates.len() != truths.len() {
        return Err(Error::Shape(format!("{} estimates for {} truths", estimates.len(), truths.len())));
    }
    let rel: Vec<f64> = estimates
        .iter()
        .zip(truths)
        .filter(|(_, t)| t.abs() >= DEGENERATE_TRUTH)
        .map(|(e, t)| (e - t).abs() / t.abs())
        .collect();
    let dropped = truths.len() - rel.len();
    if rel.is_empty() {
        return Err(Error::Metric("every truth is degenerate; relative error is undefined".into()));
    }
    let m = crate::linalg::mean(&rel);
    let sd = if rel.len() > 1 {
        (rel.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (rel.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(MreSummary { mre: m, sd, used: rel.len(), dropped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub replicates: usize,
    pub sizes: StudySizes,
    pub methods: Vec<Method>,
    /// Interval levels whose coverage is tabulated, e.g. `[0.95, 0.90]`.
    pub coverage_levels: Vec<f64>,
    pub master_seed: u64,
    pub estimator: EstimatorConfig,
    pub exchangeable: bool,
    /// Use these parameters in every replicate instead of drawing fresh ones.
    pub fixed_params: Option<DgpParams>,
}

impl MonteCarloConfig {
    /// `n = 500` per group, 50 replicates.
    pub fn desk(master_seed: u64) -> Self {
        Self {
            replicates: 50,
            sizes: StudySizes::uniform(500),
            methods: Method::ALL.to_vec(),
            coverage_levels: vec![0.95, 0.90],
            master_seed,
            estimator: EstimatorConfig::default(),
            exchangeable: false,
            fixed_params: None,
        }
    }

    /// `n = 4000` per group, 100 replicates.
    pub fn paper(master_seed: u64) -> Self {
        Self { replicates: 100, sizes: StudySizes::uniform(4000), ..Self::desk(master_seed) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub theta_hat: Option<f64>,
    pub variance: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub master_seed: u64,
    pub true_theta: f64,
    pub n_total: usize,
    /// Target-control mean, for reporting the effect truth.
    pub target_control_mean: f64,
    pub outcomes: Vec<MethodOutcome>,
    /// Set when the study itself could not be generated.
    pub error: Option<String>,
}

impl ReplicateRecord {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }

    /// Interval `θ̂ ± z sqrt(V̂/n)` at `level`, when a variance is available.
    pub fn interval(&self, method: Method, level: f64) -> Option<(f64, f64)> {
        let o = self.outcome(method)?;
        let (theta, v) = (o.theta_hat?, o.variance?);
        let z = normal_quantile_upper(1.0 - level).ok()?;
        let half = z * (v / self.n_total as f64).sqrt();
        Some((theta - half, theta + half))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MreRow {
    pub method: Method,
    pub summary: Option<MreSummary>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub method: Method,
    pub level: f64,
    pub coverage: Option<f64>,
    pub covered: usize,
    pub evaluated: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOutput {
    pub records: Vec<ReplicateRecord>,
    pub mre_table: Vec<MreRow>,
    pub coverage_table: Vec<CoverageRow>,
}

/// RNG of replicate `r`: the master seed with stream `r`, so replicates are independent of
/// scheduling.
pub fn replicate_rng(master_seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Params and study of replicate `r`.
pub fn replicate_study(config: &MonteCarloConfig, replicate: usize) -> Result<SimulatedStudy> {
    let mut rng = replicate_rng(config.master_seed, replicate);
    let mut params = match &config.fixed_params {
        Some(p) => p.clone(),
        None => DgpParams::draw(&mut rng),
    };
    if config.exchangeable {
        params = params.exchangeable();
    }
    generate_study(&params, config.sizes, &mut rng)
}

pub fn run_replicate(config: &MonteCarloConfig, replicate: usize) -> ReplicateRecord {
    let mut record = ReplicateRecord {
        replicate,
        master_seed: config.master_seed,
        true_theta: f64::NAN,
        n_total: 0,
        target_control_mean: f64::NAN,
        outcomes: Vec::new(),
        error: None,
    };
    let study = match replicate_study(config, replicate) {
        Ok(s) => s,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.true_theta = study.true_theta;
    record.n_total = study.dataset.len();
    record.target_control_mean = crate::linalg::mean(&study.dataset.group(0, 0).y);
    let failed = |method, e: Error| MethodOutcome { method, theta_hat: None, variance: None, error: Some(e.to_string()) };
    match Problem::new(&study.dataset, config.estimator.clone()) {
        Ok(problem) => {
            for &method in &config.methods {
                record.outcomes.push(match problem.estimate(method) {
                    Ok(rep) => MethodOutcome { method, theta_hat: Some(rep.theta_hat), variance: rep.variance, error: None },
                    Err(e) => failed(method, e),
                });
            }
        }
        Err(e) => {
            for &method in &config.methods {
                record.outcomes.push(failed(method, e.clone()));
            }
        }
    }
    record
}

pub fn monte_carlo(config: &MonteCarloConfig) -> Result<MonteCarloOutput> {
    if config.replicates == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    if config.methods.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    for &level in &config.coverage_levels {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Config(format!("coverage level {level} is outside (0, 1)")));
        }
    }
    let records: Vec<ReplicateRecord> =
        (0..config.replicates).into_par_iter().map(|r| run_replicate(config, r)).collect();
    Ok(summarize(config, records))
}

/// Builds the tables from replicate records.
pub fn summarize(config: &MonteCarloConfig, records: Vec<ReplicateRecord>) -> MonteCarloOutput {
    let mut mre_table = Vec::new();
    let mut coverage_table = Vec::new();
    for &method in &config.methods {
        let mut est = Vec::new();
        let mut truth = Vec::new();
        let mut failures = 0;
        for rec in &records {
            match rec.outcome(method).and_then(|o| o.theta_hat) {
                Some(t) if rec.error.is_none() => {
                    est.push(t);
                    truth.push(rec.true_theta);
                }
                _ => failures += 1,
            }
        }
        mre_table.push(MreRow { method, summary: mre(&est, &truth).ok(), failures });
        for &level in &config.coverage_levels {
            let mut covered = 0;
            let mut evaluated = 0;
            let mut failures = 0;
            for rec in &records {
                match rec.interval(method, level) {
                    Some((lo, hi)) => {
                        evaluated += 1;
                        if lo <= rec.true_theta && rec.true_theta <= hi {
                            covered += 1;
                        }
                    }
                    None => failures += 1,
                }
            }
            // methods without any variance are left out of the coverage table
            if evaluated > 0 {
                coverage_table.push(CoverageRow {
                    method,
                    level,
                    coverage: Some(covered as f64 / evaluated as f64),
                    covered,
                    evaluated,
                    failures,
                });
            }
        }
    }
    MonteCarloOutput { records, mre_table, coverage_table }
}
