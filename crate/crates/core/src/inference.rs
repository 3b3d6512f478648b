//! Sieve-score variance estimation and normal confidence intervals.
//!
//! Every observation gets a score: the moment term of the synthetic estimator plus
//! first-step corrections for the sieve weight fit (target rows) and for each sieve
//! regression (treated rows of that source). The variance estimate is the sample variance
//! of the scores, and the interval is `θ̂ ± z · sqrt(V̂ / n_T)`.

use faer::Mat;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cmmd::CmmdComponents;
use crate::data::{Dataset, Group};
use crate::error::{Error, Result};
use crate::linalg::{dot, mat_vec, pairwise_sum, SpdFactor};
use crate::points::Points;
use crate::sieve::{block_offsets, scalar_point, SieveRegressionModel, SieveWeightModel};

/// Form of the per-observation moment term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentForm {
    /// `θ̂ − 1{D=0} Σ ŵĝ / P̂(D=0)`, treating the target share as known.
    Plain,
    /// `1{D=0} (θ̂ − Σ ŵĝ) / P̂(D=0)`: the plain term plus the correction for estimating the
    /// target share by its sample proportion.
    #[default]
    ShareAdjusted,
}

/// Sample over which the regression-gradient rows are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaAveraging {
    /// `(1/m_i) Σ ŵ_i(x') Q_i(x')` over the treated rows of source `i`.
    TreatedSample,
    /// `−(1/n₀) Σ ŵ_i(x) Q_i(x)` over the target rows.
    #[default]
    TargetSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InferenceOptions {
    pub moment: MomentForm,
    pub gamma_averaging: GammaAveraging,
}

macro_rules! string_enum {
    ($ty:ty, $($variant:path => $name:literal),+) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown value '{}' for ", stringify!($ty), " (expected one of:", $(" ", $name),+, ")"),
                        other
                    ))),
                }
            }
        }
        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $($variant => $name,)+ })
            }
        }
    };
}

string_enum!(MomentForm, MomentForm::Plain => "plain", MomentForm::ShareAdjusted => "share-adjusted");
string_enum!(GammaAveraging, GammaAveraging::TreatedSample => "treated", GammaAveraging::TargetSample => "target");

#[derive(Debug, Clone)]
pub struct AdjustmentComponents {
    /// `(2/n₀) Σ V Â Vᵀ`.
    pub r_w_hat: Mat<f64>,
    /// `−(1/n₀) Σ [ĝ_1 P_1ᵀ, …, ĝ_N P_Nᵀ]`.
    pub gamma2_w_hat: Vec<f64>,
    /// `(2/m_i) Σ Q Qᵀ` per source.
    pub r_g_hat: Vec<Mat<f64>>,
    pub gamma2_g_hat: Vec<Vec<f64>>,
}

/// Builds the sample adjustment components from the fitted sieve models.
///
/// `comps` must hold the CMMD components at the target covariates, in the same order as
/// `target_x`; `treated[i]` is the treated sample of source `i + 1`.
pub fn adjustment_components(
    weights: &SieveWeightModel,
    regressions: &[SieveRegressionModel],
    comps: &[CmmdComponents],
    target_x: &Points,
    treated: &[Group],
    averaging: GammaAveraging,
) -> Result<AdjustmentComponents> {
    let n = weights.n_sources();
    if regressions.len() != n || treated.len() != n {
        return Err(Error::Shape("weights, regressions and treated groups disagree on the number of sources".into()));
    }
    if comps.len() != target_x.len() || comps.is_empty() {
        return Err(Error::Shape("CMMD components must be given at every target point".into()));
    }
    let bases = &weights.bases;
    let offsets = block_offsets(bases);
    let (h, _, _) = crate::sieve::average_quadratic(comps, bases)?;
    let total = offsets[n];
    let r_w_hat = Mat::from_fn(total, total, |i, j| 2.0 * h[(i, j)]);
    let n0 = target_x.len() as f64;
    let mut gamma2_w_hat = vec![0.0; total];
    for x in target_x.iter() {
        let xs = scalar_point(x)?;
        for i in 0..n {
            let g = regressions[i].eval_regression(x)?;
            for (k, p) in bases[i].eval(xs).iter().enumerate() {
                gamma2_w_hat[offsets[i] + k] -= g * p / n0;
            }
        }
    }
    let mut r_g_hat = Vec::with_capacity(n);
    let mut gamma2_g_hat = Vec::with_capacity(n);
    for i in 0..n {
        let basis = &regressions[i].basis;
        let t = basis.dim();
        let m = treated[i].y.len();
        if m == 0 {
            return Err(Error::Data(format!("source population {} has no treated rows", i + 1)));
        }
        let mut r = Mat::<f64>::zeros(t, t);
        for x in treated[i].x.iter() {
            let q = basis.eval(x)?;
            for a in 0..t {
                for b in 0..t {
                    r[(a, b)] += 2.0 * q[a] * q[b] / m as f64;
                }
            }
        }
        let mut gamma = vec![0.0; t];
        let (sample, sign, count) = match averaging {
            GammaAveraging::TreatedSample => (&treated[i].x, 1.0, m as f64),
            GammaAveraging::TargetSample => (target_x, -1.0, n0),
        };
        for x in sample.iter() {
            let w = weights.eval_weights(scalar_point(x)?)[i];
            for (a, q) in basis.eval(x)?.iter().enumerate() {
                gamma[a] += sign * w * q / count;
            }
        }
        r_g_hat.push(r);
        gamma2_g_hat.push(gamma);
    }
    Ok(AdjustmentComponents { r_w_hat, gamma2_w_hat, r_g_hat, gamma2_g_hat })
}

/// Solves `R u = Γᵀ` by Cholesky with jitter fallback.
fn solve_adjustment(r: &Mat<f64>, gamma: &[f64], what: &str) -> Result<Vec<f64>> {
    let factor = SpdFactor::new(r.as_ref()).map_err(|e| Error::Inference(format!("{what} is singular: {e}")))?;
    let u = factor.solve_vec(gamma);
    if u.iter().all(|v| v.is_finite()) {
        Ok(u)
    } else {
        Err(Error::Inference(format!("{what} is singular")))
    }
}

/// Everything a single score needs, with the `R̂⁻¹Γ̂ᵀ` solves done once.
#[derive(Debug, Clone)]
pub struct ScoreContext<'a> {
    pub theta_hat: f64,
    pub weights: &'a SieveWeightModel,
    pub regressions: &'a [SieveRegressionModel],
    /// `R̂_w⁻¹ Γ̂_wᵀ`.
    pub u_w: Vec<f64>,
    /// `R̂_gᵢ⁻¹ Γ̂_gᵢᵀ`.
    pub u_g: Vec<Vec<f64>>,
    pub p_target: f64,
    /// `P̂(A=1, D=i)` per source.
    pub p_treated: Vec<f64>,
    pub moment: MomentForm,
}

impl<'a> ScoreContext<'a> {
    pub fn new(
        theta_hat: f64,
        weights: &'a SieveWeightModel,
        regressions: &'a [SieveRegressionModel],
        adj: &AdjustmentComponents,
        data: &Dataset,
        moment: MomentForm,
    ) -> Result<Self> {
        let n_total = data.len() as f64;
        let n = weights.n_sources();
        let u_w = solve_adjustment(&adj.r_w_hat, &adj.gamma2_w_hat, "the weight Hessian")?;
        let u_g = (0..n)
            .map(|i| solve_adjustment(&adj.r_g_hat[i], &adj.gamma2_g_hat[i], "a regression Gram matrix"))
            .collect::<Result<Vec<_>>>()?;
        let p_target = data.count(0, 0) as f64 / n_total;
        let p_treated = (1..=n).map(|i| data.count(i, 1) as f64 / n_total).collect();
        Ok(Self { theta_hat, weights, regressions, u_w, u_g, p_target, p_treated, moment })
    }
}

/// Score of one observation. `comp` must be the CMMD components at `x` for target rows.
pub fn per_observation_score(
    pop: usize,
    arm: u8,
    y: f64,
    x: &[f64],
    comp: Option<&CmmdComponents>,
    ctx: &ScoreContext<'_>,
) -> Result<f64> {
    let n = ctx.weights.n_sources();
    match (pop, arm) {
        (0, 0) => {
            let comp = comp.ok_or_else(|| Error::Input("target observation without CMMD components".into()))?;
            let xs = scalar_point(x)?;
            let w = ctx.weights.eval_weights(xs);
            let mut synth = 0.0;
            for i in 0..n {
                synth += w[i] * ctx.regressions[i].eval_regression(x)?;
            }
            let moment = match ctx.moment {
                MomentForm::Plain => ctx.theta_hat - synth / ctx.p_target,
                MomentForm::ShareAdjusted => (ctx.theta_hat - synth) / ctx.p_target,
            };
            // V(x)(−2ÂVᵀβ + 2b̂) / P̂₀, dotted with u_w
            let grad = weight_score_gradient(ctx.weights, comp, xs)?;
            Ok(moment + dot(&ctx.u_w, &grad) / ctx.p_target)
        }
        (0, _) => Err(Error::Data("target population rows must be controls".into())),
        (i, 1) if i <= n => {
            let base = match ctx.moment {
                MomentForm::Plain => ctx.theta_hat,
                MomentForm::ShareAdjusted => 0.0,
            };
            let reg = &ctx.regressions[i - 1];
            let q = reg.basis.eval(x)?;
            let resid = y - dot(&q, &reg.beta_g);
            let proj = dot(&ctx.u_g[i - 1], &q);
            Ok(base + 2.0 * proj * resid / ctx.p_treated[i - 1])
        }
        (i, 0) if i <= n => Ok(match ctx.moment {
            MomentForm::Plain => ctx.theta_hat,
            MomentForm::ShareAdjusted => 0.0,
        }),
        (i, a) => Err(Error::Data(format!("observation in unknown stratum (pop {i}, arm {a})"))),
    }
}

/// `−2 V Â Vᵀ β + 2 V b̂` at one point.
pub fn weight_score_gradient(weights: &SieveWeightModel, comp: &CmmdComponents, x: f64) -> Result<Vec<f64>> {
    let bases = &weights.bases;
    let n = bases.len();
    let offsets = block_offsets(bases);
    let ps: Vec<Vec<f64>> = bases.iter().map(|b| b.eval(x)).collect();
    let w: Vec<f64> = (0..n).map(|i| dot(&ps[i], &weights.beta_w[offsets[i]..offsets[i + 1]])).collect();
    let aw = mat_vec(comp.a_hat.as_ref(), &w);
    let mut grad = vec![0.0; offsets[n]];
    for i in 0..n {
        let coef = 2.0 * (comp.b_hat[i] - aw[i]);
        for (k, p) in ps[i].iter().enumerate() {
            grad[offsets[i] + k] = coef * p;
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SieveScores {
    pub scores: Vec<f64>,
    pub theta_hat: f64,
}

/// Scores for every row of `data`; `target_comps` are the CMMD components at the target
/// rows, in dataset order.
pub fn sieve_scores(data: &Dataset, target_comps: &[CmmdComponents], ctx: &ScoreContext<'_>) -> Result<SieveScores> {
    let mut next_target = 0;
    let mut scores = Vec::with_capacity(data.len());
    for r in 0..data.len() {
        let comp = if data.pop(r) == 0 {
            let c = target_comps
                .get(next_target)
                .ok_or_else(|| Error::Shape("fewer CMMD components than target rows".into()))?;
            next_target += 1;
            Some(c)
        } else {
            None
        };
        scores.push(per_observation_score(data.pop(r), data.arm(r), data.y(r), data.x(r), comp, ctx)?);
    }
    Ok(SieveScores { scores, theta_hat: ctx.theta_hat })
}

/// Scores of the pooled-regression estimator `(1/n₀) Σ ĝ_pool(x₀ⱼ)` in the same form, with the
/// pooled treated rows acting as a single regression sample.
pub fn pool_scores(
    data: &Dataset,
    theta_hat: f64,
    pooled: &SieveRegressionModel,
    options: InferenceOptions,
) -> Result<SieveScores> {
    let n_total = data.len() as f64;
    let target = data.group(0, 0);
    let n0 = target.y.len() as f64;
    let m = (0..data.len()).filter(|&r| data.pop(r) > 0 && data.arm(r) == 1).count() as f64;
    let t = pooled.basis.dim();
    let mut r_g = Mat::<f64>::zeros(t, t);
    let mut gamma = vec![0.0; t];
    for row in 0..data.len() {
        if data.pop(row) > 0 && data.arm(row) == 1 {
            let q = pooled.basis.eval(data.x(row))?;
            for a in 0..t {
                for b in 0..t {
                    r_g[(a, b)] += 2.0 * q[a] * q[b] / m;
                }
                if options.gamma_averaging == GammaAveraging::TreatedSample {
                    gamma[a] += q[a] / m;
                }
            }
        }
    }
    if options.gamma_averaging == GammaAveraging::TargetSample {
        for x in target.x.iter() {
            for (a, q) in pooled.basis.eval(x)?.iter().enumerate() {
                gamma[a] -= q / n0;
            }
        }
    }
    let u = solve_adjustment(&r_g, &gamma, "the pooled regression Gram matrix")?;
    let p_target = n0 / n_total;
    let p_treated = m / n_total;
    let base = match options.moment {
        MomentForm::Plain => theta_hat,
        MomentForm::ShareAdjusted => 0.0,
    };
    let scores = (0..data.len())
        .map(|r| {
            let x = data.x(r);
            let g = pooled.eval_regression(x)?;
            Ok(match (data.pop(r), data.arm(r)) {
                (0, _) => match options.moment {
                    MomentForm::Plain => theta_hat - g / p_target,
                    MomentForm::ShareAdjusted => (theta_hat - g) / p_target,
                },
                (_, 1) => base + 2.0 * dot(&u, &pooled.basis.eval(x)?) * (data.y(r) - g) / p_treated,
                _ => base,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SieveScores { scores, theta_hat })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }
}

/// `z_{1−α/2}` of the standard normal.
pub fn normal_quantile_upper(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - alpha / 2.0))
}

/// `V̂ = (1/n_T) Σ (Ŝ − S̄)²` and the interval `θ̂ ± z sqrt(V̂/n_T)`.
pub fn variance_and_ci(scores: &SieveScores, alpha: f64) -> Result<(f64, ConfidenceInterval)> {
    let n = scores.scores.len();
    if n < 2 {
        return Err(Error::Input("at least two scores are needed".into()));
    }
    if scores.scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let z = normal_quantile_upper(alpha)?;
    let mean = pairwise_sum(&scores.scores) / n as f64;
    let sq: Vec<f64> = scores.scores.iter().map(|s| (s - mean) * (s - mean)).collect();
    let variance = pairwise_sum(&sq) / n as f64;
    let half = (variance / n as f64).sqrt() * z;
    Ok((
        variance,
        ConfidenceInterval { lo: scores.theta_hat - half, hi: scores.theta_hat + half, level: 1.0 - alpha },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sieve::{fit_sieve_regression, BSplineBasis, RegressionBasis, SieveConstraint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_scores_have_zero_variance() {
        let s = SieveScores { scores: vec![2.5; 10], theta_hat: 2.5 };
        let (v, ci) = variance_and_ci(&s, 0.05).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!((ci.lo, ci.hi), (2.5, 2.5));
    }

    #[test]
    fn half_width_for_unit_variance() {
        // ±1 scores have variance exactly 1
        let scores: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s = SieveScores { scores, theta_hat: 0.0 };
        let (v, ci) = variance_and_ci(&s, 0.05).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert!((ci.hi - 0.1959964).abs() < 1e-7);
        assert!((normal_quantile_upper(0.05).unwrap() - 1.959963984540054).abs() < 1e-8);
        assert!(variance_and_ci(&s, 1.0).is_err());
        assert!(variance_and_ci(&s, 0.0).is_err());
    }

    fn one_source_fixture(rng: &mut ChaCha8Rng) -> (SieveWeightModel, Vec<SieveRegressionModel>, Vec<CmmdComponents>, Points, Vec<Group>) {
        let basis = BSplineBasis::new(1, vec![], 0.0, 1.0).unwrap();
        let weights = SieveWeightModel {
            bases: vec![basis.clone()],
            beta_w: vec![1.0],
            constraint: SieveConstraint::Coefficients,
            objective: 0.0,
            ridge: 0.0,
        };
        let tx: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
        let comps: Vec<CmmdComponents> = tx
            .iter()
            .map(|&x| CmmdComponents {
                a_hat: Mat::from_fn(1, 1, |_, _| 0.5 + x),
                b_hat: vec![0.3],
                c_hat: 1.0,
                x: vec![x],
            })
            .collect();
        let gx: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..1.0)).collect();
        let gy: Vec<f64> = gx.iter().map(|x| 3.0 + x + rng.random_range(-0.1..0.1)).collect();
        let treated = vec![Group { x: Points::from_scalars(&gx), y: gy.clone() }];
        let reg = fit_sieve_regression(1, &treated[0].x, &gy, RegressionBasis::BSpline(basis)).unwrap();
        (weights, vec![reg], comps, Points::from_scalars(&tx), treated)
    }

    #[test]
    fn dimension_one_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (weights, regs, comps, tx, treated) = one_source_fixture(&mut rng);
        let mean_a: f64 = comps.iter().map(|c| c.a_hat[(0, 0)]).sum::<f64>() / 20.0;
        let mean_g = crate::linalg::mean(&treated[0].y);
        for averaging in [GammaAveraging::TreatedSample, GammaAveraging::TargetSample] {
            let adj = adjustment_components(&weights, &regs, &comps, &tx, &treated, averaging).unwrap();
            assert!((adj.r_w_hat[(0, 0)] - 2.0 * mean_a).abs() < 1e-12);
            // Q ≡ 1 so ĝ is the treated mean
            assert!((adj.gamma2_w_hat[0] + mean_g).abs() < 1e-12);
            assert!((adj.r_g_hat[0][(0, 0)] - 2.0).abs() < 1e-12);
            let expected = if averaging == GammaAveraging::TreatedSample { 1.0 } else { -1.0 };
            assert!((adj.gamma2_g_hat[0][0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn accumulation_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let basis = BSplineBasis::new(3, vec![], -1.0, 2.0).unwrap();
        let bases = vec![basis.clone(), basis.clone()];
        let beta_w = vec![0.2, 0.7, 0.4, 0.8, 0.3, 0.6];
        let weights = SieveWeightModel { bases: bases.clone(), beta_w, constraint: SieveConstraint::Coefficients, objective: 0.0, ridge: 0.0 };
        let tx: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..2.0)).collect();
        let comps: Vec<CmmdComponents> = tx
            .iter()
            .map(|&x| {
                let f = Mat::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
                CmmdComponents {
                    a_hat: Mat::from_fn(2, 2, |i, j| (0..3).map(|k| f[(i, k)] * f[(j, k)]).sum()),
                    b_hat: vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                    c_hat: 1.0,
                    x: vec![x],
                }
            })
            .collect();
        let mut treated = Vec::new();
        let mut regs = Vec::new();
        for i in 0..2 {
            let gx: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..2.0)).collect();
            let gy: Vec<f64> = gx.iter().map(|x| (i as f64 + 1.0) * x * x + rng.random_range(-0.2..0.2)).collect();
            let group = Group { x: Points::from_scalars(&gx), y: gy };
            regs.push(fit_sieve_regression(i + 1, &group.x, &group.y, RegressionBasis::BSpline(basis.clone())).unwrap());
            treated.push(group);
        }
        let tp = Points::from_scalars(&tx);
        let adj = adjustment_components(&weights, &regs, &comps, &tp, &treated, GammaAveraging::TreatedSample).unwrap();
        // loops over explicit block designs
        let mut r_w = [[0.0; 6]; 6];
        let mut g_w = [0.0; 6];
        for (c, &x) in comps.iter().zip(&tx) {
            let v = crate::sieve::build_block_design(&bases, x);
            for r in 0..6 {
                for s in 0..6 {
                    let mut acc = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            acc += v[(r, i)] * c.a_hat[(i, j)] * v[(s, j)];
                        }
                    }
                    r_w[r][s] += 2.0 * acc / 50.0;
                }
                for i in 0..2 {
                    g_w[r] -= regs[i].eval_regression(&[x]).unwrap() * v[(r, i)] / 50.0;
                }
            }
        }
        for r in 0..6 {
            assert!((adj.gamma2_w_hat[r] - g_w[r]).abs() < 1e-10);
            for s in 0..6 {
                assert!((adj.r_w_hat[(r, s)] - r_w[r][s]).abs() < 1e-10);
            }
        }
        for i in 0..2 {
            let mut r_g = [[0.0; 3]; 3];
            let mut g_g = [0.0; 3];
            for &x in &treated[i].x.first_coordinate() {
                let q = basis.eval(x);
                let w = weights.eval_weights(x)[i];
                for a in 0..3 {
                    for b in 0..3 {
                        r_g[a][b] += 2.0 * q[a] * q[b] / 50.0;
                    }
                    g_g[a] += w * q[a] / 50.0;
                }
            }
            for a in 0..3 {
                assert!((adj.gamma2_g_hat[i][a] - g_g[a]).abs() < 1e-10);
                for b in 0..3 {
                    assert!((adj.r_g_hat[i][(a, b)] - r_g[a][b]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let basis = BSplineBasis::new(3, vec![0.5], 0.0, 1.0).unwrap();
        let bases = vec![basis.clone(), basis.clone(), basis];
        let beta: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let f = Mat::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let comp = CmmdComponents {
            a_hat: Mat::from_fn(3, 3, |i, j| (0..4).map(|k| f[(i, k)] * f[(j, k)]).sum()),
            b_hat: vec![0.2, -0.1, 0.5],
            c_hat: 2.0,
            x: vec![0.37],
        };
        let model = |b: &[f64]| SieveWeightModel {
            bases: bases.clone(),
            beta_w: b.to_vec(),
            constraint: SieveConstraint::None,
            objective: 0.0,
            ridge: 0.0,
        };
        // the weight criterion at one target row is −d̂(x, V(x)ᵀβ)
        let phi = |b: &[f64]| -crate::cmmd::cmmd_value(&comp, &model(b).eval_weights(0.37)).unwrap();
        let grad = weight_score_gradient(&model(&beta), &comp, 0.37).unwrap();
        let h = 1e-5;
        for k in 0..12 {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (phi(&up) - phi(&dn)) / (2.0 * h);
            let scale = grad[k].abs().max(1e-3);
            assert!((fd - grad[k]).abs() <= 1e-6 * scale, "k={k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn string_forms_round_trip() {
        for m in [MomentForm::Plain, MomentForm::ShareAdjusted] {
            assert_eq!(m.to_string().parse::<MomentForm>().unwrap(), m);
        }
        for g in [GammaAveraging::TreatedSample, GammaAveraging::TargetSample] {
            assert_eq!(g.to_string().parse::<GammaAveraging>().unwrap(), g);
        }
        assert!("bogus".parse::<MomentForm>().is_err());
    }
}
