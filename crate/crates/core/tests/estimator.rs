use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use synthtx::estimator::{ate, EstimatorConfig, Method, Problem, WeightModel};
use synthtx::simulation::{generate_study, DgpParams, StudySizes};

#[test]
fn constant_true_weights_are_recovered() {
    let mut p = DgpParams::draw(&mut ChaCha8Rng::seed_from_u64(13));
    p.c = vec![0.0; 3];
    p.d = vec![0.8f64.ln(), 0.1f64.ln(), 0.1f64.ln()];
    let study = generate_study(&p, StudySizes::uniform(1000), &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
    let problem = Problem::new(&study.dataset, EstimatorConfig::default()).unwrap();
    let WeightModel::Sieve(sw) = problem.fit_weights(Method::Sieve).unwrap() else { panic!("sieve model expected") };
    let mut sup: f64 = 0.0;
    for k in 0..=200 {
        let x = -1.0 + 4.0 * k as f64 / 200.0;
        for (a, b) in sw.eval_weights(x).iter().zip([0.8, 0.1, 0.1]) {
            sup = sup.max((a - b).abs());
        }
    }
    assert!(sup <= 0.1, "sup-norm error {sup}");
}

#[test]
fn single_source_baselines_collapse_to_the_synthetic_estimate() {
    let p = DgpParams::draw_sized(3, 1, &mut ChaCha8Rng::seed_from_u64(15));
    let study = generate_study(&p, StudySizes::uniform(150), &mut ChaCha8Rng::seed_from_u64(16)).unwrap();
    let problem = Problem::new(&study.dataset, EstimatorConfig::default()).unwrap();
    let sieve = problem.estimate(Method::Sieve).unwrap().theta_hat;
    for m in [Method::Pool, Method::Uniform, Method::PointConstrained] {
        let t = problem.estimate(m).unwrap().theta_hat;
        assert!((t - sieve).abs() <= 1e-10 * sieve.abs().max(1.0), "{m}: {t} vs {sieve}");
    }
}

/// `E[f(X)]` for X ~ N(0,1) truncated to [−1, 3], by Simpson's rule.
fn truncated_normal_expectation(f: impl Fn(f64) -> f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mass = normal.cdf(3.0) - normal.cdf(-1.0);
    let steps = 2000;
    let h = 4.0 / steps as f64;
    let g = |x: f64| f(x) * normal.pdf(x) / mass;
    let mut acc = g(-1.0) + g(3.0);
    for k in 1..steps {
        acc += g(-1.0 + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn effect_with_oracle_theta_matches_population_effect() {
    let p = DgpParams::draw(&mut ChaCha8Rng::seed_from_u64(17));
    let study = generate_study(&p, StudySizes::uniform(4000), &mut ChaCha8Rng::seed_from_u64(18)).unwrap();
    let control = study.dataset.group(0, 0).y;
    let est = ate(study.true_theta, &control).unwrap();
    let mu0 = truncated_normal_expectation(|x| {
        let w = p.true_weights(x);
        (0..3).map(|i| w[i] * p.control_mean(i, x)).sum()
    });
    let truth = p.population_theta() - mu0;
    let sd = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let h = &study.hidden_target_treated_y;
    let se = ((sd(h) / (h.len() as f64).sqrt()).powi(2) + (sd(&control) / (control.len() as f64).sqrt()).powi(2)).sqrt();
    assert!((est - truth).abs() <= 3.0 * se, "ate {est} truth {truth} se {se}");
}
