use faer::Mat;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthtx::cmmd::{cmmd_components_batch, cmmd_value};
use synthtx::data::Dataset;
use synthtx::estimator::{EstimatorConfig, Method, Problem};
use synthtx::inference::{variance_and_ci, SieveScores};
use synthtx::kernel::{fit_cme, BandwidthRule, KernelConfig};
use synthtx::points::Points;
use synthtx::qp::solve_simplex_qp;
use synthtx::sieve::BSplineBasis;
use synthtx::simulation::{generate_study, DgpParams, StudySizes};

fn pd_matrix(n: usize, entries: &[f64]) -> Mat<f64> {
    let f = Mat::from_fn(n, n, |i, j| entries[i * n + j]);
    Mat::from_fn(n, n, |i, j| (0..n).map(|k| f[(i, k)] * f[(j, k)]).sum::<f64>() + if i == j { 0.5 } else { 0.0 })
}

fn small_study(seed: u64, n: usize) -> Dataset {
    let params = DgpParams::draw(&mut ChaCha8Rng::seed_from_u64(seed));
    generate_study(&params, StudySizes::uniform(n), &mut ChaCha8Rng::seed_from_u64(seed + 1)).unwrap().dataset
}

/// Same rows with source `i` relabelled `perm[i - 1] + 1`.
fn relabel(data: &Dataset, perm: &[usize]) -> Dataset {
    let mut out = Dataset::new(data.dim());
    for r in 0..data.len() {
        let pop = match data.pop(r) {
            0 => 0,
            p => perm[p - 1] + 1,
        };
        out.push(pop, data.arm(r), data.y(r), data.x(r)).unwrap();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qp_solution_permutes_with_its_variables(
        n in 2usize..5,
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        c in prop::collection::vec(-1.0f64..1.0, 4),
        rot in 0usize..4,
    ) {
        let q = pd_matrix(n, &entries);
        let c = &c[..n];
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let qp = Mat::from_fn(n, n, |i, j| q[(perm[i], perm[j])]);
        let cp: Vec<f64> = perm.iter().map(|&i| c[i]).collect();
        let w = solve_simplex_qp(&q, c).unwrap();
        let wp = solve_simplex_qp(&qp, &cp).unwrap();
        for i in 0..n {
            prop_assert!((wp[i] - w[perm[i]]).abs() < 1e-9);
        }
    }

    #[test]
    fn bspline_partition_of_unity(
        order in 1usize..5,
        knots in prop::collection::vec(0.0f64..1.0, 0..6),
        probes in prop::collection::vec(-0.2f64..1.2, 20),
    ) {
        let mut knots = knots;
        knots.sort_by(f64::total_cmp);
        knots.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let basis = BSplineBasis::new(order, knots.clone(), -0.1, 1.1).unwrap();
        prop_assert_eq!(basis.dim(), knots.len() + order);
        for x in probes {
            let v = basis.eval(x);
            prop_assert!(v.iter().all(|b| *b >= -1e-15));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_ignores_shifts_and_order(
        scores in prop::collection::vec(-100.0f64..100.0, 2..60),
        shift in -1e3f64..1e3,
        alpha in 0.01f64..0.5,
    ) {
        let base = SieveScores { scores: scores.clone(), theta_hat: 1.0 };
        let (v, ci) = variance_and_ci(&base, alpha).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(ci.contains(1.0));
        let shifted = SieveScores { scores: scores.iter().map(|s| s + shift).collect(), theta_hat: 1.0 };
        let (vs, _) = variance_and_ci(&shifted, alpha).unwrap();
        prop_assert!((vs - v).abs() <= 1e-9 * v.max(1.0));
        let mut rev = scores.clone();
        rev.reverse();
        let (vr, _) = variance_and_ci(&SieveScores { scores: rev, theta_hat: 1.0 }, alpha).unwrap();
        prop_assert!((vr - v).abs() <= 1e-12 * v.max(1.0));
        // replicating the scores k times keeps V̂ and shrinks the width by √k
        let k = 4;
        let rep: Vec<f64> = scores.iter().cycle().take(k * scores.len()).copied().collect();
        let (vk, cik) = variance_and_ci(&SieveScores { scores: rep, theta_hat: 1.0 }, alpha).unwrap();
        prop_assert!((vk - v).abs() <= 1e-9 * v.max(1.0));
        let (w, wk) = (ci.hi - ci.lo, cik.hi - cik.lo);
        prop_assert!((wk * (k as f64).sqrt() - w).abs() <= 1e-9 * w.max(1e-12));
    }

    #[test]
    fn cmmd_is_nonnegative(
        xs in prop::collection::vec(-1.0f64..1.0, 24),
        ys in prop::collection::vec(-3.0f64..3.0, 24),
        w in prop::collection::vec(-2.0f64..2.0, 3),
        q in -1.5f64..1.5,
    ) {
        let config = KernelConfig::new(0.5, 1.0, 0.01, BandwidthRule::Fixed).unwrap();
        let models: Vec<_> = (0..4)
            .map(|p| fit_cme(p, &Points::from_scalars(&xs[p * 6..p * 6 + 6]), &ys[p * 6..p * 6 + 6], config).unwrap())
            .collect();
        let comps = cmmd_components_batch(&models[1..], &models[0], &Points::from_scalars(&[q])).unwrap();
        prop_assert!(cmmd_value(&comps[0], &w).unwrap() >= -1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn estimates_ignore_source_labels(seed in 0u64..1000, rot in 1usize..3) {
        let data = small_study(seed, 60);
        let perm: Vec<usize> = (0..3).map(|i| (i + rot) % 3).collect();
        let permuted = relabel(&data, &perm);
        let a = Problem::new(&data, EstimatorConfig::default()).unwrap();
        let b = Problem::new(&permuted, EstimatorConfig::default()).unwrap();
        for m in [Method::Sieve, Method::PointConstrained, Method::Uniform, Method::Pool] {
            let (ta, tb) = (a.estimate(m).unwrap().theta_hat, b.estimate(m).unwrap().theta_hat);
            prop_assert!((ta - tb).abs() <= 1e-7 * ta.abs().max(1.0), "{} {} {}", m, ta, tb);
        }
    }

    #[test]
    fn constrained_estimates_respect_the_convex_bound(seed in 0u64..1000) {
        let data = small_study(seed, 60);
        let p = Problem::new(&data, EstimatorConfig::default()).unwrap();
        let (mut lo, mut hi) = (0.0, 0.0);
        for x in p.target_x().iter() {
            let g: Vec<f64> = p.regressions().iter().map(|r| r.eval_regression(x).unwrap()).collect();
            lo += g.iter().copied().fold(f64::INFINITY, f64::min);
            hi += g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        let n = p.target_x().len() as f64;
        let (lo, hi) = (lo / n, hi / n);
        let tol = 1e-9 * lo.abs().max(hi.abs()).max(1.0);
        for m in [Method::Sieve, Method::PointConstrained, Method::Uniform] {
            let t = p.estimate(m).unwrap().theta_hat;
            prop_assert!(t >= lo - tol && t <= hi + tol, "{} {} [{}, {}]", m, t, lo, hi);
        }
    }

    #[test]
    fn estimation_is_deterministic(seed in 0u64..1000) {
        let data = small_study(seed, 50);
        for m in Method::ALL {
            let a = Problem::new(&data, EstimatorConfig::default()).unwrap().estimate(m).unwrap();
            let b = Problem::new(&data, EstimatorConfig::default()).unwrap().estimate(m).unwrap();
            prop_assert_eq!(a.theta_hat.to_bits(), b.theta_hat.to_bits());
            prop_assert_eq!(a.variance.map(f64::to_bits), b.variance.map(f64::to_bits));
            prop_assert_eq!(a.diagnostics, b.diagnostics);
        }
    }
}
