//! Dense primal active-set solver for small convex quadratic programs
//!
//! ```text
//!     minimize    xᵀ Q x − 2 cᵀ x
//!     subject to  E x = f
//!                 G x ≥ h          (lower bounds are rows of the identity)
//! ```
//!
//! Equality-constrained subproblems are solved exactly through their KKT system, so the
//! iterates stay feasible and the objective never increases.

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{dot, lu_solve, mat_vec, max_abs_asymmetry, quad_form, symmetric_eigen};

/// Constraint values within this distance are treated as satisfied.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: Mat<f64>,
    pub c: Vec<f64>,
    pub eq_lhs: Mat<f64>,
    pub eq_rhs: Vec<f64>,
    pub lower_bounds: Option<Vec<f64>>,
    /// General inequality rows `G x ≥ h`, on top of the bounds.
    pub ineq_lhs: Option<Mat<f64>>,
    pub ineq_rhs: Vec<f64>,
    /// Optional feasible starting point; a phase-one problem is solved when absent.
    pub initial: Option<Vec<f64>>,
}

impl QpProblem {
    pub fn unconstrained(q: Mat<f64>, c: Vec<f64>) -> Self {
        let n = c.len();
        Self {
            q,
            c,
            eq_lhs: Mat::zeros(0, n),
            eq_rhs: Vec::new(),
            lower_bounds: None,
            ineq_lhs: None,
            ineq_rhs: Vec::new(),
            initial: None,
        }
    }

    pub fn with_equalities(mut self, lhs: Mat<f64>, rhs: Vec<f64>) -> Self {
        self.eq_lhs = lhs;
        self.eq_rhs = rhs;
        self
    }

    pub fn with_lower_bounds(mut self, lb: Vec<f64>) -> Self {
        self.lower_bounds = Some(lb);
        self
    }

    pub fn with_inequalities(mut self, lhs: Mat<f64>, rhs: Vec<f64>) -> Self {
        self.ineq_lhs = Some(lhs);
        self.ineq_rhs = rhs;
        self
    }

    pub fn with_initial(mut self, x0: Vec<f64>) -> Self {
        self.initial = Some(x0);
        self
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        quad_form(self.q.as_ref(), x) - 2.0 * dot(&self.c, x)
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::Shape("QP with no variables".into()));
        }
        if self.q.nrows() != n || self.q.ncols() != n {
            return Err(Error::Shape(format!("Q is {}x{} but c has length {n}", self.q.nrows(), self.q.ncols())));
        }
        if self.eq_lhs.ncols() != n || self.eq_lhs.nrows() != self.eq_rhs.len() {
            return Err(Error::Shape("equality constraint dimensions are inconsistent".into()));
        }
        if let Some(lb) = &self.lower_bounds {
            if lb.len() != n {
                return Err(Error::Shape("lower bound vector has the wrong length".into()));
            }
        }
        if let Some(g) = &self.ineq_lhs {
            if g.ncols() != n || g.nrows() != self.ineq_rhs.len() {
                return Err(Error::Shape("inequality constraint dimensions are inconsistent".into()));
            }
        }
        let scale = (0..n).map(|i| self.q[(i, i)].abs()).fold(1.0, f64::max);
        if max_abs_asymmetry(self.q.as_ref()) > 1e-10 * scale {
            return Err(Error::Input("Q must be symmetric".into()));
        }
        let finite = (0..n).all(|j| (0..n).all(|i| self.q[(i, j)].is_finite())) && self.c.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric("non-finite QP data".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub eq_multipliers: Vec<f64>,
    /// One multiplier per inequality row (bounds first, then general rows); zero when inactive.
    pub ineq_multipliers: Vec<f64>,
    /// Objective value after every accepted step, starting at the initial point.
    pub objective_trace: Vec<f64>,
}

/// Inequality rows in a uniform representation; bounds become unit rows.
struct Inequalities {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl Inequalities {
    fn from_problem(p: &QpProblem) -> Self {
        let n = p.dim();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        if let Some(lb) = &p.lower_bounds {
            for (i, &b) in lb.iter().enumerate() {
                if b.is_finite() {
                    let mut r = vec![0.0; n];
                    r[i] = 1.0;
                    rows.push(r);
                    rhs.push(b);
                }
            }
        }
        if let Some(g) = &p.ineq_lhs {
            for k in 0..g.nrows() {
                rows.push((0..n).map(|j| g[(k, j)]).collect());
                rhs.push(p.ineq_rhs[k]);
            }
        }
        Self { rows, rhs }
    }

    fn slack(&self, k: usize, x: &[f64]) -> f64 {
        dot(&self.rows[k], x) - self.rhs[k]
    }

    fn len(&self) -> usize {
        self.rows.len()
    }
}

/// Minimizes `wᵀ q w − 2 wᵀ c` over the probability simplex.
pub fn solve_simplex_qp(q: &Mat<f64>, c: &[f64]) -> Result<Vec<f64>> {
    Ok(solve_simplex_qp_detailed(q, c)?.x)
}

pub fn solve_simplex_qp_detailed(q: &Mat<f64>, c: &[f64]) -> Result<QpSolution> {
    let n = c.len();
    let problem = QpProblem::unconstrained(q.clone(), c.to_vec())
        .with_equalities(Mat::from_fn(1, n, |_, _| 1.0), vec![1.0])
        .with_lower_bounds(vec![0.0; n])
        .with_initial(vec![1.0 / n as f64; n]);
    solve_general_qp(&problem)
}

/// Solves a [`QpProblem`] with the primal active-set method.
pub fn solve_general_qp(problem: &QpProblem) -> Result<QpSolution> {
    problem.validate()?;
    let kept = independent_equality_rows(problem);
    if kept.len() < problem.eq_rhs.len() {
        let n = problem.dim();
        let mut reduced = problem.clone();
        reduced.eq_lhs = Mat::from_fn(kept.len(), n, |r, j| problem.eq_lhs[(kept[r], j)]);
        reduced.eq_rhs = kept.iter().map(|&r| problem.eq_rhs[r]).collect();
        let mut sol = solve_reduced(&reduced)?;
        let residual = equality_residual(problem, &sol.x);
        let scale = 1.0 + problem.eq_rhs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if residual > 1e-6 * scale {
            return Err(Error::Infeasible(format!(
                "dependent equality constraints are inconsistent (residual {residual:.3e})"
            )));
        }
        let mut mult = vec![0.0; problem.eq_rhs.len()];
        for (&r, &m) in kept.iter().zip(&sol.eq_multipliers) {
            mult[r] = m;
        }
        sol.eq_multipliers = mult;
        return Ok(sol);
    }
    solve_reduced(problem)
}

/// Indices of a maximal linearly independent subset of the equality rows, in order.
fn independent_equality_rows(problem: &QpProblem) -> Vec<usize> {
    let n = problem.dim();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for r in 0..problem.eq_rhs.len() {
        let row: Vec<f64> = (0..n).map(|j| problem.eq_lhs[(r, j)]).collect();
        let mut v = row.clone();
        // two passes of Gram-Schmidt keep the orthogonalization accurate
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-9 * dot(&row, &row).sqrt().max(1e-300) {
            basis.push(v.iter().map(|x| x / norm).collect());
            kept.push(r);
        }
        if basis.len() == n {
            break;
        }
    }
    kept
}

fn solve_reduced(problem: &QpProblem) -> Result<QpSolution> {
    let ineq = Inequalities::from_problem(problem);
    let start = match &problem.initial {
        Some(x0) => {
            if x0.len() != problem.dim() {
                return Err(Error::Shape("initial point has the wrong length".into()));
            }
            x0.clone()
        }
        None => phase_one(problem, &ineq)?,
    };
    if let Some(k) = (0..ineq.len()).find(|&k| ineq.slack(k, &start) < -1e-7) {
        return Err(Error::Infeasible(format!("starting point violates inequality row {k}")));
    }
    active_set(problem, &ineq, start)
}

/// Finds a point satisfying the bounds and (approximately) the equalities by minimizing the
/// squared equality residual over the bound-feasible set.
fn phase_one(problem: &QpProblem, ineq: &Inequalities) -> Result<Vec<f64>> {
    let n = problem.dim();
    let m = problem.eq_rhs.len();
    let mut x0 = vec![0.0; n];
    if let Some(lb) = &problem.lower_bounds {
        for (xi, &b) in x0.iter_mut().zip(lb) {
            if b.is_finite() {
                *xi = f64::max(*xi, b);
            }
        }
    }
    if problem.ineq_lhs.is_some() && (0..ineq.len()).any(|k| ineq.slack(k, &x0) < -FEAS_TOL) {
        return Err(Error::Infeasible(
            "general inequality constraints need a feasible initial point".into(),
        ));
    }
    if m == 0 {
        return Ok(x0);
    }
    let e = &problem.eq_lhs;
    let mut q1 = Mat::from_fn(n, n, |i, j| (0..m).map(|r| e[(r, i)] * e[(r, j)]).sum::<f64>());
    let tr: f64 = (0..n).map(|i| q1[(i, i)]).sum();
    let delta = 1e-10 * (tr / n as f64 + 1.0);
    for i in 0..n {
        q1[(i, i)] += delta;
    }
    let c1: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|r| e[(r, j)] * problem.eq_rhs[r]).sum::<f64>() + delta * x0[j])
        .collect();
    let mut sub = QpProblem::unconstrained(q1, c1).with_initial(x0);
    sub.lower_bounds = problem.lower_bounds.clone();
    sub.ineq_lhs = problem.ineq_lhs.clone();
    sub.ineq_rhs = problem.ineq_rhs.clone();
    let ineq_only = Inequalities::from_problem(&sub);
    let x = active_set(&sub, &ineq_only, sub.initial.clone().unwrap_or_default())?.x;
    let residual = equality_residual(problem, &x);
    let scale = 1.0 + problem.eq_rhs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if residual > 1e-6 * scale {
        return Err(Error::Infeasible(format!(
            "equality constraints cannot be met within the bounds (residual {residual:.3e})"
        )));
    }
    Ok(x)
}

fn equality_residual(problem: &QpProblem, x: &[f64]) -> f64 {
    let ex = mat_vec(problem.eq_lhs.as_ref(), x);
    ex.iter().zip(&problem.eq_rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn gradient(problem: &QpProblem, x: &[f64]) -> Vec<f64> {
    mat_vec(problem.q.as_ref(), x)
        .iter()
        .zip(&problem.c)
        .map(|(qx, c)| 2.0 * (qx - c))
        .collect()
}

fn active_set(problem: &QpProblem, ineq: &Inequalities, mut x: Vec<f64>) -> Result<QpSolution> {
    let n = problem.dim();
    let m = problem.eq_rhs.len();
    let cap = 100 * n;
    // start with the inequalities that hold with equality
    let mut working: Vec<usize> = (0..ineq.len()).filter(|&k| ineq.slack(k, &x).abs() <= FEAS_TOL).collect();
    prune_dependent(problem, ineq, &mut working);
    let mut trace = vec![problem.objective(&x)];
    let mut iterations = 0;
    // after an unblocked full step the iterate minimizes the current subproblem exactly, and
    // any new step would be rounding noise
    let mut at_subproblem_min = false;
    loop {
        let (step, ray) = match kkt_step(problem, ineq, &working, &x)? {
            Step::Newton(p) => (p, false),
            Step::Ray(d) => (d, true),
        };
        let step_norm = step.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let x_scale = 1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if !ray && (at_subproblem_min || step_norm <= 1e-12 * x_scale) {
            at_subproblem_min = false;
            let (eq_mult, ineq_mult) = multipliers(problem, ineq, &working, &x)?;
            let grad_scale = 1.0 + gradient(problem, &x).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            // most negative multiplier leaves; ties go to the lowest constraint index
            let mut leave: Option<(usize, f64)> = None;
            for (pos, (&k, &mu)) in working.iter().zip(&ineq_mult).enumerate() {
                if mu < -1e-11 * grad_scale {
                    let better = match leave {
                        None => true,
                        Some((p, best)) => mu < best || (mu == best && k < working[p]),
                    };
                    if better {
                        leave = Some((pos, mu));
                    }
                }
            }
            match leave {
                None => {
                    let mut all_mult = vec![0.0; ineq.len()];
                    for (&k, &mu) in working.iter().zip(&ineq_mult) {
                        all_mult[k] = mu;
                    }
                    let residual = kkt_residual(problem, ineq, &x, &eq_mult, &all_mult);
                    return Ok(QpSolution {
                        objective: problem.objective(&x),
                        x,
                        iterations,
                        kkt_residual: residual,
                        eq_multipliers: eq_mult,
                        ineq_multipliers: all_mult,
                        objective_trace: trace,
                    });
                }
                Some((pos, _)) => {
                    working.remove(pos);
                }
            }
        } else {
            let mut alpha = if ray { f64::INFINITY } else { 1.0 };
            let mut blocking: Option<usize> = None;
            for k in 0..ineq.len() {
                if working.contains(&k) {
                    continue;
                }
                let rate = dot(&ineq.rows[k], &step);
                if rate < -1e-14 {
                    let limit = (-ineq.slack(k, &x) / rate).max(0.0);
                    if limit < alpha {
                        alpha = limit;
                        blocking = Some(k);
                    }
                }
            }
            if !alpha.is_finite() {
                return Err(Error::Numeric("QP objective is unbounded below on the feasible set".into()));
            }
            for (xi, si) in x.iter_mut().zip(&step) {
                *xi += alpha * si;
            }
            match blocking {
                Some(k) => working.push(k),
                None => at_subproblem_min = true,
            }
            trace.push(problem.objective(&x));
        }
        iterations += 1;
        if iterations > cap {
            let eq_mult = vec![0.0; m];
            let all_mult = vec![0.0; ineq.len()];
            return Err(Error::Solver {
                iterations,
                residual: kkt_residual(problem, ineq, &x, &eq_mult, &all_mult),
            });
        }
    }
}

/// Drops working rows that are linearly dependent on the equalities and earlier rows.
fn prune_dependent(problem: &QpProblem, ineq: &Inequalities, working: &mut Vec<usize>) {
    let n = problem.dim();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let add = |row: &[f64], basis: &mut Vec<Vec<f64>>| -> bool {
        let mut r = row.to_vec();
        for b in basis.iter() {
            let proj = dot(&r, b);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= proj * bi;
            }
        }
        let norm = dot(&r, &r).sqrt();
        let scale = dot(row, row).sqrt().max(1e-300);
        if norm > 1e-9 * scale {
            basis.push(r.iter().map(|v| v / norm).collect());
            true
        } else {
            false
        }
    };
    for r in 0..problem.eq_rhs.len() {
        let row: Vec<f64> = (0..n).map(|j| problem.eq_lhs[(r, j)]).collect();
        add(&row, &mut basis);
    }
    working.retain(|&k| add(&ineq.rows[k], &mut basis));
}

/// Result of the equality-constrained subproblem on the current working set.
enum Step {
    /// Step to the subproblem minimizer (minimum-norm where the curvature vanishes).
    Newton(Vec<f64>),
    /// Descent direction of zero curvature: the subproblem is unbounded along it.
    Ray(Vec<f64>),
}

/// Solves the subproblem by the null-space method, which also handles semidefinite `Q`.
fn kkt_step(problem: &QpProblem, ineq: &Inequalities, working: &[usize], x: &[f64]) -> Result<Step> {
    let n = problem.dim();
    let m = problem.eq_rhs.len();
    let k = m + working.len();
    let grad = gradient(problem, x);
    let a = active_rows(problem, ineq, working);
    let ex = mat_vec(problem.eq_lhs.as_ref(), x);
    let resid: Vec<f64> = (0..m)
        .map(|r| problem.eq_rhs[r] - ex[r])
        .chain(working.iter().map(|&w| -ineq.slack(w, x)))
        .collect();
    // minimum-norm correction onto the active constraints
    let mut step = vec![0.0; n];
    if k > 0 && resid.iter().any(|v| *v != 0.0) {
        let aat = Mat::from_fn(k, k, |i, j| dot(&a[i], &a[j]));
        let y = lu_solve(aat.as_ref(), &resid)?;
        for (yi, row) in y.iter().zip(&a) {
            for (s, r) in step.iter_mut().zip(row) {
                *s += yi * r;
            }
        }
    }
    if k >= n {
        return Ok(Step::Newton(step));
    }
    let z = null_space(&a, n)?;
    let free = z.ncols();
    let q_step = mat_vec(problem.q.as_ref(), &step);
    let g_corr: Vec<f64> = grad.iter().zip(&q_step).map(|(g, q)| g + 2.0 * q).collect();
    let gz: Vec<f64> = (0..free).map(|c| (0..n).map(|i| z[(i, c)] * g_corr[i]).sum()).collect();
    let qz = Mat::from_fn(n, free, |i, c| (0..n).map(|j| problem.q[(i, j)] * z[(j, c)]).sum::<f64>());
    let hz = Mat::from_fn(free, free, |r, c| 2.0 * (0..n).map(|i| z[(i, r)] * qz[(i, c)]).sum::<f64>());
    let (lam, v) = symmetric_eigen(hz.as_ref())?;
    let lam_max = lam.iter().copied().fold(0.0_f64, f64::max);
    let flat = lam_max * 1e-12;
    let grad_scale = 1.0 + grad.iter().fold(0.0_f64, |acc, g| acc.max(g.abs()));
    let mut pz = vec![0.0; free];
    let mut ray = vec![0.0; free];
    for (i, &li) in lam.iter().enumerate() {
        let coef: f64 = (0..free).map(|r| v[(r, i)] * gz[r]).sum();
        let target = if li <= flat { &mut ray } else { &mut pz };
        let scale = if li <= flat { -coef } else { -coef / li };
        for (r, t) in target.iter_mut().enumerate() {
            *t += scale * v[(r, i)];
        }
    }
    let lift = |p: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..free).map(|c| z[(i, c)] * p[c]).sum()).collect() };
    if ray.iter().fold(0.0_f64, |acc, r| acc.max(r.abs())) > 1e-11 * grad_scale {
        return Ok(Step::Ray(lift(&ray)));
    }
    for (s, d) in step.iter_mut().zip(lift(&pz)) {
        *s += d;
    }
    Ok(Step::Newton(step))
}

/// Multipliers of the active rows at `x` from `Aᵀλ = ∇f(x)`, in least squares.
fn multipliers(problem: &QpProblem, ineq: &Inequalities, working: &[usize], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = problem.eq_rhs.len();
    let a = active_rows(problem, ineq, working);
    if a.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let grad = gradient(problem, x);
    let k = a.len();
    let aat = Mat::from_fn(k, k, |i, j| dot(&a[i], &a[j]));
    let rhs: Vec<f64> = a.iter().map(|row| dot(row, &grad)).collect();
    let lam = lu_solve(aat.as_ref(), &rhs)?;
    Ok((lam[..m].to_vec(), lam[m..].to_vec()))
}

fn active_rows(problem: &QpProblem, ineq: &Inequalities, working: &[usize]) -> Vec<Vec<f64>> {
    let n = problem.dim();
    (0..problem.eq_rhs.len())
        .map(|r| (0..n).map(|j| problem.eq_lhs[(r, j)]).collect())
        .chain(working.iter().map(|&w| ineq.rows[w].clone()))
        .collect()
}

/// Orthonormal basis (columns) of the null space of the independent rows `a`.
fn null_space(a: &[Vec<f64>], n: usize) -> Result<Mat<f64>> {
    let ata = Mat::from_fn(n, n, |i, j| a.iter().map(|row| row[i] * row[j]).sum::<f64>());
    let (_, vectors) = symmetric_eigen(ata.as_ref())?;
    let free = n - a.len();
    Ok(Mat::from_fn(n, free, |i, c| vectors[(i, c)]))
}

fn kkt_residual(problem: &QpProblem, ineq: &Inequalities, x: &[f64], eq_mult: &[f64], ineq_mult: &[f64]) -> f64 {
    let n = problem.dim();
    let mut stationarity = gradient(problem, x);
    for (r, &lam) in eq_mult.iter().enumerate() {
        for (j, s) in stationarity.iter_mut().enumerate() {
            *s -= lam * problem.eq_lhs[(r, j)];
        }
    }
    for (k, &mu) in ineq_mult.iter().enumerate() {
        if mu != 0.0 {
            for (j, s) in stationarity.iter_mut().enumerate().take(n) {
                *s -= mu * ineq.rows[k][j];
            }
        }
    }
    let mut res = stationarity.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    res = res.max(equality_residual(problem, x));
    for (k, &mu) in ineq_mult.iter().enumerate() {
        let slack = ineq.slack(k, x);
        res = res.max((-slack).max(0.0)).max((-mu).max(0.0)).max((mu * slack).abs());
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(n: usize) -> Mat<f64> {
        Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn simplex_interior_point() {
        let w = solve_simplex_qp(&eye(2), &[0.3, 0.7]).unwrap();
        assert!((w[0] - 0.3).abs() < 1e-12 && (w[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn simplex_vertex_solution() {
        let sol = solve_simplex_qp_detailed(&eye(2), &[2.0, 0.0]).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && sol.x[1].abs() < 1e-12);
        assert!(sol.kkt_residual <= 1e-7);
        // grid oracle over the 1-simplex at step 1e-4
        let best = (0..=10_000)
            .map(|k| {
                let a = k as f64 * 1e-4;
                (a * a + (1.0 - a) * (1.0 - a) - 4.0 * a, a)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert!((best.1 - 1.0).abs() < 1e-12);
        assert!(sol.objective <= best.0 + 1e-12);
    }

    #[test]
    fn simplex_symmetric_problem() {
        let w = solve_simplex_qp(&eye(3), &[1.0 / 3.0; 3]).unwrap();
        for v in w {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_variable_simplex_is_one() {
        let q = Mat::from_fn(1, 1, |_, _| 5.0);
        assert_eq!(solve_simplex_qp(&q, &[-3.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn unconstrained_matches_direct_solve() {
        let q = Mat::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 1.0 });
        let c = vec![1.0, -2.0, 0.5];
        let sol = solve_general_qp(&QpProblem::unconstrained(q.clone(), c.clone())).unwrap();
        let direct = lu_solve(q.as_ref(), &c).unwrap();
        for (a, b) in sol.x.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(sol.kkt_residual <= 1e-7);
    }

    #[test]
    fn equality_projection_of_origin() {
        let n = 5;
        let p = QpProblem::unconstrained(eye(n), vec![0.0; n]).with_equalities(Mat::from_fn(1, n, |_, _| 1.0), vec![1.0]);
        let sol = solve_general_qp(&p).unwrap();
        for v in &sol.x {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_one_finds_feasible_start() {
        // sum to 1 with x >= 0 but starting from the bounds (the origin) which is infeasible
        let p = QpProblem::unconstrained(eye(3), vec![0.9, 0.1, -0.5])
            .with_equalities(Mat::from_fn(1, 3, |_, _| 1.0), vec![1.0])
            .with_lower_bounds(vec![0.0; 3]);
        let sol = solve_general_qp(&p).unwrap();
        assert!((sol.x.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!((sol.x[0] - 0.9).abs() < 1e-9 && (sol.x[1] - 0.1).abs() < 1e-9 && sol.x[2].abs() < 1e-12);
    }

    #[test]
    fn infeasible_constraints_are_reported() {
        let p = QpProblem::unconstrained(eye(2), vec![0.0; 2])
            .with_equalities(Mat::from_fn(1, 2, |_, _| 1.0), vec![-1.0])
            .with_lower_bounds(vec![0.0; 2]);
        assert!(matches!(solve_general_qp(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn asymmetric_q_rejected() {
        let q = Mat::from_fn(2, 2, |i, j| if i < j { 1.0 } else { 0.0 });
        assert!(matches!(solve_simplex_qp(&q, &[0.0, 0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn general_inequality_rows() {
        // x + y >= 3 with min x² + y² → (1.5, 1.5)
        let p = QpProblem::unconstrained(eye(2), vec![0.0; 2])
            .with_inequalities(Mat::from_fn(1, 2, |_, _| 1.0), vec![3.0])
            .with_initial(vec![3.0, 3.0]);
        let sol = solve_general_qp(&p).unwrap();
        assert!((sol.x[0] - 1.5).abs() < 1e-12 && (sol.x[1] - 1.5).abs() < 1e-12);
        assert!(sol.ineq_multipliers[0] > 0.0);
    }

    #[test]
    fn dependent_equalities_are_reduced() {
        // the second row repeats the first; the third is their sum
        let rows = [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]];
        let e = Mat::from_fn(3, 3, |r, j| rows[r][j]);
        let p = QpProblem::unconstrained(eye(3), vec![0.0; 3]).with_equalities(e.clone(), vec![1.0, 1.0, 3.0]);
        let sol = solve_general_qp(&p).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 2.0).abs() < 1e-12 && sol.x[2].abs() < 1e-12);
        assert_eq!(sol.eq_multipliers.len(), 3);
        let bad = QpProblem::unconstrained(eye(3), vec![0.0; 3]).with_equalities(e, vec![1.0, 2.0, 3.0]);
        assert!(matches!(solve_general_qp(&bad), Err(Error::Infeasible(_))));
    }
    #[test]
    fn rank_one_q_on_simplex() {
        // f(w) = (w0 − w2)² − 2(0.3 w0 + 0.1 w1 − 0.2 w2); flat directions exist in every face
        let u = [1.0, 0.0, -1.0];
        let q = Mat::from_fn(3, 3, |i, j| u[i] * u[j]);
        let c = [0.3, 0.1, -0.2];
        let sol = solve_simplex_qp_detailed(&q, &c).unwrap();
        assert!(sol.kkt_residual <= 1e-9);
        let mut best = f64::INFINITY;
        for a in 0..=200 {
            for b in 0..=(200 - a) {
                let w = [a as f64 / 200.0, b as f64 / 200.0, (200 - a - b) as f64 / 200.0];
                best = best.min(quad_form(q.as_ref(), &w) - 2.0 * dot(&c, &w));
            }
        }
        assert!(sol.objective <= best + 1e-12);
    }

    #[test]
    fn zero_curvature_descent_is_unbounded() {
        let p = QpProblem::unconstrained(Mat::zeros(2, 2), vec![1.0, 0.0]);
        assert!(matches!(solve_general_qp(&p), Err(Error::Numeric(_))));
        // bounded by a lower bound along the same ray
        let p = QpProblem::unconstrained(Mat::zeros(2, 2), vec![-1.0, 0.0]).with_lower_bounds(vec![0.0, 0.0]);
        let sol = solve_general_qp(&p).unwrap();
        assert_eq!(sol.x[0], 0.0);
    }
}
