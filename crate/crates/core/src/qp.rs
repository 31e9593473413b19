//! Safety-filter QP: `min |u - kd|^2  s.t.  A u >= b`.
//!
//! Solved with the Goldfarb-Idnani dual active-set method specialised to an
//! identity Hessian. The iteration starts at the unconstrained minimiser
//! `u = kd` (or at a dual-feasible warm start), repeatedly picks the most
//! violated row and moves along the primal/dual step directions, dropping
//! rows whose multipliers would turn negative. Infeasibility shows up as an
//! unbounded dual step and yields a Farkas certificate: weights `y >= 0`
//! with `A^T y = 0` and `b . y > 0`.
//!
//! Multipliers are reported for the objective as written, so at an optimum
//! `2 (u - kd) = A^T mu`.

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintRow;
use crate::error::{Error, Result};
use crate::primitives::dot;

/// Relative threshold on the Gram pivot `|z|^2 / |a|^2` below which a row is
/// treated as linearly dependent on the active set.
const DEPENDENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub kd: Vec<f64>,
    pub rows: Vec<ConstraintRow>,
}

impl QpProblem {
    pub fn new(kd: Vec<f64>, rows: Vec<ConstraintRow>) -> Self {
        Self { kd, rows }
    }

    pub fn dim(&self) -> usize {
        self.kd.len()
    }

    fn check(&self) -> Result<()> {
        let m = self.kd.len();
        if self.kd.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("desired control".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.a.len() != m {
                return Err(Error::Dimension {
                    context: format!("row {i} coefficients"),
                    expected: m,
                    actual: row.a.len(),
                });
            }
            if !row.b.is_finite() || row.a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("row {i}")));
            }
        }
        Ok(())
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.kd).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    /// `certificate[k] >= 0`, `sum_k certificate[k] a_k = 0` and
    /// `sum_k certificate[k] b_k > 0`, so `A u >= b` has no solution.
    Infeasible { certificate: Vec<f64> },
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    #[serde(flatten)]
    pub status: QpStatus,
    pub u: Vec<f64>,
    /// One multiplier per row, zero for inactive rows.
    pub duals: Vec<f64>,
    /// Active row indices, ascending.
    pub active_set: Vec<usize>,
    pub iterations: usize,
    /// `min_k (a_k . u - b_k)`, `+inf` without rows.
    pub min_slack: f64,
    /// Smallest relative Gram pivot among active rows (1 for an orthogonal
    /// active set, near 0 when the active normals are close to dependent).
    pub active_pivot_min: f64,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        matches!(self.status, QpStatus::Optimal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
        }
    }
}

pub fn solve(problem: &QpProblem, opts: SolverOptions) -> Result<QpSolution> {
    solve_warm(problem, opts, &[])
}

/// Like [`solve`], seeding the active set with `seed` (typically the previous
/// step's active set). Seeds are reduced to a dual-feasible subset first, so
/// the answer does not depend on them.
pub fn solve_warm(problem: &QpProblem, opts: SolverOptions, seed: &[usize]) -> Result<QpSolution> {
    problem.check()?;
    let mut st = State::cold(problem);
    if !seed.is_empty() {
        st.warm(problem, seed);
    }
    Ok(st.run(problem, opts))
}

/// Orthonormal basis of the active normals, `N = Q R`.
#[derive(Debug, Clone, Default)]
struct Basis {
    q: Vec<Vec<f64>>,
    /// Column `j` of `R`, length `j + 1`.
    r: Vec<Vec<f64>>,
    rel_pivots: Vec<f64>,
}

impl Basis {
    /// `(Q^T v, v - Q Q^T v)` with one reorthogonalisation pass.
    fn project(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut z = v.to_vec();
        let mut w = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (wi, qi) in w.iter_mut().zip(&self.q) {
                let c = dot(qi, &z);
                *wi += c;
                for (zk, qk) in z.iter_mut().zip(qi) {
                    *zk -= c * qk;
                }
            }
        }
        (w, z)
    }

    fn try_push(&mut self, v: &[f64]) -> bool {
        let (mut w, z) = self.project(v);
        let vv = dot(v, v);
        let zz = dot(&z, &z);
        if vv == 0.0 || zz <= DEPENDENCE_TOL * vv {
            return false;
        }
        let norm = zz.sqrt();
        self.q.push(z.iter().map(|zi| zi / norm).collect());
        w.push(norm);
        self.r.push(w);
        self.rel_pivots.push(zz / vv);
        true
    }

    /// Solves `R y = w`.
    fn solve_r(&self, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        let mut y = w.to_vec();
        for j in (0..n).rev() {
            y[j] /= self.r[j][j];
            let yj = y[j];
            for (i, yi) in y.iter_mut().enumerate().take(j) {
                *yi -= self.r[j][i] * yj;
            }
        }
        y
    }

    /// Solves `R^T y = c`.
    fn solve_rt(&self, c: &[f64]) -> Vec<f64> {
        let n = c.len();
        let mut y = c.to_vec();
        for j in 0..n {
            let s: f64 = (0..j).map(|i| self.r[j][i] * y[i]).sum();
            y[j] = (y[j] - s) / self.r[j][j];
        }
        y
    }
}

struct State {
    x: Vec<f64>,
    active: Vec<usize>,
    /// Multipliers for the objective `0.5 |u - kd|^2`, aligned with `active`.
    lambda: Vec<f64>,
    basis: Basis,
}

impl State {
    fn cold(problem: &QpProblem) -> Self {
        Self {
            x: problem.kd.clone(),
            active: Vec::new(),
            lambda: Vec::new(),
            basis: Basis::default(),
        }
    }

    fn rebuild(&mut self, problem: &QpProblem) {
        let mut basis = Basis::default();
        let mut active = Vec::with_capacity(self.active.len());
        let mut lambda = Vec::with_capacity(self.active.len());
        for (&j, &l) in self.active.iter().zip(&self.lambda) {
            if basis.try_push(&problem.rows[j].a) {
                active.push(j);
                lambda.push(l);
            }
        }
        self.basis = basis;
        self.active = active;
        self.lambda = lambda;
    }

    /// Equality-constrained projection onto the active rows; overwrites `x`
    /// and `lambda`.
    fn project_onto_active(&mut self, problem: &QpProblem) {
        let c: Vec<f64> = self
            .active
            .iter()
            .map(|&j| problem.rows[j].b - dot(&problem.rows[j].a, &problem.kd))
            .collect();
        let mut nu = self.basis.solve_r(&self.basis.solve_rt(&c));
        let mut x = problem.kd.clone();
        let add = |x: &mut Vec<f64>, nu: &[f64]| {
            for (&j, &v) in self.active.iter().zip(nu) {
                for (xi, ai) in x.iter_mut().zip(&problem.rows[j].a) {
                    *xi += v * ai;
                }
            }
        };
        add(&mut x, &nu);
        // one step of iterative refinement on the active residuals
        let res: Vec<f64> = self
            .active
            .iter()
            .map(|&j| problem.rows[j].b - dot(&problem.rows[j].a, &x))
            .collect();
        let d = self.basis.solve_r(&self.basis.solve_rt(&res));
        add(&mut x, &d);
        for (n, di) in nu.iter_mut().zip(&d) {
            *n += di;
        }
        self.x = x;
        self.lambda = nu;
    }

    fn warm(&mut self, problem: &QpProblem, seed: &[usize]) {
        let mut cand: Vec<usize> = seed
            .iter()
            .copied()
            .filter(|&j| j < problem.rows.len())
            .collect();
        cand.sort_unstable();
        cand.dedup();
        self.lambda = vec![0.0; cand.len()];
        self.active = cand;
        self.rebuild(problem);
        loop {
            if self.active.is_empty() {
                self.x = problem.kd.clone();
                return;
            }
            self.project_onto_active(problem);
            let worst = lowest_index_min(&self.active, &self.lambda);
            match worst {
                Some((pos, v)) if v < 0.0 => {
                    self.active.remove(pos);
                    self.lambda.remove(pos);
                    self.rebuild(problem);
                }
                _ => return,
            }
        }
    }

    /// Re-derives `x` and `lambda` from the active set in ascending order, so
    /// identical active sets give bit-identical answers.
    fn polish(&mut self, problem: &QpProblem) {
        let mut order: Vec<usize> = (0..self.active.len()).collect();
        order.sort_by_key(|&i| self.active[i]);
        let lambda_old: Vec<f64> = order.iter().map(|&i| self.lambda[i]).collect();
        self.active = order.iter().map(|&i| self.active[i]).collect();
        self.lambda = lambda_old;
        self.rebuild(problem);
        self.project_onto_active(problem);
        for l in &mut self.lambda {
            if *l < 0.0 {
                *l = 0.0;
            }
        }
    }

    fn most_violated(&self, problem: &QpProblem, tol: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, row) in problem.rows.iter().enumerate() {
            let s = row.slack_at(&self.x);
            if s < -tol && best.is_none_or(|(_, bs)| s < bs) {
                best = Some((j, s));
            }
        }
        best.map(|(j, _)| j)
    }

    fn run(mut self, problem: &QpProblem, opts: SolverOptions) -> QpSolution {
        let mut iterations = 0;
        'outer: loop {
            let Some(p) = self.most_violated(problem, opts.tol) else {
                self.polish(problem);
                if self.most_violated(problem, opts.tol).is_some() {
                    continue;
                }
                return self.finish(problem, QpStatus::Optimal, iterations);
            };
            let np = &problem.rows[p].a;
            let np_norm2 = dot(np, np);
            let mut lambda_p = 0.0;

            loop {
                if iterations >= opts.max_iter {
                    return self.finish(problem, QpStatus::IterationLimit, iterations);
                }
                iterations += 1;

                let (w, z) = self.basis.project(np);
                let zz = dot(&z, &z);
                let dependent = np_norm2 == 0.0 || zz <= DEPENDENCE_TOL * np_norm2;
                let r = self.basis.solve_r(&w);

                // largest dual step before an active multiplier hits zero
                let mut t1 = f64::INFINITY;
                let mut drop: Option<usize> = None;
                for (i, &ri) in r.iter().enumerate() {
                    if ri > 0.0 {
                        let t = self.lambda[i] / ri;
                        let better = match drop {
                            None => true,
                            Some(k) => t < t1 || (t == t1 && self.active[i] < self.active[k]),
                        };
                        if better {
                            t1 = t;
                            drop = Some(i);
                        }
                    }
                }

                if dependent {
                    let Some(k) = drop else {
                        let mut certificate = vec![0.0; problem.rows.len()];
                        certificate[p] = 1.0;
                        for (&j, &rj) in self.active.iter().zip(&r) {
                            certificate[j] = (-rj).max(0.0);
                        }
                        return self.finish(problem, QpStatus::Infeasible { certificate }, iterations);
                    };
                    for (l, ri) in self.lambda.iter_mut().zip(&r) {
                        *l -= t1 * ri;
                    }
                    lambda_p += t1;
                    self.remove_active(problem, k);
                    continue;
                }

                let s_p = dot(np, &self.x) - problem.rows[p].b;
                let t2 = -s_p / zz;
                let t = t1.min(t2);
                for (xi, zi) in self.x.iter_mut().zip(&z) {
                    *xi += t * zi;
                }
                for (l, ri) in self.lambda.iter_mut().zip(&r) {
                    *l -= t * ri;
                }
                lambda_p += t;

                if t2 <= t1 {
                    if self.basis.try_push(np) {
                        self.active.push(p);
                        self.lambda.push(lambda_p);
                    }
                    continue 'outer;
                }
                let k = drop.expect("finite t1 implies a blocking row");
                self.remove_active(problem, k);
            }
        }
    }

    fn remove_active(&mut self, problem: &QpProblem, pos: usize) {
        self.active.remove(pos);
        self.lambda.remove(pos);
        self.rebuild(problem);
    }

    fn finish(self, problem: &QpProblem, status: QpStatus, iterations: usize) -> QpSolution {
        let mut duals = vec![0.0; problem.rows.len()];
        for (&j, &l) in self.active.iter().zip(&self.lambda) {
            duals[j] = 2.0 * l;
        }
        let mut active_set = self.active.clone();
        active_set.sort_unstable();
        let min_slack = problem
            .rows
            .iter()
            .map(|r| r.slack_at(&self.x))
            .fold(f64::INFINITY, f64::min);
        let active_pivot_min = self.basis.rel_pivots.iter().copied().fold(1.0, f64::min);
        QpSolution {
            status,
            u: self.x,
            duals,
            active_set,
            iterations,
            min_slack,
            active_pivot_min,
        }
    }
}

/// Position and value of the smallest entry of `values`, ties broken by the
/// lowest row index in `rows`.
fn lowest_index_min(rows: &[usize], values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (pos, &v) in values.iter().enumerate() {
        best = match best {
            None => Some((pos, v)),
            Some((bp, bv)) if v < bv || (v == bv && rows[pos] < rows[bp]) => Some((pos, v)),
            keep => keep,
        };
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `|2 (u - kd) - A^T mu|_inf`
    pub stationarity: f64,
    /// `max(0, -min_k (a_k . u - b_k))`
    pub primal: f64,
    /// `max(0, -min_k mu_k)`
    pub dual: f64,
    /// `max_k |mu_k (a_k . u - b_k)|`
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

pub fn verify_kkt(problem: &QpProblem, solution: &QpSolution) -> KktResiduals {
    let u = &solution.u;
    let mut grad: Vec<f64> = u.iter().zip(&problem.kd).map(|(a, b)| 2.0 * (a - b)).collect();
    let mut primal: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    for (row, &mu) in problem.rows.iter().zip(&solution.duals) {
        for (g, a) in grad.iter_mut().zip(&row.a) {
            *g -= mu * a;
        }
        let s = row.slack_at(u);
        primal = primal.max(-s);
        dual = dual.max(-mu);
        complementarity = complementarity.max((mu * s).abs());
    }
    KktResiduals {
        stationarity: grad.iter().fold(0.0, |acc, g| acc.max(g.abs())),
        primal,
        dual,
        complementarity,
    }
}

/// Test oracle: enumerates every active-set candidate of size at most `m`,
/// projects `kd` onto each candidate's equality set and keeps the feasible
/// candidate with the lowest objective. Limited to `m <= 3` and 12 rows.
pub fn solve_bruteforce(problem: &QpProblem) -> Result<QpSolution> {
    problem.check()?;
    let m = problem.dim();
    let nrows = problem.rows.len();
    if m > 3 || nrows > 12 {
        return Err(Error::TooLarge(format!(
            "brute force supports m <= 3 and at most 12 rows, got m = {m}, {nrows} rows"
        )));
    }
    const FEAS_TOL: f64 = 1e-9;

    // (objective, u, active subset, half-objective multipliers)
    type Candidate = (f64, Vec<f64>, Vec<usize>, Vec<f64>);
    let mut best: Option<Candidate> = None;
    for subset in subsets_up_to(nrows, m) {
        let Some((u, nu)) = project_onto_equalities(problem, &subset) else {
            continue;
        };
        if problem.rows.iter().any(|r| r.slack_at(&u) < -FEAS_TOL) {
            continue;
        }
        let obj = problem.objective(&u);
        if best.as_ref().is_none_or(|(b, ..)| obj < *b) {
            best = Some((obj, u, subset, nu));
        }
    }

    let Some((_, u, subset, nu)) = best else {
        return Ok(QpSolution {
            status: QpStatus::Infeasible {
                certificate: Vec::new(),
            },
            u: problem.kd.clone(),
            duals: vec![0.0; nrows],
            active_set: Vec::new(),
            iterations: 0,
            min_slack: f64::NEG_INFINITY,
            active_pivot_min: 1.0,
        });
    };
    let mut duals = vec![0.0; nrows];
    for (&j, &v) in subset.iter().zip(&nu) {
        duals[j] = 2.0 * v;
    }
    let min_slack = problem
        .rows
        .iter()
        .map(|r| r.slack_at(&u))
        .fold(f64::INFINITY, f64::min);
    Ok(QpSolution {
        status: QpStatus::Optimal,
        u,
        duals,
        active_set: subset,
        iterations: 0,
        min_slack,
        active_pivot_min: 1.0,
    })
}

/// All index subsets of `0..n` with size `0..=k`, by size then lexicographically.
fn subsets_up_to(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for size in 1..=k.min(n) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.clone());
            let mut i = size;
            while i > 0 && idx[i - 1] == n - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

/// Projection of `kd` onto `{u : a_j . u = b_j, j in subset}` through a
/// Householder QR of the stacked row vectors, with one refinement step.
/// Returns the point and the half-objective multipliers, or `None` when the
/// rows are linearly dependent.
fn project_onto_equalities(problem: &QpProblem, subset: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = problem.dim();
    let q = subset.len();
    let rows: Vec<&ConstraintRow> = subset.iter().map(|&j| &problem.rows[j]).collect();
    if q > m {
        return None;
    }
    // cols[j] starts as a_j and ends as column j of R; qt accumulates Q^T
    let mut cols: Vec<Vec<f64>> = rows.iter().map(|r| r.a.clone()).collect();
    let mut qt: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for k in 0..q {
        let norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let full = dot(&rows[k].a, &rows[k].a).sqrt();
        if norm <= 1e-6 * full || full == 0.0 {
            return None;
        }
        let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |x: &mut [f64]| {
            let f = 2.0 * dot(&v, x) / vv;
            for (xi, vi) in x.iter_mut().zip(&v) {
                *xi -= f * vi;
            }
        };
        for col in cols.iter_mut().skip(k) {
            reflect(&mut col[k..]);
        }
        for c in 0..m {
            let mut column: Vec<f64> = qt[k..].iter().map(|row| row[c]).collect();
            reflect(&mut column);
            for (row, val) in qt[k..].iter_mut().zip(column) {
                row[c] = val;
            }
        }
    }

    // R^T z = c by forward substitution, R nu = z by back substitution
    let solve_rt = |c: &[f64]| {
        let mut z = vec![0.0; q];
        for i in 0..q {
            let s: f64 = (0..i).map(|k| cols[i][k] * z[k]).sum();
            z[i] = (c[i] - s) / cols[i][i];
        }
        z
    };
    let solve_r = |z: &[f64]| {
        let mut nu = vec![0.0; q];
        for i in (0..q).rev() {
            let s: f64 = (i + 1..q).map(|k| cols[k][i] * nu[k]).sum();
            nu[i] = (z[i] - s) / cols[i][i];
        }
        nu
    };

    let mut u = problem.kd.clone();
    let mut nu = vec![0.0; q];
    for _ in 0..2 {
        let c: Vec<f64> = rows.iter().map(|r| r.b - dot(&r.a, &u)).collect();
        let z = solve_rt(&c);
        for (i, zi) in z.iter().enumerate() {
            for (uc, qc) in u.iter_mut().zip(&qt[i]) {
                *uc += zi * qc;
            }
        }
        for (n, d) in nu.iter_mut().zip(solve_r(&z)) {
            *n += d;
        }
    }
    Some((u, nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(a: &[f64], b: f64, k: usize) -> ConstraintRow {
        ConstraintRow {
            a: a.to_vec(),
            b,
            source_index: k,
        }
    }

    #[test]
    fn unconstrained_is_identity() {
        let p = QpProblem::new(vec![1.0, 0.0], vec![]);
        let s = solve(&p, SolverOptions::default()).unwrap();
        assert!(s.is_optimal());
        assert_eq!(s.u, vec![1.0, 0.0]);
        assert_eq!(verify_kkt(&p, &s), KktResiduals::default());
        let o = solve_bruteforce(&p).unwrap();
        assert_eq!(o.u, vec![1.0, 0.0]);
    }

    #[test]
    fn one_row_projection() {
        let p = QpProblem::new(vec![-1.0, 0.0], vec![row(&[1.0, 0.0], 0.0, 0)]);
        let s = solve(&p, SolverOptions::default()).unwrap();
        assert!(s.is_optimal());
        assert_eq!(s.u, vec![0.0, 0.0]);
        assert_eq!(s.duals, vec![2.0]);
        assert_eq!(s.active_set, vec![0]);
        assert!(verify_kkt(&p, &s).max() <= 1e-12);

        // grid search agrees
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=200 {
            for j in -100..=100 {
                let u = [i as f64 * 0.01, j as f64 * 0.01];
                let f = p.objective(&u);
                if f < best.0 {
                    best = (f, u[0], u[1]);
                }
            }
        }
        assert_eq!((best.1, best.2), (0.0, 0.0));
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let p = QpProblem::new(
            vec![0.0, 0.0],
            vec![row(&[1.0, 0.0], 1.0, 0), row(&[-1.0, 0.0], 0.0, 1)],
        );
        let s = solve(&p, SolverOptions::default()).unwrap();
        match &s.status {
            QpStatus::Infeasible { certificate } => {
                assert_eq!(certificate, &vec![1.0, 1.0]);
                // weights give 0 >= 1
                let lhs: Vec<f64> = (0..2)
                    .map(|c| p.rows.iter().zip(certificate).map(|(r, y)| y * r.a[c]).sum())
                    .collect();
                let rhs: f64 = p.rows.iter().zip(certificate).map(|(r, y)| y * r.b).sum();
                assert_eq!(lhs, vec![0.0, 0.0]);
                assert!(rhs > 0.0);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        assert!(!solve_bruteforce(&p).unwrap().is_optimal());
    }

    #[test]
    fn zero_row_with_positive_bound_is_infeasible() {
        let p = QpProblem::new(vec![0.0], vec![row(&[0.0], 1.0, 0)]);
        let s = solve(&p, SolverOptions::default()).unwrap();
        assert_eq!(
            s.status,
            QpStatus::Infeasible {
                certificate: vec![1.0]
            }
        );
    }

    #[test]
    fn duplicate_rows_are_handled() {
        let r = row(&[1.0, 1.0], 1.0, 0);
        let p = QpProblem::new(vec![0.0, 0.0], vec![r.clone(), r.clone(), r]);
        let s = solve(&p, SolverOptions::default()).unwrap();
        assert!(s.is_optimal());
        assert!((s.u[0] - 0.5).abs() < 1e-15 && (s.u[1] - 0.5).abs() < 1e-15);
        assert_eq!(s.active_set.len(), 1);
        assert!(verify_kkt(&p, &s).max() <= 1e-12);
    }

    #[test]
    fn two_active_rows() {
        // u1 >= 1, u2 >= 2 from kd = 0
        let p = QpProblem::new(
            vec![0.0, 0.0],
            vec![row(&[1.0, 0.0], 1.0, 0), row(&[0.0, 1.0], 2.0, 1), row(&[1.0, 1.0], -5.0, 2)],
        );
        let s = solve(&p, SolverOptions::default()).unwrap();
        assert_eq!(s.u, vec![1.0, 2.0]);
        assert_eq!(s.duals, vec![2.0, 4.0, 0.0]);
        assert_eq!(s.active_set, vec![0, 1]);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let p = QpProblem::new(
            vec![0.0, 0.0],
            vec![row(&[1.0, 0.0], 1.0, 0), row(&[0.0, 1.0], 2.0, 1)],
        );
        let s = solve(
            &p,
            SolverOptions {
                tol: 1e-9,
                max_iter: 1,
            },
        )
        .unwrap();
        assert_eq!(s.status, QpStatus::IterationLimit);
    }

    #[test]
    fn warm_start_agrees_with_cold() {
        let p = QpProblem::new(
            vec![0.3, -0.2, 1.0],
            vec![
                row(&[1.0, 0.0, 0.0], 1.0, 0),
                row(&[0.0, 1.0, 0.0], 0.0, 1),
                row(&[1.0, 1.0, 1.0], 0.0, 2),
                row(&[0.0, 0.0, -1.0], 0.0, 3),
            ],
        );
        let cold = solve(&p, SolverOptions::default()).unwrap();
        for seed in [vec![0], vec![3, 2, 1, 0], vec![2], vec![9, 1]] {
            let warm = solve_warm(&p, SolverOptions::default(), &seed).unwrap();
            assert_eq!(warm.status, cold.status);
            for (a, b) in warm.u.iter().zip(&cold.u) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn perturbed_solution_fails_kkt() {
        let p = QpProblem::new(
            vec![-1.0, 0.5],
            vec![row(&[1.0, 0.0], 0.0, 0), row(&[1.0, 2.0], 0.5, 1)],
        );
        let s = solve(&p, SolverOptions::default()).unwrap();
        assert!(verify_kkt(&p, &s).max() <= 1e-12);
        for d in [[1e-3, 0.0], [-1e-3, 0.0], [0.0, 1e-3], [0.0, -1e-3]] {
            let mut bad = s.clone();
            bad.u[0] += d[0];
            bad.u[1] += d[1];
            let r = verify_kkt(&p, &bad);
            assert!(r.primal > 1e-4 || r.stationarity > 1e-4, "{d:?} {r:?}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = QpProblem::new(vec![f64::NAN], vec![]);
        assert!(solve(&p, SolverOptions::default()).is_err());
        let p = QpProblem::new(vec![0.0, 0.0], vec![row(&[1.0], 0.0, 0)]);
        assert!(matches!(solve(&p, SolverOptions::default()), Err(Error::Dimension { .. })));
        let p = QpProblem::new(vec![0.0; 4], vec![]);
        assert!(matches!(solve_bruteforce(&p), Err(Error::TooLarge(_))));
    }

    #[test]
    fn subsets_enumeration() {
        let s = subsets_up_to(4, 2);
        assert_eq!(s.len(), 1 + 4 + 6);
        assert_eq!(s[5], vec![0, 1]);
        assert_eq!(s.last().unwrap(), &vec![2, 3]);
    }

    #[test]
    fn solution_json_shape() {
        let p = QpProblem::new(vec![-1.0, 0.0], vec![row(&[1.0, 0.0], 0.0, 0)]);
        let s = solve(&p, SolverOptions::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["status"], "optimal");
        assert_eq!(v["active_set"], serde_json::json!([0]));
        let back: QpSolution = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
        let pj = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<QpProblem>(&pj).unwrap(), p);
    }
}
