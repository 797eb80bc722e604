//! Bounded-variable primal simplex on a dense tableau.
//!
//! Problems have the form `min cᵀx  s.t.  Ax = b,  l ≤ x ≤ u` with possibly
//! infinite bounds. Phase 1 minimizes the sum of one artificial per row;
//! phase 2 fixes the artificials at zero and optimizes `c`. Pricing is
//! Dantzig's rule, switching to Bland's rule after a run of degenerate pivots.
//! The basis inverse is recomputed from scratch by LU every
//! [`REFACTOR_EVERY`] pivots and before any result is reported, so primal
//! values and duals are accurate to roughly machine precision times the
//! condition number of the final basis.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const DEGENERATE_STEP: f64 = 1e-12;
const DEGENERATE_RUN: usize = 32;
pub const REFACTOR_EVERY: usize = 64;
/// Phase-1 residual (relative to `max(1, ‖b‖∞)`) above which a problem is infeasible.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// One multiplier per equality row; reduced costs are `c − Aᵀy`.
    pub duals: Vec<f64>,
    pub objective: f64,
    /// Phase-1 optimum (sum of artificial values).
    pub infeasibility: f64,
    /// Row carrying the largest artificial value when infeasible.
    pub worst_row: Option<usize>,
    pub iterations: usize,
}

impl LinearProgram {
    /// `n` variables with zero cost and bounds `[0, ∞)`.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// `min cᵀx, Ax = b, x ≥ 0`.
    pub fn from_dense(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Self {
        let mut lp = Self::new(c.len());
        lp.objective.copy_from_slice(c);
        for (row, &rhs) in a.iter().zip(b) {
            lp.add_constraint(
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v)),
                rhs,
            );
        }
        lp
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_variable(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.objective.len() - 1
    }

    pub fn set_objective(&mut self, j: usize, c: f64) {
        self.objective[j] = c;
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lower[j] = lo;
        self.upper[j] = hi;
    }

    /// Adds `Σ a_j x_j = rhs` and returns the row index. Repeated indices are summed.
    pub fn add_constraint(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> usize {
        self.rows.push(coeffs.into_iter().collect());
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::Contract(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
            if !self.objective[j].is_finite() {
                return Err(Error::Contract(format!("objective coefficient {j} is not finite")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !self.rhs[i].is_finite() {
                return Err(Error::Contract(format!("right-hand side {i} is not finite")));
            }
            for &(j, a) in row {
                if j >= n {
                    return Err(Error::Contract(format!("row {i} references variable {j} of {n}")));
                }
                if !a.is_finite() {
                    return Err(Error::Contract(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Residual `max |Ax − b|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| (row.iter().map(|&(j, a)| a * x[j]).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest bound violation of `x`.
    pub fn bound_violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, &v)| (self.lower[j] - v).max(v - self.upper[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Solves the program. Infeasibility and unboundedness are reported in the
    /// status; `Err` means the program itself is malformed.
    pub fn solve(&self) -> Result<LpSolution> {
        self.validate()?;
        Ok(Simplex::new(self).run())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic variable resting at zero.
    Zero,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    n: usize,
    cols: usize,
    /// `[diag(s) A | I]`, dense row-major.
    orig: Vec<f64>,
    rhs: Vec<f64>,
    sign: Vec<f64>,
    /// Current `B⁻¹ [sA | I]`.
    tab: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    since_refactor: usize,
}

enum Phase {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let cols = n + m;
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(f64::INFINITY, m));
        let mut state: Vec<State> = (0..n)
            .map(|j| {
                if lo[j].is_finite() {
                    State::Lower
                } else if hi[j].is_finite() {
                    State::Upper
                } else {
                    State::Zero
                }
            })
            .collect();
        state.extend(std::iter::repeat_n(State::Basic, m));

        let mut dense = vec![0.0; m * n];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in row {
                dense[i * n + j] += a;
            }
        }
        let xn: Vec<f64> = (0..n)
            .map(|j| match state[j] {
                State::Lower => lo[j],
                State::Upper => hi[j],
                _ => 0.0,
            })
            .collect();
        let mut sign = vec![1.0; m];
        for i in 0..m {
            let ax: f64 = (0..n).map(|j| dense[i * n + j] * xn[j]).sum();
            if lp.rhs[i] - ax < 0.0 {
                sign[i] = -1.0;
            }
        }
        let mut orig = vec![0.0; m * cols];
        for i in 0..m {
            for j in 0..n {
                orig[i * cols + j] = sign[i] * dense[i * n + j];
            }
            orig[i * cols + n + i] = 1.0;
        }
        let rhs: Vec<f64> = (0..m).map(|i| sign[i] * lp.rhs[i]).collect();
        let mut s = Simplex {
            lp,
            m,
            n,
            cols,
            tab: orig.clone(),
            orig,
            rhs,
            sign,
            beta: vec![0.0; m],
            basis: (n..cols).collect(),
            state,
            lo,
            hi,
            cost: vec![0.0; cols],
            d: vec![0.0; cols],
            iterations: 0,
            max_iterations: 50 * (m + cols) + 1000,
            since_refactor: 0,
        };
        s.recompute_beta();
        s
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            State::Lower => self.lo[j],
            State::Upper => self.hi[j],
            State::Zero => 0.0,
            State::Basic => unreachable!("basic variable has no fixed value"),
        }
    }

    fn recompute_beta(&mut self) {
        // beta = B⁻¹ (rhs − N x_N); tab holds B⁻¹ in the artificial block.
        let mut r = self.rhs.clone();
        for j in 0..self.cols {
            if self.state[j] == State::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v != 0.0 {
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri -= self.orig[i * self.cols + j] * v;
                }
            }
        }
        for i in 0..self.m {
            let row = &self.tab[i * self.cols + self.n..i * self.cols + self.cols];
            self.beta[i] = row.iter().zip(&r).map(|(a, b)| a * b).sum();
        }
    }

    fn recompute_duals_and_costs(&mut self) {
        let y = self.mod_duals();
        for j in 0..self.cols {
            let mut s = self.cost[j];
            for (i, yi) in y.iter().enumerate() {
                s -= yi * self.orig[i * self.cols + j];
            }
            self.d[j] = if self.state[j] == State::Basic { 0.0 } else { s };
        }
    }

    /// Duals of the sign-adjusted system: `y = c_Bᵀ B⁻¹`.
    fn mod_duals(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            for (k, yk) in y.iter_mut().enumerate() {
                *yk += cb * self.tab[i * self.cols + self.n + k];
            }
        }
        y
    }

    /// Rebuilds the tableau from the original matrix with a fresh LU of the basis.
    fn refactor(&mut self) {
        let m = self.m;
        if m > 0 {
            let basis_matrix = DMatrix::from_fn(m, m, |i, k| self.orig[i * self.cols + self.basis[k]]);
            if let Some(inv) = basis_matrix.lu().try_inverse() {
                let a = DMatrix::from_row_slice(m, self.cols, &self.orig);
                let t = inv * a;
                for i in 0..m {
                    for j in 0..self.cols {
                        self.tab[i * self.cols + j] = t[(i, j)];
                    }
                }
            }
        }
        self.recompute_beta();
        self.recompute_duals_and_costs();
        self.since_refactor = 0;
    }

    fn eligible(&self, j: usize) -> bool {
        if self.lo[j] == self.hi[j] {
            return false;
        }
        let dj = self.d[j];
        match self.state[j] {
            State::Basic => false,
            State::Lower => dj < -OPT_TOL,
            State::Upper => dj > OPT_TOL,
            State::Zero => dj.abs() > OPT_TOL,
        }
    }

    fn price(&self, bland: bool) -> Option<usize> {
        if bland {
            return (0..self.cols).find(|&j| self.eligible(j));
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols {
            if self.eligible(j) {
                let score = self.d[j].abs();
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((j, score));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn iterate(&mut self) -> Phase {
        let mut degenerate_run = 0usize;
        let mut rechecks = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Phase::IterationLimit;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
            let bland = degenerate_run > DEGENERATE_RUN;
            let q = match self.price(bland) {
                Some(q) => q,
                None => {
                    // confirm optimality against a fresh factorization
                    if self.since_refactor == 0 || rechecks >= 3 {
                        return Phase::Optimal;
                    }
                    rechecks += 1;
                    self.refactor();
                    continue;
                }
            };
            self.iterations += 1;
            let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };

            // ratio test
            let mut theta = if self.lo[q].is_finite() && self.hi[q].is_finite() {
                self.hi[q] - self.lo[q]
            } else {
                f64::INFINITY
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let alpha = self.tab[i * self.cols + q];
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let rate = -alpha * dir;
                let b = self.basis[i];
                let limit = if rate < 0.0 {
                    if !self.lo[b].is_finite() {
                        continue;
                    }
                    (self.beta[i] - self.lo[b]).max(0.0) / -rate
                } else {
                    if !self.hi[b].is_finite() {
                        continue;
                    }
                    (self.hi[b] - self.beta[i]).max(0.0) / rate
                };
                let better = match leave {
                    _ if limit < theta - 1e-13 => true,
                    Some((r, _)) if limit <= theta + 1e-13 => {
                        if bland {
                            b < self.basis[r]
                        } else {
                            alpha.abs() > self.tab[r * self.cols + q].abs()
                        }
                    }
                    None if limit <= theta + 1e-13 && limit < theta => true,
                    _ => false,
                };
                if better {
                    theta = limit.min(theta);
                    leave = Some((i, rate));
                }
            }
            if theta == f64::INFINITY {
                return Phase::Unbounded;
            }
            if theta <= DEGENERATE_STEP {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            let entering_value = self.nonbasic_value(q) + dir * theta;
            for i in 0..self.m {
                let alpha = self.tab[i * self.cols + q];
                if alpha != 0.0 {
                    self.beta[i] -= alpha * dir * theta;
                }
            }
            match leave {
                None => {
                    self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                }
                Some((r, rate)) => {
                    let b = self.basis[r];
                    self.state[b] = if rate < 0.0 { State::Lower } else { State::Upper };
                    self.state[q] = State::Basic;
                    self.basis[r] = q;
                    self.beta[r] = entering_value;
                    self.pivot(r, q);
                    self.since_refactor += 1;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let piv = self.tab[r * cols + q];
        for j in 0..cols {
            self.tab[r * cols + j] /= piv;
        }
        let pivot_row: Vec<f64> = self.tab[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.tab[i * cols + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.tab[i * cols..(i + 1) * cols];
            for (a, p) in row.iter_mut().zip(&pivot_row) {
                *a -= f * p;
            }
            row[q] = 0.0;
        }
        let dq = self.d[q];
        if dq != 0.0 {
            for (dj, p) in self.d.iter_mut().zip(&pivot_row) {
                *dj -= dq * p;
            }
        }
        self.d[q] = 0.0;
    }

    fn primal(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        for j in 0..self.cols {
            if self.state[j] != State::Basic {
                x[j] = self.nonbasic_value(j);
            }
        }
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.beta[i];
        }
        x
    }

    fn artificial_sum(&self) -> (f64, Option<usize>) {
        let x = self.primal();
        let mut total = 0.0;
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let v = x[self.n + i].max(0.0);
            total += v;
            if v > 0.0 && worst.is_none_or(|(_, w)| v > w) {
                worst = Some((i, v));
            }
        }
        (total, worst.map(|(i, _)| i))
    }

    fn solution(&self, status: LpStatus, infeasibility: f64, worst_row: Option<usize>) -> LpSolution {
        let full = self.primal();
        let mut x: Vec<f64> = full[..self.n].to_vec();
        // snap values within rounding of a finite bound
        for (j, v) in x.iter_mut().enumerate() {
            let (lo, hi) = (self.lp.lower[j], self.lp.upper[j]);
            if lo.is_finite() && *v < lo && *v > lo - 1e-11 {
                *v = lo;
            }
            if hi.is_finite() && *v > hi && *v < hi + 1e-11 {
                *v = hi;
            }
        }
        let y = self.mod_duals();
        let duals: Vec<f64> = y.iter().zip(&self.sign).map(|(v, s)| v * s).collect();
        let objective = self.lp.objective_value(&x);
        LpSolution {
            status,
            x,
            duals,
            objective,
            infeasibility,
            worst_row,
            iterations: self.iterations,
        }
    }

    fn run(mut self) -> LpSolution {
        let scale = self.lp.rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));

        // phase 1
        for j in 0..self.cols {
            self.cost[j] = if j >= self.n { 1.0 } else { 0.0 };
        }
        self.refactor();
        match self.iterate() {
            Phase::IterationLimit => return self.solution(LpStatus::IterationLimit, f64::NAN, None),
            Phase::Unbounded => unreachable!("phase 1 objective is bounded below by zero"),
            Phase::Optimal => {}
        }
        self.refactor();
        let (infeasibility, worst) = self.artificial_sum();
        if infeasibility > FEAS_TOL * scale {
            return self.solution(LpStatus::Infeasible, infeasibility, worst);
        }

        // phase 2: artificials pinned at zero
        for i in 0..self.m {
            let a = self.n + i;
            self.hi[a] = 0.0;
            if self.state[a] == State::Upper {
                self.state[a] = State::Lower;
            }
        }
        for j in 0..self.cols {
            self.cost[j] = if j < self.n { self.lp.objective[j] } else { 0.0 };
        }
        self.refactor();
        let status = match self.iterate() {
            Phase::Optimal => LpStatus::Optimal,
            Phase::Unbounded => LpStatus::Unbounded,
            Phase::IterationLimit => LpStatus::IterationLimit,
        };
        self.refactor();
        self.solution(status, infeasibility, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable_equality() {
        let lp = LinearProgram::from_dense(&[1.0], &[vec![1.0]], &[1.0]);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_simplex_optimum() {
        let lp = LinearProgram::from_dense(&[1.0, 1.0], &[vec![1.0, 1.0]], &[1.0]);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(lp.residual(&s.x) < 1e-12);
    }

    #[test]
    fn infeasible_reported_in_status() {
        // x + y = 1, x + y = 2
        let lp = LinearProgram::from_dense(&[0.0, 0.0], &[vec![1.0, 1.0], vec![1.0, 1.0]], &[1.0, 2.0]);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.infeasibility > 0.5);
        assert!(s.worst_row.is_some());
    }

    #[test]
    fn unbounded_reported_in_status() {
        // min -x, x - y = 0
        let lp = LinearProgram::from_dense(&[-1.0, 0.0], &[vec![1.0, -1.0]], &[0.0]);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn bounded_and_free_variables() {
        // min -x - 2y  s.t. x + y + z = 3, x in [0, 1], y in [-1, 1.5], z free with cost |.| via bounds [0, inf)
        let mut lp = LinearProgram::new(0);
        let x = lp.add_variable(-1.0, 0.0, 1.0);
        let y = lp.add_variable(-2.0, -1.0, 1.5);
        let z = lp.add_variable(0.0, 0.0, f64::INFINITY);
        lp.add_constraint([(x, 1.0), (y, 1.0), (z, 1.0)], 3.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 4.0).abs() < 1e-12);
        assert!((s.x[x] - 1.0).abs() < 1e-12 && (s.x[y] - 1.5).abs() < 1e-12);

        // free variable: min w s.t. w - v = -2, v in [0, 1]  => w = -2
        let mut lp = LinearProgram::new(0);
        let w = lp.add_variable(1.0, f64::NEG_INFINITY, f64::INFINITY);
        let v = lp.add_variable(0.0, 0.0, 1.0);
        lp.add_constraint([(w, 1.0), (v, -1.0)], -2.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[w] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn duals_satisfy_reduced_cost_signs() {
        // small transport: 2x2
        let c = [1.0, 3.0, 2.0, 1.0];
        let a = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
        ];
        let b = [0.5, 0.5, 0.5, 0.5];
        let lp = LinearProgram::from_dense(&c, &a, &b);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-12);
        for j in 0..4 {
            let red = c[j] - (0..4).map(|i| a[i][j] * s.duals[i]).sum::<f64>();
            assert!(red >= -1e-10);
            if s.x[j] > 1e-10 {
                assert!(red.abs() < 1e-10);
            }
        }
        let dual_obj: f64 = s.duals.iter().zip(&b).map(|(y, b)| y * b).sum();
        assert!((dual_obj - s.objective).abs() < 1e-12);
    }

    #[test]
    fn malformed_program_is_an_error() {
        let mut lp = LinearProgram::new(1);
        lp.set_bounds(0, 2.0, 1.0);
        assert!(lp.solve().is_err());
        let mut lp = LinearProgram::new(1);
        lp.add_constraint([(3, 1.0)], 0.0);
        assert!(lp.solve().is_err());
    }

    #[test]
    fn identical_input_identical_output() {
        let lp = LinearProgram::from_dense(
            &[1.0, 1.0, 1.0, 1.0],
            &[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0, 0.0]],
            &[0.5, 0.5, 0.5],
        );
        let a = lp.solve().unwrap();
        let b = lp.solve().unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.duals, b.duals);
    }
}
