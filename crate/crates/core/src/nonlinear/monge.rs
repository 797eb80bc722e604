//! Monge problem with a convex-dominance constraint:
//! minimize `Σ μ_i h(x_i, u_i)` over `u` with `Σ μ_i δ_{u_i} ⪯_c ν∘F⁻¹`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::convex_order::PotentialFunction1D;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus};
use crate::martingale::{coupling_lp, CouplingOutcome, MongeMap};
use crate::measures::{DiscreteMeasure, MomentMap, Point};
use crate::transport::MARGINAL_TOL;

use super::cost::{CostKind, CostSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MongeMethod {
    /// Cutting planes when `d = 1` and `h` is convex in `u`, local search otherwise.
    Auto,
    CuttingPlane,
    LocalSearch,
}

#[derive(Clone, Debug)]
pub struct MongeOptions {
    pub method: MongeMethod,
    pub max_iters: usize,
    /// Feasibility tolerance on the potential and mean constraints.
    pub tol: f64,
    /// Relative optimality gap for the cutting-plane path.
    pub gap_tol: f64,
    /// Candidate `u` values for local search; defaults to the atoms of `ν∘F⁻¹` and its mean.
    pub grid: Option<Vec<Point>>,
    pub warm_starts: Vec<MongeMap>,
    pub restarts: usize,
    pub seed: u64,
    /// Largest grid search space enumerated exhaustively.
    pub exhaustive_limit: usize,
}

impl Default for MongeOptions {
    fn default() -> Self {
        Self {
            method: MongeMethod::Auto,
            max_iters: 200,
            tol: 1e-9,
            gap_tol: 1e-7,
            grid: None,
            warm_starts: Vec::new(),
            restarts: 4,
            seed: 0,
            exhaustive_limit: 1_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MongeSolution {
    pub map: MongeMap,
    pub value: f64,
    /// Cutting planes: gap closed. Local search: a local optimum was reached in budget.
    pub converged: bool,
    pub method: MongeMethod,
    pub iterations: usize,
    /// Certified lower bound from the cutting-plane relaxation.
    pub lower_bound: Option<f64>,
    /// Whether exhaustive grid enumeration was run as a cross-check.
    pub exhaustive: bool,
}

/// Solves the Monge problem with convex dominance against `ν∘F⁻¹`.
pub fn solve_monge_cd(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    f: &MomentMap,
    h: &CostSpec,
    opts: &MongeOptions,
) -> Result<MongeSolution> {
    h.require(CostKind::Xu)?;
    let rho = nu.pushforward(f)?;
    if (mu.total_mass() - rho.total_mass()).abs() > MARGINAL_TOL {
        return Err(Error::Balance { left: mu.total_mass(), right: rho.total_mass() });
    }
    let method = match opts.method {
        MongeMethod::Auto if rho.dim() == 1 && h.is_convex() => MongeMethod::CuttingPlane,
        MongeMethod::Auto => MongeMethod::LocalSearch,
        m => m,
    };
    match method {
        MongeMethod::CuttingPlane => {
            if rho.dim() != 1 {
                return Err(Error::Dimension { expected: 1, found: rho.dim() });
            }
            cutting_plane(mu, &rho, h, opts)
        }
        _ => local_search(mu, &rho, h, opts),
    }
}

fn cost_of(mu: &DiscreteMeasure, h: &CostSpec, u: &[Point]) -> Result<f64> {
    let mut total = 0.0;
    for ((x, w), ui) in mu.iter().zip(u) {
        total += w * h.eval_xu(x, ui)?;
    }
    Ok(total)
}

/// Largest violation of `Σ w_i |u_i − k| ≤ u_ρ(k)` over the kinks of both sides.
fn potential_violation(w: &[f64], u: &[f64], pot: &PotentialFunction1D) -> (f64, f64) {
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for &k in pot.kinks().iter().chain(u) {
        let lhs: f64 = w.iter().zip(u).map(|(a, b)| a * (b - k).abs()).sum();
        let v = lhs - pot.eval(k);
        if v > worst.0 {
            worst = (v, k);
        }
    }
    worst
}

/// Kelley's method: the objective is replaced by tangent cuts, the dominance
/// constraint by linearizations of the potential inequalities at violated
/// kinks, and the mean is fixed exactly.
fn cutting_plane(mu: &DiscreteMeasure, rho: &DiscreteMeasure, h: &CostSpec, opts: &MongeOptions) -> Result<MongeSolution> {
    let n = mu.len();
    let w = mu.weights();
    let pot = PotentialFunction1D::new(rho)?;
    let lo = pot.kinks()[0];
    let hi = *pot.kinks().last().expect("nonempty");
    let mean = rho.mean().coords()[0];
    let mass: f64 = w.iter().sum();

    let mut tangents: Vec<(usize, f64, f64)> = Vec::new();
    let add_tangent = |tangents: &mut Vec<(usize, f64, f64)>, i: usize, at: f64| -> Result<()> {
        let x = &mu.atoms()[i];
        let p = Point::scalar(at);
        let val = h.eval_xu(x, &p)?;
        let g = h.gradient_u(x, &p)?[0];
        tangents.push((i, g, val - g * at));
        Ok(())
    };
    for i in 0..n {
        for at in [lo, mean, hi] {
            add_tangent(&mut tangents, i, at)?;
        }
    }
    let mut cuts: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let mut lp = LinearProgram::new(0);
        let u: Vec<usize> = (0..n).map(|_| lp.add_variable(0.0, lo, hi)).collect();
        let z: Vec<usize> = (0..n).map(|i| lp.add_variable(w[i], f64::NEG_INFINITY, f64::INFINITY)).collect();
        lp.add_constraint((0..n).map(|i| (u[i], w[i])), mean * mass);
        for &(i, g, c) in &tangents {
            let s = lp.add_variable(0.0, 0.0, f64::INFINITY);
            lp.add_constraint([(z[i], 1.0), (u[i], -g), (s, -1.0)], c);
        }
        for (signs, k) in &cuts {
            let s = lp.add_variable(0.0, 0.0, f64::INFINITY);
            let mut row: Vec<(usize, f64)> = (0..n)
                .filter(|&i| signs[i] != 0.0)
                .map(|i| (u[i], w[i] * signs[i]))
                .collect();
            row.push((s, 1.0));
            let rhs = pot.eval(*k) + k * (0..n).map(|i| w[i] * signs[i]).sum::<f64>();
            lp.add_constraint(row, rhs);
        }
        let sol = lp.solve()?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::IterationLimit => return Err(Error::NoConvergence { iterations: sol.iterations }),
            s => return Err(Error::Contract(format!("cutting-plane master ended with status {s:?}"))),
        }
        let us: Vec<f64> = u.iter().map(|&v| sol.x[v]).collect();
        let zs: Vec<f64> = z.iter().map(|&v| sol.x[v]).collect();
        lower = lower.max(sol.objective);

        let (viol, _) = potential_violation(w, &us, &pot);
        let mut hv = Vec::with_capacity(n);
        for i in 0..n {
            hv.push(h.eval_xu(&mu.atoms()[i], &Point::scalar(us[i]))?);
        }
        if viol <= opts.tol {
            let val: f64 = w.iter().zip(&hv).map(|(a, b)| a * b).sum();
            if best.as_ref().is_none_or(|(b, _)| val < *b) {
                best = Some((val, us.clone()));
            }
        }
        if let Some((b, _)) = &best {
            if viol <= opts.tol && b - lower <= opts.gap_tol * (1.0 + b.abs()) {
                converged = true;
                break;
            }
        }
        let mut added = false;
        if viol > opts.tol {
            for &kink in pot.kinks().iter().chain(&us) {
                let lhs: f64 = w.iter().zip(&us).map(|(a, b)| a * (b - kink).abs()).sum();
                if lhs - pot.eval(kink) <= opts.tol {
                    continue;
                }
                let signs: Vec<f64> = us
                    .iter()
                    .map(|&v| if v > kink { 1.0 } else if v < kink { -1.0 } else { 0.0 })
                    .collect();
                if !cuts.iter().any(|(s, k)| *k == kink && *s == signs) {
                    cuts.push((signs, kink));
                    added = true;
                }
            }
        }
        for i in 0..n {
            if hv[i] - zs[i] > 1e-12 * (1.0 + hv[i].abs()) {
                add_tangent(&mut tangents, i, us[i])?;
                added = true;
            }
        }
        if !added {
            converged = best.is_some();
            break;
        }
    }
    let (value, u) = match best {
        Some(b) => b,
        None => {
            let u = vec![mean; n];
            (cost_of(mu, h, &u.iter().map(|&v| Point::scalar(v)).collect::<Vec<_>>())?, u)
        }
    };
    Ok(MongeSolution {
        map: MongeMap::from_scalars(&u)?,
        value,
        converged,
        method: MongeMethod::CuttingPlane,
        iterations,
        lower_bound: Some(lower),
        exhaustive: false,
    })
}

/// Feasibility of `Σ w_i δ_{u_i} ⪯_c ρ` without building a certificate.
fn dominated(w: &[f64], u: &[Point], rho: &DiscreteMeasure, pot: Option<&PotentialFunction1D>, tol: f64) -> Result<bool> {
    let mass: f64 = w.iter().sum();
    let d = rho.dim();
    let mut mean = vec![0.0; d];
    for (wi, ui) in w.iter().zip(u) {
        for (m, c) in mean.iter_mut().zip(ui.coords()) {
            *m += wi * c;
        }
    }
    let target = rho.mean();
    if mean.iter().zip(target.coords()).any(|(a, b)| (a / mass - b).abs() > tol) {
        return Ok(false);
    }
    if let Some(pot) = pot {
        let us: Vec<f64> = u.iter().map(|p| p.coords()[0]).collect();
        return Ok(potential_violation(w, &us, pot).0 <= tol);
    }
    let emp = DiscreteMeasure::new(u.to_vec(), w.to_vec())?;
    if emp.sup_diff(rho) == 0.0 {
        return Ok(true);
    }
    Ok(matches!(coupling_lp(&emp, rho.weights(), rho.atoms())?, CouplingOutcome::Feasible(_)))
}

fn lex_less(a: &[Point], b: &[Point]) -> bool {
    for (p, q) in a.iter().zip(b) {
        match p.lex_cmp(q) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            _ => {}
        }
    }
    false
}

struct Best {
    value: f64,
    u: Vec<Point>,
}

impl Best {
    fn offer(&mut self, value: f64, u: &[Point]) {
        if value < self.value - 1e-15 || (value <= self.value + 1e-15 && lex_less(u, &self.u)) {
            self.value = value;
            self.u = u.to_vec();
        }
    }
}

fn local_search(mu: &DiscreteMeasure, rho: &DiscreteMeasure, h: &CostSpec, opts: &MongeOptions) -> Result<MongeSolution> {
    let n = mu.len();
    let w = mu.weights().to_vec();
    let d = rho.dim();
    let pot = if d == 1 { Some(PotentialFunction1D::new(rho)?) } else { None };
    let mut grid: Vec<Point> = match &opts.grid {
        Some(g) => g.clone(),
        None => {
            let mut g = rho.atoms().to_vec();
            g.push(rho.mean());
            g
        }
    };
    grid.sort_by(|a, b| a.lex_cmp(b));
    grid.dedup();
    if grid.iter().any(|g| g.dim() != d) {
        return Err(Error::Dimension { expected: d, found: grid.iter().find(|g| g.dim() != d).unwrap().dim() });
    }

    let mean_map = vec![rho.mean(); n];
    let mut best = Best { value: cost_of(mu, h, &mean_map)?, u: mean_map.clone() };
    let mut starts = vec![mean_map];
    for ws in &opts.warm_starts {
        if ws.len() != n || ws.dim() != d {
            return Err(Error::Dimension { expected: n, found: ws.len() });
        }
        if dominated(&w, ws.values(), rho, pot.as_ref(), opts.tol)? {
            starts.push(ws.values().to_vec());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        for _ in 0..64 {
            let u: Vec<Point> = (0..n).map(|_| grid[rng.gen_range(0..grid.len())].clone()).collect();
            if dominated(&w, &u, rho, pot.as_ref(), opts.tol)? {
                starts.push(u);
                break;
            }
        }
    }

    let budget = opts.max_iters.max(1) * n.max(1) * n.max(1) * 8;
    let mut evaluations = 0usize;
    let mut all_local = true;
    for start in starts {
        let (u, local) = descend(mu, h, &w, rho, pot.as_ref(), &grid, start, opts.tol, budget, &mut evaluations)?;
        all_local &= local;
        best.offer(cost_of(mu, h, &u)?, &u);
    }

    let space = (grid.len() as f64).powi(n as i32);
    let limit = if d == 1 { opts.exhaustive_limit } else { opts.exhaustive_limit.min(20_000) };
    let exhaustive = space <= limit as f64;
    if exhaustive {
        enumerate(mu, h, &w, rho, pot.as_ref(), &grid, opts.tol, &mut best)?;
    }
    Ok(MongeSolution {
        map: MongeMap::new(best.u)?,
        value: best.value,
        converged: all_local || exhaustive,
        method: MongeMethod::LocalSearch,
        iterations: evaluations,
        lower_bound: None,
        exhaustive,
    })
}

/// First-improvement descent with equal-weight swaps and mean-preserving
/// pair transfers toward grid values. Returns the final point and whether it
/// is a local optimum (as opposed to stopping on the evaluation budget).
#[allow(clippy::too_many_arguments)]
fn descend(
    mu: &DiscreteMeasure,
    h: &CostSpec,
    w: &[f64],
    rho: &DiscreteMeasure,
    pot: Option<&PotentialFunction1D>,
    grid: &[Point],
    mut u: Vec<Point>,
    tol: f64,
    budget: usize,
    evaluations: &mut usize,
) -> Result<(Vec<Point>, bool)> {
    let n = u.len();
    let xs = mu.atoms();
    let mut hv: Vec<f64> = (0..n).map(|i| h.eval_xu(&xs[i], &u[i])).collect::<Result<_>>()?;
    const NEAREST: usize = 6;
    loop {
        let mut improved = false;
        for i in 0..n {
            for j in i + 1..n {
                if w[i] != w[j] {
                    continue;
                }
                *evaluations += 1;
                let a = h.eval_xu(&xs[i], &u[j])?;
                let b = h.eval_xu(&xs[j], &u[i])?;
                if w[i] * (a + b - hv[i] - hv[j]) < -1e-15 {
                    u.swap(i, j);
                    hv[i] = a;
                    hv[j] = b;
                    improved = true;
                }
            }
        }
        for i in 0..n {
            let mut near: Vec<&Point> = grid.iter().filter(|g| **g != u[i]).collect();
            near.sort_by(|a, b| a.sup_dist(&u[i]).total_cmp(&b.sup_dist(&u[i])));
            near.truncate(NEAREST);
            for g in near {
                for j in 0..n {
                    if j == i || w[j] == 0.0 {
                        continue;
                    }
                    *evaluations += 1;
                    if *evaluations > budget {
                        return Ok((u, false));
                    }
                    let shift: Vec<f64> = g.coords().iter().zip(u[i].coords()).map(|(a, b)| w[i] * (a - b) / w[j]).collect();
                    let uj = Point::from_slice(&u[j].coords().iter().zip(&shift).map(|(a, s)| a - s).collect::<Vec<_>>());
                    let hi = h.eval_xu(&xs[i], g)?;
                    let hj = h.eval_xu(&xs[j], &uj)?;
                    if w[i] * (hi - hv[i]) + w[j] * (hj - hv[j]) >= -1e-15 {
                        continue;
                    }
                    let mut cand = u.clone();
                    cand[i] = g.clone();
                    cand[j] = uj;
                    if dominated(w, &cand, rho, pot, tol)? {
                        u = cand;
                        hv[i] = hi;
                        hv[j] = hj;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            return Ok((u, true));
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    mu: &DiscreteMeasure,
    h: &CostSpec,
    w: &[f64],
    rho: &DiscreteMeasure,
    pot: Option<&PotentialFunction1D>,
    grid: &[Point],
    tol: f64,
    best: &mut Best,
) -> Result<()> {
    let n = mu.len();
    let g = grid.len();
    // h(x_i, grid_c) table
    let mut table = vec![0.0; n * g];
    for i in 0..n {
        for c in 0..g {
            table[i * g + c] = h.eval_xu(&mu.atoms()[i], &grid[c])?;
        }
    }
    let mut idx = vec![0usize; n];
    loop {
        let value: f64 = (0..n).map(|i| w[i] * table[i * g + idx[i]]).sum();
        if value <= best.value + 1e-15 {
            let u: Vec<Point> = idx.iter().map(|&c| grid[c].clone()).collect();
            if dominated(w, &u, rho, pot, tol)? {
                best.offer(value, &u);
            }
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(());
            }
            idx[pos] += 1;
            if idx[pos] < g {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_scalars(xs, ws).unwrap()
    }

    fn sq() -> CostSpec {
        CostSpec::from_json_str(r#"{"kind":"xu","name":"squared_diff"}"#).unwrap()
    }

    #[test]
    fn dirac_source_forces_the_mean() {
        let nu = d(&[-1.0, 0.0, 3.0], &[0.25, 0.25, 0.5]);
        let mu = d(&[0.7], &[1.0]);
        let f = MomentMap::identity(1);
        let s = solve_monge_cd(&mu, &nu, &f, &sq(), &MongeOptions::default()).unwrap();
        assert!(s.converged);
        assert!((s.map.get(0).coords()[0] - 1.25).abs() < 1e-9);
        assert!((s.value - (0.7f64 - 1.25).powi(2)).abs() < 1e-9);

        let opts = MongeOptions { method: MongeMethod::LocalSearch, ..Default::default() };
        let s = solve_monge_cd(&mu, &nu, &f, &sq(), &opts).unwrap();
        assert!((s.value - (0.7f64 - 1.25).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn identity_is_optimal_when_source_equals_target() {
        let nu = d(&[0.0, 1.0, 2.0], &[0.25, 0.5, 0.25]);
        let s = solve_monge_cd(&nu, &nu, &MomentMap::identity(1), &sq(), &MongeOptions::default()).unwrap();
        assert!(s.converged);
        assert!(s.value < 1e-7);
    }

    #[test]
    fn cutting_plane_bounds_bracket_the_value() {
        let nu = d(&[-1.0, 0.0, 2.0], &[0.3, 0.3, 0.4]);
        let mu = d(&[-2.0, 1.5], &[0.5, 0.5]);
        let s = solve_monge_cd(&mu, &nu, &MomentMap::identity(1), &sq(), &MongeOptions::default()).unwrap();
        assert!(s.converged);
        let lb = s.lower_bound.unwrap();
        assert!(lb <= s.value + 1e-12 && s.value - lb <= 1e-6);
        let emp = s.map.image(&mu).unwrap();
        assert!(crate::convex_order::check_convex_order_1d_tol(&emp, &nu, 1e-8).unwrap().is_dominated());
    }
}
