//! Classical discrete transport, the Kantorovich–Rubinshtein norm, the
//! distance from a measure to a segment of measures, and the strong
//! `h`-monotonicity check on dual potentials.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus};
use crate::measures::{AtomIndex, DiscreteMeasure, Point, MERGE_TOL};

/// Marginal tolerance shared by plans and transport inputs.
pub const MARGINAL_TOL: f64 = 1e-9;
/// Tolerance on `φ_i + ψ_j ≤ c_ij` and on equality over the support.
pub const MONOTONE_TOL: f64 = 1e-8;
/// Plan entries above this count as support.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Dense `n × m` matrix of finite costs `h(x_i, y_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension { expected: rows * cols, found: data.len() });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("cost entry ({}, {}) is not finite", k / cols.max(1), k % cols.max(1))));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Euclidean distance between atoms.
    pub fn distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        if mu.dim() != nu.dim() {
            return Err(Error::Dimension { expected: mu.dim(), found: nu.dim() });
        }
        Self::from_fn(mu.len(), nu.len(), |i, j| mu.atoms()[i].dist(&nu.atoms()[j]))
    }

    /// Parses header-free, comma-separated, row-major text.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut count = 0;
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: cannot parse {:?} as a number", ln + 1, field.trim())))?;
                data.push(v);
                count += 1;
            }
            match cols {
                None => cols = Some(count),
                Some(c) if c != count => {
                    return Err(Error::Parse(format!("line {}: expected {c} fields, found {count}", ln + 1)))
                }
                _ => {}
            }
            rows += 1;
        }
        let cols = cols.ok_or_else(|| Error::Parse("empty cost matrix".into()))?;
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Coupling of a row measure and a column measure, optionally carrying dual potentials.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    weights: Vec<f64>,
    phi: Option<Vec<f64>>,
    psi: Option<Vec<f64>>,
}

/// JSON shape of a plan: `{"weights": [[...]], "phi": [...], "psi": [...], "value": v}`.
#[derive(Serialize)]
pub struct PlanJson<'a> {
    pub weights: Vec<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl TransportPlan {
    /// Builds a plan from row-major weights. Entries in `[-1e-12, 0)` are
    /// clamped to zero; marginals must match within [`MARGINAL_TOL`].
    pub fn new(mu: DiscreteMeasure, nu: DiscreteMeasure, mut weights: Vec<f64>) -> Result<Self> {
        let (n, m) = (mu.len(), nu.len());
        if weights.len() != n * m {
            return Err(Error::Dimension { expected: n * m, found: weights.len() });
        }
        for w in weights.iter_mut() {
            if !w.is_finite() || *w < -1e-12 {
                return Err(Error::Contract(format!("plan weight {w} is negative or not finite")));
            }
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let plan = Self { mu, nu, weights, phi: None, psi: None };
        let defect = plan.marginal_defect();
        if defect > MARGINAL_TOL {
            return Err(Error::Contract(format!("plan marginals off by {defect:e}")));
        }
        Ok(plan)
    }

    pub fn with_duals(mut self, phi: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        if phi.len() != self.mu.len() {
            return Err(Error::Dimension { expected: self.mu.len(), found: phi.len() });
        }
        if psi.len() != self.nu.len() {
            return Err(Error::Dimension { expected: self.nu.len(), found: psi.len() });
        }
        self.phi = Some(phi);
        self.psi = Some(psi);
        Ok(self)
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn rows(&self) -> usize {
        self.mu.len()
    }

    pub fn cols(&self) -> usize {
        self.nu.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.nu.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.nu.len();
        &self.weights[i * m..(i + 1) * m]
    }

    pub fn phi(&self) -> Option<&[f64]> {
        self.phi.as_deref()
    }

    pub fn psi(&self) -> Option<&[f64]> {
        self.psi.as_deref()
    }

    /// `max(max_i |Σ_j π_ij − μ_i|, max_j |Σ_i π_ij − ν_j|)`.
    pub fn marginal_defect(&self) -> f64 {
        let m = self.nu.len();
        let mut cols = vec![0.0; m];
        let mut defect: f64 = 0.0;
        for (i, &mi) in self.mu.weights().iter().enumerate() {
            let row = &self.weights[i * m..(i + 1) * m];
            defect = defect.max((row.iter().sum::<f64>() - mi).abs());
            for (c, w) in cols.iter_mut().zip(row) {
                *c += w;
            }
        }
        cols.iter().zip(self.nu.weights()).fold(defect, |d, (c, n)| d.max((c - n).abs()))
    }

    pub fn cost(&self, c: &CostMatrix) -> f64 {
        self.weights.iter().zip(c.data()).map(|(w, c)| w * c).sum()
    }

    /// `Σφ_iμ_i + Σψ_jν_j` when duals are present.
    pub fn dual_value(&self) -> Option<f64> {
        let phi = self.phi.as_ref()?;
        let psi = self.psi.as_ref()?;
        Some(
            phi.iter().zip(self.mu.weights()).map(|(a, b)| a * b).sum::<f64>()
                + psi.iter().zip(self.nu.weights()).map(|(a, b)| a * b).sum::<f64>(),
        )
    }

    pub fn json(&self, value: Option<f64>) -> PlanJson<'_> {
        let m = self.nu.len().max(1);
        PlanJson {
            weights: self.weights.chunks(m).collect(),
            phi: self.phi.as_deref(),
            psi: self.psi.as_deref(),
            value,
        }
    }
}

/// Optimal plan for cost `c` between `mu` and `nu`, with dual potentials.
pub fn solve_transport(c: &CostMatrix, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TransportPlan> {
    let (n, m) = (mu.len(), nu.len());
    if c.rows() != n {
        return Err(Error::Dimension { expected: n, found: c.rows() });
    }
    if c.cols() != m {
        return Err(Error::Dimension { expected: m, found: c.cols() });
    }
    if (mu.total_mass() - nu.total_mass()).abs() > MARGINAL_TOL {
        return Err(Error::Balance { left: mu.total_mass(), right: nu.total_mass() });
    }
    let mut lp = LinearProgram::new(n * m);
    for (k, &v) in c.data().iter().enumerate() {
        lp.set_objective(k, v);
    }
    for i in 0..n {
        lp.add_constraint((0..m).map(|j| (i * m + j, 1.0)), mu.weights()[i]);
    }
    for j in 0..m {
        lp.add_constraint((0..n).map(|i| (i * m + j, 1.0)), nu.weights()[j]);
    }
    let sol = lp.solve()?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            let row = sol.worst_row.unwrap_or(0);
            return Err(Error::Infeasible {
                constraint: row,
                label: marginal_label(row, n),
                residual: sol.infeasibility,
            });
        }
        LpStatus::Unbounded => return Err(Error::Unbounded),
        LpStatus::IterationLimit => return Err(Error::NoConvergence { iterations: sol.iterations }),
    }
    let phi = sol.duals[..n].to_vec();
    let psi = sol.duals[n..].to_vec();
    TransportPlan::new(mu.clone(), nu.clone(), sol.x)?.with_duals(phi, psi)
}

fn marginal_label(row: usize, n: usize) -> String {
    if row < n {
        format!("row marginal {row}")
    } else {
        format!("column marginal {}", row - n)
    }
}

/// True iff `φ_i + ψ_j ≤ c_ij + 1e-8` everywhere and equality holds within
/// `1e-8` wherever `π_ij > 1e-10`.
pub fn verify_strong_monotonicity(plan: &TransportPlan, c: &CostMatrix) -> Result<bool> {
    let (phi, psi) = match (plan.phi(), plan.psi()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Contract("plan carries no dual potentials".into())),
    };
    if c.rows() != plan.rows() || c.cols() != plan.cols() {
        return Err(Error::Dimension { expected: plan.rows() * plan.cols(), found: c.rows() * c.cols() });
    }
    for i in 0..plan.rows() {
        for j in 0..plan.cols() {
            let gap = c.get(i, j) - phi[i] - psi[j];
            if gap < -MONOTONE_TOL {
                return Ok(false);
            }
            if plan.weight(i, j) > SUPPORT_TOL && gap.abs() > MONOTONE_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Sorted union of atoms of several measures together with each measure's
/// weights on that union.
struct Union {
    atoms: Vec<Point>,
    weights: Vec<Vec<f64>>,
}

fn union_support(measures: &[&DiscreteMeasure]) -> Result<Union> {
    let dim = measures
        .iter()
        .find(|m| !m.is_empty())
        .map(|m| m.dim())
        .ok_or_else(|| Error::Domain("empty support".into()))?;
    let mut all: Vec<Point> = Vec::new();
    for m in measures {
        if !m.is_empty() && m.dim() != dim {
            return Err(Error::Dimension { expected: dim, found: m.dim() });
        }
        all.extend(m.atoms().iter().cloned());
    }
    all.sort_by(|a, b| a.lex_cmp(b));
    let mut atoms: Vec<Point> = Vec::with_capacity(all.len());
    for p in all {
        if atoms.last().is_none_or(|q| q.sup_dist(&p) > MERGE_TOL) {
            atoms.push(p);
        }
    }
    let index = AtomIndex::new(&atoms);
    let mut weights = Vec::with_capacity(measures.len());
    for m in measures {
        let mut w = vec![0.0; atoms.len()];
        for (a, wa) in m.iter() {
            let k = index
                .find(a, MERGE_TOL)
                .ok_or_else(|| Error::Contract("atom missing from union support".into()))?;
            w[k] += wa;
        }
        weights.push(w);
    }
    Ok(Union { atoms, weights })
}

fn cmp_measures(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        for ((pa, wa), (pb, wb)) in a.iter().zip(b.iter()) {
            let o = pa
                .coords()
                .iter()
                .zip(pb.coords())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
                .then(wa.total_cmp(&wb));
            if o.is_ne() {
                return o;
            }
        }
        Ordering::Equal
    })
}

/// Optimal Lipschitz test function from the KR dual LP, on the union support.
#[derive(Clone, Debug)]
pub struct KrWitness {
    pub value: f64,
    pub atoms: Vec<Point>,
    /// `f(atom)`; `|f| ≤ 1` and `|f(a) − f(b)| ≤ |a − b|`.
    pub f: Vec<f64>,
}

/// `sup{∫f d(p−q) : |f(a) − f(b)| ≤ |a − b|, |f| ≤ 1}`.
pub fn kr_norm(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    Ok(kr_norm_with_witness(p, q)?.value)
}

/// [`kr_norm`] together with the maximizing function. The pair is put in a
/// canonical order first so that swapping the arguments solves the same LP and
/// the value is exactly symmetric.
pub fn kr_norm_with_witness(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<KrWitness> {
    let flipped = cmp_measures(p, q) == Ordering::Greater;
    let (a, b) = if flipped { (q, p) } else { (p, q) };
    let u = union_support(&[a, b])?;
    let k = u.atoms.len();
    let mut lp = LinearProgram::new(0);
    for i in 0..k {
        lp.add_variable(-(u.weights[0][i] - u.weights[1][i]), -1.0, 1.0);
    }
    for (s, t) in lipschitz_pairs(&u.atoms) {
        let d = u.atoms[s].dist(&u.atoms[t]);
        let r = lp.add_variable(0.0, -d, d);
        lp.add_constraint([(s, 1.0), (t, -1.0), (r, -1.0)], 0.0);
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Contract(format!("KR dual LP ended with status {:?}", sol.status)));
    }
    let mut f = sol.x[..k].to_vec();
    if flipped {
        f.iter_mut().for_each(|v| *v = -*v);
    }
    let value = (-sol.objective).clamp(0.0, 2.0);
    Ok(KrWitness { value, atoms: u.atoms, f })
}

/// Pairs whose Lipschitz constraints imply all others: consecutive atoms on a
/// line, every pair otherwise.
fn lipschitz_pairs(atoms: &[Point]) -> Vec<(usize, usize)> {
    let k = atoms.len();
    if atoms.first().is_none_or(|a| a.dim() == 1) {
        (1..k).map(|i| (i - 1, i)).collect()
    } else {
        (0..k).flat_map(|s| (s + 1..k).map(move |t| (s, t))).collect()
    }
}

/// Result of minimizing a distance along the segment `t·e0 + (1−t)·e1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentDistance {
    pub value: f64,
    /// Weight of `e0` at the minimizer.
    pub t: f64,
}

/// `min_{t∈[0,1]} ‖p − (t·e0 + (1−t)·e1)‖_KR`, solved as one LP in which `t`
/// enters the flow-conservation constraints affinely.
pub fn kr_to_segment(p: &DiscreteMeasure, e0: &DiscreteMeasure, e1: &DiscreteMeasure) -> Result<SegmentDistance> {
    let u = union_support(&[p, e0, e1])?;
    let k = u.atoms.len();
    let mut lp = LinearProgram::new(0);
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for (a, b) in lipschitz_pairs(&u.atoms) {
        let d = u.atoms[a].dist(&u.atoms[b]);
        let fwd = lp.add_variable(d, 0.0, f64::INFINITY);
        let back = lp.add_variable(d, 0.0, f64::INFINITY);
        rows[a].push((fwd, 1.0));
        rows[b].push((fwd, -1.0));
        rows[b].push((back, 1.0));
        rows[a].push((back, -1.0));
    }
    for row in rows.iter_mut() {
        let plus = lp.add_variable(1.0, 0.0, f64::INFINITY);
        let minus = lp.add_variable(1.0, 0.0, f64::INFINITY);
        row.push((plus, 1.0));
        row.push((minus, -1.0));
    }
    let t = lp.add_variable(0.0, 0.0, 1.0);
    for (i, mut row) in rows.into_iter().enumerate() {
        let (pw, w0, w1) = (u.weights[0][i], u.weights[1][i], u.weights[2][i]);
        if w0 != w1 {
            row.push((t, w0 - w1));
        }
        lp.add_constraint(row, pw - w1);
    }
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Contract(format!("segment LP ended with status {:?}", sol.status)));
    }
    Ok(SegmentDistance { value: sol.objective.max(0.0), t: sol.x[t] })
}

/// Exact one-dimensional route for [`kr_to_segment`].
///
/// When all three measures have the same mass and the union support has
/// diameter at most 2, the bound `|f| ≤ 1` is inactive and the KR norm equals
/// `W₁ = Σ_k gap_k |D_k(t)|` with `D_k` affine in `t`; its minimum over
/// `[0, 1]` is a clamped weighted median. Other inputs fall back to the LP.
pub fn kr_to_segment_1d(p: &DiscreteMeasure, e0: &DiscreteMeasure, e1: &DiscreteMeasure) -> Result<SegmentDistance> {
    for m in [p, e0, e1] {
        if !m.is_empty() && m.dim() != 1 {
            return Err(Error::Dimension { expected: 1, found: m.dim() });
        }
    }
    let u = union_support(&[p, e0, e1])?;
    let z: Vec<f64> = u.atoms.iter().map(|a| a.coords()[0]).collect();
    let balanced = (p.total_mass() - e0.total_mass()).abs() <= MARGINAL_TOL
        && (p.total_mass() - e1.total_mass()).abs() <= MARGINAL_TOL;
    let diameter = z.last().unwrap_or(&0.0) - z.first().unwrap_or(&0.0);
    if !balanced || diameter > 2.0 {
        return kr_to_segment(p, e0, e1);
    }
    Ok(segment_distance_on_line(&z, &u.weights[0], &u.weights[1], &u.weights[2]))
}

/// `min_{t∈[0,1]} Σ_k (z_{k+1} − z_k) |A_k − t·B_k|` where `A`, `B` are the
/// cumulative sums of `p − e1` and `e0 − e1` over sorted points `z`.
///
/// Equals the minimal `W₁` distance from `p` to the segment for balanced
/// measures on a line.
pub fn segment_distance_on_line(z: &[f64], p: &[f64], e0: &[f64], e1: &[f64]) -> SegmentDistance {
    let k = z.len();
    let mut terms: Vec<(f64, f64, f64)> = Vec::with_capacity(k.saturating_sub(1));
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..k.saturating_sub(1) {
        a += p[i] - e1[i];
        b += e0[i] - e1[i];
        terms.push((z[i + 1] - z[i], a, b));
    }
    let eval = |t: f64| terms.iter().map(|&(g, a, b)| g * (a - t * b).abs()).sum::<f64>();

    let mut knots: Vec<(f64, f64)> = terms
        .iter()
        .filter(|&&(g, _, b)| b != 0.0 && g > 0.0)
        .map(|&(g, a, b)| (a / b, g * b.abs()))
        .collect();
    let t = if knots.is_empty() {
        1.0
    } else {
        knots.sort_by(|x, y| x.0.total_cmp(&y.0));
        let total: f64 = knots.iter().map(|k| k.1).sum();
        let mut acc = 0.0;
        let mut median = knots[knots.len() - 1].0;
        for &(r, w) in &knots {
            acc += w;
            if acc >= 0.5 * total {
                median = r;
                break;
            }
        }
        median.clamp(0.0, 1.0)
    };
    SegmentDistance { value: eval(t).max(0.0), t }
}

/// `W₁` under Euclidean distance, via [`solve_transport`].
pub fn wasserstein1(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    let c = CostMatrix::distance(p, q)?;
    Ok(solve_transport(&c, p, q)?.cost(&c))
}

/// `Σ_k |p_k − q_k|` over the union of atoms.
pub fn total_variation(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    let u = union_support(&[p, q])?;
    Ok(u.weights[0].iter().zip(&u.weights[1]).map(|(a, b)| (a - b).abs()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_scalars(xs, ws).unwrap()
    }

    #[test]
    fn one_by_one_transport() {
        let c = CostMatrix::new(1, 1, vec![3.5]).unwrap();
        let mu = m1(&[0.0], &[1.0]);
        let plan = solve_transport(&c, &mu, &mu).unwrap();
        assert_eq!(plan.weight(0, 0), 1.0);
        assert!((plan.cost(&c) - 3.5).abs() < 1e-15);
        assert!(verify_strong_monotonicity(&plan, &c).unwrap());
    }

    #[test]
    fn identity_plan_between_equal_measures() {
        let mu = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let c = CostMatrix::distance(&mu, &mu).unwrap();
        let plan = solve_transport(&c, &mu, &mu).unwrap();
        assert!(plan.cost(&c).abs() < 1e-15);
        assert!((plan.weight(0, 0) - 0.5).abs() < 1e-15 && (plan.weight(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mass_mismatch_is_a_balance_error() {
        let mu = m1(&[0.0], &[1.0]);
        let nu = m1(&[0.0], &[0.5]);
        let c = CostMatrix::new(1, 1, vec![0.0]).unwrap();
        assert!(matches!(solve_transport(&c, &mu, &nu), Err(Error::Balance { .. })));
    }

    #[test]
    fn anti_optimal_plan_fails_monotonicity() {
        // c_ij = -x_i y_j on {0,1}×{0,1}: optimal matching is the identity
        let mu = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let c = CostMatrix::from_fn(2, 2, |i, j| -(i as f64) * (j as f64)).unwrap();
        let opt = solve_transport(&c, &mu, &mu).unwrap();
        assert!(verify_strong_monotonicity(&opt, &c).unwrap());
        let swapped = TransportPlan::new(mu.clone(), mu.clone(), vec![0.0, 0.5, 0.5, 0.0])
            .unwrap()
            .with_duals(opt.phi().unwrap().to_vec(), opt.psi().unwrap().to_vec())
            .unwrap();
        assert!(!verify_strong_monotonicity(&swapped, &c).unwrap());
        let bare = TransportPlan::new(mu.clone(), mu, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(matches!(verify_strong_monotonicity(&bare, &c), Err(Error::Contract(_))));
    }

    #[test]
    fn csv_parsing() {
        let c = CostMatrix::from_csv("1, 2\n3,4\n\n").unwrap();
        assert_eq!((c.rows(), c.cols()), (2, 2));
        assert_eq!(c.get(1, 0), 3.0);
        assert!(CostMatrix::from_csv("1,2\n3").is_err());
        assert!(CostMatrix::from_csv("1,x").is_err());
        assert!(CostMatrix::from_csv("").is_err());
    }

    #[test]
    fn kr_between_diracs() {
        for (a, b) in [(0.0, 0.3), (0.0, 1.7), (-2.0, 3.0), (1.0, 1.0)] {
            let v = kr_norm(&m1(&[a], &[1.0]), &m1(&[b], &[1.0])).unwrap();
            assert!((v - (a - b).abs().min(2.0)).abs() < 1e-12, "{a} {b} {v}");
        }
        let p = m1(&[0.0, 1.0], &[0.25, 0.75]);
        assert_eq!(kr_norm(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kr_in_two_dimensions() {
        let a = DiscreteMeasure::dirac(Point::from_slice(&[0.0, 0.0])).unwrap();
        let b = DiscreteMeasure::dirac(Point::from_slice(&[0.3, 0.4])).unwrap();
        assert!((kr_norm(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn segment_endpoints_and_midpoint() {
        let e0 = m1(&[0.0, 0.5], &[0.5, 0.5]);
        let e1 = m1(&[0.25, 1.0], &[0.5, 0.5]);
        let s = kr_to_segment(&e0, &e0, &e1).unwrap();
        assert!(s.value.abs() < 1e-12 && (s.t - 1.0).abs() < 1e-12);
        let s1 = kr_to_segment_1d(&e0, &e0, &e1).unwrap();
        assert!(s1.value.abs() < 1e-15 && s1.t == 1.0);

        let mid = DiscreteMeasure::mixture(&[(0.5, &e0), (0.5, &e1)]).unwrap();
        let s = kr_to_segment(&mid, &e0, &e1).unwrap();
        assert!(s.value.abs() < 1e-12 && (s.t - 0.5).abs() < 1e-12);
        let s1 = kr_to_segment_1d(&mid, &e0, &e1).unwrap();
        assert!(s1.value.abs() < 1e-15 && (s1.t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn line_route_matches_lp() {
        let p = m1(&[0.0, 0.3, 0.9], &[0.2, 0.5, 0.3]);
        let e0 = m1(&[0.1, 0.6], &[0.7, 0.3]);
        let e1 = m1(&[0.4, 1.0], &[0.5, 0.5]);
        let lp = kr_to_segment(&p, &e0, &e1).unwrap();
        let line = kr_to_segment_1d(&p, &e0, &e1).unwrap();
        assert!((lp.value - line.value).abs() < 1e-12);
    }

    #[test]
    fn tv_and_w1_bound_kr() {
        let p = m1(&[0.0, 0.5, 2.5], &[0.2, 0.5, 0.3]);
        let q = m1(&[0.1, 3.0], &[0.6, 0.4]);
        let kr = kr_norm(&p, &q).unwrap();
        assert!(kr <= wasserstein1(&p, &q).unwrap() + 1e-8);
        assert!(kr <= total_variation(&p, &q).unwrap() + 1e-8);
    }

    #[test]
    fn plan_json_shape() {
        let mu = m1(&[0.0], &[1.0]);
        let c = CostMatrix::new(1, 1, vec![2.0]).unwrap();
        let plan = solve_transport(&c, &mu, &mu).unwrap();
        let s = crate::json::to_string(&plan.json(Some(plan.cost(&c)))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["weights"][0][0].as_f64(), Some(1.0));
        assert_eq!(v["value"].as_f64(), Some(2.0));
        assert!(v["phi"].is_array() && v["psi"].is_array());
    }
}
