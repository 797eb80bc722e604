//! The fixed-barycenter problem over a finite dictionary of conditionals and
//! the collapse of its solutions to conditional kernels.

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus};
use crate::measures::{common_support, ConditionalKernel, DiscreteMeasure, Point, YMeasure, MASS_TOL};
use crate::transport::{CostMatrix, TransportPlan};

use super::cost::{CostKind, CostSpec};

/// Finite list of candidate conditional measures.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    entries: Vec<YMeasure>,
}

impl Dictionary {
    pub fn new(entries: Vec<YMeasure>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Domain("empty dictionary".into()));
        }
        for (j, e) in entries.iter().enumerate() {
            if (e.total_mass() - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidMeasure(format!(
                    "dictionary entry {j} has mass {}",
                    e.total_mass()
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[YMeasure] {
        &self.entries
    }

    pub fn get(&self, j: usize) -> &YMeasure {
        &self.entries[j]
    }

    /// This dictionary followed by `more`.
    pub fn extended(&self, more: &[YMeasure]) -> Result<Self> {
        let mut entries = self.entries.clone();
        entries.extend(more.iter().cloned());
        Self::new(entries)
    }
}

/// Optimal weights `P_ij` on x-atoms × dictionary entries.
#[derive(Clone, Debug)]
pub struct FixedBarycenterPlan {
    mu: DiscreteMeasure,
    dictionary: Dictionary,
    /// Row-major `n × J`.
    weights: Vec<f64>,
    costs: Vec<f64>,
    value: f64,
    phi: Vec<f64>,
    /// `ψ_j = Σ_k λ_k p_j(k)` from the barycenter multipliers `λ`.
    psi: Vec<f64>,
    barycenter_defect: f64,
}

impl FixedBarycenterPlan {
    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.dictionary.len() + j]
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// `max_k |Σ_ij P_ij p_j(k) − β(k)|` on the common support.
    pub fn barycenter_defect(&self) -> f64 {
        self.barycenter_defect
    }

    /// `max_i |Σ_j P_ij − μ_i|`.
    pub fn row_defect(&self) -> f64 {
        let m = self.dictionary.len();
        self.mu
            .weights()
            .iter()
            .enumerate()
            .map(|(i, &w)| (self.weights[i * m..(i + 1) * m].iter().sum::<f64>() - w).abs())
            .fold(0.0, f64::max)
    }

    /// `h(x_i, p_j)` as a cost matrix.
    pub fn lifted_cost(&self) -> Result<CostMatrix> {
        CostMatrix::new(self.mu.len(), self.dictionary.len(), self.costs.clone())
    }

    /// `P` as a transport plan between `μ` and the dictionary indices, with
    /// the LP potentials attached.
    pub fn lifted_plan(&self) -> Result<TransportPlan> {
        let m = self.dictionary.len();
        let cols: Vec<f64> = (0..m)
            .map(|j| (0..self.mu.len()).map(|i| self.weights[i * m + j]).sum())
            .collect();
        let index = DiscreteMeasure::new((0..m).map(|j| Point::scalar(j as f64)).collect(), cols)?;
        TransportPlan::new(self.mu.clone(), index, self.weights.clone())?.with_duals(self.phi.clone(), self.psi.clone())
    }
}

/// Minimizes `Σ P_ij h(x_i, p_j)` over `P ≥ 0` with row sums `μ_i` and
/// `Σ_ij P_ij p_j = β` on the common support of the dictionary and `β`.
pub fn solve_fixed_barycenter(
    mu: &DiscreteMeasure,
    dict: &Dictionary,
    h: &CostSpec,
    beta: &YMeasure,
) -> Result<FixedBarycenterPlan> {
    h.require(CostKind::Xp)?;
    let (n, m) = (mu.len(), dict.len());
    let mut refs: Vec<&YMeasure> = dict.entries().iter().collect();
    refs.push(beta);
    let cs = common_support(&refs)?;
    let k = cs.points.len();
    let target = &cs.masses[m];

    let live: Vec<usize> = (0..n).filter(|&i| mu.weights()[i] > 0.0).collect();
    let mut costs = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            costs[i * m + j] = h.eval_xp(&mu.atoms()[i], dict.get(j))?;
        }
    }

    let mut lp = LinearProgram::new(live.len() * m);
    for (r, &i) in live.iter().enumerate() {
        for j in 0..m {
            lp.set_objective(r * m + j, costs[i * m + j]);
        }
        lp.add_constraint((0..m).map(|j| (r * m + j, 1.0)), mu.weights()[i]);
    }
    for c in 0..k {
        let coeffs: Vec<(usize, f64)> = (0..live.len())
            .flat_map(|r| (0..m).map(move |j| (r, j)))
            .filter_map(|(r, j)| {
                let v = cs.masses[j][c];
                (v != 0.0).then_some((r * m + j, v))
            })
            .collect();
        lp.add_constraint(coeffs, target[c]);
    }
    let sol = lp.solve()?;
    let bary_residuals = |x: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|c| {
                let mut s = 0.0;
                for r in 0..live.len() {
                    for j in 0..m {
                        s += x[r * m + j] * cs.masses[j][c];
                    }
                }
                s - target[c]
            })
            .collect()
    };
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            let res = bary_residuals(&sol.x);
            let (c, worst) = res
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (c, v)| if v.abs() > acc.1 { (c, v.abs()) } else { acc });
            return Err(Error::Infeasible {
                constraint: c,
                label: format!("barycenter at y = {:?}", cs.points[c].coords()),
                residual: worst.max(sol.infeasibility),
            });
        }
        LpStatus::Unbounded => return Err(Error::Unbounded),
        LpStatus::IterationLimit => return Err(Error::NoConvergence { iterations: sol.iterations }),
    }

    let mut weights = vec![0.0; n * m];
    let mut phi = vec![0.0; n];
    for (r, &i) in live.iter().enumerate() {
        weights[i * m..(i + 1) * m].copy_from_slice(&sol.x[r * m..(r + 1) * m]);
        phi[i] = sol.duals[r];
    }
    let lambda = &sol.duals[live.len()..];
    let psi: Vec<f64> = (0..m)
        .map(|j| (0..k).map(|c| lambda[c] * cs.masses[j][c]).sum())
        .collect();
    // dead rows: the tightest potential keeps the lifted pair dual feasible
    for i in (0..n).filter(|i| !live.contains(i)) {
        phi[i] = (0..m).map(|j| costs[i * m + j] - psi[j]).fold(f64::INFINITY, f64::min);
    }
    let barycenter_defect = bary_residuals(&sol.x).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let value = weights.iter().zip(&costs).map(|(w, c)| w * c).sum();
    Ok(FixedBarycenterPlan {
        mu: mu.clone(),
        dictionary: dict.clone(),
        weights,
        costs,
        value,
        phi,
        psi,
        barycenter_defect,
    })
}

/// Kernel `σ^{x_i} = Σ_j (P_ij / μ_i) p_j`; rows with `μ_i = 0` are dropped.
pub fn collapse_to_kernel(plan: &FixedBarycenterPlan) -> Result<ConditionalKernel> {
    let m = plan.dictionary.len();
    let mut atoms = Vec::new();
    let mut xw = Vec::new();
    let mut conditionals = Vec::new();
    for (i, (x, w)) in plan.mu.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let row = &plan.weights[i * m..(i + 1) * m];
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(Error::Contract(format!("row {i} of the plan is empty")));
        }
        let parts: Vec<(f64, &YMeasure)> = row
            .iter()
            .zip(plan.dictionary.entries())
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, e)| (p / total, e))
            .collect();
        atoms.push(x.clone());
        xw.push(w);
        conditionals.push(YMeasure::mixture(&parts)?);
    }
    let mass: f64 = xw.iter().sum();
    let xw = xw.iter().map(|w| w / mass).collect();
    ConditionalKernel::new(atoms, xw, conditionals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinear::eval_j_xp;
    use crate::transport::verify_strong_monotonicity;

    fn d(xs: &[f64], ws: &[f64]) -> YMeasure {
        YMeasure::Discrete(DiscreteMeasure::from_scalars(xs, ws).unwrap())
    }

    fn mean_gap() -> CostSpec {
        CostSpec::from_json_str(r#"{"kind":"xp","name":"squared_mean_gap"}"#).unwrap()
    }

    #[test]
    fn single_entry_dictionary() {
        let nu = d(&[0.0, 1.0], &[0.5, 0.5]);
        let mu = DiscreteMeasure::from_scalars(&[0.0, 1.0], &[0.25, 0.75]).unwrap();
        let dict = Dictionary::new(vec![nu.clone()]).unwrap();
        let plan = solve_fixed_barycenter(&mu, &dict, &mean_gap(), &nu).unwrap();
        assert!((plan.value() - (0.25 * 0.25 + 0.75 * 0.25)).abs() < 1e-12);
        let k = collapse_to_kernel(&plan).unwrap();
        for (_, _, s) in k.iter() {
            assert!(s.sup_diff(&nu).unwrap() < 1e-15);
        }
    }

    #[test]
    fn forced_weights() {
        let p1 = d(&[0.0, 1.0], &[0.8, 0.2]);
        let p2 = d(&[0.0, 2.0], &[0.4, 0.6]);
        let beta = YMeasure::mixture(&[(0.5, &p1), (0.5, &p2)]).unwrap();
        let mu = DiscreteMeasure::dirac(Point::scalar(0.3)).unwrap();
        let h = mean_gap();
        let plan = solve_fixed_barycenter(&mu, &Dictionary::new(vec![p1.clone(), p2.clone()]).unwrap(), &h, &beta).unwrap();
        let x = Point::scalar(0.3);
        let expect = 0.5 * h.eval_xp(&x, &p1).unwrap() + 0.5 * h.eval_xp(&x, &p2).unwrap();
        assert!((plan.value() - expect).abs() < 1e-12);
        assert!((plan.weight(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_dictionary_names_barycenter() {
        let p1 = d(&[0.0], &[1.0]);
        let beta = d(&[1.0], &[1.0]);
        let mu = DiscreteMeasure::dirac(Point::scalar(0.0)).unwrap();
        let err = solve_fixed_barycenter(&mu, &Dictionary::new(vec![p1]).unwrap(), &mean_gap(), &beta).unwrap_err();
        match err {
            Error::Infeasible { label, residual, .. } => {
                assert!(label.contains("barycenter"));
                assert!(residual > 0.5);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn plan_is_strongly_monotone_and_collapses_to_beta() {
        let dict = Dictionary::new(vec![
            d(&[0.0, 1.0], &[0.5, 0.5]),
            d(&[0.0, 2.0], &[0.5, 0.5]),
            d(&[1.0, 2.0], &[0.25, 0.75]),
            d(&[0.0], &[1.0]),
        ])
        .unwrap();
        let beta = d(&[0.0, 1.0, 2.0], &[0.4, 0.3, 0.3]);
        let mu = DiscreteMeasure::from_scalars(&[0.0, 0.5, 1.5], &[0.3, 0.3, 0.4]).unwrap();
        let h = mean_gap();
        let plan = solve_fixed_barycenter(&mu, &dict, &h, &beta).unwrap();
        assert!(plan.barycenter_defect() < 1e-9 && plan.row_defect() < 1e-9);
        let lifted = plan.lifted_plan().unwrap();
        assert!(verify_strong_monotonicity(&lifted, &plan.lifted_cost().unwrap()).unwrap());
        let k = collapse_to_kernel(&plan).unwrap();
        assert!(k.mix().unwrap().sup_diff(&beta).unwrap() < 1e-9);
        assert!(eval_j_xp(&k, &h).unwrap() <= plan.value() + 1e-8);
    }

    #[test]
    fn zero_weight_rows_are_dropped() {
        let nu = d(&[0.0, 1.0], &[0.5, 0.5]);
        let mu = DiscreteMeasure::from_scalars(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        let plan = solve_fixed_barycenter(&mu, &Dictionary::new(vec![nu.clone()]).unwrap(), &mean_gap(), &nu).unwrap();
        let k = collapse_to_kernel(&plan).unwrap();
        assert_eq!(k.len(), 1);
        assert!(verify_strong_monotonicity(&plan.lifted_plan().unwrap(), &plan.lifted_cost().unwrap()).unwrap());
    }
}
