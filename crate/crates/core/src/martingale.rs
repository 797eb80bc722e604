//! Couplings `π ∈ Π(ζ, ν)` whose conditionals have prescribed `F`-barycenters,
//! and gluing such couplings with a map `T` into a conditional kernel.

use serde::{Deserialize, Serialize};

use crate::convex_order::{check_convex_order_lp, ConvexOrderCertificate};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus};
use crate::measures::{AtomIndex, ConditionalKernel, DiscreteMeasure, MomentMap, Point, YMeasure, MERGE_TOL};
use crate::transport::{PlanJson, TransportPlan, MARGINAL_TOL};

/// Tolerance on conditional barycenters.
pub const BARYCENTER_TOL: f64 = 1e-9;
/// Distance within which a map value is identified with a `ζ` atom.
pub const SNAP_TOL: f64 = 1e-9;
/// Rows lighter than this have no meaningful conditional.
pub const NULL_ROW: f64 = 1e-12;

/// Outcome of the barycentric coupling LP.
pub(crate) enum CouplingOutcome {
    Feasible(Vec<f64>),
    Infeasible { row: usize, label: String, residual: f64 },
}

/// Feasibility LP over `π ≥ 0` with row sums `rows.weights`, column sums
/// `col_weights`, and `Σ_j π_ij (t_j − u_i) = 0` for every row `i`.
pub(crate) fn coupling_lp(rows: &DiscreteMeasure, col_weights: &[f64], targets: &[Point]) -> Result<CouplingOutcome> {
    let (n, m) = (rows.len(), col_weights.len());
    let d = rows.dim();
    let mut lp = LinearProgram::new(n * m);
    for (i, &w) in rows.weights().iter().enumerate() {
        lp.add_constraint((0..m).map(|j| (i * m + j, 1.0)), w);
    }
    for (j, &w) in col_weights.iter().enumerate() {
        lp.add_constraint((0..n).map(|i| (i * m + j, 1.0)), w);
    }
    for (i, u) in rows.atoms().iter().enumerate() {
        for k in 0..d {
            lp.add_constraint(
                (0..m)
                    .map(|j| (i * m + j, targets[j].coords()[k] - u.coords()[k]))
                    .filter(|(_, a)| *a != 0.0),
                0.0,
            );
        }
    }
    let sol = lp.solve()?;
    match sol.status {
        LpStatus::Optimal => Ok(CouplingOutcome::Feasible(sol.x)),
        LpStatus::Infeasible => {
            let row = sol.worst_row.unwrap_or(0);
            let label = if row < n {
                format!("row marginal {row}")
            } else if row < n + m {
                format!("column marginal {}", row - n)
            } else {
                let r = row - n - m;
                format!("barycenter of row {} coordinate {}", r / d, r % d)
            };
            Ok(CouplingOutcome::Infeasible { row, label, residual: sol.infeasibility })
        }
        LpStatus::Unbounded => Err(Error::Unbounded),
        LpStatus::IterationLimit => Err(Error::NoConvergence { iterations: sol.iterations }),
    }
}

/// The deterministic coupling `π_ij = ν_j [t_j = u_i]`, available when the
/// image of `ν` under the targets coincides with `rows`.
pub(crate) fn fibered_coupling(rows: &DiscreteMeasure, nu: &DiscreteMeasure, targets: &[Point]) -> Result<Option<TransportPlan>> {
    let image = DiscreteMeasure::new(targets.to_vec(), nu.weights().to_vec())?;
    if image.sup_diff(rows) != 0.0 {
        return Ok(None);
    }
    let index = AtomIndex::new(rows.atoms());
    let m = nu.len();
    let mut weights = vec![0.0; rows.len() * m];
    for (j, t) in targets.iter().enumerate() {
        let i = index
            .find(t, MERGE_TOL)
            .ok_or_else(|| Error::Contract("fibered target missing from row atoms".into()))?;
        weights[i * m + j] = nu.weights()[j];
    }
    TransportPlan::new(rows.clone(), nu.clone(), weights).map(Some)
}

/// `max_u |Σ_j (π_uj / ζ_u) t_j − u|∞` over rows with `ζ_u > 1e-12`.
pub fn barycenter_residual(plan: &TransportPlan, targets: &[Point]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, (u, zu)) in plan.mu().iter().enumerate() {
        if zu <= NULL_ROW {
            continue;
        }
        let mut bary = vec![0.0; u.dim()];
        for (w, t) in plan.row(i).iter().zip(targets) {
            for (b, c) in bary.iter_mut().zip(t.coords()) {
                *b += w * c;
            }
        }
        for (b, c) in bary.iter().zip(u.coords()) {
            worst = worst.max((b / zu - c).abs());
        }
    }
    worst
}

/// Coupling of `ζ` (on ℝᵈ) and `ν` (on Y) with `∫F dπᵘ = u` for every charged `u`.
#[derive(Clone, Debug)]
pub struct MartingaleCoupling {
    plan: TransportPlan,
    map: MomentMap,
    targets: Vec<Point>,
}

impl MartingaleCoupling {
    pub fn plan(&self) -> &TransportPlan {
        &self.plan
    }

    pub fn zeta(&self) -> &DiscreteMeasure {
        self.plan.mu()
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        self.plan.nu()
    }

    pub fn map(&self) -> &MomentMap {
        &self.map
    }

    /// `F(y_j)` for each `ν` atom.
    pub fn targets(&self) -> &[Point] {
        &self.targets
    }

    pub fn barycenter_residual(&self) -> f64 {
        barycenter_residual(&self.plan, &self.targets)
    }

    /// Normalized row `πᵘ` restricted to positive weights.
    pub fn conditional(&self, u: usize) -> Result<DiscreteMeasure> {
        conditional_row(&self.plan, u)
    }

    pub fn json(&self) -> CouplingJson<'_> {
        CouplingJson {
            plan: self.plan.json(None),
            f: self.targets.iter().map(|t| t.coords()).collect(),
        }
    }
}

#[derive(Serialize)]
pub struct CouplingJson<'a> {
    #[serde(flatten)]
    pub plan: PlanJson<'a>,
    #[serde(rename = "F")]
    pub f: Vec<&'a [f64]>,
}

pub(crate) fn conditional_row(plan: &TransportPlan, i: usize) -> Result<DiscreteMeasure> {
    let row = plan.row(i);
    let mass: f64 = row.iter().sum();
    if mass <= NULL_ROW {
        return Err(Error::Contract(format!("row {i} carries no mass")));
    }
    let (atoms, weights): (Vec<Point>, Vec<f64>) = row
        .iter()
        .zip(plan.nu().atoms())
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, y)| (y.clone(), w / mass))
        .unzip();
    DiscreteMeasure::new(atoms, weights)
}

/// Builds `π ∈ Π(ζ, ν)` with `∫F dπᵘ = u`. When no such coupling exists the
/// error carries a convex function separating `ζ` from `ν∘F⁻¹`.
pub fn build_martingale_coupling(zeta: &DiscreteMeasure, nu: &DiscreteMeasure, f: &MomentMap) -> Result<MartingaleCoupling> {
    let targets = f.values_on(nu.atoms())?;
    let d = targets[0].dim();
    if zeta.dim() != d {
        return Err(Error::Dimension { expected: d, found: zeta.dim() });
    }
    if (zeta.total_mass() - nu.total_mass()).abs() > MARGINAL_TOL {
        return Err(Error::Balance { left: zeta.total_mass(), right: nu.total_mass() });
    }
    if let Some(plan) = fibered_coupling(zeta, nu, &targets)? {
        return Ok(MartingaleCoupling { plan, map: f.clone(), targets });
    }
    match coupling_lp(zeta, nu.weights(), &targets)? {
        CouplingOutcome::Feasible(w) => {
            let plan = TransportPlan::new(zeta.clone(), nu.clone(), w)?;
            Ok(MartingaleCoupling { plan, map: f.clone(), targets })
        }
        CouplingOutcome::Infeasible { row, label, residual } => {
            let image = nu.pushforward(f)?;
            match check_convex_order_lp(zeta, &image)? {
                cert @ ConvexOrderCertificate::NotDominated { .. } => Err(Error::OrderViolation(Box::new(cert))),
                ConvexOrderCertificate::Dominated { .. } => Err(Error::Infeasible { constraint: row, label, residual }),
            }
        }
    }
}

/// Target points `T(x_i)`, one per atom of the source measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct MongeMap {
    values: Vec<Point>,
}

impl TryFrom<Vec<Point>> for MongeMap {
    type Error = Error;
    fn try_from(values: Vec<Point>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<MongeMap> for Vec<Point> {
    fn from(m: MongeMap) -> Self {
        m.values
    }
}

impl MongeMap {
    pub fn new(values: Vec<Point>) -> Result<Self> {
        let first = values.first().ok_or_else(|| Error::Domain("empty map".into()))?;
        let d = first.dim();
        for v in &values {
            if v.dim() != d {
                return Err(Error::Dimension { expected: d, found: v.dim() });
            }
            if !v.is_finite() {
                return Err(Error::Domain(format!("non-finite map value {:?}", v.coords())));
            }
        }
        Ok(Self { values })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Point::scalar(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn get(&self, i: usize) -> &Point {
        &self.values[i]
    }

    /// `μ∘T⁻¹`.
    pub fn image(&self, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        if mu.len() != self.len() {
            return Err(Error::Dimension { expected: mu.len(), found: self.len() });
        }
        DiscreteMeasure::new(self.values.clone(), mu.weights().to_vec())
    }

    /// `max_i |T(x_i) − S(x_i)|∞`.
    pub fn sup_dist(&self, other: &MongeMap) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.sup_dist(b))
            .fold(if self.len() == other.len() { 0.0 } else { f64::INFINITY }, f64::max)
    }
}

/// Kernel with `σ^{x_i} = π^{T(x_i)}`, each map value snapped to a `ζ` atom
/// within [`SNAP_TOL`].
pub fn glue(t: &MongeMap, coupling: &MartingaleCoupling, mu: &DiscreteMeasure) -> Result<ConditionalKernel> {
    if t.len() != mu.len() {
        return Err(Error::Dimension { expected: mu.len(), found: t.len() });
    }
    let zeta = coupling.zeta();
    if t.dim() != zeta.dim() {
        return Err(Error::Dimension { expected: zeta.dim(), found: t.dim() });
    }
    let index = AtomIndex::new(zeta.atoms());
    let mut cache: Vec<Option<YMeasure>> = vec![None; zeta.len()];
    let mut conditionals = Vec::with_capacity(mu.len());
    for (i, v) in t.values().iter().enumerate() {
        let u = index.find(v, SNAP_TOL).ok_or_else(|| {
            Error::Alignment(format!("T(x_{i}) = {:?} matches no atom of the coupling", v.coords()))
        })?;
        if cache[u].is_none() {
            cache[u] = Some(YMeasure::Discrete(coupling.conditional(u)?));
        }
        conditionals.push(cache[u].clone().expect("filled above"));
    }
    ConditionalKernel::new(mu.atoms().to_vec(), mu.weights().to_vec(), conditionals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_scalars(xs, ws).unwrap()
    }

    #[test]
    fn dirac_at_mean_gives_product_coupling() {
        let nu = m1(&[-1.0, 0.5, 2.0], &[0.25, 0.5, 0.25]);
        let zeta = DiscreteMeasure::dirac(nu.mean()).unwrap();
        let c = build_martingale_coupling(&zeta, &nu, &MomentMap::identity(1)).unwrap();
        for j in 0..3 {
            assert!((c.plan().weight(0, j) - nu.weights()[j]).abs() < 1e-15);
        }
        assert!(c.barycenter_residual() < 1e-12);
    }

    #[test]
    fn image_measure_gives_fibered_coupling() {
        let nu = m1(&[-1.0, 1.0, 2.0], &[0.25, 0.25, 0.5]);
        let f = MomentMap::from_fn(1, |y| Point::scalar(y.coords()[0].abs()));
        let zeta = nu.pushforward(&f).unwrap();
        let c = build_martingale_coupling(&zeta, &nu, &f).unwrap();
        assert_eq!(c.barycenter_residual(), 0.0);
        for (i, u) in zeta.atoms().iter().enumerate() {
            for (j, t) in c.targets().iter().enumerate() {
                if c.plan().weight(i, j) > 0.0 {
                    assert_eq!(u, t);
                }
            }
        }
    }

    #[test]
    fn reversed_spread_is_an_order_violation() {
        let zeta = m1(&[-1.0, 1.0], &[0.5, 0.5]);
        let nu = m1(&[0.0], &[1.0]);
        match build_martingale_coupling(&zeta, &nu, &MomentMap::identity(1)) {
            Err(Error::OrderViolation(cert)) => {
                assert!(cert.violation() > 1e-9);
                assert!(cert.reverify(&zeta, &nu));
            }
            other => panic!("expected order violation, got {other:?}"),
        }
    }

    #[test]
    fn glue_constant_map() {
        let nu = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let zeta = m1(&[0.5], &[1.0]);
        let c = build_martingale_coupling(&zeta, &nu, &MomentMap::identity(1)).unwrap();
        let mu = m1(&[0.0, 0.3, 0.7], &[0.2, 0.3, 0.5]);
        let t = MongeMap::from_scalars(&[0.5, 0.5, 0.5]).unwrap();
        let k = glue(&t, &c, &mu).unwrap();
        for (_, _, s) in k.iter() {
            assert!(s.sup_diff(&YMeasure::Discrete(nu.clone())).unwrap() < 1e-15);
        }
        let off = MongeMap::from_scalars(&[0.5, 0.5, 0.6]).unwrap();
        assert!(matches!(glue(&off, &c, &mu), Err(Error::Alignment(_))));
    }

    #[test]
    fn glued_kernel_mixes_to_nu() {
        let nu = m1(&[-2.0, -1.0, 0.0, 1.0, 2.0], &[0.1, 0.2, 0.4, 0.2, 0.1]);
        let mu = m1(&[0.0, 1.0, 2.0, 3.0], &[0.25, 0.25, 0.25, 0.25]);
        let t = MongeMap::from_scalars(&[-0.5, 0.5, 0.5, -0.5]).unwrap();
        let zeta = t.image(&mu).unwrap();
        let c = build_martingale_coupling(&zeta, &nu, &MomentMap::identity(1)).unwrap();
        assert!(c.barycenter_residual() < BARYCENTER_TOL);
        let k = glue(&t, &c, &mu).unwrap();
        let mixed = k.mix().unwrap();
        assert!(mixed.sup_diff(&YMeasure::Discrete(nu)).unwrap() < 1e-9);
        let f = MomentMap::identity(1);
        for (i, (_, _, s)) in k.iter().enumerate() {
            let g = f.g_eval(s).unwrap();
            assert!(g.sup_dist(t.get(i)) < 1e-9);
        }
    }
}
