//! Convex dominance `μ ⪯_c ν` with certificates: a martingale coupling when
//! dominance holds, a separating convex function when it fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus};
use crate::martingale::{barycenter_residual, coupling_lp, fibered_coupling, CouplingOutcome, BARYCENTER_TOL};
use crate::measures::{DiscreteMeasure, Point};
use crate::transport::{PlanJson, TransportPlan, MARGINAL_TOL};

/// Default tolerance for mean equality and potential comparison.
pub const ORDER_TOL: f64 = 1e-9;

/// `u_μ(k) = Σ_i w_i |x_i − k|` for a one-dimensional measure.
#[derive(Clone, Debug)]
pub struct PotentialFunction1D {
    xs: Vec<f64>,
    ws: Vec<f64>,
    /// Prefix sums of `w` and `w·x` over sorted atoms, with a leading zero.
    cw: Vec<f64>,
    cwx: Vec<f64>,
}

impl PotentialFunction1D {
    pub fn new(mu: &DiscreteMeasure) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = mu.scalars()?.into_iter().zip(mu.weights().iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ws): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut cw = vec![0.0];
        let mut cwx = vec![0.0];
        for (x, w) in xs.iter().zip(&ws) {
            cw.push(cw.last().unwrap() + w);
            cwx.push(cwx.last().unwrap() + w * x);
        }
        Ok(Self { xs, ws, cw, cwx })
    }

    /// Kink locations, sorted.
    pub fn kinks(&self) -> &[f64] {
        &self.xs
    }

    pub fn weights(&self) -> &[f64] {
        &self.ws
    }

    pub fn eval(&self, k: f64) -> f64 {
        let n = self.xs.len();
        let split = self.xs.partition_point(|&x| x < k);
        let (wl, sl) = (self.cw[split], self.cwx[split]);
        let (wr, sr) = (self.cw[n] - wl, self.cwx[n] - sl);
        (k * wl - sl) + (sr - k * wr)
    }

    /// Direct `Σ w |x − k|` without prefix sums.
    pub fn eval_direct(&self, k: f64) -> f64 {
        self.xs.iter().zip(&self.ws).map(|(x, w)| w * (x - k).abs()).sum()
    }
}

/// One affine piece `z ↦ slope·z + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AffinePiece {
    pub slope: Vec<f64>,
    pub intercept: f64,
}

/// Convex function `ψ(z) = max_k (slope_k·z + intercept_k)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexWitness {
    pub pieces: Vec<AffinePiece>,
}

impl ConvexWitness {
    pub fn eval(&self, z: &Point) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.intercept + p.slope.iter().zip(z.coords()).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn integrate(&self, m: &DiscreteMeasure) -> f64 {
        m.iter().map(|(a, w)| w * self.eval(a)).sum()
    }

    /// `∫ψ dμ − ∫ψ dν`.
    pub fn gap(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        self.integrate(mu) - self.integrate(nu)
    }

    /// Largest slope magnitude over all pieces and coordinates.
    pub fn max_slope(&self) -> f64 {
        self.pieces.iter().flat_map(|p| p.slope.iter()).fold(0.0, |a, b| a.max(b.abs()))
    }

    /// Kinks of a one-dimensional witness and its values there, for
    /// reporting as a piecewise-linear function.
    pub fn kinks_1d(&self) -> Vec<(f64, f64)> {
        let mut pieces: Vec<(f64, f64)> = self.pieces.iter().map(|p| (p.slope[0], p.intercept)).collect();
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let mut out = Vec::new();
        for w in pieces.windows(2) {
            let ((s0, b0), (s1, b1)) = (w[0], w[1]);
            if s1 > s0 {
                let z = (b0 - b1) / (s1 - s0);
                out.push((z, self.eval(&Point::scalar(z))));
            }
        }
        out
    }
}

/// Verdict on `μ ⪯_c ν` with its witness.
#[derive(Clone, Debug)]
pub enum ConvexOrderCertificate {
    /// Coupling of `μ` and `ν` whose rows have barycenters at the `μ` atoms.
    Dominated { coupling: TransportPlan },
    /// Convex `ψ` with `∫ψ dμ − ∫ψ dν = violation > 0`.
    NotDominated { witness: ConvexWitness, violation: f64 },
}

#[derive(Serialize)]
pub struct CertificateJson<'a> {
    pub verdict: &'static str,
    pub witness_kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling: Option<PlanJson<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<&'a ConvexWitness>,
    pub violation: f64,
}

impl ConvexOrderCertificate {
    pub fn is_dominated(&self) -> bool {
        matches!(self, Self::Dominated { .. })
    }

    /// Positive amount by which a negative witness separates the measures; zero when dominated.
    pub fn violation(&self) -> f64 {
        match self {
            Self::Dominated { .. } => 0.0,
            Self::NotDominated { violation, .. } => *violation,
        }
    }

    /// Re-checks the witness from scratch against the two measures.
    pub fn reverify(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> bool {
        match self {
            Self::Dominated { coupling } => {
                coupling.mu().sup_diff(mu) <= MARGINAL_TOL
                    && coupling.nu().sup_diff(nu) <= MARGINAL_TOL
                    && coupling.marginal_defect() <= MARGINAL_TOL
                    && barycenter_residual(coupling, coupling.nu().atoms()) < BARYCENTER_TOL
            }
            Self::NotDominated { witness, violation } => {
                let gap = witness.gap(mu, nu);
                gap > ORDER_TOL && (gap - violation).abs() <= 1e-12 * (1.0 + violation.abs())
            }
        }
    }

    pub fn json(&self) -> CertificateJson<'_> {
        match self {
            Self::Dominated { coupling } => CertificateJson {
                verdict: "dominated",
                witness_kind: "martingale_coupling",
                coupling: Some(coupling.json(None)),
                witness: None,
                violation: 0.0,
            },
            Self::NotDominated { witness, violation } => CertificateJson {
                verdict: "not_dominated",
                witness_kind: "max_affine",
                coupling: None,
                witness: Some(witness),
                violation: *violation,
            },
        }
    }
}

fn mass_witness(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Option<ConvexOrderCertificate> {
    let diff = mu.total_mass() - nu.total_mass();
    if diff.abs() <= MARGINAL_TOL {
        return None;
    }
    let witness = ConvexWitness {
        pieces: vec![AffinePiece { slope: vec![0.0; mu.dim()], intercept: diff.signum() }],
    };
    let violation = witness.gap(mu, nu);
    Some(ConvexOrderCertificate::NotDominated { witness, violation })
}

fn require_same_dim(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension { expected: mu.dim(), found: nu.dim() });
    }
    Ok(())
}

/// Martingale coupling for a pair already known to be in convex order.
fn positive_certificate(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Option<TransportPlan>> {
    if let Some(plan) = fibered_coupling(mu, nu, nu.atoms())? {
        return Ok(Some(plan));
    }
    match coupling_lp(mu, nu.weights(), nu.atoms())? {
        CouplingOutcome::Feasible(w) => Ok(Some(TransportPlan::new(mu.clone(), nu.clone(), w)?)),
        CouplingOutcome::Infeasible { .. } => Ok(None),
    }
}

/// One-dimensional check via potential functions at the [`ORDER_TOL`] tolerance.
pub fn check_convex_order_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ConvexOrderCertificate> {
    check_convex_order_1d_tol(mu, nu, ORDER_TOL)
}

/// Dominated iff the means agree within `tol` and `u_μ ≤ u_ν + tol` at every
/// atom of either measure. Both potentials are piecewise linear with kinks
/// only at atoms, and agree in slope outside the hull once masses and means
/// match, so the atoms are the only places to check.
pub fn check_convex_order_1d_tol(mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> Result<ConvexOrderCertificate> {
    for m in [mu, nu] {
        if m.dim() != 1 {
            return Err(Error::Dimension { expected: 1, found: m.dim() });
        }
    }
    if let Some(cert) = mass_witness(mu, nu) {
        return Ok(cert);
    }
    let mean_gap = mu.mean().coords()[0] - nu.mean().coords()[0];
    if mean_gap.abs() > tol {
        let witness = ConvexWitness {
            pieces: vec![AffinePiece { slope: vec![mean_gap.signum()], intercept: 0.0 }],
        };
        let violation = witness.gap(mu, nu);
        return Ok(ConvexOrderCertificate::NotDominated { witness, violation });
    }
    let (um, un) = (PotentialFunction1D::new(mu)?, PotentialFunction1D::new(nu)?);
    let mut worst: Option<(f64, f64)> = None;
    for &k in um.kinks().iter().chain(un.kinks()) {
        let d = um.eval(k) - un.eval(k);
        if worst.is_none_or(|(_, w)| d > w) {
            worst = Some((k, d));
        }
    }
    let (k, d) = worst.expect("measures are nonempty");
    let kink_witness = || {
        let witness = ConvexWitness {
            pieces: vec![
                AffinePiece { slope: vec![1.0], intercept: -k },
                AffinePiece { slope: vec![-1.0], intercept: k },
            ],
        };
        let violation = witness.gap(mu, nu);
        ConvexOrderCertificate::NotDominated { witness, violation }
    };
    if d > tol {
        return Ok(kink_witness());
    }
    match positive_certificate(mu, nu)? {
        Some(coupling) => Ok(ConvexOrderCertificate::Dominated { coupling }),
        // a loose tolerance can accept a small positive gap that no coupling realizes
        None if d > 0.0 => Ok(kink_witness()),
        None => Err(Error::Contract(format!(
            "potentials indicate dominance (worst gap {d:e}) but no martingale coupling was found"
        ))),
    }
}

/// Dominated iff `{π ∈ Π(μ,ν) : Σ_j π_ij (y_j − x_i) = 0 ∀i}` is feasible.
/// On failure the witness comes from a separation LP with slopes in `[−1, 1]ᵈ`.
pub fn check_convex_order_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ConvexOrderCertificate> {
    require_same_dim(mu, nu)?;
    if let Some(cert) = mass_witness(mu, nu) {
        return Ok(cert);
    }
    if let Some(coupling) = positive_certificate(mu, nu)? {
        return Ok(ConvexOrderCertificate::Dominated { coupling });
    }
    let witness = separating_function(mu, nu)?;
    let violation = witness.gap(mu, nu);
    Ok(ConvexOrderCertificate::NotDominated { witness, violation })
}

/// Maximizes `Σ a_i μ_i + Σ b_j ν_j` subject to
/// `a_i + b_j + c_i·(y_j − x_i) ≤ 0` and `c_i ∈ [−1, 1]ᵈ`. The function
/// `ψ(z) = max_i (a_i + c_i·(z − x_i))` then satisfies
/// `∫ψ dμ − ∫ψ dν ≥ Σ a μ + Σ b ν`.
fn separating_function(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ConvexWitness> {
    let (n, m, d) = (mu.len(), nu.len(), mu.dim());
    let mut lp = LinearProgram::new(0);
    let a: Vec<usize> = (0..n)
        .map(|i| lp.add_variable(-mu.weights()[i], f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    let b: Vec<usize> = (0..m)
        .map(|j| lp.add_variable(-nu.weights()[j], f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    let c: Vec<Vec<usize>> = (0..n).map(|_| (0..d).map(|_| lp.add_variable(0.0, -1.0, 1.0)).collect()).collect();
    for i in 0..n {
        let x = mu.atoms()[i].coords();
        for j in 0..m {
            let y = nu.atoms()[j].coords();
            let s = lp.add_variable(0.0, 0.0, f64::INFINITY);
            let mut row = vec![(a[i], 1.0), (b[j], 1.0), (s, 1.0)];
            for k in 0..d {
                let delta = y[k] - x[k];
                if delta != 0.0 {
                    row.push((c[i][k], delta));
                }
            }
            lp.add_constraint(row, 0.0);
        }
    }
    let sol = lp.solve()?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::IterationLimit => return Err(Error::NoConvergence { iterations: sol.iterations }),
        s => return Err(Error::Contract(format!("separation LP ended with status {s:?}"))),
    }
    let pieces = (0..n)
        .map(|i| {
            let slope: Vec<f64> = c[i].iter().map(|&v| sol.x[v]).collect();
            let dot: f64 = slope.iter().zip(mu.atoms()[i].coords()).map(|(s, x)| s * x).sum();
            AffinePiece { slope, intercept: sol.x[a[i]] - dot }
        })
        .collect();
    Ok(ConvexWitness { pieces })
}

/// Which sets of a scalar functional are probed for convexity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeMode {
    /// Pairs with `g(p) = g(q)`; deviation `|g(½p + ½q) − g(p)|`.
    Level,
    /// Arbitrary pairs; deviation `max(0, g(½p + ½q) − max(g(p), g(q)))`.
    Sublevel,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub trials: usize,
    pub pairs_tested: usize,
    pub max_deviation: f64,
    pub seed: u64,
}

fn random_measure(support: &[Point], rng: &mut ChaCha8Rng) -> Result<DiscreteMeasure> {
    let raw: Vec<f64> = (0..support.len()).map(|_| rng.gen_range(0.0..1.0) + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    DiscreteMeasure::new(support.to_vec(), raw.iter().map(|w| w / total).collect())
}

fn segment_point(a: &DiscreteMeasure, b: &DiscreteMeasure, s: f64) -> Result<DiscreteMeasure> {
    DiscreteMeasure::mixture(&[(1.0 - s, a), (s, b)])
}

/// Randomized test of whether the level (or sublevel) sets of `g` are convex,
/// over probability measures supported on `support`.
///
/// Level pairs are found by drawing `p`, `a`, `b` at random and bisecting
/// along `[a, b]` for a `q` with `g(q) = g(p)`; draws whose endpoints do not
/// bracket `g(p)` are discarded.
pub fn level_set_convexity_probe(
    g: &dyn Fn(&DiscreteMeasure) -> Result<f64>,
    support: &[Point],
    mode: ProbeMode,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if support.is_empty() {
        return Err(Error::Domain("probe support is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation: f64 = 0.0;
    let mut pairs_tested = 0;
    for _ in 0..trials {
        let p = random_measure(support, &mut rng)?;
        let gp = g(&p)?;
        let q = match mode {
            ProbeMode::Sublevel => random_measure(support, &mut rng)?,
            ProbeMode::Level => {
                let mut found = None;
                for _ in 0..8 {
                    let a = random_measure(support, &mut rng)?;
                    let b = random_measure(support, &mut rng)?;
                    let (ga, gb) = (g(&a)? - gp, g(&b)? - gp);
                    if ga * gb > 0.0 {
                        continue;
                    }
                    let (mut lo, mut hi) = (0.0, 1.0);
                    let lo_sign = ga.signum();
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        let gm = g(&segment_point(&a, &b, mid)?)? - gp;
                        if gm == 0.0 {
                            lo = mid;
                            hi = mid;
                            break;
                        }
                        if gm.signum() == lo_sign {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                        if hi - lo < 1e-15 {
                            break;
                        }
                    }
                    let q = segment_point(&a, &b, 0.5 * (lo + hi))?;
                    if (g(&q)? - gp).abs() < 1e-9 {
                        found = Some(q);
                        break;
                    }
                }
                match found {
                    Some(q) => q,
                    None => continue,
                }
            }
        };
        let gq = g(&q)?;
        let mid = segment_point(&p, &q, 0.5)?;
        let gm = g(&mid)?;
        let dev = match mode {
            ProbeMode::Level => (gm - gp).abs(),
            ProbeMode::Sublevel => (gm - gp.max(gq)).max(0.0),
        };
        max_deviation = max_deviation.max(dev);
        pairs_tested += 1;
    }
    Ok(ProbeReport { trials, pairs_tested, max_deviation, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::MomentMap;

    fn m1(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_scalars(xs, ws).unwrap()
    }

    fn pt(c: &[f64]) -> Point {
        Point::from_slice(c)
    }

    #[test]
    fn potential_prefix_sums_match_direct_sum() {
        let mu = m1(&[0.3, -1.0, 2.0, 0.0], &[0.1, 0.4, 0.2, 0.3]);
        let u = PotentialFunction1D::new(&mu).unwrap();
        for k in [-3.0, -1.0, -0.2, 0.0, 0.3, 1.1, 2.0, 5.0] {
            assert!((u.eval(k) - u.eval_direct(k)).abs() < 1e-14);
            assert!(u.eval(k) >= (mu.mean().coords()[0] - k).abs() - 1e-15);
        }
    }

    #[test]
    fn jensen_spread_is_dominated() {
        let mu = m1(&[0.0], &[1.0]);
        let nu = m1(&[-1.0, 1.0], &[0.5, 0.5]);
        let cert = check_convex_order_1d(&mu, &nu).unwrap();
        assert!(cert.is_dominated());
        assert!(cert.reverify(&mu, &nu));
    }

    #[test]
    fn reversed_spread_has_abs_witness() {
        let mu = m1(&[-1.0, 1.0], &[0.5, 0.5]);
        let nu = m1(&[0.0], &[1.0]);
        let cert = check_convex_order_1d(&mu, &nu).unwrap();
        match &cert {
            ConvexOrderCertificate::NotDominated { witness, violation } => {
                assert_eq!(*violation, 1.0);
                assert_eq!(witness.eval(&pt(&[-3.0])), 3.0);
                assert_eq!(witness.kinks_1d(), vec![(0.0, 0.0)]);
            }
            _ => panic!("expected a negative certificate"),
        }
        assert!(cert.reverify(&mu, &nu));
        let lp = check_convex_order_lp(&mu, &nu).unwrap();
        assert!(!lp.is_dominated() && lp.reverify(&mu, &nu));
    }

    #[test]
    fn different_means_are_not_dominated() {
        let mu = m1(&[0.0], &[1.0]);
        let nu = m1(&[1.0], &[1.0]);
        let cert = check_convex_order_1d(&mu, &nu).unwrap();
        assert!(!cert.is_dominated());
        assert!((cert.violation() - 1.0).abs() < 1e-15);
        assert!(cert.reverify(&mu, &nu));
    }

    #[test]
    fn two_dimensional_corners() {
        let corners = DiscreteMeasure::uniform(vec![
            pt(&[-1.0, -1.0]),
            pt(&[-1.0, 1.0]),
            pt(&[1.0, -1.0]),
            pt(&[1.0, 1.0]),
        ])
        .unwrap();
        let origin = DiscreteMeasure::dirac(pt(&[0.0, 0.0])).unwrap();
        let pos = check_convex_order_lp(&origin, &corners).unwrap();
        assert!(pos.is_dominated() && pos.reverify(&origin, &corners));
        let neg = check_convex_order_lp(&corners, &origin).unwrap();
        assert!(!neg.is_dominated() && neg.reverify(&corners, &origin));
        match neg {
            ConvexOrderCertificate::NotDominated { witness, .. } => assert!(witness.max_slope() <= 1.0 + 1e-12),
            _ => unreachable!(),
        }
    }

    #[test]
    fn reflexive() {
        let mu = m1(&[0.0, 0.25, 1.0], &[0.5, 0.25, 0.25]);
        assert!(check_convex_order_1d(&mu, &mu).unwrap().is_dominated());
        assert!(check_convex_order_lp(&mu, &mu).unwrap().is_dominated());
    }

    #[test]
    fn mass_mismatch_is_separated_by_a_constant() {
        let mu = m1(&[0.0], &[1.0]);
        let nu = m1(&[0.0], &[0.5]);
        let cert = check_convex_order_lp(&mu, &nu).unwrap();
        assert!(!cert.is_dominated() && cert.reverify(&mu, &nu));
    }

    #[test]
    fn certificate_json_shapes() {
        let mu = m1(&[-1.0, 1.0], &[0.5, 0.5]);
        let nu = m1(&[0.0], &[1.0]);
        let s = crate::json::to_string(&check_convex_order_1d(&mu, &nu).unwrap().json()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["verdict"], "not_dominated");
        assert_eq!(v["witness"]["pieces"].as_array().unwrap().len(), 2);
        let s = crate::json::to_string(&check_convex_order_1d(&nu, &mu).unwrap().json()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["verdict"], "dominated");
        assert!(v["coupling"]["weights"].is_array());
    }

    fn hat_support() -> Vec<Point> {
        (0..8).map(|i| pt(&[(2 * i + 1) as f64 / 16.0])).collect()
    }

    fn phi_integral(p: &DiscreteMeasure) -> f64 {
        let f = MomentMap::from_fn(1, |y| {
            let x = y.coords()[0];
            Point::scalar((4.0 - 32.0 * (x - 0.125).abs()).max(0.0))
        });
        p.iter().map(|(a, w)| w * f.eval(a).unwrap().coords()[0]).sum()
    }

    #[test]
    fn linear_functional_has_convex_levels() {
        let g = |p: &DiscreteMeasure| Ok(p.mean().coords()[0]);
        let r = level_set_convexity_probe(&g, &hat_support(), ProbeMode::Level, 50, 0).unwrap();
        assert!(r.pairs_tested > 10);
        assert!(r.max_deviation < 1e-12);
    }

    #[test]
    fn cubed_moment_has_convex_levels() {
        let g = |p: &DiscreteMeasure| Ok(phi_integral(p).powi(3));
        let r = level_set_convexity_probe(&g, &hat_support(), ProbeMode::Level, 50, 7).unwrap();
        assert!(r.pairs_tested > 10);
        assert!(r.max_deviation < 1e-9);
    }

    #[test]
    fn squared_moment_has_convex_sublevels() {
        let g = |p: &DiscreteMeasure| Ok((phi_integral(p) - 1.0).powi(2));
        let r = level_set_convexity_probe(&g, &hat_support(), ProbeMode::Sublevel, 100, 3).unwrap();
        assert_eq!(r.pairs_tested, 100);
        assert!(r.max_deviation <= 1e-14);
    }
}
