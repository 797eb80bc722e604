//! Three minimization problems whose infimum 0 is approached by explicit
//! sequences but never attained, with sweep runners producing convergence tables.
//!
//! * segment: `h(x, y, p) = h₁(x, p) + h₂(y, p)` over kernels with Lebesgue
//!   second marginal, where `h₁` is the KR distance from `p` to the segment
//!   `[ν¹ₓ, ν²ₓ]` and `h₂(y, p) = φ₂(y) g₁(p)`.
//! * two-line: `h(x, u) = (x − u₁)² + 1 − u₂²` with `ν` split over `y₂ = ±1`.
//! * square-gap: `h(x, u) = (x² − u²)²` with `ν` symmetric on `[−1, 1]`.

use std::time::Instant;

use serde::Serialize;

use crate::convex_order::ConvexOrderCertificate;
use crate::error::{Error, Result};
use crate::martingale::MongeMap;
use crate::measures::{ConditionalKernel, DiscreteMeasure, GridDensity1D, MomentMap, Point, YMeasure};
use crate::nonlinear::cost::{CostSpec, YIntegrand};
use crate::nonlinear::{check_convex_order, eval_j_gp, eval_j_xyp, map_to_plan, monge_cost};
use crate::transport::segment_distance_on_line;

/// Lipschitz constant of the hat functions `φ₁`, `φ₂`.
pub const HAT_LIPSCHITZ: f64 = 32.0;
/// Slack on the bound `J(σₙ) ≤ 2⁻ⁿ`.
pub const SEGMENT_TOL: f64 = 1e-6;
/// `h₂` vanishes along `σₙ` up to this much.
pub const H2_TOL: f64 = 1e-12;
/// Agreement of map cost and rebuilt-kernel cost.
pub const KERNEL_TOL: f64 = 1e-9;
/// Largest dyadic level accepted by the sweeps.
pub const MAX_LEVEL: u32 = 12;

fn hat(y: f64, center: f64) -> f64 {
    (4.0 - HAT_LIPSCHITZ * (y - center).abs()).max(0.0)
}

/// Hat of height 4 on `[0, ¼]` peaked at `⅛`; integrates to ½.
pub fn phi1(y: f64) -> f64 {
    hat(y, 0.125)
}

/// Hat of height 4 on `[½, ¾]` peaked at `⅝`; integrates to ½.
pub fn phi2(y: f64) -> f64 {
    hat(y, 0.625)
}

fn grid_integral(p: &GridDensity1D, f: impl Fn(f64) -> f64) -> f64 {
    let w = p.width();
    p.values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| v * w * f(p.midpoint(i)))
        .sum()
}

/// `g₁(p) = ∫ φ₁ dp` by the midpoint rule.
pub fn g1(p: &GridDensity1D) -> f64 {
    grid_integral(p, phi1)
}

/// `g₂(p) = ∫ φ₂ dp` by the midpoint rule.
pub fn g2(p: &GridDensity1D) -> f64 {
    grid_integral(p, phi2)
}

fn check_unit_grid(p: &GridDensity1D) -> Result<()> {
    if p.lo() != 0.0 || p.hi() != 1.0 {
        return Err(Error::Representation(format!(
            "segment cost needs densities on [0, 1], got [{}, {}]",
            p.lo(),
            p.hi()
        )));
    }
    Ok(())
}

/// `ν¹ₓ`: density 2 on `[0, (1+x)/4] ∪ [(3+x)/4, 1]`.
pub fn nu1(x: f64, cells: usize) -> Result<GridDensity1D> {
    GridDensity1D::from_intervals(0.0, 1.0, cells, &[(0.0, (1.0 + x) / 4.0), ((3.0 + x) / 4.0, 1.0)], 2.0)
}

/// `ν²ₓ`: density 2 on `[(1+x)/4, (3+x)/4]`.
pub fn nu2(x: f64, cells: usize) -> Result<GridDensity1D> {
    GridDensity1D::from_intervals(0.0, 1.0, cells, &[((1.0 + x) / 4.0, (3.0 + x) / 4.0)], 2.0)
}

fn unit_x(x: &Point) -> Result<f64> {
    match x.coords() {
        [v] if (0.0..=1.0).contains(v) => Ok(*v),
        c => Err(Error::Domain(format!("x must be a scalar in [0, 1], got {c:?}"))),
    }
}

/// `h₁(x, p) = min_t ‖p − (t ν¹ₓ + (1−t) ν²ₓ)‖_KR` on `p`'s grid. Both sides
/// are probability densities on `[0, 1]`, so the KR norm is `W₁` and the
/// minimization is one-dimensional.
pub fn h1(x: f64, p: &GridDensity1D) -> Result<f64> {
    check_unit_grid(p)?;
    let cells = p.cells();
    let e0 = nu1(x, cells)?.masses();
    let e1 = nu2(x, cells)?.masses();
    let z: Vec<f64> = (0..cells).map(|i| p.midpoint(i)).collect();
    Ok(segment_distance_on_line(&z, &p.masses(), &e0, &e1).value)
}

/// The cost `h₁(x, p) + φ₂(y) g₁(p)` as an `xyp` spec on grid conditionals.
pub fn segment_cost() -> Result<CostSpec> {
    Ok(CostSpec::xyp("nonattaining_segment", false, |x, p| {
        let x = unit_x(x)?;
        let g = p
            .as_grid()
            .ok_or_else(|| Error::Representation("segment cost needs grid conditionals".into()))?;
        let a = h1(x, g)?;
        let b = g1(g);
        let f: YIntegrand = Box::new(move |y: &Point| a + phi2(y.coords()[0]) * b);
        Ok(f)
    }))
}

/// The kernel `σₙ` on a uniform grid of `m` cells together with its cost.
#[derive(Debug, Clone)]
pub struct SegmentFixture {
    pub n: u32,
    pub m: usize,
    pub kernel: ConditionalKernel,
    pub cost: CostSpec,
}

/// `2^{n+1}` midpoints of `[0, 1]`, so every dyadic cell of level `n` holds two.
pub fn segment_x_atoms(n: u32) -> Vec<f64> {
    let count = 1usize << (n + 1);
    (0..count).map(|i| (2 * i + 1) as f64 / (2 * count) as f64).collect()
}

/// Builds `σₙ`: on the dyadic pair `[2k/2ⁿ, (2k+2)/2ⁿ)` the first cell gets
/// `ν¹_z` and the second `ν²_z` with `z = (2k+1)/2ⁿ`, so each pair mixes to Lebesgue.
pub fn build_segment_fixture(n: u32, m: usize) -> Result<SegmentFixture> {
    if n == 0 || n > MAX_LEVEL {
        return Err(Error::Domain(format!("level n must be in 1..={MAX_LEVEL}, got {n}")));
    }
    let align = 1usize << (n + 2);
    if m == 0 || !m.is_multiple_of(align) {
        return Err(Error::Alignment(format!("grid of {m} cells is not a multiple of {align}")));
    }
    let xs = segment_x_atoms(n);
    let scale = (1u64 << n) as f64;
    let mut conditionals = Vec::with_capacity(xs.len());
    for &x in &xs {
        let cell = (x * scale).floor() as u64;
        let z = (2 * (cell / 2) + 1) as f64 / scale;
        let s = if cell.is_multiple_of(2) { nu1(z, m)? } else { nu2(z, m)? };
        conditionals.push(YMeasure::Grid(s));
    }
    let weights = vec![1.0 / xs.len() as f64; xs.len()];
    let kernel = ConditionalKernel::new(xs.into_iter().map(Point::scalar).collect(), weights, conditionals)?;
    Ok(SegmentFixture { n, m, kernel, cost: segment_cost()? })
}

impl SegmentFixture {
    fn grids(&self) -> impl Iterator<Item = (f64, f64, &GridDensity1D)> {
        self.kernel
            .iter()
            .map(|(x, w, s)| (x.coords()[0], w, s.as_grid().expect("fixture conditionals are grids")))
    }

    /// `J(σₙ)`.
    pub fn value(&self) -> Result<f64> {
        eval_j_xyp(&self.kernel, &self.cost)
    }

    /// `h₁(xᵢ, σₙ^{xᵢ})` at every x-atom.
    pub fn h1_values(&self) -> Result<Vec<f64>> {
        self.grids().map(|(x, _, g)| h1(x, g)).collect()
    }

    /// `Σ μᵢ g₁(σ^{xᵢ}) g₂(σ^{xᵢ})`, the part of `J` coming from `h₂`.
    pub fn h2_part(&self) -> f64 {
        self.grids().map(|(_, w, g)| w * g1(g) * g2(g)).sum()
    }

    /// Largest cellwise mass difference between `mix(σₙ)` and Lebesgue.
    pub fn marginal_defect(&self) -> Result<f64> {
        let mix = self.kernel.mix()?;
        mix.sup_diff(&YMeasure::Grid(GridDensity1D::uniform(0.0, 1.0, self.m)?))
    }
}

/// One row of a convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: u32,
    pub measured: f64,
    pub bound: f64,
    pub marginal_defect: f64,
    pub seconds: f64,
    /// Contribution of `h₂` (segment problem only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h2_part: Option<f64>,
    /// Cost of the kernel rebuilt by `map_to_plan` (map examples only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_cost: Option<f64>,
    /// Whether `μ∘T_n⁻¹ ⪯_c ν` was certified (map examples only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominated: Option<bool>,
}

impl SweepRow {
    pub fn within_bound(&self, tol: f64) -> bool {
        self.measured <= self.bound + tol
    }
}

pub const CSV_HEADER: &str = "n,measured,bound,marginal_defect,seconds";

/// CSV with 17 significant digits; `timing = false` writes 0 seconds so
/// repeated runs are byte-identical.
pub fn rows_to_csv(rows: &[SweepRow], timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let secs = if timing { r.seconds } else { 0.0 };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n,
            crate::json::fmt_f64(r.measured),
            crate::json::fmt_f64(r.bound),
            crate::json::fmt_f64(r.marginal_defect),
            crate::json::fmt_f64(secs)
        ));
    }
    out
}

fn check_level(n_max: u32) -> Result<()> {
    if n_max == 0 || n_max > MAX_LEVEL {
        return Err(Error::Domain(format!("n_max must be in 1..={MAX_LEVEL}, got {n_max}")));
    }
    Ok(())
}

/// Sweep of `J(σₙ)` for `n = 1..=n_max` with `m(n)` grid cells.
pub fn run_segment_sweep(n_max: u32, m_rule: impl Fn(u32) -> usize) -> Result<Vec<SweepRow>> {
    check_level(n_max)?;
    (1..=n_max)
        .map(|n| {
            let start = Instant::now();
            let fx = build_segment_fixture(n, m_rule(n))?;
            let measured = fx.value()?;
            let h2 = fx.h2_part();
            let defect = fx.marginal_defect()?;
            let bound = 0.5f64.powi(n as i32);
            if !(-SEGMENT_TOL..=bound + SEGMENT_TOL).contains(&measured) || h2.abs() >= H2_TOL {
                return Err(Error::Contract(format!(
                    "level {n}: J = {measured:e} against bound {bound:e}, h2 part {h2:e}"
                )));
            }
            Ok(SweepRow {
                n,
                measured,
                bound,
                marginal_defect: defect,
                seconds: start.elapsed().as_secs_f64(),
                h2_part: Some(h2),
                kernel_cost: None,
                dominated: None,
            })
        })
        .collect()
}

/// Data of a Monge example: source, target, moment map, cost and the
/// minimizing map `T_n`.
#[derive(Debug, Clone)]
pub struct MapExample {
    pub n: u32,
    pub grid: usize,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub f: MomentMap,
    pub h: CostSpec,
    pub t: MongeMap,
    pub bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapExampleKind {
    TwoLine,
    SquareGap,
}

/// `G` midpoints `(2i+1)/(2G)` of `[0, 1]`, each of weight `1/G`.
fn source(grid: usize) -> Result<DiscreteMeasure> {
    let xs: Vec<f64> = (0..grid).map(|i| (2 * i + 1) as f64 / (2 * grid) as f64).collect();
    DiscreteMeasure::from_scalars(&xs, &vec![1.0 / grid as f64; grid])
}

fn check_grid(n: u32, grid: usize) -> Result<()> {
    if n == 0 || n > MAX_LEVEL {
        return Err(Error::Domain(format!("level n must be in 1..={MAX_LEVEL}, got {n}")));
    }
    let align = 1usize << n;
    if grid == 0 || !grid.is_multiple_of(align) {
        return Err(Error::Alignment(format!("grid of {grid} points is not a multiple of {align}")));
    }
    Ok(())
}

/// Stretch of the dyadic pair containing atom `i`: returns `(s, first)`
/// with `s ∈ [2k/2ⁿ, (2k+2)/2ⁿ)` and whether `i` lies in the first half.
fn stretch(i: usize, n: u32, grid: usize) -> (f64, bool) {
    let per_cell = grid >> n;
    let cell = i / per_cell;
    let k = (cell / 2) as f64;
    let x = (2 * i + 1) as f64 / (2 * grid) as f64;
    let scale = (1u64 << n) as f64;
    if cell.is_multiple_of(2) {
        (2.0 * x - 2.0 * k / scale, true)
    } else {
        (2.0 * x - (2.0 * k + 2.0) / scale, false)
    }
}

/// `T_n(x) = (2x − 2k/2ⁿ, 1)` on the first half of each dyadic pair and
/// `(2x − (2k+2)/2ⁿ, −1)` on the second; `ν` is uniform on `(2j+1)/G`
/// along both lines.
pub fn build_two_line_example(n: u32, grid: usize) -> Result<MapExample> {
    check_grid(n, grid)?;
    let mu = source(grid)?;
    let half = grid / 2;
    let mut atoms = Vec::with_capacity(grid);
    for side in [1.0, -1.0] {
        for j in 0..half {
            atoms.push(Point::from_slice(&[(2 * j + 1) as f64 / grid as f64, side]));
        }
    }
    let nu = DiscreteMeasure::new(atoms, vec![1.0 / grid as f64; grid])?;
    let values = (0..grid)
        .map(|i| {
            let (s, first) = stretch(i, n, grid);
            Point::from_slice(&[s, if first { 1.0 } else { -1.0 }])
        })
        .collect();
    Ok(MapExample {
        n,
        grid,
        mu,
        nu,
        f: MomentMap::identity(2),
        h: CostSpec::from_json_str(r#"{"kind":"xu","name":"two_line"}"#)?,
        t: MongeMap::new(values)?,
        bound: 0.5f64.powi(n as i32),
    })
}

/// `T_n(x) = 2x − 2k/2ⁿ` on the first half of each dyadic pair and
/// `−(2x − (2k+2)/2ⁿ)` on the second; `ν` is uniform on `±(2j+1)/G`.
pub fn build_square_gap_example(n: u32, grid: usize) -> Result<MapExample> {
    check_grid(n, grid)?;
    let mu = source(grid)?;
    let half = grid / 2;
    let mut ys = Vec::with_capacity(grid);
    for j in 0..half {
        let v = (2 * j + 1) as f64 / grid as f64;
        ys.push(v);
        ys.push(-v);
    }
    let nu = DiscreteMeasure::from_scalars(&ys, &vec![1.0 / grid as f64; grid])?;
    let values: Vec<f64> = (0..grid)
        .map(|i| {
            let (s, first) = stretch(i, n, grid);
            if first {
                s
            } else {
                -s
            }
        })
        .collect();
    Ok(MapExample {
        n,
        grid,
        mu,
        nu,
        f: MomentMap::identity(1),
        h: CostSpec::from_json_str(r#"{"kind":"xu","name":"square_gap"}"#)?,
        t: MongeMap::from_scalars(&values)?,
        bound: 16.0 * 0.25f64.powi(n as i32),
    })
}

impl MapExample {
    pub fn build(kind: MapExampleKind, n: u32, grid: usize) -> Result<Self> {
        match kind {
            MapExampleKind::TwoLine => build_two_line_example(n, grid),
            MapExampleKind::SquareGap => build_square_gap_example(n, grid),
        }
    }

    pub fn image(&self) -> Result<DiscreteMeasure> {
        self.t.image(&self.mu)
    }

    /// Largest atomwise difference between `μ∘T_n⁻¹` and `ν`.
    pub fn image_defect(&self) -> Result<f64> {
        Ok(self.image()?.sup_diff(&self.nu))
    }

    pub fn map_cost(&self) -> Result<f64> {
        monge_cost(&self.mu, &self.t, &self.h)
    }

    /// Dominance certificate for `μ∘T_n⁻¹` against `ν∘F⁻¹`.
    pub fn dominance(&self) -> Result<ConvexOrderCertificate> {
        check_convex_order(&self.image()?, &self.nu.pushforward(&self.f)?)
    }

    /// Kernel rebuilt from `T_n` and its cost `Σ μᵢ h(xᵢ, g(σ^{xᵢ}))`.
    pub fn kernel_cost(&self) -> Result<(ConditionalKernel, f64)> {
        let k = map_to_plan(&self.t, &self.mu, &self.nu, &self.f)?;
        let c = eval_j_gp(&k, &self.h, &self.f)?;
        Ok((k, c))
    }

    /// Certificate for the zero-cost candidate `T(x) = x`, which must be negative.
    pub fn identity_certificate(&self) -> Result<ConvexOrderCertificate> {
        if self.f.dim() != 1 {
            return Err(Error::Dimension { expected: 1, found: self.f.dim() });
        }
        check_convex_order(&self.mu, &self.nu.pushforward(&self.f)?)
    }
}

/// Sweep of the map cost, dominance verdict and rebuilt-kernel cost for
/// `n = 1..=n_max` with `grid(n)` source atoms.
pub fn run_example(kind: MapExampleKind, n_max: u32, grid_rule: impl Fn(u32) -> usize) -> Result<Vec<SweepRow>> {
    check_level(n_max)?;
    (1..=n_max)
        .map(|n| {
            let start = Instant::now();
            let ex = MapExample::build(kind, n, grid_rule(n))?;
            let measured = ex.map_cost()?;
            let defect = ex.image_defect()?;
            let dominated = ex.dominance()?.is_dominated();
            let (_, kc) = ex.kernel_cost()?;
            if defect != 0.0 || !dominated || (kc - measured).abs() > KERNEL_TOL || measured > ex.bound {
                return Err(Error::Contract(format!(
                    "level {n}: cost {measured:e} (bound {:e}), kernel cost {kc:e}, image defect {defect:e}, dominated {dominated}",
                    ex.bound
                )));
            }
            Ok(SweepRow {
                n,
                measured,
                bound: ex.bound,
                marginal_defect: defect,
                seconds: start.elapsed().as_secs_f64(),
                h2_part: None,
                kernel_cost: Some(kc),
                dominated: Some(dominated),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hats_integrate_to_one_half_and_separate_the_families() {
        let m = 64;
        let leb = GridDensity1D::uniform(0.0, 1.0, m).unwrap();
        assert!((g1(&leb) - 0.5).abs() < 1e-12);
        assert!((g2(&leb) - 0.5).abs() < 1e-12);
        for x in [0.0, 0.25, 0.5, 1.0] {
            let a = nu1(x, m).unwrap();
            let b = nu2(x, m).unwrap();
            assert!((g1(&a) - 1.0).abs() < 1e-12 && g2(&a).abs() < 1e-12);
            assert!(g1(&b).abs() < 1e-12 && (g2(&b) - 1.0).abs() < 1e-12);
            let sum = GridDensity1D::mixture(&[(0.5, &a), (0.5, &b)]).unwrap();
            assert!(sum.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn level_one_fixture_uses_the_first_pair() {
        let fx = build_segment_fixture(1, 8).unwrap();
        let s = fx.kernel.conditionals();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0].as_grid().unwrap(), &nu1(0.5, 8).unwrap());
        assert_eq!(s[1].as_grid().unwrap(), &nu1(0.5, 8).unwrap());
        assert_eq!(s[2].as_grid().unwrap(), &nu2(0.5, 8).unwrap());
        assert!(fx.marginal_defect().unwrap() < 1e-15);
        assert!(fx.h2_part().abs() < 1e-12);
        let j = fx.value().unwrap();
        assert!((0.0..=0.5 + 1e-6).contains(&j));
    }

    #[test]
    fn misaligned_grid_is_rejected() {
        assert!(matches!(build_segment_fixture(2, 24), Err(Error::Alignment(_))));
        assert!(matches!(build_two_line_example(3, 12), Err(Error::Alignment(_))));
    }

    #[test]
    fn h1_vanishes_on_the_segment() {
        let m = 32;
        let a = nu1(0.25, m).unwrap();
        let b = nu2(0.25, m).unwrap();
        let p = GridDensity1D::mixture(&[(0.3, &a), (0.7, &b)]).unwrap();
        assert!(h1(0.25, &p).unwrap() < 1e-12);
        assert!(h1(0.75, &p).unwrap() > 1e-3);
    }

    #[test]
    fn two_line_map_pushes_mu_to_nu() {
        let ex = build_two_line_example(3, 32).unwrap();
        assert_eq!(ex.image_defect().unwrap(), 0.0);
        assert!(ex.map_cost().unwrap() <= 0.125);
        let (_, kc) = ex.kernel_cost().unwrap();
        assert!((kc - ex.map_cost().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn square_gap_identity_is_not_dominated() {
        let ex = build_square_gap_example(2, 16).unwrap();
        assert_eq!(ex.image_defect().unwrap(), 0.0);
        assert!(ex.dominance().unwrap().is_dominated());
        let cert = ex.identity_certificate().unwrap();
        assert!(!cert.is_dominated());
        assert!(cert.reverify(&ex.mu, &ex.nu));
    }

    #[test]
    fn csv_has_fixed_header_and_zero_seconds() {
        let rows = run_segment_sweep(2, |n| 1 << (n + 4)).unwrap();
        let csv = rows_to_csv(&rows, false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,") && lines[1].ends_with(",0.0000000000000000e0"));
    }
}
