//! Discrete measures, piecewise-constant densities on intervals, conditional
//! kernels `σ(dx dy) = σˣ(dy) μ(dx)`, and moment maps `g(p) = ∫ F dp`.
//!
//! Every value here is immutable once built. Constructors validate and
//! canonicalize; operations never mutate their inputs.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atoms closer than this in sup-norm are the same atom.
pub const MERGE_TOL: f64 = 1e-12;
/// Mass defect allowed for a probability measure.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Domain("point must have at least one coordinate".into()));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate {bad}")));
        }
        Ok(Self(coords))
    }

    /// One-dimensional point. Finiteness is checked when the point enters a measure.
    pub fn scalar(x: f64) -> Self {
        Self(vec![x])
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Self(coords.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn sup_dist(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Euclidean distance.
    pub fn dist(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}

/// Tolerant lookup of atoms, keyed on the first coordinate.
#[derive(Clone, Debug)]
pub struct AtomIndex {
    keys: Vec<(f64, usize)>,
    atoms: Vec<Point>,
}

impl AtomIndex {
    pub fn new(atoms: &[Point]) -> Self {
        let mut keys: Vec<(f64, usize)> = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.coords()[0], i))
            .collect();
        keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self {
            keys,
            atoms: atoms.to_vec(),
        }
    }

    /// Smallest index whose atom is within `tol` of `p` in sup-norm.
    pub fn find(&self, p: &Point, tol: f64) -> Option<usize> {
        let key = p.coords()[0];
        let start = self.keys.partition_point(|(k, _)| *k < key - tol);
        self.keys[start..]
            .iter()
            .take_while(|(k, _)| *k <= key + tol)
            .filter(|(_, i)| {
                let a = &self.atoms[*i];
                a.dim() == p.dim() && a.sup_dist(p) <= tol
            })
            .map(|(_, i)| *i)
            .min()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Finitely supported nonnegative measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiscreteRepr", into = "DiscreteRepr")]
pub struct DiscreteMeasure {
    atoms: Vec<Point>,
    weights: Vec<f64>,
    total_mass: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscreteRepr {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<DiscreteRepr> for DiscreteMeasure {
    type Error = Error;
    fn try_from(r: DiscreteRepr) -> Result<Self> {
        let atoms = r.atoms.into_iter().map(Point::new).collect::<Result<Vec<_>>>()?;
        DiscreteMeasure::new(atoms, r.weights)
    }
}

impl From<DiscreteMeasure> for DiscreteRepr {
    fn from(m: DiscreteMeasure) -> Self {
        DiscreteRepr {
            atoms: m.atoms.into_iter().map(Vec::from).collect(),
            weights: m.weights,
        }
    }
}

impl DiscreteMeasure {
    /// Builds a measure, merging atoms closer than [`MERGE_TOL`]. The merged atom
    /// keeps the position and the slot of its first occurrence.
    pub fn new(atoms: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        let dim = atoms[0].dim();
        for a in &atoms {
            if a.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: a.dim(),
                });
            }
            if dim == 0 || !a.is_finite() {
                return Err(Error::Domain(format!("invalid atom {:?}", a.coords())));
            }
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidMeasure(format!("weight {i} is {w}")));
            }
        }
        let (atoms, weights) = canonicalize(atoms, weights);
        let total_mass = weights.iter().sum();
        Ok(Self {
            atoms,
            weights,
            total_mass,
        })
    }

    pub fn dirac(p: Point) -> Result<Self> {
        Self::new(vec![p], vec![1.0])
    }

    pub fn uniform(atoms: Vec<Point>) -> Result<Self> {
        let w = 1.0 / atoms.len().max(1) as f64;
        let n = atoms.len();
        Self::new(atoms, vec![w; n])
    }

    /// One-dimensional measure from positions and weights.
    pub fn from_scalars(xs: &[f64], ws: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| Point::scalar(x)).collect(), ws.to_vec())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn atoms(&self) -> &[Point] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.atoms.iter().zip(self.weights.iter().copied())
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass - 1.0).abs() <= MASS_TOL
    }

    pub fn require_probability(&self, tol: f64) -> Result<()> {
        if (self.total_mass - 1.0).abs() > tol {
            return Err(Error::InvalidMeasure(format!(
                "expected a probability measure, total mass is {}",
                self.total_mass
            )));
        }
        Ok(())
    }

    /// Positions of a one-dimensional measure.
    pub fn scalars(&self) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                found: self.dim(),
            });
        }
        Ok(self.atoms.iter().map(|a| a.coords()[0]).collect())
    }

    /// `∫ x dμ / μ(X)`.
    pub fn mean(&self) -> Point {
        let mut acc = vec![0.0; self.dim()];
        for (a, w) in self.iter() {
            for (s, c) in acc.iter_mut().zip(a.coords()) {
                *s += w * c;
            }
        }
        let mass = if self.total_mass > 0.0 { self.total_mass } else { 1.0 };
        Point(acc.into_iter().map(|s| s / mass).collect())
    }

    /// The same measure without zero-weight atoms.
    pub fn support(&self) -> Self {
        let (atoms, weights): (Vec<_>, Vec<_>) = self
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(a, w)| (a.clone(), w))
            .unzip();
        if atoms.is_empty() {
            return self.clone();
        }
        let total_mass = weights.iter().sum();
        Self {
            atoms,
            weights,
            total_mass,
        }
    }

    /// `Σ cᵢ mᵢ` for nonnegative coefficients.
    pub fn mixture(parts: &[(f64, &DiscreteMeasure)]) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (c, m) in parts {
            if !c.is_finite() || *c < 0.0 {
                return Err(Error::InvalidMeasure(format!("mixture coefficient {c}")));
            }
            for (a, w) in m.iter() {
                atoms.push(a.clone());
                weights.push(c * w);
            }
        }
        Self::new(atoms, weights)
    }

    /// Largest weight difference over the union of supports.
    pub fn sup_diff(&self, other: &DiscreteMeasure) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        let index = AtomIndex::new(&other.atoms);
        let mut matched = vec![false; other.len()];
        let mut worst: f64 = 0.0;
        for (a, w) in self.iter() {
            match index.find(a, MERGE_TOL) {
                Some(j) => {
                    matched[j] = true;
                    worst = worst.max((w - other.weights[j]).abs());
                }
                None => worst = worst.max(w),
            }
        }
        for (j, m) in matched.iter().enumerate() {
            if !m {
                worst = worst.max(other.weights[j]);
            }
        }
        worst
    }

    /// Image measure `m ∘ F⁻¹`.
    pub fn pushforward(&self, f: &MomentMap) -> Result<Self> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| f.eval(a))
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms, self.weights.clone())
    }
}

fn canonicalize(atoms: Vec<Point>, weights: Vec<f64>) -> (Vec<Point>, Vec<f64>) {
    let n = atoms.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| atoms[a].lex_cmp(&atoms[b]).then(a.cmp(&b)));

    // group id per original index; groups carry (first original index, mass)
    let mut group_of = vec![usize::MAX; n];
    let mut groups: Vec<(usize, f64)> = Vec::new();
    for (s, &idx) in order.iter().enumerate() {
        let key = atoms[idx].coords()[0];
        let mut found = None;
        for &prev in order[..s].iter().rev() {
            if atoms[prev].coords()[0] < key - MERGE_TOL {
                break;
            }
            if atoms[prev].sup_dist(&atoms[idx]) <= MERGE_TOL {
                found = Some(group_of[prev]);
                break;
            }
        }
        match found {
            Some(g) => {
                group_of[idx] = g;
                groups[g].0 = groups[g].0.min(idx);
                groups[g].1 += weights[idx];
            }
            None => {
                group_of[idx] = groups.len();
                groups.push((idx, weights[idx]));
            }
        }
    }
    if groups.len() == n {
        return (atoms, weights);
    }
    groups.sort_by_key(|g| g.0);
    let out_atoms = groups.iter().map(|g| atoms[g.0].clone()).collect();
    let out_weights = groups.iter().map(|g| g.1).collect();
    (out_atoms, out_weights)
}

/// Piecewise-constant density on `[lo, hi]` with equal cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridDensity1D {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRepr {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl TryFrom<GridRepr> for GridDensity1D {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        GridDensity1D::new(r.lo, r.hi, r.values)
    }
}

impl From<GridDensity1D> for GridRepr {
    fn from(g: GridDensity1D) -> Self {
        GridRepr {
            lo: g.lo,
            hi: g.hi,
            values: g.values,
        }
    }
}

impl GridDensity1D {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidMeasure(format!("bad interval [{lo}, {hi}]")));
        }
        if values.is_empty() {
            return Err(Error::InvalidMeasure("grid needs at least one cell".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidMeasure(format!("cell {i} has density {v}")));
        }
        Ok(Self { lo, hi, values })
    }

    /// Normalized Lebesgue measure on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Self::new(lo, hi, vec![1.0 / (hi - lo); cells])
    }

    /// Density `height` on the union of `intervals` (assumed disjoint), 0 elsewhere.
    /// Cells cut by an interval endpoint get the covered fraction of `height`.
    pub fn from_intervals(
        lo: f64,
        hi: f64,
        cells: usize,
        intervals: &[(f64, f64)],
        height: f64,
    ) -> Result<Self> {
        let width = (hi - lo) / cells as f64;
        let values = (0..cells)
            .map(|i| {
                let a = lo + i as f64 * width;
                let b = lo + (i + 1) as f64 * width;
                let covered: f64 = intervals
                    .iter()
                    .map(|&(s, e)| (e.min(b) - s.max(a)).max(0.0))
                    .sum();
                if covered >= width {
                    height
                } else {
                    height * covered / width
                }
            })
            .collect();
        Self::new(lo, hi, values)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.values.len() as f64
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    pub fn cell_mass(&self, i: usize) -> f64 {
        self.values[i] * self.width()
    }

    pub fn masses(&self) -> Vec<f64> {
        let w = self.width();
        self.values.iter().map(|v| v * w).collect()
    }

    pub fn mass(&self) -> f64 {
        self.masses().iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.mass() - 1.0).abs() <= MASS_TOL
    }

    pub fn same_grid(&self, other: &GridDensity1D) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.cells() == other.cells()
    }

    /// One atom per cell at the midpoint, carrying the cell mass.
    pub fn sample_grid(&self) -> DiscreteMeasure {
        let atoms = (0..self.cells()).map(|i| Point::scalar(self.midpoint(i))).collect();
        DiscreteMeasure::new(atoms, self.masses()).expect("grid cells are distinct and finite")
    }

    pub fn mixture(parts: &[(f64, &GridDensity1D)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidMeasure("empty mixture".into()))?
            .1;
        let mut values = vec![0.0; first.cells()];
        for (c, g) in parts {
            if !g.same_grid(first) {
                return Err(Error::Representation("grids differ".into()));
            }
            for (v, gv) in values.iter_mut().zip(&g.values) {
                *v += c * gv;
            }
        }
        Self::new(first.lo, first.hi, values)
    }
}

/// A probability measure on `Y`, either discrete or a grid density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum YMeasure {
    Discrete(DiscreteMeasure),
    Grid(GridDensity1D),
}

impl From<DiscreteMeasure> for YMeasure {
    fn from(m: DiscreteMeasure) -> Self {
        YMeasure::Discrete(m)
    }
}

impl From<GridDensity1D> for YMeasure {
    fn from(g: GridDensity1D) -> Self {
        YMeasure::Grid(g)
    }
}

impl YMeasure {
    pub fn total_mass(&self) -> f64 {
        match self {
            YMeasure::Discrete(m) => m.total_mass(),
            YMeasure::Grid(g) => g.mass(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            YMeasure::Discrete(m) => m.dim(),
            YMeasure::Grid(_) => 1,
        }
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= MASS_TOL
    }

    /// Discrete view; grid densities are sampled at cell midpoints.
    pub fn to_discrete(&self) -> DiscreteMeasure {
        match self {
            YMeasure::Discrete(m) => m.clone(),
            YMeasure::Grid(g) => g.sample_grid(),
        }
    }

    pub fn as_grid(&self) -> Option<&GridDensity1D> {
        match self {
            YMeasure::Grid(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMeasure> {
        match self {
            YMeasure::Discrete(m) => Some(m),
            _ => None,
        }
    }

    /// `Σ cᵢ pᵢ`; all parts must share a representation (and a grid).
    pub fn mixture(parts: &[(f64, &YMeasure)]) -> Result<Self> {
        match parts.first() {
            None => Err(Error::InvalidMeasure("empty mixture".into())),
            Some((_, YMeasure::Discrete(_))) => {
                let ds = parts
                    .iter()
                    .map(|(c, m)| match m {
                        YMeasure::Discrete(d) => Ok((*c, d)),
                        YMeasure::Grid(_) => Err(mixed()),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(YMeasure::Discrete(DiscreteMeasure::mixture(&ds)?))
            }
            Some((_, YMeasure::Grid(_))) => {
                let gs = parts
                    .iter()
                    .map(|(c, m)| match m {
                        YMeasure::Grid(g) => Ok((*c, g)),
                        YMeasure::Discrete(_) => Err(mixed()),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(YMeasure::Grid(GridDensity1D::mixture(&gs)?))
            }
        }
    }

    /// Largest mass difference per atom or per cell.
    pub fn sup_diff(&self, other: &YMeasure) -> Result<f64> {
        match (self, other) {
            (YMeasure::Discrete(a), YMeasure::Discrete(b)) => Ok(a.sup_diff(b)),
            (YMeasure::Grid(a), YMeasure::Grid(b)) if a.same_grid(b) => Ok(a
                .masses()
                .iter()
                .zip(b.masses())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)),
            _ => Err(mixed()),
        }
    }
}

fn mixed() -> Error {
    Error::Representation("conditionals mix discrete and grid representations".into())
}

/// Mass vectors of several measures over one shared support.
#[derive(Clone, Debug)]
pub struct CommonSupport {
    pub points: Vec<Point>,
    pub masses: Vec<Vec<f64>>,
}

/// Expresses every measure as a mass vector over a common support: the cells of a
/// shared grid, or the canonical union of discrete atoms.
pub fn common_support(measures: &[&YMeasure]) -> Result<CommonSupport> {
    let first = measures
        .first()
        .ok_or_else(|| Error::InvalidMeasure("no measures".into()))?;
    match first {
        YMeasure::Grid(g0) => {
            let mut masses = Vec::with_capacity(measures.len());
            for m in measures {
                match m {
                    YMeasure::Grid(g) if g.same_grid(g0) => masses.push(g.masses()),
                    YMeasure::Grid(_) => return Err(Error::Representation("grids differ".into())),
                    YMeasure::Discrete(_) => return Err(mixed()),
                }
            }
            let points = (0..g0.cells()).map(|i| Point::scalar(g0.midpoint(i))).collect();
            Ok(CommonSupport { points, masses })
        }
        YMeasure::Discrete(_) => {
            let ds = measures
                .iter()
                .map(|m| m.as_discrete().ok_or_else(mixed))
                .collect::<Result<Vec<_>>>()?;
            let union = DiscreteMeasure::new(
                ds.iter().flat_map(|d| d.atoms().iter().cloned()).collect(),
                ds.iter().flat_map(|d| d.weights().iter().copied()).collect(),
            )?;
            let points = union.atoms().to_vec();
            let index = AtomIndex::new(&points);
            let masses = ds
                .iter()
                .map(|d| {
                    let mut v = vec![0.0; points.len()];
                    for (a, w) in d.iter() {
                        let k = index.find(a, MERGE_TOL).expect("atom belongs to the union");
                        v[k] += w;
                    }
                    v
                })
                .collect();
            Ok(CommonSupport { points, masses })
        }
    }
}

/// An x-indexed family of conditional probability measures together with the
/// first marginal `μ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct ConditionalKernel {
    x_atoms: Vec<Point>,
    x_weights: Vec<f64>,
    conditionals: Vec<YMeasure>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelRepr {
    x_atoms: Vec<Point>,
    x_weights: Vec<f64>,
    conditionals: Vec<YMeasure>,
}

impl TryFrom<KernelRepr> for ConditionalKernel {
    type Error = Error;
    fn try_from(r: KernelRepr) -> Result<Self> {
        ConditionalKernel::new(r.x_atoms, r.x_weights, r.conditionals)
    }
}

impl From<ConditionalKernel> for KernelRepr {
    fn from(k: ConditionalKernel) -> Self {
        KernelRepr {
            x_atoms: k.x_atoms,
            x_weights: k.x_weights,
            conditionals: k.conditionals,
        }
    }
}

impl ConditionalKernel {
    pub fn new(x_atoms: Vec<Point>, x_weights: Vec<f64>, conditionals: Vec<YMeasure>) -> Result<Self> {
        if x_atoms.is_empty() || x_atoms.len() != x_weights.len() || x_atoms.len() != conditionals.len() {
            return Err(Error::InvalidMeasure(format!(
                "kernel has {} x-atoms, {} weights, {} conditionals",
                x_atoms.len(),
                x_weights.len(),
                conditionals.len()
            )));
        }
        let dim = x_atoms[0].dim();
        for a in &x_atoms {
            if a.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: a.dim(),
                });
            }
            if !a.is_finite() {
                return Err(Error::Domain(format!("invalid x-atom {:?}", a.coords())));
            }
        }
        if x_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("negative or non-finite x-weight".into()));
        }
        let total: f64 = x_weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("x-weights sum to {total}")));
        }
        for (i, c) in conditionals.iter().enumerate() {
            if !c.is_probability() {
                return Err(Error::InvalidMeasure(format!(
                    "conditional {i} has mass {}",
                    c.total_mass()
                )));
            }
        }
        Ok(Self {
            x_atoms,
            x_weights,
            conditionals,
        })
    }

    pub fn len(&self) -> usize {
        self.x_atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_atoms.is_empty()
    }

    pub fn x_atoms(&self) -> &[Point] {
        &self.x_atoms
    }

    pub fn x_weights(&self) -> &[f64] {
        &self.x_weights
    }

    pub fn conditionals(&self) -> &[YMeasure] {
        &self.conditionals
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64, &YMeasure)> {
        self.x_atoms
            .iter()
            .zip(self.x_weights.iter().copied())
            .zip(&self.conditionals)
            .map(|((x, w), c)| (x, w, c))
    }

    pub fn x_marginal(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::new(self.x_atoms.clone(), self.x_weights.clone())
    }

    /// Second marginal `Σᵢ μᵢ σ^{xᵢ}` of the induced plan.
    pub fn mix(&self) -> Result<YMeasure> {
        let parts: Vec<(f64, &YMeasure)> = self
            .x_weights
            .iter()
            .copied()
            .zip(&self.conditionals)
            .collect();
        YMeasure::mixture(&parts)
    }
}

type PointFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

/// `F: Y → ℝᵈ`, the integrand of the moment functional `g(p) = ∫ F dp`.
#[derive(Clone)]
pub enum MomentMap {
    Identity { dim: usize },
    Table {
        dim: usize,
        index: AtomIndex,
        values: Vec<Point>,
    },
    Func { dim: usize, f: PointFn },
}

impl fmt::Debug for MomentMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentMap::Identity { dim } => write!(f, "MomentMap::Identity({dim})"),
            MomentMap::Table { dim, values, .. } => {
                write!(f, "MomentMap::Table(dim {dim}, {} atoms)", values.len())
            }
            MomentMap::Func { dim, .. } => write!(f, "MomentMap::Func({dim})"),
        }
    }
}

impl MomentMap {
    pub fn identity(dim: usize) -> Self {
        MomentMap::Identity { dim }
    }

    /// Atom-wise values, `values[i] = F(atoms[i])`.
    pub fn table(atoms: Vec<Point>, values: Vec<Point>) -> Result<Self> {
        if atoms.len() != values.len() || values.is_empty() {
            return Err(Error::Domain(format!(
                "moment table has {} atoms and {} values",
                atoms.len(),
                values.len()
            )));
        }
        let dim = values[0].dim();
        for v in &values {
            if v.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: v.dim(),
                });
            }
            if !v.is_finite() {
                return Err(Error::Domain(format!("non-finite moment value {:?}", v.coords())));
            }
        }
        Ok(MomentMap::Table {
            dim,
            index: AtomIndex::new(&atoms),
            values,
        })
    }

    pub fn from_fn(dim: usize, f: impl Fn(&Point) -> Point + Send + Sync + 'static) -> Self {
        MomentMap::Func { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            MomentMap::Identity { dim } | MomentMap::Table { dim, .. } | MomentMap::Func { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, y: &Point) -> Result<Point> {
        let v = match self {
            MomentMap::Identity { dim } => {
                if y.dim() != *dim {
                    return Err(Error::Dimension {
                        expected: *dim,
                        found: y.dim(),
                    });
                }
                y.clone()
            }
            MomentMap::Table { index, values, .. } => match index.find(y, MERGE_TOL) {
                Some(i) => values[i].clone(),
                None => {
                    return Err(Error::Domain(format!(
                        "moment map undefined at {:?}",
                        y.coords()
                    )))
                }
            },
            MomentMap::Func { dim, f } => {
                let v = f(y);
                if v.dim() != *dim {
                    return Err(Error::Dimension {
                        expected: *dim,
                        found: v.dim(),
                    });
                }
                v
            }
        };
        if !v.is_finite() {
            return Err(Error::Domain(format!(
                "moment map is not finite at {:?}",
                y.coords()
            )));
        }
        Ok(v)
    }

    /// `g(p) = ∫ F dp`; grid densities integrate by the midpoint rule.
    pub fn g_eval(&self, p: &YMeasure) -> Result<Point> {
        let mut acc = vec![0.0; self.dim()];
        let mut add = |y: &Point, w: f64| -> Result<()> {
            if w == 0.0 {
                return Ok(());
            }
            let v = self.eval(y)?;
            for (s, c) in acc.iter_mut().zip(v.coords()) {
                *s += w * c;
            }
            Ok(())
        };
        match p {
            YMeasure::Discrete(m) => {
                for (a, w) in m.iter() {
                    add(a, w)?;
                }
            }
            YMeasure::Grid(g) => {
                for i in 0..g.cells() {
                    add(&Point::scalar(g.midpoint(i)), g.cell_mass(i))?;
                }
            }
        }
        Ok(Point(acc))
    }

    pub fn values_on(&self, atoms: &[Point]) -> Result<Vec<Point>> {
        atoms.iter().map(|a| self.eval(a)).collect()
    }
}

/// Image of `m` under `f`, duplicates merged.
pub fn pushforward(m: &DiscreteMeasure, f: &MomentMap) -> Result<DiscreteMeasure> {
    m.pushforward(f)
}

/// Second marginal of the plan induced by `k`.
pub fn mix(k: &ConditionalKernel) -> Result<YMeasure> {
    k.mix()
}

pub fn g_eval(p: &YMeasure, f: &MomentMap) -> Result<Point> {
    f.g_eval(p)
}

pub fn sample_grid(g: &GridDensity1D) -> DiscreteMeasure {
    g.sample_grid()
}
