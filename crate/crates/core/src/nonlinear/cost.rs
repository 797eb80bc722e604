//! Cost functionals `h(x, y)`, `h(x, p)`, `h(x, y, p)` and `h(x, u)`.

use std::fmt;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, MomentMap, Point, YMeasure};
use crate::transport::kr_norm;

/// Integrand `y ↦ h(x, y, p)` with `x` and `p` already fixed.
pub type YIntegrand = Box<dyn Fn(&Point) -> f64>;

type XyFn = Arc<dyn Fn(&Point, &Point) -> f64 + Send + Sync>;
type XpFn = Arc<dyn Fn(&Point, &YMeasure) -> Result<f64> + Send + Sync>;
type XypFn = Arc<dyn Fn(&Point, &YMeasure) -> Result<YIntegrand> + Send + Sync>;
type XuFn = Arc<dyn Fn(&Point, &Point) -> f64 + Send + Sync>;
type XuGradFn = Arc<dyn Fn(&Point, &Point) -> Vec<f64> + Send + Sync>;
type VecFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type PointVecFn = Arc<dyn Fn(&Point) -> Vec<f64> + Send + Sync>;
type MeasureVecFn = Arc<dyn Fn(&YMeasure) -> Result<Vec<f64>> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostKind {
    Xy,
    Xp,
    Xyp,
    Xu,
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostKind::Xy => "xy",
            CostKind::Xp => "xp",
            CostKind::Xyp => "xyp",
            CostKind::Xu => "xu",
        })
    }
}

#[derive(Clone)]
enum Evaluator {
    Xy(XyFn),
    Xp(XpFn),
    Xyp(XypFn),
    Xu(XuFn),
}

/// The parts of a cost `h(x, p) = Ψ(g(p) − f(x))`.
#[derive(Clone)]
pub struct Composed {
    pub psi: VecFn,
    pub f: PointVecFn,
    pub g: MeasureVecFn,
    /// Whether the monotonicity probe found `Ψ` coordinatewise nondecreasing.
    pub psi_increasing: bool,
}

impl Composed {
    pub fn eval(&self, x: &Point, p: &YMeasure) -> Result<f64> {
        let g = (self.g)(p)?;
        let f = (self.f)(x);
        if g.len() != f.len() {
            return Err(Error::Dimension { expected: g.len(), found: f.len() });
        }
        let v: Vec<f64> = g.iter().zip(&f).map(|(a, b)| a - b).collect();
        Ok((self.psi)(&v))
    }
}

/// A cost function with its kind and declared properties.
#[derive(Clone)]
pub struct CostSpec {
    name: String,
    eval: Evaluator,
    /// Convex in `p` for `xp`/`xyp`, convex in `u` for `xu`.
    convex: bool,
    gradient: Option<XuGradFn>,
    composed: Option<Composed>,
    diagnostics: Vec<String>,
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostSpec")
            .field("name", &self.name)
            .field("kind", &self.kind())
            .field("convex", &self.convex)
            .field("composed", &self.composed.is_some())
            .finish()
    }
}

impl CostSpec {
    pub fn xy(name: &str, f: impl Fn(&Point, &Point) -> f64 + Send + Sync + 'static) -> Self {
        Self::build(name, Evaluator::Xy(Arc::new(f)), false)
    }

    pub fn xp(name: &str, convex: bool, f: impl Fn(&Point, &YMeasure) -> Result<f64> + Send + Sync + 'static) -> Self {
        Self::build(name, Evaluator::Xp(Arc::new(f)), convex)
    }

    /// `f(x, p)` returns the integrand over `y`, so per-`(x, p)` work is done once.
    pub fn xyp(
        name: &str,
        convex: bool,
        f: impl Fn(&Point, &YMeasure) -> Result<YIntegrand> + Send + Sync + 'static,
    ) -> Self {
        Self::build(name, Evaluator::Xyp(Arc::new(f)), convex)
    }

    pub fn xu(name: &str, convex: bool, f: impl Fn(&Point, &Point) -> f64 + Send + Sync + 'static) -> Self {
        Self::build(name, Evaluator::Xu(Arc::new(f)), convex)
    }

    fn build(name: &str, eval: Evaluator, convex: bool) -> Self {
        Self { name: name.to_string(), eval, convex, gradient: None, composed: None, diagnostics: Vec::new() }
    }

    /// Gradient of an `xu` cost in `u`.
    pub fn with_gradient(mut self, g: impl Fn(&Point, &Point) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    /// `h(x, p) = Ψ(g(p) − f(x))`. `Ψ` is probed for coordinatewise
    /// monotonicity on `[−2, 2]^dim`; a failed probe is recorded as a
    /// diagnostic rather than rejected, since minimizers may then fail to exist.
    pub fn composed(
        name: &str,
        convex: bool,
        dim: usize,
        psi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        f: impl Fn(&Point) -> Vec<f64> + Send + Sync + 'static,
        g: impl Fn(&YMeasure) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        let psi: VecFn = Arc::new(psi);
        let probe = psi_monotonicity_probe(&*psi, dim, 2.0, 9);
        let composed = Composed { psi, f: Arc::new(f), g: Arc::new(g), psi_increasing: probe.is_none() };
        let c2 = composed.clone();
        let mut spec = Self::build(name, Evaluator::Xp(Arc::new(move |x, p| c2.eval(x, p))), convex);
        if let Some((at, drop)) = probe {
            spec.diagnostics.push(format!(
                "Psi decreases by {drop:e} along a coordinate near {at:?}; a minimizer need not exist"
            ));
        }
        spec.composed = Some(composed);
        spec
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> CostKind {
        match self.eval {
            Evaluator::Xy(_) => CostKind::Xy,
            Evaluator::Xp(_) => CostKind::Xp,
            Evaluator::Xyp(_) => CostKind::Xyp,
            Evaluator::Xu(_) => CostKind::Xu,
        }
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn composed_parts(&self) -> Option<&Composed> {
        self.composed.as_ref()
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    pub fn require(&self, kind: CostKind) -> Result<()> {
        if self.kind() != kind {
            return Err(Error::Contract(format!("cost {:?} has kind {}, expected {kind}", self.name, self.kind())));
        }
        Ok(())
    }

    pub fn eval_xy(&self, x: &Point, y: &Point) -> Result<f64> {
        match &self.eval {
            Evaluator::Xy(f) => finite(f(x, y)),
            _ => self.require(CostKind::Xy).map(|_| 0.0),
        }
    }

    pub fn eval_xp(&self, x: &Point, p: &YMeasure) -> Result<f64> {
        match &self.eval {
            Evaluator::Xp(f) => finite(f(x, p)?),
            _ => self.require(CostKind::Xp).map(|_| 0.0),
        }
    }

    pub fn prepare_xyp(&self, x: &Point, p: &YMeasure) -> Result<YIntegrand> {
        match &self.eval {
            Evaluator::Xyp(f) => f(x, p),
            _ => Err(self.require(CostKind::Xyp).unwrap_err()),
        }
    }

    pub fn eval_xu(&self, x: &Point, u: &Point) -> Result<f64> {
        match &self.eval {
            Evaluator::Xu(f) => finite(f(x, u)),
            _ => self.require(CostKind::Xu).map(|_| 0.0),
        }
    }

    /// `∇_u h(x, u)`: the supplied gradient, or central differences.
    pub fn gradient_u(&self, x: &Point, u: &Point) -> Result<Vec<f64>> {
        self.require(CostKind::Xu)?;
        if let Some(g) = &self.gradient {
            return Ok(g(x, u));
        }
        let mut out = Vec::with_capacity(u.dim());
        for k in 0..u.dim() {
            let step = 1e-6 * (1.0 + u.coords()[k].abs());
            let mut up = u.coords().to_vec();
            let mut dn = u.coords().to_vec();
            up[k] += step;
            dn[k] -= step;
            let hu = self.eval_xu(x, &Point::from_slice(&up))?;
            let hd = self.eval_xu(x, &Point::from_slice(&dn))?;
            out.push((hu - hd) / (2.0 * step));
        }
        Ok(out)
    }

    /// Built-in cost selected by name, e.g. `{"kind":"xu","name":"squared_diff"}`.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let r: CostRepr = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("cost spec: {e}")))?;
        builtin(&r)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| Error::Parse(format!("cost spec: {e}")))?;
        Self::from_json(&v)
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("cost evaluated to {v}")))
    }
}

/// Looks for a coordinate direction along which `Ψ` decreases, over the grid
/// `{−r, …, r}^dim` with `steps` points per axis. Returns the worst point and drop.
pub fn psi_monotonicity_probe(psi: &dyn Fn(&[f64]) -> f64, dim: usize, r: f64, steps: usize) -> Option<(Vec<f64>, f64)> {
    let steps = steps.max(2);
    let h = 2.0 * r / (steps - 1) as f64;
    let total = steps.pow(dim as u32);
    let mut worst: Option<(Vec<f64>, f64)> = None;
    for idx in 0..total {
        let mut rem = idx;
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                let c = rem % steps;
                rem /= steps;
                -r + h * c as f64
            })
            .collect();
        let base = psi(&v);
        for k in 0..dim {
            if v[k] + h > r + 1e-12 {
                continue;
            }
            let mut w = v.clone();
            w[k] += h;
            let drop = base - psi(&w);
            if drop > 1e-12 && worst.as_ref().is_none_or(|(_, d)| drop > *d) {
                worst = Some((v.clone(), drop));
            }
        }
    }
    worst
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CostRepr {
    kind: String,
    name: String,
    #[serde(default)]
    value: Option<f64>,
    #[serde(default)]
    reference: Option<DiscreteMeasure>,
}

fn sq(v: f64) -> f64 {
    v * v
}

fn builtin(r: &CostRepr) -> Result<CostSpec> {
    let unknown = || Error::Parse(format!("unknown {} cost {:?}", r.kind, r.name));
    let spec = match (r.kind.as_str(), r.name.as_str()) {
        ("xy", "distance") => CostSpec::xy("distance", |x, y| x.dist(y)),
        ("xy", "squared_distance") => CostSpec::xy("squared_distance", |x, y| sq(x.dist(y))),
        ("xy", "neg_product") => CostSpec::xy("neg_product", |x, y| {
            -x.coords().iter().zip(y.coords()).map(|(a, b)| a * b).sum::<f64>()
        }),
        ("xp", "constant") => {
            let c = r.value.ok_or_else(|| Error::Parse("constant cost needs \"value\"".into()))?;
            CostSpec::xp("constant", true, move |_, _| Ok(c))
        }
        ("xp", "kr_to_reference") => {
            let reference = r
                .reference
                .clone()
                .ok_or_else(|| Error::Parse("kr_to_reference needs \"reference\"".into()))?;
            CostSpec::xp("kr_to_reference", true, move |_, p| kr_norm(&p.to_discrete(), &reference))
        }
        ("xp", "squared_mean_gap") => CostSpec::xp("squared_mean_gap", true, |x, p| {
            let m = MomentMap::identity(p.dim()).g_eval(p)?;
            Ok(m.coords().iter().zip(x.coords()).map(|(a, b)| sq(a - b)).sum())
        }),
        ("xyp", "nonattaining_segment") => crate::nonattainment::segment_cost()?,
        ("xu", "squared_diff") => CostSpec::xu("squared_diff", true, |x, u| {
            x.coords().iter().zip(u.coords()).map(|(a, b)| sq(a - b)).sum()
        })
        .with_gradient(|x, u| u.coords().iter().zip(x.coords()).map(|(b, a)| 2.0 * (b - a)).collect()),
        ("xu", "abs_diff") => CostSpec::xu("abs_diff", true, |x, u| x.dist(u)).with_gradient(|x, u| {
            let d = x.dist(u);
            if d == 0.0 {
                vec![0.0; u.dim()]
            } else {
                u.coords().iter().zip(x.coords()).map(|(b, a)| (b - a) / d).collect()
            }
        }),
        ("xu", "two_line") => CostSpec::xu("two_line", false, two_line).with_gradient(|x, u| {
            vec![2.0 * (u.coords()[0] - x.coords()[0]), -2.0 * u.coords()[1]]
        }),
        ("xu", "square_gap") => CostSpec::xu("square_gap", false, square_gap).with_gradient(|x, u| {
            let (a, b) = (x.coords()[0], u.coords()[0]);
            vec![-4.0 * b * (a * a - b * b)]
        }),
        _ => return Err(unknown()),
    };
    if r.value.is_some() && r.name != "constant" {
        return Err(Error::Parse(format!("cost {:?} takes no \"value\"", r.name)));
    }
    if r.reference.is_some() && r.name != "kr_to_reference" {
        return Err(Error::Parse(format!("cost {:?} takes no \"reference\"", r.name)));
    }
    Ok(spec)
}

/// `(x − u₁)² + 1 − u₂²`.
pub fn two_line(x: &Point, u: &Point) -> f64 {
    let (a, u1, u2) = (x.coords()[0], u.coords()[0], u.coords()[1]);
    sq(a - u1) + 1.0 - sq(u2)
}

/// `(x² − u²)²`.
pub fn square_gap(x: &Point, u: &Point) -> f64 {
    let (a, b) = (x.coords()[0], u.coords()[0]);
    sq(a * a - b * b)
}
