//! Nonlinear Kantorovich functionals and the reductions between kernels,
//! fixed-barycenter plans and Monge maps.

pub mod cost;
pub mod kfix;
pub mod monge;
pub mod reduction;

pub use cost::{CostKind, CostSpec, YIntegrand};
pub use kfix::{collapse_to_kernel, solve_fixed_barycenter, Dictionary, FixedBarycenterPlan};
pub use monge::{solve_monge_cd, MongeMethod, MongeOptions, MongeSolution};
pub use reduction::{check_convex_order, map_to_plan, monge_cost, plan_to_map};

use crate::error::Result;
use crate::measures::{ConditionalKernel, MomentMap, YMeasure};

/// `Σ_i μ_i h(x_i, σ^{x_i})`.
pub fn eval_j_xp(k: &ConditionalKernel, h: &CostSpec) -> Result<f64> {
    h.require(CostKind::Xp)?;
    let mut total = 0.0;
    for (x, w, s) in k.iter() {
        total += w * h.eval_xp(x, s)?;
    }
    Ok(total)
}

/// `∫ h(x, y, σˣ) σˣ(dy)` for one conditional; grids use the midpoint rule.
pub fn integrate_xyp(h: &CostSpec, x: &crate::measures::Point, s: &YMeasure) -> Result<f64> {
    let f = h.prepare_xyp(x, s)?;
    let mut total = 0.0;
    match s {
        YMeasure::Discrete(m) => {
            for (y, w) in m.iter() {
                if w != 0.0 {
                    total += w * f(y);
                }
            }
        }
        YMeasure::Grid(g) => {
            for (i, w) in g.masses().into_iter().enumerate() {
                if w != 0.0 {
                    total += w * f(&crate::measures::Point::scalar(g.midpoint(i)));
                }
            }
        }
    }
    Ok(total)
}

/// `Σ_i μ_i ∫ h(x_i, y, σ^{x_i}) σ^{x_i}(dy)`.
pub fn eval_j_xyp(k: &ConditionalKernel, h: &CostSpec) -> Result<f64> {
    h.require(CostKind::Xyp)?;
    let mut total = 0.0;
    for (x, w, s) in k.iter() {
        if w != 0.0 {
            total += w * integrate_xyp(h, x, s)?;
        }
    }
    Ok(total)
}

/// `Σ_i μ_i h(x_i, g(σ^{x_i}))`, summed in the same order as [`monge_cost`].
pub fn eval_j_gp(k: &ConditionalKernel, h: &CostSpec, f: &MomentMap) -> Result<f64> {
    h.require(CostKind::Xu)?;
    let mut total = 0.0;
    for (x, w, s) in k.iter() {
        total += w * h.eval_xu(x, &f.g_eval(s)?)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{DiscreteMeasure, Point};

    #[test]
    fn xyp_with_product_integrand_matches_double_sum() {
        let nu1 = DiscreteMeasure::from_scalars(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let nu2 = DiscreteMeasure::from_scalars(&[1.0, 2.0], &[0.25, 0.75]).unwrap();
        let k = ConditionalKernel::new(
            vec![Point::scalar(1.0), Point::scalar(3.0)],
            vec![0.4, 0.6],
            vec![nu1.into(), nu2.into()],
        )
        .unwrap();
        let h = CostSpec::xyp("product", false, |x, _| {
            let a = x.coords()[0];
            Ok(Box::new(move |y: &Point| a * y.coords()[0]))
        });
        let expected = 0.4 * 1.0 * (0.5 * 0.0 + 0.5 * 1.0) + 0.6 * 3.0 * (0.25 * 1.0 + 0.75 * 2.0);
        assert!((eval_j_xyp(&k, &h).unwrap() - expected).abs() < 1e-15);
        assert!(eval_j_xp(&k, &h).is_err());
    }

    #[test]
    fn constant_xp_cost_integrates_to_constant() {
        let nu = DiscreteMeasure::from_scalars(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let k = ConditionalKernel::new(vec![Point::scalar(0.0)], vec![1.0], vec![nu.into()]).unwrap();
        let h = CostSpec::from_json_str(r#"{"kind":"xp","name":"constant","value":2.5}"#).unwrap();
        assert_eq!(eval_j_xp(&k, &h).unwrap(), 2.5);
    }
}
