//! Plan ↔ map reductions for barycentric costs `h(x, g(σˣ))`: a kernel gives a
//! map `T(x) = g(σˣ)` whose image is dominated by `ν∘F⁻¹`, and a dominated map
//! lifts back to a kernel with `g(σˣ) = T(x)`.

use crate::convex_order::{check_convex_order_1d, check_convex_order_lp, ConvexOrderCertificate};
use crate::error::{Error, Result};
use crate::martingale::{build_martingale_coupling, glue, MongeMap};
use crate::measures::{ConditionalKernel, DiscreteMeasure, MomentMap};

use super::cost::{CostKind, CostSpec};

/// `Σ_i μ_i h(x_i, T(x_i))`, summed in atom order.
pub fn monge_cost(mu: &DiscreteMeasure, t: &MongeMap, h: &CostSpec) -> Result<f64> {
    h.require(CostKind::Xu)?;
    if t.len() != mu.len() {
        return Err(Error::Dimension { expected: mu.len(), found: t.len() });
    }
    let mut total = 0.0;
    for (i, (x, w)) in mu.iter().enumerate() {
        total += w * h.eval_xu(x, t.get(i))?;
    }
    Ok(total)
}

/// Convex-order check that picks the potential test in one dimension.
pub fn check_convex_order(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ConvexOrderCertificate> {
    if mu.dim() == 1 && nu.dim() == 1 {
        check_convex_order_1d(mu, nu)
    } else {
        check_convex_order_lp(mu, nu)
    }
}

/// `T(x_i) = g(σ^{x_i})` together with the certificate for
/// `μ∘T⁻¹ ⪯_c ν∘F⁻¹`, which must be positive.
pub fn plan_to_map(k: &ConditionalKernel, f: &MomentMap) -> Result<(MongeMap, ConvexOrderCertificate)> {
    let values = k.conditionals().iter().map(|s| f.g_eval(s)).collect::<Result<Vec<_>>>()?;
    let t = MongeMap::new(values)?;
    let image = t.image(&k.x_marginal()?)?;
    let target = k.mix()?.to_discrete().pushforward(f)?;
    let cert = check_convex_order(&image, &target)?;
    if !cert.is_dominated() {
        return Err(Error::Contract(format!(
            "image of g(σˣ) is not dominated by ν∘F⁻¹ (violation {:e})",
            cert.violation()
        )));
    }
    Ok((t, cert))
}

/// Kernel with `g(σˣ) = T(x)` built from a martingale coupling of `μ∘T⁻¹` and `ν`.
pub fn map_to_plan(t: &MongeMap, mu: &DiscreteMeasure, nu: &DiscreteMeasure, f: &MomentMap) -> Result<ConditionalKernel> {
    let zeta = t.image(mu)?;
    let coupling = build_martingale_coupling(&zeta, nu, f)?;
    glue(t, &coupling, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{Point, YMeasure};
    use crate::nonlinear::eval_j_gp;

    fn d(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_scalars(xs, ws).unwrap()
    }

    #[test]
    fn constant_conditionals_give_constant_map() {
        let nu = d(&[-1.0, 2.0], &[0.5, 0.5]);
        let mu = d(&[0.0, 1.0], &[0.5, 0.5]);
        let k = ConditionalKernel::new(
            mu.atoms().to_vec(),
            mu.weights().to_vec(),
            vec![YMeasure::Discrete(nu.clone()), YMeasure::Discrete(nu.clone())],
        )
        .unwrap();
        let f = MomentMap::identity(1);
        let (t, cert) = plan_to_map(&k, &f).unwrap();
        assert!(t.values().iter().all(|v| v == &Point::scalar(0.5)));
        assert!(cert.is_dominated());
    }

    #[test]
    fn round_trip_reproduces_map_and_cost() {
        let nu = d(&[-2.0, -1.0, 0.0, 1.0, 2.0], &[0.2, 0.2, 0.2, 0.2, 0.2]);
        let mu = d(&[0.0, 0.5, 1.0], &[0.25, 0.5, 0.25]);
        let t = MongeMap::from_scalars(&[-1.0, 0.5, 0.0]).unwrap();
        let f = MomentMap::identity(1);
        let h = CostSpec::from_json_str(r#"{"kind":"xu","name":"squared_diff"}"#).unwrap();
        let k = map_to_plan(&t, &mu, &nu, &f).unwrap();
        let (back, cert) = plan_to_map(&k, &f).unwrap();
        assert!(cert.is_dominated());
        assert!(back.sup_dist(&t) < 1e-9);
        assert!((eval_j_gp(&k, &h, &f).unwrap() - monge_cost(&mu, &t, &h).unwrap()).abs() < 1e-9);
        assert_eq!(eval_j_gp(&k, &h, &f).unwrap(), monge_cost(&mu, &back, &h).unwrap());
    }

    #[test]
    fn undominated_map_is_rejected() {
        let nu = d(&[0.0], &[1.0]);
        let mu = d(&[0.0, 1.0], &[0.5, 0.5]);
        let t = MongeMap::from_scalars(&[-1.0, 1.0]).unwrap();
        let err = map_to_plan(&t, &mu, &nu, &MomentMap::identity(1)).unwrap_err();
        assert!(matches!(err, Error::OrderViolation(_)));
    }
}
