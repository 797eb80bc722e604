mod common;

use common::{contraction, grid_measure_1d, potential_oracle, rng};
use kantlab::convex_order::{check_convex_order_1d, check_convex_order_lp, ConvexOrderCertificate, PotentialFunction1D};
use kantlab::martingale::barycenter_residual;
use kantlab::measures::DiscreteMeasure;
use proptest::prelude::*;
use rand::Rng;

fn coupling_residual(cert: &ConvexOrderCertificate) -> f64 {
    match cert {
        ConvexOrderCertificate::Dominated { coupling } => barycenter_residual(coupling, coupling.nu().atoms()),
        _ => f64::INFINITY,
    }
}

#[test]
fn one_dimensional_and_lp_checks_agree_with_the_potential_oracle() {
    let mut r = rng(31);
    let mut positives = 0;
    for _ in 0..200 {
        let nu = grid_measure_1d(&mut r, 8);
        let mu = if r.gen_bool(0.5) { contraction(&mut r, &nu) } else { grid_measure_1d(&mut r, 8) };
        let a = check_convex_order_1d(&mu, &nu).unwrap();
        let b = check_convex_order_lp(&mu, &nu).unwrap();
        let oracle = potential_oracle(&mu, &nu, 1e-9);
        assert_eq!(a.is_dominated(), oracle);
        assert_eq!(b.is_dominated(), oracle);
        for cert in [&a, &b] {
            if cert.is_dominated() {
                assert!(coupling_residual(cert) < 1e-9);
            } else {
                assert!(cert.reverify(&mu, &nu));
                assert!(cert.violation() > 0.0);
            }
        }
        positives += oracle as usize;
    }
    assert!(positives >= 80);
}

#[test]
fn two_dimensional_contractions_are_dominated() {
    let mut r = rng(32);
    for _ in 0..30 {
        let nu = common::measure(&mut r, 6, 2);
        let mu = contraction(&mut r, &nu);
        let cert = check_convex_order_lp(&mu, &nu).unwrap();
        assert!(cert.is_dominated());
        assert!(coupling_residual(&cert) < 1e-9);
        // the reverse direction fails unless the partition was trivial
        let back = check_convex_order_lp(&nu, &mu).unwrap();
        if mu.len() < nu.len() {
            assert!(!back.is_dominated());
            assert!(back.reverify(&nu, &mu));
        }
    }
}

#[test]
fn reversed_spread_is_rejected_with_a_kink_witness() {
    let narrow = DiscreteMeasure::from_scalars(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
    let wide = DiscreteMeasure::from_scalars(&[-2.0, 2.0], &[0.5, 0.5]).unwrap();
    assert!(check_convex_order_1d(&narrow, &wide).unwrap().is_dominated());
    let cert = check_convex_order_1d(&wide, &narrow).unwrap();
    assert!(!cert.is_dominated());
    assert!((cert.violation() - 1.0).abs() < 1e-12);
    assert!(cert.reverify(&wide, &narrow));
}

fn grid_measure() -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((-16i32..=16, 1u32..8), 1..7).prop_map(|v| {
        let s: u32 = v.iter().map(|x| x.1).sum();
        let xs: Vec<f64> = v.iter().map(|x| x.0 as f64 / 8.0).collect();
        let ws: Vec<f64> = v.iter().map(|x| x.1 as f64 / s as f64).collect();
        DiscreteMeasure::from_scalars(&xs, &ws).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prefix_sum_potential_matches_direct_sum(m in grid_measure(), k in -3.0f64..3.0) {
        let u = PotentialFunction1D::new(&m).unwrap();
        prop_assert!((u.eval(k) - common::potential(&m, k)).abs() < 1e-12);
        prop_assert!((u.eval(k) - u.eval_direct(k)).abs() < 1e-12);
    }

    #[test]
    fn mean_preserving_spread_dominates(m in grid_measure(), spread in 0.0f64..1.0) {
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for (a, w) in m.iter() {
            let x = a.coords()[0];
            xs.push(x - spread);
            xs.push(x + spread);
            ws.push(w / 2.0);
            ws.push(w / 2.0);
        }
        let wide = DiscreteMeasure::from_scalars(&xs, &ws).unwrap();
        prop_assert!(check_convex_order_1d(&m, &wide).unwrap().is_dominated());
        prop_assert!(check_convex_order_1d(&m, &m).unwrap().is_dominated());
    }

    #[test]
    fn negative_certificates_always_reverify(a in grid_measure(), b in grid_measure()) {
        for cert in [check_convex_order_1d(&a, &b).unwrap(), check_convex_order_lp(&a, &b).unwrap()] {
            if !cert.is_dominated() {
                prop_assert!(cert.reverify(&a, &b));
            }
        }
    }
}
