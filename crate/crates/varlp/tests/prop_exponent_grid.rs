use std::sync::Arc;

use proptest::prelude::*;
use varlp::exponent::{beta_from_pair, combine, combine_inverse, conjugate, verify_log_holder};
use varlp::grid::{test_cubes, DyadicFamily, Grid, GridFunction, Interval};
use varlp::luxemburg::indicator_norm;
use varlp::VariableExponent;

fn bump() -> impl Strategy<Value = VariableExponent> {
    (1.1f64..6.0, 1.1f64..6.0, -3.0f64..3.0, 0.25f64..3.0)
        .prop_map(|(b, p, c, r)| VariableExponent::bump(b, p, c, r).unwrap())
}

fn samples() -> Vec<f64> {
    (0..=64).map(|j| -8.0 + 0.25 * j as f64 + 0.013).collect()
}

fn step(window: Interval) -> impl Strategy<Value = GridFunction> {
    prop::collection::vec(-4.0f64..4.0, 1..24).prop_map(move |vals| {
        let g = Arc::new(Grid::uniform(window, 96));
        let n = vals.len();
        GridFunction::from_fn(g, |x| {
            vals[(((x - window.a()) / window.length() * n as f64) as usize).min(n - 1)]
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conjugate_is_an_involution(p in bump()) {
        let pp = conjugate(&conjugate(&p));
        for x in samples() {
            prop_assert!((pp.recip(x) - p.recip(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn combine_is_commutative(p in bump(), q in bump()) {
        let (a, b) = (combine(&p, &q), combine(&q, &p));
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            for x in samples() {
                prop_assert!((a.recip(x) - b.recip(x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn derived_exponents_stay_log_holder(p in bump(), q in bump()) {
        let dom = Interval::new(-8.0, 8.0);
        prop_assume!(verify_log_holder(&p, &dom, 200).pass && verify_log_holder(&q, &dom, 200).pass);
        prop_assert!(verify_log_holder(&conjugate(&p), &dom, 200).pass);
        if let Ok(r) = combine(&p, &q) {
            prop_assert!(verify_log_holder(&r, &dom, 200).pass);
        }
    }

    #[test]
    fn beta_then_inverse_recovers_q(p in bump(), lift in 0.0f64..3.0) {
        // q ≥ p pointwise
        let p2 = p.clone();
        let knots = p.knots().to_vec();
        let at_inf = p.recip_at_infinity().map(|v| v / (1.0 + lift));
        let q = VariableExponent::from_recip_fn("q", move |x| p.recip(x) / (1.0 + lift), knots, at_inf);
        let beta = beta_from_pair(&p2, &q).unwrap();
        let back = combine_inverse(&p2, &beta).unwrap();
        for x in samples() {
            prop_assert!((back.recip(x) - q.recip(x)).abs() < 1e-12);
            prop_assert!((p2.recip(x) - q.recip(x) - beta.recip(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn integrate_is_additive_and_monotone(f in step(Interval::new(-4.0, 4.0)), a in -4.0f64..0.0, m in -0.5f64..0.5, b in 0.0f64..4.0) {
        prop_assume!(a < m && m < b);
        let whole = f.integrate(&Interval::new(a, b));
        let parts = f.integrate(&Interval::new(a, m)) + f.integrate(&Interval::new(m, b));
        prop_assert!((whole - parts).abs() <= 1e-12 * (1.0 + whole.abs()));
        let abs = f.abs();
        let bigger = abs.map(|v| v + 0.5);
        let q = Interval::new(a, b);
        prop_assert!(abs.integrate(&q) <= bigger.integrate(&q));
        prop_assert!(f.integrate(&q).abs() <= abs.integrate(&q) + 1e-12);
    }

    #[test]
    fn dyadic_children_tile(f in step(Interval::new(-4.0, 4.0)), d in 0u32..6, idx in 0u64..64) {
        let fam = DyadicFamily::new(Interval::new(-4.0, 4.0), 6);
        let q = fam.cube(d, idx % (1 << d));
        let (l, r) = fam.children(&q).unwrap();
        let sum = f.integrate(&l) + f.integrate(&r);
        prop_assert!((f.integrate(&q) - sum).abs() <= 1e-12 * (1.0 + sum.abs()));
        prop_assert_eq!(l.a(), q.a());
        prop_assert_eq!(l.b(), r.a());
        prop_assert_eq!(r.b(), q.b());
    }

    #[test]
    fn doubling_ratio_is_bounded(p in bump()) {
        prop_assume!(verify_log_holder(&p, &Interval::new(-8.0, 8.0), 200).pass);
        let cubes = test_cubes(Interval::new(-8.0, 8.0), 0..=8, 1);
        let d = cubes
            .iter()
            .map(|q| indicator_norm(&p, &q.dilate(2.0)) / indicator_norm(&p, q))
            .fold(0.0, f64::max);
        // the constant depends on the log-Hölder constants of p; 3 is a loose envelope
        // over these bumps (a constant exponent gives 2^{1/p} < 2)
        prop_assert!((1.0..=3.0).contains(&d), "doubling constant {}", d);
    }
}
