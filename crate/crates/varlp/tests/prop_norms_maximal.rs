use std::sync::Arc;

use proptest::prelude::*;
use varlp::cz_sparse::cz_decompose;
use varlp::exponent::verify_log_holder;
use varlp::grid::{test_cubes, DyadicFamily, Grid, GridFunction, Interval};
use varlp::luxemburg::{conjugate_norm, luxemburg_norm, modular, ConjugateOptions, HOLDER_CONSTANT};
use varlp::maximal::{average_op, maximal, maximal_profile, MaximalConfig};
use varlp::VariableExponent;

/// Bound on `M_p f / M_q f` for `p ≤ q`. Constant exponents give 1 by Hölder;
/// the bumps below only pay for the oscillation of `p` inside a cube.
const AVERAGE_MONOTONICITY: f64 = 1.5;

fn bump() -> impl Strategy<Value = VariableExponent> {
    (1.1f64..5.0, 1.1f64..5.0, -1.5f64..1.5, 0.25f64..2.0)
        .prop_map(|(b, p, c, r)| VariableExponent::bump(b, p, c, r).unwrap())
}

fn window() -> Interval {
    Interval::new(-2.0, 2.0)
}

fn grid() -> Arc<Grid> {
    Arc::new(Grid::uniform(window(), 64))
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), -5.0f64..5.0], n)
}

fn on_grid(vals: Vec<f64>) -> GridFunction {
    GridFunction::new(grid(), vals).unwrap()
}

fn k(p: f64) -> VariableExponent {
    VariableExponent::constant(p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_is_monotone(p in bump(), f in values(64), extra in prop::collection::vec(0.0f64..2.0, 64)) {
        let f = on_grid(f);
        let g = on_grid(f.values().iter().zip(&extra).map(|(v, e)| v.abs() + e).collect());
        for lam in [0.25, 1.0, 4.0] {
            prop_assert!(modular(&f, &p, lam) <= modular(&g, &p, lam) * (1.0 + 1e-12));
        }
        prop_assert!(luxemburg_norm(&f, &p).value <= luxemburg_norm(&g, &p).value * (1.0 + 1e-9));
    }

    #[test]
    fn unit_ball_bridge(p in bump(), f in values(64), scale in 0.05f64..20.0) {
        let f = on_grid(f).scale(scale);
        let n = luxemburg_norm(&f, &p).value;
        let m = modular(&f, &p, 1.0);
        if n <= 1.0 {
            prop_assert!(m <= n * (1.0 + 1e-9) + 1e-12, "modular {} norm {}", m, n);
        } else {
            prop_assert!(n <= m * (1.0 + 1e-9), "modular {} norm {}", m, n);
        }
    }

    #[test]
    fn norm_is_homogeneous(p in bump(), f in values(64), c in -50.0f64..50.0) {
        let f = on_grid(f);
        let a = luxemburg_norm(&f.scale(c), &p).value;
        let b = c.abs() * luxemburg_norm(&f, &p).value;
        prop_assert!((a - b).abs() <= 1e-9 * b.max(1e-300), "{} vs {}", a, b);
    }

    #[test]
    fn conjugate_norm_is_below_holder_bound(p in bump(), f in values(32), shrink in 0.3f64..1.0) {
        let g = Arc::new(Grid::uniform(window(), 32));
        let f = GridFunction::new(g, f).unwrap();
        let r = VariableExponent::from_recip_fn(
            "r",
            { let p = p.clone(); move |x| 1.0 - shrink * (1.0 - p.recip(x)) },
            p.knots().to_vec(),
            None,
        );
        let rep = conjugate_norm(&f, &p, &r, &ConjugateOptions::default()).unwrap();
        prop_assert!(rep.value <= HOLDER_CONSTANT * rep.norm * (1.0 + 1e-9));
    }

    #[test]
    fn maximal_dominates_every_average(f in values(64), x in -1.99f64..1.99, p in bump()) {
        let f = on_grid(f);
        let cubes = test_cubes(window(), 0..=5, 1);
        let cfg = MaximalConfig::new(cubes.clone(), k(f64::INFINITY), p.clone()).unwrap();
        let m = maximal(&f, x, &cfg);
        for q in cubes.iter().filter(|q| q.contains(x)) {
            prop_assert!(average_op(&f, q, &k(f64::INFINITY), &p) <= m);
        }
    }

    #[test]
    fn maximal_is_sublinear(f in values(64), g in values(64), r in 1.0f64..4.0) {
        let (f, g) = (on_grid(f), on_grid(g));
        let cfg = MaximalConfig::new(test_cubes(window(), 0..=6, 1), k(f64::INFINITY), k(r)).unwrap();
        let mf = maximal_profile(&f, &cfg).values;
        let mg = maximal_profile(&g, &cfg).values;
        let ms = maximal_profile(&f.add(&g), &cfg).values;
        for i in 0..ms.len() {
            prop_assert!(ms[i] <= (mf[i] + mg[i]) * (1.0 + 1e-12) + 1e-12);
        }
    }

    #[test]
    fn smaller_exponent_gives_smaller_maximal(f in values(64), p in bump(), lift in 0.0f64..2.0) {
        prop_assume!(verify_log_holder(&p, &window(), 200).pass);
        let f = on_grid(f);
        let q = {
            let knots = p.knots().to_vec();
            let p = p.clone();
            VariableExponent::from_recip_fn("q", move |x| p.recip(x) / (1.0 + lift), knots, None)
        };
        let cubes = test_cubes(window(), 0..=5, 1);
        let inf = k(f64::INFINITY);
        let mp = maximal_profile(&f, &MaximalConfig::new(cubes.clone(), inf.clone(), p).unwrap()).values;
        let mq = maximal_profile(&f, &MaximalConfig::new(cubes, inf, q).unwrap()).values;
        for (a, b) in mp.iter().zip(&mq) {
            prop_assert!(*a <= AVERAGE_MONOTONICITY * b + 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn level_set_lies_in_tripled_stopping_cubes(f in prop::collection::vec(0.0f64..1.0, 64), spikes in prop::collection::vec((0usize..64, 2.0f64..60.0), 1..4), t in 1.05f64..4.0) {
        let mut vals = f;
        for (i, h) in spikes {
            vals[i] += h;
        }
        let f = on_grid(vals);
        let one = k(1.0);
        let inf = k(f64::INFINITY);
        let family = DyadicFamily::new(window(), 6);
        let lambda = t * average_op(&f, &window(), &inf, &one);
        let level = cz_decompose(&f, &inf, &one, &family, lambda).unwrap();
        // any interval with average above 4λ has a dyadic neighbour of
        // comparable size with average above λ; it sits in 3Q for a stopping cube Q
        let cfg = MaximalConfig::new(test_cubes(window(), 0..=6, 1), inf, one).unwrap();
        let prof = maximal_profile(&f, &cfg);
        for (x, m) in prof.xs.iter().zip(&prof.values) {
            if *m > 4.0 * lambda {
                prop_assert!(level.cubes.iter().any(|q| q.dilate(3.0).contains(*x)), "x = {} M = {} λ = {}", x, m, lambda);
            }
        }
    }
}
