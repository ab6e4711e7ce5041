//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (outside the test harness capture) and then asserts.
//!
//! Timed criteria take a shared lock so that their wall-clock budgets are
//! not eaten by the other tests on small machines.

use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varlp::cz_sparse::{auto_k_range, build_sparse, cz_decompose};
use varlp::exponent::{combine, ExponentSpec};
use varlp::grid::{test_cubes, DyadicFamily, Grid, GridFunction, Interval};
use varlp::kernels::{
    divergence_ladder, hormander_class_probe, k2_modular, size_condition_probe, Kernel, ProbeOptions, SliceOptions,
    Variant,
};
use varlp::luxemburg::{conjugate_norm, holder, luxemburg_norm, power_norm_identity_check, ConjugateOptions};
use varlp::scenario::{run_scenario, Direction, Scenario, Target, WeightSpec};
use varlp::weights::{test_apr, Verdict, Weight};
use varlp::VariableExponent;

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, name: &str, ok: bool, detail: String) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} criterion {n} ({name}): {detail}");
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn iv(a: f64, b: f64) -> Interval {
    Interval::new(a, b)
}

fn c(p: f64) -> VariableExponent {
    VariableExponent::constant(p).unwrap()
}

fn random_step(rng: &mut ChaCha8Rng, grid: &Arc<Grid>, max_pieces: usize) -> GridFunction {
    let pieces = rng.gen_range(1..=max_pieces);
    let vals: Vec<f64> = (0..pieces).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let w = grid.window();
    GridFunction::from_fn(grid.clone(), |x| {
        let j = ((x - w.a()) / w.length() * pieces as f64) as usize;
        vals[j.min(pieces - 1)]
    })
}

fn random_bump(rng: &mut ChaCha8Rng, window: &Interval, lo: f64, hi: f64) -> VariableExponent {
    VariableExponent::bump(
        rng.gen_range(lo..hi),
        rng.gen_range(lo..hi),
        rng.gen_range(window.a()..window.b()),
        rng.gen_range(0.2..window.length() / 2.0),
    )
    .unwrap()
}

#[test]
fn criterion_01_constant_exponent_norms() {
    let _g = serial();
    let grid = Arc::new(Grid::uniform(iv(0.0, 1.0), 1 << 12));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for p in [1.0, 2.0, 3.0, 3.5] {
        let e = c(p);
        for _ in 0..100 {
            let f = random_step(&mut rng, &grid, 64);
            // classical ‖f‖_p on cells of width 2^-12
            let exact = f
                .values()
                .iter()
                .map(|v| v.abs().powf(p) / 4096.0)
                .sum::<f64>()
                .powf(1.0 / p);
            let got = luxemburg_norm(&f, &e).value;
            worst = worst.max((got - exact).abs() / exact);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        1,
        "constant-exponent norms",
        worst <= 1e-8 && secs <= 5.0,
        format!("max relative error {worst:.2e}, {secs:.2} s"),
    );
}

#[test]
fn criterion_02_power_of_norm_identity() {
    let grid = Arc::new(Grid::uniform(iv(-2.0, 2.0), 256));
    let window = grid.window();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut halves = 0;
    for j in 0..50 {
        let p = random_bump(&mut rng, &window, 1.0, 6.0);
        let f = random_step(&mut rng, &grid, 32);
        let s0 = if j % 3 == 0 { 0.5 } else { rng.gen_range(0.5..3.0) };
        if s0 == 0.5 {
            halves += 1;
        }
        let rep = power_norm_identity_check(&f, &p, s0);
        worst = worst.max(rep.rel_diff);
    }
    verdict(
        2,
        "power-of-norm identity",
        worst <= 1e-7 && halves > 0,
        format!("max relative difference {worst:.2e} over 50 triples ({halves} with s0 = 1/2)"),
    );
}

#[test]
fn criterion_03_holder_constant() {
    let grid = Arc::new(Grid::uniform(iv(-2.0, 2.0), 128));
    let window = grid.window();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_var: f64 = 0.0;
    for _ in 0..100 {
        let p = random_bump(&mut rng, &window, 1.1, 8.0);
        let f = random_step(&mut rng, &grid, 64);
        let g = random_step(&mut rng, &grid, 64);
        worst_var = worst_var.max(holder(&f, &g, &p).ratio);
    }
    let mut worst_const: f64 = 0.0;
    for j in 0..100 {
        let p = c(1.0 + 0.07 * (j + 1) as f64);
        let f = random_step(&mut rng, &grid, 64);
        let g = random_step(&mut rng, &grid, 64);
        worst_const = worst_const.max(holder(&f, &g, &p).ratio);
    }
    verdict(
        3,
        "Hölder constant",
        worst_var <= 4.0 && worst_const <= 1.0 + 1e-9,
        format!("variable-exponent max ratio {worst_var:.4}, constant-exponent max ratio {worst_const:.12}"),
    );
}

#[test]
fn criterion_04_k2_anchor() {
    let rungs = [120, 136, 152, 168];
    // ∫_{2^-L}^1 K₂² = 1 − 1/(1 + L ln 2) for β = 1
    let oracle = |l: i32| 1.0 - 1.0 / (1.0 + l as f64 * std::f64::consts::LN_2);
    let squares: Vec<f64> = rungs.iter().map(|&l| k2_modular(1.0, 2.0, l, 8)).collect();
    let above: Vec<f64> = rungs.iter().map(|&l| k2_modular(1.0, 2.2, l, 8)).collect();
    let last = *squares.last().unwrap();
    let in_band = (0.98..=1.0).contains(&last);
    let oracle_ok = rungs
        .iter()
        .zip(&squares)
        .all(|(&l, m)| (m / oracle(l) - 1.0).abs() < 0.01);
    let increasing = squares.windows(2).all(|w| w[1] > w[0]);
    let exceeds = above[..rungs.len() - 1].iter().any(|&m| m > 10.0);
    let n = above.len();
    let doubling = above[n - 1] / above[n - 2];
    verdict(
        4,
        "K₂ anchor",
        in_band && oracle_ok && increasing && exceeds && doubling >= 2.0,
        format!(
            "∫K₂² = {squares:.5?} (oracle {:.5}); s = 2.2 modulars {above:.3?}, last ratio {doubling:.3}",
            oracle(168)
        ),
    );
}

/// Maximal dyadic subcubes of `[0, 1]` with average above `lambda`, by
/// scanning all `2^(d+1) − 2` proper cubes of the uniform dyadic grid.
fn brute_force_cubes(vals: &[f64], depth: u32, lambda: f64) -> Vec<(u32, usize)> {
    let n = vals.len();
    let avg = |d: u32, i: usize| {
        let w = n >> d;
        vals[i * w..(i + 1) * w].iter().sum::<f64>() / w as f64
    };
    let mut out = Vec::new();
    for d in 1..=depth {
        for i in 0..(1usize << d) {
            if avg(d, i) > lambda && (1..d).all(|e| avg(e, i >> (d - e)) <= lambda) {
                out.push((d, i));
            }
        }
    }
    out
}

#[test]
fn criterion_05_cz_correctness() {
    let _g = serial();
    let depth = 10;
    let family = DyadicFamily::new(iv(0.0, 1.0), depth);
    let grid = Arc::new(Grid::uniform(family.root(), 1 << depth));
    let inf = c(f64::INFINITY);
    let one = c(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = Instant::now();
    let mut mismatches = Vec::new();
    let mut overlaps = 0;
    let mut min_eta = f64::INFINITY;
    for case in 0..25 {
        let mut vals: Vec<f64> = (0..1 << depth).map(|_| rng.gen::<f64>()).collect();
        // a random spike plus nested spikes inside it, so several levels are populated
        let mut d = rng.gen_range(2..=4u32);
        let mut i = rng.gen_range(0..1usize << d);
        for _ in 0..rng.gen_range(1..5) {
            let h = rng.gen_range(4.0..2000.0);
            let w = (1usize << depth) >> d;
            vals[i * w..(i + 1) * w].iter_mut().for_each(|v| *v += h);
            let step = rng.gen_range(1..=2u32).min(depth - d);
            i = (i << step) + rng.gen_range(0..1usize << step);
            d += step;
        }
        let f = GridFunction::new(grid.clone(), vals.clone()).unwrap();
        let root = vals.iter().sum::<f64>() / vals.len() as f64;
        let lambda = root * rng.gen_range(1.1..8.0);
        let level = cz_decompose(&f, &inf, &one, &family, lambda).unwrap();
        let mut got: Vec<Interval> = level.cubes.clone();
        got.sort_by(|a, b| a.a().total_cmp(&b.a()));
        let want: Vec<Interval> = brute_force_cubes(&vals, depth, lambda)
            .into_iter()
            .map(|(d, i)| family.cube(d, i as u64))
            .collect::<Vec<_>>();
        let mut want = want;
        want.sort_by(|a, b| a.a().total_cmp(&b.a()));
        if got != want {
            mismatches.push(case);
        }
        let k = auto_k_range(&f, &inf, &one, &family, 16.0).unwrap();
        let sp = build_sparse(&f, &inf, &one, &family, 16.0, k).unwrap();
        for (j, a) in sp.cubes.iter().enumerate() {
            for b in &sp.cubes[j + 1..] {
                let mut both = a.carved.clone();
                both &= b.carved.clone();
                if both.any() {
                    overlaps += 1;
                }
            }
            min_eta = min_eta.min(a.carved_measure / a.cube.length());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        5,
        "CZ correctness",
        mismatches.is_empty() && overlaps == 0 && min_eta >= 0.5 && secs <= 10.0,
        format!("mismatched cases {mismatches:?}, overlapping pairs {overlaps}, min η {min_eta:.4}, {secs:.2} s"),
    )
}

/// `|x|^δ ∈ 𝔸_{p,1}` exactly when `ω^p = |x|^{δp} ∈ A_p`, i.e. `−1 < δp < p − 1`.
fn power_weight_in_range(delta: f64, p: f64) -> bool {
    -1.0 < delta * p && delta * p < p - 1.0
}

#[test]
fn criterion_06_maximal_characterization() {
    let _g = serial();
    let two = ExponentSpec::constant(2.0);
    let mut fwd = Scenario::new("forward", Target::MaximalBound);
    fwd.p = Some(two.clone());
    fwd.q = Some(two.clone());
    fwd.r = Some(ExponentSpec::constant(1.0));
    fwd.weight = WeightSpec::Power {
        center: 0.0,
        delta: 0.3,
    };
    let mut conv = fwd.clone();
    conv.id = "converse".into();
    conv.direction = Direction::Converse;
    conv.weight = WeightSpec::Power {
        center: 0.0,
        delta: 1.5,
    };

    // the class test agrees with the closed-form range on cubes shrinking to 0
    let g = Arc::new(
        Grid::builder(iv(-1.0, 1.0))
            .graded_with(0.0, 1.0, 2f64.powi(-14), 4)
            .build(),
    );
    let cubes: Vec<Interval> = (0..12).map(|j| iv(0.0, 2f64.powi(-j))).collect();
    let class =
        |delta: f64| test_apr(&Weight::power(g.clone(), 0.0, delta).unwrap(), &c(2.0), &c(1.0), &cubes).unwrap();
    let inside = class(0.3).verdict == Verdict::Bounded && power_weight_in_range(0.3, 2.0);
    let outside = class(1.5).verdict == Verdict::Diverging && !power_weight_in_range(1.5, 2.0);

    let f = run_scenario(&fwd, 0).unwrap();
    let slope = f.trend.unwrap_or(f64::NAN);
    let r = run_scenario(&conv, 0).unwrap();
    let ratios: Vec<f64> = r.cases.iter().map(|c| c.ratio).collect();
    let growth: Vec<f64> = ratios.windows(2).map(|w| w[1] / w[0]).collect();
    // ratio_k ∝ (∫_{2^-k}^1 x^{-3})^{1/2} ∝ (4^k − 1)^{1/2}
    let oracle: Vec<f64> = (1..ratios.len() as i32)
        .map(|k| ((4f64.powi(k + 1) - 1.0) / (4f64.powi(k) - 1.0)).sqrt())
        .collect();
    let matches = growth.iter().zip(&oracle).all(|(g, o)| (g / o - 1.0).abs() < 1e-3);
    let sustained = growth.iter().filter(|g| **g >= 2.0).count();
    verdict(
        6,
        "maximal characterization",
        inside && outside && f.passed && slope.abs() <= 0.05 && r.passed && sustained >= 5 && matches,
        format!(
            "forward slope {slope:.2e} (max ratio {:.4}); converse growth {growth:.5?} vs closed form {oracle:.5?}",
            f.max_ratio
        ),
    );
}

fn affine(pieces: &[(f64, f64, f64, f64)]) -> VariableExponent {
    let ps: Vec<(Interval, f64, f64)> = pieces.iter().map(|&(a, b, l, r)| (iv(a, b), l, r)).collect();
    VariableExponent::piecewise_affine(&ps, 3.0).unwrap()
}

#[test]
fn criterion_07_hormander_membership() {
    let _g = serial();
    let t = Instant::now();
    let inf = c(f64::INFINITY);
    let coarse = test_cubes(iv(-16.0, 16.0), 0..=5, 1);
    let fine = test_cubes(iv(-16.0, 16.0), 0..=6, 1);
    let opts = ProbeOptions::default();
    // r ≡ 2 on [0, 1], affine back to 3 one unit away
    let r_product = affine(&[(-1.0, 0.0, 3.0, 2.0), (0.0, 1.0, 2.0, 2.0), (1.0, 2.0, 2.0, 3.0)]);
    // r ≡ 2 on [2, 5]
    let r_tilde = affine(&[(1.0, 2.0, 3.0, 2.0), (2.0, 5.0, 2.0, 2.0), (5.0, 6.0, 2.0, 3.0)]);

    let k = hormander_class_probe(
        &Kernel::product(1.0),
        &inf,
        &r_product,
        Variant::First,
        &coarse,
        &fine,
        &opts,
    );
    let kt1 = hormander_class_probe(
        &Kernel::tilde(1.0),
        &inf,
        &r_tilde,
        Variant::First,
        &coarse,
        &fine,
        &opts,
    );
    let kt2 = hormander_class_probe(
        &Kernel::tilde(1.0),
        &inf,
        &r_tilde,
        Variant::Second,
        &coarse,
        &fine,
        &opts,
    );

    // divergence of the m = 1 inner norm in L^3 as the grid floor refines
    let levels = [20, 32, 44];
    let base = SliceOptions::default();
    let s = c(3.0);
    let lad_k = divergence_ladder(
        &Kernel::product(0.5),
        &iv(1.0, 3.0),
        2.25,
        1.75,
        &s,
        Variant::First,
        1,
        &levels,
        &base,
    );
    let lad_kt = divergence_ladder(
        &Kernel::tilde(0.5),
        &iv(0.0, 4.0),
        1.5,
        3.0,
        &s,
        Variant::Second,
        1,
        &levels,
        &base,
    );
    let secs = t.elapsed().as_secs_f64();

    let bounded = [&k, &kt1, &kt2].iter().all(|r| r.verdict == Verdict::Bounded);
    verdict(
        7,
        "Hörmander membership",
        bounded && lad_k.diverging && lad_kt.diverging && secs <= 60.0,
        format!(
            "K first {:?} sup {:.3}; K̃ first {:?} sup {:.3}; K̃ second {:?} sup {:.3}; ladders K {:.2?}, K̃ {:.2?}; {secs:.1} s",
            k.verdict,
            k.sup(),
            kt1.verdict,
            kt1.sup(),
            kt2.verdict,
            kt2.sup(),
            lad_k.ratios,
            lad_kt.ratios
        ),
    );
}

#[test]
fn criterion_08_coifman_fefferman() {
    let _g = serial();
    let mut lines = Vec::new();
    let mut ok = true;
    for p in [1.5, 2.0, 3.0] {
        for (wname, tag, weight) in [
            ("1", "unit", WeightSpec::Unit),
            (
                "|x|^0.3",
                "power",
                WeightSpec::Power {
                    center: 0.0,
                    delta: 0.3,
                },
            ),
        ] {
            let mut s = Scenario::new(format!("cf-p{p}-{tag}"), Target::HormanderIntegral);
            s.kernel = Some(Kernel::tilde(1.0));
            s.p = Some(ExponentSpec::constant(p));
            s.r = Some(ExponentSpec::constant(2.0));
            s.weight = weight;
            s.functions.center = 2.5;
            let rep = run_scenario(&s, 0).unwrap();
            let cst = rep.constants.first().map_or(f64::NAN, |c| c.value);
            let spread = rep.max_ratio / cst;
            ok &= rep.passed && spread <= 2.0;
            lines.push(format!("p={p} ω={wname}: C={cst:.4} max/C={spread:.3}"));
        }
    }
    verdict(8, "Coifman-Fefferman inequality", ok, lines.join("; "));
}

#[test]
fn criterion_09_fractional_transfer() {
    let _g = serial();
    let alpha = 0.5;
    let frac = Kernel::fractional(alpha, Kernel::tilde(1.0));
    // r ≡ 2 on [-7, 14]
    let r = affine(&[(-8.0, -7.0, 3.0, 2.0), (-7.0, 14.0, 2.0, 2.0), (14.0, 15.0, 2.0, 3.0)]);
    let inf = c(f64::INFINITY);
    let sizes_coarse = test_cubes(iv(-16.0, 16.0), 2..=7, 1);
    let sizes_fine = test_cubes(iv(-16.0, 16.0), 2..=8, 1);
    let size = size_condition_probe(&frac, &inf, &r, Variant::First, &sizes_coarse, &sizes_fine, 5);
    let slope = size.slope.unwrap_or(f64::NAN);
    let slope_ok = size.positive_scales >= 6 && (slope - alpha).abs() <= 0.05;

    let beta = c(1.0 / alpha);
    let coarse = test_cubes(iv(-16.0, 16.0), 0..=5, 1);
    let fine = test_cubes(iv(-16.0, 16.0), 0..=6, 1);
    let h = hormander_class_probe(
        &frac,
        &beta,
        &r,
        Variant::First,
        &coarse,
        &fine,
        &ProbeOptions::default(),
    );
    verdict(
        9,
        "fractional transfer",
        slope_ok && h.verdict == Verdict::Bounded,
        format!(
            "size slope {slope:.3} on {} nonzero scales of 6 (want {alpha} ± 0.05, scales {:?}); H_{{1/α,r,1}} {:?} sup {:.3}",
            size.positive_scales,
            size.scales,
            h.verdict,
            h.sup()
        ),
    );
}

#[test]
fn criterion_10_conjugate_norm_equivalence() {
    let grid = Arc::new(Grid::uniform(iv(0.0, 4.0), 64));
    let window = grid.window();
    let mids = grid.midpoints();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_low = f64::INFINITY;
    let mut worst_high: f64 = 0.0;
    let mut ok = true;
    let mut mixed = 0;
    for j in 0..50 {
        let p = random_bump(&mut rng, &window, 1.5, 6.0);
        // 1/r = 1/p + 1/q with q = ∞ on a random interval, finite elsewhere
        let a = rng.gen_range(0.0..3.0);
        let on = iv(a, a + rng.gen_range(0.25..1.0));
        // q ≥ p′ keeps r ≥ 1
        let qlow = rng.gen_range(3.5..8.0);
        let q = if j % 5 == 0 {
            VariableExponent::constant(f64::INFINITY).unwrap()
        } else {
            VariableExponent::jump(qlow, f64::INFINITY, on).unwrap()
        };
        let r = combine(&p, &q).unwrap();
        let f = random_step(&mut rng, &grid, 32);
        let rep = conjugate_norm(
            &f,
            &p,
            &r,
            &ConjugateOptions {
                candidates: 16,
                seed: j,
            },
        )
        .unwrap();

        // k from the sampled sets {q < ∞} and {q = ∞}
        let fin = mids.iter().any(|&x| q.recip(x) > 0.0);
        let infin = mids.iter().any(|&x| q.recip(x) == 0.0);
        let k = 1.0 / (fin as u8 + infin as u8) as f64;
        mixed += (fin && infin) as usize;
        let r_plus = mids.iter().map(|&x| r.value(x)).fold(1.0, f64::max);
        let lower = k.powf(r_plus);
        let norm = luxemburg_norm(&f, &p).value;
        let low = rep.value / (lower * norm);
        let high = rep.value / norm;
        worst_low = worst_low.min(low);
        worst_high = worst_high.max(high);
        ok &= low >= 1.0 - 1e-9 && high <= 4.0 * (1.0 + 1e-9) && r_plus.is_finite();
    }
    verdict(
        10,
        "conjugate-norm equivalence",
        ok && mixed > 0,
        format!(
            "min value/(k^r+·norm) {worst_low:.6}, max value/norm {worst_high:.6} (C_H = 4), {mixed} cases with both parts"
        ),
    );
}
