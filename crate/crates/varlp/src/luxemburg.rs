//! Modulars, Luxemburg norms, Hölder-type checks and the conjugate norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{combine_inverse, harmonic_mean, VariableExponent};
use crate::grid::{Grid, GridFunction, Interval};

/// Relative bisection tolerance of the norm.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Pieces used for the parts of a cube outside the grid window.
const OUTSIDE_PIECES: usize = 64;

/// Pieces used by [`indicator_norm`] when no grid is given.
const INDICATOR_PIECES: usize = 512;

/// How the `p = ∞` part enters the modular.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupConvention {
    /// `‖(f/λ)χ_{p=∞}‖_∞`, which keeps the norm homogeneous.
    #[default]
    Scaled,
    /// `‖fχ_{p=∞}‖_∞` without the factor `1/λ`.
    Unscaled,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormOptions {
    pub rel_tol: f64,
    pub convention: SupConvention,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            convention: SupConvention::Scaled,
        }
    }
}

/// A norm together with its final bisection bracket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub lambda_bracket: (f64, f64),
    pub modular_at_value: f64,
}

impl NormResult {
    fn zero() -> Self {
        Self {
            value: 0.0,
            lambda_bracket: (0.0, 0.0),
            modular_at_value: 0.0,
        }
    }

    pub fn bracket_width(&self) -> f64 {
        self.lambda_bracket.1 - self.lambda_bracket.0
    }

    /// CSV row `case_id,norm,bracket_width,modular_residual`, where the
    /// residual is `1 − modular_at_value`.
    pub fn csv_row(&self, case_id: &str) -> [String; 4] {
        [
            case_id.to_string(),
            self.value.to_string(),
            self.bracket_width().to_string(),
            (1.0 - self.modular_at_value).to_string(),
        ]
    }
}

/// One piece of a piecewise-constant integrand: `|value|` on a set of
/// measure `width` where the exponent has reciprocal `recip`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub width: f64,
    pub value: f64,
    pub recip: f64,
}

/// Segments of `f` with the exponent sampled at cell midpoints. Zero cells
/// are dropped since they never contribute.
pub fn segments(f: &GridFunction, p: &VariableExponent) -> Vec<Segment> {
    let g = f.grid();
    f.values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, &v)| Segment {
            width: g.width(i),
            value: v,
            recip: p.recip(g.midpoint(i)),
        })
        .collect()
}

/// The modular, precomputed in log form so each evaluation costs one `exp`
/// per segment.
pub(crate) struct Modular {
    finite: Vec<(f64, f64, f64)>,
    sup: f64,
    max_abs: f64,
    convention: SupConvention,
}

impl Modular {
    pub(crate) fn new(segs: &[Segment], convention: SupConvention) -> Self {
        let mut finite = Vec::with_capacity(segs.len());
        let mut sup = 0.0f64;
        let mut max_abs = 0.0f64;
        for s in segs {
            let v = s.value.abs();
            if v == 0.0 || s.width <= 0.0 {
                continue;
            }
            max_abs = max_abs.max(v);
            if s.recip == 0.0 {
                sup = sup.max(v);
            } else {
                finite.push((s.width, v.ln(), 1.0 / s.recip));
            }
        }
        Self {
            finite,
            sup,
            max_abs,
            convention,
        }
    }

    pub(crate) fn eval(&self, lambda: f64) -> f64 {
        let ll = lambda.ln();
        let mut acc = 0.0;
        for &(w, lv, p) in &self.finite {
            acc += w * (p * (lv - ll)).exp();
        }
        acc + match self.convention {
            SupConvention::Scaled => self.sup / lambda,
            SupConvention::Unscaled => self.sup,
        }
    }

    pub(crate) fn norm(&self, rel_tol: f64, total_width: f64) -> NormResult {
        if self.max_abs == 0.0 {
            return NormResult::zero();
        }
        if self.finite.is_empty() {
            return match self.convention {
                SupConvention::Scaled => NormResult {
                    value: self.sup,
                    lambda_bracket: (self.sup, self.sup),
                    modular_at_value: 1.0,
                },
                SupConvention::Unscaled => {
                    let value = if self.sup <= 1.0 { 0.0 } else { f64::INFINITY };
                    NormResult {
                        value,
                        lambda_bracket: (value, value),
                        modular_at_value: self.sup,
                    }
                }
            };
        }
        if self.convention == SupConvention::Unscaled && self.sup >= 1.0 {
            return NormResult {
                value: f64::INFINITY,
                lambda_bracket: (f64::INFINITY, f64::INFINITY),
                modular_at_value: f64::INFINITY,
            };
        }
        let mut hi = self.max_abs * (1.0 + total_width);
        let mut rho_hi = self.eval(hi);
        while rho_hi > 1.0 {
            hi *= 2.0;
            rho_hi = self.eval(hi);
            if !hi.is_finite() {
                return NormResult {
                    value: f64::INFINITY,
                    lambda_bracket: (f64::INFINITY, f64::INFINITY),
                    modular_at_value: f64::INFINITY,
                };
            }
        }
        let mut lo = 0.5 * hi;
        loop {
            let r = self.eval(lo);
            if r > 1.0 {
                break;
            }
            hi = lo;
            rho_hi = r;
            lo *= 0.5;
            if lo < f64::MIN_POSITIVE {
                return NormResult {
                    value: hi,
                    lambda_bracket: (0.0, hi),
                    modular_at_value: rho_hi,
                };
            }
        }
        while hi - lo > rel_tol * hi {
            let mid = 0.5 * (lo + hi);
            let r = self.eval(mid);
            if r <= 1.0 {
                hi = mid;
                rho_hi = r;
            } else {
                lo = mid;
            }
        }
        NormResult {
            value: hi,
            lambda_bracket: (lo, hi),
            modular_at_value: rho_hi,
        }
    }
}

/// `ρ_p(f/λ)` with the scaled sup convention.
pub fn modular(f: &GridFunction, p: &VariableExponent, lambda: f64) -> f64 {
    modular_with(f, p, lambda, SupConvention::Scaled)
}

pub fn modular_with(f: &GridFunction, p: &VariableExponent, lambda: f64, convention: SupConvention) -> f64 {
    assert!(lambda > 0.0, "lambda must be positive");
    Modular::new(&segments(f, p), convention).eval(lambda)
}

/// Norm of a list of segments.
pub fn norm_segments(segs: &[Segment], opts: &NormOptions) -> NormResult {
    let total: f64 = segs.iter().map(|s| s.width).sum();
    Modular::new(segs, opts.convention).norm(opts.rel_tol, total)
}

/// `‖f‖_{p(·)}`: the smallest `λ` on the bisection grid with `ρ(f/λ) ≤ 1`.
/// The zero function has norm 0.
pub fn luxemburg_norm(f: &GridFunction, p: &VariableExponent) -> NormResult {
    luxemburg_norm_with(f, p, &NormOptions::default())
}

pub fn luxemburg_norm_with(f: &GridFunction, p: &VariableExponent, opts: &NormOptions) -> NormResult {
    let total = f.grid().window().length();
    Modular::new(&segments(f, p), opts.convention).norm(opts.rel_tol, total)
}

/// Pieces of a cube: its overlaps with grid cells, and uniform pieces
/// (refined at `knots`) for the parts outside the window.
#[derive(Clone, Debug)]
pub struct CubePieces {
    /// `(width, midpoint, cell index if inside the window)`.
    pub pieces: Vec<(f64, f64, Option<usize>)>,
}

impl CubePieces {
    pub fn new(grid: &Grid, q: &Interval, knots: &[f64]) -> Self {
        let mut pieces = Vec::new();
        let w = grid.window();
        let outside = |a: f64, b: f64, pieces: &mut Vec<(f64, f64, Option<usize>)>| {
            if a >= b {
                return;
            }
            let mut pts: Vec<f64> = (0..=OUTSIDE_PIECES)
                .map(|i| a + (b - a) * i as f64 / OUTSIDE_PIECES as f64)
                .collect();
            pts.extend(knots.iter().copied().filter(|k| a < *k && *k < b));
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            for s in pts.windows(2) {
                pieces.push((s[1] - s[0], 0.5 * (s[0] + s[1]), None));
            }
        };
        outside(q.a(), q.b().min(w.a()), &mut pieces);
        for i in grid.cells_overlapping(q) {
            let c = grid.cell(i);
            if let Some(part) = c.intersect(q) {
                pieces.push((part.length(), part.center(), Some(i)));
            }
        }
        outside(q.a().max(w.b()), q.b(), &mut pieces);
        Self { pieces }
    }

    /// Segments of `f·χ_Q`.
    pub fn function_segments(&self, f: &GridFunction, p: &VariableExponent) -> Vec<Segment> {
        let vals = f.values();
        self.pieces
            .iter()
            .filter_map(|&(w, m, c)| {
                let v = c.map_or(0.0, |i| vals[i]);
                (v != 0.0).then(|| Segment {
                    width: w,
                    value: v,
                    recip: p.recip(m),
                })
            })
            .collect()
    }

    /// Segments of `χ_Q`.
    pub fn indicator_segments(&self, p: &VariableExponent) -> Vec<Segment> {
        self.pieces
            .iter()
            .map(|&(w, m, _)| Segment {
                width: w,
                value: 1.0,
                recip: p.recip(m),
            })
            .collect()
    }

    pub fn measure(&self) -> f64 {
        self.pieces.iter().map(|p| p.0).sum()
    }
}

/// `‖fχ_Q‖_{p(·)}`.
pub fn norm_on(f: &GridFunction, p: &VariableExponent, q: &Interval) -> f64 {
    let pieces = CubePieces::new(f.grid(), q, p.knots());
    norm_segments(&pieces.function_segments(f, p), &NormOptions::default()).value
}

/// `‖χ_Q‖_{p(·)}` on a uniform partition of `Q` refined at the exponent's
/// knots.
pub fn indicator_norm(p: &VariableExponent, q: &Interval) -> f64 {
    if let Some(v) = p.constant_value() {
        if v == f64::INFINITY {
            return 1.0;
        }
    }
    let mut pts: Vec<f64> = (0..=INDICATOR_PIECES)
        .map(|i| q.at(i as f64 / INDICATOR_PIECES as f64))
        .collect();
    pts.extend(p.knots().iter().copied().filter(|k| q.a() < *k && *k < q.b()));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let segs: Vec<Segment> = pts
        .windows(2)
        .map(|s| Segment {
            width: s[1] - s[0],
            value: 1.0,
            recip: p.recip(0.5 * (s[0] + s[1])),
        })
        .collect();
    norm_segments(&segs, &NormOptions::default()).value
}

/// Both sides of `‖|f|^s‖_{p(·)} = ‖f‖^s_{s·p(·)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIdentityReport {
    pub s0: f64,
    pub left: f64,
    pub right: f64,
    pub rel_diff: f64,
}

pub fn power_norm_identity_check(f: &GridFunction, p: &VariableExponent, s0: f64) -> PowerIdentityReport {
    assert!(s0 > 0.0, "s0 must be positive");
    let left = luxemburg_norm(&f.abs_pow(s0), p).value;
    let right = luxemburg_norm(f, &p.scaled(s0)).value.powf(s0);
    let rel_diff = if left == right {
        0.0
    } else {
        (left - right).abs() / left.abs().max(right.abs())
    };
    PowerIdentityReport {
        s0,
        left,
        right,
        rel_diff,
    }
}

/// `‖fg‖_r` against `‖f‖_p‖g‖_q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub lhs: f64,
    pub norm_f: f64,
    pub norm_g: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl HolderReport {
    fn new(lhs: f64, norm_f: f64, norm_g: f64) -> Self {
        let rhs = norm_f * norm_g;
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        Self {
            lhs,
            norm_f,
            norm_g,
            rhs,
            ratio,
        }
    }
}

/// The constant in `‖fg‖_1 ≤ C‖f‖_{p(·)}‖g‖_{p′(·)}`.
pub const HOLDER_CONSTANT: f64 = 4.0;

/// `‖fg‖_1` against `‖f‖_p‖g‖_{p′}`; the ratio is at most
/// [`HOLDER_CONSTANT`].
pub fn holder(f: &GridFunction, g: &GridFunction, p: &VariableExponent) -> HolderReport {
    let pc = crate::exponent::conjugate(p);
    let one = VariableExponent::constant(1.0).expect("1 is a valid exponent");
    let lhs = luxemburg_norm(&f.mul(g), &one).value;
    HolderReport::new(lhs, luxemburg_norm(f, p).value, luxemburg_norm(g, &pc).value)
}

/// `‖fg‖_r` against `‖f‖_p‖g‖_q` where `1/r = 1/p + 1/q`.
pub fn holder_general(
    f: &GridFunction,
    g: &GridFunction,
    r: &VariableExponent,
    p: &VariableExponent,
    q: &VariableExponent,
) -> Result<HolderReport> {
    for x in r
        .validation_points()
        .into_iter()
        .chain(p.validation_points())
        .chain(q.validation_points())
    {
        let gap = r.recip(x) - p.recip(x) - q.recip(x);
        if gap.abs() > 1e-12 {
            return Err(Error::ExponentMismatch {
                x,
                detail: format!("1/r − 1/p − 1/q = {gap}"),
            });
        }
    }
    let lhs = luxemburg_norm(&f.mul(g), r).value;
    Ok(HolderReport::new(
        lhs,
        luxemburg_norm(f, p).value,
        luxemburg_norm(g, q).value,
    ))
}

/// Options for [`conjugate_norm`].
#[derive(Clone, Copy, Debug)]
pub struct ConjugateOptions {
    /// Random unit-ball candidates tried besides the structured witnesses.
    pub candidates: usize,
    pub seed: u64,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        Self {
            candidates: 16,
            seed: 7,
        }
    }
}

/// Certified lower bound for `sup_{‖g‖_q ≤ 1} ‖fg‖_r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugateNormReport {
    pub value: f64,
    pub witness: String,
    pub norm: f64,
    /// `k` with `1/k = ‖χ_{q<∞}‖_∞ + ‖χ_{q=∞}‖_∞` on the grid cells.
    pub k: f64,
    /// `r⁺` over the grid cells.
    pub r_plus: f64,
    /// `k^{r⁺}`, the guaranteed ratio to the Luxemburg norm.
    pub lower_constant: f64,
}

/// Lower bound for the conjugate norm, maximised over the structured
/// witnesses `g ∝ (|f|/‖f‖_p)^{p/q}` (with `g = 1` where `q = ∞`, in three
/// combinations) and seeded random candidates, each normalised to
/// `‖g‖_q = 1`.
pub fn conjugate_norm(
    f: &GridFunction,
    p: &VariableExponent,
    r: &VariableExponent,
    opts: &ConjugateOptions,
) -> Result<ConjugateNormReport> {
    let q = combine_inverse(r, p)?;
    let grid = f.grid().clone();
    let n = grid.n_cells();
    let lam = luxemburg_norm(f, p).value;

    let mids = grid.midpoints();
    let rq: Vec<f64> = mids.iter().map(|&x| q.recip(x)).collect();
    let rp: Vec<f64> = mids.iter().map(|&x| p.recip(x)).collect();
    let finite_part = rq.iter().any(|&v| v > 0.0);
    let infinite_part = rq.iter().any(|&v| v == 0.0);
    let k = 1.0 / (finite_part as u8 + infinite_part as u8).max(1) as f64;
    let r_plus = mids.iter().map(|&x| r.value(x)).fold(1.0f64, f64::max);

    let mut report = ConjugateNormReport {
        value: 0.0,
        witness: "none".into(),
        norm: lam,
        k,
        r_plus,
        lower_constant: k.powf(r_plus),
    };
    if lam == 0.0 {
        return Ok(report);
    }

    let try_candidate = |vals: Vec<f64>, label: &str, best: &mut ConjugateNormReport| {
        let g = GridFunction::new(grid.clone(), vals).expect("finite candidate");
        let ng = luxemburg_norm(&g, &q).value;
        if ng == 0.0 || !ng.is_finite() {
            return;
        }
        let v = luxemburg_norm(&f.mul(&g), r).value / ng;
        if v > best.value {
            best.value = v;
            best.witness = label.to_string();
        }
    };

    let fv = f.values();
    let finite_witness: Vec<f64> = (0..n)
        .map(|i| {
            let a = fv[i].abs();
            if rq[i] == 0.0 || a == 0.0 {
                0.0
            } else if rp[i] == 0.0 {
                1.0
            } else {
                (a / lam).powf(rq[i] / rp[i])
            }
        })
        .collect();
    let infinite_witness: Vec<f64> = (0..n)
        .map(|i| if rq[i] == 0.0 && fv[i] != 0.0 { 1.0 } else { 0.0 })
        .collect();
    let both: Vec<f64> = finite_witness
        .iter()
        .zip(&infinite_witness)
        .map(|(a, b)| a + b)
        .collect();
    try_candidate(both, "power witness", &mut report);
    if finite_part && infinite_part {
        try_candidate(finite_witness, "power witness on {q < inf}", &mut report);
        try_candidate(infinite_witness, "indicator witness on {q = inf}", &mut report);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for j in 0..opts.candidates {
        let gamma = rng.gen_range(0.25..4.0);
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                if fv[i] == 0.0 {
                    0.0
                } else {
                    rng.gen::<f64>().powf(gamma)
                }
            })
            .collect();
        try_candidate(vals, &format!("random candidate {j}"), &mut report);
    }
    Ok(report)
}

/// Cube-norm comparisons for one cube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeNormReport {
    pub cube: Interval,
    pub indicator_norm: f64,
    /// `|Q|^{1/p_Q}`.
    pub harmonic: f64,
    /// `|Q|^{1/p(c_Q)}`, reported when `|Q| ≤ 2`.
    pub center: Option<f64>,
    /// `|Q|^{1/p_∞}`, reported when `|Q| ≥ 1`.
    pub at_infinity: Option<f64>,
    /// `‖χ_Q‖_r / (‖χ_Q‖_p‖χ_Q‖_q)` for a triple with `1/r = 1/p + 1/q`.
    pub triple_ratio: Option<f64>,
}

pub fn cube_norm_estimates(
    p: &VariableExponent,
    q: &Interval,
    triple: Option<(&VariableExponent, &VariableExponent, &VariableExponent)>,
) -> Result<CubeNormReport> {
    let len = q.length();
    let pow = |recip: f64| len.powf(recip);
    let pq = harmonic_mean(p, q)?;
    let harmonic = if pq == f64::INFINITY { 1.0 } else { len.powf(1.0 / pq) };
    Ok(CubeNormReport {
        cube: *q,
        indicator_norm: indicator_norm(p, q),
        harmonic,
        center: (len <= 2.0).then(|| pow(p.recip(q.center()))),
        at_infinity: if len >= 1.0 {
            p.recip_at_infinity().map(pow)
        } else {
            None
        },
        triple_ratio: triple.map(|(r, pp, qq)| indicator_norm(r, q) / (indicator_norm(pp, q) * indicator_norm(qq, q))),
    })
}

/// Sweep of `‖χ_Q‖_p / |Q|^{1/p_Q}` over a cube family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeNormSweep {
    pub ratios: Vec<(Interval, f64)>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// Slope of log ratio against log `|Q|` on cubes containing a knot of
    /// the exponent (all cubes when there are none).
    pub slope: Option<f64>,
    pub flagged: bool,
}

/// Flags the sweep when the ratio drifts with scale by more than
/// `slope_tol` in log-log terms.
pub fn cube_norm_sweep(p: &VariableExponent, cubes: &[Interval], slope_tol: f64) -> Result<CubeNormSweep> {
    let mut ratios = Vec::with_capacity(cubes.len());
    for q in cubes {
        let rep = cube_norm_estimates(p, q, None)?;
        ratios.push((*q, rep.indicator_norm / rep.harmonic));
    }
    let touching: Vec<&(Interval, f64)> = ratios
        .iter()
        .filter(|(q, _)| p.knots().iter().any(|k| q.a() < *k && *k < q.b()))
        .collect();
    let sel: Vec<&(Interval, f64)> = if touching.len() >= 2 {
        touching
    } else {
        ratios.iter().collect()
    };
    let xs: Vec<f64> = sel.iter().map(|(q, _)| q.length().ln()).collect();
    let ys: Vec<f64> = sel.iter().map(|(_, r)| r.ln()).collect();
    let slope = crate::stats::slope(&xs, &ys);
    let max_ratio = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let min_ratio = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let flagged = slope.map_or(false, |s| s.abs() > slope_tol) || !max_ratio.is_finite();
    Ok(CubeNormSweep {
        ratios,
        max_ratio,
        min_ratio,
        slope,
        flagged,
    })
}
