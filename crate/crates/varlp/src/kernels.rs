//! Explicit kernels on the line, their integral operators, and numerical
//! probes for the Hörmander and size conditions.
//!
//! Kernel slices `t ↦ K(x, t)` (or `t ↦ K(t, x)`) are sampled at cell
//! midpoints of grids built from the slice's support, its jump points and
//! a geometric refinement at its singular points, so every annulus norm is
//! a plain Luxemburg norm of a grid function.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::VariableExponent;
use crate::grid::{Grid, GridFunction, Interval};
use crate::luxemburg::{indicator_norm, luxemburg_norm};
use crate::maximal::sharp_profile;
use crate::weights::{Verdict, Weight};

/// `χ_{[2,3]}(t)`.
pub fn kernel_k1(t: f64) -> f64 {
    if (2.0..=3.0).contains(&t) {
        1.0
    } else {
        0.0
    }
}

/// `t^{-1/2} (log(e/t))^{-(1+β)/2}` on `(0, 1]`, zero elsewhere. The
/// right endpoint is included so that `K₂(1) = 1`; a single point does not
/// change any norm.
pub fn kernel_k2(t: f64, beta: f64) -> f64 {
    if t > 0.0 && t <= 1.0 {
        t.powf(-0.5) * (1.0 - t.ln()).powf(-0.5 * (1.0 + beta))
    } else {
        0.0
    }
}

/// Which argument of the kernel is held fixed when slicing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `t ↦ K(x, t)`.
    First,
    /// `t ↦ K(t, x)`.
    Second,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Zero,
    /// `K(x,y) = K₁(x − y) K₂(y)`.
    Product {
        beta: f64,
    },
    /// `K̃(x,y) = K₁(y) K₂(x − y − 1)`.
    Tilde {
        beta: f64,
    },
    /// `1/|x − y|`.
    Homogeneous,
    /// `|x − y|^α · base(x, y)`.
    Fractional {
        alpha: f64,
        base: Box<Kernel>,
    },
}

/// Where a slice can be nonzero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Support {
    Empty,
    Bounded(Interval),
    Unbounded,
}

impl Support {
    fn union(self, other: Support) -> Support {
        match (self, other) {
            (Support::Empty, s) | (s, Support::Empty) => s,
            (Support::Unbounded, _) | (_, Support::Unbounded) => Support::Unbounded,
            (Support::Bounded(a), Support::Bounded(b)) => Support::Bounded(a.hull(&b)),
        }
    }

    fn from_closed(a: f64, b: f64) -> Support {
        if a < b {
            Support::Bounded(Interval::new(a, b))
        } else {
            Support::Empty
        }
    }

    fn within(self, q: &Interval) -> Support {
        match self {
            Support::Bounded(s) => s.intersect(q).map_or(Support::Empty, Support::Bounded),
            s => s,
        }
    }
}

/// Support, singular points and jump points of a kernel slice.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceShape {
    pub support: Support,
    pub singular: Vec<f64>,
    pub knots: Vec<f64>,
}

impl SliceShape {
    fn empty() -> Self {
        Self {
            support: Support::Empty,
            singular: Vec::new(),
            knots: Vec::new(),
        }
    }

    fn union(mut self, other: SliceShape) -> Self {
        self.support = self.support.union(other.support);
        self.singular.extend(other.singular);
        self.knots.extend(other.knots);
        self
    }
}

impl Kernel {
    pub fn product(beta: f64) -> Self {
        Kernel::Product { beta }
    }

    pub fn tilde(beta: f64) -> Self {
        Kernel::Tilde { beta }
    }

    pub fn fractional(alpha: f64, base: Kernel) -> Self {
        Kernel::Fractional {
            alpha,
            base: Box::new(base),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Kernel::Zero => "zero".into(),
            Kernel::Product { beta } => format!("K(beta={beta})"),
            Kernel::Tilde { beta } => format!("Ktilde(beta={beta})"),
            Kernel::Homogeneous => "1/|x-y|".into(),
            Kernel::Fractional { alpha, base } => format!("|x-y|^{alpha}*{}", base.name()),
        }
    }

    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        match self {
            Kernel::Zero => 0.0,
            Kernel::Product { beta } => kernel_k1(x - y) * kernel_k2(y, *beta),
            Kernel::Tilde { beta } => kernel_k1(y) * kernel_k2(x - y - 1.0, *beta),
            Kernel::Homogeneous => 1.0 / (x - y).abs(),
            Kernel::Fractional { alpha, base } => {
                let b = base.evaluate(x, y);
                if b == 0.0 {
                    0.0
                } else {
                    (x - y).abs().powf(*alpha) * b
                }
            }
        }
    }

    /// The slice through `fixed` evaluated at `t`.
    pub fn slice_value(&self, fixed: f64, t: f64, variant: Variant) -> f64 {
        match variant {
            Variant::First => self.evaluate(fixed, t),
            Variant::Second => self.evaluate(t, fixed),
        }
    }

    pub fn slice_shape(&self, fixed: f64, variant: Variant) -> SliceShape {
        let x = fixed;
        match (self, variant) {
            (Kernel::Zero, _) => SliceShape::empty(),
            // y ↦ K₁(x − y)K₂(y)
            (Kernel::Product { .. }, Variant::First) => SliceShape {
                support: Support::from_closed((x - 3.0).max(0.0), (x - 2.0).min(1.0)),
                singular: vec![0.0],
                knots: vec![x - 3.0, x - 2.0, 0.0, 1.0],
            },
            // t ↦ K₁(t − y)K₂(y): a constant on [y+2, y+3]
            (Kernel::Product { .. }, Variant::Second) => {
                if x > 0.0 && x <= 1.0 {
                    SliceShape {
                        support: Support::from_closed(x + 2.0, x + 3.0),
                        singular: Vec::new(),
                        knots: vec![x + 2.0, x + 3.0],
                    }
                } else {
                    SliceShape::empty()
                }
            }
            // y ↦ K₁(y)K₂(x − y − 1)
            (Kernel::Tilde { .. }, Variant::First) => SliceShape {
                support: Support::from_closed((x - 2.0).max(2.0), (x - 1.0).min(3.0)),
                singular: vec![x - 1.0],
                knots: vec![2.0, 3.0, x - 2.0, x - 1.0],
            },
            // t ↦ K₁(y)K₂(t − y − 1)
            (Kernel::Tilde { .. }, Variant::Second) => {
                if (2.0..=3.0).contains(&x) {
                    SliceShape {
                        support: Support::from_closed(x + 1.0, x + 2.0),
                        singular: vec![x + 1.0],
                        knots: vec![x + 1.0, x + 2.0],
                    }
                } else {
                    SliceShape::empty()
                }
            }
            (Kernel::Homogeneous, _) => SliceShape {
                support: Support::Unbounded,
                singular: vec![x],
                knots: vec![x],
            },
            (Kernel::Fractional { base, .. }, v) => {
                let mut s = base.slice_shape(x, v);
                if s.support != Support::Empty {
                    s.knots.push(x);
                }
                s
            }
        }
    }
}

/// Resolution of kernel slice grids.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceOptions {
    /// Cells closest to a singular point have width about `2^-floor_exponent`.
    pub floor_exponent: i32,
    pub subdivision: usize,
    /// Outer radius of the geometric refinement.
    pub radius: f64,
    pub base_cells: usize,
}

impl Default for SliceOptions {
    fn default() -> Self {
        Self {
            floor_exponent: 32,
            subdivision: 4,
            radius: 1.0,
            base_cells: 16,
        }
    }
}

impl SliceOptions {
    pub fn floor(&self) -> f64 {
        (-(self.floor_exponent as f64)).exp2()
    }

    pub fn with_floor_exponent(mut self, k: i32) -> Self {
        self.floor_exponent = k;
        self
    }
}

fn slice_grid(region: Interval, shape: &SliceShape, extra: &[f64], opts: &SliceOptions) -> Grid {
    let mut b = Grid::builder(region)
        .uniform_cells(opts.base_cells)
        .breakpoints(shape.knots.iter().copied())
        .breakpoints(extra.iter().copied());
    for &s in &shape.singular {
        if region.a() <= s && s <= region.b() {
            b = b.graded_with(s, opts.radius.min(region.length()), opts.floor(), opts.subdivision);
        }
    }
    b.build()
}

/// `‖g‖_{r(·)}`, in closed form when `r` is constant.
fn grid_norm(g: &GridFunction, r: &VariableExponent) -> f64 {
    match r.constant_value() {
        Some(p) if p.is_infinite() => g.sup_abs(),
        Some(p) => {
            let grid = g.grid();
            let s: f64 = g
                .values()
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| grid.width(i) * v.abs().powf(p))
                .sum();
            s.powf(1.0 / p)
        }
        None => luxemburg_norm(g, r).value,
    }
}

/// `‖χ_Q‖_{r(·)}`, in closed form when `r` is constant.
fn cube_norm(r: &VariableExponent, q: &Interval) -> f64 {
    match r.constant_value() {
        Some(p) if p.is_infinite() => 1.0,
        Some(p) => q.length().powf(1.0 / p),
        None => indicator_norm(r, q),
    }
}

/// Grid function of `K(x,·) − K(z,·)` (or of `K(x,·)` alone) on
/// `outer ∖ inner`, or `None` when it vanishes identically.
fn annulus_slice(
    k: &Kernel,
    x: f64,
    z: Option<f64>,
    variant: Variant,
    outer: &Interval,
    inner: Option<&Interval>,
    opts: &SliceOptions,
) -> Option<GridFunction> {
    let mut shape = k.slice_shape(x, variant);
    if let Some(z) = z {
        shape = shape.union(k.slice_shape(z, variant));
    }
    let region = match shape.support.within(outer) {
        Support::Empty => return None,
        Support::Bounded(r) => r,
        Support::Unbounded => *outer,
    };
    if inner.is_some_and(|i| i.contains_interval(&region)) {
        return None;
    }
    let extra: Vec<f64> = inner.map(|i| vec![i.a(), i.b()]).unwrap_or_default();
    let grid = Arc::new(slice_grid(region, &shape, &extra, opts));
    let vals: Vec<f64> = grid
        .midpoints()
        .into_iter()
        .map(|t| {
            if inner.is_some_and(|i| i.contains(t)) {
                return 0.0;
            }
            let a = k.slice_value(x, t, variant);
            match z {
                Some(z) => a - k.slice_value(z, t, variant),
                None => a,
            }
        })
        .collect();
    GridFunction::new(grid, vals).ok()
}

/// `‖[K(x,·) − K(z,·)] χ_{outer∖inner}‖_{r(·)}` (slots swapped for
/// [`Variant::Second`]).
pub fn annulus_norm(
    k: &Kernel,
    x: f64,
    z: f64,
    variant: Variant,
    outer: &Interval,
    inner: &Interval,
    r: &VariableExponent,
    opts: &SliceOptions,
) -> f64 {
    annulus_slice(k, x, Some(z), variant, outer, Some(inner), opts).map_or(0.0, |g| grid_norm(&g, r))
}

/// Quadrature settings for [`apply_operator_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureOptions {
    pub slice: SliceOptions,
    /// Largest share of the absolute integral allowed in the cells next to
    /// a singular point.
    pub floor_share: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            slice: SliceOptions::default(),
            floor_share: 1e-3,
        }
    }
}

/// `Tf(x) = ∫ K(x,y) f(y) dy` over the window of `f`.
pub fn apply_operator(k: &Kernel, f: &GridFunction, x: f64) -> Result<f64> {
    apply_operator_with(k, f, x, &QuadratureOptions::default())
}

pub fn apply_operator_with(k: &Kernel, f: &GridFunction, x: f64, opts: &QuadratureOptions) -> Result<f64> {
    let shape = k.slice_shape(x, Variant::First);
    let win = f.grid().window();
    let region = match shape.support.within(&win) {
        Support::Empty => return Ok(0.0),
        Support::Bounded(r) => r,
        Support::Unbounded => win,
    };
    let fpts: Vec<f64> = f
        .grid()
        .breakpoints()
        .iter()
        .copied()
        .filter(|t| region.a() < *t && *t < region.b())
        .collect();
    let grid = slice_grid(region, &shape, &fpts, &opts.slice);
    let near = 2.0 * opts.slice.floor();
    let (mut total, mut abs_total, mut inner) = (0.0, 0.0, 0.0);
    for i in 0..grid.n_cells() {
        let t = grid.midpoint(i);
        let fv = f.value_at(t);
        if fv == 0.0 {
            continue;
        }
        let c = grid.width(i) * k.evaluate(x, t) * fv;
        total += c;
        abs_total += c.abs();
        if shape.singular.iter().any(|s| (t - s).abs() < near) {
            inner += c.abs();
        }
    }
    if !total.is_finite() || inner > opts.floor_share * abs_total {
        return Err(Error::Quadrature(format!(
            "{} at x = {x}: cells at the refinement floor carry {inner:e} of {abs_total:e}",
            k.name()
        )));
    }
    Ok(total)
}

/// `Tf` at every cell midpoint of `target`.
pub fn apply_operator_profile(k: &Kernel, f: &GridFunction, target: &Arc<Grid>) -> Result<GridFunction> {
    let vals: Vec<f64> = target
        .midpoints()
        .par_iter()
        .map(|&x| apply_operator(k, f, x))
        .collect::<Result<_>>()?;
    GridFunction::new(target.clone(), vals)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HormanderOptions {
    pub m_max: usize,
    /// Stop after this many consecutive zero terms once the annuli have
    /// passed the slice supports.
    pub zero_run: usize,
    pub slice: SliceOptions,
}

impl Default for HormanderOptions {
    fn default() -> Self {
        Self {
            m_max: 40,
            zero_run: 10,
            slice: SliceOptions::default(),
        }
    }
}

/// A truncated Hörmander sum with its terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HormanderSum {
    pub terms: Vec<f64>,
    pub total: f64,
    /// Magnitude of the last computed term.
    pub tail: f64,
}

/// Coefficients `(2^mℓ) / (‖χ_{2^mQ}‖_β ‖χ_{2^mQ}‖_r)` for `m = 1..=m_max`.
fn term_coefficients(q: &Interval, beta: &VariableExponent, r: &VariableExponent, m_max: usize) -> Vec<f64> {
    (1..=m_max)
        .map(|m| {
            let outer = q.dilate((m as f64).exp2());
            outer.length() / (cube_norm(beta, &outer) * cube_norm(r, &outer))
        })
        .collect()
}

fn sum_with(
    k: &Kernel,
    q: &Interval,
    x: f64,
    z: f64,
    r: &VariableExponent,
    variant: Variant,
    coefs: &[f64],
    opts: &HormanderOptions,
) -> HormanderSum {
    let support = k
        .slice_shape(x, variant)
        .support
        .union(k.slice_shape(z, variant).support);
    let mut terms = Vec::new();
    let mut zeros = 0;
    if x != z && support != Support::Empty {
        for (j, c) in coefs.iter().enumerate() {
            let m = (j + 1) as f64;
            let outer = q.dilate(m.exp2());
            let inner = q.dilate((m - 1.0).exp2());
            let a = annulus_norm(k, x, z, variant, &outer, &inner, r, &opts.slice);
            let t = if a == 0.0 { 0.0 } else { c * a };
            terms.push(t);
            zeros = if t == 0.0 { zeros + 1 } else { 0 };
            let exhausted = match support {
                Support::Bounded(s) => outer.contains_interval(&s),
                _ => false,
            };
            if exhausted && zeros >= opts.zero_run {
                break;
            }
        }
    }
    let total = terms.iter().sum();
    let tail = terms.last().copied().unwrap_or(0.0);
    HormanderSum { terms, total, tail }
}

/// `Σ_m (2^mℓ)/‖χ_{2^mQ}‖_β · ‖[K(x,·) − K(z,·)]χ_{2^mQ∖2^{m−1}Q}‖_r / ‖χ_{2^mQ}‖_r`
/// for `m = 1..=m_max`.
pub fn hormander_sum(
    k: &Kernel,
    q: &Interval,
    x: f64,
    z: f64,
    beta: &VariableExponent,
    r: &VariableExponent,
    variant: Variant,
    opts: &HormanderOptions,
) -> HormanderSum {
    let coefs = term_coefficients(q, beta, r, opts.m_max);
    sum_with(k, q, x, z, r, variant, &coefs, opts)
}

/// `n` evenly spaced points of `½Q`, endpoints included.
pub fn half_cube_points(q: &Interval, n: usize) -> Vec<f64> {
    let h = q.dilate(0.5);
    if n < 2 {
        return vec![h.center()];
    }
    (0..n).map(|j| h.at(j as f64 / (n - 1) as f64)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOptions {
    /// Points per axis of the tensor grid of pairs in `½Q`.
    pub quantiles: usize,
    /// Extra `(x, z)` pairs, used on the cubes whose half contains both.
    pub extra_pairs: Vec<(f64, f64)>,
    pub hormander: HormanderOptions,
    /// Allowed relative growth of the sup from the coarse to the fine pass.
    pub stability_tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            quantiles: 5,
            extra_pairs: Vec::new(),
            hormander: HormanderOptions::default(),
            stability_tol: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeRecord {
    pub cube: Interval,
    pub x: f64,
    pub z: f64,
    pub sum: HormanderSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HormanderReport {
    pub kernel: String,
    pub variant: Variant,
    pub sup_coarse: f64,
    /// Over the fine family with twice the number of terms.
    pub sup_fine: f64,
    pub witness: Option<CubeRecord>,
    /// Largest sum on each cube of the coarse family.
    pub records: Vec<CubeRecord>,
    pub verdict: Verdict,
}

impl HormanderReport {
    pub fn sup(&self) -> f64 {
        self.sup_coarse.max(self.sup_fine)
    }

    /// Last-term magnitude of the witness.
    pub fn tail(&self) -> f64 {
        self.witness.as_ref().map_or(0.0, |w| w.sum.tail)
    }
}

fn pairs_for(q: &Interval, opts: &ProbeOptions) -> Vec<(f64, f64)> {
    let pts = half_cube_points(q, opts.quantiles);
    let mut pairs: Vec<(f64, f64)> = pts
        .iter()
        .flat_map(|&x| pts.iter().map(move |&z| (x, z)))
        .filter(|(x, z)| x != z)
        .collect();
    let h = q.dilate(0.5);
    pairs.extend(
        opts.extra_pairs
            .iter()
            .copied()
            .filter(|(x, z)| h.contains(*x) && h.contains(*z)),
    );
    pairs
}

fn probe_pass(
    k: &Kernel,
    beta: &VariableExponent,
    r: &VariableExponent,
    variant: Variant,
    cubes: &[Interval],
    opts: &ProbeOptions,
    hopts: &HormanderOptions,
) -> Vec<CubeRecord> {
    cubes
        .par_iter()
        .map(|q| {
            let coefs = term_coefficients(q, beta, r, hopts.m_max);
            let mut best: Option<CubeRecord> = None;
            for (x, z) in pairs_for(q, opts) {
                let sum = sum_with(k, q, x, z, r, variant, &coefs, hopts);
                if best.as_ref().is_none_or(|b| sum.total > b.sum.total) {
                    best = Some(CubeRecord { cube: *q, x, z, sum });
                }
            }
            best.unwrap_or(CubeRecord {
                cube: *q,
                x: q.center(),
                z: q.center(),
                sum: HormanderSum {
                    terms: Vec::new(),
                    total: 0.0,
                    tail: 0.0,
                },
            })
        })
        .collect()
}

fn stability_verdict(coarse: f64, fine: f64, tol: f64) -> Verdict {
    if !coarse.is_finite() || !fine.is_finite() {
        Verdict::Diverging
    } else if fine <= (1.0 + tol) * coarse {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    }
}

/// Sup of [`hormander_sum`] over cubes and pairs. The verdict is bounded
/// when the sup over `fine` (with `2·m_max` terms) exceeds the sup over
/// `coarse` by at most `stability_tol`.
pub fn hormander_class_probe(
    k: &Kernel,
    beta: &VariableExponent,
    r: &VariableExponent,
    variant: Variant,
    coarse: &[Interval],
    fine: &[Interval],
    opts: &ProbeOptions,
) -> HormanderReport {
    let records = probe_pass(k, beta, r, variant, coarse, opts, &opts.hormander);
    let doubled = HormanderOptions {
        m_max: 2 * opts.hormander.m_max,
        ..opts.hormander
    };
    let fine_records = probe_pass(k, beta, r, variant, fine, opts, &doubled);
    let best = |rs: &[CubeRecord]| rs.iter().map(|c| c.sum.total).fold(0.0, f64::max);
    let (sup_coarse, sup_fine) = (best(&records), best(&fine_records));
    let witness = records
        .iter()
        .chain(&fine_records)
        .filter(|c| c.sum.total > 0.0)
        .max_by(|a, b| a.sum.total.total_cmp(&b.sum.total))
        .cloned();
    HormanderReport {
        kernel: k.name(),
        variant,
        sup_coarse,
        sup_fine,
        witness,
        records,
        verdict: stability_verdict(sup_coarse, sup_fine, opts.stability_tol),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeRecord {
    pub cube: Interval,
    pub point: f64,
    /// `‖K(x,·)χ_{2Q∖Q}‖_r / ‖χ_Q‖_r`.
    pub raw: f64,
    /// `raw · |Q| / ‖χ_Q‖_β`.
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub kernel: String,
    pub variant: Variant,
    pub sup_coarse: f64,
    pub sup_fine: f64,
    pub records: Vec<SizeRecord>,
    /// `(ℓ(Q), max raw·|Q|)` per cube length of the coarse family.
    pub scales: Vec<(f64, f64)>,
    /// Log-log slope of the positive entries of `scales`.
    pub slope: Option<f64>,
    pub positive_scales: usize,
    pub verdict: Verdict,
}

fn size_pass(
    k: &Kernel,
    beta: &VariableExponent,
    r: &VariableExponent,
    variant: Variant,
    cubes: &[Interval],
    quantiles: usize,
    slice: &SliceOptions,
) -> Vec<SizeRecord> {
    cubes
        .par_iter()
        .map(|q| {
            let outer = q.dilate(2.0);
            let den = cube_norm(r, q);
            let scale = q.length() / cube_norm(beta, q);
            half_cube_points(q, quantiles)
                .into_iter()
                .map(|x| {
                    let n =
                        annulus_slice(k, x, None, variant, &outer, Some(q), slice).map_or(0.0, |g| grid_norm(&g, r));
                    let raw = n / den;
                    SizeRecord {
                        cube: *q,
                        point: x,
                        raw,
                        normalized: raw * scale,
                    }
                })
                .max_by(|a, b| a.normalized.total_cmp(&b.normalized))
                .expect("at least one point per cube")
        })
        .collect()
}

/// Sup over cubes and points `x ∈ ½Q` of
/// `‖K(x,·)χ_{2Q∖Q}‖_r / ‖χ_Q‖_r · |Q| / ‖χ_Q‖_β`, with the same verdict
/// rule as [`hormander_class_probe`].
pub fn size_condition_probe(
    k: &Kernel,
    beta: &VariableExponent,
    r: &VariableExponent,
    variant: Variant,
    coarse: &[Interval],
    fine: &[Interval],
    quantiles: usize,
) -> SizeReport {
    let slice = SliceOptions::default();
    let records = size_pass(k, beta, r, variant, coarse, quantiles, &slice);
    let fine_records = size_pass(k, beta, r, variant, fine, quantiles, &slice);
    let best = |rs: &[SizeRecord]| rs.iter().map(|c| c.normalized).fold(0.0, f64::max);
    let (sup_coarse, sup_fine) = (best(&records), best(&fine_records));

    let mut scales: Vec<(f64, f64)> = Vec::new();
    for rec in &records {
        let l = rec.cube.length();
        let v = rec.raw * l;
        match scales.iter_mut().find(|(s, _)| (s / l - 1.0).abs() < 1e-9) {
            Some(e) => e.1 = e.1.max(v),
            None => scales.push((l, v)),
        }
    }
    scales.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pos: Vec<&(f64, f64)> = scales.iter().filter(|s| s.1 > 0.0).collect();
    let xs: Vec<f64> = pos.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = pos.iter().map(|s| s.1).collect();
    SizeReport {
        kernel: k.name(),
        variant,
        sup_coarse,
        sup_fine,
        positive_scales: pos.len(),
        slope: crate::stats::log_log_slope(&xs, &ys),
        scales,
        records,
        verdict: stability_verdict(sup_coarse, sup_fine, 0.1),
    }
}

/// Inner annulus norms along a ladder of refinement floors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceLadder {
    pub levels: Vec<i32>,
    pub norms: Vec<f64>,
    pub ratios: Vec<f64>,
    /// At least three levels and every ratio at least 2.
    pub diverging: bool,
}

impl DivergenceLadder {
    fn from_norms(levels: Vec<i32>, norms: Vec<f64>) -> Self {
        let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
        let diverging = norms.len() >= 3 && ratios.iter().all(|r| *r >= 2.0);
        Self {
            levels,
            norms,
            ratios,
            diverging,
        }
    }
}

/// The `m`-th annulus norm of `K(x,·) − K(z,·)` on `Q` at each floor level.
#[allow(clippy::too_many_arguments)]
pub fn divergence_ladder(
    k: &Kernel,
    q: &Interval,
    x: f64,
    z: f64,
    r: &VariableExponent,
    variant: Variant,
    m: u32,
    levels: &[i32],
    base: &SliceOptions,
) -> DivergenceLadder {
    let outer = q.dilate((m as f64).exp2());
    let inner = q.dilate(((m - 1) as f64).exp2());
    let norms = levels
        .iter()
        .map(|&l| annulus_norm(k, x, z, variant, &outer, &inner, r, &base.with_floor_exponent(l)))
        .collect();
    DivergenceLadder::from_norms(levels.to_vec(), norms)
}

/// `K₂` on `[0, 1]`, refined geometrically at 0 down to `2^-floor_exponent`.
pub fn k2_grid_function(beta: f64, floor_exponent: i32, subdivision: usize) -> GridFunction {
    let g = Grid::builder(Interval::new(0.0, 1.0))
        .uniform_cells(16)
        .graded_with(0.0, 1.0, (-(floor_exponent as f64)).exp2(), subdivision)
        .build();
    GridFunction::from_fn(Arc::new(g), |t| kernel_k2(t, beta))
}

/// `∫ K₂^s` on the grid of [`k2_grid_function`].
pub fn k2_modular(beta: f64, s: f64, floor_exponent: i32, subdivision: usize) -> f64 {
    let f = k2_grid_function(beta, floor_exponent, subdivision);
    let g = f.grid();
    f.values().iter().enumerate().map(|(i, v)| g.width(i) * v.powf(s)).sum()
}

/// `sup_x ω(x) M^♯f(x)` over the cell midpoints of `f`'s grid.
pub fn bmo_seminorm(f: &GridFunction, omega: &Weight, cubes: &[Interval]) -> f64 {
    let sharp = sharp_profile(f, cubes);
    f.grid()
        .midpoints()
        .into_iter()
        .zip(sharp)
        .map(|(x, s)| if s == 0.0 { 0.0 } else { omega.value_at(x) * s })
        .fold(0.0, f64::max)
}

/// Partial sums `Σ_{m=0}^{M} ‖χ_{2^{-m}Q}‖_β / ‖χ_Q‖_β` for `M = 0..levels`.
pub fn beta_summability(beta: &VariableExponent, q: &Interval, levels: usize) -> Vec<f64> {
    let base = cube_norm(beta, q);
    let mut acc = 0.0;
    (0..levels)
        .map(|m| {
            acc += cube_norm(beta, &q.dilate((-(m as f64)).exp2()));
            acc / base
        })
        .collect()
}
