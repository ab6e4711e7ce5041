//! Averaging operators, fractional maximal operators and the sharp maximal
//! function over finite cube families.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::VariableExponent;
use crate::grid::{DyadicFamily, GridFunction, Interval};
use crate::luxemburg::{norm_segments, CubePieces, NormOptions};

/// Cube family and exponents defining `M_{β(·),r(·)}`.
#[derive(Clone, Debug)]
pub struct MaximalConfig {
    cubes: Vec<Interval>,
    beta: VariableExponent,
    r: VariableExponent,
}

impl MaximalConfig {
    /// Requires a nonempty family and `r ≤ β` wherever both are finite.
    pub fn new(cubes: Vec<Interval>, beta: VariableExponent, r: VariableExponent) -> Result<Self> {
        if cubes.is_empty() {
            return Err(Error::Precondition("empty cube family".into()));
        }
        for x in r.validation_points().into_iter().chain(beta.validation_points()) {
            if r.recip(x) < beta.recip(x) - 1e-12 {
                return Err(Error::ExponentMismatch {
                    x,
                    detail: format!("r(x) = {} exceeds beta(x) = {}", r.value(x), beta.value(x)),
                });
            }
        }
        Ok(Self { cubes, beta, r })
    }

    /// `β ≡ ∞`, `r ≡ 1`: the Hardy–Littlewood maximal operator.
    pub fn hardy_littlewood(cubes: Vec<Interval>) -> Result<Self> {
        Self::new(
            cubes,
            VariableExponent::constant(f64::INFINITY)?,
            VariableExponent::constant(1.0)?,
        )
    }

    pub fn cubes(&self) -> &[Interval] {
        &self.cubes
    }

    pub fn beta(&self) -> &VariableExponent {
        &self.beta
    }

    pub fn r(&self) -> &VariableExponent {
        &self.r
    }
}

fn knots_of(beta: &VariableExponent, r: &VariableExponent) -> Vec<f64> {
    let mut k = beta.knots().to_vec();
    k.extend_from_slice(r.knots());
    k
}

/// `A_Q f = ‖χ_Q‖_β ‖fχ_Q‖_r / ‖χ_Q‖_r`. All three norms use the same
/// pieces of `Q`, so `f = χ_Q` with `β ≡ ∞` gives exactly 1.
pub fn average_op(f: &GridFunction, q: &Interval, beta: &VariableExponent, r: &VariableExponent) -> f64 {
    let pieces = CubePieces::new(f.grid(), q, &knots_of(beta, r));
    average_with_pieces(f, &pieces, beta, r)
}

fn average_with_pieces(f: &GridFunction, pieces: &CubePieces, beta: &VariableExponent, r: &VariableExponent) -> f64 {
    let opts = NormOptions::default();
    let segs = pieces.function_segments(f, r);
    // constant r: closed-form power means; for r ≡ 1 the plain average is
    // summed exactly so ties with a threshold are exact
    let (num, den) = if r.constant_value() == Some(1.0) {
        let s: f64 = segs.iter().map(|s| s.width * s.value.abs()).sum();
        (s, pieces.measure())
    } else if let Some(p) = r.constant_value().filter(|p| p.is_finite()) {
        let s: f64 = segs.iter().map(|s| s.width * s.value.abs().powf(p)).sum();
        ((s / pieces.measure()).powf(1.0 / p), 1.0)
    } else {
        let num = norm_segments(&segs, &opts).value;
        if num == 0.0 {
            return 0.0;
        }
        (num, norm_segments(&pieces.indicator_segments(r), &opts).value)
    };
    if num == 0.0 {
        return 0.0;
    }
    let b = if beta.constant_value() == Some(f64::INFINITY) {
        1.0
    } else {
        norm_segments(&pieces.indicator_segments(beta), &opts).value
    };
    b * num / den
}

/// Averages over every cube of the configuration.
pub fn cube_averages(f: &GridFunction, cfg: &MaximalConfig) -> Vec<f64> {
    let knots = knots_of(&cfg.beta, &cfg.r);
    cfg.cubes
        .par_iter()
        .map(|q| {
            let pieces = CubePieces::new(f.grid(), q, &knots);
            average_with_pieces(f, &pieces, &cfg.beta, &cfg.r)
        })
        .collect()
}

/// `max` of [`average_op`] over family cubes containing `x`; 0 if none does.
pub fn maximal(f: &GridFunction, x: f64, cfg: &MaximalConfig) -> f64 {
    cfg.cubes
        .par_iter()
        .filter(|q| q.contains(x))
        .map(|q| average_op(f, q, &cfg.beta, &cfg.r))
        .reduce(|| 0.0, f64::max)
}

/// Values of a maximal operator at the cell midpoints of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalProfile {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    /// Index into the cube family of a maximising cube.
    pub argmax: Vec<Option<usize>>,
}

impl MaximalProfile {
    /// The profile as a function on `f`'s grid (values at midpoints).
    pub fn to_grid_function(&self, like: &GridFunction) -> GridFunction {
        GridFunction::new(like.grid().clone(), self.values.clone()).expect("one value per cell")
    }

    /// CSV rows `x,Mf,argmax`; a missing argmax is written as `-1`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "Mf", "argmax"])?;
        for i in 0..self.xs.len() {
            let id = self.argmax[i].map_or(-1, |j| j as i64);
            wr.write_record([self.xs[i].to_string(), self.values[i].to_string(), id.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn profile_from_values(f: &GridFunction, cubes: &[Interval], vals: &[f64]) -> MaximalProfile {
    let grid = f.grid();
    let xs = grid.midpoints();
    let mut values = vec![0.0; xs.len()];
    let mut argmax = vec![None; xs.len()];
    for (j, q) in cubes.iter().enumerate() {
        let v = vals[j];
        for i in grid.cells_overlapping(q) {
            if q.contains(xs[i]) && (argmax[i].is_none() || v > values[i]) {
                values[i] = v;
                argmax[i] = Some(j);
            }
        }
    }
    MaximalProfile { xs, values, argmax }
}

/// The maximal operator at every cell midpoint of `f`'s grid.
pub fn maximal_profile(f: &GridFunction, cfg: &MaximalConfig) -> MaximalProfile {
    let vals = cube_averages(f, cfg);
    profile_from_values(f, &cfg.cubes, &vals)
}

/// Dyadic maximal operator at `x`: cubes of `family` containing `x`
/// (both neighbours when `x` is a dyadic endpoint).
pub fn dyadic_maximal(
    f: &GridFunction,
    x: f64,
    family: &DyadicFamily,
    beta: &VariableExponent,
    r: &VariableExponent,
) -> f64 {
    let root = family.root();
    if !root.contains(x) {
        return 0.0;
    }
    let mut best = 0.0f64;
    for d in 0..=family.max_depth() {
        let n = 1u64 << d;
        let t = (x - root.a()) / root.length() * n as f64;
        let i = (t.floor() as u64).min(n - 1);
        for j in [i.wrapping_sub(1), i, i + 1] {
            if j < n {
                let q = family.cube(d, j);
                if q.contains(x) {
                    best = best.max(average_op(f, &q, beta, r));
                }
            }
        }
    }
    best
}

/// Dyadic maximal operator at every cell midpoint.
pub fn dyadic_maximal_profile(
    f: &GridFunction,
    family: &DyadicFamily,
    beta: &VariableExponent,
    r: &VariableExponent,
) -> Result<MaximalProfile> {
    let cfg = MaximalConfig::new(family.all_cubes(), beta.clone(), r.clone())?;
    Ok(maximal_profile(f, &cfg))
}

/// `(value, measure)` pairs of `f` on `Q`, the part outside the window
/// carrying the value 0.
fn value_distribution(f: &GridFunction, q: &Interval) -> Vec<(f64, f64)> {
    let g = f.grid();
    let mut out: Vec<(f64, f64)> = g
        .cells_overlapping(q)
        .map(|i| (f.values()[i], g.cell(i).overlap(q)))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let inside: f64 = out.iter().map(|p| p.1).sum();
    let rest = q.length() - inside;
    if rest > 1e-15 * q.length() {
        out.push((0.0, rest));
    }
    out
}

/// `inf_a (1/|Q|)∫_Q |f − a|`, attained at a weighted median of `f` on `Q`.
pub fn mean_oscillation(f: &GridFunction, q: &Interval) -> f64 {
    let mut dist = value_distribution(f, q);
    if dist.is_empty() {
        return 0.0;
    }
    dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = dist.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    let mut med = dist[0].0;
    for &(v, w) in &dist {
        acc += w;
        med = v;
        if acc >= 0.5 * total {
            break;
        }
    }
    dist.iter().map(|&(v, w)| w * (v - med).abs()).sum::<f64>() / q.length()
}

/// `M^♯f(x)` over family cubes containing `x`.
pub fn sharp_maximal(f: &GridFunction, x: f64, cubes: &[Interval]) -> f64 {
    cubes
        .iter()
        .filter(|q| q.contains(x))
        .map(|q| mean_oscillation(f, q))
        .fold(0.0, f64::max)
}

/// `M^♯f` at every cell midpoint of `f`'s grid.
pub fn sharp_profile(f: &GridFunction, cubes: &[Interval]) -> Vec<f64> {
    let osc: Vec<f64> = cubes.par_iter().map(|q| mean_oscillation(f, q)).collect();
    profile_from_values(f, cubes, &osc).values
}
