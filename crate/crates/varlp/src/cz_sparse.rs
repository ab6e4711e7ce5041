//! Dyadic Calderón–Zygmund stopping cubes and the sparse families built
//! from them.
//!
//! All set computations (the level sets `Ω_k` and the carved sets `E_Q`)
//! are bitsets over grid cells, so disjointness and nesting are exact.

use std::collections::HashMap;
use std::sync::Arc;

use bitvec::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::VariableExponent;
use crate::grid::{DyadicFamily, Grid, GridFunction, Interval};
use crate::luxemburg::{norm_segments, CubePieces, NormOptions};
use crate::maximal::average_op;

/// Maximal dyadic cubes whose average exceeds `lambda`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CZLevel {
    pub lambda: f64,
    pub cubes: Vec<Interval>,
    pub averages: Vec<f64>,
    /// Largest ratio of a selected cube's average to its parent's. Every
    /// selected average is at most `jump_factor · lambda`.
    pub jump_factor: f64,
}

impl CZLevel {
    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// `λ < A_Q ≤ jump_factor·λ` for every selected cube.
    pub fn bounds_hold(&self) -> bool {
        self.averages
            .iter()
            .all(|&v| v > self.lambda && v <= self.jump_factor * self.lambda * (1.0 + 1e-12))
    }
}

/// Top-down stopping time below the root of `family`. The root plays the
/// role of the whole line: its average must not exceed `lambda`, and it is
/// never selected itself.
pub fn cz_decompose(
    f: &GridFunction,
    beta: &VariableExponent,
    r: &VariableExponent,
    family: &DyadicFamily,
    lambda: f64,
) -> Result<CZLevel> {
    let root = family.root();
    let root_avg = average_op(f, &root, beta, r);
    if root_avg > lambda {
        return Err(Error::RootAboveThreshold {
            average: root_avg,
            lambda,
        });
    }
    let mut cubes = Vec::new();
    let mut averages = Vec::new();
    let mut jump: f64 = 1.0;
    // (depth, index, parent average)
    let mut stack: Vec<(u32, u64, f64)> = Vec::new();
    if family.max_depth() > 0 {
        stack.push((1, 1, root_avg));
        stack.push((1, 0, root_avg));
    }
    while let Some((d, i, parent)) = stack.pop() {
        let q = family.cube(d, i);
        let avg = average_op(f, &q, beta, r);
        if avg > lambda {
            if parent > 0.0 {
                jump = jump.max(avg / parent);
            } else {
                jump = f64::INFINITY;
            }
            cubes.push(q);
            averages.push(avg);
        } else if d < family.max_depth() {
            stack.push((d + 1, 2 * i + 1, avg));
            stack.push((d + 1, 2 * i, avg));
        }
    }
    Ok(CZLevel {
        lambda,
        cubes,
        averages,
        jump_factor: jump,
    })
}

/// A cube of a sparse family with its carved set `E_Q = Q ∖ Ω_{k+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCube {
    pub k: i32,
    pub cube: Interval,
    pub cells: BitVec,
    pub carved: BitVec,
    pub carved_measure: f64,
}

impl SparseCube {
    pub fn ratio(&self) -> f64 {
        self.carved_measure / self.cube.length()
    }
}

#[derive(Clone, Debug)]
pub struct SparseFamily {
    pub a: f64,
    pub levels: Vec<(i32, CZLevel)>,
    pub cubes: Vec<SparseCube>,
    /// `min |E_Q|/|Q|`; `None` for an empty family.
    pub eta: Option<f64>,
    /// No grid cell lies in two carved sets.
    pub disjoint: bool,
    /// `Ω_{k+1} ⊆ Ω_k` for consecutive levels.
    pub nested: bool,
    grid: Arc<Grid>,
}

#[derive(Serialize, Deserialize)]
struct LevelJson {
    k: i32,
    cubes: Vec<Interval>,
}

#[derive(Serialize, Deserialize)]
struct SparseJson {
    a: f64,
    levels: Vec<LevelJson>,
    eta: Option<f64>,
}

impl SparseFamily {
    /// Grid on which the cell sets live: `f`'s grid refined at the
    /// finest dyadic breakpoints.
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Number of levels holding at least one cube.
    pub fn nonempty_levels(&self) -> usize {
        self.levels.iter().filter(|(_, l)| !l.is_empty()).count()
    }

    pub fn to_json(&self) -> Result<String> {
        let j = SparseJson {
            a: self.a,
            levels: self
                .levels
                .iter()
                .map(|(k, l)| LevelJson {
                    k: *k,
                    cubes: l.cubes.clone(),
                })
                .collect(),
            eta: self.eta,
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }
}

fn cell_set(grid: &Grid, q: &Interval) -> BitVec {
    let mut bits = bitvec![0; grid.n_cells()];
    for i in grid.cells_overlapping(q) {
        if q.contains(grid.midpoint(i)) {
            bits.set(i, true);
        }
    }
    bits
}

fn union_of(grid: &Grid, cubes: &[Interval]) -> BitVec {
    let mut bits = bitvec![0; grid.n_cells()];
    for q in cubes {
        bits |= cell_set(grid, q);
    }
    bits
}

fn measure(grid: &Grid, bits: &BitSlice) -> f64 {
    bits.iter_ones().map(|i| grid.width(i)).sum()
}

/// `f` on its grid refined at the finest breakpoints of `family`, so every
/// family cube is a union of cells.
fn aligned(f: &GridFunction, family: &DyadicFamily) -> Result<GridFunction> {
    let root = family.root();
    if !f.grid().window().contains_interval(&root) {
        return Err(Error::Precondition(format!(
            "dyadic root {root:?} is not inside the grid window"
        )));
    }
    let g = Arc::new(f.grid().refine_with(&family.breakpoints()));
    Ok(f.resample(&g))
}

/// Levels `λ = a^k` for `k` in `k_range`, and the carved sets
/// `E_Q = Q ∖ Ω_{k+1}` of every selected cube.
pub fn build_sparse(
    f: &GridFunction,
    beta: &VariableExponent,
    r: &VariableExponent,
    family: &DyadicFamily,
    a: f64,
    k_range: std::ops::RangeInclusive<i32>,
) -> Result<SparseFamily> {
    if !(a > 1.0) {
        return Err(Error::Precondition(format!("sparse base a = {a} must exceed 1")));
    }
    let f = aligned(f, family)?;
    let grid = f.grid().clone();
    let (k0, k1) = (*k_range.start(), *k_range.end());
    // one level past the range supplies Ω_{k1+1}
    let ks: Vec<i32> = (k0..=k1 + 1).collect();
    let levels: Vec<CZLevel> = ks
        .par_iter()
        .map(|&k| cz_decompose(&f, beta, r, family, a.powi(k)))
        .collect::<Result<_>>()?;
    let omegas: Vec<BitVec> = levels.iter().map(|l| union_of(&grid, &l.cubes)).collect();

    let nested = omegas.windows(2).all(|w| {
        let mut x = w[1].clone();
        x &= !w[0].clone();
        x.not_any()
    });

    let mut cubes = Vec::new();
    let mut seen = bitvec![0; grid.n_cells()];
    let mut disjoint = true;
    for (j, level) in levels.iter().enumerate().take(ks.len() - 1) {
        for q in &level.cubes {
            let cells = cell_set(&grid, q);
            let mut carved = cells.clone();
            carved &= !omegas[j + 1].clone();
            let mut overlap = carved.clone();
            overlap &= seen.clone();
            if overlap.any() {
                disjoint = false;
            }
            seen |= carved.clone();
            let carved_measure = measure(&grid, &carved);
            cubes.push(SparseCube {
                k: ks[j],
                cube: *q,
                cells,
                carved,
                carved_measure,
            });
        }
    }
    let eta = cubes.iter().map(SparseCube::ratio).min_by(f64::total_cmp);
    let levels = ks.into_iter().zip(levels).take((k1 - k0 + 1) as usize).collect();
    Ok(SparseFamily {
        a,
        levels,
        cubes,
        eta,
        disjoint,
        nested,
        grid,
    })
}

/// Integer range `k0..=k1` with `a^{k0}` at least the root average and
/// `a^{k1}` at least every family average, so all levels past `k1` are
/// empty. `None` when `f` vanishes on the root.
pub fn auto_k_range(
    f: &GridFunction,
    beta: &VariableExponent,
    r: &VariableExponent,
    family: &DyadicFamily,
    a: f64,
) -> Option<std::ops::RangeInclusive<i32>> {
    let root = average_op(f, &family.root(), beta, r);
    if root == 0.0 {
        return None;
    }
    let top = family
        .all_cubes()
        .par_iter()
        .map(|q| average_op(f, q, beta, r))
        .reduce(|| 0.0, f64::max);
    let k0 = (root.ln() / a.ln()).ceil() as i32;
    let k1 = ((top.ln() / a.ln()).ceil() as i32).max(k0);
    Some(k0..=k1)
}

/// `T_S f(x) = Σ_{Q∈S} ‖χ_Q‖_β · avg_Q|f| · χ_Q(x)`, on the grid of `s`.
pub fn sparse_operator(f: &GridFunction, s: &SparseFamily, beta: &VariableExponent) -> GridFunction {
    let grid = s.grid().clone();
    let f = f.resample(&grid);
    let mut out = vec![0.0; grid.n_cells()];
    let mut memo: HashMap<(u64, u64), f64> = HashMap::new();
    for c in &s.cubes {
        let q = c.cube;
        let coef = *memo.entry((q.a().to_bits(), q.b().to_bits())).or_insert_with(|| {
            let pieces = CubePieces::new(&grid, &q, beta.knots());
            let b = norm_segments(&pieces.indicator_segments(beta), &NormOptions::default()).value;
            b * f.abs().integrate(&q) / q.length()
        });
        for i in c.cells.iter_ones() {
            out[i] += coef;
        }
    }
    GridFunction::new(grid, out).expect("finite sparse sums")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maximal::dyadic_maximal;

    fn k(p: f64) -> VariableExponent {
        VariableExponent::constant(p).unwrap()
    }

    fn ind(window: Interval, cells: usize, q: Interval) -> GridFunction {
        GridFunction::indicator(Arc::new(Grid::uniform(window, cells)), &q)
    }

    #[test]
    fn single_indicator_selection() {
        let f = ind(Interval::new(0.0, 4.0), 16, Interval::new(0.0, 1.0));
        let fam = DyadicFamily::new(Interval::new(0.0, 4.0), 4);
        let lvl = cz_decompose(&f, &k(f64::INFINITY), &k(1.0), &fam, 0.5).unwrap();
        assert_eq!(lvl.cubes, vec![Interval::new(0.0, 1.0)]);
        assert_eq!(lvl.averages, vec![1.0]);
        assert!(lvl.bounds_hold());
        assert_eq!(lvl.jump_factor, 2.0);
    }

    #[test]
    fn threshold_above_sup_selects_nothing() {
        let f = ind(Interval::new(0.0, 4.0), 16, Interval::new(0.0, 1.0));
        let fam = DyadicFamily::new(Interval::new(0.0, 4.0), 4);
        let lvl = cz_decompose(&f, &k(f64::INFINITY), &k(1.0), &fam, 1.0).unwrap();
        assert!(lvl.is_empty());
    }

    #[test]
    fn root_above_threshold_is_an_error() {
        let f = ind(Interval::new(0.0, 4.0), 16, Interval::new(0.0, 4.0));
        let fam = DyadicFamily::new(Interval::new(0.0, 4.0), 4);
        assert!(matches!(
            cz_decompose(&f, &k(f64::INFINITY), &k(1.0), &fam, 0.5),
            Err(Error::RootAboveThreshold { .. })
        ));
    }

    #[test]
    fn indicator_family_is_sparse() {
        let f = ind(Interval::new(0.0, 8.0), 64, Interval::new(0.0, 1.0));
        let fam = DyadicFamily::new(Interval::new(0.0, 8.0), 6);
        let (b, r) = (k(f64::INFINITY), k(1.0));
        let range = auto_k_range(&f, &b, &r, &fam, 4.0).unwrap();
        let s = build_sparse(&f, &b, &r, &fam, 4.0, range).unwrap();
        assert!(s.disjoint && s.nested);
        assert!(s.eta.unwrap() >= 0.5, "{:?}", s.eta);
        let json: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(json["a"], 4.0);
    }

    #[test]
    fn zero_function_gives_empty_family() {
        let f = GridFunction::zeros(Arc::new(Grid::uniform(Interval::new(0.0, 1.0), 8)));
        let fam = DyadicFamily::new(Interval::new(0.0, 1.0), 3);
        let (b, r) = (k(f64::INFINITY), k(1.0));
        assert!(auto_k_range(&f, &b, &r, &fam, 2.0).is_none());
        let s = build_sparse(&f, &b, &r, &fam, 2.0, 0..=2).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.eta, None);
    }

    #[test]
    fn base_must_exceed_one() {
        let f = ind(Interval::new(0.0, 1.0), 8, Interval::new(0.0, 0.5));
        let fam = DyadicFamily::new(Interval::new(0.0, 1.0), 3);
        assert!(build_sparse(&f, &k(f64::INFINITY), &k(1.0), &fam, 1.0, 0..=1).is_err());
    }

    #[test]
    fn larger_base_gives_larger_eta() {
        let g = Arc::new(Grid::uniform(Interval::new(0.0, 16.0), 256));
        let f = GridFunction::from_fn(g, |x| if x < 4.0 { 100.0 * (1.0 + x).powf(-1.5) } else { 0.0 });
        let fam = DyadicFamily::new(Interval::new(0.0, 16.0), 8);
        let (b, r) = (k(f64::INFINITY), k(1.0));
        let mut prev = 0.0;
        for a in [2.0, 4.0, 8.0, 16.0] {
            let range = auto_k_range(&f, &b, &r, &fam, a).unwrap();
            let s = build_sparse(&f, &b, &r, &fam, a, range).unwrap();
            let eta = s.eta.unwrap();
            assert!(eta >= prev, "a = {a}: {eta} < {prev}");
            assert!(s.disjoint);
            prev = eta;
        }
    }

    #[test]
    fn sparse_operator_examples() {
        let win = Interval::new(0.0, 4.0);
        let f = ind(win, 16, Interval::new(0.0, 1.0));
        let fam = DyadicFamily::new(win, 4);
        let (b, r) = (k(f64::INFINITY), k(1.0));
        let s = build_sparse(&f, &b, &r, &fam, 2.0, -1..=-1).unwrap();
        assert_eq!(s.cubes.len(), 1);
        assert_eq!(s.cubes[0].cube, Interval::new(0.0, 1.0));
        let t = sparse_operator(&f, &s, &b);
        for (x, v) in t.grid().midpoints().into_iter().zip(t.values()) {
            assert_eq!(*v, if x < 1.0 { 1.0 } else { 0.0 });
        }

        // two nested levels: on the inner cube the two averages add up
        let f = GridFunction::from_fn(Arc::new(Grid::uniform(win, 16)), |x| {
            if x < 0.5 {
                4.0
            } else if x < 1.0 {
                1.0
            } else {
                0.0
            }
        });
        let s = build_sparse(&f, &b, &r, &fam, 2.0, 0..=1).unwrap();
        let t = sparse_operator(&f, &s, &b);
        let expect: f64 = s
            .cubes
            .iter()
            .filter(|c| c.cube.contains(0.1))
            .map(|c| f.integrate(&c.cube) / c.cube.length())
            .sum();
        assert_eq!(s.cubes.iter().filter(|c| c.cube.contains(0.1)).count(), 2);
        assert!((t.value_at(0.1) - expect).abs() < 1e-12);
    }

    #[test]
    fn sparse_operator_dominated_by_levels_times_maximal() {
        let win = Interval::new(0.0, 8.0);
        let g = Arc::new(Grid::uniform(win, 128));
        let f = GridFunction::from_fn(g, |x| (3.0 * x).sin().abs() / (0.1 + x));
        let fam = DyadicFamily::new(win, 7);
        let (b, r) = (k(f64::INFINITY), k(1.0));
        let range = auto_k_range(&f, &b, &r, &fam, 2.0).unwrap();
        let s = build_sparse(&f, &b, &r, &fam, 2.0, range).unwrap();
        let t = sparse_operator(&f, &s, &b);
        let n = s.nonempty_levels() as f64;
        for (x, v) in t.grid().midpoints().into_iter().zip(t.values()) {
            assert!(*v <= n * dyadic_maximal(&f, x, &fam, &b, &r) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn stopping_cubes_cover_the_maximal_level_set() {
        let win = Interval::new(0.0, 8.0);
        let g = Arc::new(Grid::uniform(win, 64));
        let f = GridFunction::from_fn(g.clone(), |x| 1.0 / (0.05 + (x - 3.0).abs()));
        let fam = DyadicFamily::new(win, 6);
        let (b, r) = (k(f64::INFINITY), k(1.0));
        for lambda in [2.0, 5.0, 10.0] {
            let lvl = cz_decompose(&f, &b, &r, &fam, lambda).unwrap();
            let omega = union_of(&g, &lvl.cubes);
            for i in 0..g.n_cells() {
                let x = g.midpoint(i);
                assert_eq!(omega[i], dyadic_maximal(&f, x, &fam, &b, &r) > lambda, "x = {x}");
            }
        }
    }
}
