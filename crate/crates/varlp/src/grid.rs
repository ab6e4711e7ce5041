//! One-dimensional cubes, graded grids, piecewise-constant functions and
//! dyadic families.

use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor width used by graded refinement, relative to the window length.
pub const DEFAULT_FLOOR_EXPONENT: i32 = 40;

/// Cells per geometric shell in graded refinement.
pub const DEFAULT_SUBDIVISION: usize = 4;

/// A closed interval `[a, b]` with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    /// Panics unless `a < b` and both are finite. Use [`Interval::try_new`]
    /// for untrusted input.
    pub fn new(a: f64, b: f64) -> Self {
        Self::try_new(a, b).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_new(a: f64, b: f64) -> Result<Self> {
        if a.is_finite() && b.is_finite() && a < b {
            Ok(Self { a, b })
        } else {
            Err(Error::Range(format!("invalid interval [{a}, {b}]")))
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a <= x && x <= self.b
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.a <= other.a && other.b <= self.b
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let a = self.a.max(other.a);
        let b = self.b.min(other.b);
        (a < b).then_some(Interval { a, b })
    }

    /// Length of the intersection.
    pub fn overlap(&self, other: &Interval) -> f64 {
        (self.b.min(other.b) - self.a.max(other.a)).max(0.0)
    }

    /// Concentric interval with `m` times the length.
    pub fn dilate(&self, m: f64) -> Interval {
        let c = self.center();
        let h = 0.5 * m * self.length();
        Interval::new(c - h, c + h)
    }

    pub fn shift(&self, d: f64) -> Interval {
        Interval::new(self.a + d, self.b + d)
    }

    /// Point at relative position `t` (0 is `a`, 1 is `b`).
    pub fn at(&self, t: f64) -> f64 {
        self.a + t * (self.b - self.a)
    }

    /// Hull of two intervals.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.a.min(other.a), self.b.max(other.b))
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::try_new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(q: Interval) -> Self {
        [q.a, q.b]
    }
}

/// Strictly increasing breakpoints; cell `i` is `[x_i, x_{i+1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    breakpoints: Vec<f64>,
}

impl Grid {
    /// Sorts and deduplicates the points. At least two distinct finite
    /// points are required.
    pub fn from_breakpoints(mut points: Vec<f64>) -> Result<Self> {
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::Range("non-finite breakpoint".into()));
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        if points.len() < 2 {
            return Err(Error::Range("a grid needs two distinct breakpoints".into()));
        }
        Ok(Self { breakpoints: points })
    }

    pub fn uniform(window: Interval, cells: usize) -> Self {
        GridBuilder::new(window).uniform_cells(cells).build()
    }

    pub fn builder(window: Interval) -> GridBuilder {
        GridBuilder::new(window)
    }

    pub fn window(&self) -> Interval {
        Interval::new(self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn n_cells(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn cell(&self, i: usize) -> Interval {
        Interval {
            a: self.breakpoints[i],
            b: self.breakpoints[i + 1],
        }
    }

    pub fn width(&self, i: usize) -> f64 {
        self.breakpoints[i + 1] - self.breakpoints[i]
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.breakpoints[i] + self.breakpoints[i + 1])
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n_cells()).map(|i| self.midpoint(i)).collect()
    }

    pub fn cells(&self) -> impl Iterator<Item = Interval> + '_ {
        self.breakpoints.windows(2).map(|w| Interval { a: w[0], b: w[1] })
    }

    /// Cell containing `x`. A breakpoint belongs to the cell on its right,
    /// except the right end of the window.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let n = self.n_cells();
        if !(self.breakpoints[0] <= x && x <= self.breakpoints[n]) {
            return None;
        }
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        Some(idx.saturating_sub(1).min(n - 1))
    }

    /// Indices of cells that overlap `q` with positive length.
    pub fn cells_overlapping(&self, q: &Interval) -> std::ops::Range<usize> {
        let n = self.n_cells();
        let lo = self.breakpoints.partition_point(|&b| b <= q.a).saturating_sub(1);
        let hi = self.breakpoints.partition_point(|&b| b < q.b).min(n);
        let lo = lo.min(hi);
        // skip a leading cell that only touches q at its right end
        let lo = if lo < hi && self.breakpoints[lo + 1] <= q.a {
            lo + 1
        } else {
            lo
        };
        lo..hi
    }

    /// Union of the breakpoints of both grids.
    pub fn merge(&self, other: &Grid) -> Grid {
        let mut pts = self.breakpoints.clone();
        pts.extend_from_slice(&other.breakpoints);
        Grid::from_breakpoints(pts).expect("merge of valid grids")
    }

    /// Grid with extra breakpoints inserted (points outside the window are
    /// ignored).
    pub fn refine_with(&self, points: &[f64]) -> Grid {
        let w = self.window();
        let mut pts = self.breakpoints.clone();
        pts.extend(points.iter().copied().filter(|x| w.a < *x && *x < w.b));
        Grid::from_breakpoints(pts).expect("refinement of a valid grid")
    }

    /// True when every endpoint of `q` inside the window is a breakpoint.
    pub fn is_aligned_to(&self, q: &Interval) -> bool {
        let w = self.window();
        [q.a, q.b]
            .iter()
            .all(|&x| !(w.a < x && x < w.b) || self.breakpoints.binary_search_by(|b| b.total_cmp(&x)).is_ok())
    }
}

#[derive(Clone, Debug)]
struct Refinement {
    point: f64,
    radius: f64,
    floor: f64,
    subdivision: usize,
}

/// Builder for grids with uniform background cells, explicit breakpoints and
/// graded refinement zones.
#[derive(Clone, Debug)]
pub struct GridBuilder {
    window: Interval,
    uniform_cells: usize,
    points: Vec<f64>,
    zones: Vec<Refinement>,
}

impl GridBuilder {
    pub fn new(window: Interval) -> Self {
        Self {
            window,
            uniform_cells: 1,
            points: Vec::new(),
            zones: Vec::new(),
        }
    }

    pub fn uniform_cells(mut self, n: usize) -> Self {
        self.uniform_cells = n.max(1);
        self
    }

    pub fn breakpoint(mut self, x: f64) -> Self {
        self.points.push(x);
        self
    }

    pub fn breakpoints<I: IntoIterator<Item = f64>>(mut self, xs: I) -> Self {
        self.points.extend(xs);
        self
    }

    /// Geometric refinement around `point` using the default floor
    /// (2^-40 of the window length) and a radius of a quarter window.
    pub fn graded(self, point: f64) -> Self {
        let len = self.window.length();
        let floor = len * (-(DEFAULT_FLOOR_EXPONENT as f64)).exp2();
        self.graded_with(point, 0.25 * len, floor, DEFAULT_SUBDIVISION)
    }

    /// Shells `[radius·2^-(j+1), radius·2^-j]` on both sides of `point`, each
    /// split into `subdivision` equal cells, down to the first shell whose
    /// outer radius is below `2·floor`. The innermost cell touching `point`
    /// has width between `floor` and `2·floor`.
    pub fn graded_with(mut self, point: f64, radius: f64, floor: f64, subdivision: usize) -> Self {
        assert!(
            radius > 0.0 && floor > 0.0,
            "graded refinement needs positive radius and floor"
        );
        self.zones.push(Refinement {
            point,
            radius,
            floor,
            subdivision: subdivision.max(1),
        });
        self
    }

    pub fn build(self) -> Grid {
        let w = self.window;
        let n = self.uniform_cells;
        let mut pts: Vec<f64> = (0..=n).map(|i| w.at(i as f64 / n as f64)).collect();
        pts[n] = w.b;
        pts.extend(self.points.iter().copied());
        for z in &self.zones {
            pts.push(z.point);
            let mut outer = z.radius;
            loop {
                let inner = 0.5 * outer;
                pts.push(z.point - outer);
                pts.push(z.point + outer);
                if inner < z.floor {
                    break;
                }
                for i in 1..z.subdivision {
                    let r = inner * (1.0 + i as f64 / z.subdivision as f64);
                    pts.push(z.point - r);
                    pts.push(z.point + r);
                }
                outer = inner;
            }
        }
        pts.retain(|x| w.a <= *x && *x <= w.b);
        Grid::from_breakpoints(pts).expect("window endpoints are always present")
    }
}

/// A piecewise-constant function on a grid, zero outside the window.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::Range(format!(
                "{} values for {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range("non-finite function value".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at cell midpoints.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_cells()).map(|i| f(grid.midpoint(i))).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Cell averages of `χ_Q`; exactly 0/1 on grids aligned to `q`.
    pub fn indicator(grid: Arc<Grid>, q: &Interval) -> Self {
        let values = grid.cells().map(|c| c.overlap(q) / c.length()).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.grid.locate(x).map_or(0.0, |i| self.values[i])
    }

    /// Exact integral over `q ∩ window`, partial cells weighted by overlap.
    pub fn integrate(&self, q: &Interval) -> f64 {
        self.grid
            .cells_overlapping(q)
            .map(|i| self.values[i] * self.grid.cell(i).overlap(q))
            .sum()
    }

    pub fn integral(&self) -> f64 {
        (0..self.values.len())
            .map(|i| self.values[i] * self.grid.width(i))
            .sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `|f|^s`.
    pub fn abs_pow(&self, s: f64) -> Self {
        self.map(|v| if v == 0.0 { 0.0 } else { v.abs().powf(s) })
    }

    /// Pointwise combination; functions on different grids are first
    /// resampled onto the merged grid.
    pub fn zip_with(&self, other: &GridFunction, op: impl Fn(f64, f64) -> f64) -> Self {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid {
            let values = self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect();
            return Self {
                grid: self.grid.clone(),
                values,
            };
        }
        let merged = Arc::new(self.grid.merge(&other.grid));
        let a = self.resample(&merged);
        let b = other.resample(&merged);
        a.zip_with(&b, op)
    }

    pub fn mul(&self, other: &GridFunction) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    /// Cell averages on another grid; exact when `target` refines this grid.
    pub fn resample(&self, target: &Arc<Grid>) -> Self {
        let values = target.cells().map(|c| self.integrate(&c) / c.length()).collect();
        Self {
            grid: target.clone(),
            values,
        }
    }

    /// Hull of the cells where the function is nonzero.
    pub fn support(&self) -> Option<Interval> {
        let first = self.values.iter().position(|&v| v != 0.0)?;
        let last = self.values.iter().rposition(|&v| v != 0.0)?;
        Some(Interval::new(
            self.grid.breakpoints[first],
            self.grid.breakpoints[last + 1],
        ))
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `breakpoint,value` rows; the final row carries the right end of
    /// the window with the outside value 0.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["breakpoint", "value"])?;
        let bp = self.grid.breakpoints();
        for (i, v) in self.values.iter().enumerate() {
            wr.write_record([bp[i].to_string(), v.to_string()])?;
        }
        wr.write_record([bp[bp.len() - 1].to_string(), "0".to_string()])?;
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let parse = |field: usize| -> Result<f64> {
                rec.get(field)
                    .ok_or_else(|| Error::Parse {
                        location: format!("row {}", line + 2),
                        message: format!("missing field {field}"),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        location: format!("row {}, field {field}", line + 2),
                        message: e.to_string(),
                    })
            };
            bps.push(parse(0)?);
            vals.push(parse(1)?);
        }
        if bps.len() < 2 || bps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse {
                location: "breakpoint column".into(),
                message: "breakpoints must be strictly increasing with at least two rows".into(),
            });
        }
        vals.pop();
        GridFunction::new(Arc::new(Grid { breakpoints: bps }), vals)
    }
}

/// Halves of an interval.
pub fn dyadic_children(q: &Interval) -> (Interval, Interval) {
    let m = q.center();
    (Interval::new(q.a, m), Interval::new(m, q.b))
}

/// Ancestors of `q` in `family`, nearest first, up to the root.
pub fn dyadic_ancestors(q: &Interval, family: &DyadicFamily) -> Result<Vec<Interval>> {
    family.ancestors(q)
}

/// The dyadic subintervals of `root` down to `max_depth`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicFamily {
    root: Interval,
    max_depth: u32,
}

impl DyadicFamily {
    pub fn new(root: Interval, max_depth: u32) -> Self {
        assert!(max_depth < 62, "depth too large");
        Self { root, max_depth }
    }

    pub fn root(&self) -> Interval {
        self.root
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Number of cubes in the family.
    pub fn len(&self) -> u64 {
        (1u64 << (self.max_depth + 1)) - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cube(&self, depth: u32, index: u64) -> Interval {
        let n = (1u64 << depth) as f64;
        let a = self.root.at(index as f64 / n);
        let b = if index + 1 == 1u64 << depth {
            self.root.b
        } else {
            self.root.at((index + 1) as f64 / n)
        };
        Interval::new(a, b)
    }

    pub fn cubes_at(&self, depth: u32) -> Vec<Interval> {
        (0..1u64 << depth).map(|i| self.cube(depth, i)).collect()
    }

    /// All cubes, coarsest first.
    pub fn all_cubes(&self) -> Vec<Interval> {
        (0..=self.max_depth).flat_map(|d| self.cubes_at(d)).collect()
    }

    /// Depth and index of `q`, or `NotInFamily`.
    pub fn locate(&self, q: &Interval) -> Result<(u32, u64)> {
        let ratio = self.root.length() / q.length();
        let depth = ratio.log2().round();
        if !(0.0..=self.max_depth as f64).contains(&depth) {
            return Err(Error::NotInFamily(*q));
        }
        let depth = depth as u32;
        let len = self.root.length() / (1u64 << depth) as f64;
        let idx = ((q.a - self.root.a) / len).round();
        if idx < 0.0 || idx >= (1u64 << depth) as f64 {
            return Err(Error::NotInFamily(*q));
        }
        let cand = self.cube(depth, idx as u64);
        let tol = 1e-12 * self.root.length();
        if (cand.a - q.a).abs() > tol || (cand.b - q.b).abs() > tol {
            return Err(Error::NotInFamily(*q));
        }
        Ok((depth, idx as u64))
    }

    pub fn contains_cube(&self, q: &Interval) -> bool {
        self.locate(q).is_ok()
    }

    pub fn children(&self, q: &Interval) -> Result<(Interval, Interval)> {
        let (d, i) = self.locate(q)?;
        if d == self.max_depth {
            return Err(Error::NotInFamily(dyadic_children(q).0));
        }
        Ok((self.cube(d + 1, 2 * i), self.cube(d + 1, 2 * i + 1)))
    }

    pub fn parent(&self, q: &Interval) -> Result<Option<Interval>> {
        let (d, i) = self.locate(q)?;
        Ok((d > 0).then(|| self.cube(d - 1, i / 2)))
    }

    pub fn ancestors(&self, q: &Interval) -> Result<Vec<Interval>> {
        let (d, i) = self.locate(q)?;
        Ok((0..d).rev().map(|k| self.cube(k, i >> (d - k))).collect())
    }

    /// Endpoints of the finest cubes.
    pub fn breakpoints(&self) -> Vec<f64> {
        let n = 1u64 << self.max_depth;
        (0..=n)
            .map(|i| {
                if i == n {
                    self.root.b
                } else {
                    self.root.at(i as f64 / n as f64)
                }
            })
            .collect()
    }
}

/// Dyadic subintervals of `window` at every depth in `depths`, plus copies
/// shifted by `k/(shifts+1)` of their length for `k = 1..=shifts`, clipped
/// to the window. Shifted copies that clip to nothing are dropped.
pub fn test_cubes(window: Interval, depths: RangeInclusive<u32>, shifts: u32) -> Vec<Interval> {
    let fam = DyadicFamily::new(window, *depths.end());
    let mut out = Vec::new();
    for d in depths.clone() {
        out.extend(fam.cubes_at(d));
    }
    if shifts > 0 {
        for d in depths {
            for q in fam.cubes_at(d) {
                for k in 1..=shifts {
                    let s = q.length() * k as f64 / (shifts + 1) as f64;
                    if let Some(c) = q.shift(s).intersect(&window) {
                        if c != q {
                            out.push(c);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Dyadic subintervals of `root` refined only where they meet `support`
/// and still contain more than one cell of `grid`, plus shifted copies as in
/// [`test_cubes`]. This keeps sweeps cheap on strongly graded grids while
/// retaining every cube on which an average of a function supported in
/// `support` can change.
pub fn adapted_cubes(root: Interval, grid: &Grid, support: &Interval, shifts: u32) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(q) = stack.pop() {
        out.push(q);
        let meets = q.overlap(support) > 0.0;
        let cells = grid.cells_overlapping(&q);
        // below the narrowest cell it meets, a cube cannot see anything new
        let narrowest = cells.clone().map(|i| grid.width(i)).fold(f64::INFINITY, f64::min);
        if meets && cells.len() > 1 && q.length() >= narrowest {
            let (l, r) = dyadic_children(&q);
            if l.length() > 0.0 && r.length() > 0.0 {
                stack.push(r);
                stack.push(l);
            }
        }
    }
    if shifts > 0 {
        let base = out.len();
        for j in 0..base {
            let q = out[j];
            for k in 1..=shifts {
                let s = q.length() * k as f64 / (shifts + 1) as f64;
                if let Some(c) = q.shift(s).intersect(&root) {
                    if c != q {
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}
