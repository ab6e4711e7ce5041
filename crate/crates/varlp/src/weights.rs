//! Weights and cube-wise tests for the classes `A_p`, `𝒜_{p(·)}` and
//! `𝔸_{p(·),r(·)}`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{combine_inverse, conjugate, VariableExponent};
use crate::grid::{Grid, GridFunction, Interval};
use crate::luxemburg::{norm_segments, CubePieces, NormOptions};

/// A strictly positive piecewise-constant weight.
#[derive(Clone, Debug)]
pub struct Weight {
    f: GridFunction,
    singular: Vec<f64>,
    label: String,
}

impl Weight {
    /// Every cell value must be positive and finite.
    pub fn new(f: GridFunction, singular: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if let Some(i) = f.values().iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Range(format!(
                "weight value {} on cell {i} is not positive",
                f.values()[i]
            )));
        }
        Ok(Self {
            f,
            singular,
            label: label.into(),
        })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Result<Self> {
        Self::new(GridFunction::from_fn(grid, |_| c), Vec::new(), format!("{c}"))
    }

    /// `|x − center|^delta` sampled at cell midpoints. The grid should be
    /// graded at `center` (see [`power_grid`]).
    pub fn power(grid: Arc<Grid>, center: f64, delta: f64) -> Result<Self> {
        let f = GridFunction::from_fn(grid, |x| (x - center).abs().powf(delta));
        let label = if center == 0.0 {
            format!("|x|^{delta}")
        } else {
            format!("|x-{center}|^{delta}")
        };
        Self::new(f, vec![center], label)
    }

    pub fn function(&self) -> &GridFunction {
        &self.f
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.f.grid()
    }

    pub fn singular_points(&self) -> &[f64] {
        &self.singular
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.f.value_at(x)
    }

    /// `ω^s`.
    pub fn pow(&self, s: f64) -> Weight {
        Weight {
            f: self.f.map(|v| v.powf(s)),
            singular: self.singular.clone(),
            label: format!("({})^{s}", self.label),
        }
    }

    pub fn inverse(&self) -> Weight {
        Weight {
            f: self.f.map(|v| 1.0 / v),
            singular: self.singular.clone(),
            label: format!("({})^-1", self.label),
        }
    }
}

/// A grid on `window` with 64 uniform cells, the given breakpoints and
/// default graded refinement at `center`.
pub fn power_grid(window: Interval, center: f64, breakpoints: &[f64]) -> Grid {
    Grid::builder(window)
        .uniform_cells(64)
        .breakpoints(breakpoints.iter().copied())
        .graded(center)
        .build()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Diverging,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerdictOptions {
    pub slope_tol: f64,
    pub min_scales: usize,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        Self {
            slope_tol: 0.05,
            min_scales: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeRatio {
    pub cube: Interval,
    pub ratio: f64,
}

/// Cube-wise ratios with a scale-trend verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTestReport {
    pub class: String,
    pub weight: String,
    pub family: String,
    pub ratios: Vec<CubeRatio>,
    pub max_ratio: f64,
    /// Slope of the log of the largest ratio at each scale against log
    /// `|Q|`, over cubes containing a singular point of the weight (all
    /// cubes when there is none).
    pub slope: Option<f64>,
    pub scales: usize,
    pub verdict: Verdict,
}

impl ClassTestReport {
    pub fn classify(class: impl Into<String>, weight: &Weight, ratios: Vec<CubeRatio>, opts: &VerdictOptions) -> Self {
        let sing = weight.singular_points();
        let touching: Vec<&CubeRatio> = ratios
            .iter()
            .filter(|c| sing.iter().any(|s| c.cube.contains(*s)))
            .collect();
        let sel: Vec<&CubeRatio> = if sing.is_empty() || touching.is_empty() {
            ratios.iter().collect()
        } else {
            touching
        };
        let mut by_scale: Vec<(f64, f64)> = Vec::new();
        for c in sel {
            let l = c.cube.length();
            match by_scale.iter_mut().find(|(s, _)| (s / l - 1.0).abs() < 1e-9) {
                Some(e) => e.1 = e.1.max(c.ratio),
                None => by_scale.push((l, c.ratio)),
            }
        }
        let xs: Vec<f64> = by_scale.iter().map(|e| e.0).collect();
        let ys: Vec<f64> = by_scale.iter().map(|e| e.1).collect();
        let slope = crate::stats::log_log_slope(&xs, &ys);
        let max_ratio = crate::stats::max_or_inf(ratios.iter().map(|c| c.ratio));
        let scales = by_scale.len();
        let verdict = if !max_ratio.is_finite() {
            Verdict::Diverging
        } else if scales < opts.min_scales {
            Verdict::Inconclusive
        } else {
            match slope {
                Some(s) if s.abs() <= opts.slope_tol => Verdict::Bounded,
                Some(_) => Verdict::Diverging,
                None => Verdict::Inconclusive,
            }
        };
        Self {
            class: class.into(),
            weight: weight.label().to_string(),
            family: format!("{} cubes", ratios.len()),
            ratios,
            max_ratio,
            slope,
            scales,
            verdict,
        }
    }

    pub fn with_family_label(mut self, label: impl Into<String>) -> Self {
        self.family = label.into();
        self
    }

    /// Rows `a,b,ratio`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["a", "b", "ratio"])?;
        for c in &self.ratios {
            wr.write_record([c.cube.a().to_string(), c.cube.b().to_string(), c.ratio.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn cube_average(f: &GridFunction, q: &Interval) -> f64 {
    let w = f.grid().window();
    let len = q.overlap(&w);
    if len == 0.0 {
        0.0
    } else {
        f.integrate(q) / len
    }
}

/// `(avg_Q ω)(avg_Q ω^{−1/(p−1)})^{p−1}` for constant `p > 1`.
pub fn test_ap_classical(omega: &Weight, p: f64, cubes: &[Interval]) -> ClassTestReport {
    assert!(p > 1.0, "classical A_p needs p > 1");
    let dual = omega.pow(-1.0 / (p - 1.0));
    let ratios = cubes
        .par_iter()
        .map(|q| CubeRatio {
            cube: *q,
            ratio: cube_average(omega.function(), q) * cube_average(dual.function(), q).powf(p - 1.0),
        })
        .collect();
    ClassTestReport::classify(format!("A_{p}"), omega, ratios, &VerdictOptions::default())
}

fn norm_with(pieces: &CubePieces, f: &GridFunction, p: &VariableExponent) -> f64 {
    norm_segments(&pieces.function_segments(f, p), &NormOptions::default()).value
}

fn knots(list: &[&VariableExponent]) -> Vec<f64> {
    list.iter().flat_map(|e| e.knots().iter().copied()).collect()
}

/// `‖ωχ_Q‖_{p(·)}‖ω^{−1}χ_Q‖_{p′(·)}/|Q|`.
pub fn test_ap_variable(omega: &Weight, p: &VariableExponent, cubes: &[Interval]) -> ClassTestReport {
    let pc = conjugate(p);
    let inv = omega.inverse();
    let kn = knots(&[p]);
    let ratios = cubes
        .par_iter()
        .map(|q| {
            let pieces = CubePieces::new(omega.grid(), q, &kn);
            let a = norm_with(&pieces, omega.function(), p);
            let b = norm_with(&pieces, inv.function(), &pc);
            CubeRatio {
                cube: *q,
                ratio: a * b / q.length(),
            }
        })
        .collect();
    ClassTestReport::classify(
        format!("A_{{{}}}", p.label()),
        omega,
        ratios,
        &VerdictOptions::default(),
    )
}

/// `‖χ_Qω‖_{p(·)}‖χ_Qω^{−1}‖_{q(·)}/‖χ_Q‖_{r(·)}` with `1/r = 1/p + 1/q`.
pub fn test_apr(
    omega: &Weight,
    p: &VariableExponent,
    r: &VariableExponent,
    cubes: &[Interval],
) -> Result<ClassTestReport> {
    let q = combine_inverse(r, p)?;
    let inv = omega.inverse();
    let kn = knots(&[p, r]);
    let ratios = cubes
        .par_iter()
        .map(|cube| {
            let pieces = CubePieces::new(omega.grid(), cube, &kn);
            let a = norm_with(&pieces, omega.function(), p);
            let b = norm_with(&pieces, inv.function(), &q);
            let c = norm_segments(&pieces.indicator_segments(r), &NormOptions::default()).value;
            CubeRatio {
                cube: *cube,
                ratio: a * b / c,
            }
        })
        .collect();
    Ok(ClassTestReport::classify(
        format!("AA_{{{}, {}}}", p.label(), r.label()),
        omega,
        ratios,
        &VerdictOptions::default(),
    ))
}

/// Scan of `ω^{1/s} ∈ 𝒜_{s·p(·)}` for `s` slightly below 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpennessReport {
    pub base_max_ratio: f64,
    /// `(s, verdict, max ratio)` in scan order.
    pub scans: Vec<(f64, Verdict, f64)>,
    pub smallest_passing: Option<f64>,
}

/// The scanned values of `s`.
pub const OPENNESS_SCAN: [f64; 4] = [0.99, 0.97, 0.95, 0.9];

/// Requires `ω ∈ 𝒜_{p(·)}` (bounded verdict) on the family first.
pub fn openness_probe(omega: &Weight, p: &VariableExponent, cubes: &[Interval]) -> Result<OpennessReport> {
    let base = test_ap_variable(omega, p, cubes);
    if base.verdict != Verdict::Bounded {
        return Err(Error::Precondition(format!(
            "weight {} is not in the class for {} (verdict {:?})",
            omega.label(),
            p.label(),
            base.verdict
        )));
    }
    let mut scans = Vec::new();
    let mut smallest = None;
    for s in OPENNESS_SCAN {
        let rep = test_ap_variable(&omega.pow(1.0 / s), &p.scaled(s), cubes);
        if rep.verdict == Verdict::Bounded {
            smallest = Some(s);
        }
        scans.push((s, rep.verdict, rep.max_ratio));
    }
    Ok(OpennessReport {
        base_max_ratio: base.max_ratio,
        scans,
        smallest_passing: smallest,
    })
}

/// Outcome of checking that membership in `𝔸_{p,r}` forces `ω ∈ 𝒜_p` and
/// `ω^{−1} ∈ 𝒜_q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplicationReport {
    pub apr: Verdict,
    pub ap: Verdict,
    pub aq_inverse: Verdict,
    pub antecedent: bool,
    pub holds: bool,
}

pub fn test_apr_implies_ap(
    omega: &Weight,
    p: &VariableExponent,
    r: &VariableExponent,
    cubes: &[Interval],
) -> Result<ImplicationReport> {
    let q = combine_inverse(r, p)?;
    let apr = test_apr(omega, p, r, cubes)?.verdict;
    let ap = test_ap_variable(omega, p, cubes).verdict;
    let aq = test_ap_variable(&omega.inverse(), &q, cubes).verdict;
    let antecedent = apr == Verdict::Bounded;
    Ok(ImplicationReport {
        apr,
        ap,
        aq_inverse: aq,
        antecedent,
        holds: !antecedent || (ap == Verdict::Bounded && aq == Verdict::Bounded),
    })
}
