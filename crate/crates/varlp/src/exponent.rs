//! Variable exponents stored through their reciprocals.
//!
//! An exponent `p(·)` is kept as `x ↦ 1/p(x)`, with `p = ∞` stored as `0`.
//! All exponent algebra (conjugation, sums of reciprocals) is done on
//! reciprocals, which makes the conventions involving `∞` exact.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Interval;

/// Window sampled when validating exponent relations.
pub const VALIDATION_WINDOW: f64 = 64.0;

const VALIDATION_SAMPLES: usize = 2049;
const RECIP_SLACK: f64 = 1e-12;

type RecipFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Log-Hölder constants attached to an exponent after verification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHolderConstants {
    pub c0: f64,
    pub c_infinity: f64,
    /// `1/p_∞`.
    pub recip_at_infinity: f64,
}

/// A variable exponent `p(·)`.
#[derive(Clone)]
pub struct VariableExponent {
    recip: RecipFn,
    recip_at_infinity: Option<f64>,
    constant_recip: Option<f64>,
    knots: Vec<f64>,
    extended: bool,
    label: String,
    log_holder: Option<LogHolderConstants>,
}

impl fmt::Debug for VariableExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VariableExponent")
            .field("label", &self.label)
            .field("extended", &self.extended)
            .field("knots", &self.knots)
            .finish()
    }
}

fn recip_of(p: f64) -> f64 {
    if p == f64::INFINITY {
        0.0
    } else {
        1.0 / p
    }
}

fn value_of(recip: f64) -> f64 {
    if recip == 0.0 {
        f64::INFINITY
    } else {
        1.0 / recip
    }
}

fn check_value(p: f64, extended: bool) -> Result<()> {
    let ok = if extended { p > 0.0 } else { p >= 1.0 };
    if ok && !p.is_nan() {
        Ok(())
    } else {
        Err(Error::Range(format!(
            "exponent value {p} outside {}",
            if extended { "(0, ∞]" } else { "[1, ∞]" }
        )))
    }
}

fn sorted_knots(mut k: Vec<f64>) -> Vec<f64> {
    k.retain(|x| x.is_finite());
    k.sort_by(f64::total_cmp);
    k.dedup();
    k
}

impl VariableExponent {
    /// `p ≡ value` with `value ∈ [1, ∞]`.
    pub fn constant(value: f64) -> Result<Self> {
        check_value(value, false)?;
        Ok(Self::constant_unchecked(value, false))
    }

    /// `p ≡ value` with `value ∈ (0, ∞]`, in extended mode.
    pub fn constant_extended(value: f64) -> Result<Self> {
        check_value(value, true)?;
        Ok(Self::constant_unchecked(value, true))
    }

    fn constant_unchecked(value: f64, extended: bool) -> Self {
        let r = recip_of(value);
        Self {
            recip: Arc::new(move |_| r),
            recip_at_infinity: Some(r),
            constant_recip: Some(r),
            knots: Vec::new(),
            extended,
            label: format!("const({})", fmt_exp(value)),
            log_holder: Some(LogHolderConstants {
                c0: 0.0,
                c_infinity: 0.0,
                recip_at_infinity: r,
            }),
        }
    }

    /// Builds an exponent from its reciprocal. `knots` lists points where
    /// the reciprocal may jump or bend; grids include them as breakpoints.
    /// Values are not checked here; relations are checked where used and
    /// [`VariableExponent::validate`] checks the range on samples.
    pub fn from_recip_fn(
        label: impl Into<String>,
        recip: impl Fn(f64) -> f64 + Send + Sync + 'static,
        knots: Vec<f64>,
        recip_at_infinity: Option<f64>,
    ) -> Self {
        Self {
            recip: Arc::new(recip),
            recip_at_infinity,
            constant_recip: None,
            knots: sorted_knots(knots),
            extended: false,
            label: label.into(),
            log_holder: None,
        }
    }

    /// Builds an exponent from `p(x)`; `f64::INFINITY` is allowed.
    pub fn from_fn(
        label: impl Into<String>,
        p: impl Fn(f64) -> f64 + Send + Sync + 'static,
        knots: Vec<f64>,
        p_infinity: Option<f64>,
    ) -> Result<Self> {
        let e = Self::from_recip_fn(label, move |x| recip_of(p(x)), knots, p_infinity.map(recip_of));
        e.validate()?;
        Ok(e)
    }

    /// `value` on each listed interval (first match wins), `otherwise`
    /// elsewhere.
    pub fn piecewise_constant(pieces: &[(Interval, f64)], otherwise: f64) -> Result<Self> {
        check_value(otherwise, false)?;
        for (_, v) in pieces {
            check_value(*v, false)?;
        }
        let table: Vec<(Interval, f64)> = pieces.iter().map(|(q, v)| (*q, recip_of(*v))).collect();
        let ro = recip_of(otherwise);
        let knots = pieces.iter().flat_map(|(q, _)| [q.a(), q.b()]).collect();
        let label = format!("piecewise({} pieces, else {})", pieces.len(), fmt_exp(otherwise));
        Ok(Self::from_recip_fn(
            label,
            move |x| table.iter().find(|(q, _)| q.contains(x)).map_or(ro, |(_, r)| *r),
            knots,
            Some(ro),
        ))
    }

    /// `p` linear from `left` to `right` on each listed interval (first
    /// match wins), `otherwise` elsewhere. Endpoint values must be finite.
    pub fn piecewise_affine(pieces: &[(Interval, f64, f64)], otherwise: f64) -> Result<Self> {
        check_value(otherwise, false)?;
        for (_, l, r) in pieces {
            check_value(*l, false)?;
            check_value(*r, false)?;
            if !l.is_finite() || !r.is_finite() {
                return Err(Error::Range("affine pieces need finite endpoint values".into()));
            }
        }
        let table = pieces.to_vec();
        let ro = recip_of(otherwise);
        let knots = pieces.iter().flat_map(|(q, _, _)| [q.a(), q.b()]).collect();
        let label = format!("affine({} pieces, else {})", pieces.len(), fmt_exp(otherwise));
        Ok(Self::from_recip_fn(
            label,
            move |x| {
                table.iter().find(|(q, _, _)| q.contains(x)).map_or(ro, |(q, l, r)| {
                    let t = (x - q.a()) / q.length();
                    1.0 / (l + t * (r - l))
                })
            },
            knots,
            Some(ro),
        ))
    }

    /// `base + (peak − base)·max(0, 1 − |x − center|/radius)`.
    pub fn bump(base: f64, peak: f64, center: f64, radius: f64) -> Result<Self> {
        check_value(base, false)?;
        check_value(peak, false)?;
        if !(base.is_finite() && peak.is_finite() && radius > 0.0) {
            return Err(Error::Range("bump needs finite base/peak and positive radius".into()));
        }
        Ok(Self::from_recip_fn(
            format!("bump({base} to {peak} at {center}, radius {radius})"),
            move |x| {
                let h = (1.0 - (x - center).abs() / radius).max(0.0);
                1.0 / (base + (peak - base) * h)
            },
            vec![center - radius, center, center + radius],
            Some(1.0 / base),
        ))
    }

    /// `high` on `on`, `low` elsewhere.
    pub fn jump(low: f64, high: f64, on: Interval) -> Result<Self> {
        let mut e = Self::piecewise_constant(&[(on, high)], low)?;
        e.label = format!(
            "jump({} on [{}, {}], else {})",
            fmt_exp(high),
            on.a(),
            on.b(),
            fmt_exp(low)
        );
        Ok(e)
    }

    pub fn from_spec(spec: &ExponentSpec) -> Result<Self> {
        match spec {
            ExponentSpec::Constant { value } => Self::constant(value.0),
            ExponentSpec::Piecewise { pieces, otherwise } => {
                let p: Vec<(Interval, f64)> = pieces.iter().map(|c| (c.on, c.value.0)).collect();
                Self::piecewise_constant(&p, otherwise.0)
            }
            ExponentSpec::Affine { pieces, otherwise } => {
                let p: Vec<(Interval, f64, f64)> = pieces.iter().map(|c| (c.on, c.left, c.right)).collect();
                Self::piecewise_affine(&p, otherwise.0)
            }
            ExponentSpec::Bump {
                base,
                peak,
                center,
                radius,
            } => Self::bump(*base, *peak, *center, *radius),
            ExponentSpec::Jump { low, high, on } => Self::jump(low.0, high.0, *on),
        }
    }

    /// `1/p(x)`, with `0` for `p(x) = ∞`.
    #[inline]
    pub fn recip(&self, x: f64) -> f64 {
        match self.constant_recip {
            Some(r) => r,
            None => (self.recip)(x),
        }
    }

    /// `p(x)`, possibly `f64::INFINITY`.
    pub fn value(&self, x: f64) -> f64 {
        value_of(self.recip(x))
    }

    pub fn recip_at_infinity(&self) -> Option<f64> {
        self.recip_at_infinity
    }

    pub fn p_infinity(&self) -> Option<f64> {
        self.recip_at_infinity.map(value_of)
    }

    /// The constant value when the exponent is constant.
    pub fn constant_value(&self) -> Option<f64> {
        self.constant_recip.map(value_of)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Switches to extended mode, where values in `(0, 1)` are allowed.
    pub fn extended(mut self) -> Self {
        self.extended = true;
        self
    }

    pub fn log_holder(&self) -> Option<&LogHolderConstants> {
        self.log_holder.as_ref()
    }

    /// Attaches the constants of a passing report; a failing report clears
    /// them.
    pub fn with_log_holder(mut self, report: &LogHolderReport) -> Self {
        self.log_holder = report.pass.then_some(LogHolderConstants {
            c0: report.c0,
            c_infinity: report.c_infinity,
            recip_at_infinity: report.recip_at_infinity,
        });
        self
    }

    /// `s·p(·)`; switches to extended mode when `s < 1`.
    pub fn scaled(&self, s: f64) -> Self {
        assert!(s > 0.0 && s.is_finite(), "scale must be positive");
        let inner = self.clone();
        let mut e = if let Some(r) = self.constant_recip {
            let mut c = Self::constant_unchecked(value_of(r / s), self.extended);
            c.label = format!("{s}*{}", self.label);
            c
        } else {
            Self::from_recip_fn(
                format!("{s}*{}", self.label),
                move |x| inner.recip(x) / s,
                self.knots.clone(),
                self.recip_at_infinity.map(|r| r / s),
            )
        };
        e.extended = self.extended || s < 1.0;
        e
    }

    /// Sample points: a uniform grid on the validation window, far points
    /// `±2^j`, and every knot with close neighbours on both sides.
    pub fn validation_points(&self) -> Vec<f64> {
        validation_points(&[self])
    }

    /// Checks the range invariant on [`VariableExponent::validation_points`].
    pub fn validate(&self) -> Result<()> {
        for x in self.validation_points() {
            let r = self.recip(x);
            let bad = !r.is_finite() || r < 0.0 || (!self.extended && r > 1.0 + RECIP_SLACK);
            if bad {
                return Err(Error::Range(format!(
                    "{}: value {} at x = {x}",
                    self.label,
                    value_of(r)
                )));
            }
        }
        Ok(())
    }

    /// `(p⁻, p⁺)` over samples of `domain` (uniform samples plus knots).
    pub fn bounds(&self, domain: &Interval) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for x in domain_samples(domain, &self.knots, 1025) {
            let r = self.recip(x);
            hi = hi.max(r);
            lo = lo.min(r);
        }
        (value_of(hi), value_of(lo))
    }

    /// `(p⁻, p⁺)` over the validation points, a finite surrogate for bounds
    /// over the whole line.
    pub fn global_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for x in self.validation_points() {
            let r = self.recip(x);
            hi = hi.max(r);
            lo = lo.min(r);
        }
        if let Some(r) = self.recip_at_infinity {
            hi = hi.max(r);
            lo = lo.min(r);
        }
        (value_of(hi), value_of(lo))
    }
}

fn fmt_exp(p: f64) -> String {
    if p == f64::INFINITY {
        "inf".into()
    } else {
        format!("{p}")
    }
}

/// Uniform samples of `domain` plus knots inside it.
pub(crate) fn domain_samples(domain: &Interval, knots: &[f64], n: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..n).map(|i| domain.at(i as f64 / (n - 1) as f64)).collect();
    let eps = 1e-9 * domain.length();
    for &k in knots {
        for x in [k - eps, k, k + eps] {
            if domain.contains(x) {
                xs.push(x);
            }
        }
    }
    xs
}

fn validation_points(exps: &[&VariableExponent]) -> Vec<f64> {
    let w = Interval::new(-VALIDATION_WINDOW, VALIDATION_WINDOW);
    let mut xs: Vec<f64> = (0..VALIDATION_SAMPLES)
        .map(|i| w.at(i as f64 / (VALIDATION_SAMPLES - 1) as f64))
        .collect();
    for j in 0..=30 {
        let t = 2f64.powi(j);
        xs.push(t);
        xs.push(-t);
    }
    for e in exps {
        for &k in &e.knots {
            let eps = 1e-9 * k.abs().max(1.0);
            xs.extend([k - eps, k, k + eps]);
        }
    }
    xs
}

fn merged_knots(a: &VariableExponent, b: &VariableExponent) -> Vec<f64> {
    let mut k = a.knots.clone();
    k.extend_from_slice(&b.knots);
    sorted_knots(k)
}

/// `p′` with `1/p + 1/p′ = 1`.
pub fn conjugate(p: &VariableExponent) -> VariableExponent {
    if let Some(r) = p.constant_recip {
        let mut c = VariableExponent::constant_unchecked(value_of((1.0 - r).max(0.0)), false);
        c.label = format!("conj({})", p.label);
        return c;
    }
    let inner = p.clone();
    VariableExponent::from_recip_fn(
        format!("conj({})", p.label),
        move |x| (1.0 - inner.recip(x)).max(0.0),
        p.knots.clone(),
        p.recip_at_infinity.map(|r| 1.0 - r),
    )
}

/// `r` with `1/r = 1/p + 1/q`. Values below 1 are rejected unless either
/// input is in extended mode.
pub fn combine(p: &VariableExponent, q: &VariableExponent) -> Result<VariableExponent> {
    let extended = p.extended || q.extended;
    let label = format!("combine({}, {})", p.label, q.label);
    let mut out = match (p.constant_recip, q.constant_recip) {
        (Some(a), Some(b)) => {
            let mut c = VariableExponent::constant_unchecked(value_of(a + b), extended);
            c.label = label;
            c
        }
        _ => {
            let (pp, qq) = (p.clone(), q.clone());
            VariableExponent::from_recip_fn(
                label,
                move |x| pp.recip(x) + qq.recip(x),
                merged_knots(p, q),
                p.recip_at_infinity.zip(q.recip_at_infinity).map(|(a, b)| a + b),
            )
        }
    };
    out.extended = extended;
    if !extended {
        for x in validation_points(&[p, q]) {
            let r = out.recip(x);
            if r > 1.0 + RECIP_SLACK {
                return Err(Error::Range(format!(
                    "combined exponent {} < 1 at x = {x}",
                    value_of(r)
                )));
            }
        }
    }
    Ok(out)
}

fn difference(p: &VariableExponent, q: &VariableExponent, label: String) -> VariableExponent {
    match (p.constant_recip, q.constant_recip) {
        (Some(a), Some(b)) => {
            let mut c = VariableExponent::constant_unchecked(value_of((a - b).max(0.0)), p.extended);
            c.label = label;
            c
        }
        _ => {
            let (pp, qq) = (p.clone(), q.clone());
            let mut e = VariableExponent::from_recip_fn(
                label,
                move |x| (pp.recip(x) - qq.recip(x)).max(0.0),
                merged_knots(p, q),
                p.recip_at_infinity
                    .zip(q.recip_at_infinity)
                    .map(|(a, b)| (a - b).max(0.0)),
            );
            e.extended = p.extended;
            e
        }
    }
}

fn first_violation(p: &VariableExponent, q: &VariableExponent) -> Option<f64> {
    validation_points(&[p, q])
        .into_iter()
        .find(|&x| p.recip(x) < q.recip(x) - RECIP_SLACK)
}

/// `β` with `1/β = 1/p − 1/q`; requires `p ≤ q` at every sample.
pub fn beta_from_pair(p: &VariableExponent, q: &VariableExponent) -> Result<VariableExponent> {
    if let Some(x) = first_violation(p, q) {
        return Err(Error::Range(format!(
            "p(x) = {} exceeds q(x) = {} at x = {x}",
            p.value(x),
            q.value(x)
        )));
    }
    Ok(difference(p, q, format!("beta({}, {})", p.label, q.label)))
}

/// `q` with `1/q = 1/r − 1/p`; requires `r ≤ p` at every sample.
pub fn combine_inverse(r: &VariableExponent, p: &VariableExponent) -> Result<VariableExponent> {
    if let Some(x) = first_violation(r, p) {
        return Err(Error::ExponentMismatch {
            x,
            detail: format!("r(x) = {} exceeds p(x) = {}", r.value(x), p.value(x)),
        });
    }
    Ok(difference(r, p, format!("complement({}, {})", r.label, p.label)))
}

/// `p(·)·q(·)` (reciprocals multiply).
pub fn product(p: &VariableExponent, q: &VariableExponent) -> VariableExponent {
    let label = format!("{}*{}", p.label, q.label);
    match (p.constant_recip, q.constant_recip) {
        (Some(a), Some(b)) => {
            let mut c = VariableExponent::constant_unchecked(value_of(a * b), false);
            c.label = label;
            c
        }
        _ => {
            let (pp, qq) = (p.clone(), q.clone());
            VariableExponent::from_recip_fn(
                label,
                move |x| pp.recip(x) * qq.recip(x),
                merged_knots(p, q),
                p.recip_at_infinity.zip(q.recip_at_infinity).map(|(a, b)| a * b),
            )
        }
    }
}

/// `p(·)/q(·)` (requires `q ≤ p`); extended when the result can drop
/// below 1.
pub fn quotient(p: &VariableExponent, q: &VariableExponent) -> VariableExponent {
    let label = format!("{}/{}", p.label, q.label);
    let (pp, qq) = (p.clone(), q.clone());
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let mut e = match (p.constant_recip, q.constant_recip) {
        (Some(a), Some(b)) => VariableExponent::constant_unchecked(value_of(div(a, b)), false),
        _ => VariableExponent::from_recip_fn(
            label.clone(),
            move |x| div(pp.recip(x), qq.recip(x)),
            merged_knots(p, q),
            p.recip_at_infinity.zip(q.recip_at_infinity).map(|(a, b)| div(a, b)),
        ),
    };
    e.label = label;
    e.extended = p.extended;
    e
}

/// Cells used for exponent quadrature over a cube.
const QUADRATURE_CELLS: usize = 1024;

/// `p_Q` with `1/p_Q = (1/|Q|)∫_Q 1/p`, by midpoint quadrature on a uniform
/// grid of `Q` refined at the exponent's knots.
pub fn harmonic_mean(p: &VariableExponent, q: &Interval) -> Result<f64> {
    if let Some(r) = p.constant_recip {
        return Ok(value_of(r));
    }
    let mut pts: Vec<f64> = (0..=QUADRATURE_CELLS)
        .map(|i| q.at(i as f64 / QUADRATURE_CELLS as f64))
        .collect();
    pts.extend(p.knots.iter().copied().filter(|k| q.a() < *k && *k < q.b()));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let r = p.recip(0.5 * (w[0] + w[1]));
        if !r.is_finite() {
            return Err(Error::Quadrature(format!(
                "{} is not evaluable near x = {}",
                p.label, w[0]
            )));
        }
        acc += r * (w[1] - w[0]);
    }
    Ok(value_of(acc / q.length()))
}

/// Outcome of [`verify_log_holder`]. The constants are the smallest ones
/// consistent with the sampled pairs; this is evidence, not a proof.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHolderReport {
    pub c0: f64,
    pub c_infinity: f64,
    pub recip_at_infinity: f64,
    pub pass: bool,
    /// A pair whose required local constant keeps growing at fine scales or
    /// exceeds the cap.
    pub witness: Option<[f64; 2]>,
    pub pairs_checked: usize,
    pub cap: f64,
    pub note: String,
}

/// Options for [`verify_log_holder_with`].
#[derive(Clone, Copy, Debug)]
pub struct LogHolderOptions {
    /// Constants above this count as failure.
    pub cap: f64,
    /// Finest pair distance is `2^-finest_level`.
    pub finest_level: i32,
    /// Fine-scale constants larger than `growth` times the coarse-scale
    /// constant count as failure.
    pub growth: f64,
    pub seed: u64,
}

impl Default for LogHolderOptions {
    fn default() -> Self {
        Self {
            cap: 100.0,
            finest_level: 40,
            growth: 1.5,
            seed: 0x5eed,
        }
    }
}

/// Sampled log-Hölder check with default options.
pub fn verify_log_holder(p: &VariableExponent, domain: &Interval, samples: usize) -> LogHolderReport {
    verify_log_holder_with(p, domain, samples, LogHolderOptions::default())
}

/// Measures `c0` over pairs `(x, x+h)` with `h = 2^-k < 1/2` centred on
/// uniform samples and knots of `domain` and on seeded random pairs, and
/// `c_∞` over the samples and far points `±2^j`. A local constant measured
/// at distances below `2^-(finest/2)` that exceeds `growth` times the one
/// measured above it means the modulus is not logarithmic.
pub fn verify_log_holder_with(
    p: &VariableExponent,
    domain: &Interval,
    samples: usize,
    opts: LogHolderOptions,
) -> LogHolderReport {
    let samples = samples.max(2);
    let split = opts.finest_level / 2;
    let mut centres = domain_samples(domain, &p.knots, samples);
    centres.extend(p.knots.iter().copied().filter(|k| domain.contains(*k)));

    let mut coarse = 0.0f64;
    let mut fine = 0.0f64;
    let mut fine_pair = None;
    let mut coarse_pair = None;
    let mut pairs = 0usize;
    let mut record = |x: f64, y: f64, k: i32| {
        let h = (y - x).abs();
        if !(h > 0.0 && h < 0.5) {
            return;
        }
        let c = (p.recip(x) - p.recip(y)).abs() * (-h.ln());
        pairs += 1;
        if k > split {
            if c > fine {
                fine = c;
                fine_pair = Some([x, y]);
            }
        } else if c > coarse {
            coarse = c;
            coarse_pair = Some([x, y]);
        }
    };
    for &x in &centres {
        for k in 2..=opts.finest_level {
            let h = 2f64.powi(-k);
            record(x - 0.5 * h, x + 0.5 * h, k);
            record(x, x + h, k);
            record(x - h, x, k);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..4 * samples {
        let x = domain.at(rng.gen::<f64>());
        let k = rng.gen_range(2..=opts.finest_level);
        let h = 2f64.powi(-k) * rng.gen_range(0.5..1.0);
        record(x, x + h, k);
    }

    let c0 = coarse.max(fine);
    let local_fail = (fine > opts.growth * coarse && fine > 1e-12) || c0 > opts.cap;

    let r_inf = p.recip_at_infinity.unwrap_or_else(|| p.recip(2f64.powi(40)));
    let mut c_near = 0.0f64;
    let mut c_far = 0.0f64;
    let mut far_pair = None;
    let mut far_points: Vec<f64> = centres.clone();
    for j in 0..=40 {
        let t = 2f64.powi(j);
        far_points.push(t);
        far_points.push(-t);
    }
    for &x in &far_points {
        let c = (p.recip(x) - r_inf).abs() * (std::f64::consts::E + x.abs()).ln();
        if x.abs() <= 2f64.powi(20) {
            c_near = c_near.max(c);
        } else if c > c_far {
            c_far = c;
            far_pair = Some([x, f64::INFINITY]);
        }
    }
    let c_infinity = c_near.max(c_far);
    let decay_fail = (c_far > opts.growth * c_near && c_far > 1e-12) || c_infinity > opts.cap;

    let pass = !local_fail && !decay_fail;
    let witness = if local_fail {
        fine_pair.or(coarse_pair)
    } else if decay_fail {
        far_pair
    } else {
        None
    };
    LogHolderReport {
        c0,
        c_infinity,
        recip_at_infinity: r_inf,
        pass,
        witness,
        pairs_checked: pairs,
        cap: opts.cap,
        note: "constants measured on sampled pairs; evidence, not proof".into(),
    }
}

/// An exponent value in JSON: a number, or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawValue", into = "RawValue")]
pub struct ExponentValue(pub f64);

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawValue {
    Num(f64),
    Text(String),
}

impl TryFrom<RawValue> for ExponentValue {
    type Error = String;

    fn try_from(v: RawValue) -> std::result::Result<Self, String> {
        match v {
            RawValue::Num(x) => Ok(ExponentValue(x)),
            RawValue::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "∞") => Ok(ExponentValue(f64::INFINITY)),
            RawValue::Text(s) => Err(format!("expected a number or \"inf\", got {s:?}")),
        }
    }
}

impl From<ExponentValue> for RawValue {
    fn from(v: ExponentValue) -> Self {
        if v.0 == f64::INFINITY {
            RawValue::Text("inf".into())
        } else {
            RawValue::Num(v.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantPiece {
    pub on: Interval,
    pub value: ExponentValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePiece {
    pub on: Interval,
    pub left: f64,
    pub right: f64,
}

/// JSON description of an exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExponentSpec {
    Constant {
        value: ExponentValue,
    },
    Piecewise {
        pieces: Vec<ConstantPiece>,
        otherwise: ExponentValue,
    },
    Affine {
        pieces: Vec<AffinePiece>,
        otherwise: ExponentValue,
    },
    Bump {
        base: f64,
        peak: f64,
        center: f64,
        radius: f64,
    },
    Jump {
        low: ExponentValue,
        high: ExponentValue,
        on: Interval,
    },
}

impl ExponentSpec {
    pub fn constant(p: f64) -> Self {
        ExponentSpec::Constant {
            value: ExponentValue(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_three() -> VariableExponent {
        VariableExponent::piecewise_constant(&[(Interval::new(0.0, 1.0), 2.0)], 3.0).unwrap()
    }

    #[test]
    fn conjugate_examples() {
        let c = conjugate(&VariableExponent::constant(2.0).unwrap());
        assert_eq!(c.value(0.3), 2.0);
        let c = conjugate(&VariableExponent::constant(1.0).unwrap());
        assert_eq!(c.value(0.3), f64::INFINITY);
        let c = conjugate(&VariableExponent::constant(f64::INFINITY).unwrap());
        assert_eq!(c.value(0.3), 1.0);
        let c = conjugate(&two_three());
        assert_eq!(c.value(0.5), 2.0);
        assert!((c.value(5.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn combine_examples() {
        let k = |p| VariableExponent::constant(p).unwrap();
        assert_eq!(combine(&k(2.0), &k(2.0)).unwrap().value(0.0), 1.0);
        assert_eq!(combine(&k(4.0), &k(f64::INFINITY)).unwrap().value(0.0), 4.0);
        assert!((combine(&k(3.0), &k(6.0)).unwrap().value(0.0) - 2.0).abs() < 1e-15);
        assert!(matches!(combine(&k(1.5), &k(2.0)), Err(Error::Range(_))));
        let ext = combine(&k(1.5).extended(), &k(2.0)).unwrap();
        assert!((ext.value(0.0) - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn beta_examples() {
        let k = |p| VariableExponent::constant(p).unwrap();
        assert_eq!(beta_from_pair(&k(2.0), &k(2.0)).unwrap().value(1.0), f64::INFINITY);
        assert_eq!(beta_from_pair(&k(2.0), &k(4.0)).unwrap().value(1.0), 4.0);
        let b = beta_from_pair(&two_three(), &k(6.0)).unwrap();
        assert!((b.value(0.5) - 3.0).abs() < 1e-12);
        assert!((b.value(4.0) - 6.0).abs() < 1e-12);
        assert!(matches!(beta_from_pair(&k(4.0), &k(2.0)), Err(Error::Range(_))));
        // equal variable exponents give exactly ∞
        let p = VariableExponent::bump(2.0, 3.0, 0.0, 1.0).unwrap();
        assert_eq!(beta_from_pair(&p, &p).unwrap().value(0.3), f64::INFINITY);
    }

    #[test]
    fn harmonic_mean_examples() {
        let q = Interval::new(-3.0, 5.0);
        assert_eq!(
            harmonic_mean(&VariableExponent::constant(3.0).unwrap(), &q).unwrap(),
            3.0
        );
        let halves = VariableExponent::piecewise_constant(&[(Interval::new(1.0, 5.0), 4.0)], 2.0).unwrap();
        let pq = harmonic_mean(&halves, &q).unwrap();
        assert!((pq - 8.0 / 3.0).abs() < 1e-12, "{pq}");
        let lin = VariableExponent::piecewise_affine(&[(Interval::new(0.0, 1.0), 2.0, 3.0)], 3.0).unwrap();
        let pq = harmonic_mean(&lin, &Interval::new(0.0, 1.0)).unwrap();
        let exact = 1.0 / (1.5f64).ln();
        assert!((pq - exact).abs() / exact < 1e-6, "{pq} vs {exact}");
    }

    #[test]
    fn log_holder_examples() {
        let d = Interval::new(-4.0, 4.0);
        let r = verify_log_holder(&VariableExponent::constant(2.0).unwrap(), &d, 64);
        assert!(r.pass);
        assert_eq!((r.c0, r.c_infinity), (0.0, 0.0));

        let ramp = VariableExponent::piecewise_affine(
            &[
                (Interval::new(-1.0, 0.0), 3.0, 2.0),
                (Interval::new(0.0, 1.0), 2.0, 3.0),
            ],
            3.0,
        )
        .unwrap();
        let r = verify_log_holder(&ramp, &d, 64);
        assert!(r.pass, "{r:?}");
        assert!(r.c0 > 0.0 && r.c0.is_finite());
        assert!(r.c_infinity > 0.0 && r.c_infinity.is_finite());

        let jump = VariableExponent::jump(2.0, 3.0, Interval::new(0.0, 1.0)).unwrap();
        let r = verify_log_holder(&jump, &d, 64);
        assert!(!r.pass);
        let [x, y] = r.witness.unwrap();
        let straddles = |k: f64| x.min(y) <= k && k <= x.max(y);
        assert!(straddles(0.0) || straddles(1.0), "{x} {y}");
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"kind":"piecewise","pieces":[{"on":[0,1],"value":2}],"otherwise":"inf"}"#;
        let spec: ExponentSpec = serde_json::from_str(text).unwrap();
        let p = VariableExponent::from_spec(&spec).unwrap();
        assert_eq!(p.value(0.5), 2.0);
        assert_eq!(p.value(2.0), f64::INFINITY);
        let back: ExponentSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<ExponentSpec>(r#"{"kind":"constant","value":"two"}"#).is_err());
        assert!(serde_json::from_str::<ExponentSpec>(r#"{"kind":"constant","value":2,"x":1}"#).is_err());
        let bad = ExponentSpec::constant(0.5);
        assert!(VariableExponent::from_spec(&bad).is_err());
    }

    #[test]
    fn scaled_and_quotient() {
        let p = VariableExponent::constant(2.0).unwrap();
        let h = p.scaled(0.25);
        assert!(h.is_extended());
        assert_eq!(h.value(0.0), 0.5);
        let b = VariableExponent::bump(2.0, 4.0, 0.0, 1.0).unwrap();
        let q = quotient(&b, &VariableExponent::constant(2.0).unwrap());
        assert!((q.value(0.0) - 2.0).abs() < 1e-12);
        assert!((q.value(3.0) - 1.0).abs() < 1e-12);
    }
}
