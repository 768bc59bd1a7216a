//! Concave spectral surrogates for the rank function.
//!
//! Every penalty `rho` here maps `[0, inf)` to `[0, inf)`, is concave and
//! nondecreasing, satisfies `rho(0) = 0`, and has a finite largest slope
//! `kappa = sup d rho(0)`. Applied to the eigenvalues of the factor Gram
//! matrix, `sum_i rho(lambda_i)` replaces the rank.
//!
//! The conjugate pair `(q, g)` is exposed for analysis and testing: `q`
//! inverts the supergradient map and `g(w) = int_w^kappa q(t) dt` is the
//! convex function for which `<X, W> + G(W)` reproduces the spectral penalty
//! at its minimizing `W`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A concave, nondecreasing penalty on `[0, inf)` with `value(0) = 0`.
///
/// `slope` must return the right derivative, which is a valid supergradient
/// at every point and picks the lower end of the interval at kinks.
pub trait ConcavePenalty {
    fn value(&self, x: f64) -> f64;
    fn slope(&self, x: f64) -> f64;
    fn kappa(&self) -> f64;

    /// Infimum of the slope over `[0, inf)`.
    fn min_slope(&self) -> f64 {
        0.0
    }

    /// Closed-form `q(t)` for `min_slope < t < kappa`, if one exists.
    fn inverse_slope(&self, _t: f64) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    Nuclear,
    TraceInverse,
    CappedL1,
    LogDet,
    SchattenP,
    Scad,
    Laplace,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 7] = [
        RegularizerKind::Nuclear,
        RegularizerKind::TraceInverse,
        RegularizerKind::CappedL1,
        RegularizerKind::LogDet,
        RegularizerKind::SchattenP,
        RegularizerKind::Scad,
        RegularizerKind::Laplace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegularizerKind::Nuclear => "nuclear",
            RegularizerKind::TraceInverse => "trace_inverse",
            RegularizerKind::CappedL1 => "capped_l1",
            RegularizerKind::LogDet => "log_det",
            RegularizerKind::SchattenP => "schatten_p",
            RegularizerKind::Scad => "scad",
            RegularizerKind::Laplace => "laplace",
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        RegularizerKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                Error::InvalidSpec(format!(
                    "unknown regularizer {s:?} (expected one of nuclear, trace_inverse, \
                     capped_l1, log_det, schatten_p, scad, laplace)"
                ))
            })
    }
}

/// A validated regularizer choice with its parameters.
///
/// `alpha` is only read by SCAD and `p` only by Schatten-p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    kind: RegularizerKind,
    gamma: f64,
    alpha: f64,
    p: f64,
}

impl RegularizerSpec {
    pub const DEFAULT_SCAD_ALPHA: f64 = 3.7;
    pub const DEFAULT_SCHATTEN_P: f64 = 0.5;

    pub fn new(kind: RegularizerKind, gamma: f64, alpha: f64, p: f64) -> Result<Self> {
        let spec = RegularizerSpec {
            kind,
            gamma,
            alpha,
            p,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn nuclear() -> Self {
        RegularizerSpec {
            kind: RegularizerKind::Nuclear,
            gamma: 1.0,
            alpha: Self::DEFAULT_SCAD_ALPHA,
            p: Self::DEFAULT_SCHATTEN_P,
        }
    }

    /// Spec for `kind` with scale `gamma` and default `alpha`, `p`.
    pub fn with_kind(kind: RegularizerKind, gamma: f64) -> Result<Self> {
        Self::new(kind, gamma, Self::DEFAULT_SCAD_ALPHA, Self::DEFAULT_SCHATTEN_P)
    }

    pub fn trace_inverse(gamma: f64) -> Result<Self> {
        Self::with_kind(RegularizerKind::TraceInverse, gamma)
    }

    pub fn capped_l1(gamma: f64) -> Result<Self> {
        Self::with_kind(RegularizerKind::CappedL1, gamma)
    }

    pub fn log_det(gamma: f64) -> Result<Self> {
        Self::with_kind(RegularizerKind::LogDet, gamma)
    }

    pub fn schatten_p(gamma: f64, p: f64) -> Result<Self> {
        Self::new(RegularizerKind::SchattenP, gamma, Self::DEFAULT_SCAD_ALPHA, p)
    }

    pub fn scad(gamma: f64, alpha: f64) -> Result<Self> {
        Self::new(RegularizerKind::Scad, gamma, alpha, Self::DEFAULT_SCHATTEN_P)
    }

    pub fn laplace(gamma: f64) -> Result<Self> {
        Self::with_kind(RegularizerKind::Laplace, gamma)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if self.kind == RegularizerKind::Scad && !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(Error::InvalidSpec(format!(
                "scad requires alpha > 1, got {}",
                self.alpha
            )));
        }
        if self.kind == RegularizerKind::SchattenP && !(self.p > 0.0 && self.p <= 2.0) {
            return Err(Error::InvalidSpec(format!(
                "schatten_p requires 0 < p <= 2, got {}",
                self.p
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Same regularizer with a different scale; used by the gamma schedule.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.kind, gamma, self.alpha, self.p)
    }

    pub fn is_differentiable(&self) -> bool {
        self.kind != RegularizerKind::CappedL1
    }

    /// Strictly concave on all of `[0, inf)`.
    pub fn is_strictly_concave(&self) -> bool {
        match self.kind {
            RegularizerKind::TraceInverse | RegularizerKind::LogDet | RegularizerKind::Laplace => {
                true
            }
            RegularizerKind::SchattenP => self.p < 2.0,
            RegularizerKind::Nuclear | RegularizerKind::CappedL1 | RegularizerKind::Scad => false,
        }
    }

    pub fn rho(&self, x: f64) -> Result<f64> {
        check_nonnegative(x)?;
        Ok(self.value(x))
    }

    pub fn rho_prime(&self, x: f64) -> Result<f64> {
        check_nonnegative(x)?;
        Ok(self.slope(x))
    }
}

fn check_nonnegative(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("regularizer argument must be >= 0, got {x}")))
    }
}

impl ConcavePenalty for RegularizerSpec {
    fn value(&self, x: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            RegularizerKind::Nuclear => x,
            RegularizerKind::TraceInverse => x / (g + x),
            RegularizerKind::CappedL1 => (g * x).min(1.0),
            RegularizerKind::LogDet => (x / g).ln_1p(),
            RegularizerKind::SchattenP => {
                let e = self.p / 2.0;
                (x + g).powf(e) - g.powf(e)
            }
            RegularizerKind::Scad => {
                let a = self.alpha;
                if x <= g {
                    g * x
                } else if x <= a * g {
                    (-x * x + 2.0 * g * a * x - g * g) / (2.0 * (a - 1.0))
                } else {
                    g * g * (a + 1.0) / 2.0
                }
            }
            RegularizerKind::Laplace => -(-g * x).exp_m1(),
        }
    }

    fn slope(&self, x: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            RegularizerKind::Nuclear => 1.0,
            RegularizerKind::TraceInverse => g / ((g + x) * (g + x)),
            RegularizerKind::CappedL1 => {
                if x < 1.0 / g {
                    g
                } else {
                    0.0
                }
            }
            RegularizerKind::LogDet => 1.0 / (x + g),
            RegularizerKind::SchattenP => {
                let e = self.p / 2.0;
                e * (x + g).powf(e - 1.0)
            }
            RegularizerKind::Scad => {
                let a = self.alpha;
                if x <= g {
                    g
                } else if x <= a * g {
                    (a * g - x) / (a - 1.0)
                } else {
                    0.0
                }
            }
            RegularizerKind::Laplace => g * (-g * x).exp(),
        }
    }

    fn kappa(&self) -> f64 {
        let g = self.gamma;
        match self.kind {
            RegularizerKind::Nuclear => 1.0,
            RegularizerKind::TraceInverse | RegularizerKind::LogDet => 1.0 / g,
            RegularizerKind::CappedL1 | RegularizerKind::Scad | RegularizerKind::Laplace => g,
            RegularizerKind::SchattenP => {
                let e = self.p / 2.0;
                e * g.powf(e - 1.0)
            }
        }
    }

    fn min_slope(&self) -> f64 {
        match self.kind {
            RegularizerKind::Nuclear => 1.0,
            RegularizerKind::SchattenP if self.p == 2.0 => 1.0,
            _ => 0.0,
        }
    }

    fn inverse_slope(&self, t: f64) -> Option<f64> {
        let g = self.gamma;
        let x = match self.kind {
            RegularizerKind::Nuclear => 0.0,
            RegularizerKind::TraceInverse => (g / t).sqrt() - g,
            RegularizerKind::CappedL1 => 1.0 / g,
            RegularizerKind::LogDet => 1.0 / t - g,
            RegularizerKind::SchattenP => {
                let e = self.p / 2.0;
                if e == 1.0 {
                    0.0
                } else {
                    (t / e).powf(1.0 / (e - 1.0)) - g
                }
            }
            RegularizerKind::Scad => self.alpha * g - (self.alpha - 1.0) * t,
            RegularizerKind::Laplace => (g / t).ln() / g,
        };
        Some(x.max(0.0))
    }
}

/// `q(t) = inf { x >= 0 : t in d rho(x) }`.
///
/// Zero for `t >= kappa`. Otherwise uses the closed form when the penalty
/// provides one and falls back to bisection on the nonincreasing slope map.
pub fn q_of<P: ConcavePenalty + ?Sized>(penalty: &P, t: f64) -> Result<f64> {
    if t.is_nan() {
        return Err(Error::Domain("q(t) is undefined for NaN".into()));
    }
    if t >= penalty.kappa() {
        return Ok(0.0);
    }
    if t <= penalty.min_slope() {
        return Err(Error::Domain(format!(
            "q(t) requires t > {} (infimum slope), got {t}",
            penalty.min_slope()
        )));
    }
    if let Some(x) = penalty.inverse_slope(t) {
        return Ok(x);
    }
    Ok(bisect_slope(penalty, t))
}

/// Smallest `x` with `slope(x) <= t`, assuming `min_slope < t < kappa`.
fn bisect_slope<P: ConcavePenalty + ?Sized>(penalty: &P, t: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while penalty.slope(hi) > t {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if penalty.slope(mid) <= t {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `g(w) = int_w^kappa q(t) dt`, by adaptive quadrature of [`q_of`].
pub fn g_of<P: ConcavePenalty + ?Sized>(penalty: &P, w: f64) -> Result<f64> {
    let kappa = penalty.kappa();
    if !(w > 0.0 && w <= kappa) {
        return Err(Error::Domain(format!("g(w) requires 0 < w <= {kappa}, got {w}")));
    }
    if w == kappa {
        return Ok(0.0);
    }
    if w <= penalty.min_slope() {
        return Err(Error::Domain(format!(
            "g(w) requires w > {} (infimum slope), got {w}",
            penalty.min_slope()
        )));
    }
    let q = |t: f64| q_of(penalty, t).unwrap_or(0.0);
    Ok(adaptive_simpson(&q, w, kappa, 1e-12, 50))
}

/// Simpson's rule with recursive bisection; `rel_tol` is relative to the
/// first whole-interval estimate.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let c = 0.5 * (a + b);
    let fc = f(c);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let fd = f(d);
    let fe = f(e);
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let diff = left + right - whole;
    let resolved = c - a <= 4.0 * f64::EPSILON * b.abs();
    if depth == 0 || resolved || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
        + simpson_step(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
}

/// `sum_i rho(lambda_i) + (beta / 2) * residual_sumsq`.
///
/// Slightly negative eigenvalues from roundoff are clamped to zero.
pub fn surrogate_objective<P: ConcavePenalty + ?Sized>(
    penalty: &P,
    gram_eigenvalues: &[f64],
    residual_sumsq: f64,
    beta: f64,
) -> f64 {
    let reg: f64 = gram_eigenvalues
        .iter()
        .map(|&l| penalty.value(l.max(0.0)))
        .sum();
    reg + 0.5 * beta * residual_sumsq
}
