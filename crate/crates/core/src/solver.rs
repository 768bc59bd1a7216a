//! Alternating solvers for the factored, reweighted problem
//!
//! ```text
//! min  <P_m^T P_m + P_n^T P_n, W> + G(W) + (beta/2) ||A(P_m P_n^T) - b||^2
//! ```
//!
//! over the factors `P_m` (`m x r`), `P_n` (`n x r`) and the weight `W`
//! (`0 <= W <= kappa I`). Minimizing out `W` gives the surrogate
//! `sum_i rho(lambda_i(Gram)) + (beta/2) ||residual||^2`, which is what the
//! trace records.
//!
//! [`gen_altmin`] solves each factor subproblem exactly (rows decouple into
//! `r x r` SPD systems); [`gen_asd`] takes one exact-line-search gradient
//! step per factor instead. Both then set `W = V rho'(Sigma) V^T` from the
//! Gram eigendecomposition and advance the `beta`/`gamma` schedules.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{stream_rng, Stream};
use crate::dense::{
    self, cholesky_into, cholesky_solve, GramMatrix, ProxLinearStep, ProxSign, WeightMatrix,
};
use crate::error::{Error, Result};
use crate::regularizer::{surrogate_objective, ConcavePenalty, RegularizerKind, RegularizerSpec};
use crate::sparse::{self, adjoint_apply, observed_product, ObservationSet, Side, SparseResidual};

/// Burer-Monteiro factors with `X = left * right^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    /// `P_m`, `m x r`.
    pub left: Array2<f64>,
    /// `P_n`, `n x r`.
    pub right: Array2<f64>,
}

impl FactorPair {
    pub fn new(left: Array2<f64>, right: Array2<f64>) -> Result<Self> {
        if left.ncols() != right.ncols() {
            return Err(Error::Shape(format!(
                "factor column counts differ: {} vs {}",
                left.ncols(),
                right.ncols()
            )));
        }
        if left.iter().chain(right.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("factors contain non-finite entries".into()));
        }
        Ok(FactorPair {
            left: left.as_standard_layout().into_owned(),
            right: right.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(m: usize, n: usize, r: usize) -> Self {
        FactorPair {
            left: Array2::zeros((m, r)),
            right: Array2::zeros((n, r)),
        }
    }

    pub fn rank_bound(&self) -> usize {
        self.left.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.left.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.right.nrows()
    }

    pub fn side(&self, side: Side) -> &Array2<f64> {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut Array2<f64> {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }

    pub fn gram(&self) -> GramMatrix {
        GramMatrix::from_factors(self.left.view(), self.right.view())
            .expect("factor pair has matching column counts")
    }

    /// The dense product `left * right^T`; only for small problems and tests.
    pub fn product(&self) -> Array2<f64> {
        self.left.dot(&self.right.t())
    }

    /// Entry `(i, j)` of the product.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.left.row(i).dot(&self.right.row(j))
    }

    pub fn singular_values(&self) -> Vec<f64> {
        dense::factored_singular_values(self.left.view(), self.right.view())
            .expect("factor pair has matching column counts")
    }

    /// `||P_m P_n^T||_F^2` from the two r x r Gram matrices.
    fn product_norm_sq(&self) -> f64 {
        trace_of_product(&self.left.t().dot(&self.left), &self.right.t().dot(&self.right))
    }

    /// `||P_m P_n^T - Q_m Q_n^T||_F^2`, via `[P_m Q_m] [P_n -Q_n]^T`.
    fn product_distance_sq(&self, other: &FactorPair) -> f64 {
        let left = ndarray::concatenate![Axis(1), self.left, other.left];
        let right = ndarray::concatenate![Axis(1), self.right, -&other.right];
        trace_of_product(&left.t().dot(&left), &right.t().dot(&right)).max(0.0)
    }
}

/// `tr(A B)` for symmetric `A`, `B`.
fn trace_of_product(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightUpdateRule {
    /// `W = V rho'(Sigma) V^T`.
    #[default]
    Exact,
    /// Projected linearized step on `W`, for capped-l1.
    ProxLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitKind {
    /// Standard normal entries scaled by `r^{-1/2}`.
    #[default]
    Gaussian,
    /// Uniform `[0, 1)` entries.
    Uniform,
}

impl std::str::FromStr for WeightUpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "exact" => Ok(WeightUpdateRule::Exact),
            "prox_linear" | "prox" => Ok(WeightUpdateRule::ProxLinear),
            other => Err(Error::Config(format!(
                "unknown weight update {other:?} (expected exact or prox_linear)"
            ))),
        }
    }
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(InitKind::Gaussian),
            "uniform" => Ok(InitKind::Uniform),
            other => Err(Error::Config(format!(
                "unknown initialization {other:?} (expected gaussian or uniform)"
            ))),
        }
    }
}

impl std::str::FromStr for GammaInit {
    type Err = Error;

    /// `auto` or a positive number.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(GammaInit::Auto);
        }
        match s.parse::<f64>() {
            Ok(g) if g > 0.0 && g.is_finite() => Ok(GammaInit::Fixed(g)),
            _ => Err(Error::Config(format!("gamma0 must be auto or a positive number, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GammaInit {
    /// From [`gamma_heuristic`] on the training data.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    AltMin,
    Asd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AltMin => "gen_altmin",
            Method::Asd => "gen_asd",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "gen_altmin" | "altmin" => Ok(Method::AltMin),
            "gen_asd" | "asd" => Ok(Method::Asd),
            other => Err(Error::Config(format!(
                "unknown solver {other:?} (expected gen_altmin or gen_asd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Rank bound `r`: the number of factor columns.
    pub rank: usize,
    pub beta_max: f64,
    /// Defaults to `beta_max / 50`.
    pub beta0: Option<f64>,
    pub beta_growth: f64,
    pub gamma0: GammaInit,
    /// Defaults to `gamma0 / 16`.
    pub gamma_min: Option<f64>,
    pub gamma_decay: f64,
    /// Rank estimate fed to the gamma heuristic; defaults to `rank`.
    pub rank_guess: Option<usize>,
    /// Bound on the relative change of both the objective and the product
    /// `P_m P_n^T`, checked once `beta` and `gamma` have reached their clamps.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub w_update: WeightUpdateRule,
    pub init: InitKind,
    /// Extrapolation weight for [`WeightUpdateRule::ProxLinear`].
    pub prox_extrapolation: f64,
}

impl SolverConfig {
    pub fn new(rank: usize, beta_max: f64) -> Self {
        SolverConfig {
            rank,
            beta_max,
            beta0: None,
            beta_growth: 1.2,
            gamma0: GammaInit::Auto,
            gamma_min: None,
            gamma_decay: 0.8,
            rank_guess: None,
            tol: 1e-5,
            max_iter: 500,
            seed: 0,
            w_update: WeightUpdateRule::Exact,
            init: InitKind::Gaussian,
            prox_extrapolation: 0.0,
        }
    }

    /// Constant `beta` and `gamma` for the whole run.
    pub fn frozen(mut self, beta: f64, gamma: f64) -> Self {
        self.beta_max = beta;
        self.beta0 = Some(beta);
        self.beta_growth = 1.0;
        self.gamma0 = GammaInit::Fixed(gamma);
        self.gamma_min = Some(gamma);
        self.gamma_decay = 1.0;
        self
    }

    pub fn beta0(&self) -> f64 {
        self.beta0.unwrap_or(self.beta_max / 50.0)
    }

    /// Starting and floor `gamma` for this data set.
    pub fn resolve_gamma(&self, obs: &ObservationSet) -> Result<(f64, f64)> {
        let gamma0 = match self.gamma0 {
            GammaInit::Fixed(g) => g,
            GammaInit::Auto => {
                let guess = self.rank_guess.unwrap_or(self.rank);
                gamma_heuristic(obs, guess, obs.density())?
            }
        };
        let gamma_min = self.gamma_min.unwrap_or(gamma0 / 16.0);
        Ok((gamma0, gamma_min))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if !(self.beta_max > 0.0 && self.beta_max.is_finite()) {
            return bad(format!("beta_max must be positive, got {}", self.beta_max));
        }
        let b0 = self.beta0();
        if !(b0 > 0.0 && b0 <= self.beta_max) {
            return bad(format!("beta0 must lie in (0, beta_max], got {b0}"));
        }
        if !(self.beta_growth >= 1.0) {
            return bad(format!("beta_growth must be >= 1, got {}", self.beta_growth));
        }
        if !(self.gamma_decay > 0.0 && self.gamma_decay <= 1.0) {
            return bad(format!("gamma_decay must lie in (0, 1], got {}", self.gamma_decay));
        }
        if let GammaInit::Fixed(g) = self.gamma0 {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma0 must be positive, got {g}"));
            }
            if let Some(gm) = self.gamma_min {
                if !(gm > 0.0 && gm <= g) {
                    return bad(format!("gamma_min must lie in (0, gamma0], got {gm}"));
                }
            }
        } else if let Some(gm) = self.gamma_min {
            if !(gm > 0.0) {
                return bad(format!("gamma_min must be positive, got {gm}"));
            }
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.prox_extrapolation >= 0.0) {
            return bad(format!(
                "prox_extrapolation must be >= 0, got {}",
                self.prox_extrapolation
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub residual_sumsq: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Cumulative wall time since the solve started.
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub gamma0: f64,
    pub gamma_min: f64,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }
}

/// State handed to a solve observer after every iteration.
pub struct IterationView<'a> {
    pub record: &'a IterationRecord,
    pub factors: &'a FactorPair,
    pub weight: &'a WeightMatrix,
    pub spec: &'a RegularizerSpec,
}

/// `||P_Omega(M)||_F / (2 sqrt(r p))`: a rough scale for `gamma`.
pub fn gamma_heuristic(obs: &ObservationSet, rank_guess: usize, p: f64) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::Config(
            "gamma heuristic needs at least one observation".into(),
        ));
    }
    if rank_guess == 0 || !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!(
            "gamma heuristic needs rank_guess >= 1 and p in (0, 1], got {rank_guess}, {p}"
        )));
    }
    let norm = sparse::frobenius_norm_observed(obs);
    if norm == 0.0 {
        return Err(Error::Config(
            "gamma heuristic is zero: all observed values are zero".into(),
        ));
    }
    Ok(norm / (2.0 * (rank_guess as f64 * p).sqrt()))
}

/// `(min(growth * beta, beta_max), max(decay * gamma, gamma_min))`.
pub fn schedule_update(beta: f64, gamma: f64, cfg: &SolverConfig, gamma_min: f64) -> (f64, f64) {
    (
        (cfg.beta_growth * beta).min(cfg.beta_max),
        (cfg.gamma_decay * gamma).max(gamma_min),
    )
}

/// `sum_i a_i^T W b_i` over matching rows, i.e. `<A^T B, W>`.
fn weighted_inner(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, w: &Array2<f64>) -> f64 {
    let ata = a.t().dot(&b);
    ata.iter().zip(w.iter()).map(|(x, y)| x * y).sum()
}

fn other_side(side: Side) -> Side {
    match side {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    }
}

fn check_shapes(fp: &FactorPair, w: &WeightMatrix, obs: &ObservationSet) -> Result<()> {
    if fp.nrows() != obs.nrows() || fp.ncols() != obs.ncols() || w.dim() != fp.rank_bound() {
        return Err(Error::Shape(format!(
            "factors {:?}/{:?} and weight {}x{} do not match a {} x {} problem",
            fp.left.dim(),
            fp.right.dim(),
            w.dim(),
            w.dim(),
            obs.nrows(),
            obs.ncols()
        )));
    }
    Ok(())
}

fn residual_of(fp: &FactorPair, obs: &ObservationSet) -> Result<SparseResidual> {
    sparse::residual(fp.left.view(), fp.right.view(), obs)
}

fn gradient_with(
    fp: &FactorPair,
    w: &WeightMatrix,
    obs: &ObservationSet,
    res: &SparseResidual,
    beta: f64,
    side: Side,
) -> Result<Array2<f64>> {
    let own = fp.side(side);
    let other = fp.side(other_side(side));
    let mut g = adjoint_apply(res.values(), obs, other.view(), side)?;
    g *= beta;
    g.scaled_add(2.0, &own.dot(w.matrix()));
    Ok(g)
}

/// Gradient of the objective in one factor:
/// `2 P W + beta A*(A(P_m P_n^T) - b) P_other`.
pub fn gradient(
    fp: &FactorPair,
    w: &WeightMatrix,
    obs: &ObservationSet,
    beta: f64,
    side: Side,
) -> Result<Array2<f64>> {
    check_shapes(fp, w, obs)?;
    let res = residual_of(fp, obs)?;
    gradient_with(fp, w, obs, &res, beta, side)
}

/// Exact step along `d` plus the sampled direction `A(d P_other^T)`.
fn exact_step_with(
    fp: &FactorPair,
    d: &Array2<f64>,
    w: &WeightMatrix,
    obs: &ObservationSet,
    res: &SparseResidual,
    beta: f64,
    side: Side,
) -> Result<(f64, Vec<f64>)> {
    let own = fp.side(side);
    let sampled = match side {
        Side::Left => observed_product(d.view(), fp.right.view(), obs)?,
        Side::Right => observed_product(fp.left.view(), d.view(), obs)?,
    };
    let ad_r: f64 = sampled.iter().zip(res.values()).map(|(a, b)| a * b).sum();
    let ad_sq: f64 = sampled.iter().map(|a| a * a).sum();
    let num = beta * ad_r + 2.0 * weighted_inner(own.view(), d.view(), w.matrix());
    let den = beta * ad_sq + 2.0 * weighted_inner(d.view(), d.view(), w.matrix());
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::DegenerateDirection(den));
    }
    Ok((num / den, sampled))
}

/// Minimizer `t` of `F(P - t d)` over the factor on `side`.
pub fn exact_step(
    fp: &FactorPair,
    d: &Array2<f64>,
    w: &WeightMatrix,
    obs: &ObservationSet,
    beta: f64,
    side: Side,
) -> Result<f64> {
    check_shapes(fp, w, obs)?;
    if d.dim() != fp.side(side).dim() {
        return Err(Error::Shape(format!(
            "direction is {:?}, factor is {:?}",
            d.dim(),
            fp.side(side).dim()
        )));
    }
    let res = residual_of(fp, obs)?;
    exact_step_with(fp, d, w, obs, &res, beta, side).map(|(t, _)| t)
}

fn smallest_eigenvalue(w: &WeightMatrix) -> f64 {
    w.eigenvalues().last().copied().unwrap_or(0.0)
}

/// Exact minimizer of `<P^T P, W> + (beta/2) ||A(P_m P_n^T) - b||^2` in the
/// factor on `side`, with the opposite factor `fixed`.
///
/// Row `i` solves `(2W + beta sum_j p_j p_j^T) u = beta sum_j v_ij p_j` over
/// the entries observed in that row (or column, for `Side::Right`).
pub fn subproblem_solve(
    fixed: ArrayView2<'_, f64>,
    w: &WeightMatrix,
    obs: &ObservationSet,
    beta: f64,
    side: Side,
) -> Result<Array2<f64>> {
    let r = w.dim();
    let (expected_fixed, out_rows) = match side {
        Side::Left => (obs.ncols(), obs.nrows()),
        Side::Right => (obs.nrows(), obs.ncols()),
    };
    if fixed.nrows() != expected_fixed || fixed.ncols() != r {
        return Err(Error::Shape(format!(
            "fixed factor is {:?}, expected ({expected_fixed}, {r})",
            fixed.dim()
        )));
    }
    let lambda_min = smallest_eigenvalue(w);
    if !(lambda_min > 0.0) {
        return Err(Error::SingularWeight(lambda_min));
    }
    let fixed = fixed.as_standard_layout();
    let fs = fixed.as_slice().expect("standard layout");
    let wm = w.matrix();
    let values = obs.values();

    let mut out = Array2::<f64>::zeros((out_rows, r));
    let rows: Vec<Result<()>> = out
        .as_slice_mut()
        .expect("fresh array")
        .par_chunks_mut(r)
        .enumerate()
        .map(|(i, row_out)| {
            let mut a = vec![0.0; r * r];
            let mut b = vec![0.0; r];
            let mut accumulate = |j: usize, v: f64| {
                let p = &fs[j * r..(j + 1) * r];
                for x in 0..r {
                    b[x] += v * p[x];
                    for y in x..r {
                        a[x * r + y] += p[x] * p[y];
                    }
                }
            };
            let mut count = 0usize;
            match side {
                Side::Left => {
                    let (cols, vals) = obs.row(i);
                    for (&j, &v) in cols.iter().zip(vals) {
                        accumulate(j, v);
                    }
                    count += cols.len();
                }
                Side::Right => {
                    for &k in obs.column_positions(i) {
                        accumulate(obs.row_index(k), values[k]);
                        count += 1;
                    }
                }
            }
            if count == 0 {
                return Ok(());
            }
            let entry = |x: usize, y: usize| {
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                2.0 * wm[[x, y]] + beta * a[lo * r + hi]
            };
            let mut l = vec![0.0; r * r];
            cholesky_into(r, entry, &mut l)?;
            for bx in b.iter_mut() {
                *bx *= beta;
            }
            cholesky_solve(&l, r, &mut b);
            for (o, v) in row_out.iter_mut().zip(&b) {
                *o = *v;
            }
            Ok(())
        })
        .collect();
    for row in rows {
        row?;
    }
    Ok(out)
}

/// Random starting factors; deterministic per seed.
pub fn initialize(m: usize, n: usize, r: usize, seed: u64, kind: InitKind) -> Result<FactorPair> {
    if r == 0 {
        return Err(Error::Config("rank bound must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, Stream::Init);
    let scale = 1.0 / (r as f64).sqrt();
    let mut draw = |_| match kind {
        InitKind::Gaussian => scale * rng.sample::<f64, _>(StandardNormal),
        InitKind::Uniform => rng.random::<f64>(),
    };
    let left = Array2::from_shape_fn((m, r), &mut draw);
    let right = Array2::from_shape_fn((n, r), &mut draw);
    Ok(FactorPair { left, right })
}

/// Alternating minimization with exact factor subproblems.
pub fn gen_altmin(
    obs: &ObservationSet,
    spec: &RegularizerSpec,
    cfg: &SolverConfig,
) -> Result<(FactorPair, SolveTrace)> {
    solve(obs, spec, cfg, Method::AltMin, None)
}

/// Alternating steepest descent with exact step sizes.
pub fn gen_asd(
    obs: &ObservationSet,
    spec: &RegularizerSpec,
    cfg: &SolverConfig,
) -> Result<(FactorPair, SolveTrace)> {
    solve(obs, spec, cfg, Method::Asd, None)
}

/// Runs `method` from the seeded initialization, calling `observer` after
/// every iteration.
pub fn solve(
    obs: &ObservationSet,
    spec: &RegularizerSpec,
    cfg: &SolverConfig,
    method: Method,
    observer: Option<&mut dyn FnMut(&IterationView<'_>)>,
) -> Result<(FactorPair, SolveTrace)> {
    cfg.validate()?;
    let start = initialize(obs.nrows(), obs.ncols(), cfg.rank, cfg.seed, cfg.init)?;
    solve_from(obs, spec, cfg, method, start, observer)
}

/// Like [`solve`], starting from the given factors.
pub fn solve_from(
    obs: &ObservationSet,
    spec: &RegularizerSpec,
    cfg: &SolverConfig,
    method: Method,
    start: FactorPair,
    mut observer: Option<&mut dyn FnMut(&IterationView<'_>)>,
) -> Result<(FactorPair, SolveTrace)> {
    cfg.validate()?;
    if start.rank_bound() != cfg.rank {
        return Err(Error::Config(format!(
            "starting factors have {} columns, rank bound is {}",
            start.rank_bound(),
            cfg.rank
        )));
    }
    if cfg.w_update == WeightUpdateRule::ProxLinear && spec.kind() != RegularizerKind::CappedL1 {
        return Err(Error::Config(format!(
            "the prox-linear weight update is only available for capped_l1, not {}",
            spec.kind()
        )));
    }
    if method == Method::AltMin
        && cfg.w_update == WeightUpdateRule::Exact
        && !(spec.is_differentiable() && spec.is_strictly_concave())
        && spec.kind() != RegularizerKind::Nuclear
    {
        return Err(Error::Config(format!(
            "gen_altmin needs a strictly concave, differentiable regularizer; {} is not",
            spec.kind()
        )));
    }
    let (gamma0, gamma_min) = cfg.resolve_gamma(obs)?;
    if !(gamma_min > 0.0 && gamma_min <= gamma0) {
        return Err(Error::Config(format!(
            "gamma_min must lie in (0, gamma0 = {gamma0}], got {gamma_min}"
        )));
    }

    let clock = Instant::now();
    let mut fp = start;
    let mut w = WeightMatrix::identity(cfg.rank);
    check_shapes(&fp, &w, obs)?;
    let mut w_prev = w.clone();
    let mut beta = cfg.beta0();
    let mut gamma = gamma0;
    let mut records = Vec::new();
    let mut termination = Termination::MaxIter;
    let mut prev_objective: Option<f64> = None;

    for iteration in 1..=cfg.max_iter {
        let before = fp.clone();
        let current = spec.with_gamma(gamma)?;

        let res = match method {
            Method::AltMin => {
                fp.left = subproblem_solve(fp.right.view(), &w, obs, beta, Side::Left)?;
                fp.right = subproblem_solve(fp.left.view(), &w, obs, beta, Side::Right)?;
                residual_of(&fp, obs)?
            }
            Method::Asd => {
                let mut res = residual_of(&fp, obs)?;
                for side in [Side::Left, Side::Right] {
                    res = descend(&mut fp, &w, obs, res, beta, side)?;
                }
                res
            }
        };

        let gram = fp.gram();
        let gram_eigenvalues;
        let next_w = match cfg.w_update {
            WeightUpdateRule::Exact => {
                let (nw, ev) = dense::weight_update_with_spectrum(&current, &gram);
                gram_eigenvalues = ev;
                nw
            }
            WeightUpdateRule::ProxLinear => {
                gram_eigenvalues = dense::sym_eig(gram.matrix().view())?.values.to_vec();
                prox_weight(&w, &w_prev, &gram, &gram_eigenvalues, &current, cfg)?
            }
        };
        w_prev = std::mem::replace(&mut w, next_w);

        let objective = surrogate_objective(&current, &gram_eigenvalues, res.sumsq(), beta);
        let record = IterationRecord {
            iteration,
            objective,
            residual_sumsq: res.sumsq(),
            beta,
            gamma,
            seconds: clock.elapsed().as_secs_f64(),
        };
        records.push(record);
        if let Some(obs_fn) = observer.as_mut() {
            obs_fn(&IterationView {
                record: &record,
                factors: &fp,
                weight: &w,
                spec: &current,
            });
        }

        let clamped = beta >= cfg.beta_max && gamma <= gamma_min;
        if clamped {
            if let Some(prev) = prev_objective {
                let obj_change = (objective - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
                // change of the product, blind to the P_m G, P_n G^-T gauge
                let base = before.product_norm_sq();
                let step = fp.product_distance_sq(&before);
                let factor_change = if base > 0.0 {
                    (step / base).sqrt()
                } else if step == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                if (obj_change < cfg.tol || objective == prev) && factor_change < cfg.tol {
                    termination = Termination::Converged;
                    break;
                }
            }
            prev_objective = Some(objective);
        }
        (beta, gamma) = schedule_update(beta, gamma, cfg, gamma_min);
    }

    Ok((
        fp,
        SolveTrace {
            records,
            termination,
            gamma0,
            gamma_min,
        },
    ))
}

/// One exact-line-search gradient step on `side`; returns the updated residual.
fn descend(
    fp: &mut FactorPair,
    w: &WeightMatrix,
    obs: &ObservationSet,
    res: SparseResidual,
    beta: f64,
    side: Side,
) -> Result<SparseResidual> {
    let d = gradient_with(fp, w, obs, &res, beta, side)?;
    if d.iter().all(|&v| v == 0.0) {
        return Ok(res);
    }
    let (t, sampled) = match exact_step_with(fp, &d, w, obs, &res, beta, side) {
        Ok(step) => step,
        // zero curvature along d means the objective is flat along d as well
        Err(Error::DegenerateDirection(_)) => return Ok(res),
        Err(e) => return Err(e),
    };
    fp.side_mut(side).scaled_add(-t, &d);
    let values: Vec<f64> = res
        .values()
        .iter()
        .zip(&sampled)
        .map(|(r, a)| r - t * a)
        .collect();
    Ok(SparseResidual::from_values(values))
}

/// Prox-linear step on `W` for capped-l1, whose `G(W) = r - tr(W)/gamma`
/// is linear with gradient `-I/gamma`.
fn prox_weight(
    w: &WeightMatrix,
    w_prev: &WeightMatrix,
    gram: &GramMatrix,
    gram_eigenvalues: &[f64],
    spec: &RegularizerSpec,
    cfg: &SolverConfig,
) -> Result<WeightMatrix> {
    let kappa = spec.kappa();
    let shift = -1.0 / spec.gamma();
    // step length so the largest linearized eigen-move is kappa
    let spread = gram_eigenvalues
        .iter()
        .map(|&l| (l + shift).abs())
        .fold(0.0f64, f64::max);
    let lipschitz = (spread / kappa).max(1e-12);
    dense::prox_linear_weight_update(
        w,
        w_prev,
        gram,
        ProxLinearStep {
            shift,
            lipschitz,
            extrapolation: cfg.prox_extrapolation,
            kappa,
            sign: ProxSign::Descent,
        },
    )
}
