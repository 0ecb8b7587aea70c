//! Quadratic penalty method with an active-set projected-gradient inner solver.
//!
//! The outer loop minimizes
//!
//! ```text
//! theta(x) = f(x) + (sigma/2) * sum_i (e^T x_i - 1)^2      over 0 <= x <= M
//! ```
//!
//! for an increasing penalty `sigma`, watching the support `{l : x_l > 0}`
//! shrink towards one entry per row. The inner solver estimates the set of
//! variables sitting at a bound, pushes those to the bound and takes a scaled
//! gradient step on the rest, with an Armijo-type backtracking rule evaluated
//! on the projected path. In `RowAndColumn` mode the column sums are penalized
//! as well (permutation constraints, requires `n1 == n2`).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rounding::{matching_score, nearest_assignment, BinaryAssignment};
use crate::tensor::{AssignmentVector, SparseAffinityTensor};

/// Stop once the support has fewer than `SUPPORT_STOP_RATIO * n1` entries.
pub const SUPPORT_STOP_RATIO: f64 = 1.2;
/// Stop once the support size has not changed for this many outer iterations.
pub const SUPPORT_STALL_ITERS: usize = 10;
/// Largest backtracking exponent tried by the line search.
pub const MAX_BACKTRACKS: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every row sums to one (`n1 <= n2`).
    Row,
    /// Rows and columns sum to one (`n1 == n2`).
    RowAndColumn,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "row" => Ok(Mode::Row),
            "row_and_column" | "perm" | "permutation" => Ok(Mode::RowAndColumn),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected row, row_and_column or perm)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Row => "row",
            Mode::RowAndColumn => "row_and_column",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub sigma0: f64,
    pub sigma_max: f64,
    pub growth_fast: f64,
    pub growth_slow: f64,
    pub violation_threshold: f64,
    pub window: usize,
    /// Upper bound of the box `[0, M]`.
    #[serde(rename = "M")]
    pub m: f64,
    pub tol: f64,
    pub rho: f64,
    pub eps: f64,
    pub beta: f64,
    pub inner_steps: usize,
    pub max_outer: usize,
    pub support_tau: f64,
    pub mode: Mode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sigma0: 10.0,
            sigma_max: 1e5,
            growth_fast: 1.3,
            growth_slow: 1.2,
            violation_threshold: 0.1,
            window: 5,
            m: 10_000.0,
            tol: 1e-5,
            rho: 1e-6,
            eps: 1e-2,
            beta: 0.5,
            inner_steps: 1,
            max_outer: 500,
            support_tau: 1e-8,
            mode: Mode::Row,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.rho > 0.0 && self.rho < 0.5) {
            return bad(format!("rho must lie in (0, 1/2), got {}", self.rho));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.m >= 1.0) {
            return bad(format!("M must be at least 1, got {}", self.m));
        }
        if !(self.sigma0 > 0.0) {
            return bad(format!("sigma0 must be positive, got {}", self.sigma0));
        }
        if !(self.sigma_max >= self.sigma0) {
            return bad(format!("sigma_max must be at least sigma0, got {}", self.sigma_max));
        }
        if !(self.tol >= 0.0) || !(self.support_tau >= 0.0) {
            return bad("tol and support_tau must be nonnegative".into());
        }
        if self.inner_steps == 0 || self.max_outer == 0 {
            return bad("inner_steps and max_outer must be at least 1".into());
        }
        Ok(())
    }

    /// Sets one field from its textual name and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
        }
        let v = value.trim();
        match key.trim() {
            "sigma0" => self.sigma0 = num(key, v)?,
            "sigma_max" => self.sigma_max = num(key, v)?,
            "growth_fast" => self.growth_fast = num(key, v)?,
            "growth_slow" => self.growth_slow = num(key, v)?,
            "violation_threshold" => self.violation_threshold = num(key, v)?,
            "window" => self.window = num(key, v)?,
            "M" | "m" => self.m = num(key, v)?,
            "tol" => self.tol = num(key, v)?,
            "rho" => self.rho = num(key, v)?,
            "eps" => self.eps = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "inner_steps" => self.inner_steps = num(key, v)?,
            "max_outer" => self.max_outer = num(key, v)?,
            "support_tau" => self.support_tau = num(key, v)?,
            "mode" => self.mode = v.parse()?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines (also `key: value`) on top of `self`.
    /// Blank lines and `#` comments are ignored.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected 'key = value', got '{line}'"),
                })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Row violations `h_i = e^T x_i - 1` and, in `RowAndColumn` mode, column
/// violations. `col` is empty in `Row` mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violations {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

impl Violations {
    /// `sum_i |h_i|` over rows and (when present) columns.
    pub fn abs_sum(&self) -> f64 {
        self.row.iter().chain(&self.col).map(|v| v.abs()).sum()
    }
}

fn row_violations(x: &[f64], n1: usize, n2: usize) -> Vec<f64> {
    x.chunks(n2).take(n1).map(|b| b.iter().sum::<f64>() - 1.0).collect()
}

fn col_violations(x: &[f64], n1: usize, n2: usize) -> Vec<f64> {
    let mut col = vec![-1.0; n2];
    for block in x.chunks(n2).take(n1) {
        for (c, v) in col.iter_mut().zip(block) {
            *c += v;
        }
    }
    col
}

fn check_mode(n1: usize, n2: usize, mode: Mode) -> Result<()> {
    if mode == Mode::RowAndColumn && n1 != n2 {
        return Err(Error::NotSquare { n1, n2 });
    }
    Ok(())
}

pub fn violations(x: &AssignmentVector, mode: Mode) -> Result<Violations> {
    let (n1, n2) = (x.n1(), x.n2());
    check_mode(n1, n2, mode)?;
    let row = row_violations(x.as_slice(), n1, n2);
    let col = match mode {
        Mode::Row => Vec::new(),
        Mode::RowAndColumn => col_violations(x.as_slice(), n1, n2),
    };
    Ok(Violations { row, col })
}

/// The penalty subproblem at a fixed `sigma`, evaluated on raw slices.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyProblem<'a> {
    tensor: &'a SparseAffinityTensor,
    sigma: f64,
    mode: Mode,
}

impl<'a> PenaltyProblem<'a> {
    pub fn new(tensor: &'a SparseAffinityTensor, sigma: f64, mode: Mode) -> Result<Self> {
        check_mode(tensor.n1(), tensor.n2(), mode)?;
        Ok(Self {
            tensor,
            sigma,
            mode,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn theta(&self, x: &[f64]) -> f64 {
        let (n1, n2) = (self.tensor.n1(), self.tensor.n2());
        let mut sq: f64 = row_violations(x, n1, n2).iter().map(|h| h * h).sum();
        if self.mode == Mode::RowAndColumn {
            sq += col_violations(x, n1, n2).iter().map(|h| h * h).sum::<f64>();
        }
        self.tensor.objective_raw(x) + 0.5 * self.sigma * sq
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let (n1, n2) = (self.tensor.n1(), self.tensor.n2());
        self.tensor.gradient_into(x, out);
        let row = row_violations(x, n1, n2);
        for (block, h) in out.chunks_mut(n2).zip(&row) {
            block.iter_mut().for_each(|g| *g += self.sigma * h);
        }
        if self.mode == Mode::RowAndColumn {
            let col = col_violations(x, n1, n2);
            for block in out.chunks_mut(n2) {
                for (g, h) in block.iter_mut().zip(&col) {
                    *g += self.sigma * h;
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }
}

fn check_x(t: &SparseAffinityTensor, x: &AssignmentVector) -> Result<()> {
    if x.n1() != t.n1() || x.n2() != t.n2() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// `theta(x) = f(x) + (sigma/2) * sum of squared violations`.
pub fn penalty_objective(t: &SparseAffinityTensor, x: &AssignmentVector, sigma: f64, mode: Mode) -> Result<f64> {
    check_x(t, x)?;
    Ok(PenaltyProblem::new(t, sigma, mode)?.theta(x.as_slice()))
}

pub fn penalty_gradient(t: &SparseAffinityTensor, x: &AssignmentVector, sigma: f64, mode: Mode) -> Result<Vec<f64>> {
    check_x(t, x)?;
    Ok(PenaltyProblem::new(t, sigma, mode)?.gradient(x.as_slice()))
}

#[inline]
fn project(v: f64, m: f64) -> f64 {
    v.clamp(0.0, m)
}

/// Estimated active set of one inner iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    /// `active[l]` iff `l` is predicted to sit at a bound.
    pub active: Vec<bool>,
    pub eps_j: f64,
    pub omega_j: f64,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `omega = ||x - P(x - g)||`, `eps_j = min(eps, omega)`; index `l` is active
/// when it is within `eps_j` of the lower bound with `g_l > 0` or within
/// `eps_j` of `M` with `g_l < 0`.
pub fn estimate_active_set(x: &[f64], g: &[f64], eps: f64, m: f64) -> ActiveSet {
    let omega_j = x
        .iter()
        .zip(g)
        .map(|(&xl, &gl)| {
            let r = xl - project(xl - gl, m);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    let eps_j = eps.min(omega_j);
    let active = x
        .iter()
        .zip(g)
        .map(|(&xl, &gl)| {
            (xl >= 0.0 && xl <= eps_j && gl > 0.0) || (xl >= m - eps_j && xl <= m && gl < 0.0)
        })
        .collect();
    ActiveSet {
        active,
        eps_j,
        omega_j,
    }
}

/// `delta_l = min(x_l, g_l)` on the active set and `g_l` elsewhere.
pub fn pg_residual(x: &[f64], g: &[f64], active: &[bool]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(active)
        .map(|((&xl, &gl), &a)| if a { xl.min(gl) } else { gl })
        .collect()
}

/// Search direction: `-x_l` on the active set, `-eta * g_l` elsewhere, with
/// `eta = n1 / max_{inactive} |g_l|` (1 when that maximum is zero).
pub fn pg_direction(x: &[f64], g: &[f64], active: &[bool], n1: usize) -> (Vec<f64>, f64) {
    let gmax = g
        .iter()
        .zip(active)
        .filter(|(_, &a)| !a)
        .map(|(gl, _)| gl.abs())
        .fold(0.0, f64::max);
    let eta = if gmax > 0.0 { n1 as f64 / gmax } else { 1.0 };
    let d = x
        .iter()
        .zip(g)
        .zip(active)
        .map(|((&xl, &gl), &a)| if a { -xl } else { -eta * gl })
        .collect();
    (d, eta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    /// Accepted step `beta^m` (or `beta^60` when stalled).
    pub alpha: f64,
    pub backtracks: u32,
    pub stalled: bool,
    /// `P(x + alpha d)`.
    pub x_new: Vec<f64>,
    pub theta_new: f64,
}

/// Right-hand side of the sufficient-decrease test at step `alpha`, given the
/// projected trial point.
pub fn armijo_rhs(x: &[f64], g: &[f64], d: &[f64], active: &[bool], trial: &[f64], alpha: f64, rho: f64) -> f64 {
    let mut free = 0.0;
    let mut bound = 0.0;
    for l in 0..x.len() {
        if active[l] {
            bound += g[l] * (trial[l] - x[l]);
        } else {
            free += g[l] * d[l];
        }
    }
    rho * (alpha * free + bound)
}

/// Backtracking along the projected path: the smallest `m >= 0` with
/// `theta(P(x + beta^m d)) - theta(x) <= rho * (beta^m * sum_{inactive} g d
/// + sum_{active} g (P(x + beta^m d) - x))`.
#[allow(clippy::too_many_arguments)]
pub fn line_search(
    problem: &PenaltyProblem<'_>,
    x: &[f64],
    theta_x: f64,
    g: &[f64],
    d: &[f64],
    active: &[bool],
    cfg: &SolverConfig,
) -> LineSearchOutcome {
    let mut trial = vec![0.0; x.len()];
    let mut alpha = 1.0;
    for m in 0..=MAX_BACKTRACKS {
        for l in 0..x.len() {
            trial[l] = project(x[l] + alpha * d[l], cfg.m);
        }
        let theta_new = problem.theta(&trial);
        if theta_new - theta_x <= armijo_rhs(x, g, d, active, &trial, alpha, cfg.rho) {
            return LineSearchOutcome {
                alpha,
                backtracks: m,
                stalled: false,
                x_new: trial,
                theta_new,
            };
        }
        if m < MAX_BACKTRACKS {
            alpha *= cfg.beta;
        }
    }
    LineSearchOutcome {
        alpha,
        backtracks: MAX_BACKTRACKS,
        stalled: true,
        x_new: x.to_vec(),
        theta_new: theta_x,
    }
}

/// Diagnostics of a single projected-gradient iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PgState {
    pub active: ActiveSet,
    pub delta_norm: f64,
    pub eta_j: f64,
    pub alpha: f64,
    pub theta_before: f64,
    pub theta_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemOutcome {
    pub x: AssignmentVector,
    /// Number of projected steps taken.
    pub steps: usize,
    /// `||delta|| <= tol` was reached.
    pub converged: bool,
    /// The line search hit its backtracking cap; `x` is the last accepted iterate.
    pub stalled: bool,
    pub last: Option<PgState>,
}

/// Runs up to `cfg.inner_steps` projected-gradient iterations on the penalty
/// subproblem at `sigma`, starting from `x0`.
pub fn solve_subproblem(
    t: &SparseAffinityTensor,
    x0: &AssignmentVector,
    sigma: f64,
    cfg: &SolverConfig,
    mode: Mode,
) -> Result<SubproblemOutcome> {
    check_x(t, x0)?;
    let problem = PenaltyProblem::new(t, sigma, mode)?;
    let n1 = t.n1();
    let mut x = x0.as_slice().to_vec();
    let mut g = vec![0.0; x.len()];
    let mut theta = problem.theta(&x);
    let mut out = SubproblemOutcome {
        x: x0.clone(),
        steps: 0,
        converged: false,
        stalled: false,
        last: None,
    };
    for _ in 0..cfg.inner_steps {
        problem.gradient_into(&x, &mut g);
        let active = estimate_active_set(&x, &g, cfg.eps, cfg.m);
        let delta = pg_residual(&x, &g, &active.active);
        let delta_norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if delta_norm <= cfg.tol {
            out.converged = true;
            break;
        }
        let (d, eta_j) = pg_direction(&x, &g, &active.active, n1);
        let ls = line_search(&problem, &x, theta, &g, &d, &active.active, cfg);
        out.last = Some(PgState {
            active,
            delta_norm,
            eta_j,
            alpha: ls.alpha,
            theta_before: theta,
            theta_after: ls.theta_new,
        });
        if ls.stalled {
            out.stalled = true;
            break;
        }
        x = ls.x_new;
        theta = ls.theta_new;
        out.steps += 1;
    }
    out.x = AssignmentVector::new(t.n1(), t.n2(), x)?;
    Ok(out)
}

/// Penalty update: grow fast while the violation is large, slowly when it is
/// small but no longer shrinking relative to the recent window, keep otherwise.
pub fn update_sigma(sigma: f64, h_sum: f64, window_max: f64, cfg: &SolverConfig) -> f64 {
    if h_sum >= cfg.violation_threshold {
        cfg.sigma_max.min(cfg.growth_fast * sigma)
    } else if window_max <= h_sum {
        cfg.sigma_max.min(cfg.growth_slow * sigma)
    } else {
        sigma
    }
}

/// First-order optimality error of the penalty subproblem on `[0, M]`:
/// the largest sign-violating gradient component at the bounds and the
/// largest gradient magnitude in the interior.
pub fn kkt_residual(t: &SparseAffinityTensor, x: &AssignmentVector, sigma: f64, m: f64, mode: Mode) -> Result<f64> {
    let q = penalty_gradient(t, x, sigma, mode)?;
    Ok(kkt_from_gradient(x.as_slice(), &q, m))
}

fn kkt_from_gradient(x: &[f64], q: &[f64], m: f64) -> f64 {
    x.iter()
        .zip(q)
        .map(|(&xp, &qp)| {
            if xp <= 0.0 {
                (-qp).max(0.0)
            } else if xp >= m {
                qp.max(0.0)
            } else {
                qp.abs()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockBound {
    pub h: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub kkt_residual: f64,
    pub tolerance: f64,
    pub blocks: Vec<BlockBound>,
    pub all_pass: bool,
}

/// Checks `0 <= h_i <= c_i / sigma` per row at an approximately stationary
/// point of the row-mode penalty subproblem, with slack `1e-6 + kkt_residual`.
pub fn check_stationarity(t: &SparseAffinityTensor, x: &AssignmentVector, sigma: f64, m: f64) -> Result<StationarityReport> {
    let kkt = kkt_residual(t, x, sigma, m, Mode::Row)?;
    let tolerance = 1e-6 + kkt;
    let h = violations(x, Mode::Row)?.row;
    let caps = t.penalty_cap(m);
    let blocks: Vec<BlockBound> = h
        .iter()
        .zip(&caps)
        .map(|(&h, &c)| {
            let upper = c / sigma;
            BlockBound {
                h,
                lower: 0.0,
                upper,
                pass: h >= -tolerance && h <= upper + tolerance,
            }
        })
        .collect();
    let all_pass = blocks.iter().all(|b| b.pass);
    Ok(StationarityReport {
        kkt_residual: kkt,
        tolerance,
        blocks,
        all_pass,
    })
}

/// One outer iteration as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub sigma: f64,
    pub h_sum: f64,
    pub support_size: usize,
    pub theta: f64,
    pub kkt_residual: f64,
}

pub const TRACE_HEADER: &str = "outer_iter,sigma,h_sum,support_size,theta,kkt_residual";

/// Renders trace rows as CSV with [`TRACE_HEADER`].
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{:?},{:?},{},{:?},{:?}\n",
            r.outer_iter, r.sigma, r.h_sum, r.support_size, r.theta, r.kkt_residual
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Support fell below `1.2 n1`.
    SmallSupport,
    /// Support size unchanged for ten outer iterations.
    SupportStalled,
    /// Hit `max_outer`.
    IterationLimit,
}

/// Outcome of a full solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub assignment: BinaryAssignment,
    pub score: f64,
    /// Fraction of rows matched as in the ground truth, when one is known.
    pub accuracy: Option<f64>,
    pub outer_iterations: usize,
    pub wall_time: f64,
    pub support_history: Vec<usize>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub line_search_stalls: usize,
    pub trace: Vec<TraceRow>,
    /// Final iterate before rounding.
    pub x: AssignmentVector,
}

#[derive(Serialize)]
struct ResultJson<'a> {
    assignment: &'a [usize],
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
    iterations: usize,
    support_history: &'a [usize],
    converged: bool,
}

impl MatchResult {
    /// The result document: assignment, score, accuracy (when known),
    /// iterations, support history and convergence flag. Timing is left out
    /// so that identical runs serialize identically.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ResultJson {
            assignment: self.assignment.columns(),
            score: self.score,
            accuracy: self.accuracy,
            iterations: self.outer_iterations,
            support_history: &self.support_history,
            converged: self.converged,
        })
        .expect("result serialization cannot fail")
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn clock() -> impl FnOnce() -> f64 {
    let start = std::time::Instant::now();
    move || start.elapsed().as_secs_f64()
}

#[cfg(target_arch = "wasm32")]
fn clock() -> impl FnOnce() -> f64 {
    || 0.0
}

/// Quadratic penalty projected-gradient solve from the all-ones start,
/// followed by rounding to the nearest binary assignment.
pub fn qppg_solve(t: &SparseAffinityTensor, cfg: &SolverConfig) -> Result<MatchResult> {
    cfg.validate()?;
    let (n1, n2) = (t.n1(), t.n2());
    check_mode(n1, n2, cfg.mode)?;
    let elapsed = clock();

    let mut x = AssignmentVector::ones(n1, n2);
    let mut sigma = cfg.sigma0;
    let mut window: VecDeque<f64> = VecDeque::with_capacity(cfg.window + 1);
    let mut support_history = Vec::new();
    let mut trace = Vec::new();
    let mut unchanged = 0usize;
    let mut stalls = 0usize;
    let mut stop_reason = StopReason::IterationLimit;
    let mut grad = vec![0.0; t.dim()];

    for k in 1..=cfg.max_outer {
        let sub = solve_subproblem(t, &x, sigma, cfg, cfg.mode)?;
        stalls += usize::from(sub.stalled);
        x = sub.x;

        let problem = PenaltyProblem::new(t, sigma, cfg.mode)?;
        let h_sum = violations(&x, cfg.mode)?.abs_sum();
        let support = x.support_size(cfg.support_tau);
        problem.gradient_into(x.as_slice(), &mut grad);
        trace.push(TraceRow {
            outer_iter: k,
            sigma,
            h_sum,
            support_size: support,
            theta: problem.theta(x.as_slice()),
            kkt_residual: kkt_from_gradient(x.as_slice(), &grad, cfg.m),
        });

        let window_max = window.iter().copied().reduce(f64::max).unwrap_or(f64::INFINITY);
        sigma = update_sigma(sigma, h_sum, window_max, cfg);
        window.push_back(h_sum);
        if window.len() > cfg.window {
            window.pop_front();
        }

        if support_history.last() == Some(&support) {
            unchanged += 1;
        } else {
            unchanged = 0;
        }
        support_history.push(support);

        let rows_covered = x.blocks().all(|b| b.iter().any(|&v| v > cfg.support_tau));
        if rows_covered && (support as f64) < SUPPORT_STOP_RATIO * n1 as f64 {
            stop_reason = StopReason::SmallSupport;
            break;
        }
        if unchanged >= SUPPORT_STALL_ITERS {
            stop_reason = StopReason::SupportStalled;
            break;
        }
    }

    let assignment = nearest_assignment(&x);
    let score = matching_score(t, &assignment);
    Ok(MatchResult {
        assignment,
        score,
        accuracy: None,
        outer_iterations: support_history.len(),
        wall_time: elapsed(),
        support_history,
        converged: stop_reason != StopReason::IterationLimit,
        stop_reason,
        line_search_stalls: stalls,
        trace,
        x,
    })
}
