//! Latency-aware descent over the offloaded bits `s`.
//!
//! Each outer iteration solves the fixed-`s` subproblem, takes a gradient or
//! Newton step per user on the per-user surrogate (times and frequencies held
//! at the subproblem solution), backtracks with an Armijo test and rejects
//! the part of a step that would break the latency budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::{solve_inner, DualPoint, FrequencyMode, InnerConfig, InnerSolution, InnerStatus};
use crate::phymodel::{
    check_typical_condition, evaluate, objective_grad_s, objective_hess_s, surrogate_user, Allocation,
    EnergyBreakdown, TimingReport,
};
use crate::scenario::CellProblem;

/// Relative latency tolerance for a binding budget.
pub const LATENCY_TOL: f64 = 1e-4;

/// Step halvings allowed when a step breaks the latency budget or fails to
/// lower the objective.
const LATENCY_HALVINGS: usize = 10;

/// Descent direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gradient,
    Newton,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" | "gd" => Ok(Self::Gradient),
            "newton" => Ok(Self::Newton),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gradient => "gradient",
            Self::Newton => "newton",
        })
    }
}

/// Descent settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterConfig {
    pub method: Method,
    /// Starting point as a fraction of each request.
    pub s_init_fraction: f64,
    /// Stop when the gradient norm over free users, in microjoule per kilobit,
    /// falls below this. The Newton variant also stops when half the squared
    /// Newton decrement, in microjoule, does.
    pub eps1: f64,
    /// Armijo sufficient-decrease fraction.
    pub backtrack_alpha: f64,
    /// Step shrink factor.
    pub backtrack_beta: f64,
    pub max_outer_iters: usize,
    /// Gradient step scale in bit^2 per joule: `delta s = -scale * grad`.
    /// The default takes unit steps in kilobit against microjoule per kilobit.
    pub gradient_scale: f64,
    /// Reuse the previous subproblem's dual point as the next starting centre.
    pub warm_start: bool,
    pub inner: InnerConfig,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            method: Method::Newton,
            s_init_fraction: 0.6,
            eps1: 1e-3,
            backtrack_alpha: 0.3,
            backtrack_beta: 0.7,
            max_outer_iters: 100,
            gradient_scale: 1e12,
            warm_start: false,
            inner: InnerConfig::default(),
        }
    }
}

impl OuterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.s_init_fraction > 0.0 && self.s_init_fraction < 1.0) {
            return bad("s_init_fraction must lie in (0, 1)");
        }
        if !(self.backtrack_alpha > 0.0 && self.backtrack_alpha < 0.5) {
            return bad("backtrack_alpha must lie in (0, 0.5)");
        }
        if !(self.backtrack_beta > 0.0 && self.backtrack_beta < 1.0) {
            return bad("backtrack_beta must lie in (0, 1)");
        }
        if !(self.eps1 > 0.0) || !(self.gradient_scale > 0.0) {
            return bad("eps1 and gradient_scale must be positive");
        }
        Ok(())
    }
}

/// Why the descent stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    LatencyBinding,
    BoundarySZero,
    BoundarySFull,
    IterationCap,
    /// Some user violates the typical-network condition; the all-offload
    /// point is reported without an optimality claim.
    CaseIIUnsupported,
    /// No allocation meets the latency budget at any tried split.
    Infeasible,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GradientTolerance => "gradient-tolerance",
            Self::LatencyBinding => "latency-binding",
            Self::BoundarySZero => "boundary-s-zero",
            Self::BoundarySFull => "boundary-s-full",
            Self::IterationCap => "iteration-cap",
            Self::CaseIIUnsupported => "case-ii-unsupported",
            Self::Infeasible => "infeasible",
        })
    }
}

/// One accepted outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OuterTraceRow {
    pub iteration: usize,
    /// Exact objective at the subproblem solution.
    pub objective: f64,
    /// Sum of per-user surrogates at the new split, inner variables held.
    pub surrogate: f64,
    /// Gradient norm over free users (microjoule per kilobit).
    pub grad_norm: f64,
    pub t_total: f64,
    pub s: Vec<f64>,
    pub inner_iterations: usize,
}

/// Result of [`solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct OuterSolution {
    pub alloc: Allocation,
    pub energy: EnergyBreakdown,
    pub timing: TimingReport,
    pub trace: Vec<OuterTraceRow>,
    pub termination: Termination,
    pub outer_iters: usize,
    /// Ellipsoid iterations summed over every subproblem solve.
    pub inner_iters: usize,
    pub inner_solves: usize,
    /// Status of the last subproblem solve.
    pub inner_status: InnerStatus,
}

impl OuterSolution {
    /// Offloaded share of the total request.
    pub fn offloaded_fraction(&self, cell: &CellProblem) -> f64 {
        let u: f64 = cell.users.iter().map(|u| u.request).sum();
        if u > 0.0 {
            self.alloc.s.iter().sum::<f64>() / u
        } else {
            0.0
        }
    }
}

const GRAD_UNIT: f64 = 1e9; // J/bit -> microjoule per kilobit
const ENERGY_UNIT: f64 = 1e6; // J -> microjoule

/// Descent direction per user. Newton uses `-g/h` and falls back to the
/// gradient direction where the curvature is infinite (users at `s = 0`).
pub fn step_direction(grad: &[f64], hess: &[f64], method: Method, gradient_scale: f64) -> Vec<f64> {
    grad.iter()
        .zip(hess)
        .map(|(&g, &h)| {
            if g == 0.0 {
                return 0.0;
            }
            match method {
                Method::Gradient => -gradient_scale * g,
                Method::Newton => {
                    assert!(h > 0.0, "Newton step needs positive curvature, got {h}");
                    if h.is_finite() {
                        -g / h
                    } else {
                        -gradient_scale * g
                    }
                }
            }
        })
        .collect()
}

/// Armijo backtracking for user `i` on the surrogate. Returns the accepted
/// step length, or zero when 60 reductions all fail. Candidates are clipped
/// into `[0, u_i]` and the decrease test uses the clipped displacement.
pub fn backtracking_search(
    cell: &CellProblem,
    alloc: &Allocation,
    i: usize,
    grad: f64,
    direction: f64,
    alpha: f64,
    beta: f64,
) -> f64 {
    if direction == 0.0 {
        return 0.0;
    }
    let s = alloc.s[i];
    let u = cell.users[i].request;
    let f0 = surrogate_user(cell, alloc, i, s);
    let mut t = 1.0;
    for _ in 0..60 {
        let cand = (s + t * direction).clamp(0.0, u);
        let moved = cand - s;
        if moved != 0.0 {
            let f = surrogate_user(cell, alloc, i, cand);
            if f <= f0 + alpha * grad * moved {
                return t;
            }
        }
        t *= beta;
    }
    0.0
}

/// Largest CPU frequency available to users under `mode`.
fn user_top(cell: &CellProblem, mode: FrequencyMode) -> f64 {
    match mode {
        FrequencyMode::Scaled => cell.compute.f_user_max,
        FrequencyMode::Fixed { f_user, .. } => f_user,
    }
}

/// Starting split: the configured fraction of each request, raised where
/// local computing at full speed could not finish within 90% of the budget.
pub fn initial_split(cell: &CellProblem, fraction: f64, mode: FrequencyMode) -> Vec<f64> {
    let cc = &cell.compute;
    let f_top = user_top(cell, mode);
    cell.users
        .iter()
        .map(|u| {
            let need = u.request - 0.9 * cc.latency * f_top / cc.cycles_user;
            (fraction * u.request).max(need).clamp(0.0, u.request)
        })
        .collect()
}

struct Counters {
    inner_iters: usize,
    inner_solves: usize,
}

fn inner_at(
    cell: &CellProblem,
    s: &[f64],
    mode: FrequencyMode,
    cfg: &OuterConfig,
    warm: Option<&DualPoint>,
    n: &mut Counters,
) -> Result<InnerSolution> {
    let sol = solve_inner(cell, s, mode, &cfg.inner, if cfg.warm_start { warm } else { None })?;
    n.inner_iters += sol.iterations;
    n.inner_solves += 1;
    Ok(sol)
}

fn finish(
    cell: &CellProblem,
    sol: InnerSolution,
    trace: Vec<OuterTraceRow>,
    termination: Termination,
    outer_iters: usize,
    n: Counters,
) -> OuterSolution {
    let (energy, timing) = evaluate(&sol.alloc, cell);
    OuterSolution {
        alloc: sol.alloc,
        energy,
        timing,
        trace,
        termination,
        outer_iters,
        inner_iters: n.inner_iters,
        inner_solves: n.inner_solves,
        inner_status: sol.status,
    }
}

/// Run the latency-aware descent with scaled frequencies.
pub fn solve(cell: &CellProblem, cfg: &OuterConfig) -> Result<OuterSolution> {
    solve_with_mode(cell, cfg, FrequencyMode::Scaled)
}

/// Run the latency-aware descent under the given frequency treatment.
pub fn solve_with_mode(cell: &CellProblem, cfg: &OuterConfig, mode: FrequencyMode) -> Result<OuterSolution> {
    cfg.validate()?;
    let k = cell.len();
    let td = cell.compute.latency;
    let u = cell.requests();
    let mut n = Counters {
        inner_iters: 0,
        inner_solves: 0,
    };

    let mut s = initial_split(cell, cfg.s_init_fraction, mode);
    let mut sol = inner_at(cell, &s, mode, cfg, None, &mut n)?;
    if sol.status == InnerStatus::Infeasible {
        s = u.clone();
        sol = inner_at(cell, &s, mode, cfg, None, &mut n)?;
        let term = if sol.status == InnerStatus::Infeasible {
            Termination::Infeasible
        } else {
            Termination::BoundarySFull
        };
        return Ok(finish(cell, sol, Vec::new(), term, 0, n));
    }
    if check_typical_condition(cell, &sol.alloc).iter().any(|&ok| !ok) {
        log::warn!("typical-network condition fails; reporting the all-offload point");
        let full = inner_at(cell, &u, mode, cfg, None, &mut n)?;
        return Ok(finish(cell, full, Vec::new(), Termination::CaseIIUnsupported, 0, n));
    }

    let mut trace = vec![trace_row(cell, &sol, 0, f64::NAN)];
    // Users whose descent the latency budget has stopped.
    let mut latency_frozen = vec![false; k];
    for iter in 1..=cfg.max_outer_iters {
        let alloc = &sol.alloc;
        let grad = objective_grad_s(alloc, cell);
        let hess = objective_hess_s(alloc, cell);

        // Users pinned by a bound with the gradient pushing into it.
        let mut free = vec![true; k];
        for i in 0..k {
            let at_zero = s[i] <= 0.0 && grad[i] >= 0.0;
            let at_full = s[i] >= u[i] && grad[i] <= 0.0;
            free[i] = !(at_zero || at_full || latency_frozen[i]);
        }
        let gnorm = (0..k)
            .filter(|&i| free[i])
            .map(|i| (grad[i] * GRAD_UNIT).powi(2))
            .sum::<f64>()
            .sqrt();
        if let Some(term) = stopping(cfg, cell, &sol.alloc, &u, &grad, &hess, &free, &latency_frozen, gnorm) {
            return Ok(finish(cell, sol, trace, term, iter - 1, n));
        }

        let mut dir = step_direction(&grad, &hess, cfg.method, cfg.gradient_scale);
        for i in 0..k {
            if !free[i] {
                dir[i] = 0.0;
            }
        }
        let mut cand = s.clone();
        for i in 0..k {
            let t = backtracking_search(cell, alloc, i, grad[i], dir[i], cfg.backtrack_alpha, cfg.backtrack_beta);
            cand[i] = (s[i] + t * dir[i]).clamp(0.0, u[i]);
        }
        // Re-solve the subproblem along the step. A step that breaks the
        // latency budget is halved for every user; otherwise only users whose
        // own energy rose have their step halved.
        let (e0, _) = evaluate(&sol.alloc, cell);
        let v0 = e0.objective;
        let user0 = user_energy(cell, &e0);
        let warm = sol.dual.clone();
        let mut theta = vec![1.0; k];
        let mut accepted = None;
        for _ in 0..=LATENCY_HALVINGS {
            let trial: Vec<f64> = (0..k).map(|i| s[i] + theta[i] * (cand[i] - s[i])).collect();
            let moving: Vec<bool> = (0..k).map(|i| (trial[i] - s[i]).abs() > 1e-9 * u[i].max(1.0)).collect();
            if !moving.iter().any(|&m| m) {
                break;
            }
            let next = inner_at(cell, &trial, mode, cfg, Some(&warm), &mut n)?;
            let (e, t) = evaluate(&next.alloc, cell);
            if next.status == InnerStatus::Infeasible || t.latency_violated(td, LATENCY_TOL) {
                // Blame users whose local time or capped round trip overruns.
                let f_top = user_top(cell, mode);
                let cc = &cell.compute;
                let late: Vec<usize> = (0..k)
                    .filter(|&i| {
                        let local = cc.cycles_user * (u[i] - trial[i]) / f_top;
                        let capped = crate::phymodel::min_uplink_time(cell, i, trial[i]) + local;
                        moving[i] && capped > td
                    })
                    .collect();
                if late.is_empty() {
                    theta.iter_mut().for_each(|t| *t *= 0.5);
                } else {
                    for i in late {
                        theta[i] *= 0.5;
                    }
                }
                continue;
            }
            let user1 = user_energy(cell, &e);
            let worse: Vec<usize> = (0..k).filter(|&i| moving[i] && user1[i] > user0[i]).collect();
            if worse.is_empty() && e.objective <= v0 {
                accepted = Some((trial, next));
                break;
            }
            if worse.is_empty() {
                theta.iter_mut().for_each(|t| *t *= 0.5);
            } else {
                for i in worse {
                    theta[i] *= 0.5;
                }
            }
        }
        for i in 0..k {
            if theta[i] < 1.0 && accepted.is_none() {
                latency_frozen[i] = true;
            }
        }
        let Some((trial, next)) = accepted else {
            if (0..k).any(|i| free[i] && !latency_frozen[i]) {
                continue;
            }
            let binding = sol.alloc.s.iter().any(|&v| v > 0.0)
                && evaluate(&sol.alloc, cell).1.t_total >= td * (1.0 - LATENCY_TOL);
            let term = if binding {
                Termination::LatencyBinding
            } else {
                Termination::GradientTolerance
            };
            return Ok(finish(cell, sol, trace, term, iter - 1, n));
        };
        for i in 0..k {
            if theta[i] < 1.0 && (trial[i] - s[i]).abs() <= 1e-9 * u[i].max(1.0) {
                latency_frozen[i] = true;
            }
        }
        let surrogate: f64 = (0..k).map(|i| surrogate_user(cell, &sol.alloc, i, trial[i])).sum();
        s = trial;
        sol = next;
        trace.push(trace_row(cell, &sol, iter, surrogate));
        trace.last_mut().expect("row just pushed").grad_norm = gnorm;
    }
    Ok(finish(cell, sol, trace, Termination::IterationCap, cfg.max_outer_iters, n))
}

/// Weighted energy of each user, with the server-side terms it causes.
fn user_energy(cell: &CellProblem, e: &EnergyBreakdown) -> Vec<f64> {
    let w = cell.compute.weight;
    (0..e.e_off.len())
        .map(|i| (1.0 - w) * (e.e_off[i] + e.e_lc[i]) + w * (e.e_oc[i] + e.e_dl[i]))
        .collect()
}

fn boundary_kind(s: &[f64], u: &[f64]) -> Termination {
    if s.iter().all(|&v| v <= 0.0) {
        Termination::BoundarySZero
    } else if s.iter().zip(u).all(|(a, b)| a >= b) {
        Termination::BoundarySFull
    } else {
        Termination::GradientTolerance
    }
}

#[allow(clippy::too_many_arguments)]
fn stopping(
    cfg: &OuterConfig,
    cell: &CellProblem,
    alloc: &Allocation,
    u: &[f64],
    grad: &[f64],
    hess: &[f64],
    free: &[bool],
    latency_frozen: &[bool],
    gnorm: f64,
) -> Option<Termination> {
    let s = &alloc.s;
    if free.iter().all(|&f| !f) {
        return Some(if latency_frozen.iter().any(|&b| b) {
            Termination::LatencyBinding
        } else {
            boundary_kind(s, u)
        });
    }
    let small = match cfg.method {
        Method::Gradient => gnorm <= cfg.eps1,
        Method::Newton => {
            let decrement: f64 = (0..s.len())
                .filter(|&i| free[i] && hess[i].is_finite())
                .map(|i| grad[i] * grad[i] / hess[i])
                .sum();
            let infinite_curv = (0..s.len()).any(|i| free[i] && !hess[i].is_finite());
            gnorm <= cfg.eps1 || (!infinite_curv && 0.5 * decrement * ENERGY_UNIT <= cfg.eps1)
        }
    };
    if small {
        let td = cell.compute.latency;
        let binding = s.iter().any(|&v| v > 0.0) && evaluate(alloc, cell).1.t_total >= td * (1.0 - LATENCY_TOL);
        Some(if binding {
            Termination::LatencyBinding
        } else {
            Termination::GradientTolerance
        })
    } else {
        None
    }
}

fn trace_row(cell: &CellProblem, sol: &InnerSolution, iteration: usize, surrogate: f64) -> OuterTraceRow {
    let (e, t) = evaluate(&sol.alloc, cell);
    OuterTraceRow {
        iteration,
        objective: e.objective,
        surrogate,
        grad_norm: f64::NAN,
        t_total: t.t_total,
        s: sol.alloc.s.clone(),
        inner_iterations: sol.iterations,
    }
}
