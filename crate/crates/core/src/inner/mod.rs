//! Fixed-`s` subproblem: maximise the dual function with ellipsoid cuts and
//! recover primal points from the closed-form Lagrangian minimisers.

pub(crate) mod dual;
mod ellipsoid;

pub use dual::{
    downlink_time, dual_value, lagrangian, lagrangian_minimizer, mec_freq, primal_from_dual, subgradient,
    uplink_time, user_freq, DualPoint, FrequencyMode,
};
pub use ellipsoid::{CutKind, CutResult, Ellipsoid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phymodel::{evaluate, Allocation};
use crate::scenario::CellProblem;

/// Unit used to scale frequency-type dual variables (Hz).
const FREQ_UNIT: f64 = 1e9;

/// Solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerConfig {
    pub cut: CutKind,
    /// Radius of the initial ball in scaled dual units.
    pub radius: f64,
    /// Stop when the geometric-mean semi-axis falls below this.
    pub volume_tol: f64,
    /// Stop when a feasible primal point certifies this relative duality gap.
    /// Zero disables the certificate.
    pub gap_tol: f64,
    /// Iteration cap; `None` means `200 n^2` for the active dimension `n`.
    pub max_iters: Option<usize>,
    /// Record a per-iteration trace.
    pub trace: bool,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            cut: CutKind::Shallow,
            radius: 1e3,
            volume_tol: 1e-8,
            gap_tol: 1e-5,
            max_iters: None,
            trace: false,
        }
    }
}

/// Why the subproblem solver stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerStatus {
    Converged,
    IterationCap,
    InfeasibleCutStall,
    /// No allocation meets the latency budget for this `s`.
    Infeasible,
}

impl std::fmt::Display for InnerStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::IterationCap => "iteration-cap",
            Self::InfeasibleCutStall => "infeasible-cut-stall",
            Self::Infeasible => "infeasible",
        })
    }
}

/// Which test ended a converged run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Volume,
    DualityGap,
    ZeroSubgradient,
    Degenerate,
    IterationCap,
    Stall,
    Infeasible,
}

/// One row of the inner trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InnerTraceRow {
    pub iteration: usize,
    /// Dual value at the centre, or NaN after a feasibility cut.
    pub dual_value: f64,
    pub best_dual_value: f64,
    pub best_primal_value: f64,
    pub volume_proxy: f64,
    /// Largest positive constraint slack at the Lagrangian minimiser (s).
    pub max_violation: f64,
    pub feasibility_cut: bool,
}

/// Result of [`solve_inner`].
#[derive(Clone, Debug, PartialEq)]
pub struct InnerSolution {
    /// Feasible allocation with the lowest objective found.
    pub alloc: Allocation,
    /// Dual point with the highest dual value found.
    pub dual: DualPoint,
    /// Dual value at the last evaluated centre.
    pub dual_value: f64,
    pub best_dual_value: f64,
    /// Objective of `alloc`.
    pub primal_value: f64,
    /// `(primal_value - best_dual_value) / primal_value`.
    pub rel_gap: f64,
    pub iterations: usize,
    pub status: InnerStatus,
    pub stop: StopReason,
    pub trace: Vec<InnerTraceRow>,
}

/// Which dual coordinates carry a constraint for this `s`.
fn active_coords(cell: &CellProblem, s: &[f64], mode: FrequencyMode) -> Vec<usize> {
    let k = cell.len();
    let mut idx = vec![0];
    if matches!(mode, FrequencyMode::Scaled) && s.iter().any(|&v| v > 0.0) {
        idx.push(1);
    }
    for i in 0..k {
        if s[i] > 0.0 {
            idx.push(2 + i);
        }
    }
    for i in 0..k {
        idx.push(2 + k + i);
    }
    for i in 0..k {
        if s[i] > 0.0 {
            idx.push(2 + 2 * k + i);
        }
    }
    for i in 0..k {
        if s[i] > 0.0 {
            idx.push(2 + 3 * k + i);
        }
    }
    idx
}

fn check_inputs(cell: &CellProblem, s: &[f64]) -> Result<()> {
    if s.len() != cell.len() {
        return Err(Error::InvalidConfig(format!("{} offload values for {} users", s.len(), cell.len())));
    }
    let w = cell.compute.weight;
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::InvalidConfig(format!("the solver needs 0 < w < 1, got {w}")));
    }
    for (i, (&v, u)) in s.iter().zip(&cell.users).enumerate() {
        if !(v >= 0.0 && v <= u.request) {
            return Err(Error::InvalidConfig(format!("s[{i}] = {v} outside [0, {}]", u.request)));
        }
    }
    Ok(())
}

fn frequencies_bounds(cell: &CellProblem, mode: FrequencyMode) -> (f64, f64) {
    match mode {
        FrequencyMode::Scaled => (cell.compute.f_user_max, cell.compute.f_mec_max),
        FrequencyMode::Fixed { f_user, f_mec } => (f_user, f_mec),
    }
}

/// A latency-feasible point built without any dual information, or `None`
/// when no allocation can meet the budget at this `s`.
pub fn heuristic_primal(cell: &CellProblem, s: &[f64], mode: FrequencyMode) -> Option<Allocation> {
    let k = cell.len();
    let cc = &cell.compute;
    let td = cc.latency;
    let (fu_top, fm_top) = frequencies_bounds(cell, mode);
    let offloading = s.iter().filter(|&&v| v > 0.0).count().max(1) as f64;
    let fm_share = match mode {
        FrequencyMode::Scaled => (cc.f_mec_max / offloading).max(cc.f_mec_min),
        FrequencyMode::Fixed { f_mec, .. } => f_mec,
    };
    let _ = fm_top;
    let mut alloc = Allocation {
        s: s.to_vec(),
        t_u: vec![0.0; k],
        t_d: vec![0.0; k],
        f_u: vec![0.0; k],
        f_m: vec![0.0; k],
        t1: 0.0,
        t2: 0.0,
        t3: 0.0,
    };
    let mut t2: f64 = 0.0;
    for i in 0..k {
        if s[i] > 0.0 {
            alloc.f_m[i] = fm_share;
            t2 = t2.max(cc.cycles_mec * s[i] / fm_share);
        }
    }
    let rest = td - t2;
    if s.iter().any(|&v| v > 0.0) && !(rest > 0.0) {
        return None;
    }
    for i in 0..k {
        let q = cell.users[i].request - s[i];
        let local = if q > 0.0 { cc.cycles_user * q / fu_top } else { 0.0 };
        if !(local < td) && (q > 0.0) {
            return None;
        }
        if s[i] > 0.0 {
            let room = td - local;
            if !(room > 0.0) {
                return None;
            }
            alloc.t_u[i] = (0.5 * rest).min(room);
        }
    }
    alloc.tighten_phases(cell);
    for i in 0..k {
        if s[i] > 0.0 {
            alloc.t_d[i] = rest - alloc.t1;
        }
    }
    fit_user_freqs(cell, &mut alloc, mode);
    alloc.tighten_phases(cell);
    Some(alloc)
}

fn fit_user_freqs(cell: &CellProblem, alloc: &mut Allocation, mode: FrequencyMode) {
    let cc = &cell.compute;
    for i in 0..alloc.len() {
        let q = cell.users[i].request - alloc.s[i];
        alloc.f_u[i] = match mode {
            FrequencyMode::Fixed { f_user, .. } => f_user,
            FrequencyMode::Scaled if q > 0.0 => {
                (cc.cycles_user * q / (cc.latency - alloc.t_u[i])).clamp(cc.f_user_min, cc.f_user_max)
            }
            FrequencyMode::Scaled => cc.f_user_min,
        };
    }
}

/// Turn a Lagrangian minimiser into an exactly feasible allocation by
/// shrinking transmit times and raising user frequencies where needed.
pub fn repair(cell: &CellProblem, alloc: &Allocation, mode: FrequencyMode) -> Option<Allocation> {
    let cc = &cell.compute;
    let td = cc.latency;
    let mut a = alloc.clone();
    if let FrequencyMode::Scaled = mode {
        let total: f64 = (0..a.len()).filter(|&i| a.s[i] > 0.0).map(|i| a.f_m[i]).sum();
        if total > cc.f_mec_max {
            let r = cc.f_mec_max / total;
            for i in 0..a.len() {
                if a.s[i] > 0.0 {
                    a.f_m[i] = (a.f_m[i] * r).max(cc.f_mec_min);
                }
            }
            let total: f64 = (0..a.len()).filter(|&i| a.s[i] > 0.0).map(|i| a.f_m[i]).sum();
            if total > cc.f_mec_max * (1.0 + 1e-12) {
                return None;
            }
        }
    }
    a.tighten_phases(cell);
    let rest = td - a.t2;
    if a.t1 + a.t3 > rest {
        if !(rest > 0.0) {
            return None;
        }
        let r = rest / (a.t1 + a.t3);
        for i in 0..a.len() {
            a.t_u[i] *= r;
            a.t_d[i] *= r;
        }
    }
    for i in 0..a.len() {
        let q = cell.users[i].request - a.s[i];
        if q <= 0.0 {
            continue;
        }
        let top = match mode {
            FrequencyMode::Scaled => cc.f_user_max,
            FrequencyMode::Fixed { f_user, .. } => f_user,
        };
        let need = cc.cycles_user * q / (td - a.t_u[i]);
        if a.t_u[i] < td && need <= a.f_u[i] {
            continue;
        }
        if a.t_u[i] < td && need <= top && matches!(mode, FrequencyMode::Scaled) {
            a.f_u[i] = need.max(cc.f_user_min);
        } else {
            let room = td - cc.cycles_user * q / top;
            if !(room > 0.0) || (a.s[i] <= 0.0 && room < 0.0) {
                return None;
            }
            if a.s[i] > 0.0 {
                a.t_u[i] = a.t_u[i].min(room);
            }
            a.f_u[i] = top;
        }
    }
    a.tighten_phases(cell);
    Some(a)
}

/// Best response of every user to fixed phase budgets taken from `alloc`.
///
/// The server share shrinks to the smallest frequency meeting `T2`, the
/// downlink uses all of `T3`, and the uplink time and local frequency solve
/// a one-dimensional convex problem bounded by `T1` and the latency budget.
pub fn polish(cell: &CellProblem, alloc: &Allocation, mode: FrequencyMode) -> Option<Allocation> {
    let cc = &cell.compute;
    let td = cc.latency;
    let mut a = alloc.clone();
    a.tighten_phases(cell);
    let t2 = a.t2;
    let rest = td - t2;
    if a.s.iter().any(|&v| v > 0.0) {
        if !(rest > 0.0) || !(a.t1 + a.t3 > 0.0) {
            return None;
        }
        let r = rest / (a.t1 + a.t3);
        a.t1 *= r;
        a.t3 *= r;
    }
    let mut f_m_total = 0.0;
    for i in 0..a.len() {
        let s = a.s[i];
        let q = cell.users[i].request - s;
        if s > 0.0 {
            a.t_d[i] = a.t3;
            if let FrequencyMode::Scaled = mode {
                a.f_m[i] = if t2 > 0.0 {
                    (cc.cycles_mec * s / t2).clamp(cc.f_mec_min, cc.f_mec_max)
                } else {
                    a.f_m[i]
                };
            }
            f_m_total += a.f_m[i];
        }
        let top = match mode {
            FrequencyMode::Scaled => cc.f_user_max,
            FrequencyMode::Fixed { f_user, .. } => f_user,
        };
        if q <= 0.0 {
            if s > 0.0 {
                a.t_u[i] = a.t1;
            }
            continue;
        }
        let hi = td - cc.cycles_user * q / top;
        if !(hi > 0.0) && s > 0.0 || hi < 0.0 {
            return None;
        }
        if s <= 0.0 {
            a.f_u[i] = match mode {
                FrequencyMode::Scaled => (cc.cycles_user * q / td).max(cc.f_user_min),
                FrequencyMode::Fixed { f_user, .. } => f_user,
            };
            continue;
        }
        let t_hi = a.t1.min(hi);
        let t = match mode {
            FrequencyMode::Scaled => best_uplink_time(cell, i, s, q, t_hi),
            FrequencyMode::Fixed { .. } => t_hi,
        };
        a.t_u[i] = t;
        if let FrequencyMode::Scaled = mode {
            a.f_u[i] = (cc.cycles_user * q / (td - t)).clamp(cc.f_user_min, cc.f_user_max);
        }
    }
    if f_m_total > cc.f_mec_max * (1.0 + 1e-12) {
        return None;
    }
    a.tighten_phases(cell);
    Some(a)
}

/// Minimise uplink plus local energy over the uplink time in `(0, t_hi]`,
/// with the local frequency as low as the latency budget allows.
fn best_uplink_time(cell: &CellProblem, i: usize, s: f64, q: f64, t_hi: f64) -> f64 {
    use std::f64::consts::LN_2;
    let cc = &cell.compute;
    let a1 = cell.ul_coeff(i);
    let nb = cell.ul_bps();
    let cq = cc.cycles_user * q;
    // Derivative of a1 t (2^(s/(nb t)) - 1) + kappa c q f(t)^2, f = cq/(Td - t).
    let deriv = |t: f64| -> f64 {
        let x = s / (nb * t) * LN_2;
        let tx = a1 * (x.exp_m1() - x * x.exp());
        let f = cq / (cc.latency - t);
        let local = if f > cc.f_user_min {
            2.0 * cc.kappa_user * cq * f * f / (cc.latency - t)
        } else {
            0.0
        };
        tx + local
    };
    if deriv(t_hi) <= 0.0 {
        return t_hi;
    }
    let mut lo = t_hi * 1e-9;
    let mut hi = t_hi;
    if deriv(lo) >= 0.0 {
        return lo;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

struct Scaling {
    energy: f64,
    units: Vec<f64>,
}

impl Scaling {
    fn new(cell: &CellProblem, energy: f64) -> Self {
        let k = cell.len();
        let td = cell.compute.latency;
        let mut units = vec![energy / td; 4 * k + 2];
        units[1] = energy / FREQ_UNIT;
        Self { energy, units }
    }
}

/// Solve the fixed-`s` subproblem.
pub fn solve_inner(
    cell: &CellProblem,
    s: &[f64],
    mode: FrequencyMode,
    cfg: &InnerConfig,
    warm_start: Option<&DualPoint>,
) -> Result<InnerSolution> {
    check_inputs(cell, s)?;
    let k = cell.len();
    let full = 4 * k + 2;
    let Some(start) = heuristic_primal(cell, s, mode) else {
        return Ok(infeasible_solution(cell, s, mode));
    };
    let (e0, _) = evaluate(&start, cell);
    let scale = Scaling::new(cell, e0.objective.max(1e-30));

    let active = active_coords(cell, s, mode);
    let n = active.len();
    let center: Vec<f64> = match warm_start {
        Some(d) => {
            let v = d.to_vec();
            active.iter().map(|&j| (v[j] / scale.units[j]).max(1e-6)).collect()
        }
        None => vec![1.0; n],
    };
    let mut ell = Ellipsoid::ball(center, cfg.radius);
    let max_iters = cfg.max_iters.unwrap_or(200 * n * n);
    let stall_limit = 10 * n * n;

    let mut dual_full = vec![0.0; full];
    let mut dual = DualPoint::zeros(k);
    let mut minimizer = best_alloc_placeholder(k);
    let mut recovered = best_alloc_placeholder(k);
    let mut slack = vec![0.0; full];
    let mut best_dual = DualPoint::zeros(k);
    let mut best_g = f64::NEG_INFINITY;
    let mut last_g = f64::NAN;
    let mut best_alloc = start;
    let mut best_ub = e0.objective;
    let mut consecutive_feas = 0usize;
    let mut trace = Vec::new();
    let mut buf = Vec::with_capacity(n);
    let mut a = vec![0.0; n];
    let mut status = InnerStatus::IterationCap;
    let mut stop = StopReason::IterationCap;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        // Dual feasibility: cut away the most negative coordinate.
        let (jmin, xmin) = ell
            .center
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, x)| if x < acc.1 { (j, x) } else { acc });
        if xmin < 0.0 {
            consecutive_feas += 1;
            a.iter_mut().for_each(|v| *v = 0.0);
            a[jmin] = -1.0;
            let depth = -xmin / ell.half_width(jmin).max(f64::MIN_POSITIVE);
            if cfg.trace {
                trace.push(InnerTraceRow {
                    iteration: iterations,
                    dual_value: f64::NAN,
                    best_dual_value: best_g,
                    best_primal_value: best_ub,
                    volume_proxy: ell.volume_proxy(),
                    max_violation: f64::NAN,
                    feasibility_cut: true,
                });
            }
            if ell.cut(&a, depth, &mut buf) == CutResult::Degenerate {
                status = InnerStatus::Converged;
                stop = StopReason::Degenerate;
                break;
            }
            if consecutive_feas >= stall_limit {
                status = InnerStatus::InfeasibleCutStall;
                stop = StopReason::Stall;
                break;
            }
            continue;
        }
        consecutive_feas = 0;
        for (p, &j) in active.iter().enumerate() {
            dual_full[j] = ell.center[p] * scale.units[j];
        }
        dual.fill_from_slice(&dual_full);
        dual::lagrangian_minimizer_into(cell, s, &dual, mode, &mut minimizer);
        let g = lagrangian(cell, &minimizer, &dual);
        last_g = g;
        dual::subgradient_into(cell, &minimizer, &mut slack);
        if g > best_g {
            best_g = g;
            best_dual.clone_from(&dual);
        }
        // Primal candidates are costlier than a cut; refresh them every n steps.
        let refresh = iterations % n == 0 || iterations == 1;
        if refresh {
            recovered.clone_from(&minimizer);
            recovered.tighten_phases(cell);
            for candidate in [polish(cell, &recovered, mode), repair(cell, &recovered, mode)]
                .into_iter()
                .flatten()
            {
                let (e, _) = evaluate(&candidate, cell);
                if e.objective < best_ub {
                    best_ub = e.objective;
                    best_alloc = candidate;
                }
            }
        }
        let mut sub_norm = 0.0;
        for (p, &j) in active.iter().enumerate() {
            a[p] = -slack[j] * scale.units[j] / scale.energy;
            sub_norm += a[p] * a[p];
        }
        if cfg.trace {
            let viol = active.iter().map(|&j| slack[j]).fold(0.0, f64::max);
            trace.push(InnerTraceRow {
                iteration: iterations,
                dual_value: g,
                best_dual_value: best_g,
                best_primal_value: best_ub,
                volume_proxy: ell.volume_proxy(),
                max_violation: viol,
                feasibility_cut: false,
            });
        }
        if refresh && cfg.gap_tol > 0.0 && best_ub - best_g <= cfg.gap_tol * best_ub.abs() {
            status = InnerStatus::Converged;
            stop = StopReason::DualityGap;
            break;
        }
        if sub_norm == 0.0 {
            status = InnerStatus::Converged;
            stop = StopReason::ZeroSubgradient;
            break;
        }
        let depth = match cfg.cut {
            CutKind::Shallow => -1.0 / (2.0 * n as f64),
            CutKind::Central => 0.0,
            CutKind::Deep => {
                let apa = quad(&ell, &a);
                ((best_g - g) / scale.energy / apa.sqrt()).max(0.0)
            }
        };
        if ell.cut(&a, depth, &mut buf) == CutResult::Degenerate {
            status = InnerStatus::Converged;
            stop = StopReason::Degenerate;
            break;
        }
        if ell.volume_proxy() <= cfg.volume_tol {
            status = InnerStatus::Converged;
            stop = StopReason::Volume;
            break;
        }
    }

    let rel_gap = if best_ub != 0.0 {
        (best_ub - best_g) / best_ub.abs()
    } else {
        0.0
    };
    Ok(InnerSolution {
        alloc: best_alloc,
        dual: best_dual,
        dual_value: last_g,
        best_dual_value: best_g,
        primal_value: best_ub,
        rel_gap,
        iterations,
        status,
        stop,
        trace,
    })
}

fn best_alloc_placeholder(k: usize) -> Allocation {
    Allocation {
        s: vec![0.0; k],
        t_u: vec![0.0; k],
        t_d: vec![0.0; k],
        f_u: vec![0.0; k],
        f_m: vec![0.0; k],
        t1: 0.0,
        t2: 0.0,
        t3: 0.0,
    }
}

fn quad(ell: &Ellipsoid, a: &[f64]) -> f64 {
    let n = ell.dim();
    let mut total = 0.0;
    for i in 0..n {
        let row = &ell.shape[i * n..(i + 1) * n];
        total += a[i] * row.iter().zip(a).map(|(p, x)| p * x).sum::<f64>();
    }
    total
}

/// Best-effort allocation for an `s` that cannot meet the latency budget:
/// every CPU at full speed and the remaining time split between the links.
fn infeasible_solution(cell: &CellProblem, s: &[f64], mode: FrequencyMode) -> InnerSolution {
    let k = cell.len();
    let cc = &cell.compute;
    let (fu, fm) = frequencies_bounds(cell, mode);
    let offloading = s.iter().filter(|&&v| v > 0.0).count().max(1) as f64;
    let fm = match mode {
        FrequencyMode::Scaled => (fm / offloading).max(cc.f_mec_min),
        FrequencyMode::Fixed { .. } => fm,
    };
    let mut alloc = Allocation {
        s: s.to_vec(),
        t_u: vec![0.0; k],
        t_d: vec![0.0; k],
        f_u: vec![fu; k],
        f_m: vec![0.0; k],
        t1: 0.0,
        t2: 0.0,
        t3: 0.0,
    };
    let t2 = (0..k)
        .filter(|&i| s[i] > 0.0)
        .map(|i| cc.cycles_mec * s[i] / fm)
        .fold(0.0, f64::max);
    let rest = (cc.latency - t2).max(0.1 * cc.latency);
    for i in 0..k {
        if s[i] > 0.0 {
            alloc.f_m[i] = fm;
            alloc.t_u[i] = 0.5 * rest;
            alloc.t_d[i] = 0.5 * rest;
        }
    }
    alloc.tighten_phases(cell);
    let (e, _) = evaluate(&alloc, cell);
    InnerSolution {
        alloc,
        dual: DualPoint::zeros(k),
        dual_value: f64::NAN,
        best_dual_value: f64::NAN,
        primal_value: e.objective,
        rel_gap: f64::NAN,
        iterations: 0,
        status: InnerStatus::Infeasible,
        stop: StopReason::Infeasible,
        trace: Vec::new(),
    }
}
