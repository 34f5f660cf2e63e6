//! Comparison schemes: exhaustive binary offloading and partial offloading
//! with frequencies pinned at their defaults.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inner::{solve_inner, FrequencyMode, InnerStatus};
use crate::outer::{self, OuterConfig, OuterSolution, Termination, LATENCY_TOL};
use crate::phymodel::evaluate;
use crate::scenario::CellProblem;

/// Largest number of users enumerated by [`solve_binary`].
pub const MAX_BINARY_USERS: usize = 16;

/// Whole-task offloading decision per user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryAssignment {
    /// `true` means the entire request is offloaded.
    pub offload_mask: Vec<bool>,
    /// `false` when no mask meets the latency budget; the mask with the
    /// smallest overrun is reported instead.
    pub feasible: bool,
}

struct MaskResult {
    mask: u32,
    offloaders: u32,
    objective: f64,
    overrun: f64,
    solution: OuterSolution,
}

fn mask_split(cell: &CellProblem, mask: u32) -> Vec<f64> {
    cell.users
        .iter()
        .enumerate()
        .map(|(i, u)| if mask & (1 << i) != 0 { u.request } else { 0.0 })
        .collect()
}

fn solve_mask(cell: &CellProblem, cfg: &OuterConfig, mask: u32) -> Result<MaskResult> {
    let s = mask_split(cell, mask);
    let sol = solve_inner(cell, &s, FrequencyMode::Scaled, &cfg.inner, None)?;
    let (energy, timing) = evaluate(&sol.alloc, cell);
    let td = cell.compute.latency;
    let mut overrun = timing.t_total.max(timing.t_total_power_capped) - td;
    if sol.status == InnerStatus::Infeasible {
        // Local work alone overruns; measure by the slowest local user.
        overrun = overrun.max(timing.t_l.iter().copied().fold(0.0, f64::max) - td).max(td * 1e-9);
    }
    let termination = if mask == 0 {
        Termination::BoundarySZero
    } else if mask.count_ones() as usize == cell.len() {
        Termination::BoundarySFull
    } else {
        Termination::GradientTolerance
    };
    Ok(MaskResult {
        mask,
        offloaders: mask.count_ones(),
        objective: energy.objective,
        overrun,
        solution: OuterSolution {
            alloc: sol.alloc,
            energy,
            timing,
            trace: Vec::new(),
            termination,
            outer_iters: 0,
            inner_iters: sol.iterations,
            inner_solves: 1,
            inner_status: sol.status,
        },
    })
}

/// Enumerate all `2^K` whole-task masks and keep the feasible one with the
/// least energy, breaking ties toward fewer offloading users.
pub fn solve_binary(cell: &CellProblem, cfg: &OuterConfig) -> Result<(BinaryAssignment, OuterSolution)> {
    let k = cell.len();
    if k > MAX_BINARY_USERS {
        return Err(Error::EnumerationCap(k, MAX_BINARY_USERS));
    }
    let results: Vec<MaskResult> = (0..1u32 << k)
        .into_par_iter()
        .map(|m| solve_mask(cell, cfg, m))
        .collect::<Result<_>>()?;
    let td = cell.compute.latency;
    let feasible = |r: &MaskResult| r.solution.inner_status != InnerStatus::Infeasible && r.overrun <= LATENCY_TOL * td;
    let best = results
        .iter()
        .filter(|r| feasible(r))
        .min_by(|a, b| {
            let tie = (a.objective - b.objective).abs() <= 1e-12 * a.objective.abs().max(b.objective.abs());
            if tie {
                a.offloaders.cmp(&b.offloaders).then(a.mask.cmp(&b.mask))
            } else {
                a.objective.total_cmp(&b.objective)
            }
        })
        .map(|r| r.mask);
    let (mask, ok) = match best {
        Some(m) => (m, true),
        None => {
            let m = results
                .iter()
                .min_by(|a, b| a.overrun.total_cmp(&b.overrun).then(a.offloaders.cmp(&b.offloaders)))
                .map(|r| r.mask)
                .expect("at least the empty mask is enumerated");
            (m, false)
        }
    };
    let mut chosen = results
        .into_iter()
        .find(|r| r.mask == mask)
        .expect("chosen mask is among the results");
    if !ok {
        chosen.solution.termination = Termination::Infeasible;
    }
    let assignment = BinaryAssignment {
        offload_mask: (0..k).map(|i| mask & (1 << i) != 0).collect(),
        feasible: ok,
    };
    Ok((assignment, chosen.solution))
}

/// Partial offloading with every user CPU at its maximum and the server
/// split equally, so only the split and the transmit times are optimised.
pub fn solve_fixed_frequency(cell: &CellProblem, cfg: &OuterConfig) -> Result<OuterSolution> {
    outer::solve_with_mode(cell, cfg, FrequencyMode::fixed_default(cell))
}
