//! Rates, powers, times and energies of the three-phase offloading model.
//!
//! Users with `s_i = 0` follow one convention throughout: their transmit
//! times are zero, they draw no power and hold no server share, and they are
//! left out of the phase maxima.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::scenario::CellProblem;

/// A full primal point for one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    /// Offloaded bits per user.
    pub s: Vec<f64>,
    /// Uplink transmission time per user (s).
    pub t_u: Vec<f64>,
    /// Downlink transmission time per user (s).
    pub t_d: Vec<f64>,
    /// User CPU frequency (Hz).
    pub f_u: Vec<f64>,
    /// Server frequency share (Hz); zero for users that offload nothing.
    pub f_m: Vec<f64>,
    /// Phase budgets (s).
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl Allocation {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Set the phase budgets to the per-user maxima.
    pub fn tighten_phases(&mut self, cell: &CellProblem) {
        let dm = cell.compute.cycles_mec;
        let mut t1: f64 = 0.0;
        let mut t2: f64 = 0.0;
        let mut t3: f64 = 0.0;
        for i in 0..self.len() {
            if self.s[i] > 0.0 {
                t1 = t1.max(self.t_u[i]);
                t2 = t2.max(dm * self.s[i] / self.f_m[i]);
                t3 = t3.max(self.t_d[i]);
            }
        }
        self.t1 = t1;
        self.t2 = t2;
        self.t3 = t3;
    }
}

/// Energy terms per user and the weighted objective.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyBreakdown {
    pub e_off: Vec<f64>,
    pub e_lc: Vec<f64>,
    pub e_oc: Vec<f64>,
    pub e_dl: Vec<f64>,
    /// Total user-side energy.
    pub e_user: f64,
    /// Total server-side energy.
    pub e_mec: f64,
    /// `(1 - w) e_user + w e_mec`.
    pub objective: f64,
}

/// Soft constraint violations found by [`evaluate`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Violations {
    /// Users whose uplink power exceeds the terminal maximum.
    pub power_cap: Vec<bool>,
    /// The downlink power coefficients sum above one.
    pub eta_sum: bool,
    /// Worst relative violation among the latency, bound and capacity
    /// constraints of the problem.
    pub max_constraint: f64,
}

impl Violations {
    pub fn any_power(&self) -> bool {
        self.power_cap.iter().any(|&b| b) || self.eta_sum
    }
}

/// Timing per user and phase.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    /// Local computing time per user.
    pub t_l: Vec<f64>,
    /// Server computing time per user.
    pub t_m: Vec<f64>,
    /// `t_u + t_L` per user.
    pub round_trip: Vec<f64>,
    /// Phase maxima.
    pub phase1: f64,
    pub phase2: f64,
    pub phase3: f64,
    /// `max(max_i round_trip, phase1 + phase2 + phase3)`.
    pub t_total: f64,
    /// `T_d - t_total`.
    pub slack: f64,
    /// Total time when each uplink is stretched to respect the power cap.
    pub t_total_power_capped: f64,
    pub violations: Violations,
}

impl TimingReport {
    /// The latency budget is exceeded, either directly or once uplink powers
    /// are held to the terminal maximum.
    pub fn latency_violated(&self, latency: f64, rel_tol: f64) -> bool {
        self.t_total.max(self.t_total_power_capped) > latency * (1.0 + rel_tol)
    }
}

fn check_times(s: f64, t: f64) -> Result<()> {
    if s > 0.0 && !(t > 0.0) {
        return Err(Error::Domain(format!("{s} bits need a positive time, got {t}")));
    }
    Ok(())
}

/// Uplink transmit power (W) delivering `s` bits in `t_u` seconds.
pub fn uplink_power(cell: &CellProblem, i: usize, s: f64, t_u: f64) -> Result<f64> {
    check_times(s, t_u)?;
    if s <= 0.0 {
        return Ok(0.0);
    }
    Ok(cell.ul_coeff(i) * (s / (cell.ul_bps() * t_u) * LN_2).exp_m1())
}

/// Downlink power coefficient delivering `output_ratio * s` bits in `t_d` seconds.
pub fn downlink_coeff(cell: &CellProblem, i: usize, s: f64, t_d: f64) -> Result<f64> {
    check_times(s, t_d)?;
    if s <= 0.0 {
        return Ok(0.0);
    }
    let r = cell.radio.output_ratio * s / (cell.radio.bandwidth * t_d);
    Ok(cell.dl_coeff(i) * (r * LN_2).exp_m1())
}

/// Shortest uplink time for `s` bits at the terminal power cap.
pub fn min_uplink_time(cell: &CellProblem, i: usize, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let snr = cell.radio.ut_power_max / cell.ul_coeff(i);
    s / (cell.ul_bps() * snr.ln_1p() / LN_2)
}

/// Energies and times of an allocation. Violations are reported, never raised.
pub fn evaluate(alloc: &Allocation, cell: &CellProblem) -> (EnergyBreakdown, TimingReport) {
    let k = alloc.len();
    let cc = &cell.compute;
    let rc = &cell.radio;
    let w = cc.weight;
    let td = cc.latency;
    let mut e_off = vec![0.0; k];
    let mut e_lc = vec![0.0; k];
    let mut e_oc = vec![0.0; k];
    let mut e_dl = vec![0.0; k];
    let mut t_l = vec![0.0; k];
    let mut t_m = vec![0.0; k];
    let mut round_trip = vec![0.0; k];
    let mut capped_rt = vec![0.0; k];
    let mut power_cap = vec![false; k];
    let mut eta_total = 0.0;
    let (mut p1, mut p2, mut p3, mut p1_capped) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut worst: f64 = 0.0;
    let mut f_m_total = 0.0;

    for i in 0..k {
        let s = alloc.s[i];
        let q = cell.users[i].request - s;
        if s < -1e-9 * cell.users[i].request || q < -1e-9 * cell.users[i].request {
            worst = worst.max((-s).max(-q) / cell.users[i].request);
        }
        let q = q.max(0.0);
        let f_u = alloc.f_u[i];
        e_lc[i] = cc.kappa_user * cc.cycles_user * q * f_u * f_u;
        t_l[i] = if q > 0.0 { cc.cycles_user * q / f_u } else { 0.0 };
        if q > 0.0 {
            worst = worst.max((cc.f_user_min - f_u) / cc.f_user_min).max((f_u - cc.f_user_max) / cc.f_user_max);
        }
        if s > 0.0 {
            let p = uplink_power(cell, i, s, alloc.t_u[i]).unwrap_or(f64::INFINITY);
            let eta = downlink_coeff(cell, i, s, alloc.t_d[i]).unwrap_or(f64::INFINITY);
            power_cap[i] = p > rc.ut_power_max * (1.0 + 1e-9);
            eta_total += eta;
            e_off[i] = p * alloc.t_u[i];
            e_dl[i] = rc.ap_power * eta * alloc.t_d[i];
            let f_m = alloc.f_m[i];
            e_oc[i] = cc.kappa_mec * f_m * f_m * cc.cycles_mec * s;
            t_m[i] = cc.cycles_mec * s / f_m;
            f_m_total += f_m;
            worst = worst
                .max((cc.f_mec_min - f_m) / cc.f_mec_min)
                .max((f_m - cc.f_mec_max) / cc.f_mec_max);
            p1 = p1.max(alloc.t_u[i]);
            p2 = p2.max(t_m[i]);
            p3 = p3.max(alloc.t_d[i]);
            p1_capped = p1_capped.max(alloc.t_u[i].max(min_uplink_time(cell, i, s)));
            round_trip[i] = alloc.t_u[i] + t_l[i];
            capped_rt[i] = alloc.t_u[i].max(min_uplink_time(cell, i, s)) + t_l[i];
        } else {
            round_trip[i] = t_l[i];
            capped_rt[i] = t_l[i];
        }
    }
    worst = worst.max((f_m_total - cc.f_mec_max) / cc.f_mec_max);

    let max_rt = round_trip.iter().copied().fold(0.0, f64::max);
    let t_total = max_rt.max(p1 + p2 + p3);
    let t_total_power_capped = capped_rt.iter().copied().fold(0.0, f64::max).max(p1_capped + p2 + p3);
    // Constraint (c) on the budgets carried by the allocation, and the phase links.
    worst = worst
        .max((alloc.t1 + alloc.t2 + alloc.t3 - td) / td)
        .max((p1 - alloc.t1) / td)
        .max((p2 - alloc.t2) / td)
        .max((p3 - alloc.t3) / td)
        .max((max_rt - td) / td);

    let e_user: f64 = e_off.iter().sum::<f64>() + e_lc.iter().sum::<f64>();
    let e_mec: f64 = e_oc.iter().sum::<f64>() + e_dl.iter().sum::<f64>();
    let energy = EnergyBreakdown {
        e_off,
        e_lc,
        e_oc,
        e_dl,
        e_user,
        e_mec,
        objective: (1.0 - w) * e_user + w * e_mec,
    };
    let timing = TimingReport {
        t_l,
        t_m,
        round_trip,
        phase1: p1,
        phase2: p2,
        phase3: p3,
        t_total,
        slack: td - t_total,
        t_total_power_capped,
        violations: Violations {
            power_cap,
            eta_sum: eta_total > 1.0 + 1e-9,
            max_constraint: worst.max(0.0),
        },
    };
    (energy, timing)
}

/// Weighted objective of user `i` alone, with its times and frequencies held
/// fixed and its offloaded bits replaced by `s`.
pub fn surrogate_user(cell: &CellProblem, alloc: &Allocation, i: usize, s: f64) -> f64 {
    let cc = &cell.compute;
    let w = cc.weight;
    let q = (cell.users[i].request - s).max(0.0);
    let f_u = alloc.f_u[i];
    let local = cc.kappa_user * cc.cycles_user * q * f_u * f_u;
    if s <= 0.0 {
        return (1.0 - w) * local;
    }
    if !(alloc.t_u[i] > 0.0 && alloc.t_d[i] > 0.0) {
        return f64::INFINITY;
    }
    let p = uplink_power(cell, i, s, alloc.t_u[i]).unwrap_or(f64::INFINITY);
    let eta = downlink_coeff(cell, i, s, alloc.t_d[i]).unwrap_or(f64::INFINITY);
    let f_m = mec_freq_or_min(cell, alloc, i);
    let mec = cc.kappa_mec * f_m * f_m * cc.cycles_mec * s + cell.radio.ap_power * eta * alloc.t_d[i];
    (1.0 - w) * (p * alloc.t_u[i] + local) + w * mec
}

fn mec_freq_or_min(cell: &CellProblem, alloc: &Allocation, i: usize) -> f64 {
    if alloc.f_m[i] > 0.0 {
        alloc.f_m[i]
    } else {
        cell.compute.f_mec_min
    }
}

/// The four gradient terms of user `i`: uplink, downlink, server compute and
/// local compute (the last one enters with a minus sign).
pub fn gradient_terms(cell: &CellProblem, alloc: &Allocation, i: usize) -> [f64; 4] {
    let cc = &cell.compute;
    let rc = &cell.radio;
    let w = cc.weight;
    let s = alloc.s[i];
    let (x_u, x_d) = if s > 0.0 && alloc.t_u[i] > 0.0 && alloc.t_d[i] > 0.0 {
        (
            s / (cell.ul_bps() * alloc.t_u[i]),
            rc.output_ratio * s / (rc.bandwidth * alloc.t_d[i]),
        )
    } else {
        (0.0, 0.0)
    };
    let up = (1.0 - w) * cell.ul_coeff(i) * LN_2 / cell.ul_bps() * (x_u * LN_2).exp();
    let down =
        w * rc.ap_power * cell.dl_coeff(i) * rc.output_ratio * LN_2 / rc.bandwidth * (x_d * LN_2).exp();
    let f_m = mec_freq_or_min(cell, alloc, i);
    let server = w * cc.kappa_mec * cc.cycles_mec * f_m * f_m;
    let local = (1.0 - w) * cc.kappa_user * cc.cycles_user * alloc.f_u[i] * alloc.f_u[i];
    [up, down, server, local]
}

/// Per-user derivative of the objective in `s_i` at fixed times and frequencies.
/// Users at `s_i = 0` get the one-sided limit.
pub fn objective_grad_s(alloc: &Allocation, cell: &CellProblem) -> Vec<f64> {
    (0..alloc.len())
        .map(|i| {
            let [a, b, c, d] = gradient_terms(cell, alloc, i);
            a + b + c - d
        })
        .collect()
}

/// Per-user second derivative in `s_i`; infinite for users at `s_i = 0`,
/// whose transmit times vanish.
pub fn objective_hess_s(alloc: &Allocation, cell: &CellProblem) -> Vec<f64> {
    let cc = &cell.compute;
    let rc = &cell.radio;
    let w = cc.weight;
    (0..alloc.len())
        .map(|i| {
            let s = alloc.s[i];
            if !(s > 0.0 && alloc.t_u[i] > 0.0 && alloc.t_d[i] > 0.0) {
                return f64::INFINITY;
            }
            let nb = cell.ul_bps();
            let mu = rc.output_ratio;
            let b = rc.bandwidth;
            let up = (1.0 - w) * cell.ul_coeff(i) * LN_2 * LN_2 / (nb * nb * alloc.t_u[i])
                * (s / (nb * alloc.t_u[i]) * LN_2).exp();
            let down = w * rc.ap_power * cell.dl_coeff(i) * mu * mu * LN_2 * LN_2 / (b * b * alloc.t_d[i])
                * (mu * s / (b * alloc.t_d[i]) * LN_2).exp();
            up + down
        })
        .collect()
}

/// Per-user test that the gradient stays nonnegative as `s_i -> 0`, i.e.
/// that transmission energy per bit is not outweighed by the local
/// computing energy per bit.
pub fn check_typical_condition(cell: &CellProblem, alloc: &Allocation) -> Vec<bool> {
    let mut at_zero = alloc.clone();
    for v in &mut at_zero.s {
        *v = 0.0;
    }
    (0..alloc.len())
        .map(|i| {
            let [a, b, c, d] = gradient_terms(cell, &at_zero, i);
            a + b + c - d >= 0.0
        })
        .collect()
}
