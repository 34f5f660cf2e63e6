//! Lagrangian algebra for the fixed-`s` subproblem: closed-form minimisers,
//! the dual function and its subgradient.

use std::f64::consts::LN_2;

use crate::phymodel::Allocation;
use crate::scenario::CellProblem;
use crate::special_math::{cubic_positive_root, w0_branch_offset, CubicCoeffs};

/// How CPU frequencies are treated by the subproblem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrequencyMode {
    /// User and server frequencies are optimised.
    Scaled,
    /// Frequencies are pinned: every user CPU at `f_user` and every
    /// offloading user's server share at `f_mec`.
    Fixed { f_user: f64, f_mec: f64 },
}

impl FrequencyMode {
    /// User CPUs at their maximum, server split equally among `K` users.
    pub fn fixed_default(cell: &CellProblem) -> Self {
        Self::Fixed {
            f_user: cell.compute.f_user_max,
            f_mec: cell.compute.f_mec_max / cell.len().max(1) as f64,
        }
    }
}

/// Dual variables. The multipliers of the epigraph reformulation are fixed
/// at `-1`, `1 - w` and `w` and do not appear here.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPoint {
    /// Total latency `T1 + T2 + T3 <= T_d`.
    pub lambda1: f64,
    /// Server capacity `sum f_m <= f_mec_max`.
    pub lambda5: f64,
    /// `t_u,i <= T1`.
    pub beta: Vec<f64>,
    /// `c q_i / f_u,i + t_u,i <= T_d`.
    pub xi: Vec<f64>,
    /// `d_m s_i / f_m,i <= T2`.
    pub theta: Vec<f64>,
    /// `t_d,i <= T3`.
    pub phi: Vec<f64>,
}

impl DualPoint {
    pub fn zeros(k: usize) -> Self {
        Self {
            lambda1: 0.0,
            lambda5: 0.0,
            beta: vec![0.0; k],
            xi: vec![0.0; k],
            theta: vec![0.0; k],
            phi: vec![0.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Flatten as `[λ1, λ5, β.., ξ.., θ.., φ..]`, length `4K + 2`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.lambda1, self.lambda5];
        v.extend(&self.beta);
        v.extend(&self.xi);
        v.extend(&self.theta);
        v.extend(&self.phi);
        v
    }

    /// Inverse of [`DualPoint::to_vec`].
    pub fn from_slice(v: &[f64]) -> Self {
        assert!(v.len() >= 2 && (v.len() - 2) % 4 == 0, "dual vector length must be 4K + 2");
        let k = (v.len() - 2) / 4;
        Self {
            lambda1: v[0],
            lambda5: v[1],
            beta: v[2..2 + k].to_vec(),
            xi: v[2 + k..2 + 2 * k].to_vec(),
            theta: v[2 + 2 * k..2 + 3 * k].to_vec(),
            phi: v[2 + 3 * k..2 + 4 * k].to_vec(),
        }
    }

    /// Overwrite from a flat vector laid out as in [`DualPoint::to_vec`].
    pub fn fill_from_slice(&mut self, v: &[f64]) {
        let k = self.len();
        assert_eq!(v.len(), 4 * k + 2, "dual vector length must be 4K + 2");
        self.lambda1 = v[0];
        self.lambda5 = v[1];
        self.beta.copy_from_slice(&v[2..2 + k]);
        self.xi.copy_from_slice(&v[2 + k..2 + 2 * k]);
        self.theta.copy_from_slice(&v[2 + 2 * k..2 + 3 * k]);
        self.phi.copy_from_slice(&v[2 + 3 * k..2 + 4 * k]);
    }

    pub fn is_nonnegative(&self) -> bool {
        self.to_vec().iter().all(|&x| x >= 0.0)
    }
}

/// Lagrangian minimiser over `t_u` for one user: the Lambert-W time.
/// Returns the latency budget when the unconstrained minimiser lies beyond it.
pub fn uplink_time(cell: &CellProblem, i: usize, s: f64, beta_plus_xi: f64) -> f64 {
    let td = cell.compute.latency;
    if s <= 0.0 {
        return 0.0;
    }
    let y = beta_plus_xi / ((1.0 - cell.compute.weight) * cell.ul_coeff(i));
    let v = w0_branch_offset(y);
    let t = s * LN_2 / (cell.ul_bps() * v);
    if v > 0.0 && t < td {
        t
    } else {
        td
    }
}

/// Lagrangian minimiser over `t_d` for one user.
pub fn downlink_time(cell: &CellProblem, i: usize, s: f64, phi: f64) -> f64 {
    let td = cell.compute.latency;
    if s <= 0.0 {
        return 0.0;
    }
    let rc = &cell.radio;
    let y = phi / (cell.compute.weight * rc.ap_power * cell.dl_coeff(i));
    let v = w0_branch_offset(y);
    let t = rc.output_ratio * s * LN_2 / (rc.bandwidth * v);
    if v > 0.0 && t < td {
        t
    } else {
        td
    }
}

/// Lagrangian minimiser over the user CPU frequency.
pub fn user_freq(cell: &CellProblem, xi: f64) -> f64 {
    let cc = &cell.compute;
    (xi / (2.0 * (1.0 - cc.weight) * cc.kappa_user))
        .cbrt()
        .clamp(cc.f_user_min, cc.f_user_max)
}

/// Lagrangian minimiser over the server frequency share.
pub fn mec_freq(cell: &CellProblem, s: f64, theta: f64, lambda5: f64) -> f64 {
    let cc = &cell.compute;
    let cf = CubicCoeffs {
        a: 2.0 * cc.weight * cc.kappa_mec * cc.cycles_mec * s,
        b: lambda5,
        c: 0.0,
        d: -theta * cc.cycles_mec * s,
    };
    cubic_positive_root(cf)
        .unwrap_or(0.0)
        .clamp(cc.f_mec_min, cc.f_mec_max)
}

/// Phase budgets minimising the Lagrangian's `T` terms over `[0, T_d]`.
/// Returns the three coefficients and the chosen budgets.
fn phase_terms(dual: &DualPoint, td: f64, maxima: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let coef = [
        dual.lambda1 - dual.beta.iter().sum::<f64>(),
        dual.lambda1 - dual.theta.iter().sum::<f64>(),
        dual.lambda1 - dual.phi.iter().sum::<f64>(),
    ];
    let mut t = [0.0; 3];
    for j in 0..3 {
        t[j] = if coef[j] < 0.0 {
            td
        } else if coef[j] > 0.0 {
            0.0
        } else {
            maxima[j].min(td)
        };
    }
    (coef, t)
}

/// Lagrangian minimiser for a given dual point. The returned allocation
/// carries the phase budgets that minimise the Lagrangian, which are the
/// ones the subgradient needs; [`primal_from_dual`] replaces them by the
/// per-user maxima.
pub fn lagrangian_minimizer(cell: &CellProblem, s: &[f64], dual: &DualPoint, mode: FrequencyMode) -> Allocation {
    let k = cell.len();
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
    lagrangian_minimizer_into(cell, s, dual, mode, &mut alloc);
    alloc
}

/// In-place form of [`lagrangian_minimizer`]; `alloc` must have `K` users.
pub fn lagrangian_minimizer_into(
    cell: &CellProblem,
    s: &[f64],
    dual: &DualPoint,
    mode: FrequencyMode,
    alloc: &mut Allocation,
) {
    let k = cell.len();
    let cc = &cell.compute;
    alloc.s.copy_from_slice(s);
    let mut maxima = [0.0f64; 3];
    for i in 0..k {
        let si = s[i];
        let q = cell.users[i].request - si;
        alloc.f_u[i] = match mode {
            FrequencyMode::Scaled if q > 0.0 => user_freq(cell, dual.xi[i]),
            FrequencyMode::Scaled => cc.f_user_min,
            FrequencyMode::Fixed { f_user, .. } => f_user,
        };
        alloc.t_u[i] = 0.0;
        alloc.t_d[i] = 0.0;
        alloc.f_m[i] = 0.0;
        if si > 0.0 {
            alloc.t_u[i] = uplink_time(cell, i, si, dual.beta[i] + dual.xi[i]);
            alloc.t_d[i] = downlink_time(cell, i, si, dual.phi[i]);
            alloc.f_m[i] = match mode {
                FrequencyMode::Scaled => mec_freq(cell, si, dual.theta[i], dual.lambda5),
                FrequencyMode::Fixed { f_mec, .. } => f_mec,
            };
            maxima[0] = maxima[0].max(alloc.t_u[i]);
            maxima[1] = maxima[1].max(cc.cycles_mec * si / alloc.f_m[i]);
            maxima[2] = maxima[2].max(alloc.t_d[i]);
        }
    }
    let (_, t) = phase_terms(dual, cc.latency, maxima);
    alloc.t1 = t[0];
    alloc.t2 = t[1];
    alloc.t3 = t[2];
}

/// Closed-form primal point for a dual point, with phase budgets set to the
/// per-user maxima.
pub fn primal_from_dual(cell: &CellProblem, s: &[f64], dual: &DualPoint, mode: FrequencyMode) -> Allocation {
    let mut alloc = lagrangian_minimizer(cell, s, dual, mode);
    alloc.tighten_phases(cell);
    alloc
}

/// The Lagrangian at `alloc`, with the weighted energies entering once.
pub fn lagrangian(cell: &CellProblem, alloc: &Allocation, dual: &DualPoint) -> f64 {
    let cc = &cell.compute;
    let rc = &cell.radio;
    let w = cc.weight;
    let td = cc.latency;
    let mut total = dual.lambda1 * (alloc.t1 + alloc.t2 + alloc.t3 - td);
    let mut f_m_sum = 0.0;
    for i in 0..alloc.len() {
        let s = alloc.s[i];
        let q = (cell.users[i].request - s).max(0.0);
        let f_u = alloc.f_u[i];
        let t_l = if q > 0.0 { cc.cycles_user * q / f_u } else { 0.0 };
        total += (1.0 - w) * cc.kappa_user * cc.cycles_user * q * f_u * f_u;
        total += dual.xi[i] * (t_l + alloc.t_u[i] - td);
        total -= dual.beta[i] * alloc.t1 + dual.theta[i] * alloc.t2 + dual.phi[i] * alloc.t3;
        if s > 0.0 {
            let (t_u, t_d, f_m) = (alloc.t_u[i], alloc.t_d[i], alloc.f_m[i]);
            let e_off = cell.ul_coeff(i) * t_u * (s / (cell.ul_bps() * t_u) * LN_2).exp_m1();
            let e_dl = rc.ap_power
                * cell.dl_coeff(i)
                * t_d
                * (rc.output_ratio * s / (rc.bandwidth * t_d) * LN_2).exp_m1();
            let e_oc = cc.kappa_mec * f_m * f_m * cc.cycles_mec * s;
            total += (1.0 - w) * e_off + w * (e_dl + e_oc);
            total += dual.beta[i] * t_u + dual.theta[i] * cc.cycles_mec * s / f_m + dual.phi[i] * t_d;
            f_m_sum += f_m;
        }
    }
    total + dual.lambda5 * (f_m_sum - cc.f_mec_max)
}

/// Dual function value: the Lagrangian at its minimiser.
pub fn dual_value(cell: &CellProblem, s: &[f64], dual: &DualPoint, mode: FrequencyMode) -> f64 {
    let alloc = lagrangian_minimizer(cell, s, dual, mode);
    lagrangian(cell, &alloc, dual)
}

/// Constraint slacks at `alloc`, which form a subgradient of the dual
/// function when `alloc` is the Lagrangian minimiser. Layout matches
/// [`DualPoint::to_vec`].
pub fn subgradient(cell: &CellProblem, alloc: &Allocation) -> Vec<f64> {
    let mut g = vec![0.0; 4 * alloc.len() + 2];
    subgradient_into(cell, alloc, &mut g);
    g
}

/// In-place form of [`subgradient`].
pub fn subgradient_into(cell: &CellProblem, alloc: &Allocation, g: &mut [f64]) {
    let k = alloc.len();
    let cc = &cell.compute;
    let td = cc.latency;
    g[0] = alloc.t1 + alloc.t2 + alloc.t3 - td;
    let mut f_m_sum = 0.0;
    for i in 0..k {
        let s = alloc.s[i];
        let q = (cell.users[i].request - s).max(0.0);
        let t_l = if q > 0.0 { cc.cycles_user * q / alloc.f_u[i] } else { 0.0 };
        g[2 + i] = alloc.t_u[i] - alloc.t1;
        g[2 + k + i] = t_l + alloc.t_u[i] - td;
        let t_m = if s > 0.0 { cc.cycles_mec * s / alloc.f_m[i] } else { 0.0 };
        g[2 + 2 * k + i] = t_m - alloc.t2;
        g[2 + 3 * k + i] = alloc.t_d[i] - alloc.t3;
        if s > 0.0 {
            f_m_sum += alloc.f_m[i];
        }
    }
    g[1] = f_m_sum - cc.f_mec_max;
}
