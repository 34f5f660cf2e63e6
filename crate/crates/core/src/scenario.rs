//! Network scenarios: geometry, constants, large-scale fading draws and the
//! interference-plus-noise powers that stay fixed while the solvers run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, dbm_to_watts};

/// Radio parameters as written in a scenario file (dB/dBm where customary).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub bandwidth_hz: f64,
    pub antennas: u32,
    pub gap_ul: f64,
    pub gap_dl: f64,
    pub noise_ap_dbm: f64,
    pub noise_ut_dbm: f64,
    pub ap_power_dbm: f64,
    pub ut_power_max_dbm: f64,
    pub output_ratio: f64,
    pub pathloss_exp: f64,
    pub shadow_std_db: f64,
    /// Coherence interval in samples. Defaults to `bandwidth_hz * latency_s`.
    pub coherence_samples: Option<f64>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 5e6,
            antennas: 100,
            gap_ul: 1.25,
            gap_dl: 1.25,
            noise_ap_dbm: -127.0,
            noise_ut_dbm: -122.0,
            ap_power_dbm: 46.0,
            ut_power_max_dbm: 23.0,
            output_ratio: 2.0,
            pathloss_exp: 2.2,
            shadow_std_db: 2.7,
            coherence_samples: None,
        }
    }
}

/// Computing parameters, SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeConfig {
    /// Effective switched capacitance of a user CPU (J s^2 per cycle).
    pub user_cap: f64,
    pub user_cycles_per_bit: f64,
    /// Hardware constant of the edge server (J s^2 per cycle).
    pub mec_cap: f64,
    pub mec_cycles_per_bit: f64,
    pub f_user_min_hz: f64,
    pub f_user_max_hz: f64,
    pub f_mec_min_hz: f64,
    pub f_mec_max_hz: f64,
    pub weight: f64,
    pub latency_s: f64,
}

impl Default for ComputeConfig {
    fn default() -> Self {
        Self {
            user_cap: 0.5e-32,
            user_cycles_per_bit: 1000.0,
            mec_cap: 5e-32,
            mec_cycles_per_bit: 500.0,
            f_user_min_hz: 60e6,
            f_user_max_hz: 1.8e9,
            f_mec_min_hz: 2.2e9,
            f_mec_max_hz: 24.0 * 3.4e9,
            weight: 1e-3,
            latency_s: 20e-3,
        }
    }
}

/// An explicitly placed user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub x: f64,
    pub y: f64,
    pub cell: usize,
    pub request_bits: Option<f64>,
}

/// Geometry. Without explicit positions, APs sit at the centres of a square
/// grid of cells and users are dropped uniformly inside their own cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub area_m: f64,
    pub aps_per_side: usize,
    pub users_per_cell: usize,
    pub min_distance_m: f64,
    pub aps: Option<Vec<[f64; 2]>>,
    pub users: Option<Vec<UserSpec>>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            area_m: 20.0,
            aps_per_side: 2,
            users_per_cell: 4,
            min_distance_m: 3.0,
            aps: None,
            users: None,
        }
    }
}

/// Full scenario description, the schema of the TOML scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Default per-user request in bits.
    pub request_bits: f64,
    /// Cells sharing pilots with each cell. `None` means every other cell.
    pub contaminating_sets: Option<Vec<Vec<usize>>>,
    pub layout: LayoutConfig,
    pub radio: RadioConfig,
    pub compute: ComputeConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            request_bits: 20e3,
            contaminating_sets: None,
            layout: LayoutConfig::default(),
            radio: RadioConfig::default(),
            compute: ComputeConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Parse a TOML scenario file body.
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Single AP at the origin serving one user at `distance_m`.
    pub fn single_user(distance_m: f64, request_bits: f64) -> Self {
        let mut cfg = Self {
            request_bits,
            ..Self::default()
        };
        cfg.layout = LayoutConfig {
            area_m: 2.0 * distance_m.max(1.0) + 2.0,
            aps_per_side: 1,
            users_per_cell: 1,
            min_distance_m: distance_m.min(cfg.layout.min_distance_m),
            aps: Some(vec![[0.0, 0.0]]),
            users: Some(vec![UserSpec {
                x: distance_m,
                y: 0.0,
                cell: 0,
                request_bits: None,
            }]),
        };
        cfg
    }
}

/// Radio constants in SI units.
#[derive(Clone, Debug, PartialEq)]
pub struct RadioConstants {
    pub bandwidth: f64,
    pub antennas: f64,
    pub gap_ul: f64,
    pub gap_dl: f64,
    pub pilot_overhead: f64,
    pub coherence: f64,
    pub pilot_len: f64,
    pub noise_ap: f64,
    pub noise_ut: f64,
    pub ap_power: f64,
    pub ut_power_max: f64,
    pub output_ratio: f64,
    pub pathloss_exp: f64,
    pub shadow_std_db: f64,
}

/// Computing constants in SI units.
#[derive(Clone, Debug, PartialEq)]
pub struct ComputeConstants {
    pub kappa_user: f64,
    pub cycles_user: f64,
    pub kappa_mec: f64,
    pub cycles_mec: f64,
    pub f_user_min: f64,
    pub f_user_max: f64,
    pub f_mec_min: f64,
    pub f_mec_max: f64,
    pub weight: f64,
    pub latency: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccessPoint {
    pub pos: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct User {
    pub pos: [f64; 2],
    pub cell: usize,
    /// Index of the user inside its cell, which is also its pilot index.
    pub slot: usize,
    pub request: f64,
}

/// A validated, immutable deployment.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkScenario {
    pub aps: Vec<AccessPoint>,
    pub users: Vec<User>,
    /// `cells[l][i]` is the index in `users` of user `i` of cell `l`.
    pub cells: Vec<Vec<usize>>,
    pub contaminating: Vec<Vec<usize>>,
    pub radio: RadioConstants,
    pub compute: ComputeConstants,
    pub area_m: f64,
    pub min_distance_m: f64,
}

/// Channel-state model used to form the estimate gains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsiMode {
    Perfect,
    PilotContaminated,
}

impl std::str::FromStr for CsiMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(Self::Perfect),
            "pilot-contaminated" | "contaminated" => Ok(Self::PilotContaminated),
            other => Err(Error::InvalidConfig(format!("unknown csi mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for CsiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Perfect => "perfect",
            Self::PilotContaminated => "pilot-contaminated",
        })
    }
}

/// Large-scale statistics of one channel draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// `beta[l][u]`: gain between AP `l` and user `u` (index into `users`).
    pub beta: Vec<Vec<f64>>,
    /// Mean-square estimate gain of each user's home link.
    pub gamma_hat: Vec<f64>,
    /// Uplink interference-plus-noise power per user (W).
    pub sigma1_sq: Vec<f64>,
    /// Downlink interference-plus-noise power per user (W).
    pub sigma2_sq: Vec<f64>,
    pub csi_mode: CsiMode,
}

/// Deterministic 64-bit seed for stream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(master) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidScenario(format!("{name} must be positive, got {v}")))
    }
}

fn convert(cfg: &ScenarioConfig, users_per_cell: usize) -> Result<(RadioConstants, ComputeConstants)> {
    let r = &cfg.radio;
    let c = &cfg.compute;
    positive("bandwidth_hz", r.bandwidth_hz)?;
    positive("latency_s", c.latency_s)?;
    if r.antennas == 0 {
        return Err(Error::InvalidScenario("antennas must be at least 1".into()));
    }
    if !(r.gap_ul >= 1.0 && r.gap_dl >= 1.0) {
        return Err(Error::InvalidScenario("capacity gaps must be >= 1".into()));
    }
    positive("output_ratio", r.output_ratio)?;
    positive("pathloss_exp", r.pathloss_exp)?;
    if !(r.shadow_std_db >= 0.0) {
        return Err(Error::InvalidScenario("shadow_std_db must be >= 0".into()));
    }
    for (name, v) in [
        ("user_cap", c.user_cap),
        ("user_cycles_per_bit", c.user_cycles_per_bit),
        ("mec_cap", c.mec_cap),
        ("mec_cycles_per_bit", c.mec_cycles_per_bit),
        ("f_user_min_hz", c.f_user_min_hz),
        ("f_mec_min_hz", c.f_mec_min_hz),
    ] {
        positive(name, v)?;
    }
    if !(c.f_user_min_hz < c.f_user_max_hz) || !(c.f_mec_min_hz < c.f_mec_max_hz) {
        return Err(Error::InvalidScenario("frequency bounds must satisfy min < max".into()));
    }
    if !(0.0..=1.0).contains(&c.weight) {
        return Err(Error::InvalidScenario(format!("weight must lie in [0, 1], got {}", c.weight)));
    }
    let coherence = r.coherence_samples.unwrap_or(r.bandwidth_hz * c.latency_s);
    let pilot_len = users_per_cell as f64;
    if !(coherence > pilot_len) {
        return Err(Error::InvalidScenario(format!(
            "coherence interval {coherence} must exceed the pilot length {pilot_len}"
        )));
    }
    let radio = RadioConstants {
        bandwidth: r.bandwidth_hz,
        antennas: r.antennas as f64,
        gap_ul: r.gap_ul,
        gap_dl: r.gap_dl,
        pilot_overhead: (coherence - pilot_len) / coherence,
        coherence,
        pilot_len,
        noise_ap: dbm_to_watts(r.noise_ap_dbm),
        noise_ut: dbm_to_watts(r.noise_ut_dbm),
        ap_power: dbm_to_watts(r.ap_power_dbm),
        ut_power_max: dbm_to_watts(r.ut_power_max_dbm),
        output_ratio: r.output_ratio,
        pathloss_exp: r.pathloss_exp,
        shadow_std_db: r.shadow_std_db,
    };
    let compute = ComputeConstants {
        kappa_user: c.user_cap,
        cycles_user: c.user_cycles_per_bit,
        kappa_mec: c.mec_cap,
        cycles_mec: c.mec_cycles_per_bit,
        f_user_min: c.f_user_min_hz,
        f_user_max: c.f_user_max_hz,
        f_mec_min: c.f_mec_min_hz,
        f_mec_max: c.f_mec_max_hz,
        weight: c.weight,
        latency: c.latency_s,
    };
    Ok((radio, compute))
}

/// Build and validate a scenario. Random user drops use `seed`.
pub fn build_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<NetworkScenario> {
    let lay = &cfg.layout;
    positive("area_m", lay.area_m)?;
    if !(lay.min_distance_m >= 0.0) {
        return Err(Error::InvalidScenario("min_distance_m must be >= 0".into()));
    }
    let aps: Vec<AccessPoint> = match &lay.aps {
        Some(list) => list.iter().map(|&pos| AccessPoint { pos }).collect(),
        None => {
            if lay.aps_per_side == 0 {
                return Err(Error::InvalidScenario("aps_per_side must be >= 1".into()));
            }
            let side = lay.area_m / lay.aps_per_side as f64;
            let mut v = Vec::new();
            for row in 0..lay.aps_per_side {
                for col in 0..lay.aps_per_side {
                    v.push(AccessPoint {
                        pos: [(col as f64 + 0.5) * side, (row as f64 + 0.5) * side],
                    });
                }
            }
            v
        }
    };
    if aps.is_empty() {
        return Err(Error::InvalidScenario("at least one AP is required".into()));
    }
    let n_cells = aps.len();
    positive("request_bits", cfg.request_bits)?;

    let mut users = Vec::new();
    match &lay.users {
        Some(list) => {
            for (k, u) in list.iter().enumerate() {
                if u.cell >= n_cells {
                    return Err(Error::InvalidScenario(format!("user {k} names unknown cell {}", u.cell)));
                }
                let inside = |x: f64| x.is_finite() && x.abs() <= lay.area_m;
                if !inside(u.x) || !inside(u.y) {
                    return Err(Error::InvalidScenario(format!("user {k} lies outside the area")));
                }
                let d = distance([u.x, u.y], aps[u.cell].pos);
                if d < lay.min_distance_m || d <= 0.0 {
                    return Err(Error::InvalidScenario(format!(
                        "user {k} is {d} m from its AP, below the {} m minimum",
                        lay.min_distance_m
                    )));
                }
                users.push(User {
                    pos: [u.x, u.y],
                    cell: u.cell,
                    slot: 0,
                    request: u.request_bits.unwrap_or(cfg.request_bits),
                });
            }
        }
        None => {
            if lay.aps.is_some() {
                return Err(Error::InvalidScenario("explicit APs need explicit users".into()));
            }
            if lay.users_per_cell == 0 {
                return Err(Error::InvalidScenario("users_per_cell must be >= 1".into()));
            }
            let side = lay.area_m / lay.aps_per_side as f64;
            if lay.min_distance_m >= 0.5 * side {
                return Err(Error::InvalidScenario("min_distance_m leaves no room inside a cell".into()));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 0x5ce7a210));
            for (l, ap) in aps.iter().enumerate() {
                let x0 = ap.pos[0] - 0.5 * side;
                let y0 = ap.pos[1] - 0.5 * side;
                for _ in 0..lay.users_per_cell {
                    let pos = loop {
                        let p = [x0 + side * rng.random::<f64>(), y0 + side * rng.random::<f64>()];
                        if distance(p, ap.pos) >= lay.min_distance_m && distance(p, ap.pos) > 0.0 {
                            break p;
                        }
                    };
                    users.push(User {
                        pos,
                        cell: l,
                        slot: 0,
                        request: cfg.request_bits,
                    });
                }
            }
        }
    }
    for (k, u) in users.iter().enumerate() {
        if !(u.request.is_finite() && u.request > 0.0) {
            return Err(Error::InvalidScenario(format!("user {k} has non-positive request {}", u.request)));
        }
    }

    let mut cells = vec![Vec::new(); n_cells];
    for (k, u) in users.iter_mut().enumerate() {
        u.slot = cells[u.cell].len();
        cells[u.cell].push(k);
    }
    let per_cell = cells.iter().map(Vec::len).max().unwrap_or(0);
    if per_cell == 0 {
        return Err(Error::InvalidScenario("scenario has no users".into()));
    }

    let contaminating = match &cfg.contaminating_sets {
        Some(sets) => {
            if sets.len() != n_cells {
                return Err(Error::InvalidScenario("one contaminating set per cell is required".into()));
            }
            for (l, set) in sets.iter().enumerate() {
                if set.iter().any(|&q| q >= n_cells || q == l) {
                    return Err(Error::InvalidScenario(format!(
                        "contaminating set of cell {l} must list other existing cells"
                    )));
                }
            }
            sets.clone()
        }
        None => (0..n_cells)
            .map(|l| (0..n_cells).filter(|&q| q != l).collect())
            .collect(),
    };

    let (radio, compute) = convert(cfg, per_cell)?;
    Ok(NetworkScenario {
        aps,
        users,
        cells,
        contaminating,
        radio,
        compute,
        area_m: lay.area_m,
        min_distance_m: lay.min_distance_m,
    })
}

impl NetworkScenario {
    /// Users per cell, which is also the pilot length.
    pub fn users_per_cell(&self) -> usize {
        self.cells.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Overwrite every request with `bits`.
    pub fn set_requests(&mut self, bits: f64) -> Result<()> {
        positive("request_bits", bits)?;
        for u in &mut self.users {
            u.request = bits;
        }
        Ok(())
    }

    /// Overwrite the latency budget.
    pub fn set_latency(&mut self, latency: f64) -> Result<()> {
        positive("latency", latency)?;
        self.compute.latency = latency;
        Ok(())
    }

    fn user_in_slot(&self, cell: usize, slot: usize) -> Option<usize> {
        self.cells[cell].get(slot).copied()
    }
}

/// Draw shadowing for every link and assemble estimate gains and
/// interference-plus-noise powers.
///
/// Interfering users transmit at full power and interfering APs split their
/// power equally, so only other cells contribute interference.
pub fn draw_channel(scn: &NetworkScenario, seed: u64, csi_mode: CsiMode) -> ChannelRealization {
    let rc = &scn.radio;
    let n_cells = scn.aps.len();
    let n_users = scn.users.len();
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 0xc4a77e1));
    let mut beta = vec![vec![0.0; n_users]; n_cells];
    for (l, ap) in scn.aps.iter().enumerate() {
        for (k, u) in scn.users.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let shadow = if rc.shadow_std_db > 0.0 {
                db_to_linear(rc.shadow_std_db * z)
            } else {
                1.0
            };
            beta[l][k] = shadow * distance(u.pos, ap.pos).powf(-rc.pathloss_exp);
        }
    }

    let p = rc.ut_power_max;
    let tau = rc.pilot_len;
    // Estimate gain at AP `l` for the user in pilot slot `slot` of cell `q`.
    let estimate = |l: usize, q: usize, slot: usize| -> f64 {
        let Some(k) = scn.user_in_slot(q, slot) else {
            return 0.0;
        };
        match csi_mode {
            CsiMode::Perfect => beta[l][k],
            CsiMode::PilotContaminated => {
                let mut denom = rc.noise_ap + tau * p * beta[l][k];
                for &c in &scn.contaminating[l] {
                    if c != q {
                        if let Some(kc) = scn.user_in_slot(c, slot) {
                            denom += tau * p * beta[l][kc];
                        }
                    }
                }
                if q != l {
                    if let Some(kh) = scn.user_in_slot(l, slot) {
                        denom += tau * p * beta[l][kh];
                    }
                }
                tau * p * beta[l][k] * beta[l][k] / denom
            }
        }
    };

    let mut gamma_hat = vec![0.0; n_users];
    let mut sigma1_sq = vec![0.0; n_users];
    let mut sigma2_sq = vec![0.0; n_users];
    for (k, u) in scn.users.iter().enumerate() {
        let l = u.cell;
        gamma_hat[k] = estimate(l, l, u.slot);

        let mut s1 = rc.noise_ap;
        let mut s2 = rc.noise_ut;
        for q in (0..n_cells).filter(|&q| q != l) {
            for &kq in &scn.cells[q] {
                s1 += beta[l][kq] * p;
            }
            // Equal power split: the coefficients of AP q sum to one.
            s2 += rc.ap_power * beta[q][k];
        }
        if csi_mode == CsiMode::PilotContaminated {
            let eta = 1.0 / scn.cells.iter().map(Vec::len).max().unwrap_or(1) as f64;
            for &q in &scn.contaminating[l] {
                if scn.user_in_slot(q, u.slot).is_some() {
                    s1 += rc.antennas * estimate(l, q, u.slot) * p;
                    s2 += rc.antennas * rc.ap_power * estimate(q, l, u.slot) * eta;
                }
            }
        }
        sigma1_sq[k] = s1;
        sigma2_sq[k] = s2;
    }
    ChannelRealization {
        beta,
        gamma_hat,
        sigma1_sq,
        sigma2_sq,
        csi_mode,
    }
}

/// Per-user link summary for one home cell.
#[derive(Clone, Debug, PartialEq)]
pub struct UserLink {
    pub request: f64,
    pub gamma_hat: f64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub distance: f64,
}

/// Everything the solvers need about one cell: its users and the constants.
#[derive(Clone, Debug, PartialEq)]
pub struct CellProblem {
    pub users: Vec<UserLink>,
    pub radio: RadioConstants,
    pub compute: ComputeConstants,
}

impl CellProblem {
    /// Extract home cell `cell` from a scenario and channel draw.
    pub fn new(scn: &NetworkScenario, ch: &ChannelRealization, cell: usize) -> Result<Self> {
        let members = scn
            .cells
            .get(cell)
            .ok_or_else(|| Error::InvalidScenario(format!("no cell {cell}")))?;
        let users = members
            .iter()
            .map(|&k| UserLink {
                request: scn.users[k].request,
                gamma_hat: ch.gamma_hat[k],
                sigma1_sq: ch.sigma1_sq[k],
                sigma2_sq: ch.sigma2_sq[k],
                distance: distance(scn.users[k].pos, scn.aps[cell].pos),
            })
            .collect();
        Ok(Self {
            users,
            radio: scn.radio.clone(),
            compute: scn.compute.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Uplink power per unit of `2^rate - 1`: Γ1 σ1² / (N γ̂), in W.
    pub fn ul_coeff(&self, i: usize) -> f64 {
        let u = &self.users[i];
        self.radio.gap_ul * u.sigma1_sq / (self.radio.antennas * u.gamma_hat)
    }

    /// Downlink power coefficient per unit of `2^rate - 1`: Γ2 σ2² / (P N γ̂).
    pub fn dl_coeff(&self, i: usize) -> f64 {
        let u = &self.users[i];
        self.radio.gap_dl * u.sigma2_sq / (self.radio.ap_power * self.radio.antennas * u.gamma_hat)
    }

    /// Uplink bits per second per unit rate exponent: ν B.
    pub fn ul_bps(&self) -> f64 {
        self.radio.pilot_overhead * self.radio.bandwidth
    }

    /// Requests in bits.
    pub fn requests(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.request).collect()
    }

    /// Replace every request.
    pub fn with_requests(mut self, bits: &[f64]) -> Self {
        for (u, &b) in self.users.iter_mut().zip(bits) {
            u.request = b;
        }
        self
    }
}
