//! Monte-Carlo sweeps over request size, latency budget, scheme and CSI
//! mode, with CSV output and a convergence report for the descent variants.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{solve_binary, solve_fixed_frequency};
use crate::error::{Error, Result};
use crate::outer::{self, Method, OuterConfig, OuterSolution, OuterTraceRow, Termination, LATENCY_TOL};
use crate::phymodel::{evaluate, Allocation};
use crate::scenario::{build_scenario, derive_seed, draw_channel, CellProblem, CsiMode, ScenarioConfig};

/// Schema tag written in the first column of every sweep CSV row.
pub const SWEEP_SCHEMA: &str = "mimo-mec-sweep/1";
/// Schema tag of the convergence CSV.
pub const CONVERGENCE_SCHEMA: &str = "mimo-mec-converge/1";
/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "MIMO_MEC_WORKERS";
/// Cell whose users are optimised in every draw.
pub const HOME_CELL: usize = 0;

/// Allocation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Partial offloading with frequency scaling.
    Partial,
    /// Whole-task offloading, best of all masks.
    Binary,
    /// Partial offloading with pinned frequencies.
    FixedFrequency,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "partial" => Ok(Self::Partial),
            "binary" => Ok(Self::Binary),
            "fixed-frequency" | "fixed" => Ok(Self::FixedFrequency),
            other => Err(Error::InvalidConfig(format!("unknown scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Partial => "partial",
            Self::Binary => "binary",
            Self::FixedFrequency => "fixed-frequency",
        })
    }
}

/// Swept quantity. `Scheme` and `CsiMode` sweeps hold the scenario's
/// request and latency fixed and vary only the listed schemes or modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    /// Request size per user (bit).
    U,
    /// Latency budget (s).
    Td,
    Scheme,
    CsiMode,
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u" => Ok(Self::U),
            "td" | "Td" => Ok(Self::Td),
            "scheme" => Ok(Self::Scheme),
            "csi-mode" | "csi_mode" => Ok(Self::CsiMode),
            other => Err(Error::InvalidConfig(format!("unknown sweep variable `{other}`"))),
        }
    }
}

impl std::fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::U => "u",
            Self::Td => "td",
            Self::Scheme => "scheme",
            Self::CsiMode => "csi-mode",
        })
    }
}

/// Metric columns, in schema order.
pub const METRICS: &[&str] = &[
    "offload_pct",
    "local_pct",
    "t_total",
    "t_total_power_capped",
    "phase1",
    "phase2",
    "phase3",
    "phase1_pct",
    "phase2_pct",
    "phase3_pct",
    "e_off",
    "e_lc",
    "e_oc",
    "e_dl",
    "e_user",
    "e_mec",
    "objective",
    "e_user_pct",
    "e_mec_pct",
    "binding_fraction",
    "violation_fraction",
];

/// A sweep definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    /// Values of `u` (bit) or `Td` (s). Scheme and CSI sweeps use the first
    /// value as the request size, or the scenario's when empty.
    pub grid: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub csi_modes: Vec<CsiMode>,
    pub draws: usize,
    pub seed: u64,
    /// Metric columns to emit; empty means all of [`METRICS`].
    pub outputs: Vec<String>,
    pub outer: OuterConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            variable: SweepVariable::U,
            grid: (1..=7).map(|k| k as f64 * 10e3).collect(),
            schemes: vec![Scheme::Partial],
            csi_modes: vec![CsiMode::Perfect],
            draws: 100,
            seed: 1,
            outputs: Vec::new(),
            outer: OuterConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if matches!(self.variable, SweepVariable::U | SweepVariable::Td) && self.grid.is_empty() {
            return bad("sweep grid is empty".into());
        }
        if self.grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("grid values must be positive".into());
        }
        if self.draws == 0 {
            return bad("draws must be at least 1".into());
        }
        if self.schemes.is_empty() || self.csi_modes.is_empty() {
            return bad("at least one scheme and one CSI mode are needed".into());
        }
        if let Some(m) = self.outputs.iter().find(|m| !METRICS.contains(&m.as_str())) {
            return bad(format!("unknown output metric `{m}`"));
        }
        self.outer.validate()
    }

    fn columns(&self) -> Vec<&'static str> {
        if self.outputs.is_empty() {
            METRICS.to_vec()
        } else {
            METRICS.iter().copied().filter(|m| self.outputs.iter().any(|o| o == m)).collect()
        }
    }
}

/// Outcome of one draw at one sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawRecord {
    pub value: f64,
    pub scheme: Scheme,
    pub csi_mode: CsiMode,
    pub draw: usize,
    /// `Err` carries the message of a failed solve.
    pub outcome: std::result::Result<DrawOutcome, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrawOutcome {
    pub alloc: Allocation,
    /// Requests of the home-cell users.
    pub requests: Vec<f64>,
    pub latency: f64,
    pub termination: Termination,
    pub feasible: bool,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Metric values in [`METRICS`] order.
    pub metrics: Vec<f64>,
}

/// Aggregated sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub scheme: Scheme,
    pub csi_mode: CsiMode,
    /// Means over successful draws, in [`METRICS`] order.
    pub metrics: Vec<f64>,
    pub feasible_fraction: f64,
    pub mean_outer_iters: f64,
    pub mean_inner_iters: f64,
    pub draws: usize,
    pub failed_draws: usize,
    /// Termination counts, `name:count` joined by `;`.
    pub status: String,
}

impl SweepRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        METRICS.iter().position(|m| *m == name).map(|j| self.metrics[j])
    }
}

/// Rows plus the per-draw records behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    pub records: Vec<DrawRecord>,
}

impl SweepResult {
    pub fn row(&self, value: f64, scheme: Scheme, csi_mode: CsiMode) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.value == value && r.scheme == scheme && r.csi_mode == csi_mode)
    }
}

/// Metric vector of one solved draw.
pub fn draw_metrics(cell: &CellProblem, alloc: &Allocation) -> Vec<f64> {
    let (e, t) = evaluate(alloc, cell);
    let td = cell.compute.latency;
    let u: f64 = cell.users.iter().map(|x| x.request).sum();
    let offload = if u > 0.0 { 100.0 * alloc.s.iter().sum::<f64>() / u } else { 0.0 };
    let phases = alloc.t1 + alloc.t2 + alloc.t3;
    let pct = |x: f64| if phases > 0.0 { 100.0 * x / phases } else { 0.0 };
    let w = cell.compute.weight;
    let weighted = (1.0 - w) * e.e_user + w * e.e_mec;
    let share = |x: f64| if weighted > 0.0 { 100.0 * x / weighted } else { 0.0 };
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    vec![
        offload,
        100.0 - offload,
        t.t_total,
        t.t_total_power_capped,
        alloc.t1,
        alloc.t2,
        alloc.t3,
        pct(alloc.t1),
        pct(alloc.t2),
        pct(alloc.t3),
        sum(&e.e_off),
        sum(&e.e_lc),
        sum(&e.e_oc),
        sum(&e.e_dl),
        e.e_user,
        e.e_mec,
        e.objective,
        share((1.0 - w) * e.e_user),
        share(w * e.e_mec),
        f64::from(u8::from((t.t_total - td).abs() <= LATENCY_TOL * td)),
        f64::from(u8::from(t.latency_violated(td, LATENCY_TOL))),
    ]
}

/// Solve one home cell under `scheme`.
pub fn solve_scheme(cell: &CellProblem, scheme: Scheme, cfg: &OuterConfig) -> Result<(OuterSolution, bool)> {
    let td = cell.compute.latency;
    let sol = match scheme {
        Scheme::Partial => outer::solve(cell, cfg)?,
        Scheme::FixedFrequency => solve_fixed_frequency(cell, cfg)?,
        Scheme::Binary => {
            let (assignment, sol) = solve_binary(cell, cfg)?;
            let ok = assignment.feasible;
            return Ok((sol, ok));
        }
    };
    let ok = !matches!(sol.termination, Termination::Infeasible)
        && !sol.timing.latency_violated(td, LATENCY_TOL);
    Ok((sol, ok))
}

/// Home cell of draw `draw`. Geometry and shadowing depend only on
/// `(seed, draw)`, so every sweep point and CSI mode sees the same users.
pub fn draw_cell(
    base: &ScenarioConfig,
    seed: u64,
    draw: usize,
    request: Option<f64>,
    latency: Option<f64>,
    csi_mode: CsiMode,
) -> Result<CellProblem> {
    let mut scn = build_scenario(base, derive_seed(seed, 2 * draw as u64))?;
    if let Some(bits) = request {
        scn.set_requests(bits)?;
    }
    if let Some(td) = latency {
        scn.set_latency(td)?;
    }
    let ch = draw_channel(&scn, derive_seed(seed, 2 * draw as u64 + 1), csi_mode);
    CellProblem::new(&scn, &ch, HOME_CELL)
}

fn run_draw(base: &ScenarioConfig, spec: &SweepSpec, job: &Job) -> DrawRecord {
    let (request, latency) = match spec.variable {
        SweepVariable::Td => (None, Some(job.value)),
        SweepVariable::U | SweepVariable::Scheme | SweepVariable::CsiMode => (Some(job.value), None),
    };
    let outcome = draw_cell(base, spec.seed, job.draw, request, latency, job.csi_mode)
        .and_then(|cell| {
            let (sol, feasible) = solve_scheme(&cell, job.scheme, &spec.outer)?;
            Ok(DrawOutcome {
                metrics: draw_metrics(&cell, &sol.alloc),
                requests: cell.requests(),
                latency: cell.compute.latency,
                alloc: sol.alloc,
                termination: sol.termination,
                feasible,
                outer_iters: sol.outer_iters,
                inner_iters: sol.inner_iters,
            })
        })
        .map_err(|e| e.to_string());
    DrawRecord {
        value: job.value,
        scheme: job.scheme,
        csi_mode: job.csi_mode,
        draw: job.draw,
        outcome,
    }
}

struct Job {
    value: f64,
    scheme: Scheme,
    csi_mode: CsiMode,
    draw: usize,
}

/// Worker count from [`WORKERS_ENV`], defaulting to rayon's choice.
pub fn worker_count() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0)
}

/// Run a sweep. Draws run in parallel; aggregation follows draw order so
/// the output is identical for any worker count.
pub fn run_sweep(spec: &SweepSpec, base: &ScenarioConfig) -> Result<SweepResult> {
    spec.validate()?;
    // Scheme and CSI sweeps run at one request size.
    let mut values: Vec<f64> = match spec.variable {
        SweepVariable::U | SweepVariable::Td => spec.grid.clone(),
        SweepVariable::Scheme | SweepVariable::CsiMode => vec![spec.grid.first().copied().unwrap_or(base.request_bits)],
    };
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut jobs = Vec::new();
    for &value in &values {
        for &scheme in &spec.schemes {
            for &csi_mode in &spec.csi_modes {
                for draw in 0..spec.draws {
                    jobs.push(Job {
                        value,
                        scheme,
                        csi_mode,
                        draw,
                    });
                }
            }
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let records: Vec<DrawRecord> = pool.install(|| jobs.par_iter().map(|j| run_draw(base, spec, j)).collect());

    let mut rows = Vec::new();
    for chunk in records.chunks(spec.draws) {
        rows.push(aggregate(spec.variable, chunk));
    }
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
        records,
    })
}

fn aggregate(variable: SweepVariable, chunk: &[DrawRecord]) -> SweepRow {
    let first = &chunk[0];
    let ok: Vec<&DrawOutcome> = chunk.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let n = ok.len().max(1) as f64;
    let mut metrics = vec![0.0; METRICS.len()];
    for o in &ok {
        for (m, v) in metrics.iter_mut().zip(&o.metrics) {
            *m += v;
        }
    }
    if ok.is_empty() {
        metrics.iter_mut().for_each(|m| *m = f64::NAN);
    } else {
        metrics.iter_mut().for_each(|m| *m /= n);
    }
    let mut status: BTreeMap<String, usize> = BTreeMap::new();
    for r in chunk {
        let key = match &r.outcome {
            Ok(o) => o.termination.to_string(),
            Err(_) => "error".to_string(),
        };
        *status.entry(key).or_default() += 1;
    }
    SweepRow {
        variable,
        value: first.value,
        scheme: first.scheme,
        csi_mode: first.csi_mode,
        metrics,
        feasible_fraction: ok.iter().filter(|o| o.feasible).count() as f64 / chunk.len() as f64,
        mean_outer_iters: ok.iter().map(|o| o.outer_iters as f64).sum::<f64>() / n,
        mean_inner_iters: ok.iter().map(|o| o.inner_iters as f64).sum::<f64>() / n,
        draws: chunk.len(),
        failed_draws: chunk.len() - ok.len(),
        status: status
            .into_iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect::<Vec<_>>()
            .join(";"),
    }
}

/// Write the aggregated rows as CSV.
pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let columns = result.spec.columns();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["schema", "variable", "value", "scheme", "csi_mode"];
    header.extend(columns.iter().copied());
    header.extend([
        "feasible_fraction",
        "mean_outer_iters",
        "mean_inner_iters",
        "draws",
        "failed_draws",
        "status",
    ]);
    w.write_record(&header)?;
    for r in &result.rows {
        let mut rec = vec![
            SWEEP_SCHEMA.to_string(),
            r.variable.to_string(),
            format!("{}", r.value),
            r.scheme.to_string(),
            r.csi_mode.to_string(),
        ];
        for c in &columns {
            rec.push(format!("{}", r.metric(c).expect("column is a known metric")));
        }
        rec.extend([
            format!("{}", r.feasible_fraction),
            format!("{}", r.mean_outer_iters),
            format!("{}", r.mean_inner_iters),
            r.draws.to_string(),
            r.failed_draws.to_string(),
            r.status.clone(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-method summary of a convergence run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub inner_solves: usize,
    pub termination: Termination,
    pub objective: f64,
    /// Share of inner iterations in the combined iteration count.
    pub inner_share: f64,
    /// Coefficient of determination of a line through log suboptimality
    /// against iteration; `None` with fewer than three usable points.
    pub log_linear_r2: Option<f64>,
}

/// Traces and summaries for several descent methods on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub traces: Vec<(Method, Vec<OuterTraceRow>)>,
    pub summaries: Vec<MethodSummary>,
}

impl ConvergenceReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Newton needs fewer outer iterations than gradient descent.
    pub fn newton_faster(&self) -> Option<bool> {
        Some(self.summary(Method::Newton)?.outer_iters < self.summary(Method::Gradient)?.outer_iters)
    }
}

/// R^2 of the least-squares line through `(x, y)`.
pub fn linear_fit_r2(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy * sxy / (sxx * syy))
}

/// Log-linear fit of `objective - final objective` over a trace.
pub fn trace_r2(trace: &[OuterTraceRow]) -> Option<f64> {
    let last = trace.last()?.objective;
    let (x, y): (Vec<f64>, Vec<f64>) = trace
        .iter()
        .filter(|r| r.objective - last > 1e-12 * last.abs())
        .map(|r| (r.iteration as f64, (r.objective - last).ln()))
        .unzip();
    linear_fit_r2(&x, &y)
}

/// Run each method on `cell` and collect traces and iteration counts.
pub fn run_convergence_report(cell: &CellProblem, methods: &[Method], cfg: &OuterConfig) -> Result<ConvergenceReport> {
    let mut traces = Vec::new();
    let mut summaries = Vec::new();
    for &method in methods {
        let sol = outer::solve(cell, &OuterConfig { method, ..cfg.clone() })?;
        summaries.push(MethodSummary {
            method,
            outer_iters: sol.outer_iters,
            inner_iters: sol.inner_iters,
            inner_solves: sol.inner_solves,
            termination: sol.termination,
            objective: sol.energy.objective,
            inner_share: sol.inner_iters as f64 / (sol.inner_iters + sol.outer_iters).max(1) as f64,
            log_linear_r2: trace_r2(&sol.trace),
        });
        traces.push((method, sol.trace));
    }
    Ok(ConvergenceReport { traces, summaries })
}

/// Write every trace row of the report as CSV.
pub fn write_convergence_csv<W: Write>(report: &ConvergenceReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "schema",
        "method",
        "iteration",
        "objective",
        "surrogate",
        "grad_norm",
        "t_total",
        "offloaded_bits",
        "inner_iterations",
    ])?;
    for (method, trace) in &report.traces {
        for r in trace {
            w.write_record([
                CONVERGENCE_SCHEMA.to_string(),
                method.to_string(),
                r.iteration.to_string(),
                format!("{}", r.objective),
                format!("{}", r.surrogate),
                format!("{}", r.grad_norm),
                format!("{}", r.t_total),
                format!("{}", r.s.iter().sum::<f64>()),
                r.inner_iterations.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one sweep-level consistency or trend assertion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrendCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl TrendCheck {
    fn new(name: &str, failures: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            passed: failures.is_empty(),
            detail: if failures.is_empty() {
                "ok".to_string()
            } else {
                failures.join("; ")
            },
        }
    }
}

fn metric_index(name: &str) -> usize {
    METRICS.iter().position(|m| *m == name).expect("known metric")
}

/// Assertions that hold for any correct sweep: value ranges, percentage
/// decompositions, monotone partial-offloading trends and partial
/// offloading never costing more than binary offloading on a shared draw.
pub fn trend_checks(result: &SweepResult) -> Vec<TrendCheck> {
    let mut checks = Vec::new();

    let bad: Vec<String> = result
        .rows
        .iter()
        .filter(|r| !(0.0..=1.0).contains(&r.feasible_fraction))
        .map(|r| format!("{} {}: {}", r.scheme, r.value, r.feasible_fraction))
        .collect();
    checks.push(TrendCheck::new("feasible-fraction-range", bad));

    let (p1, obj, eu) = (metric_index("phase1_pct"), metric_index("objective"), metric_index("e_user_pct"));
    let mut bad = Vec::new();
    for rec in &result.records {
        let Ok(o) = &rec.outcome else { continue };
        let phases: f64 = o.metrics[p1..p1 + 3].iter().sum();
        let shares = o.metrics[eu] + o.metrics[eu + 1];
        let phases_ok = phases == 0.0 || (phases - 100.0).abs() <= 0.01;
        let shares_ok = o.metrics[obj] == 0.0 || (shares - 100.0).abs() <= 0.01;
        if !(phases_ok && shares_ok) {
            bad.push(format!("{} {} draw {}", rec.scheme, rec.value, rec.draw));
        }
    }
    checks.push(TrendCheck::new("percentages-sum-to-100", bad));

    let trend = match result.spec.variable {
        SweepVariable::U => Some(("offload-monotone-in-u", metric_index("offload_pct"))),
        SweepVariable::Td => Some(("local-share-monotone-in-td", metric_index("local_pct"))),
        SweepVariable::Scheme | SweepVariable::CsiMode => None,
    };
    if let Some((name, m)) = trend {
        let mut bad = Vec::new();
        for &csi in &result.spec.csi_modes {
            let series: Vec<&SweepRow> = result
                .rows
                .iter()
                .filter(|r| r.scheme == Scheme::Partial && r.csi_mode == csi)
                .collect();
            for w in series.windows(2) {
                // Means over draws carry a small solver tolerance.
                if w[1].metrics[m] < w[0].metrics[m] - 0.5 {
                    bad.push(format!(
                        "{csi}: {} at {} after {} at {}",
                        w[1].metrics[m], w[1].value, w[0].metrics[m], w[0].value
                    ));
                }
            }
        }
        checks.push(TrendCheck::new(name, bad));
    }

    if result.spec.schemes.contains(&Scheme::Partial) && result.spec.schemes.contains(&Scheme::Binary) {
        let mut binary = BTreeMap::new();
        for rec in result.records.iter().filter(|r| r.scheme == Scheme::Binary) {
            if let Ok(o) = &rec.outcome {
                binary.insert((rec.value.to_bits(), rec.csi_mode.to_string(), rec.draw), o);
            }
        }
        let mut bad = Vec::new();
        for rec in result.records.iter().filter(|r| r.scheme == Scheme::Partial) {
            let (Ok(p), Some(b)) = (
                &rec.outcome,
                binary.get(&(rec.value.to_bits(), rec.csi_mode.to_string(), rec.draw)),
            ) else {
                continue;
            };
            if p.feasible && b.feasible && p.metrics[obj] > b.metrics[obj] * (1.0 + 1e-4) {
                bad.push(format!("{} {} draw {}", rec.csi_mode, rec.value, rec.draw));
            }
        }
        checks.push(TrendCheck::new("partial-not-above-binary", bad));
    }
    checks
}
