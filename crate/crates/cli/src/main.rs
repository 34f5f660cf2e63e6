//! Command-line driver: Monte-Carlo sweeps, convergence reports and single
//! solves, all emitting CSV.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mimo_mec::harness::{draw_cell, solve_scheme, write_convergence_csv, write_sweep_csv};
use mimo_mec::{
    run_convergence_report, run_sweep, trend_checks, CsiMode, Method, OuterConfig, ScenarioConfig, Scheme,
    SweepSpec, SweepVariable,
};

#[derive(Parser)]
#[command(name = "mimo-mec", version, about = "Energy-minimal partial offloading for massive-MIMO edge computing")]
#[command(after_help = "Set MIMO_MEC_WORKERS to bound the number of worker threads.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML scenario file; built-in defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Master seed for geometry, shadowing and channel draws.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV destination; standard output when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Outer descent direction.
    #[arg(long, default_value_t = Method::Newton)]
    method: Method,
    /// Check the built-in assertions and exit nonzero if any fails.
    #[arg(long = "assert")]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one variable over a grid, averaging metrics over channel draws.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Swept variable: u, td, scheme or csi-mode.
        #[arg(long, default_value = "u")]
        variable: SweepVariable,
        /// Grid values in bits (u) or seconds (td); comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [10e3, 20e3, 30e3, 40e3, 50e3, 60e3, 70e3])]
        grid: Vec<f64>,
        /// Schemes: partial, binary, fixed-frequency; comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [Scheme::Partial])]
        scheme: Vec<Scheme>,
        /// CSI modes: perfect, pilot-contaminated; comma separated.
        #[arg(long = "csi-mode", value_delimiter = ',', default_values_t = [CsiMode::Perfect])]
        csi_mode: Vec<CsiMode>,
        /// Channel draws per grid point.
        #[arg(long, default_value_t = 100)]
        draws: usize,
        /// Metric columns to emit; all when omitted.
        #[arg(long, value_delimiter = ',')]
        outputs: Vec<String>,
    },
    /// Compare descent methods on one draw and write their traces.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Per-user request in bits; scenario value when omitted.
        #[arg(long)]
        u: Option<f64>,
        /// Latency budget in seconds; scenario value when omitted.
        #[arg(long)]
        td: Option<f64>,
        /// Draw index.
        #[arg(long, default_value_t = 0)]
        draw: usize,
        /// CSI mode: perfect or pilot-contaminated.
        #[arg(long = "csi-mode", default_value_t = CsiMode::Perfect)]
        csi_mode: CsiMode,
        /// Methods to run; comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [Method::Gradient, Method::Newton])]
        methods: Vec<Method>,
    },
    /// Solve one draw and write the per-user allocation.
    SolveOne {
        #[command(flatten)]
        common: Common,
        /// Per-user request in bits; scenario value when omitted.
        #[arg(long)]
        u: Option<f64>,
        /// Latency budget in seconds; scenario value when omitted.
        #[arg(long)]
        td: Option<f64>,
        /// Draw index.
        #[arg(long, default_value_t = 0)]
        draw: usize,
        /// CSI mode: perfect or pilot-contaminated.
        #[arg(long = "csi-mode", default_value_t = CsiMode::Perfect)]
        csi_mode: CsiMode,
        /// Scheme: partial, binary or fixed-frequency.
        #[arg(long, default_value_t = Scheme::Partial)]
        scheme: Scheme,
    },
}

fn load_scenario(path: Option<&PathBuf>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ScenarioConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => Ok(ScenarioConfig::default()),
    }
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn outer_config(common: &Common) -> OuterConfig {
    OuterConfig {
        method: common.method,
        ..OuterConfig::default()
    }
}

/// Runs the command and returns whether every enabled assertion held.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Sweep {
            common,
            variable,
            grid,
            scheme,
            csi_mode,
            draws,
            outputs,
        } => {
            let base = load_scenario(common.scenario.as_ref())?;
            let spec = SweepSpec {
                variable,
                grid,
                schemes: scheme,
                csi_modes: csi_mode,
                draws,
                seed: common.seed,
                outputs,
                outer: outer_config(&common),
            };
            let result = run_sweep(&spec, &base)?;
            write_sweep_csv(&result, sink(common.output.as_ref())?)?;
            if !common.check {
                return Ok(true);
            }
            let mut ok = true;
            for c in trend_checks(&result) {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(ok)
        }
        Command::Converge {
            common,
            u,
            td,
            draw,
            csi_mode,
            methods,
        } => {
            let base = load_scenario(common.scenario.as_ref())?;
            let cell = draw_cell(&base, common.seed, draw, u, td, csi_mode)?;
            let report = run_convergence_report(&cell, &methods, &outer_config(&common))?;
            write_convergence_csv(&report, sink(common.output.as_ref())?)?;
            for s in &report.summaries {
                eprintln!(
                    "{}: outer {} inner {} solves {} objective {:.6e} inner share {:.4} R^2 {} ({})",
                    s.method,
                    s.outer_iters,
                    s.inner_iters,
                    s.inner_solves,
                    s.objective,
                    s.inner_share,
                    s.log_linear_r2.map_or("n/a".to_string(), |r| format!("{r:.3}")),
                    s.termination
                );
            }
            if !common.check {
                return Ok(true);
            }
            let Some(faster) = report.newton_faster() else {
                bail!("--assert needs both gradient and newton in --methods");
            };
            eprintln!("{} newton-fewer-outer-iterations", if faster { "PASS" } else { "FAIL" });
            Ok(faster)
        }
        Command::SolveOne {
            common,
            u,
            td,
            draw,
            csi_mode,
            scheme,
        } => {
            let base = load_scenario(common.scenario.as_ref())?;
            let cell = draw_cell(&base, common.seed, draw, u, td, csi_mode)?;
            let (sol, feasible) = solve_scheme(&cell, scheme, &outer_config(&common))?;
            let mut w = sink(common.output.as_ref())?;
            writeln!(w, "user,request_bits,offloaded_bits,t_u,t_d,f_u,f_m,e_user,e_mec")?;
            for (i, user) in cell.users.iter().enumerate() {
                let a = &sol.alloc;
                let e = &sol.energy;
                writeln!(
                    w,
                    "{i},{},{},{},{},{},{},{},{}",
                    user.request,
                    a.s[i],
                    a.t_u[i],
                    a.t_d[i],
                    a.f_u[i],
                    a.f_m[i],
                    e.e_off[i] + e.e_lc[i],
                    e.e_oc[i] + e.e_dl[i]
                )?;
            }
            w.flush()?;
            eprintln!(
                "{scheme}: objective {:.6e} J, T_total {:.4e} s, offloaded {:.2}%, {} ({} outer, {} inner iterations)",
                sol.energy.objective,
                sol.timing.t_total,
                100.0 * sol.offloaded_fraction(&cell),
                sol.termination,
                sol.outer_iters,
                sol.inner_iters
            );
            if common.check {
                eprintln!("{} latency-feasible", if feasible { "PASS" } else { "FAIL" });
            }
            Ok(!common.check || feasible)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
