//! Energy-minimal partial computation offloading for multi-user massive-MIMO
//! edge computing.
//!
//! The crate evaluates the three-phase energy and latency model
//! ([`phymodel`]), solves the fixed-split subproblem by dual ellipsoid cuts
//! with closed-form primal recovery ([`inner`]), runs the latency-aware
//! descent over offloaded bits ([`outer`]), and provides binary and
//! fixed-frequency baselines plus Monte-Carlo sweeps ([`baselines`],
//! [`harness`]).

pub mod baselines;
pub mod error;
pub mod harness;
pub mod inner;
pub mod outer;
pub mod phymodel;
pub mod scenario;
pub mod special_math;
pub mod units;

pub use baselines::{solve_binary, solve_fixed_frequency, BinaryAssignment};
pub use error::{Error, Result};
pub use harness::{run_convergence_report, run_sweep, trend_checks, TrendCheck, Scheme, SweepResult, SweepRow, SweepSpec, SweepVariable};
pub use inner::{solve_inner, DualPoint, FrequencyMode, InnerConfig, InnerSolution, InnerStatus};
pub use outer::{Method, OuterConfig, OuterSolution, Termination};
pub use phymodel::{evaluate, Allocation, EnergyBreakdown, TimingReport};
pub use scenario::{
    build_scenario, draw_channel, CellProblem, ChannelRealization, CsiMode, NetworkScenario, ScenarioConfig,
};
