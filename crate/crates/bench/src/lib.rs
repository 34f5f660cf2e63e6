//! Shared fixtures for the solver benchmarks under `benches/`.

use mimo_mec::harness::draw_cell;
use mimo_mec::{CellProblem, CsiMode, ScenarioConfig};

/// Home cell of draw 0 with `users` users requesting `request_bits` each.
pub fn fixture_cell(users: usize, request_bits: f64) -> CellProblem {
    let mut cfg = ScenarioConfig::default();
    cfg.layout.users_per_cell = users;
    draw_cell(&cfg, 1, 0, Some(request_bits), None, CsiMode::Perfect).expect("default scenario is valid")
}

/// Split offloading `fraction` of every request.
pub fn split(cell: &CellProblem, fraction: f64) -> Vec<f64> {
    cell.requests().iter().map(|u| fraction * u).collect()
}
