//! Latency-aware descent over the offloaded bits.

use mimo_mec::harness::draw_cell;
use mimo_mec::outer::{backtracking_search, initial_split, step_direction, LATENCY_TOL};
use mimo_mec::phymodel::{objective_grad_s, surrogate_user};
use mimo_mec::{
    build_scenario, draw_channel, solve_inner, CellProblem, CsiMode, FrequencyMode, InnerConfig, Method, OuterConfig,
    ScenarioConfig, Termination,
};

fn default_cell(u: f64, td: Option<f64>) -> CellProblem {
    draw_cell(&ScenarioConfig::default(), 1, 0, Some(u), td, CsiMode::Perfect).unwrap()
}

fn assert_feasible(cell: &CellProblem, sol: &mimo_mec::OuterSolution) {
    let td = cell.compute.latency;
    assert!(sol.timing.t_total <= td * (1.0 + LATENCY_TOL), "{} > {td}", sol.timing.t_total);
    assert!(sol.timing.violations.max_constraint <= 1e-6, "{:?}", sol.timing.violations);
    for (i, u) in cell.users.iter().enumerate() {
        assert!((0.0..=u.request).contains(&sol.alloc.s[i]));
    }
    let f_sum: f64 = sol.alloc.f_m.iter().sum();
    assert!(f_sum <= cell.compute.f_mec_max * (1.0 + 1e-6));
}

fn assert_trace_nonincreasing(sol: &mimo_mec::OuterSolution) {
    for w in sol.trace.windows(2) {
        assert!(w[1].objective <= w[0].objective * (1.0 + 1e-9), "{} after {}", w[1].objective, w[0].objective);
    }
}

#[test]
fn zero_gradient_gives_zero_step() {
    for method in [Method::Gradient, Method::Newton] {
        assert_eq!(step_direction(&[0.0, 0.0], &[1.0, 2.0], method, 1e12), vec![0.0, 0.0]);
    }
    assert_eq!(step_direction(&[2.0], &[4.0], Method::Newton, 1e12), vec![-0.5]);
    assert_eq!(step_direction(&[2.0], &[4.0], Method::Gradient, 3.0), vec![-6.0]);
    // Users at the boundary have no curvature; Newton falls back to the gradient.
    assert_eq!(step_direction(&[2.0], &[f64::INFINITY], Method::Newton, 3.0), vec![-6.0]);
}

#[test]
fn newton_solves_a_quadratic_in_one_step() {
    let (h, target, s) = (3.5, 12.0, 40.0);
    let g = h * (s - target);
    let d = step_direction(&[g], &[h], Method::Newton, 1.0)[0];
    assert!((s + d - target).abs() < 1e-12);
    // Newton moves no further than the gradient step scaled by the largest curvature.
    let gd = step_direction(&[g], &[h], Method::Gradient, 1.0)[0];
    assert!(d.abs() <= gd.abs() / h + 1e-12);
}

#[test]
fn backtracking_decreases_the_surrogate() {
    let cell = default_cell(50e3, None);
    let s = initial_split(&cell, 0.6, FrequencyMode::Scaled);
    let sol = solve_inner(&cell, &s, FrequencyMode::Scaled, &InnerConfig::default(), None).unwrap();
    let g = objective_grad_s(&sol.alloc, &cell);
    for i in 0..cell.len() {
        let d = -1e12 * g[i];
        let t = backtracking_search(&cell, &sol.alloc, i, g[i], d, 0.3, 0.7);
        assert!(t > 0.0);
        let cand = (s[i] + t * d).clamp(0.0, cell.users[i].request);
        assert!(surrogate_user(&cell, &sol.alloc, i, cand) < surrogate_user(&cell, &sol.alloc, i, s[i]));
    }
}

#[test]
fn backtracking_clips_at_zero() {
    // All-local computing is cheapest at small requests, so a huge step
    // toward zero is clipped there and accepted.
    let cell = default_cell(10e3, None);
    let s = vec![5e3; cell.len()];
    let sol = solve_inner(&cell, &s, FrequencyMode::Scaled, &InnerConfig::default(), None).unwrap();
    let g = objective_grad_s(&sol.alloc, &cell);
    assert!(g[0] > 0.0);
    let t = backtracking_search(&cell, &sol.alloc, 0, g[0], -1e9, 0.3, 0.7);
    assert_eq!(t, 1.0);
    assert!(surrogate_user(&cell, &sol.alloc, 0, 0.0) < surrogate_user(&cell, &sol.alloc, 0, 5e3));
    assert_eq!(backtracking_search(&cell, &sol.alloc, 0, g[0], 0.0, 0.3, 0.7), 0.0);
}

#[test]
fn small_requests_stay_local() {
    let cell = default_cell(10e3, None);
    let sol = mimo_mec::outer::solve(&cell, &OuterConfig::default()).unwrap();
    assert_eq!(sol.termination, Termination::BoundarySZero);
    assert!(sol.alloc.s.iter().all(|&s| s == 0.0));
    assert!(sol.timing.t_total <= cell.compute.latency);
    assert_eq!(sol.energy.e_mec, 0.0);
    assert_feasible(&cell, &sol);
    assert_trace_nonincreasing(&sol);
}

#[test]
fn large_requests_offload_about_sixty_percent() {
    let cell = default_cell(70e3, None);
    let sol = mimo_mec::outer::solve(&cell, &OuterConfig::default()).unwrap();
    let pct = 100.0 * sol.offloaded_fraction(&cell);
    assert!((50.0..=70.0).contains(&pct), "{pct}");
    assert_eq!(sol.termination, Termination::LatencyBinding);
    let td = cell.compute.latency;
    assert!((sol.timing.t_total - td).abs() <= LATENCY_TOL * td);
    assert_feasible(&cell, &sol);
    assert_trace_nonincreasing(&sol);
}

#[test]
fn loose_latency_keeps_data_local() {
    for td in [15e-3, 20e-3] {
        let cell = default_cell(20e3, Some(td));
        let sol = mimo_mec::outer::solve(&cell, &OuterConfig::default()).unwrap();
        assert!(sol.alloc.s.iter().all(|&s| s == 0.0), "T_d = {td}: {:?}", sol.alloc.s);
    }
}

#[test]
fn result_does_not_depend_on_the_start() {
    let cell = default_cell(20e3, None);
    let objectives: Vec<f64> = [0.3, 0.6, 0.9]
        .into_iter()
        .map(|f| {
            let cfg = OuterConfig {
                s_init_fraction: f,
                ..OuterConfig::default()
            };
            mimo_mec::outer::solve(&cell, &cfg).unwrap().energy.objective
        })
        .collect();
    for o in &objectives {
        assert!((o - objectives[0]).abs() <= 2e-3 * objectives[0], "{objectives:?}");
    }
}

#[test]
fn newton_needs_fewer_outer_iterations() {
    let cell = default_cell(20e3, None);
    let run = |method| {
        let cfg = OuterConfig {
            method,
            ..OuterConfig::default()
        };
        mimo_mec::outer::solve(&cell, &cfg).unwrap()
    };
    let (gd, nt) = (run(Method::Gradient), run(Method::Newton));
    assert!(nt.outer_iters < gd.outer_iters, "{} vs {}", nt.outer_iters, gd.outer_iters);
    assert!((gd.energy.objective - nt.energy.objective).abs() <= 1e-3 * nt.energy.objective);
    assert_trace_nonincreasing(&gd);
}

#[test]
fn atypical_setting_is_flagged() {
    let mut cfg = ScenarioConfig::single_user(3.0, 20e3);
    cfg.radio.shadow_std_db = 0.0;
    cfg.compute.weight = 1e-9;
    let scn = build_scenario(&cfg, 0).unwrap();
    let cell = CellProblem::new(&scn, &draw_channel(&scn, 0, CsiMode::Perfect), 0).unwrap();
    let sol = mimo_mec::outer::solve(&cell, &OuterConfig::default()).unwrap();
    assert_eq!(sol.termination, Termination::CaseIIUnsupported);
    assert_eq!(sol.alloc.s, cell.requests());
}

#[test]
fn invalid_settings_are_rejected() {
    let cell = default_cell(20e3, None);
    for cfg in [
        OuterConfig {
            s_init_fraction: 1.0,
            ..OuterConfig::default()
        },
        OuterConfig {
            backtrack_alpha: 0.6,
            ..OuterConfig::default()
        },
        OuterConfig {
            backtrack_beta: 1.0,
            ..OuterConfig::default()
        },
    ] {
        assert!(mimo_mec::outer::solve(&cell, &cfg).is_err());
    }
    assert!("newton".parse::<Method>().is_ok() && "gd".parse::<Method>().is_ok());
    assert!("sgd".parse::<Method>().is_err());
}
