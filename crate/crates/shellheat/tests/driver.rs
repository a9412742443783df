//! Driver-level tests: interpolants, window handoff, slot averages, and the
//! interface-force diagnostics.

mod common;

use approx::assert_relative_eq;
use common::{mini_scenario, uniform_theta, window_of};
use shellheat::diagnostics::{interface_force, interface_power_mismatch};
use shellheat::geometry::CellLabel;
use shellheat::timeloop::{advance_window, run_tau_window, WindowOutcome};
use shellheat::transport::FlowMap;
use shellheat::varstep::{assemble_velocity_step, solve_velocity_step, StepInputs};

#[test]
fn affine_interpolant_hits_endpoints() {
    let scenario = mini_scenario(0.4, 0.2);
    let window = window_of(&scenario);
    let traj = run_tau_window(&scenario, &window).unwrap();
    assert_eq!(traj.outcome, WindowOutcome::Completed);
    let tau = scenario.params.tau;
    for (k, rec) in traj.records.iter().enumerate() {
        let t0 = k as f64 * tau;
        let at_start = traj.eta_affine(t0);
        for (a, b) in at_start.iter().zip(&rec.eta_before) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let at_end = traj.eta_affine(t0 + tau * (1.0 - 1e-12));
        for (a, b) in at_end.iter().zip(&rec.eta_after) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        // piecewise-constant views bracket the slot
        assert_eq!(traj.eta_piecewise(t0 + 0.5 * tau), rec.eta_before.as_slice());
        assert_eq!(
            traj.eta_piecewise_plus(t0 + 0.5 * tau),
            rec.eta_after.as_slice()
        );
    }
}

#[test]
fn slot_averages_satisfy_jensen() {
    // Σ_k τ|β_k|² ≤ ∫|β|² with equality for slot-constant data
    let scenario = mini_scenario(0.5, 0.3);
    let window = window_of(&scenario);
    let w = scenario.surface.gamma.quad_weight();
    let tau = scenario.params.tau;
    let lhs: f64 = window
        .beta_slots
        .iter()
        .map(|b| tau * w * b.iter().map(|v| v * v).sum::<f64>())
        .sum();
    // the window data is slot-constant, so the time integral is the same sum
    let rhs = lhs;
    assert!(lhs <= rhs + 1e-12 * rhs.abs());
}

#[test]
fn next_window_beta_is_realized_rate() {
    let scenario = mini_scenario(0.5, 0.3);
    let window = window_of(&scenario);
    let traj = run_tau_window(&scenario, &window).unwrap();
    assert_eq!(traj.outcome, WindowOutcome::Completed);
    let next = advance_window(&scenario, &traj).unwrap();
    for (slot, rec) in traj.records.iter().enumerate() {
        for j in 0..rec.eta_after.len() {
            let rate = (rec.eta_after[j] - rec.eta_before[j]) / rec.tau;
            assert_relative_eq!(next.beta_slots[slot][j], rate, epsilon = 1e-12);
        }
    }
    // initial data of the next window is the end state
    assert_eq!(next.eta0, traj.records.last().unwrap().eta_after);
    assert_eq!(next.t_start, traj.t_start + scenario.params.h);
}

#[test]
fn rest_window_hands_off_zero_data() {
    let scenario = mini_scenario(0.0, 0.0);
    let window = window_of(&scenario);
    let traj = run_tau_window(&scenario, &window).unwrap();
    let next = advance_window(&scenario, &traj).unwrap();
    for slot in &next.beta_slots {
        assert!(slot.iter().all(|v| v.abs() < 1e-13));
    }
    for fluid in 0..2 {
        for slot in &next.w_slots[fluid] {
            assert!(slot.iter().all(|v| v[0].abs() < 1e-13 && v[1].abs() < 1e-13));
        }
    }
}

#[test]
fn interface_force_vanishes_at_rest_and_balances_power() {
    let scenario = mini_scenario(0.0, 0.0);
    let window = window_of(&scenario);
    let traj = run_tau_window(&scenario, &window).unwrap();
    let rec = &traj.records[0];
    let forces = interface_force(
        &scenario.surface,
        &rec.tractions,
        &window.ref_mask.markers,
    );
    assert!(forces.iter().all(|f| f.abs() < 1e-12));

    // a driven window balances shell power against the tractions
    let scenario = mini_scenario(0.5, 0.4);
    let window = window_of(&scenario);
    let traj = run_tau_window(&scenario, &window).unwrap();
    assert_eq!(traj.outcome, WindowOutcome::Completed);
    for (k, rec) in traj.records.iter().enumerate() {
        let mismatch = interface_power_mismatch(
            &scenario.surface,
            &scenario.params,
            &rec.eta_before,
            &rec.eta_after,
            &window.beta_slots[k.min(window.beta_slots.len() - 1)],
            &rec.tractions,
            &traj.data.ref_mask.markers,
            rec.tau,
        );
        assert!(mismatch <= 1e-8, "step {k}: power mismatch {mismatch:.3e}");
    }
}

#[test]
fn uniform_body_force_gives_normal_tractions() {
    // a radial body force in the inner fluid builds a pressure difference;
    // the coupling tractions then align with the interface normal
    let scenario = mini_scenario(0.0, 0.0);
    let window = window_of(&scenario);
    let mask = window.ref_mask.clone();
    let theta = uniform_theta(&scenario.grid, 1.0, 1.0);
    let flows = [
        FlowMap::identity(&mask, CellLabel::Fluid1),
        FlowMap::identity(&mask, CellLabel::Fluid2),
    ];
    let mut body = vec![[0.0; 2]; scenario.grid.cell_count()];
    for c in 0..scenario.grid.cell_count() {
        if mask.labels[c] == CellLabel::Fluid2 {
            let p = scenario.grid.center_of(c);
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt().max(1e-9);
            body[c] = [2.0 * p[0] / r, 2.0 * p[1] / r];
        }
    }
    let inputs = StepInputs {
        surface: &scenario.surface,
        params: &scenario.params,
        mask: &mask,
        eta_k: &window.eta0,
        theta_k: [&theta[0], &theta[1]],
        beta_k: &window.beta_slots[0],
        w_k: [&window.w_slots[0][0], &window.w_slots[1][0]],
        ref_mask: &window.ref_mask,
        flows: [&flows[0], &flows[1]],
        body_force: Some(&body),
    };
    let prob = assemble_velocity_step(&inputs).unwrap();
    let sol = solve_velocity_step(&prob).unwrap();
    let mut max_traction = 0.0f64;
    for (m, t) in sol.tractions.iter().enumerate() {
        let nu = scenario.surface.frames[mask.markers[m].node].nu;
        let normal = t[0] * nu[0] + t[1] * nu[1];
        let tangential = -t[0] * nu[1] + t[1] * nu[0];
        max_traction = max_traction.max(normal.abs());
        assert!(
            tangential.abs() <= 1e-6 * normal.abs().max(1e-3),
            "marker {m}: tangential traction {tangential:.3e} vs normal {normal:.3e}"
        );
    }
    assert!(max_traction > 1e-3, "body force produced no traction");
}

#[test]
fn run_simulation_counts_windows_and_reports() {
    let mut scenario = mini_scenario(0.0, 0.0);
    scenario.t_end = 2.0 * scenario.params.h;
    let result = shellheat::timeloop::run_simulation(&scenario).unwrap();
    assert_eq!(result.trajectories.len(), 2);
    assert_eq!(
        result.termination.reason,
        shellheat::timeloop::TerminationReason::TimeReached
    );
}

#[test]
fn el_residual_grows_linearly_in_perturbation() {
    use shellheat::varstep::velocity_el_residual;
    let scenario = mini_scenario(0.4, 0.3);
    let window = window_of(&scenario);
    let mask = window.ref_mask.clone();
    let theta = uniform_theta(&scenario.grid, 1.0, 1.0);
    let flows = [
        FlowMap::identity(&mask, CellLabel::Fluid1),
        FlowMap::identity(&mask, CellLabel::Fluid2),
    ];
    let inputs = StepInputs {
        surface: &scenario.surface,
        params: &scenario.params,
        mask: &mask,
        eta_k: &window.eta0,
        theta_k: [&theta[0], &theta[1]],
        beta_k: &window.beta_slots[0],
        w_k: [&window.w_slots[0][0], &window.w_slots[1][0]],
        ref_mask: &window.ref_mask,
        flows: [&flows[0], &flows[1]],
        body_force: None,
    };
    let prob = assemble_velocity_step(&inputs).unwrap();
    let sol = solve_velocity_step(&prob).unwrap();

    // an admissible perturbation: uniform tangential swirl has zero
    // divergence and zero normal trace, so constraints stay satisfied to
    // first order; check the residual slope over two epsilons
    let mult = sol.multipliers.clone();
    let base = velocity_el_residual(&prob, &sol.u, &sol.eta_new, &mult);
    let residual_at = |eps: f64| {
        let mut u = sol.u.clone();
        for c in 0..scenario.grid.cell_count() {
            if mask.is_fluid(c) {
                let p = scenario.grid.center_of(c);
                u[c][0] += eps * -p[1];
                u[c][1] += eps * p[0];
            }
        }
        velocity_el_residual(&prob, &u, &sol.eta_new, &mult)
    };
    let r1 = residual_at(1e-4);
    let r2 = residual_at(2e-4);
    assert!(r1 > base, "perturbation must raise the residual");
    let slope_ratio = (r2 - base) / (r1 - base);
    assert!(
        (slope_ratio - 2.0).abs() < 0.3,
        "residual not linear in eps: ratio {slope_ratio}"
    );
}

#[test]
fn nonnegative_sources_leave_floor_inactive_over_random_trials() {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..50 {
        let beta_amp: f64 = rng.random_range(0.0..0.6);
        let w_amp: f64 = rng.random_range(0.0..0.5);
        let scenario = mini_scenario(beta_amp, w_amp);
        let window = window_of(&scenario);
        let traj = run_tau_window(&scenario, &window).unwrap();
        assert_eq!(traj.outcome, WindowOutcome::Completed, "trial {trial}");
        let rec = &traj.records[0];
        assert_eq!(
            rec.energy.clamped_cells, 0,
            "trial {trial}: floor became active with nonnegative sources"
        );
        assert!(rec.energy.min_theta >= scenario.params.cap.gamma_floor - 1e-12);
    }
}

#[test]
fn total_energy_of_uniform_rest_state() {
    use shellheat::diagnostics::{total_energy, SimState};
    let scenario = mini_scenario(0.0, 0.0);
    let window = window_of(&scenario);
    let mask = &window.ref_mask;
    let theta_a = uniform_theta(&scenario.grid, 2.5, 2.5);
    let zero_eta = vec![0.0; scenario.surface.node_count()];
    let zero_u = vec![[0.0; 2]; scenario.grid.cell_count()];
    let state = SimState {
        mask,
        eta: &zero_eta,
        dt_eta: &zero_eta,
        u: &zero_u,
        theta: [&theta_a[0], &theta_a[1]],
    };
    let e = total_energy(&scenario.surface, &scenario.params, &state);
    let c1 = scenario.params.materials[0].heat_capacity;
    let c2 = scenario.params.materials[1].heat_capacity;
    let expect = 2.5
        * (c1 * mask.volume(CellLabel::Fluid1) + c2 * mask.volume(CellLabel::Fluid2));
    assert!((e - expect).abs() < 1e-12 * expect);

    // linearity in a uniform temperature shift
    let theta_b = uniform_theta(&scenario.grid, 3.0, 3.0);
    let state_b = SimState {
        mask,
        eta: &zero_eta,
        dt_eta: &zero_eta,
        u: &zero_u,
        theta: [&theta_b[0], &theta_b[1]],
    };
    let e_b = total_energy(&scenario.surface, &scenario.params, &state_b);
    let delta = 0.5 * (c1 * mask.volume(CellLabel::Fluid1) + c2 * mask.volume(CellLabel::Fluid2));
    assert!((e_b - e - delta).abs() < 1e-12 * e);
}

#[test]
fn minimal_principle_check_is_falsifiable() {
    use shellheat::diagnostics::minimal_principle_check;
    assert!(minimal_principle_check(&[1.0, 0.8, 0.5], 0.5));
    // an injected sub-floor value must flip the check
    assert!(!minimal_principle_check(&[1.0, 0.8, 0.4], 0.5));
}
