//! The two-time-scale driver: the inner velocity-scale loop over one
//! acceleration window, the window handoff, interpolant views and
//! degeneracy-aware termination.

use crate::diagnostics::{self, EnergyLedger, EntropyLedger, SimState};
use crate::geometry::{
    build_masks, deform_interface, degeneracy_check, DegeneracyStatus, DegeneracyThresholds,
    DomainMask, ReferenceSurface, TubularChart,
};
use crate::grid::Grid;
use crate::transport::{self, FlowMap};
use crate::varstep::{
    assemble_temperature_step, assemble_velocity_step, solve_temperature_step,
    solve_velocity_step, ModelParams, StepInputs, TemperatureInputs, VelocitySolution,
};
use crate::{Error, Result};

/// A fully resolved simulation setup.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub surface: ReferenceSurface,
    pub chart: TubularChart,
    pub thresholds: DegeneracyThresholds,
    pub grid: Grid,
    pub params: ModelParams,
    pub eta0: Vec<f64>,
    /// Initial shell velocity η¹₀.
    pub eta_vel0: Vec<f64>,
    pub u0: Vec<[f64; 2]>,
    pub theta0: [Vec<f64>; 2],
    pub t_end: f64,
    /// Slots per window, N = h/τ.
    pub n_slots: usize,
    /// Skip the velocity solve and hold the flow at rest (pure conduction).
    pub freeze_velocity: bool,
    pub body_force: Option<Vec<[f64; 2]>>,
    pub parallel: bool,
}

/// Delayed data driving one window.
#[derive(Clone, Debug)]
pub struct WindowData {
    pub index: usize,
    pub t_start: f64,
    pub eta0: Vec<f64>,
    pub theta0: [Vec<f64>; 2],
    /// Slot averages of the previous window's shell velocity.
    pub beta_slots: Vec<Vec<f64>>,
    /// Slot averages of the pulled-back fluid velocity, per fluid, on the
    /// window-initial reference cells.
    pub w_slots: [Vec<Vec<[f64; 2]>>; 2],
    pub ref_mask: DomainMask,
    /// Running dissipation total carried across windows.
    pub cumulative_dissipation: f64,
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: usize,
    pub window: usize,
    /// Time at the end of the step.
    pub time: f64,
    pub tau: f64,
    pub eta_before: Vec<f64>,
    pub eta_after: Vec<f64>,
    pub u: Vec<[f64; 2]>,
    pub theta: [Vec<f64>; 2],
    pub tractions: Vec<[f64; 2]>,
    pub pressures: Vec<f64>,
    pub energy: EnergyLedger,
    pub entropy: Vec<EntropyLedger>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum WindowOutcome {
    Completed,
    Degenerate(DegeneracyStatus),
    SolverFailure(String),
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub window: usize,
    pub t_start: f64,
    pub records: Vec<StepRecord>,
    pub outcome: WindowOutcome,
    pub data: WindowData,
    pub final_mask: DomainMask,
    pub final_flows: [FlowMap; 2],
    /// Flow maps at the start of each record, per fluid, for the handoff.
    pub flow_history: [Vec<FlowMap>; 2],
}

impl Trajectory {
    /// Piecewise-constant displacement interpolant at window-local time.
    pub fn eta_piecewise(&self, t: f64) -> &[f64] {
        let r = self.record_at(t);
        &self.records[r].eta_before
    }

    /// Forward-shifted piecewise-constant interpolant.
    pub fn eta_piecewise_plus(&self, t: f64) -> &[f64] {
        let r = self.record_at(t);
        &self.records[r].eta_after
    }

    /// Piecewise-affine displacement interpolant.
    pub fn eta_affine(&self, t: f64) -> Vec<f64> {
        let r = self.record_at(t);
        let rec = &self.records[r];
        let t_end = rec.time - self.t_start;
        let t_begin = t_end - rec.tau;
        let frac = ((t - t_begin) / rec.tau).clamp(0.0, 1.0);
        rec.eta_before
            .iter()
            .zip(&rec.eta_after)
            .map(|(a, b)| (1.0 - frac) * a + frac * b)
            .collect()
    }

    /// Piecewise-constant velocity interpolant (the slot's solved field).
    pub fn u_piecewise(&self, t: f64) -> &[[f64; 2]] {
        &self.records[self.record_at(t)].u
    }

    /// Piecewise-constant temperature interpolant: the state entering the
    /// slot that contains `t`.
    pub fn theta_piecewise(&self, t: f64) -> [&[f64]; 2] {
        let r = self.record_at(t);
        if r == 0 {
            [&self.data.theta0[0], &self.data.theta0[1]]
        } else {
            [&self.records[r - 1].theta[0], &self.records[r - 1].theta[1]]
        }
    }

    /// Forward-shifted temperature interpolant.
    pub fn theta_piecewise_plus(&self, t: f64) -> [&[f64]; 2] {
        let r = self.record_at(t);
        [&self.records[r].theta[0], &self.records[r].theta[1]]
    }

    fn record_at(&self, t: f64) -> usize {
        let mut acc = 0.0;
        for (r, rec) in self.records.iter().enumerate() {
            acc += rec.tau;
            if t < acc || r + 1 == self.records.len() {
                return r;
            }
        }
        0
    }

    pub fn last_dt_eta(&self) -> Vec<f64> {
        match self.records.last() {
            Some(rec) => rec
                .eta_after
                .iter()
                .zip(&rec.eta_before)
                .map(|(a, b)| (a - b) / rec.tau)
                .collect(),
            None => vec![0.0; self.data.eta0.len()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TerminationReason {
    TimeReached,
    Degeneracy(DegeneracyStatus),
    SolverFailure(String),
}

#[derive(Clone, Debug)]
pub struct TerminationReport {
    pub reason: TerminationReason,
    pub time: f64,
    pub window: usize,
    pub step: usize,
    /// sup over the run of ∫γ̄²|∇²η|².
    pub coercivity_sup: f64,
}

pub struct SimulationResult {
    pub trajectories: Vec<Trajectory>,
    pub termination: TerminationReport,
}

/// Builds the first window from the initial data: the delayed shell velocity
/// is the initial one, the delayed fluid data is the initial velocity, both
/// held constant over the window.
pub fn initial_window(scenario: &Scenario) -> Result<WindowData> {
    let interface = deform_interface(&scenario.surface, &scenario.eta0);
    let ref_mask = build_masks(&interface, &scenario.grid, scenario.parallel)?;
    let n = scenario.n_slots;
    let beta_slots = vec![scenario.eta_vel0.clone(); n];
    let mut w_slots: [Vec<Vec<[f64; 2]>>; 2] = [Vec::new(), Vec::new()];
    for fluid in 0..2 {
        let label = if fluid == 0 {
            crate::geometry::CellLabel::Fluid1
        } else {
            crate::geometry::CellLabel::Fluid2
        };
        let cells = ref_mask.cells_with(label);
        let w: Vec<[f64; 2]> = cells.iter().map(|&c| scenario.u0[c]).collect();
        w_slots[fluid] = vec![w; n];
    }
    Ok(WindowData {
        index: 0,
        t_start: 0.0,
        eta0: scenario.eta0.clone(),
        theta0: scenario.theta0.clone(),
        beta_slots,
        w_slots,
        ref_mask,
        cumulative_dissipation: 0.0,
    })
}

struct StepState {
    mask: DomainMask,
    eta: Vec<f64>,
    theta: [Vec<f64>; 2],
    flows: [FlowMap; 2],
    entropy_totals: Vec<f64>,
    cumulative_dissipation: f64,
}

#[allow(clippy::too_many_arguments)]
fn do_step(
    scenario: &Scenario,
    window: &WindowData,
    state: &StepState,
    slot: usize,
    tau: f64,
    step_index: usize,
    time_end: f64,
) -> Result<(StepRecord, StepState)> {
    let params = ModelParams {
        tau,
        ..scenario.params.clone()
    };
    let inputs = StepInputs {
        surface: &scenario.surface,
        params: &params,
        mask: &state.mask,
        eta_k: &state.eta,
        theta_k: [&state.theta[0], &state.theta[1]],
        beta_k: &window.beta_slots[slot],
        w_k: [&window.w_slots[0][slot], &window.w_slots[1][slot]],
        ref_mask: &window.ref_mask,
        flows: [&state.flows[0], &state.flows[1]],
        body_force: scenario.body_force.as_deref(),
    };
    let vel_prob = assemble_velocity_step(&inputs)?;
    let vel_sol = if scenario.freeze_velocity {
        VelocitySolution {
            u: vec![[0.0; 2]; state.mask.grid.cell_count()],
            eta_new: state.eta.clone(),
            pressures: vec![0.0; vel_prob.div_cells.len()],
            tractions: vec![[0.0; 2]; state.mask.markers.len()],
            multipliers: vec![0.0; vel_prob.n_con()],
            newton_iters: 0,
            el_residual: 0.0,
            objective: vel_prob.objective(&{
                let mut x = vec![0.0; vel_prob.dim()];
                x[vel_prob.n_u..].copy_from_slice(&state.eta);
                x
            }),
        }
    } else {
        solve_velocity_step(&vel_prob).map_err(|e| match e {
            Error::Solver { reason, .. } => Error::Solver {
                step: step_index,
                reason,
            },
            other => other,
        })?
    };

    // geometry update; any non-nominal status ends the window
    let degeneracy = degeneracy_check(
        &scenario.surface,
        &scenario.chart,
        &scenario.thresholds,
        &vel_sol.eta_new,
    );
    if degeneracy.status != DegeneracyStatus::Ok {
        return Err(Error::Degeneracy(degeneracy.status, time_end));
    }
    let interface = deform_interface(&scenario.surface, &vel_sol.eta_new);
    let mask_new = build_masks(&interface, &scenario.grid, scenario.parallel).map_err(|e| {
        match e {
            Error::Degeneracy(s, _) => Error::Degeneracy(s, time_end),
            other => other,
        }
    })?;

    let psi = transport::make_step_map(&vel_sol.u, &state.mask, tau)?;
    let flows_new = [
        transport::compose_flow(&state.flows[0], &psi)?,
        transport::compose_flow(&state.flows[1], &psi)?,
    ];

    let temp_inputs = TemperatureInputs {
        base: &inputs,
        vel: &vel_prob,
        mask_new: &mask_new,
        u_new: &vel_sol.u,
        psi: &psi,
        flows_new: [&flows_new[0], &flows_new[1]],
        eta_new: &vel_sol.eta_new,
    };
    let temp_prob = assemble_temperature_step(&temp_inputs)?;
    let heat_capacity = [
        params.materials[0].heat_capacity,
        params.materials[1].heat_capacity,
    ];
    let temp_sol = solve_temperature_step(
        &temp_prob,
        [&state.theta[0], &state.theta[1]],
        &state.mask,
        heat_capacity,
    )
    .map_err(|e| match e {
        Error::Solver { reason, .. } => Error::Solver {
            step: step_index,
            reason,
        },
        other => other,
    })?;

    let mut energy = diagnostics::ledger_step(
        &scenario.surface,
        &params,
        &vel_prob,
        &vel_sol,
        &temp_prob,
        &temp_sol,
        &state.eta,
        tau,
        &degeneracy,
        state.cumulative_dissipation,
    );
    energy.step = step_index;
    energy.window = window.index;
    energy.time = time_end;
    // measured where the divergence constraint holds; there the centered
    // trace vanishes exactly and the deviation is purely quadratic in τ
    energy.det_psi_dev = vel_prob
        .div_cells
        .iter()
        .map(|&c| (psi.jacobian[c] - 1.0).abs())
        .fold(0.0f64, f64::max);
    if std::env::var("SHELLHEAT_DEBUG_DET").is_ok() {
        eprintln!(
            "step {step_index}: psi_dev {:.3e} phi [{:.6}, {:.6}]",
            energy.det_psi_dev,
            flows_new
                .iter()
                .flat_map(|f| f.jacobian.iter())
                .cloned()
                .fold(f64::INFINITY, f64::min),
            flows_new
                .iter()
                .flat_map(|f| f.jacobian.iter())
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        );
    }
    let mut dmin = f64::INFINITY;
    let mut dmax = f64::NEG_INFINITY;
    for flow in &flows_new {
        for &d in &flow.jacobian {
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
    }
    energy.det_phi_min = dmin;
    energy.det_phi_max = dmax;
    let dt_eta: Vec<f64> = (0..state.eta.len())
        .map(|j| (vel_sol.eta_new[j] - state.eta[j]) / tau)
        .collect();
    energy.total_energy = diagnostics::total_energy(
        &scenario.surface,
        &params,
        &SimState {
            mask: &mask_new,
            eta: &vel_sol.eta_new,
            dt_eta: &dt_eta,
            u: &vel_sol.u,
            theta: [&temp_sol.theta[0], &temp_sol.theta[1]],
        },
    );

    let mut entropy_rows = Vec::new();
    let mut new_entropy_totals = Vec::new();
    for (fam_idx, family) in diagnostics::entropy_families().iter().enumerate() {
        let scale = state.entropy_totals[fam_idx].abs().max(1.0);
        let tol = 1e-9 * scale + 10.0 * energy.residual_energy * scale;
        let mut row = diagnostics::entropy_step(
            &params,
            &mask_new,
            &temp_prob,
            &temp_sol,
            state.entropy_totals[fam_idx],
            *family,
            tau,
            tol,
        );
        row.step = step_index;
        new_entropy_totals.push(row.total);
        entropy_rows.push(row);
    }

    let record = StepRecord {
        step: step_index,
        window: window.index,
        time: time_end,
        tau,
        eta_before: state.eta.clone(),
        eta_after: vel_sol.eta_new.clone(),
        u: vel_sol.u.clone(),
        theta: temp_sol.theta.clone(),
        tractions: vel_sol.tractions.clone(),
        pressures: vel_sol.pressures.clone(),
        energy,
        entropy: entropy_rows,
    };
    let new_state = StepState {
        mask: mask_new,
        eta: vel_sol.eta_new,
        theta: temp_sol.theta,
        flows: flows_new,
        entropy_totals: new_entropy_totals,
        cumulative_dissipation: record.energy.cumulative_dissipation,
    };
    Ok((record, new_state))
}

/// Runs the inner loop over one window. Solver failures retry the slot once
/// with two half steps; degeneracies end the window with the status.
pub fn run_tau_window(scenario: &Scenario, window: &WindowData) -> Result<Trajectory> {
    let n = scenario.n_slots;
    let tau = scenario.params.h / n as f64;
    let mut records: Vec<StepRecord> = Vec::with_capacity(n);
    let mut flow_history: [Vec<FlowMap>; 2] = [Vec::new(), Vec::new()];

    // entering the window the displacement must be sane
    let pre = degeneracy_check(
        &scenario.surface,
        &scenario.chart,
        &scenario.thresholds,
        &window.eta0,
    );
    if pre.status != DegeneracyStatus::Ok {
        return Ok(Trajectory {
            window: window.index,
            t_start: window.t_start,
            records,
            outcome: WindowOutcome::Degenerate(pre.status),
            data: window.clone(),
            final_mask: window.ref_mask.clone(),
            final_flows: [
                FlowMap::identity(&window.ref_mask, crate::geometry::CellLabel::Fluid1),
                FlowMap::identity(&window.ref_mask, crate::geometry::CellLabel::Fluid2),
            ],
            flow_history,
        })
    }

    let mut state = StepState {
        mask: window.ref_mask.clone(),
        eta: window.eta0.clone(),
        theta: window.theta0.clone(),
        flows: [
            FlowMap::identity(&window.ref_mask, crate::geometry::CellLabel::Fluid1),
            FlowMap::identity(&window.ref_mask, crate::geometry::CellLabel::Fluid2),
        ],
        entropy_totals: diagnostics::entropy_families()
            .iter()
            .map(|f| {
                diagnostics::entropy_total(
                    &window.ref_mask,
                    [&window.theta0[0], &window.theta0[1]],
                    [
                        scenario.params.materials[0].heat_capacity,
                        scenario.params.materials[1].heat_capacity,
                    ],
                    *f,
                )
            })
            .collect(),
        cumulative_dissipation: window.cumulative_dissipation,
    };

    let mut step_index = window.index * n;
    for slot in 0..n {
        let t_slot_end = window.t_start + (slot + 1) as f64 * tau;
        flow_history[0].push(state.flows[0].clone());
        flow_history[1].push(state.flows[1].clone());
        match do_step(scenario, window, &state, slot, tau, step_index, t_slot_end) {
            Ok((record, new_state)) => {
                records.push(record);
                state = new_state;
                step_index += 1;
            }
            Err(Error::Degeneracy(status, _)) => {
                return Ok(Trajectory {
                    window: window.index,
                    t_start: window.t_start,
                    records,
                    outcome: WindowOutcome::Degenerate(status),
                    data: window.clone(),
                    final_mask: state.mask.clone(),
                    final_flows: state.flows.clone(),
                    flow_history,
                });
            }
            Err(Error::Solver { step, reason }) => {
                // one retry: split the slot into two half steps on the same
                // delayed data
                let halves = (0..2).try_fold(
                    (Vec::<StepRecord>::new(), None::<StepState>),
                    |(mut recs, st), half| {
                        let base = st.as_ref().unwrap_or(&state);
                        let t_end = window.t_start
                            + slot as f64 * tau
                            + (half + 1) as f64 * tau / 2.0;
                        match do_step(
                            scenario,
                            window,
                            base,
                            slot,
                            tau / 2.0,
                            step_index + half,
                            t_end,
                        ) {
                            Ok((r, s)) => {
                                recs.push(r);
                                Ok((recs, Some(s)))
                            }
                            Err(e) => Err(e),
                        }
                    },
                );
                match halves {
                    Ok((mut recs, Some(new_state))) => {
                        records.append(&mut recs);
                        state = new_state;
                        step_index += 2;
                    }
                    _ => {
                        return Ok(Trajectory {
                            window: window.index,
                            t_start: window.t_start,
                            records,
                            outcome: WindowOutcome::SolverFailure(format!(
                                "step {step}: {reason} (half-step retry failed too)"
                            )),
                            data: window.clone(),
                            final_mask: state.mask.clone(),
                            final_flows: state.flows.clone(),
                            flow_history,
                        });
                    }
                }
            }
            Err(other) => return Err(other),
        }
    }

    Ok(Trajectory {
        window: window.index,
        t_start: window.t_start,
        records,
        outcome: WindowOutcome::Completed,
        data: window.clone(),
        final_mask: state.mask.clone(),
        final_flows: state.flows.clone(),
        flow_history,
    })
}

/// Builds the next window's delayed data from a completed trajectory.
pub fn advance_window(scenario: &Scenario, prev: &Trajectory) -> Result<WindowData> {
    let n = scenario.n_slots;
    let tau = scenario.params.h / n as f64;
    let last = prev
        .records
        .last()
        .ok_or_else(|| Error::Internal("cannot advance from an empty window".into()))?;

    // slot averages of the realized shell velocity (handles half steps)
    let n_nodes = last.eta_after.len();
    let mut beta_slots = vec![vec![0.0; n_nodes]; n];
    let mut slot_time = vec![0.0; n];
    for rec in &prev.records {
        let t_end = rec.time - prev.t_start;
        let slot = (((t_end - 0.5 * rec.tau) / tau).floor() as usize).min(n - 1);
        for j in 0..n_nodes {
            beta_slots[slot][j] += (rec.eta_after[j] - rec.eta_before[j]) / tau;
        }
        slot_time[slot] += rec.tau;
    }
    for s in 0..n {
        if (slot_time[s] - tau).abs() > 1e-9 * tau {
            return Err(Error::Internal("window slots do not tile the window".into()));
        }
    }

    // next window geometry
    let interface = deform_interface(&scenario.surface, &last.eta_after);
    let ref_mask = build_masks(&interface, &scenario.grid, scenario.parallel)?;

    // pull the velocity history back through Φ(t)∘Φ(h)⁻¹ onto the new cells
    let mut w_slots: [Vec<Vec<[f64; 2]>>; 2] = [Vec::new(), Vec::new()];
    for fluid in 0..2 {
        let label = if fluid == 0 {
            crate::geometry::CellLabel::Fluid1
        } else {
            crate::geometry::CellLabel::Fluid2
        };
        let next_cells = ref_mask.cells_with(label);
        let vels: Vec<Vec<[f64; 2]>> = prev.records.iter().map(|r| r.u.clone()).collect();
        let per_record = transport::window_pullback(
            &vels,
            &prev.flow_history[fluid],
            &prev.final_flows[fluid],
            &scenario.grid,
            &next_cells,
        )?;
        // time-weighted slot averages
        let mut slots = vec![vec![[0.0; 2]; next_cells.len()]; n];
        for (r, rec) in prev.records.iter().enumerate() {
            let t_end = rec.time - prev.t_start;
            let slot = (((t_end - 0.5 * rec.tau) / tau).floor() as usize).min(n - 1);
            let scale = rec.tau / tau;
            for (cell, v) in per_record[r].iter().enumerate() {
                slots[slot][cell][0] += scale * v[0];
                slots[slot][cell][1] += scale * v[1];
            }
        }
        w_slots[fluid] = slots;
    }

    Ok(WindowData {
        index: prev.window + 1,
        t_start: prev.t_start + scenario.params.h,
        eta0: last.eta_after.clone(),
        theta0: last.theta.clone(),
        beta_slots,
        w_slots,
        ref_mask,
        cumulative_dissipation: last.energy.cumulative_dissipation,
    })
}

/// Runs windows until the end time, a degeneracy or a solver failure.
pub fn run_simulation(scenario: &Scenario) -> Result<SimulationResult> {
    let mut window = initial_window(scenario)?;
    let mut trajectories = Vec::new();
    let mut coercivity_sup = 0.0f64;
    loop {
        let traj = run_tau_window(scenario, &window)?;
        for rec in &traj.records {
            coercivity_sup = coercivity_sup.max(rec.energy.coercivity);
        }
        let outcome = traj.outcome.clone();
        let t_end_window = traj
            .records
            .last()
            .map(|r| r.time)
            .unwrap_or(traj.t_start);
        let window_idx = traj.window;
        let step = traj.records.last().map(|r| r.step).unwrap_or(0);
        trajectories.push(traj);
        match outcome {
            WindowOutcome::Degenerate(status) => {
                return Ok(SimulationResult {
                    trajectories,
                    termination: TerminationReport {
                        reason: TerminationReason::Degeneracy(status),
                        time: t_end_window,
                        window: window_idx,
                        step,
                        coercivity_sup,
                    },
                });
            }
            WindowOutcome::SolverFailure(msg) => {
                return Ok(SimulationResult {
                    trajectories,
                    termination: TerminationReport {
                        reason: TerminationReason::SolverFailure(msg),
                        time: t_end_window,
                        window: window_idx,
                        step,
                        coercivity_sup,
                    },
                });
            }
            WindowOutcome::Completed => {
                if t_end_window + 1e-12 >= scenario.t_end {
                    return Ok(SimulationResult {
                        trajectories,
                        termination: TerminationReport {
                            reason: TerminationReason::TimeReached,
                            time: t_end_window,
                            window: window_idx,
                            step,
                            coercivity_sup,
                        },
                    });
                }
                let prev = trajectories.last().unwrap();
                window = advance_window(scenario, prev)?;
            }
        }
    }
}

/// Trailing-average window energy of a completed trajectory: thermal content
/// and shell energy at the window end plus the window averages of the two
/// kinetic terms. The same functional evaluated on the incoming delayed data
/// gives the window's initial energy; their difference is the measured
/// drift.
pub fn window_energy_out(params: &ModelParams, traj: &Trajectory) -> f64 {
    let last = traj.records.last().expect("completed window");
    let mut e = last.energy.thermal[0] + last.energy.thermal[1] + last.energy.elastic;
    for rec in &traj.records {
        e += rec.tau * (rec.energy.kin_eta + rec.energy.kin_fluid);
    }
    let _ = params;
    e
}

/// Incoming delayed energy of a window (see [`window_energy_out`]).
pub fn window_energy_in(
    params: &ModelParams,
    surface: &ReferenceSurface,
    traj: &Trajectory,
) -> f64 {
    let first = traj.records.first().expect("completed window");
    let mut e = first.energy.thermal_old[0] + first.energy.thermal_old[1]
        + first.energy.elastic_prev;
    for rec in &traj.records {
        e += rec.tau * (rec.energy.beta_sq + rec.energy.w_sq);
    }
    let _ = (params, surface);
    e
}
