//! The invariant ledger: per-step energy identity, total-energy bookkeeping,
//! entropy inequality, minimal principle, transmission checks and the
//! interface-force reconstruction.
//!
//! Every accepted step must satisfy, to solver tolerance, the identity
//! obtained by pairing the stationarity system of the velocity step with its
//! own solution: the elastic-energy increment plus the quotient expansions
//! `A·(A−B) = ½(|A|² − |B|² + |A−B|²)` of the two kinetic blocks plus all
//! dissipation blocks sum to zero. The temperature step then converts the
//! dissipation blocks into heat, which is what closes the window-level
//! energy balance.

use crate::geometry::{CellLabel, DegeneracyReport, DomainMask, ReferenceSurface};
use crate::koiter::{self, ShellDisplacement};
use crate::materials::{entropy_test_function, EntropyTestKind, Transmission};
use crate::varstep::{
    ModelParams, TemperatureSolution, TemperatureStepProblem, VelocitySolution,
    VelocityStepProblem,
};

/// One row of the per-step energy ledger. All integral quantities carry
/// their full quadrature weights; `residual_energy` is relative.
#[derive(Clone, Debug, Default)]
pub struct EnergyLedger {
    pub step: usize,
    pub window: usize,
    pub time: f64,
    pub tau: f64,
    /// (1/2h)∫|δη/τ|²
    pub kin_eta: f64,
    /// (1/2h)∫|u∘Φ|², the moving-domain integral with the inverse flow
    /// Jacobian absorbed by the reference-side quadrature
    pub kin_fluid: f64,
    /// (1/2h)∫|β_k|²
    pub beta_sq: f64,
    /// (1/2h)∫|w_k|²
    pub w_sq: f64,
    /// K_κ(η_{k+1})
    pub elastic: f64,
    pub elastic_prev: f64,
    /// ∫μ^M|D u|²
    pub visc_diss: f64,
    /// κ∫|∇^{k0f}u|²
    pub reg_diss_u: f64,
    /// κ∫|∇^{k0+1}(δη/τ)|²
    pub reg_diss_eta: f64,
    /// (1/2h)∫|δη/τ − β_k|²
    pub defect_eta: f64,
    /// (1/2h)∫|u∘Φ − w_k|²
    pub defect_u: f64,
    /// ⟨DK_κ(η_{k+1}), δη⟩ − (K_κ(η_{k+1}) − K_κ(η_k))
    pub remainder: f64,
    /// relative residual of the step energy identity
    pub residual_energy: f64,
    /// c_i ∫θ_i on the new mask
    pub thermal: [f64; 2],
    /// c_i ∫θ_i∘Ψ on the old mask
    pub thermal_transported: [f64; 2],
    pub thermal_old: [f64; 2],
    /// integrated heating per fluid
    pub heat_source: [f64; 2],
    /// energy clipped by the min{·, 1/τ} caps
    pub cap_defect: f64,
    /// interface heat flux λ∫(θ₁−θ₂) (implied flux when superconducting)
    pub interface_flux: f64,
    /// per-fluid residual of the transported heat balance, relative
    pub heat_residual: [f64; 2],
    pub jump_max: f64,
    pub jump_mean: f64,
    pub coupling_violation: f64,
    pub div_max: f64,
    pub min_theta: f64,
    pub newton_iters: usize,
    pub cg_iters: usize,
    pub clamps: usize,
    pub orphans: usize,
    pub clamped_cells: usize,
    pub min_gamma_bar: f64,
    pub coercivity: f64,
    /// instantaneous total energy after the step
    pub total_energy: f64,
    /// cumulative dissipation up to and including this step
    pub cumulative_dissipation: f64,
    /// max |det ∇Ψ − 1| over fluid cells
    pub det_psi_dev: f64,
    /// extrema of det ∇Φ over both fluids' reference cells
    pub det_phi_min: f64,
    pub det_phi_max: f64,
}

/// One row of the per-step entropy ledger for one test family.
#[derive(Clone, Debug)]
pub struct EntropyLedger {
    pub step: usize,
    pub family: EntropyTestKind,
    /// Σ_i c_i ∫φ(θ_i) after the step
    pub total: f64,
    /// Σ_i k_i Σ_faces Δθ Δφ′(θ) ≤ 0, the discrete ∫|∇θ|²φ″ production
    pub production: f64,
    /// λ Σ markers w (θ₁−θ₂)(φ′(θ₁)−φ′(θ₂)) ≤ 0
    pub interface: f64,
    /// Δ total + τ(production + interface); the inequality asserts ≥ −tol
    pub balance: f64,
    pub tol: f64,
    pub holds: bool,
}

/// Snapshot of the simulation state, the argument of the instantaneous
/// total-energy evaluator.
pub struct SimState<'a> {
    pub mask: &'a DomainMask,
    pub eta: &'a [f64],
    pub dt_eta: &'a [f64],
    pub u: &'a [[f64; 2]],
    pub theta: [&'a [f64]; 2],
}

/// Instantaneous total energy: thermal content plus fluid and shell kinetic
/// energy plus the (regularized) shell elastic energy.
pub fn total_energy(surface: &ReferenceSurface, params: &ModelParams, state: &SimState) -> f64 {
    let vol = state.mask.grid.cell_volume();
    let w = surface.gamma.quad_weight();
    let mut e = 0.0;
    for fluid in 0..2 {
        let label = if fluid == 0 {
            CellLabel::Fluid1
        } else {
            CellLabel::Fluid2
        };
        let ci = params.materials[fluid].heat_capacity;
        for c in 0..state.mask.grid.cell_count() {
            if state.mask.labels[c] == label {
                e += vol
                    * (ci * state.theta[fluid][c]
                        + 0.5 * (state.u[c][0] * state.u[c][0] + state.u[c][1] * state.u[c][1]));
            }
        }
    }
    for j in 0..state.eta.len() {
        e += w * 0.5 * state.dt_eta[j] * state.dt_eta[j];
    }
    let disp = ShellDisplacement::new(&surface.gamma, state.eta, params.koiter.k0);
    e + koiter::koiter_energy(surface, &disp, &params.koiter)
        + koiter::regularizer_energy(surface, &disp, &params.koiter)
}

/// Assembles the full ledger row for one accepted step.
#[allow(clippy::too_many_arguments)]
pub fn ledger_step(
    surface: &ReferenceSurface,
    params: &ModelParams,
    vel_prob: &VelocityStepProblem,
    vel_sol: &VelocitySolution,
    temp_prob: &TemperatureStepProblem,
    temp_sol: &TemperatureSolution,
    eta_k: &[f64],
    tau: f64,
    degeneracy: &DegeneracyReport,
    prev_cumulative_dissipation: f64,
) -> EnergyLedger {
    let w_gamma = surface.gamma.quad_weight();
    let kp = &params.koiter;
    let h = params.h;

    let disp_old = ShellDisplacement::new(&surface.gamma, eta_k, kp.k0);
    let disp_new = ShellDisplacement::new(&surface.gamma, &vel_sol.eta_new, kp.k0);
    let k_old = koiter::koiter_energy(surface, &disp_old, kp)
        + koiter::regularizer_energy(surface, &disp_old, kp);
    let k_new = koiter::koiter_energy(surface, &disp_new, kp)
        + koiter::regularizer_energy(surface, &disp_new, kp);
    let dk_new = koiter::koiter_gradient_kappa(surface, &disp_new, kp).total();

    let delta: Vec<f64> = (0..eta_k.len())
        .map(|j| vel_sol.eta_new[j] - eta_k[j])
        .collect();
    let rate: Vec<f64> = delta.iter().map(|d| d / tau).collect();
    let dk_pair: f64 = w_gamma * dk_new.iter().zip(&delta).map(|(g, d)| g * d).sum::<f64>();
    let remainder = dk_pair - (k_new - k_old);

    let mut kin_eta = 0.0;
    let mut beta_sq = 0.0;
    let mut defect_eta = 0.0;
    for j in 0..rate.len() {
        kin_eta += rate[j] * rate[j];
        beta_sq += vel_prob.beta_k[j] * vel_prob.beta_k[j];
        let d = rate[j] - vel_prob.beta_k[j];
        defect_eta += d * d;
    }
    kin_eta *= w_gamma / (2.0 * h);
    beta_sq *= w_gamma / (2.0 * h);
    defect_eta *= w_gamma / (2.0 * h);

    let u_dofs: Vec<f64> = {
        let mut v = vec![0.0; vel_prob.n_u];
        for (pos, &c) in vel_prob.fluid_cells.iter().enumerate() {
            v[2 * pos] = vel_sol.u[c][0];
            v[2 * pos + 1] = vel_sol.u[c][1];
        }
        v
    };
    let (s_u, s_w, s_d) = vel_prob.kinetic_blocks(&u_dofs);
    let kin_fluid = s_u / (2.0 * h);
    let w_sq = s_w / (2.0 * h);
    let defect_u = s_d / (2.0 * h);

    let visc_diss = vel_prob.strain_dissipation(&vel_sol.u);
    let reg_diss_u = params.kappa * vel_prob.reg_dissipation(&vel_sol.u);
    let s_rate = surface.gamma.abs_symbol(&rate, kp.k0 + 1);
    let reg_diss_eta = params.kappa * w_gamma * s_rate.iter().map(|v| v * v).sum::<f64>();

    // the step identity, τ × (pairing of the stationarity system with the
    // solution): every term above enters once
    let t1 = dk_pair;
    let t2 = tau * (kin_eta - beta_sq + defect_eta);
    let t3 = tau * (kin_fluid - w_sq + defect_u);
    let t4 = tau * reg_diss_u;
    let t5 = tau * visc_diss;
    let t6 = tau * reg_diss_eta;
    let total = t1 + t2 + t3 + t4 + t5 + t6;
    let scale = [t1, t2, t3, t4, t5, t6]
        .iter()
        .map(|t| t.abs())
        .fold(tau * (kin_eta + kin_fluid + beta_sq + w_sq).abs(), f64::max)
        .max(1e-300);
    let residual_energy = total.abs() / scale;

    // transported heat balance per fluid with the interface flux
    let mut heat_residual = [0.0; 2];
    let implied_flux: [f64; 2] = [
        (temp_sol.transported_thermal_mass[0] - temp_prob.old_thermal_mass[0]) / tau
            - temp_prob.source_totals[0],
        (temp_sol.transported_thermal_mass[1] - temp_prob.old_thermal_mass[1]) / tau
            - temp_prob.source_totals[1],
    ];
    let interface_flux = match params.transmission {
        Transmission::Finite(lambda) => {
            let flux: f64 = temp_sol
                .jumps
                .iter()
                .zip(&temp_prob.marker_weights)
                .map(|(j, w)| lambda * j * w)
                .sum();
            for fluid in 0..2 {
                let sign = if fluid == 0 { 1.0 } else { -1.0 };
                let res = implied_flux[fluid] + sign * flux;
                let sc = temp_prob.old_thermal_mass[fluid].abs().max(1.0) / tau;
                heat_residual[fluid] = res.abs() / sc;
            }
            flux
        }
        Transmission::Insulating => {
            for fluid in 0..2 {
                let sc = temp_prob.old_thermal_mass[fluid].abs().max(1.0) / tau;
                heat_residual[fluid] = implied_flux[fluid].abs() / sc;
            }
            0.0
        }
        Transmission::Superconducting => {
            // opposing reaction fluxes; closure is checked on the sum
            let sc = (temp_prob.old_thermal_mass[0] + temp_prob.old_thermal_mass[1])
                .abs()
                .max(1.0)
                / tau;
            let total_res = implied_flux[0] + implied_flux[1];
            heat_residual = [total_res.abs() / sc; 2];
            -implied_flux[0]
        }
    };

    let jump_max = temp_sol.jumps.iter().fold(0.0f64, |m, j| m.max(j.abs()));
    let jump_mean = if temp_sol.jumps.is_empty() {
        0.0
    } else {
        temp_sol.jumps.iter().map(|j| j.abs()).sum::<f64>() / temp_sol.jumps.len() as f64
    };

    let coupling_violation = {
        let mut x = vec![0.0; vel_prob.dim()];
        x[..vel_prob.n_u].copy_from_slice(&u_dofs);
        x[vel_prob.n_u..].copy_from_slice(&vel_sol.eta_new);
        let viol = vel_prob.constraint_violation(&x);
        let n_div = vel_prob.div_cells.len();
        viol[n_div..]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs() / tau))
    };

    let dissipation_step = tau * (visc_diss + reg_diss_u + reg_diss_eta + defect_eta + defect_u);

    EnergyLedger {
        step: 0,
        window: 0,
        time: 0.0,
        tau,
        kin_eta,
        kin_fluid,
        beta_sq,
        w_sq,
        elastic: k_new,
        elastic_prev: k_old,
        visc_diss,
        reg_diss_u,
        reg_diss_eta,
        defect_eta,
        defect_u,
        remainder,
        residual_energy,
        thermal: temp_sol.new_thermal_mass,
        thermal_transported: temp_sol.transported_thermal_mass,
        thermal_old: temp_prob.old_thermal_mass,
        heat_source: temp_prob.source_totals,
        cap_defect: temp_prob.cap_defect,
        interface_flux,
        heat_residual,
        jump_max,
        jump_mean,
        coupling_violation,
        div_max: vel_prob.max_divergence(&vel_sol.u),
        min_theta: temp_sol.min_theta,
        newton_iters: vel_sol.newton_iters,
        cg_iters: temp_sol.cg_iterations,
        clamps: vel_prob.assembly_clamps + temp_prob.assembly_clamps,
        orphans: temp_prob.orphans,
        clamped_cells: temp_sol.clamped_cells,
        min_gamma_bar: degeneracy.min_gamma_bar,
        coercivity: degeneracy.coercivity,
        total_energy: 0.0,
        cumulative_dissipation: prev_cumulative_dissipation + dissipation_step,
        det_psi_dev: 0.0,
        det_phi_min: 1.0,
        det_phi_max: 1.0,
    }
}

/// Entropy functional Σ_i c_i ∫φ(θ_i) over a masked state.
pub fn entropy_total(
    mask: &DomainMask,
    theta: [&[f64]; 2],
    heat_capacity: [f64; 2],
    family: EntropyTestKind,
) -> f64 {
    let vol = mask.grid.cell_volume();
    let mut total = 0.0;
    for fluid in 0..2 {
        let label = if fluid == 0 {
            CellLabel::Fluid1
        } else {
            CellLabel::Fluid2
        };
        for c in 0..mask.grid.cell_count() {
            if mask.labels[c] == label {
                let (phi, _, _) =
                    entropy_test_function(family, theta[fluid][c]).expect("positive temperature");
                total += heat_capacity[fluid] * vol * phi;
            }
        }
    }
    total
}

/// Builds the entropy-ledger row for one step and one test family.
#[allow(clippy::too_many_arguments)]
pub fn entropy_step(
    params: &ModelParams,
    mask_new: &DomainMask,
    temp_prob: &TemperatureStepProblem,
    temp_sol: &TemperatureSolution,
    prev_total: f64,
    family: EntropyTestKind,
    tau: f64,
    tol: f64,
) -> EntropyLedger {
    let grid = &mask_new.grid;
    let labels = [CellLabel::Fluid1, CellLabel::Fluid2];
    let ci = [
        params.materials[0].heat_capacity,
        params.materials[1].heat_capacity,
    ];
    let total = entropy_total(
        mask_new,
        [&temp_sol.theta[0], &temp_sol.theta[1]],
        ci,
        family,
    );

    // gradient production with the same face form as the Dirichlet assembly
    let mut production = 0.0;
    for fluid in 0..2 {
        let ki = params.materials[fluid].conductivity;
        let th = &temp_sol.theta[fluid];
        for c in 0..grid.cell_count() {
            if mask_new.labels[c] != labels[fluid] {
                continue;
            }
            let (i, j) = grid.coords(c);
            for (di, dj) in [(1usize, 0usize), (0, 1)] {
                let (ii, jj) = (i + di, j + dj);
                if ii >= grid.nx || jj >= grid.ny {
                    continue;
                }
                let nb = grid.index(ii, jj);
                if mask_new.labels[nb] != labels[fluid] {
                    continue;
                }
                let (_, dpa, _) = entropy_test_function(family, th[c]).unwrap();
                let (_, dpb, _) = entropy_test_function(family, th[nb]).unwrap();
                production += ki * (th[c] - th[nb]) * (dpa - dpb);
            }
        }
    }

    // interface production with marker quadrature
    let mut interface = 0.0;
    if let Transmission::Finite(lambda) = params.transmission {
        for (m, w) in temp_prob.marker_weights.iter().enumerate() {
            let value = |fluid: usize| -> f64 {
                temp_prob.marker_interp[fluid][m]
                    .iter()
                    .map(|&(d, wgt)| wgt * dof_to_value(temp_prob, d, temp_sol))
                    .sum()
            };
            let t1 = value(0);
            let t2 = value(1);
            let (_, dp1, _) = entropy_test_function(family, t1.max(1e-12)).unwrap();
            let (_, dp2, _) = entropy_test_function(family, t2.max(1e-12)).unwrap();
            interface += lambda * w * (t1 - t2) * (dp1 - dp2);
        }
    }

    let balance = (total - prev_total) + tau * production + tau * interface;
    EntropyLedger {
        step: 0,
        family,
        total,
        production,
        interface,
        balance,
        tol,
        holds: balance >= -tol,
    }
}

fn dof_to_value(prob: &TemperatureStepProblem, dof: usize, sol: &TemperatureSolution) -> f64 {
    // dofs are fluid-1 cells then fluid-2 cells
    if dof < prob.cells[0].len() {
        sol.theta[0][prob.cells[0][dof]]
    } else {
        sol.theta[1][prob.cells[1][dof - prob.cells[0].len()]]
    }
}

/// Discrete interface force per marker from the coupling multipliers,
/// G_j = t_j · ν(x_j) with t_j the traction density.
pub fn interface_force(
    surface: &ReferenceSurface,
    tractions: &[[f64; 2]],
    markers: &[crate::geometry::Marker],
) -> Vec<f64> {
    markers
        .iter()
        .zip(tractions)
        .map(|(m, t)| {
            let nu = surface.frames[m.node].nu;
            t[0] * nu[0] + t[1] * nu[1]
        })
        .collect()
}

/// Consistency of the interface force with the shell-side stationarity:
/// Σ_j G_j (δη_j/τ) wΓ must equal the shell power
/// ⟨DK_κ + quotient + regularizer, δη/τ⟩. Returns the relative mismatch.
#[allow(clippy::too_many_arguments)]
pub fn interface_power_mismatch(
    surface: &ReferenceSurface,
    params: &ModelParams,
    eta_k: &[f64],
    eta_new: &[f64],
    beta_k: &[f64],
    tractions: &[[f64; 2]],
    markers: &[crate::geometry::Marker],
    tau: f64,
) -> f64 {
    let w = surface.gamma.quad_weight();
    let force = interface_force(surface, tractions, markers);
    let rate: Vec<f64> = (0..eta_k.len())
        .map(|j| (eta_new[j] - eta_k[j]) / tau)
        .collect();
    let lhs: f64 = force.iter().zip(&rate).map(|(g, r)| w * g * r).sum();

    let disp = ShellDisplacement::new(&surface.gamma, eta_new, params.koiter.k0);
    let dk = koiter::koiter_gradient_kappa(surface, &disp, &params.koiter).total();
    let delta: Vec<f64> = (0..eta_k.len()).map(|j| eta_new[j] - eta_k[j]).collect();
    let s2d = surface
        .gamma
        .abs_symbol(&delta, 2 * (params.koiter.k0 + 1));
    let mut rhs = 0.0;
    for j in 0..eta_k.len() {
        let shell_force = dk[j] + (rate[j] - beta_k[j]) / params.h + params.kappa / tau * s2d[j];
        rhs += w * shell_force * rate[j];
    }
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12)
}

/// True iff every temperature in the trajectory stayed above the floor.
pub fn minimal_principle_check(min_thetas: &[f64], gamma_floor: f64) -> bool {
    min_thetas.iter().all(|&m| m >= gamma_floor - 1e-12)
}

/// The two entropy test families the ledger tracks.
pub fn entropy_families() -> [EntropyTestKind; 2] {
    [EntropyTestKind::Log, EntropyTestKind::Power(-0.5)]
}
