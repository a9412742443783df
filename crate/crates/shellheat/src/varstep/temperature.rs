//! Second minimization problem of a step: the two temperatures.
//!
//! The objective couples the transported time quotient on the old mask, the
//! Dirichlet energy on the new mask, the interface jump penalty (or a hard
//! continuity constraint in the superconducting case) and the heating
//! sources produced by the velocity step. The assembled system is symmetric
//! positive definite and is solved by Jacobi-preconditioned conjugate
//! gradients; the temperature floor is enforced afterwards by an active-set
//! projection that mirrors the truncation property of the continuous
//! minimizer.

use super::{fluid_reg_density, strain_density, StepInputs, VelocityStepProblem};
use crate::geometry::{CellLabel, DomainMask};
use crate::linalg::{pcg, SparseMatrix};
use crate::transport::{FlowMap, StepMap};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub struct TemperatureInputs<'a> {
    pub base: &'a StepInputs<'a>,
    pub vel: &'a VelocityStepProblem,
    pub mask_new: &'a DomainMask,
    pub u_new: &'a [[f64; 2]],
    pub psi: &'a StepMap,
    /// Flow maps Φ_{k+1} per fluid.
    pub flows_new: [&'a FlowMap; 2],
    pub eta_new: &'a [f64],
}

pub struct TemperatureStepProblem {
    pub mask_new: DomainMask,
    pub cells: [Vec<usize>; 2],
    pub pos: [Vec<Option<usize>>; 2],
    pub n: usize,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub const_term: f64,
    pub superconducting: bool,
    /// Continuity constraint rows per marker (superconducting case).
    pub constraint_rows: Vec<Vec<(usize, f64)>>,
    /// One-sided marker interpolation stencils per fluid.
    pub marker_interp: [Vec<Vec<(usize, f64)>>; 2],
    pub marker_weights: Vec<f64>,
    pub gamma_floor: f64,
    pub tol_cg: f64,
    pub max_cg: usize,
    /// Transport stencils of the time-quotient term (old-mask cell, dof
    /// stencil, c_i/τ weight, θ_k value, source density).
    quotient: [Vec<QuotientRow>; 2],
    /// Integrated heating per fluid (all sources, caps applied).
    pub source_totals: [f64; 2],
    /// c_i · Σ_{old mask} vol θ_k.
    pub old_thermal_mass: [f64; 2],
    /// Interpolation stencil corners dropped during assembly.
    pub assembly_clamps: usize,
    /// Cells whose fluid label flipped between the masks.
    pub orphans: usize,
    /// Energy clipped by the min{·, 1/τ} caps on the regularizer heating.
    pub cap_defect: f64,
}

struct QuotientRow {
    stencil: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct TemperatureSolution {
    /// Full-grid temperatures per fluid (valid on the new mask cells).
    pub theta: [Vec<f64>; 2],
    pub cg_iterations: usize,
    pub active_set_rounds: usize,
    pub clamped_cells: usize,
    pub el_residual: f64,
    pub spd_certified: bool,
    pub min_theta: f64,
    pub objective: f64,
    pub objective_at_start: f64,
    /// Marker temperature jumps θ₁ − θ₂.
    pub jumps: Vec<f64>,
    /// c_i · Σ_{new mask} vol θ per fluid.
    pub new_thermal_mass: [f64; 2],
    /// c_i · Σ_{old mask} vol (θ ∘ Ψ) per fluid, the quantity the discrete
    /// balance actually controls.
    pub transported_thermal_mass: [f64; 2],
}

/// One-sided bilinear stencil over cells of one fluid label; weights
/// renormalize when corners fall outside the label, with a nearest-cell
/// fallback.
fn stencil_masked(
    mask: &DomainMask,
    label: CellLabel,
    p: [f64; 2],
    pos_map: &[Option<usize>],
    clamps: &mut usize,
) -> Vec<(usize, f64)> {
    let raw = mask.grid.bilinear(p);
    let mut out = Vec::with_capacity(4);
    let mut wsum = 0.0;
    for &(c, w) in raw.iter() {
        if mask.labels[c] == label {
            if let Some(d) = pos_map[c] {
                out.push((d, w));
                wsum += w;
            }
        }
    }
    if wsum > 1e-12 {
        if out.len() < 4 {
            *clamps += 1;
        }
        for e in out.iter_mut() {
            e.1 /= wsum;
        }
        return out;
    }
    *clamps += 1;
    // nearest labeled cell
    let mut best = (f64::INFINITY, None);
    for c in 0..mask.grid.cell_count() {
        if mask.labels[c] == label {
            let q = mask.grid.center_of(c);
            let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            if d < best.0 {
                best = (d, pos_map[c]);
            }
        }
    }
    vec![(best.1.expect("nonempty fluid mask"), 1.0)]
}

pub fn assemble_temperature_step(inp: &TemperatureInputs) -> Result<TemperatureStepProblem> {
    let base = inp.base;
    let p = base.params;
    let mask_old = base.mask;
    let mask_new = inp.mask_new;
    let grid = &mask_new.grid;
    let vol = grid.cell_volume();
    let w_gamma = base.surface.gamma.quad_weight();
    let labels = [CellLabel::Fluid1, CellLabel::Fluid2];

    let cells = [
        mask_new.cells_with(CellLabel::Fluid1),
        mask_new.cells_with(CellLabel::Fluid2),
    ];
    let mut pos = [
        vec![None; grid.cell_count()],
        vec![None; grid.cell_count()],
    ];
    let offset = cells[0].len();
    for (i, &c) in cells[0].iter().enumerate() {
        pos[0][c] = Some(i);
    }
    for (i, &c) in cells[1].iter().enumerate() {
        pos[1][c] = Some(offset + i);
    }
    let n = cells[0].len() + cells[1].len();
    let mut a = SparseMatrix::zeros(n);
    let mut b = vec![0.0; n];
    let mut const_term = 0.0;
    let mut clamps = 0usize;
    let mut source_totals = [0.0; 2];
    let mut old_thermal_mass = [0.0; 2];
    let mut cap_defect = 0.0;
    let mut quotient: [Vec<QuotientRow>; 2] = [Vec::new(), Vec::new()];

    let orphans = (0..grid.cell_count())
        .filter(|&c| {
            mask_old.labels[c] != mask_new.labels[c]
                && (mask_old.is_fluid(c) || mask_new.is_fluid(c))
        })
        .count();

    // time quotient + dissipation sources, integrated over the old mask
    for fluid in 0..2 {
        let ci = p.materials[fluid].heat_capacity;
        let quot_w = ci / p.tau * vol;
        for c in 0..grid.cell_count() {
            if mask_old.labels[c] != labels[fluid] {
                continue;
            }
            let theta_old = base.theta_k[fluid][c];
            old_thermal_mass[fluid] += ci * vol * theta_old;
            let target = inp.psi.positions[c];
            let stencil = stencil_masked(mask_new, labels[fluid], target, &pos[fluid], &mut clamps);
            // viscous + capped regularizer heating density at this cell
            let s_visc = inp.vel.mu_cells[c] * strain_density(inp.u_new, mask_old, c);
            let raw_reg = fluid_reg_density(inp.u_new, mask_old, c, p.k0_fluid);
            let s_reg = p.kappa * raw_reg.min(1.0 / p.tau);
            cap_defect += p.kappa * vol * (raw_reg - raw_reg.min(1.0 / p.tau));
            let source = s_visc + s_reg;
            source_totals[fluid] += vol * source;
            for &(da, wa) in &stencil {
                b[da] += quot_w * wa * theta_old + vol * wa * source;
                for &(db, wb) in &stencil {
                    a.add(da, db, quot_w * wa * wb);
                }
            }
            const_term += 0.5 * quot_w * theta_old * theta_old;
            quotient[fluid].push(QuotientRow { stencil });
        }
    }

    // Dirichlet energy on the new mask
    for fluid in 0..2 {
        let ki = p.materials[fluid].conductivity;
        for &c in &cells[fluid] {
            let (i, j) = grid.coords(c);
            for (di, dj) in [(1i64, 0i64), (0, 1)] {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii >= grid.nx as i64 || jj >= grid.ny as i64 {
                    continue;
                }
                let nb = grid.index(ii as usize, jj as usize);
                if mask_new.labels[nb] != labels[fluid] {
                    continue;
                }
                let da = pos[fluid][c].unwrap();
                let db = pos[fluid][nb].unwrap();
                a.add(da, da, ki);
                a.add(db, db, ki);
                a.add(da, db, -ki);
                a.add(db, da, -ki);
            }
        }
    }

    // marker stencils on both sides of the new interface
    let mut marker_interp: [Vec<Vec<(usize, f64)>>; 2] = [Vec::new(), Vec::new()];
    let mut marker_weights = Vec::new();
    for marker in &mask_new.markers {
        for fluid in 0..2 {
            marker_interp[fluid].push(stencil_masked(
                mask_new,
                labels[fluid],
                marker.pos,
                &pos[fluid],
                &mut clamps,
            ));
        }
        marker_weights.push(marker.arc_weight);
    }

    // interface coupling: penalty for finite conductance, hard rows for the
    // superconducting case
    let superconducting = matches!(p.transmission, crate::materials::Transmission::Superconducting);
    let mut constraint_rows = Vec::new();
    match p.transmission {
        crate::materials::Transmission::Finite(lambda) => {
            for (m, _) in mask_new.markers.iter().enumerate() {
                let wj = lambda * marker_weights[m];
                let mut row: Vec<(usize, f64)> = marker_interp[0][m].clone();
                for &(d, w) in &marker_interp[1][m] {
                    row.push((d, -w));
                }
                for &(da, wa) in &row {
                    for &(db, wb) in &row {
                        a.add(da, db, wj * wa * wb);
                    }
                }
            }
        }
        crate::materials::Transmission::Superconducting => {
            for (m, _) in mask_new.markers.iter().enumerate() {
                let mut row: Vec<(usize, f64)> = marker_interp[0][m].clone();
                for &(d, w) in &marker_interp[1][m] {
                    row.push((d, -w));
                }
                constraint_rows.push(row);
            }
        }
        crate::materials::Transmission::Insulating => {}
    }

    // structural heating into fluid 1, weighted onto the new interface trace
    let delta_eta: Vec<f64> = (0..base.eta_k.len())
        .map(|j| inp.eta_new[j] - base.eta_k[j])
        .collect();
    let s_delta = base
        .surface
        .gamma
        .abs_symbol(&delta_eta, p.koiter.k0 + 1);
    for (m, marker) in mask_new.markers.iter().enumerate() {
        let j = marker.node;
        let rate = delta_eta[j] / p.tau - base.beta_k[j];
        let mut s = 0.5 / p.h * rate * rate;
        let reg_rate = (s_delta[j] / p.tau).powi(2);
        s += p.kappa * reg_rate.min(1.0 / p.tau);
        cap_defect += p.kappa * w_gamma * (reg_rate - reg_rate.min(1.0 / p.tau));
        let weight = w_gamma * s;
        source_totals[0] += weight;
        for &(d, w) in &marker_interp[0][m] {
            b[d] += weight * w;
        }
    }

    // kinetic-defect heating, integrated over the window-initial cells and
    // read back through Φ_{k+1}; reuses the velocity problem's stencils so
    // the heating matches the dissipation block exactly
    for fluid in 0..2 {
        let flow_new = inp.flows_new[fluid];
        let (stencils, targets) = inp.vel.kin_data(fluid);
        assert_eq!(flow_new.positions.len(), stencils.len());
        for (r, posn) in flow_new.positions.iter().enumerate() {
            let mut defect = 0.0;
            for comp in 0..2 {
                let mut val = 0.0;
                for &(pu, w) in stencils[r].iter() {
                    if w != 0.0 {
                        val += w * inp.vel.u_dof_value(inp.u_new, pu, comp);
                    }
                }
                let d = val - targets[r][comp];
                defect += d * d;
            }
            let s = 0.5 / p.h * defect;
            source_totals[fluid] += vol * s;
            let stencil =
                stencil_masked(mask_new, labels[fluid], *posn, &pos[fluid], &mut clamps);
            for &(d, w) in &stencil {
                b[d] += vol * s * w;
            }
        }
    }

    Ok(TemperatureStepProblem {
        mask_new: mask_new.clone(),
        cells,
        pos,
        n,
        a,
        b,
        const_term,
        superconducting,
        constraint_rows,
        marker_interp,
        marker_weights,
        gamma_floor: p.cap.gamma_floor,
        tol_cg: p.tol_cg,
        max_cg: p.max_cg,
        quotient,
        source_totals,
        old_thermal_mass,
        assembly_clamps: clamps,
        orphans,
        cap_defect,
    })
}

impl TemperatureStepProblem {
    /// Objective value ½θᵀAθ − bᵀθ + const.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let ax = self.a.matvec(x);
        let mut v = self.const_term;
        for i in 0..self.n {
            v += 0.5 * x[i] * ax[i] - self.b[i] * x[i];
        }
        v
    }

    /// Stationarity residual on the free set, relative to ‖b‖.
    pub fn el_residual(&self, x: &[f64], clamped: &[bool]) -> f64 {
        let ax = self.a.matvec(x);
        let mut rn = 0.0;
        for i in 0..self.n {
            if !clamped[i] {
                let r = self.b[i] - ax[i];
                rn += r * r;
            }
        }
        let bn = self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        rn.sqrt() / bn.max(1e-300)
    }

    fn project_constraints(&self, v: &mut [f64], factor: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) {
        // v ← v − Cᵀ(CCᵀ)⁻¹ C v
        let m = self.constraint_rows.len();
        let mut cv = DVector::zeros(m);
        for (r, row) in self.constraint_rows.iter().enumerate() {
            cv[r] = row.iter().map(|&(d, w)| w * v[d]).sum();
        }
        if let Some(y) = factor.solve(&cv) {
            for (r, row) in self.constraint_rows.iter().enumerate() {
                for &(d, w) in row {
                    v[d] -= w * y[r];
                }
            }
        }
    }

    pub fn marker_jumps(&self, x: &[f64]) -> Vec<f64> {
        (0..self.marker_interp[0].len())
            .map(|m| {
                let t1: f64 = self.marker_interp[0][m].iter().map(|&(d, w)| w * x[d]).sum();
                let t2: f64 = self.marker_interp[1][m].iter().map(|&(d, w)| w * x[d]).sum();
                t1 - t2
            })
            .collect()
    }

    /// Thermal mass the quotient term transports, per fluid:
    /// c_i Σ over old-mask cells of vol·(θ∘Ψ).
    pub fn transported_mass(&self, x: &[f64], heat_capacity: [f64; 2]) -> [f64; 2] {
        let vol = self.mask_new.grid.cell_volume();
        let mut out = [0.0; 2];
        for fluid in 0..2 {
            for row in &self.quotient[fluid] {
                let v: f64 = row.stencil.iter().map(|&(d, w)| w * x[d]).sum();
                out[fluid] += heat_capacity[fluid] * vol * v;
            }
        }
        out
    }
}

pub fn solve_temperature_step(
    prob: &TemperatureStepProblem,
    theta_init: [&[f64]; 2],
    mask_old: &DomainMask,
    heat_capacity: [f64; 2],
) -> Result<TemperatureSolution> {
    let n = prob.n;
    let labels = [CellLabel::Fluid1, CellLabel::Fluid2];
    // initial guess: old values where the label persisted, nearest old cell
    // otherwise, floored
    let mut x = vec![prob.gamma_floor; n];
    for fluid in 0..2 {
        for &c in &prob.cells[fluid] {
            let d = prob.pos[fluid][c].unwrap();
            let v = if mask_old.labels[c] == labels[fluid] {
                theta_init[fluid][c]
            } else {
                let p = prob.mask_new.grid.center_of(c);
                let mut best = (f64::INFINITY, prob.gamma_floor);
                for cc in 0..prob.mask_new.grid.cell_count() {
                    if mask_old.labels[cc] == labels[fluid] {
                        let q = prob.mask_new.grid.center_of(cc);
                        let dist = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                        if dist < best.0 {
                            best = (dist, theta_init[fluid][cc]);
                        }
                    }
                }
                best.1
            };
            x[d] = v.max(prob.gamma_floor);
        }
    }

    let factor = if prob.superconducting {
        let m = prob.constraint_rows.len();
        let mut cct = DMatrix::zeros(m, m);
        for (r, row) in prob.constraint_rows.iter().enumerate() {
            for (s, row2) in prob.constraint_rows.iter().enumerate() {
                let mut acc = 0.0;
                for &(d1, w1) in row {
                    for &(d2, w2) in row2 {
                        if d1 == d2 {
                            acc += w1 * w2;
                        }
                    }
                }
                cct[(r, s)] = acc;
            }
        }
        Some(cct.lu())
    } else {
        None
    };

    // feasible start for the superconducting constraints
    if let Some(f) = &factor {
        let m = prob.constraint_rows.len();
        let mut cv = DVector::zeros(m);
        for (r, row) in prob.constraint_rows.iter().enumerate() {
            cv[r] = row.iter().map(|&(d, w)| w * x[d]).sum();
        }
        if let Some(y) = f.solve(&cv) {
            for (r, row) in prob.constraint_rows.iter().enumerate() {
                for &(d, w) in row {
                    x[d] -= w * y[r];
                }
            }
        }
    }

    let objective_at_start = prob.objective(&x);
    let mut clamped = vec![false; n];
    let mut cg_total = 0;
    let mut rounds = 0;
    let mut spd = true;
    for round in 0..=5 {
        rounds = round + 1;
        let free: Vec<bool> = clamped.iter().map(|c| !c).collect();
        let projector = factor.as_ref().map(|f| {
            let prob_ref = &*prob;
            move |v: &mut [f64]| prob_ref.project_constraints(v, f)
        });
        let report = match &projector {
            Some(p) => {
                let f: &dyn Fn(&mut [f64]) = p;
                pcg(&prob.a, &prob.b, &mut x, &free, prob.tol_cg, prob.max_cg, Some(f))
            }
            None => pcg(&prob.a, &prob.b, &mut x, &free, prob.tol_cg, prob.max_cg, None),
        };
        cg_total += report.iterations;
        spd = spd && report.spd_certified;
        if !report.converged {
            return Err(Error::Solver {
                step: 0,
                reason: format!(
                    "temperature CG stalled at relative residual {:.3e}",
                    report.rel_residual
                ),
            });
        }
        let mut new_clamps = 0;
        for i in 0..n {
            if !clamped[i] && x[i] < prob.gamma_floor - 1e-12 {
                clamped[i] = true;
                x[i] = prob.gamma_floor;
                new_clamps += 1;
            }
        }
        if new_clamps == 0 {
            break;
        }
        if round == 5 {
            return Err(Error::Solver {
                step: 0,
                reason: "temperature floor projection did not settle".into(),
            });
        }
    }

    let el = prob.el_residual(&x, &clamped);
    let min_theta = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let jumps = prob.marker_jumps(&x);
    let vol = prob.mask_new.grid.cell_volume();
    let mut new_thermal_mass = [0.0; 2];
    let grid_cells = prob.mask_new.grid.cell_count();
    let mut theta = [vec![0.0; grid_cells], vec![0.0; grid_cells]];
    for fluid in 0..2 {
        // carry old values outside the new mask so later sampling near the
        // boundary has sane data
        for c in 0..grid_cells {
            theta[fluid][c] = theta_init[fluid][c];
        }
        for &c in &prob.cells[fluid] {
            let v = x[prob.pos[fluid][c].unwrap()];
            theta[fluid][c] = v;
            new_thermal_mass[fluid] += heat_capacity[fluid] * vol * v;
        }
    }
    let transported_thermal_mass = prob.transported_mass(&x, heat_capacity);
    Ok(TemperatureSolution {
        theta,
        cg_iterations: cg_total,
        active_set_rounds: rounds,
        clamped_cells: clamped.iter().filter(|&&c| c).count(),
        el_residual: el,
        spd_certified: spd,
        min_theta,
        objective: prob.objective(&x),
        objective_at_start,
        jumps,
        new_thermal_mass,
        transported_thermal_mass,
    })
}

/// Stationarity residual of an arbitrary candidate (no clamping assumed).
pub fn temperature_el_residual(prob: &TemperatureStepProblem, x: &[f64]) -> f64 {
    prob.el_residual(x, &vec![false; prob.n])
}
