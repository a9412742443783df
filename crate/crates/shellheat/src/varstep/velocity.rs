//! First minimization problem of a step: joint velocity/displacement update.
//!
//! Unknowns are one velocity field on the fluid cells of the current mask
//! (both fluids share the trace at the interface, so a single field is the
//! natural discretization) and the shell displacement on the parameter
//! nodes. The objective is the shell energy plus the time-quotient and
//! dissipation blocks of the scheme; constraints are the centered discrete
//! divergence on full-stencil cells and the marker coupling between the
//! interpolated velocity and the displacement quotient. The solve is a
//! feasible-start damped Newton iteration on the KKT system with an exact
//! shell Hessian.

use super::{fluid_reg_density, strain_density, ModelParams, StepInputs};
use crate::geometry::{CellLabel, DomainMask, ReferenceSurface};
use crate::koiter::{self, ShellDisplacement};
use crate::linalg::SparseMatrix;
use crate::materials::capped_viscosity;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub struct VelocityStepProblem {
    pub fluid_cells: Vec<usize>,
    pub cell_pos: Vec<Option<usize>>,
    pub div_cells: Vec<usize>,
    pub n_u: usize,
    pub n_eta: usize,
    /// Constant Hessian of the velocity blocks.
    h_uu: SparseMatrix,
    /// Linear term: the velocity part of the objective is ½uᵀHu − b·u.
    b_u: Vec<f64>,
    /// Constant objective offset (τ/2h)Σ|w|².
    const_j: f64,
    /// Constraint rows over [u; η]: divergence rows then 2 coupling rows per
    /// marker (scaled to O(1)).
    c_mat: SparseMatrix,
    c_rhs: Vec<f64>,
    /// |k|^{2(k0+1)} symbol matrix on the shell nodes.
    s2: DMatrix<f64>,
    pub surface: ReferenceSurface,
    pub params: ModelParams,
    pub mask: DomainMask,
    pub eta_k: Vec<f64>,
    pub beta_k: Vec<f64>,
    /// Per-cell capped viscosity used in the dissipation block.
    pub mu_cells: Vec<f64>,
    /// Interpolation stencils (u dofs) and targets of the kinetic-defect
    /// block, per fluid, per reference cell.
    kin_stencils: [Vec<[(usize, f64); 4]>; 2],
    kin_targets: [Vec<[f64; 2]>; 2],
    /// Stencil corners dropped during assembly (interface fringe).
    pub assembly_clamps: usize,
}

#[derive(Clone, Debug)]
pub struct VelocitySolution {
    /// Full-grid velocity (zero outside fluid cells).
    pub u: Vec<[f64; 2]>,
    pub eta_new: Vec<f64>,
    /// Divergence multipliers, rescaled to pressure-like units.
    pub pressures: Vec<f64>,
    /// Coupling multipliers per marker, as traction densities against the
    /// parameter-line quadrature.
    pub tractions: Vec<[f64; 2]>,
    /// Raw constraint multipliers in row order (for residual evaluation).
    pub multipliers: Vec<f64>,
    pub newton_iters: usize,
    pub el_residual: f64,
    pub objective: f64,
}

fn u_dof(pos: usize, comp: usize) -> usize {
    2 * pos + comp
}

pub fn assemble_velocity_step(inp: &StepInputs) -> Result<VelocityStepProblem> {
    let mask = inp.mask;
    let grid = &mask.grid;
    let p = inp.params;
    let vol = grid.cell_volume();
    let n_nodes = inp.surface.node_count();

    let fluid_cells: Vec<usize> = (0..grid.cell_count()).filter(|&c| mask.is_fluid(c)).collect();
    if fluid_cells.is_empty()
        || !fluid_cells.iter().any(|&c| mask.labels[c] == CellLabel::Fluid2)
        || !fluid_cells.iter().any(|&c| mask.labels[c] == CellLabel::Fluid1)
    {
        return Err(Error::Internal("a fluid mask is empty".into()));
    }
    let mut cell_pos = vec![None; grid.cell_count()];
    for (pos, &c) in fluid_cells.iter().enumerate() {
        cell_pos[c] = Some(pos);
    }
    let n_u = 2 * fluid_cells.len();
    let mut h_uu = SparseMatrix::zeros(n_u);
    let mut b_u = vec![0.0; n_u];
    let mut const_j = 0.0;
    let mut assembly_clamps = 0usize;

    // kinetic defect (τ/2h)∫|u∘Φ − w|² over reference cells
    let mut kin_stencils: [Vec<[(usize, f64); 4]>; 2] = [Vec::new(), Vec::new()];
    let mut kin_targets: [Vec<[f64; 2]>; 2] = [Vec::new(), Vec::new()];
    let kin_w = p.tau / p.h * vol;
    for fluid in 0..2 {
        let flow = inp.flows[fluid];
        let w_data = inp.w_k[fluid];
        assert_eq!(flow.positions.len(), w_data.len());
        for (r, pos) in flow.positions.iter().enumerate() {
            let raw = grid.bilinear(*pos);
            let mut stencil = [(0usize, 0.0); 4];
            let mut wsum = 0.0;
            let mut kept = 0;
            for &(c, w) in raw.iter() {
                if let Some(pos) = cell_pos[c] {
                    stencil[kept] = (pos, w);
                    wsum += w;
                    kept += 1;
                }
            }
            if kept == 0 {
                return Err(Error::Internal(
                    "flow map position left the fluid region".into(),
                ));
            }
            if kept < 4 {
                assembly_clamps += 1;
            }
            for s in stencil.iter_mut().take(kept) {
                s.1 /= wsum;
            }
            for comp in 0..2 {
                let target = w_data[r][comp];
                for a in 0..kept {
                    let (pa, wa) = stencil[a];
                    b_u[u_dof(pa, comp)] += kin_w * wa * target;
                    for b in 0..kept {
                        let (pb, wb) = stencil[b];
                        h_uu.add(u_dof(pa, comp), u_dof(pb, comp), kin_w * wa * wb);
                    }
                }
                const_j += 0.5 * kin_w * target * target;
            }
            kin_stencils[fluid].push(stencil);
            kin_targets[fluid].push(w_data[r]);
        }
    }

    // viscous dissipation (τ/2)∫μ^M(θ_k)|D u|²: three linear functionals per
    // cell (two normal strains, one shear), outer products into the Hessian
    let mut mu_cells = vec![0.0; grid.cell_count()];
    let inv2dx = 1.0 / (2.0 * grid.dx);
    let neighbor = |c: usize, di: i64, dj: i64| -> Option<usize> {
        let (i, j) = grid.coords(c);
        let (ii, jj) = (i as i64 + di, j as i64 + dj);
        if ii < 0 || jj < 0 || ii >= grid.nx as i64 || jj >= grid.ny as i64 {
            None
        } else {
            Some(grid.index(ii as usize, jj as usize))
        }
    };
    for &c in &fluid_cells {
        let fluid = if mask.labels[c] == CellLabel::Fluid1 { 0 } else { 1 };
        let mu = capped_viscosity(inp.theta_k[fluid][c], &p.materials[fluid], &p.cap);
        mu_cells[c] = mu;
        let mut functionals: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(3);
        let deriv_entries = |di: i64, dj: i64, comp: usize| -> Vec<(usize, f64)> {
            let mut ent = Vec::with_capacity(2);
            if let Some(n) = neighbor(c, di, dj) {
                if let Some(pn) = cell_pos[n] {
                    ent.push((u_dof(pn, comp), inv2dx));
                }
            }
            if let Some(n) = neighbor(c, -di, -dj) {
                if let Some(pn) = cell_pos[n] {
                    ent.push((u_dof(pn, comp), -inv2dx));
                }
            }
            ent
        };
        functionals.push((deriv_entries(1, 0, 0), 1.0)); // ∂x u_x
        functionals.push((deriv_entries(0, 1, 1), 1.0)); // ∂y u_y
        let mut shear = deriv_entries(0, 1, 0);
        for (d, v) in deriv_entries(1, 0, 1) {
            shear.push((d, v));
        }
        for e in shear.iter_mut() {
            e.1 *= 0.5;
        }
        functionals.push((shear, 2.0));
        let wgt = p.tau * vol * mu;
        for (ent, fac) in &functionals {
            for &(da, va) in ent {
                for &(db, vb) in ent {
                    h_uu.add(da, db, wgt * fac * va * vb);
                }
            }
        }
    }

    // fluid regularizer (τκ/2)∫|∇^{k0f}u|² as outer products of its stencils
    if p.kappa > 0.0 {
        let wreg = p.tau * p.kappa * vol;
        for &c in &fluid_cells {
            for comp in 0..2 {
                let mut stencils: Vec<Vec<(usize, f64)>> = Vec::new();
                if p.k0_fluid == 1 {
                    for (di, dj) in [(1i64, 0i64), (0, 1)] {
                        let mut ent = Vec::new();
                        if let Some(n) = neighbor(c, di, dj) {
                            if let Some(pn) = cell_pos[n] {
                                ent.push((u_dof(pn, comp), inv2dx));
                            }
                        }
                        if let Some(n) = neighbor(c, -di, -dj) {
                            if let Some(pn) = cell_pos[n] {
                                ent.push((u_dof(pn, comp), -inv2dx));
                            }
                        }
                        stencils.push(ent);
                    }
                } else {
                    let invdx2 = 1.0 / (grid.dx * grid.dx);
                    let mut ent = vec![(u_dof(cell_pos[c].unwrap(), comp), -4.0 * invdx2)];
                    for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                        if let Some(n) = neighbor(c, di, dj) {
                            if let Some(pn) = cell_pos[n] {
                                ent.push((u_dof(pn, comp), invdx2));
                            }
                        }
                    }
                    stencils.push(ent);
                }
                for ent in &stencils {
                    for &(da, va) in ent {
                        for &(db, vb) in ent {
                            h_uu.add(da, db, wreg * va * vb);
                        }
                    }
                }
            }
        }
    }

    // optional body force −τ∫f·u
    if let Some(f) = inp.body_force {
        for &c in &fluid_cells {
            let pos = cell_pos[c].unwrap();
            for comp in 0..2 {
                b_u[u_dof(pos, comp)] += p.tau * vol * f[c][comp];
            }
        }
    }

    // Divergence rows on every fluid cell, wall neighbors reading as zero.
    // On a grid whose interior is odd in both directions the rows over the
    // odd-odd sublattice telescope wall to wall and sum to zero exactly; one
    // row of that sublattice is implied by the rest and is skipped so the
    // constraint matrix keeps full row rank.
    let mut div_cells: Vec<usize> = fluid_cells.clone();
    if grid.nx % 2 == 1 && grid.ny % 2 == 1 {
        if let Some(pos) = div_cells.iter().position(|&c| {
            let (i, j) = grid.coords(c);
            i % 2 == 1 && j % 2 == 1
        }) {
            div_cells.remove(pos);
        }
    }
    let n_con = div_cells.len() + 2 * mask.markers.len();
    let mut c_mat = SparseMatrix::zeros(n_con);
    let mut c_rhs = vec![0.0; n_con];
    for (row, &c) in div_cells.iter().enumerate() {
        // scaled by dx: entries ±1/2
        for (di, dj, comp, sign) in
            [(1i64, 0i64, 0, 0.5), (-1, 0, 0, -0.5), (0, 1, 1, 0.5), (0, -1, 1, -0.5)]
        {
            if let Some(nb) = neighbor(c, di, dj) {
                if let Some(pos) = cell_pos[nb] {
                    c_mat.add(row, u_dof(pos, comp), sign);
                }
            }
        }
    }
    for (m, marker) in mask.markers.iter().enumerate() {
        let nu = inp.surface.frames[marker.node].nu;
        let mut stencil = Vec::with_capacity(4);
        let mut wsum = 0.0;
        for &(c, w) in marker.stencil.iter() {
            if let Some(pos) = cell_pos[c] {
                stencil.push((pos, w));
                wsum += w;
            }
        }
        if stencil.is_empty() {
            return Err(Error::Internal("marker stencil left the fluid region".into()));
        }
        if stencil.len() < 4 {
            assembly_clamps += 1;
            for s in stencil.iter_mut() {
                s.1 /= wsum;
            }
        }
        for comp in 0..2 {
            let row = div_cells.len() + 2 * m + comp;
            for &(pos, w) in &stencil {
                c_mat.add(row, u_dof(pos, comp), p.tau * w);
            }
            c_mat.add(row, n_u + marker.node, -nu[comp]);
            c_rhs[row] = -inp.eta_k[marker.node] * nu[comp];
        }
    }

    // spectral symbol matrix for the displacement regularizer Hessian
    let n = n_nodes;
    let mut s2 = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = inp.surface.gamma.abs_symbol(&e, 2 * (p.koiter.k0 + 1));
        for i in 0..n {
            s2[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }

    Ok(VelocityStepProblem {
        fluid_cells,
        cell_pos,
        div_cells,
        n_u,
        n_eta: n_nodes,
        h_uu,
        b_u,
        const_j,
        c_mat,
        c_rhs,
        s2,
        surface: inp.surface.clone(),
        params: p.clone(),
        mask: mask.clone(),
        eta_k: inp.eta_k.to_vec(),
        beta_k: inp.beta_k.to_vec(),
        mu_cells,
        kin_stencils,
        kin_targets,
        assembly_clamps,
    })
}

impl VelocityStepProblem {
    pub fn dim(&self) -> usize {
        self.n_u + self.n_eta
    }

    pub fn n_con(&self) -> usize {
        self.c_mat.dim()
    }

    fn w_gamma(&self) -> f64 {
        self.surface.gamma.quad_weight()
    }

    /// Objective value at (u, η).
    pub fn objective(&self, x: &[f64]) -> f64 {
        let (u, eta) = x.split_at(self.n_u);
        let p = &self.params;
        let hu = self.h_uu.matvec(u);
        let mut val = self.const_j;
        for i in 0..self.n_u {
            val += 0.5 * u[i] * hu[i] - self.b_u[i] * u[i];
        }
        let disp = ShellDisplacement::new(&self.surface.gamma, eta, p.koiter.k0);
        val += koiter::koiter_energy(&self.surface, &disp, &p.koiter)
            + koiter::regularizer_energy(&self.surface, &disp, &p.koiter);
        let w = self.w_gamma();
        let mut quad = 0.0;
        let delta: Vec<f64> = (0..self.n_eta).map(|j| eta[j] - self.eta_k[j]).collect();
        for j in 0..self.n_eta {
            let d = delta[j] - p.tau * self.beta_k[j];
            quad += d * d;
        }
        val += w / (2.0 * p.h * p.tau) * quad;
        if p.kappa > 0.0 {
            let s_delta = self
                .surface
                .gamma
                .abs_symbol(&delta, p.koiter.k0 + 1);
            val += w * p.kappa / (2.0 * p.tau) * s_delta.iter().map(|v| v * v).sum::<f64>();
        }
        val
    }

    /// Gradient of the objective.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (u, eta) = x.split_at(self.n_u);
        let p = &self.params;
        let mut g = vec![0.0; self.dim()];
        let hu = self.h_uu.matvec(u);
        for i in 0..self.n_u {
            g[i] = hu[i] - self.b_u[i];
        }
        let disp = ShellDisplacement::new(&self.surface.gamma, eta, p.koiter.k0);
        let dk = koiter::koiter_gradient_kappa(&self.surface, &disp, &p.koiter).total();
        let w = self.w_gamma();
        let delta: Vec<f64> = (0..self.n_eta).map(|j| eta[j] - self.eta_k[j]).collect();
        let s2_delta = if p.kappa > 0.0 {
            self.surface
                .gamma
                .abs_symbol(&delta, 2 * (p.koiter.k0 + 1))
        } else {
            vec![0.0; self.n_eta]
        };
        for j in 0..self.n_eta {
            g[self.n_u + j] = w * dk[j]
                + w / (p.h * p.tau) * (delta[j] - p.tau * self.beta_k[j])
                + w * p.kappa / p.tau * s2_delta[j];
        }
        g
    }

    /// Constraint residual C·x − rhs.
    pub fn constraint_violation(&self, x: &[f64]) -> Vec<f64> {
        let cx = self.c_mat.matvec(x);
        cx.iter().zip(&self.c_rhs).map(|(a, b)| a - b).collect()
    }

    /// Absolute stationarity residual ‖∇J + Cᵀμ‖ (constraint violation
    /// appended) and the gradient norm it is judged against.
    pub fn stationarity(&self, x: &[f64], mult: &[f64]) -> (f64, f64) {
        let g = self.gradient(x);
        let mut r: Vec<f64> = g.clone();
        for (row, entries) in self.c_mat.rows.iter().enumerate() {
            for &(col, v) in entries {
                r[col] += mult[row] * v;
            }
        }
        let cviol = self.constraint_violation(x);
        let rn = r.iter().map(|v| v * v).sum::<f64>()
            + cviol.iter().map(|v| v * v).sum::<f64>();
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        (rn.sqrt(), gn)
    }

    /// Stationarity residual relative to max(1, ‖∇J‖).
    pub fn el_residual(&self, x: &[f64], mult: &[f64]) -> f64 {
        let (rn, gn) = self.stationarity(x, mult);
        rn / gn.max(1.0)
    }

    /// Attainable absolute accuracy of the shell gradient: the high-order
    /// spectral symbol amplifies FFT roundoff by (n/2)^{2(k0+1)}, which puts
    /// a hard floor under any stationarity test.
    pub fn gradient_noise_floor(&self, x: &[f64]) -> f64 {
        let p = &self.params;
        if p.kappa == 0.0 {
            return 0.0;
        }
        let n = self.n_eta as f64;
        let sym_max = (n / 2.0).powi(2 * (p.koiter.k0 as i32 + 1));
        let eta = &x[self.n_u..];
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let delta: Vec<f64> = (0..self.n_eta)
            .map(|j| eta[j] - self.eta_k[j])
            .collect();
        64.0 * f64::EPSILON
            * sym_max
            * self.w_gamma()
            * p.kappa
            * (norm(eta) + norm(&delta) / p.tau)
    }

    /// Ledger blocks of the kinetic-defect term at a solution: vol-weighted
    /// sums of |u∘Φ|², |w|², |u∘Φ − w|².
    pub fn kinetic_blocks(&self, u: &[f64]) -> (f64, f64, f64) {
        let vol = self.mask.grid.cell_volume();
        let mut s_u = 0.0;
        let mut s_w = 0.0;
        let mut s_d = 0.0;
        for fluid in 0..2 {
            for (stencil, target) in self.kin_stencils[fluid].iter().zip(&self.kin_targets[fluid]) {
                for comp in 0..2 {
                    let mut val = 0.0;
                    for &(pos, w) in stencil.iter() {
                        if w != 0.0 {
                            val += w * u[u_dof(pos, comp)];
                        }
                    }
                    s_u += vol * val * val;
                    s_w += vol * target[comp] * target[comp];
                    let d = val - target[comp];
                    s_d += vol * d * d;
                }
            }
        }
        (s_u, s_w, s_d)
    }

    /// Viscous dissipation ∫μ^M|D_h u|² on the full-grid velocity.
    pub fn strain_dissipation(&self, u_grid: &[[f64; 2]]) -> f64 {
        let vol = self.mask.grid.cell_volume();
        self.fluid_cells
            .iter()
            .map(|&c| vol * self.mu_cells[c] * strain_density(u_grid, &self.mask, c))
            .sum()
    }

    /// Regularizer dissipation ∫|∇^{k0f}u|² (no κ factor).
    pub fn reg_dissipation(&self, u_grid: &[[f64; 2]]) -> f64 {
        let vol = self.mask.grid.cell_volume();
        self.fluid_cells
            .iter()
            .map(|&c| vol * fluid_reg_density(u_grid, &self.mask, c, self.params.k0_fluid))
            .sum()
    }

    /// The assembled constraint matrix over [u; η].
    pub fn constraints(&self) -> &SparseMatrix {
        &self.c_mat
    }

    /// Kinetic-defect interpolation stencils and targets of one fluid.
    pub fn kin_data(&self, fluid: usize) -> (&[[(usize, f64); 4]], &[[f64; 2]]) {
        (&self.kin_stencils[fluid], &self.kin_targets[fluid])
    }

    /// Reads one velocity component at a DOF position from a full-grid field.
    pub fn u_dof_value(&self, u_grid: &[[f64; 2]], pos: usize, comp: usize) -> f64 {
        u_grid[self.fluid_cells[pos]][comp]
    }

    /// Scatters DOFs to a full-grid velocity field.
    pub fn u_to_grid(&self, u: &[f64]) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; self.mask.grid.cell_count()];
        for (pos, &c) in self.fluid_cells.iter().enumerate() {
            out[c] = [u[u_dof(pos, 0)], u[u_dof(pos, 1)]];
        }
        out
    }

    /// Maximum unscaled centered divergence over the constrained cells
    /// (wall neighbors read as zero).
    pub fn max_divergence(&self, u_grid: &[[f64; 2]]) -> f64 {
        let g = &self.mask.grid;
        let val = |i: i64, j: i64, comp: usize| -> f64 {
            if i < 0 || j < 0 || i >= g.nx as i64 || j >= g.ny as i64 {
                return 0.0;
            }
            let c = g.index(i as usize, j as usize);
            if self.mask.is_fluid(c) {
                u_grid[c][comp]
            } else {
                0.0
            }
        };
        let mut max = 0.0f64;
        for &c in self.div_cells.iter() {
            let (i, j) = g.coords(c);
            let (i, j) = (i as i64, j as i64);
            let d = (val(i + 1, j, 0) - val(i - 1, j, 0) + val(i, j + 1, 1) - val(i, j - 1, 1))
                / (2.0 * g.dx);
            max = max.max(d.abs());
        }
        max
    }
}

/// Feasible-start damped Newton on the KKT system.
pub fn solve_velocity_step(prob: &VelocityStepProblem) -> Result<VelocitySolution> {
    let p = &prob.params;
    let nx = prob.dim();
    let nc = prob.n_con();
    let w_gamma = prob.w_gamma();

    // start at rest with the displacement held, which satisfies all
    // constraints exactly
    let mut x = vec![0.0; nx];
    x[prob.n_u..].copy_from_slice(&prob.eta_k);
    let mut mult = vec![0.0; nc];
    let mut newton_iters = 0;

    let mut rho = 0.0;
    let h_scale = {
        let mut m: f64 = 1.0;
        for row in &prob.h_uu.rows {
            for &(_, v) in row {
                m = m.max(v.abs());
            }
        }
        m
    };

    let accept = |prob: &VelocityStepProblem, x: &[f64], mult: &[f64]| -> bool {
        let (rn, gn) = prob.stationarity(x, mult);
        rn <= p.tol_newton * gn.max(1.0) + prob.gradient_noise_floor(x)
    };

    for it in 0..p.max_newton {
        newton_iters = it;
        let g = prob.gradient(&x);
        // residual with current multipliers
        if accept(prob, &x, &mult) {
            break;
        }
        let res = prob.el_residual(&x, &mult);

        // assemble the KKT matrix
        let eta = &x[prob.n_u..];
        let hk = koiter::koiter_hessian_matrix(&prob.surface, eta, &p.koiter);
        let dim = nx + nc;
        let mut kkt = DMatrix::zeros(dim, dim);
        for (r, row) in prob.h_uu.rows.iter().enumerate() {
            for &(c, v) in row {
                kkt[(r, c)] += v;
            }
        }
        for j in 0..prob.n_eta {
            for i in 0..prob.n_eta {
                kkt[(prob.n_u + i, prob.n_u + j)] += w_gamma * hk[j][i]
                    + w_gamma * p.kappa / p.tau * prob.s2[(i, j)];
            }
            kkt[(prob.n_u + j, prob.n_u + j)] += w_gamma / (p.h * p.tau);
        }
        if rho > 0.0 {
            for i in 0..nx {
                kkt[(i, i)] += rho;
            }
        }
        for (r, row) in prob.c_mat.rows.iter().enumerate() {
            for &(c, v) in row {
                kkt[(nx + r, c)] = v;
                kkt[(c, nx + r)] = v;
            }
        }
        let mut rhs = DVector::zeros(dim);
        for i in 0..nx {
            rhs[i] = -g[i];
        }
        // keep iterates on the constraint manifold even under drift
        let cviol = prob.constraint_violation(&x);
        for r in 0..nc {
            rhs[nx + r] = -cviol[r];
        }

        // LU with two rounds of iterative refinement: the raw solve floors
        // the attainable stationarity residual near 1e-10 on ill-conditioned
        // saddle systems, refinement pushes it to solver tolerance
        let lu = kkt.clone().lu();
        let sol = match lu.solve(&rhs) {
            Some(mut s) => {
                for _ in 0..2 {
                    let linres = &rhs - &kkt * &s;
                    if let Some(corr) = lu.solve(&linres) {
                        s += corr;
                    }
                }
                s
            }
            None => {
                rho = if rho == 0.0 { 1e-8 * h_scale } else { rho * 10.0 };
                if rho > 1e8 * h_scale {
                    return Err(Error::Solver {
                        step: 0,
                        reason: "KKT matrix remained singular under inertia correction".into(),
                    });
                }
                continue;
            }
        };
        let delta: Vec<f64> = (0..nx).map(|i| sol[i]).collect();
        let new_mult: Vec<f64> = (0..nc).map(|r| sol[nx + r]).collect();

        // the fresh multipliers may already certify stationarity at the
        // current point; check before any step is taken
        if accept(prob, &x, &new_mult) {
            mult = new_mult;
            break;
        }

        let gdot: f64 = g.iter().zip(&delta).map(|(a, b)| a * b).sum();
        if std::env::var("SHELLHEAT_DEBUG_NEWTON").is_ok() {
            let dn = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            eprintln!(
                "newton it={it} res={res:.3e} gdot={gdot:.3e} |d|={dn:.3e} |g|={gn:.3e} rho={rho:.3e}"
            );
        }
        if !gdot.is_finite() || gdot >= 0.0 {
            rho = if rho == 0.0 { 1e-8 * h_scale } else { rho * 10.0 };
            if rho > 1e8 * h_scale {
                return Err(Error::Solver {
                    step: 0,
                    reason: "Newton direction is not a descent direction".into(),
                });
            }
            continue;
        }

        // Armijo line search on the objective along the feasible direction
        let j0 = prob.objective(&x);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
            let jt = prob.objective(&trial);
            if jt <= j0 + 1e-4 * alpha * gdot {
                x = trial;
                mult = new_mult.clone();
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            rho = if rho == 0.0 { 1e-8 * h_scale } else { rho * 10.0 };
            if rho > 1e8 * h_scale {
                return Err(Error::Solver {
                    step: 0,
                    reason: "line search stalled".into(),
                });
            }
            continue;
        }
        if alpha == 1.0 {
            rho = 0.0;
        }
    }

    if !accept(prob, &x, &mult) {
        let res = prob.el_residual(&x, &mult);
        return Err(Error::Solver {
            step: 0,
            reason: format!(
                "Newton did not reach tolerance: residual {res:.3e} after {} iterations",
                newton_iters + 1
            ),
        });
    }
    let res = prob.el_residual(&x, &mult);

    let (u, eta) = x.split_at(prob.n_u);
    let u_grid = prob.u_to_grid(u);
    let n_div = prob.div_cells.len();
    let vol = prob.mask.grid.cell_volume();
    let pressures: Vec<f64> = (0..n_div)
        .map(|r| mult[r] * prob.mask.grid.dx / (p.tau * vol))
        .collect();
    let tractions: Vec<[f64; 2]> = (0..prob.mask.markers.len())
        .map(|m| {
            [
                mult[n_div + 2 * m] / w_gamma,
                mult[n_div + 2 * m + 1] / w_gamma,
            ]
        })
        .collect();
    Ok(VelocitySolution {
        u: u_grid,
        eta_new: eta.to_vec(),
        pressures,
        tractions,
        multipliers: mult,
        newton_iters: newton_iters + 1,
        el_residual: res,
        objective: prob.objective(&x),
    })
}

/// Stationarity residual of a candidate `(u_grid, eta)` with multipliers.
pub fn velocity_el_residual(
    prob: &VelocityStepProblem,
    u_grid: &[[f64; 2]],
    eta: &[f64],
    mult: &[f64],
) -> f64 {
    let mut x = vec![0.0; prob.dim()];
    for (pos, &c) in prob.fluid_cells.iter().enumerate() {
        x[u_dof(pos, 0)] = u_grid[c][0];
        x[u_dof(pos, 1)] = u_grid[c][1];
    }
    x[prob.n_u..].copy_from_slice(eta);
    prob.el_residual(&x, mult)
}
