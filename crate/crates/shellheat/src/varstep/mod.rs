//! The two per-step minimization problems: velocity/displacement first,
//! temperatures second. Both are assembled as finite-dimensional constrained
//! problems over the background grid and the shell nodes, and solved with
//! verifiable stationarity residuals.

mod temperature;
mod velocity;

pub use temperature::{
    assemble_temperature_step, solve_temperature_step, temperature_el_residual,
    TemperatureInputs, TemperatureSolution, TemperatureStepProblem,
};
pub use velocity::{
    assemble_velocity_step, solve_velocity_step, velocity_el_residual, VelocitySolution,
    VelocityStepProblem,
};

use crate::geometry::{DomainMask, ReferenceSurface};
use crate::koiter::KoiterParams;
use crate::materials::{FluidMaterial, Transmission, ViscosityCap};
use crate::transport::FlowMap;

/// Resolved numerical parameters of one run.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub tau: f64,
    pub h: f64,
    pub kappa: f64,
    /// Order of the fluid-side regularizer: 1 = gradient, 2 = Laplacian.
    pub k0_fluid: usize,
    pub koiter: KoiterParams,
    pub materials: [FluidMaterial; 2],
    pub cap: ViscosityCap,
    pub transmission: Transmission,
    pub tol_newton: f64,
    pub max_newton: usize,
    pub tol_cg: f64,
    pub max_cg: usize,
}

/// Frozen data entering one time step.
pub struct StepInputs<'a> {
    pub surface: &'a ReferenceSurface,
    pub params: &'a ModelParams,
    /// Mask of the current configuration (step k).
    pub mask: &'a DomainMask,
    pub eta_k: &'a [f64],
    /// Full-grid temperatures of each fluid, valid on its mask cells.
    pub theta_k: [&'a [f64]; 2],
    /// Slot average of the previous window's shell velocity.
    pub beta_k: &'a [f64],
    /// Slot average of the pulled-back fluid data, per reference cell.
    pub w_k: [&'a [[f64; 2]]; 2],
    /// Window-initial mask carrying the reference cells.
    pub ref_mask: &'a DomainMask,
    /// Flow maps Φ_k per fluid, anchored at `ref_mask`.
    pub flows: [&'a FlowMap; 2],
    /// Optional prescribed body force on grid cells (diagnostics only).
    pub body_force: Option<&'a [[f64; 2]]>,
}

/// Pointwise density of the fluid-side regularizer at a cell: squared
/// gradient (order 1) or squared Laplacian (order 2) of the velocity, with
/// non-fluid neighbors read as zero (no-slip ghosts).
pub fn fluid_reg_density(
    u: &[[f64; 2]],
    mask: &DomainMask,
    cell: usize,
    order: usize,
) -> f64 {
    let g = &mask.grid;
    let (i, j) = g.coords(cell);
    let val = |ii: i64, jj: i64, comp: usize| -> f64 {
        if ii < 0 || jj < 0 || ii >= g.nx as i64 || jj >= g.ny as i64 {
            return 0.0;
        }
        let c = g.index(ii as usize, jj as usize);
        if mask.is_fluid(c) {
            u[c][comp]
        } else {
            0.0
        }
    };
    let (i, j) = (i as i64, j as i64);
    let mut acc = 0.0;
    for comp in 0..2 {
        if order == 1 {
            let dx = (val(i + 1, j, comp) - val(i - 1, j, comp)) / (2.0 * g.dx);
            let dy = (val(i, j + 1, comp) - val(i, j - 1, comp)) / (2.0 * g.dx);
            acc += dx * dx + dy * dy;
        } else {
            let lap = (val(i + 1, j, comp)
                + val(i - 1, j, comp)
                + val(i, j + 1, comp)
                + val(i, j - 1, comp)
                - 4.0 * val(i, j, comp))
                / (g.dx * g.dx);
            acc += lap * lap;
        }
    }
    acc
}

/// Symmetric-gradient Frobenius density |D_h u|² at a cell with centered
/// differences and no-slip ghosts.
pub fn strain_density(u: &[[f64; 2]], mask: &DomainMask, cell: usize) -> f64 {
    let g = &mask.grid;
    let (i, j) = g.coords(cell);
    let val = |ii: i64, jj: i64, comp: usize| -> f64 {
        if ii < 0 || jj < 0 || ii >= g.nx as i64 || jj >= g.ny as i64 {
            return 0.0;
        }
        let c = g.index(ii as usize, jj as usize);
        if mask.is_fluid(c) {
            u[c][comp]
        } else {
            0.0
        }
    };
    let (i, j) = (i as i64, j as i64);
    let dxux = (val(i + 1, j, 0) - val(i - 1, j, 0)) / (2.0 * g.dx);
    let dyuy = (val(i, j + 1, 1) - val(i, j - 1, 1)) / (2.0 * g.dx);
    let dyux = (val(i, j + 1, 0) - val(i, j - 1, 0)) / (2.0 * g.dx);
    let dxuy = (val(i + 1, j, 1) - val(i - 1, j, 1)) / (2.0 * g.dx);
    let off = 0.5 * (dyux + dxuy);
    dxux * dxux + dyuy * dyuy + 2.0 * off * off
}
