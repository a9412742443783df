//! Flow maps, step maps, Jacobian tracking and semi-Lagrangian field
//! composition.
//!
//! One time step displaces material by `Ψ(x) = x + τ u(x)`; a window of steps
//! composes those displacements into per-fluid flow maps anchored at the
//! window's initial masks. Fields are pulled through the maps by bilinear
//! sampling; sample points that land outside the target mask are clamped
//! inward and counted.

use crate::geometry::{CellLabel, DomainMask};
use crate::grid::Grid;
use crate::{Error, Result};

/// Displacement map of one step on the fluid cells of a mask.
#[derive(Clone, Debug)]
pub struct StepMap {
    pub grid: Grid,
    pub tau: f64,
    /// Displaced position per cell (identity on non-fluid cells).
    pub positions: Vec<[f64; 2]>,
    /// det ∇Ψ per cell by central differences of the positions.
    pub jacobian: Vec<f64>,
    /// Velocity snapshot the map was built from.
    pub velocity: Vec<[f64; 2]>,
}

/// Composed flow map over one window for a single fluid.
#[derive(Clone, Debug)]
pub struct FlowMap {
    /// Reference cells (window-initial mask cells of this fluid).
    pub ref_cells: Vec<usize>,
    /// Current positions Φ_k(y) per reference cell.
    pub positions: Vec<[f64; 2]>,
    /// det ∇Φ_k per reference cell (multiplicative update).
    pub jacobian: Vec<f64>,
    pub step: usize,
}

impl FlowMap {
    /// Identity flow on the fluid cells of the window-initial mask.
    pub fn identity(mask: &DomainMask, label: CellLabel) -> Self {
        let ref_cells = mask.cells_with(label);
        let positions = ref_cells.iter().map(|&c| mask.grid.center_of(c)).collect();
        FlowMap {
            jacobian: vec![1.0; ref_cells.len()],
            positions,
            ref_cells,
            step: 0,
        }
    }
}

/// Builds the step map `Ψ = Id + τ u` with its Jacobian determinant.
pub fn make_step_map(u: &[[f64; 2]], mask: &DomainMask, tau: f64) -> Result<StepMap> {
    assert!(tau > 0.0);
    let grid = mask.grid.clone();
    let n = grid.cell_count();
    assert_eq!(u.len(), n);
    let mut positions = Vec::with_capacity(n);
    for c in 0..n {
        let p = grid.center_of(c);
        if mask.is_fluid(c) {
            positions.push([p[0] + tau * u[c][0], p[1] + tau * u[c][1]]);
        } else {
            positions.push(p);
        }
    }
    // det(I + ∇(τu)) with the displacement gradient by central differences;
    // differencing the displacement rather than the positions keeps rest and
    // shear states exact. One-sided at grid edges.
    let disp = |c: usize| -> [f64; 2] { [tau * u[c][0], tau * u[c][1]] };
    let mut jacobian = vec![1.0; n];
    let d = grid.dx;
    for c in 0..n {
        let (i, j) = grid.coords(c);
        let diff = |a: usize, b: usize, comp: usize, h: f64| -> f64 {
            (disp(a)[comp] - disp(b)[comp]) / h
        };
        let (xp, xm, hx) = if i + 1 < grid.nx && i > 0 {
            (grid.index(i + 1, j), grid.index(i - 1, j), 2.0 * d)
        } else if i + 1 < grid.nx {
            (grid.index(i + 1, j), c, d)
        } else {
            (c, grid.index(i - 1, j), d)
        };
        let (yp, ym, hy) = if j + 1 < grid.ny && j > 0 {
            (grid.index(i, j + 1), grid.index(i, j - 1), 2.0 * d)
        } else if j + 1 < grid.ny {
            (grid.index(i, j + 1), c, d)
        } else {
            (c, grid.index(i, j - 1), d)
        };
        let g11 = diff(xp, xm, 0, hx);
        let g12 = diff(yp, ym, 0, hy);
        let g21 = diff(xp, xm, 1, hx);
        let g22 = diff(yp, ym, 1, hy);
        jacobian[c] = (1.0 + g11) * (1.0 + g22) - g12 * g21;
    }
    for c in 0..n {
        if mask.is_fluid(c) && jacobian[c] <= 0.0 {
            return Err(Error::StepSize(format!(
                "step map folds over: det ∇Ψ = {} at cell {c}; reduce τ",
                jacobian[c]
            )));
        }
    }
    Ok(StepMap {
        grid,
        tau,
        positions,
        jacobian,
        velocity: u.to_vec(),
    })
}

/// Advances a flow map by one step: positions compose, Jacobians multiply.
pub fn compose_flow(flow: &FlowMap, step: &StepMap) -> Result<FlowMap> {
    let mut positions = Vec::with_capacity(flow.positions.len());
    let mut jacobian = Vec::with_capacity(flow.positions.len());
    for (p, jac) in flow.positions.iter().zip(&flow.jacobian) {
        if !step.grid.contains(*p) {
            return Err(Error::Degeneracy(
                crate::geometry::DegeneracyStatus::CollarHit,
                f64::NAN,
            ));
        }
        // displacement field is τ·u interpolated at the current position
        let u = step.grid.sample_vec(&step.velocity, *p);
        positions.push([p[0] + step.tau * u[0], p[1] + step.tau * u[1]]);
        let det = step.grid.sample(&step.jacobian, *p);
        jacobian.push(det * jac);
    }
    Ok(FlowMap {
        ref_cells: flow.ref_cells.clone(),
        positions,
        jacobian,
        step: flow.step + 1,
    })
}

/// Statistics of out-of-mask sample clamping.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClampStats {
    pub clamped: usize,
    pub renormalized: usize,
}

/// Bilinear sampling of a per-fluid cell field at a physical point,
/// restricted to cells of the given label. Stencil corners outside the label
/// are dropped and the remaining weights renormalized; if no corner remains,
/// the sample walks inward along the opposite of the nearest marker normal
/// and falls back to the nearest labeled cell.
pub fn sample_masked(
    mask: &DomainMask,
    field: &[f64],
    label: CellLabel,
    p: [f64; 2],
    stats: &mut ClampStats,
) -> f64 {
    let stencil = mask.grid.bilinear(p);
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for &(c, w) in stencil.iter() {
        if mask.labels[c] == label {
            acc += w * field[c];
            wsum += w;
        }
    }
    if wsum > 1e-12 {
        if wsum < 1.0 - 1e-12 {
            stats.renormalized += 1;
        }
        return acc / wsum;
    }
    stats.clamped += 1;
    // walk against the nearest marker normal back into the mask
    if let Some(marker) = mask
        .markers
        .iter()
        .min_by(|a, b| dist2(a.pos, p).total_cmp(&dist2(b.pos, p)))
    {
        let dir = if label == CellLabel::Fluid2 {
            [-marker.normal[0], -marker.normal[1]]
        } else {
            marker.normal
        };
        let mut q = p;
        for _ in 0..8 {
            q = [q[0] + 0.5 * mask.grid.dx * dir[0], q[1] + 0.5 * mask.grid.dx * dir[1]];
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for &(c, w) in mask.grid.bilinear(q).iter() {
                if mask.labels[c] == label {
                    acc += w * field[c];
                    wsum += w;
                }
            }
            if wsum > 1e-12 {
                return acc / wsum;
            }
        }
    }
    // nearest labeled cell as the last resort
    let mut best = (f64::INFINITY, 0.0);
    for c in 0..mask.grid.cell_count() {
        if mask.labels[c] == label {
            let d = dist2(mask.grid.center_of(c), p);
            if d < best.0 {
                best = (d, field[c]);
            }
        }
    }
    best.1
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Pushforward sampling `field ∘ Ψ` on the fluid cells of `mask`: evaluates
/// the field (defined relative to `target_mask`/`label`) at the displaced
/// positions.
pub fn compose_field(
    field: &[f64],
    step: &StepMap,
    mask: &DomainMask,
    target_mask: &DomainMask,
    label: CellLabel,
    stats: &mut ClampStats,
) -> Vec<f64> {
    (0..mask.grid.cell_count())
        .map(|c| {
            if mask.labels[c] == label {
                sample_masked(target_mask, field, label, step.positions[c], stats)
            } else {
                0.0
            }
        })
        .collect()
}

/// Inverts a flow map at a point by nearest-reference seeding plus fixed
/// Newton iterations on the bilinearly interpolated positions.
pub fn invert_flow(
    flow: &FlowMap,
    grid: &Grid,
    target: [f64; 2],
) -> Result<[f64; 2]> {
    // nearest stored position as seed
    let mut best = (f64::INFINITY, 0usize);
    for (idx, p) in flow.positions.iter().enumerate() {
        let d = dist2(*p, target);
        if d < best.0 {
            best = (d, idx);
        }
    }
    let mut y = grid.center_of(flow.ref_cells[best.1]);

    // scatter positions onto the full grid for interpolation
    let mut pos_field = vec![[0.0; 2]; grid.cell_count()];
    let mut have = vec![false; grid.cell_count()];
    for (idx, &c) in flow.ref_cells.iter().enumerate() {
        pos_field[c] = flow.positions[idx];
        have[c] = true;
    }
    // identity on cells without data keeps the interpolation sane near the
    // mask boundary
    for c in 0..grid.cell_count() {
        if !have[c] {
            pos_field[c] = grid.center_of(c);
        }
    }
    let phi = |y: [f64; 2]| -> [f64; 2] {
        let mut out = [0.0; 2];
        for &(c, w) in grid.bilinear(y).iter() {
            out[0] += w * pos_field[c][0];
            out[1] += w * pos_field[c][1];
        }
        out
    };
    let h = 0.5 * grid.dx;
    for _ in 0..30 {
        let f = phi(y);
        let r = [f[0] - target[0], f[1] - target[1]];
        if r[0].abs() + r[1].abs() < 1e-12 {
            break;
        }
        // FD Jacobian of the interpolated map
        let fx = phi([y[0] + h, y[1]]);
        let fmx = phi([y[0] - h, y[1]]);
        let fy = phi([y[0], y[1] + h]);
        let fmy = phi([y[0], y[1] - h]);
        let a11 = (fx[0] - fmx[0]) / (2.0 * h);
        let a12 = (fy[0] - fmy[0]) / (2.0 * h);
        let a21 = (fx[1] - fmx[1]) / (2.0 * h);
        let a22 = (fy[1] - fmy[1]) / (2.0 * h);
        let det = a11 * a22 - a12 * a21;
        if det.abs() < 1e-12 {
            return Err(Error::Degeneracy(
                crate::geometry::DegeneracyStatus::SelfIntersect,
                f64::NAN,
            ));
        }
        y = [
            y[0] - (a22 * r[0] - a12 * r[1]) / det,
            y[1] - (-a21 * r[0] + a11 * r[1]) / det,
        ];
    }
    Ok(y)
}

/// Pulls the window's velocity history back through `Φ(t) ∘ Φ(h)⁻¹`,
/// producing the delayed data `w` for the next window on its initial cells.
///
/// `velocities[k]` is the full-grid velocity of slot `k`, `flows[k]` the flow
/// map at the *start* of slot `k`; `next_cells` are the next window's
/// reference cells for this fluid on `grid`.
pub fn window_pullback(
    velocities: &[Vec<[f64; 2]>],
    flows: &[FlowMap],
    final_flow: &FlowMap,
    grid: &Grid,
    next_cells: &[usize],
) -> Result<Vec<Vec<[f64; 2]>>> {
    let n_slots = velocities.len();
    assert_eq!(flows.len(), n_slots);
    let mut out = vec![vec![[0.0; 2]; next_cells.len()]; n_slots];

    // invert the final flow once per target cell
    let mut preimages = Vec::with_capacity(next_cells.len());
    for &c in next_cells {
        preimages.push(invert_flow(final_flow, grid, grid.center_of(c))?);
    }

    for k in 0..n_slots {
        // positions of slot k interpolated over the old reference cells
        let flow = &flows[k];
        let mut pos_field = vec![[0.0; 2]; grid.cell_count()];
        let mut have = vec![false; grid.cell_count()];
        for (idx, &c) in flow.ref_cells.iter().enumerate() {
            pos_field[c] = flow.positions[idx];
            have[c] = true;
        }
        for c in 0..grid.cell_count() {
            if !have[c] {
                pos_field[c] = grid.center_of(c);
            }
        }
        for (slot_out, y) in out[k].iter_mut().zip(&preimages) {
            let mut p = [0.0; 2];
            for &(c, w) in grid.bilinear(*y).iter() {
                p[0] += w * pos_field[c][0];
                p[1] += w * pos_field[c][1];
            }
            *slot_out = grid.sample_vec(&velocities[k], p);
        }
    }
    Ok(out)
}
