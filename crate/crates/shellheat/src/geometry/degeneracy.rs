//! Runtime monitoring of the geometric degeneracies that end a run: the
//! displacement reaching the collar bounds, the loss of second-order
//! coercivity of the shell energy (γ̄ → 0), and self-intersection.

use super::{deform_interface, ReferenceSurface, TubularChart};
use crate::koiter;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DegeneracyStatus {
    Ok,
    NearCollar,
    CollarHit,
    GammaDegenerate,
    SelfIntersect,
}

impl DegeneracyStatus {
    pub fn is_ok(self) -> bool {
        self == DegeneracyStatus::Ok || self == DegeneracyStatus::NearCollar
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DegeneracyThresholds {
    /// Margin against the collar bounds, default `1e-3 · (b − a)`.
    pub eps_collar: f64,
    /// Floor for the curvature coefficient γ̄.
    pub eps_gamma: f64,
    /// Early-warning margin added on top of `eps_collar`; zero disables it.
    pub near_margin: f64,
}

impl DegeneracyThresholds {
    pub fn defaults(chart: &TubularChart) -> Self {
        DegeneracyThresholds {
            eps_collar: 1e-3 * chart.width(),
            eps_gamma: 1e-3,
            near_margin: 0.0,
        }
    }
}

/// Outcome of one degeneracy scan.
#[derive(Clone, Copy, Debug)]
pub struct DegeneracyReport {
    pub status: DegeneracyStatus,
    pub min_eta: f64,
    pub max_eta: f64,
    pub min_gamma_bar: f64,
    /// Coercivity monitor ∫ γ̄²(η) |∇²η|².
    pub coercivity: f64,
}

/// Scans a displacement for all degeneracy modes. `dt_eta` participates in
/// the report only through the caller's ledger; the thresholds are purely
/// geometric.
pub fn degeneracy_check(
    surface: &ReferenceSurface,
    chart: &TubularChart,
    thresholds: &DegeneracyThresholds,
    eta: &[f64],
) -> DegeneracyReport {
    let min_eta = eta.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_eta = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let deta0 = surface.gamma.deriv(eta, 0, 1);
    let m = surface.surface_dim();
    let deta1 = if m == 2 {
        surface.gamma.deriv(eta, 1, 1)
    } else {
        vec![0.0; eta.len()]
    };
    let mut min_gamma_bar = f64::INFINITY;
    let mut coercivity = 0.0;
    let hess00 = surface.gamma.deriv(eta, 0, 2);
    let hess = if m == 2 {
        Some((
            surface.gamma.deriv(&deta0, 1, 1),
            surface.gamma.deriv(eta, 1, 2),
        ))
    } else {
        None
    };
    for (j, frame) in surface.frames.iter().enumerate() {
        let gb = koiter::gamma_bar(frame, m, eta[j]);
        min_gamma_bar = min_gamma_bar.min(gb);
        let _ = (&deta0, &deta1);
        let h2 = match &hess {
            None => hess00[j] * hess00[j],
            Some((h01, h11)) => {
                hess00[j] * hess00[j] + 2.0 * h01[j] * h01[j] + h11[j] * h11[j]
            }
        };
        coercivity += gb * gb * h2;
    }
    coercivity *= surface.gamma.quad_weight();

    let status = if m == 1 && !deform_interface(surface, eta).injective {
        DegeneracyStatus::SelfIntersect
    } else if min_eta <= chart.a_bound + thresholds.eps_collar
        || max_eta >= chart.b_bound - thresholds.eps_collar
    {
        DegeneracyStatus::CollarHit
    } else if min_gamma_bar <= thresholds.eps_gamma {
        DegeneracyStatus::GammaDegenerate
    } else if thresholds.near_margin > 0.0
        && (min_eta <= chart.a_bound + thresholds.eps_collar + thresholds.near_margin
            || max_eta >= chart.b_bound - thresholds.eps_collar - thresholds.near_margin)
    {
        DegeneracyStatus::NearCollar
    } else {
        DegeneracyStatus::Ok
    };

    DegeneracyReport {
        status,
        min_eta,
        max_eta,
        min_gamma_bar,
        coercivity,
    }
}
