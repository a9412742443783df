//! Collar (tubular neighborhood) of the reference interface: signed
//! distance, closest-point projection, the smooth cutoff profile and the
//! collar-supported deformation map of the ambient domain.

use super::{dot, norm, ReferenceSurface, SurfaceSpec};
use crate::{Error, Result};

/// Collar bounds and cutoff breakpoints,
/// `a < m'' < m' < m_low ≤ η ≤ M_high < M' < M'' < b`.
#[derive(Clone, Debug, PartialEq)]
pub struct TubularChart {
    pub a_bound: f64,
    pub b_bound: f64,
    pub m_outer: f64,
    pub m_inner: f64,
    pub m_low: f64,
    pub m_high: f64,
    pub big_m_inner: f64,
    pub big_m_outer: f64,
}

impl TubularChart {
    /// Breakpoints at equal thirds of the bands between the collar bounds and
    /// the admissible displacement band `[a + (b−a)/4, b − (b−a)/4]`.
    pub fn equal_thirds(a_bound: f64, b_bound: f64) -> Result<Self> {
        if !(a_bound < b_bound) {
            return Err(Error::Config(format!(
                "collar bounds must satisfy a < b, got ({a_bound}, {b_bound})"
            )));
        }
        let span = b_bound - a_bound;
        let m_low = a_bound + span / 4.0;
        let m_high = b_bound - span / 4.0;
        let lower = m_low - a_bound;
        let upper = b_bound - m_high;
        Ok(TubularChart {
            a_bound,
            b_bound,
            m_outer: a_bound + lower / 3.0,
            m_inner: a_bound + 2.0 * lower / 3.0,
            m_low,
            m_high,
            big_m_inner: b_bound - 2.0 * upper / 3.0,
            big_m_outer: b_bound - upper / 3.0,
        })
    }

    pub fn width(&self) -> f64 {
        self.b_bound - self.a_bound
    }
}

/// One-sided C^∞ transition: 0 for t ≤ 0, 1 for t ≥ 1.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let e = |s: f64| (-1.0 / s).exp();
        e(t) / (e(t) + e(1.0 - t))
    }
}

/// Smooth bump over the collar: 1 on the plateau `(m', M')`, 0 outside
/// `(m'', M'')`, monotone on the transition bands.
pub fn cutoff_value(d: f64, chart: &TubularChart) -> f64 {
    let rise = smooth_step((d - chart.m_outer) / (chart.m_inner - chart.m_outer));
    let fall = smooth_step((chart.big_m_outer - d) / (chart.big_m_outer - chart.big_m_inner));
    rise * fall
}

/// Closest-point projection onto the reference curve: parameter, foot point
/// and signed distance along the outward normal.
pub fn project_to_reference(surface: &ReferenceSurface, p: [f64; 2]) -> Result<(f64, [f64; 3], f64)> {
    assert_eq!(surface.surface_dim(), 1, "projection implemented for curves");
    // Seed from the closest sampled node, then Newton on the stationarity
    // condition (p − φ(y))·φ'(y) = 0.
    let p3 = [p[0], p[1], 0.0];
    let mut best = (0usize, f64::INFINITY);
    for (j, f) in surface.frames.iter().enumerate() {
        let d2 = (f.phi[0] - p3[0]).powi(2) + (f.phi[1] - p3[1]).powi(2);
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    let n = surface.node_count();
    let mut y = std::f64::consts::TAU * best.0 as f64 / n as f64;
    let eval = |y: f64| -> ([f64; 3], [f64; 3], [f64; 3]) {
        let f = frame_on_curve(&surface.spec, y);
        f
    };
    for _ in 0..50 {
        let (phi, d1, d2) = eval(y);
        let diff = [p3[0] - phi[0], p3[1] - phi[1], 0.0];
        let g = dot(diff, d1);
        let gp = -dot(d1, d1) + dot(diff, d2);
        if gp.abs() < 1e-300 {
            break;
        }
        let step = g / gp;
        y -= step;
        if step.abs() < 1e-14 {
            break;
        }
    }
    let (phi, d1, d2) = eval(y);
    let diff = [p3[0] - phi[0], p3[1] - phi[1], 0.0];
    if dot(diff, d1).abs() > 1e-8 * (1.0 + norm(diff)) * (1.0 + norm(d1)) {
        return Err(Error::Internal(format!(
            "closest-point iteration did not converge at ({}, {})",
            p[0], p[1]
        )));
    }
    let _ = d2;
    let nu = super::rot(d1);
    let nu = [nu[0] / norm(nu), nu[1] / norm(nu), 0.0];
    let d = dot(diff, nu);
    Ok((y, phi, d))
}

fn frame_on_curve(spec: &SurfaceSpec, y: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let (s, c) = y.sin_cos();
    match *spec {
        SurfaceSpec::Circle { r } => (
            [r * c, r * s, 0.0],
            [-r * s, r * c, 0.0],
            [-r * c, -r * s, 0.0],
        ),
        SurfaceSpec::Ellipse { a, b } => (
            [a * c, b * s, 0.0],
            [-a * s, b * c, 0.0],
            [-a * c, -b * s, 0.0],
        ),
        SurfaceSpec::Torus { .. } => unreachable!("curve frame requested for a surface"),
    }
}

/// Collar-supported deformation of an ambient point: identity outside the
/// cutoff support, displacement-following inside the plateau, a smooth blend
/// in between.
pub fn eval_tilde_phi(
    point: [f64; 2],
    eta: &[f64],
    chart: &TubularChart,
    surface: &ReferenceSurface,
) -> Result<[f64; 2]> {
    // Cheap reject: far from the collar the map is the identity.
    let rough = surface
        .frames
        .iter()
        .map(|f| ((f.phi[0] - point[0]).powi(2) + (f.phi[1] - point[1]).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min);
    let node_spacing = surface
        .frames
        .iter()
        .map(|f| f.area)
        .fold(0.0f64, f64::max)
        * std::f64::consts::TAU
        / surface.node_count() as f64;
    let outer = chart.m_outer.abs().max(chart.big_m_outer.abs());
    if rough > outer + node_spacing {
        return Ok(point);
    }

    let (y, foot, d) = project_to_reference(surface, point)?;
    let f = cutoff_value(d, chart);
    if f == 0.0 {
        return Ok(point);
    }
    if d <= chart.a_bound || d >= chart.b_bound {
        return Err(Error::Internal(
            "cutoff active outside the collar; chart bounds are inconsistent".into(),
        ));
    }
    let eta_y = interp_periodic(eta, y);
    let (_, d1, _) = frame_on_curve(&surface.spec, y);
    let nu = super::rot(d1);
    let nun = norm(nu);
    let nu = [nu[0] / nun, nu[1] / nun];
    let target = [
        foot[0] + (d + eta_y) * nu[0],
        foot[1] + (d + eta_y) * nu[1],
    ];
    Ok([
        (1.0 - f) * point[0] + f * target[0],
        (1.0 - f) * point[1] + f * target[1],
    ])
}

/// Periodic linear interpolation of nodal values at parameter `y`.
pub fn interp_periodic(values: &[f64], y: f64) -> f64 {
    let n = values.len();
    let t = y.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * n as f64;
    let j = t.floor() as usize % n;
    let frac = t - t.floor();
    values[j] * (1.0 - frac) + values[(j + 1) % n] * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_reference;
    use approx::assert_relative_eq;

    fn chart() -> TubularChart {
        TubularChart::equal_thirds(-0.6, 0.6).unwrap()
    }

    #[test]
    fn cutoff_plateau_and_support() {
        let ch = chart();
        assert_eq!(cutoff_value(0.5 * (ch.m_inner + ch.big_m_inner), &ch), 1.0);
        assert_eq!(cutoff_value(ch.m_outer - 0.1, &ch), 0.0);
        assert_eq!(cutoff_value(ch.big_m_outer + 0.1, &ch), 0.0);
        let mid = 0.5 * (ch.m_outer + ch.m_inner);
        let v = cutoff_value(mid, &ch);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn cutoff_monotone_on_transitions() {
        let ch = chart();
        let mut prev = -1.0;
        for k in 0..=100 {
            let d = ch.m_outer + (ch.m_inner - ch.m_outer) * k as f64 / 100.0;
            let v = cutoff_value(d, &ch);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        let mut prev = 2.0;
        for k in 0..=100 {
            let d = ch.big_m_inner + (ch.big_m_outer - ch.big_m_inner) * k as f64 / 100.0;
            let v = cutoff_value(d, &ch);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn projection_on_unit_circle() {
        let s = build_reference(&crate::geometry::SurfaceSpec::Circle { r: 1.0 }, 32).unwrap();
        let (_, foot, d) = project_to_reference(&s, [1.5, 0.0]).unwrap();
        assert_relative_eq!(foot[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(d, 0.5, epsilon = 1e-10);
        let (_, _, d) = project_to_reference(&s, [0.0, 0.7]).unwrap();
        assert_relative_eq!(d, -0.3, epsilon = 1e-10);
    }

    #[test]
    fn tilde_phi_identity_cases() {
        let s = build_reference(&crate::geometry::SurfaceSpec::Circle { r: 1.0 }, 32).unwrap();
        let ch = chart();
        let eta = vec![0.0; 32];
        // far outside the collar support
        let p = eval_tilde_phi([2.5, 0.0], &eta, &ch, &s).unwrap();
        assert_eq!(p, [2.5, 0.0]);
        // zero displacement is the identity everywhere
        for q in [[1.1, 0.0], [0.0, 0.95], [-1.05, 0.3]] {
            let p = eval_tilde_phi(q, &eta, &ch, &s).unwrap();
            assert_relative_eq!(p[0], q[0], epsilon = 1e-12);
            assert_relative_eq!(p[1], q[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn tilde_phi_moves_the_interface_point() {
        let s = build_reference(&crate::geometry::SurfaceSpec::Circle { r: 1.0 }, 64).unwrap();
        let ch = chart();
        let eta = vec![0.2; 64];
        let p = eval_tilde_phi([1.0, 0.0], &eta, &ch, &s).unwrap();
        assert_relative_eq!(p[0], 1.2, epsilon = 1e-10);
        assert_relative_eq!(p[1], 0.0, epsilon = 1e-10);
    }
}
