//! The deformed interface: reference curve displaced along its normal,
//! with the unnormalized deformed normal and a self-intersection test.

use super::{norm, rot, ReferenceSurface};

/// Deformed closed curve sampled at the parameter nodes.
#[derive(Clone, Debug)]
pub struct InterfaceCurve {
    /// Deformed points φ_η = φ + η ν.
    pub points: Vec<[f64; 2]>,
    /// Unnormalized deformed normal, the 90° rotation of the deformed
    /// tangent, oriented to agree with ν at η = 0.
    pub normals: Vec<[f64; 2]>,
    /// False iff two non-adjacent polyline segments intersect.
    pub injective: bool,
    pub min_segment_length: f64,
}

/// Displaces the reference curve by nodal values `eta` along the reference
/// normal. The deformed tangent uses the analytic frame plus the spectral
/// derivative of `eta`.
pub fn deform_interface(surface: &ReferenceSurface, eta: &[f64]) -> InterfaceCurve {
    assert_eq!(surface.surface_dim(), 1);
    assert_eq!(eta.len(), surface.node_count());
    assert!(eta.iter().all(|v| v.is_finite()), "displacement must be finite");
    let deta = surface.gamma.deriv(eta, 0, 1);
    let mut points = Vec::with_capacity(eta.len());
    let mut normals = Vec::with_capacity(eta.len());
    for (j, f) in surface.frames.iter().enumerate() {
        points.push([
            f.phi[0] + eta[j] * f.nu[0],
            f.phi[1] + eta[j] * f.nu[1],
        ]);
        let tangent = [
            f.a[0][0] + deta[j] * f.nu[0] + eta[j] * f.dnu[0][0],
            f.a[0][1] + deta[j] * f.nu[1] + eta[j] * f.dnu[0][1],
            0.0,
        ];
        let nu_eta = rot(tangent);
        normals.push([nu_eta[0], nu_eta[1]]);
    }
    let min_segment_length = (0..points.len())
        .map(|j| {
            let q = points[(j + 1) % points.len()];
            norm([q[0] - points[j][0], q[1] - points[j][1], 0.0])
        })
        .fold(f64::INFINITY, f64::min);
    let injective = !self_intersects(&points);
    InterfaceCurve {
        points,
        normals,
        injective,
        min_segment_length,
    }
}

/// Proper-crossing test between non-adjacent closed-polyline segments.
fn self_intersects(points: &[[f64; 2]]) -> bool {
    let n = points.len();
    for i in 0..n {
        let a0 = points[i];
        let a1 = points[(i + 1) % n];
        for j in (i + 1)..n {
            // skip the segment itself and the two sharing an endpoint
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let b0 = points[j];
            let b1 = points[(j + 1) % n];
            if segments_cross(a0, a1, b0, b1) {
                return true;
            }
        }
    }
    false
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> bool {
    let d1 = orient(a0, a1, b0);
    let d2 = orient(a0, a1, b1);
    let d3 = orient(b0, b1, a0);
    let d4 = orient(b0, b1, a1);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}
