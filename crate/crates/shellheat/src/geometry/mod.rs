//! Reference interface, deformed interface, tubular-neighborhood machinery,
//! fluid-domain masks and degeneracy monitoring.

mod degeneracy;
mod interface;
mod mask;
mod tubular;

pub use degeneracy::{degeneracy_check, DegeneracyReport, DegeneracyStatus, DegeneracyThresholds};
pub use interface::{deform_interface, InterfaceCurve};
pub use mask::{build_masks, CellLabel, DomainMask, Marker};
pub use tubular::{cutoff_value, eval_tilde_phi, TubularChart};

use crate::spectral::GammaGrid;
use crate::{Error, Result};

/// Analytic descriptor of the reference interface.
#[derive(Clone, Debug, PartialEq)]
pub enum SurfaceSpec {
    /// Circle of radius `r` (closed curve, surface dimension 1).
    Circle { r: f64 },
    /// Ellipse with semi-axes `a`, `b` (closed curve, surface dimension 1).
    Ellipse { a: f64, b: f64 },
    /// Torus with the given major/minor radii (closed surface, dimension 2).
    Torus { major: f64, minor: f64 },
}

impl SurfaceSpec {
    pub fn surface_dim(&self) -> usize {
        match self {
            SurfaceSpec::Circle { .. } | SurfaceSpec::Ellipse { .. } => 1,
            SurfaceSpec::Torus { .. } => 2,
        }
    }
}

/// Full first- and second-order frame of the reference surface at one node.
///
/// Vectors are padded to three components; for a curve the third component is
/// zero and only the first tangent slot is meaningful.
#[derive(Clone, Debug, Default)]
pub struct NodeFrame {
    /// Reference point φ.
    pub phi: [f64; 3],
    /// Unit outward normal ν.
    pub nu: [f64; 3],
    /// Tangents a_i = ∂_i φ.
    pub a: [[f64; 3]; 2],
    /// Normal derivatives ∂_i ν.
    pub dnu: [[f64; 3]; 2],
    /// Second derivatives ∂²_{ij} φ.
    pub dda: [[[f64; 3]; 2]; 2],
    /// Second derivatives ∂²_{ij} ν.
    pub ddnu: [[[f64; 3]; 2]; 2],
    /// Covariant metric a_ij.
    pub a_cov: [[f64; 2]; 2],
    /// Contravariant metric (matrix inverse of a_ij).
    pub a_con: [[f64; 2]; 2],
    /// Area element: |a₁ × a₂| for a surface, |a₁| for a curve.
    pub area: f64,
}

/// Reference interface sampled on the periodic parameter grid.
#[derive(Clone, Debug)]
pub struct ReferenceSurface {
    pub spec: SurfaceSpec,
    pub gamma: GammaGrid,
    pub frames: Vec<NodeFrame>,
}

impl ReferenceSurface {
    pub fn surface_dim(&self) -> usize {
        self.spec.surface_dim()
    }

    pub fn node_count(&self) -> usize {
        self.gamma.node_count()
    }
}

/// In-plane 90° rotation, the curve analog of the surface cross product.
#[inline]
pub(crate) fn rot(v: [f64; 3]) -> [f64; 3] {
    [v[1], -v[0], 0.0]
}

#[inline]
pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Builds the sampled reference surface with analytically evaluated frames.
pub fn build_reference(spec: &SurfaceSpec, n_gamma: usize) -> Result<ReferenceSurface> {
    if n_gamma < 8 {
        return Err(Error::Config(format!(
            "interface grid needs at least 8 nodes per direction, got {n_gamma}"
        )));
    }
    match *spec {
        SurfaceSpec::Circle { r } => {
            if r <= 0.0 {
                return Err(Error::Config("circle radius must be positive".into()));
            }
        }
        SurfaceSpec::Ellipse { a, b } => {
            if a <= 0.0 || b <= 0.0 {
                return Err(Error::Config("ellipse semi-axes must be positive".into()));
            }
        }
        SurfaceSpec::Torus { major, minor } => {
            if !(minor > 0.0 && major > minor) {
                return Err(Error::Config(
                    "torus needs major > minor > 0 for an injective parametrization".into(),
                ));
            }
        }
    }
    let gamma = match spec.surface_dim() {
        1 => GammaGrid::Curve { n: n_gamma },
        _ => GammaGrid::Torus {
            n0: n_gamma,
            n1: n_gamma,
        },
    };
    let frames = gamma
        .nodes()
        .iter()
        .map(|&x| frame_at(spec, x))
        .collect();
    Ok(ReferenceSurface {
        spec: spec.clone(),
        gamma,
        frames,
    })
}

/// Frame of a plane curve from its first three parameter derivatives.
fn curve_frame(phi: [f64; 3], d1: [f64; 3], d2: [f64; 3], d3: [f64; 3]) -> NodeFrame {
    let g = norm(d1);
    let gp = dot(d1, d2) / g;
    let gpp = (dot(d2, d2) + dot(d1, d3) - gp * gp) / g;
    let r1 = rot(d1);
    let r2 = rot(d2);
    let r3 = rot(d3);
    let mut f = NodeFrame::default();
    f.phi = phi;
    for k in 0..3 {
        f.nu[k] = r1[k] / g;
        f.dnu[0][k] = r2[k] / g - r1[k] * gp / (g * g);
        f.ddnu[0][0][k] = r3[k] / g - 2.0 * r2[k] * gp / (g * g) - r1[k] * gpp / (g * g)
            + 2.0 * r1[k] * gp * gp / (g * g * g);
    }
    f.a[0] = d1;
    f.dda[0][0] = d2;
    f.a_cov = [[dot(d1, d1), 0.0], [0.0, 1.0]];
    f.a_con = [[1.0 / dot(d1, d1), 0.0], [0.0, 1.0]];
    f.area = g;
    f
}

fn frame_at(spec: &SurfaceSpec, x: [f64; 2]) -> NodeFrame {
    match *spec {
        SurfaceSpec::Circle { r } => {
            let (s, c) = x[0].sin_cos();
            curve_frame(
                [r * c, r * s, 0.0],
                [-r * s, r * c, 0.0],
                [-r * c, -r * s, 0.0],
                [r * s, -r * c, 0.0],
            )
        }
        SurfaceSpec::Ellipse { a, b } => {
            let (s, c) = x[0].sin_cos();
            curve_frame(
                [a * c, b * s, 0.0],
                [-a * s, b * c, 0.0],
                [-a * c, -b * s, 0.0],
                [a * s, -b * c, 0.0],
            )
        }
        SurfaceSpec::Torus { major, minor } => torus_frame(major, minor, x),
    }
}

fn torus_frame(rr: f64, r: f64, x: [f64; 2]) -> NodeFrame {
    let (su, cu) = x[0].sin_cos();
    let (sv, cv) = x[1].sin_cos();
    let w = rr + r * cv;
    let mut f = NodeFrame::default();
    f.phi = [w * cu, w * su, r * sv];
    f.nu = [cv * cu, cv * su, sv];
    f.a[0] = [-w * su, w * cu, 0.0];
    f.a[1] = [-r * sv * cu, -r * sv * su, r * cv];
    f.dnu[0] = [-cv * su, cv * cu, 0.0];
    f.dnu[1] = [-sv * cu, -sv * su, cv];
    f.dda[0][0] = [-w * cu, -w * su, 0.0];
    f.dda[0][1] = [r * sv * su, -r * sv * cu, 0.0];
    f.dda[1][0] = f.dda[0][1];
    f.dda[1][1] = [-r * cv * cu, -r * cv * su, -r * sv];
    f.ddnu[0][0] = [-cv * cu, -cv * su, 0.0];
    f.ddnu[0][1] = [sv * su, -sv * cu, 0.0];
    f.ddnu[1][0] = f.ddnu[0][1];
    f.ddnu[1][1] = [-cv * cu, -cv * su, -sv];
    for i in 0..2 {
        for j in 0..2 {
            f.a_cov[i][j] = dot(f.a[i], f.a[j]);
        }
    }
    let det = f.a_cov[0][0] * f.a_cov[1][1] - f.a_cov[0][1] * f.a_cov[1][0];
    f.a_con = [
        [f.a_cov[1][1] / det, -f.a_cov[0][1] / det],
        [-f.a_cov[1][0] / det, f.a_cov[0][0] / det],
    ];
    f.area = norm(cross(f.a[0], f.a[1]));
    f
}
