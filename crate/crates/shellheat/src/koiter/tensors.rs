//! Pointwise tensor kernels of the nonlinear shell energy.
//!
//! Everything here is a function of one node: the reference frame (constant
//! geometry) and the local displacement jet (value, gradient, Hessian of η).
//! Kernels are generic over the scalar type so that dual-number passes give
//! the exact Fréchet derivative and Hessian action of the assembled energy.
//!
//! The formulas are dimension-generic for surface dimension m ∈ {1, 2}. For
//! m = 1 the surface cross product degenerates to the in-plane 90° rotation
//! rot(v) = (v₂, −v₁), which plays the role of `a₁ × a₂` (with `|a₁|` as the
//! area element) and keeps the unnormalized-normal structure of the bending
//! tensor intact.

use crate::dual::Scalar;
use crate::geometry::NodeFrame;

/// Local displacement data at a node: η, ∇η, ∇²η.
#[derive(Clone, Copy, Debug)]
pub struct Jet<T> {
    pub eta: T,
    pub grad: [T; 2],
    pub hess: [[T; 2]; 2],
}

impl<T: Scalar> Jet<T> {
    pub fn zero() -> Self {
        let z = T::from_f64(0.0);
        Jet {
            eta: z,
            grad: [z; 2],
            hess: [[z; 2]; 2],
        }
    }
}

#[inline]
fn v3<T: Scalar>(v: [f64; 3]) -> [T; 3] {
    [T::from_f64(v[0]), T::from_f64(v[1]), T::from_f64(v[2])]
}

#[inline]
fn add3<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
fn smul3<T: Scalar>(s: T, v: [T; 3]) -> [T; 3] {
    [s * v[0], s * v[1], s * v[2]]
}

#[inline]
fn dot3<T: Scalar>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross3<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn rot3<T: Scalar>(v: [T; 3]) -> [T; 3] {
    [v[1], -v[0], T::from_f64(0.0)]
}

/// Deformed tangent a_i(η) = a_i + ∂_iη ν + η ∂_iν.
fn deformed_tangent<T: Scalar>(frame: &NodeFrame, jet: &Jet<T>, i: usize) -> [T; 3] {
    add3(
        add3(v3(frame.a[i]), smul3(jet.grad[i], v3(frame.nu))),
        smul3(jet.eta, v3(frame.dnu[i])),
    )
}

/// Unnormalized deformed normal: a₁(η) × a₂(η) for a surface, rot(a₁(η))
/// for a curve.
pub fn deformed_normal<T: Scalar>(frame: &NodeFrame, m: usize, jet: &Jet<T>) -> [T; 3] {
    if m == 2 {
        cross3(
            deformed_tangent(frame, jet, 0),
            deformed_tangent(frame, jet, 1),
        )
    } else {
        rot3(deformed_tangent(frame, jet, 0))
    }
}

/// Change-of-metric tensor
/// G_ij = ∂_iη ∂_jη + η(a_i·∂_jν + a_j·∂_iν) + η² ∂_iν·∂_jν.
pub fn metric_change<T: Scalar>(frame: &NodeFrame, m: usize, jet: &Jet<T>) -> [[T; 2]; 2] {
    let z = T::from_f64(0.0);
    let mut g = [[z; 2]; 2];
    for i in 0..m {
        for j in 0..m {
            let c = frame.a[i][0] * frame.dnu[j][0]
                + frame.a[i][1] * frame.dnu[j][1]
                + frame.a[i][2] * frame.dnu[j][2]
                + frame.a[j][0] * frame.dnu[i][0]
                + frame.a[j][1] * frame.dnu[i][1]
                + frame.a[j][2] * frame.dnu[i][2];
            let d = frame.dnu[i][0] * frame.dnu[j][0]
                + frame.dnu[i][1] * frame.dnu[j][1]
                + frame.dnu[i][2] * frame.dnu[j][2];
            g[i][j] = jet.grad[i] * jet.grad[j]
                + jet.eta.scale(c)
                + (jet.eta * jet.eta).scale(d);
        }
    }
    g
}

/// Change-of-curvature tensor, direct form:
/// R_ij = ∂_i a_j(η)·ν_η / W − ∂²_{ij}φ·ν, with W the reference area element
/// and ∂_i a_j(η) = ∂²_{ij}φ + ∂²_{ij}η ν + ∂_jη ∂_iν + ∂_iη ∂_jν + η ∂²_{ij}ν.
pub fn curvature_change<T: Scalar>(frame: &NodeFrame, m: usize, jet: &Jet<T>) -> [[T; 2]; 2] {
    let z = T::from_f64(0.0);
    let nu_eta = deformed_normal(frame, m, jet);
    let inv_w = 1.0 / frame.area;
    let mut r = [[z; 2]; 2];
    for i in 0..m {
        for j in 0..m {
            let mut d_aj: [T; 3] = v3(frame.dda[i][j]);
            d_aj = add3(d_aj, smul3(jet.hess[i][j], v3(frame.nu)));
            d_aj = add3(d_aj, smul3(jet.grad[j], v3(frame.dnu[i])));
            d_aj = add3(d_aj, smul3(jet.grad[i], v3(frame.dnu[j])));
            d_aj = add3(d_aj, smul3(jet.eta, v3(frame.ddnu[i][j])));
            let proj = dot3(d_aj, nu_eta).scale(inv_w);
            let rest = frame.dda[i][j][0] * frame.nu[0]
                + frame.dda[i][j][1] * frame.nu[1]
                + frame.dda[i][j][2] * frame.nu[2];
            r[i][j] = proj - T::from_f64(rest);
        }
    }
    r
}

/// The coefficient of ∂²η in the curvature tensor,
/// γ̄(η) = ν·ν_η(η) / W. It depends on η only: the gradient contributions to
/// ν_η are orthogonal to ν.
pub fn gamma_bar(frame: &NodeFrame, m: usize, eta: f64) -> f64 {
    if m == 2 {
        let w = frame.area;
        let lin = frame.nu[0]
            * (frame.a[0][1] * frame.dnu[1][2] - frame.a[0][2] * frame.dnu[1][1]
                + frame.dnu[0][1] * frame.a[1][2]
                - frame.dnu[0][2] * frame.a[1][1])
            + frame.nu[1]
                * (frame.a[0][2] * frame.dnu[1][0] - frame.a[0][0] * frame.dnu[1][2]
                    + frame.dnu[0][2] * frame.a[1][0]
                    - frame.dnu[0][0] * frame.a[1][2])
            + frame.nu[2]
                * (frame.a[0][0] * frame.dnu[1][1] - frame.a[0][1] * frame.dnu[1][0]
                    + frame.dnu[0][0] * frame.a[1][1]
                    - frame.dnu[0][1] * frame.a[1][0]);
        let dnu_cross = [
            frame.dnu[0][1] * frame.dnu[1][2] - frame.dnu[0][2] * frame.dnu[1][1],
            frame.dnu[0][2] * frame.dnu[1][0] - frame.dnu[0][0] * frame.dnu[1][2],
            frame.dnu[0][0] * frame.dnu[1][1] - frame.dnu[0][1] * frame.dnu[1][0],
        ];
        let quad =
            frame.nu[0] * dnu_cross[0] + frame.nu[1] * dnu_cross[1] + frame.nu[2] * dnu_cross[2];
        (w + eta * lin + eta * eta * quad) / w
    } else {
        let rot_dnu = [frame.dnu[0][1], -frame.dnu[0][0], 0.0];
        let lin =
            frame.nu[0] * rot_dnu[0] + frame.nu[1] * rot_dnu[1] + frame.nu[2] * rot_dnu[2];
        (frame.area + eta * lin) / frame.area
    }
}

/// The lower-order part P₀(η, ∇η) of the curvature split
/// R = γ̄(η) ∇²η + P₀: the direct formula is affine in the Hessian slot, so
/// P₀ is the direct formula evaluated at ∇²η = 0.
pub fn curvature_lower_order<T: Scalar>(frame: &NodeFrame, m: usize, jet: &Jet<T>) -> [[T; 2]; 2] {
    let mut flat = *jet;
    flat.hess = [[T::from_f64(0.0); 2]; 2];
    curvature_change(frame, m, &flat)
}

/// Elasticity tensor:
/// 𝒜E = (4 λ_s μ_s / (λ_s + 2 μ_s)) (𝔸 : E) 𝔸 + 4 μ_s 𝔸 E 𝔸,
/// with 𝔸 the contravariant reference metric.
pub fn elasticity_apply<T: Scalar>(
    a_con: &[[f64; 2]; 2],
    m: usize,
    lambda_s: f64,
    mu_s: f64,
    e: &[[T; 2]; 2],
) -> [[T; 2]; 2] {
    let z = T::from_f64(0.0);
    let c0 = 4.0 * lambda_s * mu_s / (lambda_s + 2.0 * mu_s);
    let mut trace = z;
    for i in 0..m {
        for j in 0..m {
            trace = trace + e[i][j].scale(a_con[i][j]);
        }
    }
    let mut out = [[z; 2]; 2];
    for i in 0..m {
        for j in 0..m {
            let mut aea = z;
            for k in 0..m {
                for l in 0..m {
                    aea = aea + e[k][l].scale(a_con[i][k] * a_con[l][j]);
                }
            }
            out[i][j] = trace.scale(c0 * a_con[i][j]) + aea.scale(4.0 * mu_s);
        }
    }
    out
}

#[inline]
pub fn tensor_contract<T: Scalar>(a: &[[T; 2]; 2], b: &[[T; 2]; 2], m: usize) -> T {
    let mut s = T::from_f64(0.0);
    for i in 0..m {
        for j in 0..m {
            s = s + a[i][j] * b[i][j];
        }
    }
    s
}

/// Membrane (change-of-metric) part of the energy density,
/// (h_th/4) 𝒜G : G.
pub fn membrane_density<T: Scalar>(
    frame: &NodeFrame,
    m: usize,
    jet: &Jet<T>,
    lambda_s: f64,
    mu_s: f64,
    h_th: f64,
) -> T {
    let g = metric_change(frame, m, jet);
    let ag = elasticity_apply(&frame.a_con, m, lambda_s, mu_s, &g);
    tensor_contract(&ag, &g, m).scale(h_th / 4.0)
}

/// Bending (change-of-curvature) part of the energy density,
/// (h_th³/48) 𝒜R : R.
pub fn bending_density<T: Scalar>(
    frame: &NodeFrame,
    m: usize,
    jet: &Jet<T>,
    lambda_s: f64,
    mu_s: f64,
    h_th: f64,
) -> T {
    let r = curvature_change(frame, m, jet);
    let ar = elasticity_apply(&frame.a_con, m, lambda_s, mu_s, &r);
    tensor_contract(&ar, &r, m).scale(h_th * h_th * h_th / 48.0)
}
