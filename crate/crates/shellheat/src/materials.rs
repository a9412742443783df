//! Constitutive laws: temperature-dependent viscosity and its cap, internal
//! energy, entropy, dissipation density, and the interface conductance.

use crate::{Error, Result};

/// Per-fluid material constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidMaterial {
    /// Viscosity prefactor μ₀ > 0.
    pub mu0: f64,
    /// Viscosity activation parameter β > 0.
    pub beta_v: f64,
    /// Viscosity singularity temperature γ > 0.
    pub gamma_v: f64,
    /// Heat capacity c > 0.
    pub heat_capacity: f64,
    /// Heat conductivity k > 0.
    pub conductivity: f64,
}

impl FluidMaterial {
    pub fn validate(&self) -> Result<()> {
        if self.mu0 > 0.0
            && self.beta_v > 0.0
            && self.gamma_v > 0.0
            && self.heat_capacity > 0.0
            && self.conductivity > 0.0
        {
            Ok(())
        } else {
            Err(Error::Config(
                "fluid material constants must all be positive".into(),
            ))
        }
    }
}

/// Interface heat conductance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transmission {
    /// λ = 0: no heat flux through the interface.
    Insulating,
    /// Robin-type jump flux with conductance λ > 0.
    Finite(f64),
    /// λ = ∞: temperature continuity across the interface.
    Superconducting,
}

impl Transmission {
    pub fn from_value(v: f64) -> Result<Self> {
        if v == 0.0 {
            Ok(Transmission::Insulating)
        } else if v.is_infinite() && v > 0.0 {
            Ok(Transmission::Superconducting)
        } else if v > 0.0 && v.is_finite() {
            Ok(Transmission::Finite(v))
        } else {
            Err(Error::Config(format!(
                "interface conductance must be 0, positive or inf, got {v}"
            )))
        }
    }

    pub fn finite_value(&self) -> f64 {
        match *self {
            Transmission::Finite(v) => v,
            _ => 0.0,
        }
    }
}

/// Viscosity cap and the temperature floor it is keyed to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViscosityCap {
    /// Cap parameter M > 0: below `γ + 1/M` the viscosity freezes at its
    /// value there.
    pub cap: f64,
    /// Lower temperature bound maintained by the scheme; must exceed every
    /// fluid's γ.
    pub gamma_floor: f64,
}

/// Vogel–Fulcher–Tammann viscosity μ(θ) = μ₀ exp(β/(θ − γ)).
pub fn vft_viscosity(theta: f64, mat: &FluidMaterial) -> Result<f64> {
    if theta <= mat.gamma_v {
        return Err(Error::Domain(format!(
            "viscosity singularity: θ = {theta} ≤ γ = {}",
            mat.gamma_v
        )));
    }
    Ok(mat.mu0 * (mat.beta_v / (theta - mat.gamma_v)).exp())
}

/// Capped viscosity: the plain law for θ ≥ γ + 1/M, frozen at
/// μ₀ e^{Mβ} below. Defined for every θ and bounded between μ₀ and μ₀ e^{Mβ}.
pub fn capped_viscosity(theta: f64, mat: &FluidMaterial, cap: &ViscosityCap) -> f64 {
    if theta >= mat.gamma_v + 1.0 / cap.cap {
        mat.mu0 * (mat.beta_v / (theta - mat.gamma_v)).exp()
    } else {
        mat.mu0 * (cap.cap * mat.beta_v).exp()
    }
}

/// Symmetric part of a velocity gradient.
pub fn symmetric_gradient(grad: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [grad[0][0], 0.5 * (grad[0][1] + grad[1][0])],
        [0.5 * (grad[1][0] + grad[0][1]), grad[1][1]],
    ]
}

/// Frobenius square sum, the norm convention used in every dissipation
/// integral of this crate.
pub fn frobenius_sq(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]
}

/// Viscous dissipation density μ^M(θ) |D(u)|².
pub fn dissipation_density(
    theta: f64,
    grad_u: &[[f64; 2]; 2],
    mat: &FluidMaterial,
    cap: &ViscosityCap,
) -> f64 {
    capped_viscosity(theta, mat, cap) * frobenius_sq(&symmetric_gradient(grad_u))
}

pub fn internal_energy(theta: f64, mat: &FluidMaterial) -> f64 {
    mat.heat_capacity * theta
}

pub fn entropy(theta: f64, mat: &FluidMaterial) -> Result<f64> {
    if theta <= 0.0 {
        return Err(Error::Domain(format!("entropy needs θ > 0, got {theta}")));
    }
    Ok(mat.heat_capacity * theta.ln())
}

/// Concave increasing test functions for the entropy inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EntropyTestKind {
    Log,
    /// φ(θ) = θ^{β+1} with β ∈ (−1, 0).
    Power(f64),
}

/// Returns (φ, φ′, φ″) at θ; φ is concave and increasing on θ > 0.
pub fn entropy_test_function(kind: EntropyTestKind, theta: f64) -> Result<(f64, f64, f64)> {
    if theta <= 0.0 {
        return Err(Error::Domain(format!(
            "entropy test functions need θ > 0, got {theta}"
        )));
    }
    match kind {
        EntropyTestKind::Log => Ok((theta.ln(), 1.0 / theta, -1.0 / (theta * theta))),
        EntropyTestKind::Power(b) => {
            if !(-1.0 < b && b < 0.0) {
                return Err(Error::Domain(format!(
                    "power-family exponent must lie in (−1, 0), got {b}"
                )));
            }
            Ok((
                theta.powf(b + 1.0),
                (b + 1.0) * theta.powf(b),
                (b + 1.0) * b * theta.powf(b - 1.0),
            ))
        }
    }
}
