//! Desk-scale simulator of two incompressible heat-conducting fluids
//! separated by a closed nonlinear elastic shell.
//!
//! The two fluids occupy complementary moving subdomains of a fixed box and
//! exchange heat through the interface, whose conductance ranges from
//! insulating to superconducting. Time stepping is variational: each step
//! solves two minimization problems in sequence, one for velocity and shell
//! displacement, one for the temperatures, nested over two time scales (a
//! velocity scale `tau` inside an acceleration window `h`). Every step of the
//! discretization satisfies a ledger of discrete identities — an energy
//! identity, total-energy bookkeeping, a temperature minimal principle and an
//! entropy inequality — and the crate checks all of them at runtime.
//!
//! The narrative guide lives under `book/`; its code listings compile as
//! doc-tests through the [`guide`] module.

pub mod config;
pub mod diagnostics;
pub mod dual;
pub mod geometry;
pub mod grid;
pub mod koiter;
pub mod linalg;
pub mod materials;
pub mod output;
pub mod presets;
pub mod spectral;
pub mod timeloop;
pub mod transport;
pub mod varstep;

mod guide;

pub use config::RunConfig;
pub use diagnostics::{EnergyLedger, EntropyLedger};
pub use geometry::{DegeneracyStatus, DomainMask, InterfaceCurve, ReferenceSurface, TubularChart};
pub use koiter::{KoiterParams, ShellDisplacement, ShellGradient};
pub use materials::{FluidMaterial, Transmission, ViscosityCap};
pub use timeloop::{Trajectory, WindowData};


/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error:\n{0}")]
    Config(String),
    #[error("geometry degeneracy: {0:?} at t = {1}")]
    Degeneracy(geometry::DegeneracyStatus, f64),
    #[error("solver failure at step {step}: {reason}")]
    Solver { step: usize, reason: String },
    #[error("step size too large: {0}")]
    StepSize(String),
    #[error("internal inconsistency: {0}")]
    Internal(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
