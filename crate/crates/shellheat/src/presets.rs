//! Named scenario presets. Each one is a complete configuration; command
//! line flags can still override individual values.

use crate::config::{InitialKind, RunConfig};
use crate::geometry::SurfaceSpec;
use crate::materials::Transmission;

pub const PRESET_NAMES: [&str; 6] = [
    "rest",
    "conduction",
    "shear-heating",
    "breathing-mode",
    "collar-hit",
    "gamma-degenerate",
];

/// Returns the named preset configuration.
pub fn preset(name: &str) -> Option<RunConfig> {
    let mut cfg = RunConfig::default();
    match name {
        "rest" => {
            cfg.initial = InitialKind::Rest;
            cfg.h = 0.125;
            cfg.tau = cfg.h / 8.0;
            cfg.t_end = 10.0 * cfg.h;
        }
        "conduction" => {
            cfg.initial = InitialKind::TwoTemperature;
            cfg.freeze_velocity = true;
            cfg.theta1 = 2.0;
            cfg.theta2 = 1.0;
            cfg.h = 0.25;
            cfg.tau = cfg.h / 50.0;
            cfg.t_end = cfg.h;
            cfg.lambda = Transmission::Finite(1.0);
        }
        "shear-heating" => {
            cfg.initial = InitialKind::AzimuthalShear;
            cfg.amp = 1.0;
            cfg.h = 0.25;
            cfg.tau = cfg.h / 16.0;
            cfg.t_end = cfg.h;
            cfg.lambda = Transmission::Finite(1.0);
        }
        "breathing-mode" => {
            cfg.initial = InitialKind::Mode2Kick;
            cfg.amp = 0.25;
            cfg.h = 0.125;
            cfg.tau = cfg.h / 8.0;
            cfg.t_end = 2.0 * cfg.h;
        }
        "collar-hit" => {
            cfg.initial = InitialKind::Mode2Kick;
            cfg.amp = 2.5;
            cfg.collar_a = -0.8;
            cfg.collar_b = 0.3;
            cfg.lambda_s = 0.2;
            cfg.mu_s = 0.2;
            cfg.thickness = 0.05;
            for f in cfg.fluids.iter_mut() {
                f.mu0 = 0.1;
                f.beta_v = 0.1;
            }
            cfg.h = 0.125;
            cfg.tau = cfg.h / 8.0;
            cfg.t_end = 1.0;
        }
        "gamma-degenerate" => {
            cfg.initial = InitialKind::InwardFinger;
            cfg.amp = 6.0;
            cfg.curve = SurfaceSpec::Circle { r: 1.0 };
            cfg.collar_a = -0.99;
            cfg.collar_b = 0.5;
            cfg.eps_gamma = 0.3;
            cfg.lambda_s = 0.2;
            cfg.mu_s = 0.2;
            cfg.thickness = 0.05;
            for f in cfg.fluids.iter_mut() {
                f.mu0 = 0.1;
                f.beta_v = 0.1;
            }
            cfg.half_extent = 2.0;
            cfg.h = 0.125;
            cfg.tau = cfg.h / 8.0;
            cfg.t_end = 1.5;
        }
        _ => return None,
    }
    Some(cfg)
}
