//! Run configuration: a flat sectioned key-value file, full validation with
//! line references, round-trip serialization, and the translation into a
//! ready-to-run scenario.

use crate::geometry::{self, DegeneracyThresholds, SurfaceSpec, TubularChart};
use crate::grid::Grid;
use crate::koiter::KoiterParams;
use crate::materials::{FluidMaterial, Transmission, ViscosityCap};
use crate::timeloop::Scenario;
use crate::varstep::ModelParams;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Kinds of built-in initial data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialKind {
    /// Everything at rest, uniform equal temperatures.
    Rest,
    /// Fluids at rest with two different uniform temperatures.
    TwoTemperature,
    /// Azimuthal shear around the interface, uniform temperature.
    AzimuthalShear,
    /// Initial shell velocity kick in the second angular mode.
    Mode2Kick,
    /// Narrow inward finger of shell velocity with a wide compensating
    /// outward bulge (discretely mean free).
    InwardFinger,
}

impl InitialKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "rest" => Some(InitialKind::Rest),
            "two-temperature" => Some(InitialKind::TwoTemperature),
            "azimuthal-shear" => Some(InitialKind::AzimuthalShear),
            "mode2-kick" => Some(InitialKind::Mode2Kick),
            "inward-finger" => Some(InitialKind::InwardFinger),
            _ => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            InitialKind::Rest => "rest",
            InitialKind::TwoTemperature => "two-temperature",
            InitialKind::AzimuthalShear => "azimuthal-shear",
            InitialKind::Mode2Kick => "mode2-kick",
            InitialKind::InwardFinger => "inward-finger",
        }
    }
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    // geometry
    pub curve: SurfaceSpec,
    pub collar_a: f64,
    pub collar_b: f64,
    pub n_gamma: usize,
    // grid
    pub half_extent: f64,
    pub dx: f64,
    // scales
    pub tau: f64,
    pub h: f64,
    pub t_end: f64,
    pub kappa: f64,
    pub k0: usize,
    pub k0_fluid: usize,
    // shell
    pub lambda_s: f64,
    pub mu_s: f64,
    pub thickness: f64,
    // fluids
    pub fluids: [FluidMaterial; 2],
    // heat
    pub lambda: Transmission,
    pub cap: f64,
    pub gamma_floor: f64,
    // initial data
    pub initial: InitialKind,
    pub amp: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub noise_amp: f64,
    // solver
    pub tol_newton: f64,
    pub max_newton: usize,
    pub tol_cg: f64,
    pub max_cg: usize,
    // run control
    pub seed: u64,
    pub threads: usize,
    pub freeze_velocity: bool,
    pub snapshot_every: usize,
    pub eps_gamma: f64,
    pub near_margin: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            curve: SurfaceSpec::Circle { r: 1.0 },
            collar_a: -0.5,
            collar_b: 0.4,
            n_gamma: 32,
            half_extent: 1.9,
            dx: 0.2,
            tau: 0.125 / 8.0,
            h: 0.125,
            t_end: 0.25,
            kappa: 1e-4,
            k0: 4,
            k0_fluid: 2,
            lambda_s: 1.0,
            mu_s: 1.0,
            thickness: 0.1,
            fluids: [
                FluidMaterial {
                    mu0: 1.0,
                    beta_v: 0.5,
                    gamma_v: 0.2,
                    heat_capacity: 1.0,
                    conductivity: 1.0,
                },
                FluidMaterial {
                    mu0: 1.0,
                    beta_v: 0.5,
                    gamma_v: 0.2,
                    heat_capacity: 1.0,
                    conductivity: 1.0,
                },
            ],
            lambda: Transmission::Finite(1.0),
            cap: 1e6,
            gamma_floor: 0.5,
            initial: InitialKind::Rest,
            amp: 0.0,
            theta1: 1.0,
            theta2: 1.0,
            noise_amp: 0.0,
            tol_newton: 1e-10,
            max_newton: 50,
            tol_cg: 1e-12,
            max_cg: 20000,
            seed: 0,
            threads: 1,
            freeze_velocity: false,
            snapshot_every: 0,
            eps_gamma: 1e-3,
            near_margin: 0.0,
        }
    }
}

struct Raw {
    entries: BTreeMap<String, (String, usize)>,
}

impl Raw {
    fn parse(text: &str) -> Result<Raw> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        let mut problems = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                    section = name.trim().to_string();
                } else {
                    problems.push(format!("line {}: malformed section header", lineno + 1));
                }
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    let key = if section.is_empty() {
                        k.trim().to_string()
                    } else {
                        format!("{section}.{}", k.trim())
                    };
                    entries.insert(key, (v.trim().to_string(), lineno + 1));
                }
                None => problems.push(format!("line {}: expected key = value", lineno + 1)),
            }
        }
        if problems.is_empty() {
            Ok(Raw { entries })
        } else {
            Err(Error::Config(problems.join("\n")))
        }
    }

    fn take(&self, key: &str) -> Option<&(String, usize)> {
        self.entries.get(key)
    }
}

macro_rules! read_field {
    ($raw:expr, $problems:expr, $key:expr, $target:expr, $parse:expr) => {
        if let Some((v, line)) = $raw.take($key) {
            match $parse(v.as_str()) {
                Some(parsed) => $target = parsed,
                None => $problems.push(format!("line {line}: cannot parse `{}` for {}", v, $key)),
            }
        }
    };
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse().ok()
}

fn parse_usize(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Parses and validates a configuration from text, reporting every problem
/// found rather than just the first.
pub fn parse_config_text(text: &str) -> Result<RunConfig> {
    let raw = Raw::parse(text)?;
    let mut cfg = RunConfig::default();
    let mut problems: Vec<String> = Vec::new();

    // geometry
    {
        let curve_kind = raw.take("geometry.curve").map(|(v, l)| (v.clone(), *l));
        let radius = raw.take("geometry.radius").cloned();
        let ax_a = raw.take("geometry.a").cloned();
        let ax_b = raw.take("geometry.b").cloned();
        match curve_kind.as_ref().map(|(v, _)| v.as_str()) {
            None | Some("circle") => {
                let r = radius
                    .as_ref()
                    .and_then(|(v, _)| parse_f64(v))
                    .unwrap_or(1.0);
                cfg.curve = SurfaceSpec::Circle { r };
            }
            Some("ellipse") => {
                let a = ax_a.as_ref().and_then(|(v, _)| parse_f64(v)).unwrap_or(1.0);
                let b = ax_b.as_ref().and_then(|(v, _)| parse_f64(v)).unwrap_or(1.0);
                cfg.curve = SurfaceSpec::Ellipse { a, b };
            }
            Some(other) => {
                let line = curve_kind.as_ref().map(|(_, l)| *l).unwrap_or(0);
                problems.push(format!(
                    "line {line}: unknown curve family `{other}` (circle | ellipse)"
                ));
            }
        }
    }
    read_field!(raw, problems, "geometry.collar_a", cfg.collar_a, parse_f64);
    read_field!(raw, problems, "geometry.collar_b", cfg.collar_b, parse_f64);
    read_field!(raw, problems, "geometry.n_gamma", cfg.n_gamma, parse_usize);
    read_field!(raw, problems, "grid.half_extent", cfg.half_extent, parse_f64);
    read_field!(raw, problems, "grid.dx", cfg.dx, parse_f64);
    read_field!(raw, problems, "scales.tau", cfg.tau, parse_f64);
    read_field!(raw, problems, "scales.h", cfg.h, parse_f64);
    read_field!(raw, problems, "scales.t_end", cfg.t_end, parse_f64);
    read_field!(raw, problems, "scales.kappa", cfg.kappa, parse_f64);
    read_field!(raw, problems, "scales.k0", cfg.k0, parse_usize);
    read_field!(raw, problems, "scales.k0_fluid", cfg.k0_fluid, parse_usize);
    read_field!(raw, problems, "shell.lambda_s", cfg.lambda_s, parse_f64);
    read_field!(raw, problems, "shell.mu_s", cfg.mu_s, parse_f64);
    read_field!(raw, problems, "shell.thickness", cfg.thickness, parse_f64);
    for fluid in 0..2 {
        let sec = format!("fluid{}", fluid + 1);
        read_field!(raw, problems, &format!("{sec}.mu0"), cfg.fluids[fluid].mu0, parse_f64);
        read_field!(raw, problems, &format!("{sec}.beta_v"), cfg.fluids[fluid].beta_v, parse_f64);
        read_field!(raw, problems, &format!("{sec}.gamma_v"), cfg.fluids[fluid].gamma_v, parse_f64);
        read_field!(
            raw,
            problems,
            &format!("{sec}.heat_capacity"),
            cfg.fluids[fluid].heat_capacity,
            parse_f64
        );
        read_field!(
            raw,
            problems,
            &format!("{sec}.conductivity"),
            cfg.fluids[fluid].conductivity,
            parse_f64
        );
    }
    if let Some((v, line)) = raw.take("heat.lambda") {
        let parsed = if v == "inf" {
            Some(Transmission::Superconducting)
        } else {
            parse_f64(v).and_then(|x| Transmission::from_value(x).ok())
        };
        match parsed {
            Some(t) => cfg.lambda = t,
            None => problems.push(format!(
                "line {line}: interface conductance must be a nonnegative number or `inf`"
            )),
        }
    }
    read_field!(raw, problems, "heat.cap", cfg.cap, parse_f64);
    read_field!(raw, problems, "heat.gamma_floor", cfg.gamma_floor, parse_f64);
    if let Some((v, line)) = raw.take("initial.kind") {
        match InitialKind::parse(v) {
            Some(k) => cfg.initial = k,
            None => problems.push(format!("line {line}: unknown initial-data kind `{v}`")),
        }
    }
    read_field!(raw, problems, "initial.amp", cfg.amp, parse_f64);
    read_field!(raw, problems, "initial.theta1", cfg.theta1, parse_f64);
    read_field!(raw, problems, "initial.theta2", cfg.theta2, parse_f64);
    read_field!(raw, problems, "initial.noise_amp", cfg.noise_amp, parse_f64);
    read_field!(raw, problems, "solver.tol_newton", cfg.tol_newton, parse_f64);
    read_field!(raw, problems, "solver.max_newton", cfg.max_newton, parse_usize);
    read_field!(raw, problems, "solver.tol_cg", cfg.tol_cg, parse_f64);
    read_field!(raw, problems, "solver.max_cg", cfg.max_cg, parse_usize);
    read_field!(raw, problems, "run.seed", cfg.seed, |s: &str| s.parse::<u64>().ok());
    read_field!(raw, problems, "run.threads", cfg.threads, parse_usize);
    read_field!(raw, problems, "run.freeze_velocity", cfg.freeze_velocity, parse_bool);
    read_field!(raw, problems, "run.snapshot_every", cfg.snapshot_every, parse_usize);
    read_field!(raw, problems, "run.eps_gamma", cfg.eps_gamma, parse_f64);
    read_field!(raw, problems, "run.near_margin", cfg.near_margin, parse_f64);

    problems.extend(cfg.validate_collect());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(problems.join("\n")))
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_text(&text)
}

impl RunConfig {
    /// All semantic violations, empty when valid.
    pub fn validate_collect(&self) -> Vec<String> {
        let mut v = Vec::new();
        let ratio = self.h / self.tau;
        if !(self.tau > 0.0 && self.h > 0.0) {
            v.push("scales: tau and h must be positive".into());
        } else if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            v.push(format!(
                "scales: window not divisible: h/tau = {ratio} is not a positive integer"
            ));
        }
        if self.t_end <= 0.0 {
            v.push("scales: t_end must be positive".into());
        }
        if self.kappa < 0.0 {
            v.push("scales: kappa must be nonnegative".into());
        }
        if !(self.k0_fluid == 1 || self.k0_fluid == 2) {
            v.push("scales: k0_fluid must be 1 or 2".into());
        }
        let kp = KoiterParams {
            lambda_s: self.lambda_s,
            mu_s: self.mu_s,
            h_th: self.thickness,
            kappa: self.kappa,
            k0: self.k0,
        };
        if let Err(e) = kp.validate() {
            v.push(format!("shell: {e}"));
        }
        for (i, f) in self.fluids.iter().enumerate() {
            if f.validate().is_err() {
                v.push(format!("fluid{}: material constants must be positive", i + 1));
            }
        }
        let max_gamma_v = self.fluids[0].gamma_v.max(self.fluids[1].gamma_v);
        if self.gamma_floor <= max_gamma_v {
            v.push(format!(
                "heat: temperature floor {} must exceed every viscosity singularity temperature (max {})",
                self.gamma_floor, max_gamma_v
            ));
        }
        if self.cap <= 0.0 {
            v.push("heat: viscosity cap must be positive".into());
        }
        if self.theta1 < self.gamma_floor || self.theta2 < self.gamma_floor {
            v.push("initial: temperatures must start at or above the floor".into());
        }
        if !(self.collar_a < self.collar_b) {
            v.push("geometry: collar bounds must satisfy collar_a < collar_b".into());
        }
        if self.n_gamma < 8 {
            v.push("geometry: n_gamma must be at least 8".into());
        }
        if self.dx <= 0.0 || self.half_extent <= 0.0 {
            v.push("grid: spacing and extent must be positive".into());
        }
        // the collar may not reach the wall ring of the box
        let outer_reach = match self.curve {
            SurfaceSpec::Circle { r } => r + self.collar_b.max(0.0),
            SurfaceSpec::Ellipse { a, b } => a.max(b) + self.collar_b.max(0.0),
            SurfaceSpec::Torus { .. } => f64::INFINITY,
        };
        if outer_reach >= self.half_extent - 2.0 * self.dx {
            v.push(format!(
                "geometry: collar reaches the wall: interface + collar_b = {outer_reach} needs two cells of clearance inside half_extent = {}",
                self.half_extent
            ));
        }
        // initial displacement must sit inside the admissible band
        let band = (self.collar_b - self.collar_a) / 4.0;
        if self.amp.abs() > 0.0 && self.initial == InitialKind::Rest {
            v.push("initial: rest data cannot carry an amplitude".into());
        }
        let _ = band;
        if self.tol_newton <= 0.0 || self.tol_cg <= 0.0 {
            v.push("solver: tolerances must be positive".into());
        }
        if self.threads == 0 {
            v.push("run: threads must be at least 1".into());
        }
        if matches!(self.curve, SurfaceSpec::Torus { .. }) {
            v.push("geometry: the coupled run supports closed curves only".into());
        }
        v
    }

    /// Canonical serialization; parsing it back yields an equal config.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[geometry]");
        match self.curve {
            SurfaceSpec::Circle { r } => {
                let _ = writeln!(s, "curve = circle");
                let _ = writeln!(s, "radius = {r}");
            }
            SurfaceSpec::Ellipse { a, b } => {
                let _ = writeln!(s, "curve = ellipse");
                let _ = writeln!(s, "a = {a}");
                let _ = writeln!(s, "b = {b}");
            }
            SurfaceSpec::Torus { .. } => unreachable!("validated out"),
        }
        let _ = writeln!(s, "collar_a = {}", self.collar_a);
        let _ = writeln!(s, "collar_b = {}", self.collar_b);
        let _ = writeln!(s, "n_gamma = {}", self.n_gamma);
        let _ = writeln!(s, "\n[grid]");
        let _ = writeln!(s, "half_extent = {}", self.half_extent);
        let _ = writeln!(s, "dx = {}", self.dx);
        let _ = writeln!(s, "\n[scales]");
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "h = {}", self.h);
        let _ = writeln!(s, "t_end = {}", self.t_end);
        let _ = writeln!(s, "kappa = {}", self.kappa);
        let _ = writeln!(s, "k0 = {}", self.k0);
        let _ = writeln!(s, "k0_fluid = {}", self.k0_fluid);
        let _ = writeln!(s, "\n[shell]");
        let _ = writeln!(s, "lambda_s = {}", self.lambda_s);
        let _ = writeln!(s, "mu_s = {}", self.mu_s);
        let _ = writeln!(s, "thickness = {}", self.thickness);
        for (i, f) in self.fluids.iter().enumerate() {
            let _ = writeln!(s, "\n[fluid{}]", i + 1);
            let _ = writeln!(s, "mu0 = {}", f.mu0);
            let _ = writeln!(s, "beta_v = {}", f.beta_v);
            let _ = writeln!(s, "gamma_v = {}", f.gamma_v);
            let _ = writeln!(s, "heat_capacity = {}", f.heat_capacity);
            let _ = writeln!(s, "conductivity = {}", f.conductivity);
        }
        let _ = writeln!(s, "\n[heat]");
        match self.lambda {
            Transmission::Insulating => {
                let _ = writeln!(s, "lambda = 0");
            }
            Transmission::Finite(l) => {
                let _ = writeln!(s, "lambda = {l}");
            }
            Transmission::Superconducting => {
                let _ = writeln!(s, "lambda = inf");
            }
        }
        let _ = writeln!(s, "cap = {}", self.cap);
        let _ = writeln!(s, "gamma_floor = {}", self.gamma_floor);
        let _ = writeln!(s, "\n[initial]");
        let _ = writeln!(s, "kind = {}", self.initial.name());
        let _ = writeln!(s, "amp = {}", self.amp);
        let _ = writeln!(s, "theta1 = {}", self.theta1);
        let _ = writeln!(s, "theta2 = {}", self.theta2);
        let _ = writeln!(s, "noise_amp = {}", self.noise_amp);
        let _ = writeln!(s, "\n[solver]");
        let _ = writeln!(s, "tol_newton = {}", self.tol_newton);
        let _ = writeln!(s, "max_newton = {}", self.max_newton);
        let _ = writeln!(s, "tol_cg = {}", self.tol_cg);
        let _ = writeln!(s, "max_cg = {}", self.max_cg);
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "freeze_velocity = {}", self.freeze_velocity);
        let _ = writeln!(s, "snapshot_every = {}", self.snapshot_every);
        let _ = writeln!(s, "eps_gamma = {}", self.eps_gamma);
        let _ = writeln!(s, "near_margin = {}", self.near_margin);
        s
    }

    /// Builds the runnable scenario: geometry, parameters and initial data.
    pub fn build_scenario(&self) -> Result<Scenario> {
        let problems = self.validate_collect();
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("\n")));
        }
        let surface = geometry::build_reference(&self.curve, self.n_gamma)?;
        let chart = TubularChart::equal_thirds(self.collar_a, self.collar_b)?;
        let mut thresholds = DegeneracyThresholds::defaults(&chart);
        thresholds.eps_gamma = self.eps_gamma;
        thresholds.near_margin = self.near_margin;
        let grid = Grid::centered(self.half_extent, self.dx);
        let params = ModelParams {
            tau: self.tau,
            h: self.h,
            kappa: self.kappa,
            k0_fluid: self.k0_fluid,
            koiter: KoiterParams {
                lambda_s: self.lambda_s,
                mu_s: self.mu_s,
                h_th: self.thickness,
                kappa: self.kappa,
                k0: self.k0,
            },
            materials: self.fluids,
            cap: ViscosityCap {
                cap: self.cap,
                gamma_floor: self.gamma_floor,
            },
            transmission: self.lambda,
            tol_newton: self.tol_newton,
            max_newton: self.max_newton,
            tol_cg: self.tol_cg,
            max_cg: self.max_cg,
        };

        let n = surface.node_count();
        let nodes = surface.gamma.nodes();
        let mut eta0 = vec![0.0; n];
        let mut eta_vel0 = vec![0.0; n];
        let mut u0 = vec![[0.0; 2]; grid.cell_count()];
        match self.initial {
            InitialKind::Rest | InitialKind::TwoTemperature => {}
            InitialKind::AzimuthalShear => {
                // divergence-free swirl u = ω(r)(−y, x) supported inside the
                // second fluid: the profile dies off well before the
                // interface, so the interface stays at rest and transport
                // stencils never straddle it
                let r0 = 0.5;
                let sigma = 0.3;
                for c in 0..grid.cell_count() {
                    let p = grid.center_of(c);
                    let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                    let omega = self.amp * (-((r - r0) / sigma).powi(2)).exp();
                    u0[c] = [-omega * p[1], omega * p[0]];
                }
            }
            InitialKind::Mode2Kick => {
                for (j, x) in nodes.iter().enumerate() {
                    eta_vel0[j] = self.amp * (2.0 * x[0]).cos();
                }
            }
            InitialKind::InwardFinger => {
                let sigma = 0.5;
                let bump: Vec<f64> = nodes
                    .iter()
                    .map(|x| {
                        let mut d = (x[0] - std::f64::consts::PI).abs();
                        if d > std::f64::consts::PI {
                            d = std::f64::consts::TAU - d;
                        }
                        (-(d / sigma) * (d / sigma)).exp()
                    })
                    .collect();
                let mean = bump.iter().sum::<f64>() / bump.len() as f64;
                for (j, b) in bump.iter().enumerate() {
                    eta_vel0[j] = self.amp * (mean - b);
                }
            }
        }
        if self.noise_amp != 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for v in eta0.iter_mut() {
                *v += self.noise_amp * rng.random_range(-1.0..1.0);
            }
        }
        let theta0 = [
            vec![self.theta1; grid.cell_count()],
            vec![self.theta2; grid.cell_count()],
        ];
        let n_slots = (self.h / self.tau).round() as usize;
        Ok(Scenario {
            surface,
            chart,
            thresholds,
            grid,
            params,
            eta0,
            eta_vel0,
            u0,
            theta0,
            t_end: self.t_end,
            n_slots,
            freeze_velocity: self.freeze_velocity,
            body_force: None,
            parallel: self.threads > 1,
        })
    }
}
