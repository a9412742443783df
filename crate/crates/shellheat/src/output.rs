//! Run outputs: ledger CSVs, field snapshots, termination report, and the
//! `verify` pass that re-asserts every ledger flag from the files alone.

use crate::config::RunConfig;
use crate::diagnostics::EnergyLedger;
use crate::materials::{EntropyTestKind, Transmission};
use crate::timeloop::{
    run_simulation, SimulationResult, TerminationReason, Trajectory,
};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub const LEDGER_COLUMNS: [&str; 46] = [
    "step",
    "window",
    "time",
    "tau",
    "kin_eta",
    "kin_fluid",
    "beta_sq",
    "w_sq",
    "elastic",
    "elastic_prev",
    "visc_diss",
    "reg_diss_u",
    "reg_diss_eta",
    "defect_eta",
    "defect_u",
    "remainder",
    "residual_energy",
    "thermal1",
    "thermal2",
    "thermal_transported1",
    "thermal_transported2",
    "thermal_old1",
    "thermal_old2",
    "heat_source1",
    "heat_source2",
    "cap_defect",
    "interface_flux",
    "heat_residual1",
    "heat_residual2",
    "jump_max",
    "jump_mean",
    "coupling_violation",
    "div_max",
    "min_theta",
    "newton_iters",
    "cg_iters",
    "clamps",
    "orphans",
    "clamped_cells",
    "min_gamma_bar",
    "coercivity",
    "total_energy",
    "cumulative_dissipation",
    "det_psi_dev",
    "det_phi_min",
    "det_phi_max",
];

fn ledger_row(e: &EnergyLedger) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        e.step,
        e.window,
        e.time,
        e.tau,
        e.kin_eta,
        e.kin_fluid,
        e.beta_sq,
        e.w_sq,
        e.elastic,
        e.elastic_prev,
        e.visc_diss,
        e.reg_diss_u,
        e.reg_diss_eta,
        e.defect_eta,
        e.defect_u,
        e.remainder,
        e.residual_energy,
        e.thermal[0],
        e.thermal[1],
        e.thermal_transported[0],
        e.thermal_transported[1],
        e.thermal_old[0],
        e.thermal_old[1],
        e.heat_source[0],
        e.heat_source[1],
        e.cap_defect,
        e.interface_flux,
        e.heat_residual[0],
        e.heat_residual[1],
        e.jump_max,
        e.jump_mean,
        e.coupling_violation,
        e.div_max,
        e.min_theta,
        e.newton_iters,
        e.cg_iters,
        e.clamps,
        e.orphans,
        e.clamped_cells,
        e.min_gamma_bar,
        e.coercivity,
        e.total_energy,
        e.cumulative_dissipation,
        e.det_psi_dev,
        e.det_phi_min,
        e.det_phi_max,
    )
}

fn family_name(f: EntropyTestKind) -> String {
    match f {
        EntropyTestKind::Log => "log".to_string(),
        EntropyTestKind::Power(b) => format!("power({b})"),
    }
}

fn status_name(reason: &TerminationReason) -> &'static str {
    match reason {
        TerminationReason::TimeReached => "TIME_REACHED",
        TerminationReason::Degeneracy(s) => match s {
            crate::geometry::DegeneracyStatus::CollarHit => "COLLAR_HIT",
            crate::geometry::DegeneracyStatus::GammaDegenerate => "GAMMA_DEGENERATE",
            crate::geometry::DegeneracyStatus::SelfIntersect => "SELF_INTERSECT",
            crate::geometry::DegeneracyStatus::NearCollar => "NEAR_COLLAR",
            crate::geometry::DegeneracyStatus::Ok => "OK",
        },
        TerminationReason::SolverFailure(_) => "SOLVER_FAILURE",
    }
}

/// Runs a configuration and writes every artifact into `out_dir`.
pub fn run_to_dir(cfg: &RunConfig, out_dir: &Path) -> Result<SimulationResult> {
    std::fs::create_dir_all(out_dir)?;
    let scenario = cfg.build_scenario()?;
    if cfg.threads > 1 {
        // best effort; a global pool may already exist
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    let result = run_simulation(&scenario)?;

    std::fs::write(out_dir.join("config.ini"), cfg.serialize())?;
    std::fs::write(out_dir.join("ledger_schema.txt"), ledger_schema())?;

    let mut ledger = String::new();
    let _ = writeln!(ledger, "{}", LEDGER_COLUMNS.join(","));
    let mut entropy = String::new();
    let _ = writeln!(entropy, "step,family,total,production,interface,balance,tol,holds");
    for traj in &result.trajectories {
        for rec in &traj.records {
            let _ = writeln!(ledger, "{}", ledger_row(&rec.energy));
            for row in &rec.entropy {
                let _ = writeln!(
                    entropy,
                    "{},{},{},{},{},{},{},{}",
                    row.step,
                    family_name(row.family),
                    row.total,
                    row.production,
                    row.interface,
                    row.balance,
                    row.tol,
                    row.holds
                );
            }
        }
    }
    std::fs::write(out_dir.join("ledger.csv"), ledger)?;
    std::fs::write(out_dir.join("entropy.csv"), entropy)?;

    // initial mask for debugging
    if let Some(first) = result.trajectories.first() {
        std::fs::write(out_dir.join("masks.txt"), first.data.ref_mask.to_text())?;
    }

    if cfg.snapshot_every > 0 {
        for traj in &result.trajectories {
            for rec in &traj.records {
                if rec.step % cfg.snapshot_every == 0 {
                    write_snapshot(out_dir, traj, rec.step, rec.time)?;
                }
            }
        }
    }

    let mut term = String::new();
    let _ = writeln!(term, "status = {}", status_name(&result.termination.reason));
    let _ = writeln!(term, "time = {}", result.termination.time);
    let _ = writeln!(term, "window = {}", result.termination.window);
    let _ = writeln!(term, "step = {}", result.termination.step);
    let _ = writeln!(term, "coercivity_sup = {}", result.termination.coercivity_sup);
    let _ = writeln!(
        term,
        "k0_in_coercive_range = {}",
        !scenario.params.koiter.k0_below_coercive_range()
    );
    if let TerminationReason::SolverFailure(msg) = &result.termination.reason {
        let _ = writeln!(term, "detail = {msg}");
    }
    std::fs::write(out_dir.join("termination.txt"), term)?;
    Ok(result)
}

fn write_snapshot(out_dir: &Path, traj: &Trajectory, step: usize, time: f64) -> Result<()> {
    let rec = traj
        .records
        .iter()
        .find(|r| r.step == step)
        .ok_or_else(|| Error::Internal("snapshot step missing".into()))?;
    let grid_cells = rec.u.len();
    let n_eta = rec.eta_after.len();
    let mut header = String::new();
    let _ = writeln!(header, "shellheat-snapshot v1");
    let _ = writeln!(header, "step {step} time {time}");
    let _ = writeln!(header, "field u cells {grid_cells} comps 2 dtype f64");
    let _ = writeln!(header, "field theta1 cells {grid_cells} comps 1 dtype f64");
    let _ = writeln!(header, "field theta2 cells {grid_cells} comps 1 dtype f64");
    let _ = writeln!(header, "field eta nodes {n_eta} comps 1 dtype f64");
    let _ = writeln!(header, "end-header");
    let path = out_dir.join(format!("snapshot_{step:06}.bin"));
    let mut file = std::fs::File::create(path)?;
    file.write_all(header.as_bytes())?;
    let mut raw: Vec<u8> = Vec::new();
    for v in &rec.u {
        raw.extend_from_slice(&v[0].to_le_bytes());
        raw.extend_from_slice(&v[1].to_le_bytes());
    }
    for fluid in 0..2 {
        for v in &rec.theta[fluid] {
            raw.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in &rec.eta_after {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&raw)?;
    Ok(())
}

fn ledger_schema() -> String {
    let mut s = String::from(
        "ledger.csv: one row per accepted velocity/temperature step\n\
         entropy.csv: one row per step per entropy test family\n\n\
         energy columns (full quadrature weights):\n",
    );
    let descriptions: [(&str, &str); 46] = [
        ("step", "global step index"),
        ("window", "window index"),
        ("time", "time at the end of the step"),
        ("tau", "step size (h/N, halved on a retried slot)"),
        ("kin_eta", "(1/2h) ||delta eta / tau||^2 on the shell nodes"),
        ("kin_fluid", "(1/2h) ||u o Phi||^2 over the window-initial cells"),
        ("beta_sq", "(1/2h) ||beta_k||^2"),
        ("w_sq", "(1/2h) ||w_k||^2"),
        ("elastic", "regularized shell energy after the step"),
        ("elastic_prev", "regularized shell energy before the step"),
        ("visc_diss", "viscous dissipation integral"),
        ("reg_diss_u", "kappa x fluid regularizer dissipation"),
        ("reg_diss_eta", "kappa x shell-rate regularizer dissipation"),
        ("defect_eta", "(1/2h) ||delta eta/tau - beta_k||^2"),
        ("defect_u", "(1/2h) ||u o Phi - w_k||^2"),
        ("remainder", "<DK(eta_new), delta eta> - elastic increment"),
        (
            "residual_energy",
            "relative residual of the step energy identity; every accepted step must stay below 1e-9",
        ),
        ("thermal1", "c1 integral of theta1 on the new mask"),
        ("thermal2", "c2 integral of theta2 on the new mask"),
        ("thermal_transported1", "c1 integral of theta1 o Psi on the old mask"),
        ("thermal_transported2", "c2 integral of theta2 o Psi on the old mask"),
        ("thermal_old1", "c1 integral of theta1 before the step"),
        ("thermal_old2", "c2 integral of theta2 before the step"),
        ("heat_source1", "integrated heating entering fluid 1 (includes shell terms)"),
        ("heat_source2", "integrated heating entering fluid 2"),
        ("cap_defect", "energy clipped by the min(.,1/tau) caps"),
        ("interface_flux", "lambda-weighted marker jump integral"),
        (
            "heat_residual1",
            "relative residual of the transported heat balance of fluid 1",
        ),
        ("heat_residual2", "same for fluid 2"),
        ("jump_max", "max marker |theta1 - theta2|"),
        ("jump_mean", "mean marker |theta1 - theta2|"),
        (
            "coupling_violation",
            "max marker |Interp(u) - (delta eta/tau) nu|; constraint-enforced",
        ),
        ("div_max", "max centered divergence over constrained cells"),
        ("min_theta", "minimum temperature after the step"),
        ("newton_iters", "velocity-step Newton iterations"),
        ("cg_iters", "temperature-step CG iterations"),
        ("clamps", "interpolation stencils clamped or renormalized"),
        ("orphans", "cells whose fluid label flipped"),
        ("clamped_cells", "cells held at the temperature floor"),
        ("min_gamma_bar", "minimum curvature coefficient of the shell"),
        ("coercivity", "integral of gamma_bar^2 |hess eta|^2"),
        ("total_energy", "instantaneous total energy after the step"),
        ("cumulative_dissipation", "running sum of all dissipation blocks"),
        ("det_psi_dev", "max |det grad Psi - 1| over fluid cells"),
        ("det_phi_min", "min det grad Phi over reference cells"),
        ("det_phi_max", "max det grad Phi over reference cells"),
    ];
    for (name, descr) in descriptions {
        let _ = writeln!(s, "  {name}: {descr}");
    }
    s.push_str(
        "\nwindow energy bookkeeping: the conserved quantity of a window is\n\
         thermal1+thermal2+elastic at the window end plus sum over steps of\n\
         tau*(kin_eta+kin_fluid); the incoming value replaces the kinetic sums\n\
         by tau*(beta_sq+w_sq) and the end-state values by the initial ones.\n",
    );
    s
}

/// Parsed ledger for verification.
pub struct StoredRun {
    pub config: RunConfig,
    pub ledger: Vec<Vec<f64>>,
    pub columns: Vec<String>,
    pub entropy: Vec<(usize, String, f64, f64, f64, f64, f64, bool)>,
    pub status: String,
}

pub fn load_run(out_dir: &Path) -> Result<StoredRun> {
    let config_text = std::fs::read_to_string(out_dir.join("config.ini"))
        .map_err(|_| Error::Config(format!("no run found in {}", out_dir.display())))?;
    let config = crate::config::parse_config_text(&config_text)?;
    let ledger_text = std::fs::read_to_string(out_dir.join("ledger.csv"))?;
    let mut lines = ledger_text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty ledger".into()))?;
    let columns: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let mut ledger = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.parse::<f64>()).collect();
        ledger.push(row.map_err(|e| Error::Config(format!("bad ledger cell: {e}")))?);
    }
    let entropy_text = std::fs::read_to_string(out_dir.join("entropy.csv"))?;
    let mut entropy = Vec::new();
    for line in entropy_text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::Config("bad entropy row".into()));
        }
        entropy.push((
            parts[0].parse().map_err(|_| Error::Config("bad step".into()))?,
            parts[1].to_string(),
            parts[2].parse().unwrap_or(f64::NAN),
            parts[3].parse().unwrap_or(f64::NAN),
            parts[4].parse().unwrap_or(f64::NAN),
            parts[5].parse().unwrap_or(f64::NAN),
            parts[6].parse().unwrap_or(f64::NAN),
            parts[7] == "true",
        ));
    }
    let term = std::fs::read_to_string(out_dir.join("termination.txt"))?;
    let status = term
        .lines()
        .find_map(|l| l.strip_prefix("status = "))
        .unwrap_or("UNKNOWN")
        .to_string();
    Ok(StoredRun {
        config,
        ledger,
        columns,
        entropy,
        status,
    })
}

impl StoredRun {
    pub fn col(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn values(&self, name: &str) -> Vec<f64> {
        match self.col(name) {
            Some(i) => self.ledger.iter().map(|r| r[i]).collect(),
            None => Vec::new(),
        }
    }
}

/// One line of the verification table.
pub struct VerifyLine {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Re-asserts every ledger flag from the stored files.
pub fn verify(out_dir: &Path) -> Result<(Vec<VerifyLine>, bool)> {
    let run = load_run(out_dir)?;
    let mut lines = Vec::new();
    let mut push = |name: &'static str, pass: bool, detail: String| {
        lines.push(VerifyLine { name, pass, detail });
    };

    if run.ledger.is_empty() {
        push(
            "ledger-nonempty",
            !run.ledger.is_empty(),
            "ledger has no rows".into(),
        );
        let ok = lines.iter().all(|l| l.pass);
        return Ok((lines, ok));
    }

    let res = run.values("residual_energy");
    let worst = res.iter().cloned().fold(0.0f64, f64::max);
    push(
        "energy-identity",
        worst <= 1e-9,
        format!("max relative residual {worst:.3e} (<= 1e-9)"),
    );

    let coupling = run.values("coupling_violation");
    let worst_c = coupling.iter().cloned().fold(0.0f64, f64::max);
    push(
        "coupling-constraint",
        worst_c <= 1e-12,
        format!("max marker violation {worst_c:.3e} (<= 1e-12)"),
    );

    let div = run.values("div_max");
    let kin = run.values("kin_fluid");
    let h = 2.0 * run.config.h;
    let mut div_ok = true;
    let mut worst_div = 0.0;
    for (d, k) in div.iter().zip(&kin) {
        let scale = (k * h).sqrt().max(1e-6);
        let rel = d / scale;
        if rel > worst_div {
            worst_div = rel;
        }
        div_ok &= rel <= 1e-10;
    }
    push(
        "discrete-divergence",
        div_ok,
        format!("max scaled divergence {worst_div:.3e} (<= 1e-10)"),
    );

    let min_theta = run.values("min_theta");
    let floor = run.config.gamma_floor;
    let worst_theta = min_theta.iter().cloned().fold(f64::INFINITY, f64::min);
    push(
        "minimal-principle",
        worst_theta >= floor - 1e-12,
        format!("min theta {worst_theta} vs floor {floor}"),
    );

    let cum = run.values("cumulative_dissipation");
    let monotone = cum.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    push(
        "dissipation-monotone",
        monotone,
        "cumulative dissipation non-decreasing".into(),
    );

    let heat1 = run.values("heat_residual1");
    let heat2 = run.values("heat_residual2");
    let worst_heat = heat1
        .iter()
        .chain(heat2.iter())
        .cloned()
        .fold(0.0f64, f64::max);
    push(
        "heat-balance",
        worst_heat <= 1e-9,
        format!("max relative heat-balance residual {worst_heat:.3e} (<= 1e-9)"),
    );

    match run.config.lambda {
        Transmission::Superconducting => {
            let jump = run.values("jump_max");
            let worst = jump.iter().cloned().fold(0.0f64, f64::max);
            push(
                "superconducting-jump",
                worst <= 1e-10,
                format!("max marker jump {worst:.3e} (<= 1e-10)"),
            );
        }
        Transmission::Insulating => {
            let t2 = run.values("thermal2");
            let spread = t2.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - t2.iter().cloned().fold(f64::INFINITY, f64::min);
            let scale = t2.first().map(|v| v.abs()).unwrap_or(1.0).max(1e-12);
            push(
                "insulated-closure",
                spread / scale <= 1e-9,
                format!("fluid-2 thermal spread {spread:.3e} relative {:.3e}", spread / scale),
            );
        }
        Transmission::Finite(_) => {}
    }

    let entropy_ok = run.entropy.iter().all(|row| row.7);
    let interface_ok = run.entropy.iter().all(|row| row.4 <= 1e-12);
    push(
        "entropy-inequality",
        entropy_ok,
        format!("{} rows, all balances above -tol", run.entropy.len()),
    );
    push(
        "entropy-interface-sign",
        interface_ok,
        "interface production nonpositive".into(),
    );

    let ok = lines.iter().all(|l| l.pass);
    Ok((lines, ok))
}
