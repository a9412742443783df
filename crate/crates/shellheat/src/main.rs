use clap::{Args, Parser, Subcommand};
use shellheat::materials::Transmission;
use shellheat::timeloop::TerminationReason;
use shellheat::{config, output, presets};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "shellheat",
    about = "Two-fluid heat-exchange simulator with an elastic shell interface",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Configuration file (sectioned key = value text)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset scenario
    #[arg(long)]
    preset: Option<String>,
    /// Velocity-scale step size
    #[arg(long)]
    tau: Option<f64>,
    /// Acceleration-window length
    #[arg(long)]
    h: Option<f64>,
    /// Regularization weight
    #[arg(long)]
    kappa: Option<f64>,
    /// Interface conductance (number or "inf")
    #[arg(long)]
    lambda: Option<String>,
    /// End time
    #[arg(long)]
    until: Option<f64>,
    /// Random seed for initial-data noise
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (1 guarantees determinism)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write its ledgers
    Run {
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-assert every ledger flag of a finished run
    Verify {
        /// Run directory to check
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Rerun a scenario over a list of regularization weights
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated kappa values
        #[arg(long)]
        kappas: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// File or preset values come first, then command-line overrides.
fn resolve_config(ov: &Overrides) -> Result<config::RunConfig, String> {
    let mut cfg = match (&ov.preset, &ov.config) {
        (Some(name), None) => {
            presets::preset(name).ok_or_else(|| format!("unknown preset `{name}`"))?
        }
        (None, Some(path)) => config::parse_config(path).map_err(|e| e.to_string())?,
        (Some(name), Some(path)) => {
            return Err(format!(
                "pass either --preset or --config, not both ({name}, {})",
                path.display()
            ));
        }
        (None, None) => config::RunConfig::default(),
    };
    if let Some(tau) = ov.tau {
        cfg.tau = tau;
    }
    if let Some(h) = ov.h {
        cfg.h = h;
    }
    if let Some(kappa) = ov.kappa {
        cfg.kappa = kappa;
    }
    if let Some(lambda) = &ov.lambda {
        cfg.lambda = if lambda == "inf" {
            Transmission::Superconducting
        } else {
            let v: f64 = lambda
                .parse()
                .map_err(|_| format!("bad --lambda value `{lambda}`"))?;
            Transmission::from_value(v).map_err(|e| e.to_string())?
        };
    }
    if let Some(until) = ov.until {
        cfg.t_end = until;
    }
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = ov.threads {
        cfg.threads = threads;
    }
    let problems = cfg.validate_collect();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(problems.join("\n"))
    }
}

const EXIT_OK: u8 = 0;
const EXIT_DEGENERACY: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CONFIG: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { overrides, out } => {
            let cfg = match resolve_config(&overrides) {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("configuration error:\n{msg}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match output::run_to_dir(&cfg, &out) {
                Ok(result) => {
                    println!(
                        "finished: {:?} at t = {} ({} windows)",
                        result.termination.reason,
                        result.termination.time,
                        result.trajectories.len()
                    );
                    match result.termination.reason {
                        TerminationReason::TimeReached => ExitCode::from(EXIT_OK),
                        TerminationReason::Degeneracy(_) => ExitCode::from(EXIT_DEGENERACY),
                        TerminationReason::SolverFailure(_) => ExitCode::from(EXIT_SOLVER),
                    }
                }
                Err(shellheat::Error::Config(msg)) => {
                    eprintln!("configuration error:\n{msg}");
                    ExitCode::from(EXIT_CONFIG)
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(EXIT_SOLVER)
                }
            }
        }
        Command::Verify { out } => match output::verify(&out) {
            Ok((lines, all)) => {
                println!("{:<28} {:<6} detail", "check", "state");
                for l in &lines {
                    println!(
                        "{:<28} {:<6} {}",
                        l.name,
                        if l.pass { "pass" } else { "FAIL" },
                        l.detail
                    );
                }
                if all {
                    println!("all checks passed");
                    ExitCode::from(EXIT_OK)
                } else {
                    ExitCode::from(EXIT_SOLVER)
                }
            }
            Err(e) => {
                eprintln!("verify failed: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Sweep {
            overrides,
            kappas,
            out,
        } => {
            let kappa_list: Result<Vec<f64>, _> =
                kappas.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let kappa_list = match kappa_list {
                Ok(l) => l,
                Err(_) => {
                    eprintln!("bad --kappas list `{kappas}`");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let base = match resolve_config(&overrides) {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("configuration error:\n{msg}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            println!(
                "{:<12} {:<14} {:<14} {:<14} status",
                "kappa", "energy-resid", "window-drift", "min-theta"
            );
            for kappa in kappa_list {
                let mut cfg = base.clone();
                cfg.kappa = kappa;
                let dir = out.join(format!("kappa_{kappa:e}"));
                match output::run_to_dir(&cfg, &dir) {
                    Ok(result) => {
                        let mut worst_res = 0.0f64;
                        let mut min_theta = f64::INFINITY;
                        for t in &result.trajectories {
                            for r in &t.records {
                                worst_res = worst_res.max(r.energy.residual_energy);
                                min_theta = min_theta.min(r.energy.min_theta);
                            }
                        }
                        let scenario = cfg.build_scenario().expect("validated");
                        let drift = result
                            .trajectories
                            .iter()
                            .filter(|t| {
                                t.outcome == shellheat::timeloop::WindowOutcome::Completed
                            })
                            .map(|t| {
                                let e_in = shellheat::timeloop::window_energy_in(
                                    &scenario.params,
                                    &scenario.surface,
                                    t,
                                );
                                let e_out =
                                    shellheat::timeloop::window_energy_out(&scenario.params, t);
                                (e_out - e_in).abs()
                            })
                            .fold(0.0f64, f64::max);
                        println!(
                            "{:<12e} {:<14.3e} {:<14.3e} {:<14.6} {:?}",
                            kappa, worst_res, drift, min_theta, result.termination.reason
                        );
                    }
                    Err(e) => {
                        println!("{kappa:<12e} run failed: {e}");
                    }
                }
            }
            ExitCode::from(EXIT_OK)
        }
    }
}
