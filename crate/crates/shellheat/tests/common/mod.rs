//! Shared fixtures for the integration tests: a miniature coupled instance
//! (8 shell nodes on an 8×8 grid) and helpers to drive single steps.

#![allow(dead_code)]

use shellheat::config::RunConfig;
use shellheat::geometry::{build_masks, deform_interface, SurfaceSpec};
use shellheat::grid::Grid;
use shellheat::koiter::KoiterParams;
use shellheat::materials::{FluidMaterial, Transmission, ViscosityCap};
use shellheat::timeloop::{initial_window, Scenario, WindowData};
use shellheat::varstep::ModelParams;

pub fn mini_params() -> ModelParams {
    ModelParams {
        tau: 0.01,
        h: 0.08,
        kappa: 1e-5,
        k0_fluid: 2,
        koiter: KoiterParams {
            lambda_s: 1.0,
            mu_s: 1.0,
            h_th: 0.1,
            kappa: 1e-5,
            k0: 4,
        },
        materials: [
            FluidMaterial {
                mu0: 1.0,
                beta_v: 0.5,
                gamma_v: 0.2,
                heat_capacity: 1.0,
                conductivity: 1.0,
            },
            FluidMaterial {
                mu0: 0.8,
                beta_v: 0.4,
                gamma_v: 0.2,
                heat_capacity: 1.5,
                conductivity: 0.7,
            },
        ],
        cap: ViscosityCap {
            cap: 1e6,
            gamma_floor: 0.5,
        },
        transmission: Transmission::Finite(1.0),
        tol_newton: 1e-10,
        max_newton: 50,
        tol_cg: 1e-12,
        max_cg: 20000,
    }
}

/// Scenario on an 8×8 grid with an 8-node circle interface.
pub fn mini_scenario(beta_amp: f64, w_amp: f64) -> Scenario {
    let mut cfg = RunConfig::default();
    cfg.curve = SurfaceSpec::Circle { r: 0.35 };
    cfg.collar_a = -0.1;
    cfg.collar_b = 0.1;
    cfg.n_gamma = 8;
    cfg.half_extent = 1.0;
    cfg.dx = 0.25;
    cfg.tau = 0.01;
    cfg.h = 0.08;
    cfg.t_end = 0.08;
    cfg.kappa = 1e-5;
    let mut scenario = cfg.build_scenario().expect("mini config valid");
    scenario.params = mini_params();
    // smooth synthetic delayed data
    let nodes = scenario.surface.gamma.nodes();
    scenario.eta_vel0 = nodes
        .iter()
        .map(|x| beta_amp * (2.0 * x[0]).cos())
        .collect();
    for c in 0..scenario.grid.cell_count() {
        let p = scenario.grid.center_of(c);
        scenario.u0[c] = [
            w_amp * (p[1] * 2.0).sin() * 0.5,
            -w_amp * (p[0] * 2.0).sin() * 0.5,
        ];
    }
    scenario
}

pub fn window_of(scenario: &Scenario) -> WindowData {
    initial_window(scenario).expect("window")
}

/// Rebuilds the mask of a displacement state for standalone step tests.
pub fn mask_for(scenario: &Scenario, eta: &[f64]) -> shellheat::geometry::DomainMask {
    let interface = deform_interface(&scenario.surface, eta);
    build_masks(&interface, &scenario.grid, false).expect("mask")
}

/// Full-grid constant temperature fields.
pub fn uniform_theta(grid: &Grid, t1: f64, t2: f64) -> [Vec<f64>; 2] {
    [vec![t1; grid.cell_count()], vec![t2; grid.cell_count()]]
}

/// Plain Gaussian elimination with partial pivoting, the oracle-side linear
/// solver (independent of the production factorization).
pub fn gauss_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular oracle system");
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col] / d;
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Independent solve of the constrained velocity problem: finite-difference
/// derivatives of the objective and hand-rolled elimination on the
/// stationarity system, iterated from the same feasible start.
pub fn fd_newton_oracle(prob: &shellheat::varstep::VelocityStepProblem, eta_k: &[f64]) -> Vec<f64> {
    let n = prob.dim();
    let c = prob.constraints();
    let m = c.dim();
    let dim = n + m;
    let obj = |x: &[f64]| prob.objective(x);
    let mut x = vec![0.0; n];
    x[prob.n_u..].copy_from_slice(eta_k);
    let hg = 1e-2; // fourth-order gradient stencil
    let hh = 5e-3; // second-difference Hessian
    for _ in 0..60 {
        let mut g = vec![0.0; n];
        for i in 0..n {
            let at = |t: f64| {
                let mut xs = x.clone();
                xs[i] += t;
                obj(&xs)
            };
            g[i] = (-at(2.0 * hg) + 8.0 * at(hg) - 8.0 * at(-hg) + at(-2.0 * hg)) / (12.0 * hg);
        }
        // the Hessian only steers the iteration; second differences suffice
        let mut hess = vec![vec![0.0; n]; n];
        let f0 = obj(&x);
        let mut fi = vec![0.0; n];
        for i in 0..n {
            let mut xp = x.clone();
            xp[i] += hh;
            fi[i] = obj(&xp);
        }
        for i in 0..n {
            for j in i..n {
                let mut xij = x.clone();
                xij[i] += hh;
                xij[j] += hh;
                let hij = (obj(&xij) - fi[i] - fi[j] + f0) / (hh * hh);
                hess[i][j] = hij;
                hess[j][i] = hij;
            }
        }
        let mut kkt = vec![vec![0.0; dim]; dim];
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            for j in 0..n {
                kkt[i][j] = hess[i][j];
            }
            rhs[i] = -g[i];
        }
        for (r, row) in c.rows.iter().enumerate() {
            for &(col, v) in row {
                kkt[n + r][col] = v;
                kkt[col][n + r] = v;
            }
        }
        let viol = prob.constraint_violation(&x);
        for r in 0..m {
            rhs[n + r] = -viol[r];
        }
        let delta = gauss_solve(&mut kkt, &mut rhs);
        let step_norm: f64 = delta[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..n {
            x[i] += delta[i];
        }
        if step_norm < 1e-11 {
            break;
        }
    }
    x
}

/// Independent solve of the temperature problem: the quadratic system is
/// reassembled exactly from second differences of the objective and solved
/// by elimination. Valid when the floor stays inactive.
pub fn fd_dense_qp_oracle(tp: &shellheat::varstep::TemperatureStepProblem) -> Vec<f64> {
    let n = tp.n;
    let e = |i: usize| -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    };
    let f0 = tp.objective(&vec![0.0; n]);
    let fi: Vec<f64> = (0..n).map(|i| tp.objective(&e(i))).collect();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = if i == j {
                let mut x2 = vec![0.0; n];
                x2[i] = 2.0;
                tp.objective(&x2) - 2.0 * fi[i] + f0
            } else {
                let mut x = vec![0.0; n];
                x[i] = 1.0;
                x[j] = 1.0;
                tp.objective(&x) - fi[i] - fi[j] + f0
            };
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    let mut b: Vec<f64> = (0..n).map(|i| -(fi[i] - f0 - 0.5 * a[i][i])).collect();
    gauss_solve(&mut a, &mut b)
}
