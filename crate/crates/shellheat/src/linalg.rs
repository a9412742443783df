//! Dense and iterative linear solvers shared by the step problems.

use nalgebra::{DMatrix, DVector};

/// Solves a dense symmetric indefinite system by LU with partial pivoting.
/// Returns `None` when the factorization is singular.
pub fn solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().lu().solve(b)
}

/// Sparse matrix in adjacency-list form; rows own (column, value) pairs.
#[derive(Clone, Debug, Default)]
pub struct SparseMatrix {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        SparseMatrix {
            rows: vec![Vec::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let row = &mut self.rows[r];
        for entry in row.iter_mut() {
            if entry.0 == c {
                entry.1 += v;
                return;
            }
        }
        row.push((c, v));
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|r| {
                self.rows[r]
                    .iter()
                    .find(|&&(c, _)| c == r)
                    .map(|&(_, v)| v)
                    .unwrap_or(0.0)
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] += v;
            }
        }
        m
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgReport {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
    /// False if a direction with nonpositive curvature was met, i.e. the
    /// operator failed its positive-definiteness certificate.
    pub spd_certified: bool,
}

/// Jacobi-preconditioned conjugate gradients on a masked index set.
///
/// `free` marks the unknowns to solve for; clamped entries of `x` are held
/// fixed and their couplings folded into the residual. An optional projector
/// restricts iterates to an affine constraint set (used for the
/// temperature-continuity case); it must be the identity on the free
/// complement of the constraint null space.
pub fn pcg(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    free: &[bool],
    tol_rel: f64,
    max_iter: usize,
    project: Option<&dyn Fn(&mut [f64])>,
) -> CgReport {
    let n = a.dim();
    let diag = a.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = a.matvec(x);
        (0..n)
            .map(|i| if free[i] { b[i] - ax[i] } else { 0.0 })
            .collect()
    };

    let mut r = residual(x);
    if let Some(p) = project {
        p(&mut r);
    }
    let b_norm = {
        let masked: f64 = (0..n)
            .filter(|&i| free[i])
            .map(|i| b[i] * b[i])
            .sum::<f64>();
        masked.sqrt().max(1e-300)
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm(&r) <= tol_rel * b_norm {
        return CgReport {
            iterations: 0,
            rel_residual: norm(&r) / b_norm,
            converged: true,
            spd_certified: true,
        };
    }

    let precond = |r: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| if free[i] { r[i] * inv_diag[i] } else { 0.0 })
            .collect()
    };

    let mut z = precond(&r);
    if let Some(p) = project {
        p(&mut z);
    }
    let mut p_dir = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut spd = true;
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        let mut ap = a.matvec(&p_dir);
        for i in 0..n {
            if !free[i] {
                ap[i] = 0.0;
            }
        }
        if let Some(pr) = project {
            pr(&mut ap);
        }
        let pap: f64 = p_dir.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            spd = false;
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p_dir[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= tol_rel * b_norm {
            break;
        }
        let mut z_new = precond(&r);
        if let Some(pr) = project {
            pr(&mut z_new);
        }
        let rz_new: f64 = r.iter().zip(&z_new).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p_dir[i] = z_new[i] + beta * p_dir[i];
        }
        z = z_new;
        let _ = &z;
    }

    // recompute the true residual; projected iterations can drift
    let mut r_final = residual(x);
    if let Some(p) = project {
        p(&mut r_final);
    }
    let rel = norm(&r_final) / b_norm;
    CgReport {
        iterations,
        rel_residual: rel,
        converged: rel <= 10.0 * tol_rel,
        spd_certified: spd,
    }
}
