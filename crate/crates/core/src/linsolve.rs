//! Matrix-free SPD solves for the implicit diffusion steps.

use crate::error::{Error, Result};
use crate::grid::{dot, Grid, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `||A x - b|| <= tol ||b||`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

/// `A = diag(shift) - laplacian` on a grid, applied without assembly.
#[derive(Debug, Clone)]
pub struct StencilOperator<'a> {
    grid: &'a Grid,
    shift: Vec<f64>,
}

impl<'a> StencilOperator<'a> {
    pub fn new(grid: &'a Grid, shift: Vec<f64>) -> Result<Self> {
        if shift.len() != grid.n_cells() {
            return Err(Error::ShapeMismatch(format!(
                "shift has {} entries, grid has {} cells",
                shift.len(),
                grid.n_cells()
            )));
        }
        Ok(StencilOperator { grid, shift })
    }

    pub fn constant_shift(grid: &'a Grid, shift: f64) -> Self {
        StencilOperator {
            grid,
            shift: vec![shift; grid.n_cells()],
        }
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.grid.laplacian_into(x, out);
        for ((o, &s), &xi) in out.iter_mut().zip(&self.shift).zip(x) {
            *o = s * xi - *o;
        }
    }

    pub fn apply(&self, x: &ScalarField) -> Result<ScalarField> {
        self.grid.check(x)?;
        let mut out = self.grid.zeros();
        self.apply_into(x.values(), out.values_mut());
        Ok(out)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = self.grid.laplacian_diagonal();
        for (di, s) in d.iter_mut().zip(&self.shift) {
            *di += s;
        }
        d
    }

    /// Jacobi-preconditioned conjugate gradients. The recursive residual is
    /// confirmed against the true residual before returning; on disagreement
    /// the iteration restarts from the current iterate.
    pub fn solve(&self, rhs: &ScalarField, opts: &SolverOptions) -> Result<ScalarField> {
        self.grid.check(rhs)?;
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "solver tolerance must be positive, got {}",
                opts.tol
            )));
        }
        let n = self.grid.n_cells();
        let b = rhs.values();
        let b_norm = dot(b, b).sqrt();
        let mut x = self.grid.zeros();
        if b_norm == 0.0 {
            return Ok(x);
        }

        let inv_diag: Vec<f64> = self
            .diagonal()
            .into_iter()
            .map(|d| {
                // A non-positive diagonal entry already rules out SPD.
                if d > 0.0 {
                    Ok(1.0 / d)
                } else {
                    Err(Error::IndefiniteOperator {
                        iteration: 0,
                        curvature: d,
                    })
                }
            })
            .collect::<Result<_>>()?;

        let target = opts.tol * b_norm;
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);

        for it in 1..=opts.max_iter {
            self.apply_into(&p, &mut ap);
            let curvature = dot(&p, &ap);
            if !(curvature > 0.0) {
                return Err(Error::IndefiniteOperator {
                    iteration: it,
                    curvature,
                });
            }
            let alpha = rz / curvature;
            for ((xi, pi), (ri, api)) in
                x.values_mut().iter_mut().zip(&p).zip(r.iter_mut().zip(&ap))
            {
                *xi += alpha * pi;
                *ri -= alpha * api;
            }

            if dot(&r, &r).sqrt() <= target {
                self.apply_into(x.values(), &mut ap);
                for ((ri, bi), axi) in r.iter_mut().zip(b).zip(&ap) {
                    *ri = bi - axi;
                }
                if dot(&r, &r).sqrt() <= target {
                    return Ok(x);
                }
                // Recursive residual drifted; restart from the true one.
                for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
                    *zi = ri * di;
                }
                p.copy_from_slice(&z);
                rz = dot(&r, &z);
                continue;
            }

            for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
                *zi = ri * di;
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }

        self.apply_into(x.values(), &mut ap);
        let residual = b
            .iter()
            .zip(&ap)
            .map(|(bi, axi)| (bi - axi) * (bi - axi))
            .sum::<f64>()
            .sqrt()
            / b_norm;
        Err(Error::NotConverged {
            iterations: opts.max_iter,
            residual,
        })
    }
}

pub fn solve_spd(
    op: &StencilOperator<'_>,
    rhs: &ScalarField,
    tol: f64,
    max_iter: usize,
) -> Result<ScalarField> {
    op.solve(rhs, &SolverOptions { tol, max_iter })
}
