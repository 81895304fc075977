//! Dense reference implementations shared by the integration tests.
//!
//! Everything here is assembled from the face list of the grid, not from
//! the library's matrix-free operators, so the tests compare two
//! independent constructions.

#![allow(dead_code)]

use chemoopt::{Grid, ScalarField};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Interior faces as `(p, q, 1/h^2)`.
pub fn faces(grid: &Grid) -> Vec<(usize, usize, f64)> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let cx = 1.0 / (grid.hx() * grid.hx());
    let cy = 1.0 / (grid.hy() * grid.hy());
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let p = j * nx + i;
            if i + 1 < nx {
                out.push((p, p + 1, cx));
            }
            if j + 1 < ny {
                out.push((p, p + nx, cy));
            }
        }
    }
    out
}

pub fn dense_laplacian(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n_cells();
    let mut m = DMatrix::zeros(n, n);
    for (p, q, c) in faces(grid) {
        m[(p, q)] += c;
        m[(q, p)] += c;
        m[(p, p)] -= c;
        m[(q, q)] -= c;
    }
    m
}

/// Matrix of `v -> div(u grad v)` for fixed `u`.
pub fn dense_transport_in_v(grid: &Grid, u: &[f64]) -> DMatrix<f64> {
    let n = grid.n_cells();
    let mut m = DMatrix::zeros(n, n);
    for (p, q, c) in faces(grid) {
        let k = c * 0.5 * (u[p] + u[q]);
        m[(p, q)] += k;
        m[(p, p)] -= k;
        m[(q, p)] += k;
        m[(q, q)] -= k;
    }
    m
}

/// Matrix of `u -> div(u grad v)` for fixed `v`.
pub fn dense_transport_in_u(grid: &Grid, v: &[f64]) -> DMatrix<f64> {
    let n = grid.n_cells();
    let mut m = DMatrix::zeros(n, n);
    for (p, q, c) in faces(grid) {
        let k = c * 0.5 * (v[q] - v[p]);
        m[(p, p)] += k;
        m[(p, q)] += k;
        m[(q, p)] -= k;
        m[(q, q)] -= k;
    }
    m
}

pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().lu().solve(b).expect("nonsingular")
}

pub fn to_vec(field: &ScalarField) -> DVector<f64> {
    DVector::from_column_slice(field.values())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_values(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
    grid.field(random_values(rng, grid.n_cells(), lo, hi))
        .unwrap()
}

/// Dense forward trajectory: LU solves of both step systems.
pub struct DenseTrajectory {
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
}

pub fn dense_forward(
    grid: &Grid,
    u0: &[f64],
    v0: &[f64],
    f: &[f64],
    n_steps: usize,
    dt: f64,
) -> DenseTrajectory {
    let n = grid.n_cells();
    let lap = dense_laplacian(grid);
    let a_u = DMatrix::identity(n, n) / dt - &lap;
    let mut u = vec![DVector::from_column_slice(u0)];
    let mut v = vec![DVector::from_column_slice(v0)];
    for s in 0..n_steps {
        let f_n = DVector::from_column_slice(&f[s * n..(s + 1) * n]);
        let a_v = DMatrix::from_diagonal(&f_n.map(|x| 1.0 / dt + 1.0 - x)) - &lap;
        let v_next = dense_solve(&a_v, &(&v[s] / dt + &u[s]));
        let b = dense_transport_in_v(grid, u[s].as_slice());
        let u_next = dense_solve(&a_u, &(&u[s] / dt + b * &v_next));
        u.push(u_next);
        v.push(v_next);
    }
    DenseTrajectory { u, v }
}
