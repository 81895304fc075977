//! Library operators against dense assembly and LU solves.

mod common;

use chemoopt::{
    evaluate_j, linearized_forward, solve_forward, solve_spd, step_u, step_v, Control, CostWeights,
    DesiredStates, Grid, MaskSpec, ModelParams, SolverOptions, StencilOperator, TimeGrid,
};
use nalgebra::{DMatrix, DVector};

use common::*;

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn grids() -> Vec<Grid> {
    vec![
        Grid::uniform(4, 4, 1.0, 1.0).unwrap(),
        Grid::uniform(5, 3, 2.0, 0.7).unwrap(),
        Grid::uniform(1, 6, 1.0, 3.0).unwrap(),
    ]
}

#[test]
fn laplacian_matches_dense_matrix() {
    for grid in grids() {
        let mut r = rng(1);
        let a = random_field(&grid, &mut r, -1.0, 1.0);
        let got = to_vec(&grid.laplacian(&a).unwrap());
        let want = dense_laplacian(&grid) * to_vec(&a);
        assert!(rel(&got, &want) < 1e-14, "{}", rel(&got, &want));
    }
}

#[test]
fn dense_laplacian_is_symmetric_negative_semidefinite() {
    let grid = Grid::uniform(4, 3, 1.0, 2.0).unwrap();
    let lap = dense_laplacian(&grid);
    assert_eq!(lap, lap.transpose());
    let eig = lap.symmetric_eigenvalues();
    assert!(eig.iter().all(|&l| l <= 1e-10));
    assert_eq!(eig.iter().filter(|l| l.abs() < 1e-10).count(), 1);
}

#[test]
fn chemotaxis_matches_dense_bilinear_form() {
    for grid in grids() {
        let mut r = rng(2);
        let u = random_field(&grid, &mut r, 0.0, 2.0);
        let v = random_field(&grid, &mut r, 0.0, 2.0);
        let got = to_vec(&grid.chemotaxis_divergence(&u, &v).unwrap());
        let via_v = dense_transport_in_v(&grid, u.values()) * to_vec(&v);
        let via_u = dense_transport_in_u(&grid, v.values()) * to_vec(&u);
        assert!(rel(&got, &via_v) < 1e-13);
        assert!(rel(&got, &via_u) < 1e-13);
    }
}

#[test]
fn chemotaxis_transpose_matches_dense_transpose() {
    for grid in grids() {
        let mut r = rng(3);
        let v = random_field(&grid, &mut r, 0.0, 2.0);
        let lambda = random_field(&grid, &mut r, -1.0, 1.0);
        let got = to_vec(&grid.chemotaxis_divergence_transpose_u(&v, &lambda).unwrap());
        let want = dense_transport_in_u(&grid, v.values()).transpose() * to_vec(&lambda);
        assert!(rel(&got, &want) < 1e-13);
    }
}

#[test]
fn chemotaxis_output_sums_to_zero() {
    let grid = Grid::uniform(5, 5, 1.0, 1.0).unwrap();
    let mut r = rng(4);
    for _ in 0..20 {
        let u = random_field(&grid, &mut r, 0.0, 1.0);
        let v = random_field(&grid, &mut r, 0.0, 1.0);
        let d = grid.chemotaxis_divergence(&u, &v).unwrap();
        let sum: f64 = d.values().iter().sum();
        // Face fluxes carry 1/h^2 = 25; the telescoping is exact up to rounding.
        assert!(sum.abs() <= 1e-13 * 25.0 * 40.0, "{sum}");
        assert!(grid.integrate(&d, None).unwrap().abs() <= 1e-13);
    }
}

#[test]
fn integrate_matches_naive_loop() {
    let grid = Grid::new(
        6,
        4,
        1.2,
        0.8,
        MaskSpec::Whole,
        MaskSpec::Rect {
            x0: 0.0,
            x1: 0.6,
            y0: 0.0,
            y1: 0.8,
        },
    )
    .unwrap();
    let mut r = rng(5);
    let a = random_field(&grid, &mut r, -1.0, 3.0);
    for mask in [None, Some(grid.observation_mask())] {
        let mut naive = 0.0;
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let k = grid.index(i, j);
                if mask.is_none_or(|m| m[k]) {
                    naive += a.values()[k] * grid.hx() * grid.hy();
                }
            }
        }
        let got = grid.integrate(&a, mask).unwrap();
        assert!((got - naive).abs() <= 1e-15 * naive.abs().max(1.0) * 4.0);
    }
}

#[test]
fn solve_spd_matches_lu() {
    let grid = Grid::uniform(4, 4, 1.0, 1.0).unwrap();
    let mut r = rng(6);
    let rhs = random_field(&grid, &mut r, -1.0, 1.0);
    let op = StencilOperator::constant_shift(&grid, 2.0);
    let x = solve_spd(&op, &rhs, 1e-12, 1000).unwrap();
    let a = DMatrix::identity(16, 16) * 2.0 - dense_laplacian(&grid);
    let want = dense_solve(&a, &to_vec(&rhs));
    assert!(rel(&to_vec(&x), &want) < 1e-10);

    let shift = random_values(&mut r, 16, 0.1, 3.0);
    let op = StencilOperator::new(&grid, shift.clone()).unwrap();
    let x = solve_spd(&op, &rhs, 1e-12, 1000).unwrap();
    let a = DMatrix::from_diagonal(&DVector::from_vec(shift)) - dense_laplacian(&grid);
    let want = dense_solve(&a, &to_vec(&rhs));
    assert!(rel(&to_vec(&x), &want) < 1e-10);
}

#[test]
fn step_v_matches_lu() {
    let grid = Grid::uniform(3, 3, 1.0, 1.0).unwrap();
    let mut r = rng(7);
    let u = random_field(&grid, &mut r, 0.0, 1.0);
    let v = random_field(&grid, &mut r, 0.0, 1.0);
    let f = random_values(&mut r, 9, -2.0, 2.0);
    let dt = 0.1;
    let got = step_v(&grid, &u, &v, &f, dt, &SolverOptions::default()).unwrap();
    let shift = DVector::from_iterator(9, f.iter().map(|x| 1.0 / dt + 1.0 - x));
    let a = DMatrix::from_diagonal(&shift) - dense_laplacian(&grid);
    let want = dense_solve(&a, &(to_vec(&v) / dt + to_vec(&u)));
    assert!(rel(&to_vec(&got), &want) < 1e-10);
}

#[test]
fn step_u_matches_lu() {
    let grid = Grid::uniform(3, 3, 1.0, 1.0).unwrap();
    let mut r = rng(8);
    let u = random_field(&grid, &mut r, 0.0, 1.0);
    let v = random_field(&grid, &mut r, 0.0, 1.0);
    let dt = 0.05;
    let got = step_u(&grid, &u, &v, dt, &SolverOptions::default()).unwrap();
    let a = DMatrix::identity(9, 9) / dt - dense_laplacian(&grid);
    let rhs = to_vec(&u) / dt + dense_transport_in_v(&grid, u.values()) * to_vec(&v);
    let want = dense_solve(&a, &rhs);
    assert!(rel(&to_vec(&got), &want) < 1e-10);
}

#[test]
fn forward_matches_dense_trajectory() {
    let grid = Grid::new(
        4,
        3,
        1.0,
        1.0,
        MaskSpec::Rect {
            x0: 0.0,
            x1: 0.5,
            y0: 0.0,
            y1: 1.0,
        },
        MaskSpec::Whole,
    )
    .unwrap();
    let mut r = rng(9);
    let u0 = random_field(&grid, &mut r, 0.0, 1.0);
    let v0 = random_field(&grid, &mut r, 0.0, 1.0);
    let params = ModelParams::new(grid.clone(), TimeGrid::new(0.5, 5).unwrap(), u0, v0).unwrap();
    let f = Control::from_values(&params, random_values(&mut r, 60, -1.0, 1.0)).unwrap();
    let traj = solve_forward(&params, &f).unwrap();
    let dense = dense_forward(
        &grid,
        params.u0.values(),
        params.v0.values(),
        f.values(),
        5,
        0.1,
    );
    for n in 0..=5 {
        assert!(rel(&to_vec(&traj.u[n]), &dense.u[n]) < 1e-10);
        assert!(rel(&to_vec(&traj.v[n]), &dense.v[n]) < 1e-10);
    }
}

#[test]
fn objective_matches_naive_quadrature() {
    let grid = Grid::new(
        4,
        4,
        1.0,
        2.0,
        MaskSpec::Rect {
            x0: 0.3,
            x1: 1.0,
            y0: 0.0,
            y1: 2.0,
        },
        MaskSpec::Rect {
            x0: 0.0,
            x1: 0.6,
            y0: 0.4,
            y1: 2.0,
        },
    )
    .unwrap();
    let mut r = rng(10);
    let u0 = random_field(&grid, &mut r, 0.0, 1.0);
    let v0 = random_field(&grid, &mut r, 0.0, 1.0);
    let n_steps = 3;
    let params =
        ModelParams::new(grid.clone(), TimeGrid::new(0.3, n_steps).unwrap(), u0, v0).unwrap();
    let f = Control::from_values(&params, random_values(&mut r, 48, -1.0, 1.0)).unwrap();
    let traj = solve_forward(&params, &f).unwrap();
    let u_d = (0..n_steps)
        .map(|_| random_field(&grid, &mut r, 0.0, 1.0))
        .collect();
    let v_d = (0..n_steps)
        .map(|_| random_field(&grid, &mut r, 0.0, 1.0))
        .collect();
    let desired = DesiredStates::new(&params, u_d, v_d).unwrap();
    let weights = CostWeights::new(0.7, 1.3, 0.4).unwrap();
    let obj = evaluate_j(&params, &traj, &f, &weights, &desired).unwrap();

    let (dt, da) = (params.time.dt(), grid.cell_area());
    let (mut tu, mut tv, mut cf) = (0.0, 0.0, 0.0);
    for n in 0..n_steps {
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let k = grid.index(i, j);
                if grid.observation_mask()[k] {
                    let eu = traj.u[n + 1].values()[k] - desired.u_d[n].values()[k];
                    let ev = traj.v[n + 1].values()[k] - desired.v_d[n].values()[k];
                    tu += dt * da * 0.5 * weights.alpha_u * eu * eu;
                    tv += dt * da * 0.5 * weights.alpha_v * ev * ev;
                }
                if grid.control_mask()[k] {
                    cf += dt * da * 0.25 * weights.n_cost * f.step(n)[k].powi(4);
                }
            }
        }
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-13 * b.abs();
    assert!(close(obj.tracking_u, tu));
    assert!(close(obj.tracking_v, tv));
    assert!(close(obj.cost_f, cf));
    assert!(close(obj.total, tu + tv + cf));
}

#[test]
fn tangent_map_at_constant_equilibrium_matches_matrix_power() {
    // With u = v = c and f = 0 the tangent step is a fixed linear map
    // (U, V) -> M (U, V); n steps are M^n.
    let grid = Grid::uniform(2, 2, 1.0, 1.0).unwrap();
    let c = 0.8;
    let dt = 0.05;
    let n_steps = 6;
    let params = ModelParams::new(
        grid.clone(),
        TimeGrid::new(dt * n_steps as f64, n_steps).unwrap(),
        grid.constant(c),
        grid.constant(c),
    )
    .unwrap();
    let f = Control::zeros(&params);
    let traj = solve_forward(&params, &f).unwrap();
    let mut r = rng(11);
    let du0 = random_field(&grid, &mut r, -1.0, 1.0);
    let dv0 = random_field(&grid, &mut r, -1.0, 1.0);
    let pert =
        linearized_forward(&params, &traj, &f, &du0, &dv0, &Control::zeros(&params)).unwrap();

    let n = 4;
    let lap = dense_laplacian(&grid);
    let id = DMatrix::<f64>::identity(n, n);
    let av_inv = (&id * (1.0 / dt + 1.0) - &lap).try_inverse().unwrap();
    let au_inv = (&id / dt - &lap).try_inverse().unwrap();
    // V' = Av^-1 (V/dt + U); U' = Au^-1 (U/dt + c lap V').
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let vu = &av_inv;
    let vv = &av_inv / dt;
    let uu = &au_inv / dt + &au_inv * (&lap * c) * vu;
    let uv = &au_inv * (&lap * c) * &vv;
    m.view_mut((0, 0), (n, n)).copy_from(&uu);
    m.view_mut((0, n), (n, n)).copy_from(&uv);
    m.view_mut((n, 0), (n, n)).copy_from(vu);
    m.view_mut((n, n), (n, n)).copy_from(&vv);
    let mut x = DVector::zeros(2 * n);
    x.rows_mut(0, n).copy_from(&to_vec(&du0));
    x.rows_mut(n, n).copy_from(&to_vec(&dv0));
    let mut power = DMatrix::identity(2 * n, 2 * n);
    for s in 1..=n_steps {
        power = &m * power;
        let want = &power * &x;
        assert!(rel(&to_vec(&pert.du[s]), &want.rows(0, n).into_owned()) < 1e-11);
        assert!(rel(&to_vec(&pert.dv[s]), &want.rows(n, n).into_owned()) < 1e-11);
    }
}
