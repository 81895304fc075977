//! Discrete adjoint of the forward scheme.
//!
//! Writing step `n` of the scheme as the residuals
//!
//! ```text
//! Rv_n = (v' - v_n)/dt - lap v' + v' - u_n - f_n v'
//! Ru_n = (u' - u_n)/dt - lap u' - D(u_n, v')
//! ```
//!
//! with `D(u, v) = div(u grad v)`, the multipliers `(lambda_n, eta_n)` of
//! `(Ru_n, Rv_n)` satisfy, for `n = N-1 .. 0` with `lambda_N = eta_N = 0`,
//!
//! ```text
//! (1/dt - lap) lambda_n         = lambda_{n+1}/dt + Du(v_{n+2})^T lambda_{n+1} + eta_{n+1}
//!                                 + a_u (u_{n+1} - ud_n) chi_d
//! (1/dt + 1 - f_n - lap) eta_n  = eta_{n+1}/dt + D(u_n, lambda_n)
//!                                 + a_v (v_{n+1} - vd_n) chi_d
//! ```
//!
//! and the gradient of `J` in the space-time L2 pairing is
//! `N f_n^3 + v_{n+1} eta_n` on the control mask. This is the exact
//! transpose of the discrete forward map; as `dt, h -> 0` it approaches the
//! backward system
//!
//! ```text
//! dt lambda + lap lambda - grad lambda . grad v + eta = -a_u (u - u_d) chi_d
//! dt eta + lap eta + div(u grad lambda) - eta + f eta = -a_v (v - v_d) chi_d
//! ```

use crate::error::{Error, Result};
use crate::forward::{Control, ModelParams, Trajectory};
use crate::functional::{check_trajectory, CostWeights, DesiredStates};
use crate::grid::{Grid, ScalarField};
use crate::linsolve::StencilOperator;

#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub lambda: Vec<ScalarField>,
    pub eta: Vec<ScalarField>,
}

impl AdjointTrajectory {
    /// Multipliers on the reversed clock `s = T - t`, so index 0 holds the
    /// (zero) terminal data.
    pub fn reversed(&self) -> AdjointTrajectory {
        AdjointTrajectory {
            lambda: self.lambda.iter().rev().cloned().collect(),
            eta: self.eta.iter().rev().cloned().collect(),
        }
    }
}

/// Gradient of the discrete objective with respect to the control, laid out
/// like [`Control`] and zero off the control mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGradient {
    pub values: Vec<f64>,
}

impl ControlGradient {
    pub fn step(&self, n: usize, n_cells: usize) -> &[f64] {
        &self.values[n * n_cells..(n + 1) * n_cells]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Tangent trajectory `(U, V)` produced by [`linearized_forward`].
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub du: Vec<ScalarField>,
    pub dv: Vec<ScalarField>,
}

fn add_scaled(dst: &mut ScalarField, s: f64, src: &ScalarField) {
    for (d, x) in dst.values_mut().iter_mut().zip(src.values()) {
        *d += s * x;
    }
}

fn add_masked_residual(
    dst: &mut ScalarField,
    alpha: f64,
    state: &ScalarField,
    target: &ScalarField,
    mask: &[bool],
) {
    if alpha == 0.0 {
        return;
    }
    for (k, d) in dst.values_mut().iter_mut().enumerate() {
        if mask[k] {
            *d += alpha * (state.values()[k] - target.values()[k]);
        }
    }
}

fn v_step_operator<'g>(grid: &'g Grid, f_n: &[f64], dt: f64) -> Result<StencilOperator<'g>> {
    let base = 1.0 / dt + 1.0;
    let shift: Vec<f64> = f_n.iter().map(|f| base - f).collect();
    if let Some((cell, &min_diagonal)) = shift.iter().enumerate().find(|(_, &s)| !(s > 0.0)) {
        return Err(Error::DtTooLarge { cell, min_diagonal });
    }
    StencilOperator::new(grid, shift)
}

pub fn solve_adjoint(
    params: &ModelParams,
    traj: &Trajectory,
    control: &Control,
    weights: &CostWeights,
    desired: &DesiredStates,
) -> Result<AdjointTrajectory> {
    check_trajectory(params, traj)?;
    control.check_params(params)?;
    desired.check(params)?;
    let grid = &params.grid;
    let dt = params.time.dt();
    let n_steps = params.time.n_steps();
    let mask_d = grid.observation_mask();
    let u_op = StencilOperator::constant_shift(grid, 1.0 / dt);

    let mut lambda = vec![grid.zeros(); n_steps + 1];
    let mut eta = vec![grid.zeros(); n_steps + 1];
    for n in (0..n_steps).rev() {
        let mut rhs = lambda[n + 1].scaled(1.0 / dt);
        add_scaled(&mut rhs, 1.0, &eta[n + 1]);
        if n + 1 < n_steps {
            let transport =
                grid.chemotaxis_divergence_transpose_u(&traj.v[n + 2], &lambda[n + 1])?;
            add_scaled(&mut rhs, 1.0, &transport);
        }
        add_masked_residual(
            &mut rhs,
            weights.alpha_u,
            &traj.u[n + 1],
            &desired.u_d[n],
            mask_d,
        );
        lambda[n] = u_op
            .solve(&rhs, &params.solver)
            .map_err(|e| Error::at_step(n, e))?;

        let mut rhs = eta[n + 1].scaled(1.0 / dt);
        let coupling = grid.chemotaxis_divergence(&traj.u[n], &lambda[n])?;
        add_scaled(&mut rhs, 1.0, &coupling);
        add_masked_residual(
            &mut rhs,
            weights.alpha_v,
            &traj.v[n + 1],
            &desired.v_d[n],
            mask_d,
        );
        let v_op = v_step_operator(grid, control.step(n), dt).map_err(|e| Error::at_step(n, e))?;
        eta[n] = v_op
            .solve(&rhs, &params.solver)
            .map_err(|e| Error::at_step(n, e))?;

        if !lambda[n].is_finite() || !eta[n].is_finite() {
            return Err(Error::NonFinite {
                what: "adjoint",
                step: n,
            });
        }
    }
    Ok(AdjointTrajectory { lambda, eta })
}

/// `N f_n^3 + v_{n+1} eta_n` on the control mask, zero elsewhere.
pub fn reduced_gradient(
    params: &ModelParams,
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    control: &Control,
    weights: &CostWeights,
) -> Result<ControlGradient> {
    check_trajectory(params, traj)?;
    control.check_params(params)?;
    let n_steps = params.time.n_steps();
    if adj.lambda.len() != n_steps + 1 || adj.eta.len() != n_steps + 1 {
        return Err(Error::ShapeMismatch(format!(
            "adjoint has {} time levels, expected {}",
            adj.eta.len(),
            n_steps + 1
        )));
    }
    let n_cells = params.grid.n_cells();
    let mask = control.mask();
    let mut values = vec![0.0; n_steps * n_cells];
    for (n, chunk) in values.chunks_mut(n_cells).enumerate() {
        let f = control.step(n);
        let v = traj.v[n + 1].values();
        let eta = adj.eta[n].values();
        for (k, g) in chunk.iter_mut().enumerate() {
            if mask[k] {
                *g = weights.n_cost * f[k] * f[k] * f[k] + v[k] * eta[k];
            }
        }
    }
    Ok(ControlGradient { values })
}

/// Gradients of `J` with respect to the initial data in the L2(Omega)
/// pairing. Only used for duality checks; initial data are not optimized.
pub fn initial_data_gradient(
    params: &ModelParams,
    traj: &Trajectory,
    adj: &AdjointTrajectory,
) -> Result<(ScalarField, ScalarField)> {
    check_trajectory(params, traj)?;
    let grid = &params.grid;
    let dt = params.time.dt();
    let mut g_u = adj.lambda[0].clone();
    let transport = grid.chemotaxis_divergence_transpose_u(&traj.v[1], &adj.lambda[0])?;
    add_scaled(&mut g_u, dt, &transport);
    add_scaled(&mut g_u, dt, &adj.eta[0]);
    Ok((g_u, adj.eta[0].clone()))
}

/// Propagates perturbations of the initial data and the control through the
/// differentiated step maps around `traj`:
///
/// ```text
/// (1/dt + 1 - f_n - lap) V' = V_n/dt + U_n + F_n v'
/// (1/dt - lap) U'           = U_n/dt + D(U_n, v') + D(u_n, V')
/// ```
pub fn linearized_forward(
    params: &ModelParams,
    traj: &Trajectory,
    control: &Control,
    du0: &ScalarField,
    dv0: &ScalarField,
    df: &Control,
) -> Result<Perturbation> {
    check_trajectory(params, traj)?;
    control.check_params(params)?;
    df.check_params(params)?;
    let grid = &params.grid;
    grid.check(du0)?;
    grid.check(dv0)?;
    let dt = params.time.dt();
    let n_steps = params.time.n_steps();
    let u_op = StencilOperator::constant_shift(grid, 1.0 / dt);

    let mut du = Vec::with_capacity(n_steps + 1);
    let mut dv = Vec::with_capacity(n_steps + 1);
    du.push(du0.clone());
    dv.push(dv0.clone());
    for n in 0..n_steps {
        let mut rhs = dv[n].scaled(1.0 / dt);
        add_scaled(&mut rhs, 1.0, &du[n]);
        for ((r, f), v) in rhs
            .values_mut()
            .iter_mut()
            .zip(df.step(n))
            .zip(traj.v[n + 1].values())
        {
            *r += f * v;
        }
        let v_op = v_step_operator(grid, control.step(n), dt).map_err(|e| Error::at_step(n, e))?;
        let dv_next = v_op
            .solve(&rhs, &params.solver)
            .map_err(|e| Error::at_step(n, e))?;

        let mut rhs = du[n].scaled(1.0 / dt);
        add_scaled(
            &mut rhs,
            1.0,
            &grid.chemotaxis_divergence(&du[n], &traj.v[n + 1])?,
        );
        add_scaled(
            &mut rhs,
            1.0,
            &grid.chemotaxis_divergence(&traj.u[n], &dv_next)?,
        );
        let du_next = u_op
            .solve(&rhs, &params.solver)
            .map_err(|e| Error::at_step(n, e))?;
        du.push(du_next);
        dv.push(dv_next);
    }
    Ok(Perturbation { du, dv })
}

/// Directional derivative of `J` along a tangent trajectory and control
/// perturbation: the forward side of the duality identity.
pub fn linearized_objective(
    params: &ModelParams,
    traj: &Trajectory,
    pert: &Perturbation,
    control: &Control,
    df: &Control,
    weights: &CostWeights,
    desired: &DesiredStates,
) -> Result<f64> {
    check_trajectory(params, traj)?;
    desired.check(params)?;
    let mask_d = params.grid.observation_mask();
    let mut acc = 0.0;
    for n in 0..params.time.n_steps() {
        for k in (0..params.grid.n_cells()).filter(|&k| mask_d[k]) {
            acc += weights.alpha_u
                * (traj.u[n + 1].values()[k] - desired.u_d[n].values()[k])
                * pert.du[n + 1].values()[k];
            acc += weights.alpha_v
                * (traj.v[n + 1].values()[k] - desired.v_d[n].values()[k])
                * pert.dv[n + 1].values()[k];
        }
    }
    let cubes: Vec<f64> = control
        .values()
        .iter()
        .map(|f| weights.n_cost * f * f * f)
        .collect();
    Ok(params.cell_weight() * acc + df.dot(&cubes))
}
