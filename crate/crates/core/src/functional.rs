//! Tracking-plus-control-cost objective
//!
//! ```text
//! J = a_u/2 int_0^T int_{Od} |u - u_d|^2 + a_v/2 int_0^T int_{Od} |v - v_d|^2
//!   + N/4 int_0^T int_{Oc} |f|^4
//! ```
//!
//! Time integrals use the right-endpoint rule: step `n` pairs the state at
//! `t_{n+1}` with the desired state `n` and the control value on
//! `(t_n, t_{n+1}]`.

use crate::error::{Error, Result};
use crate::forward::{Control, ModelParams, Trajectory};
use crate::grid::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub alpha_u: f64,
    pub alpha_v: f64,
    /// Control cost `N`.
    pub n_cost: f64,
}

impl CostWeights {
    pub fn new(alpha_u: f64, alpha_v: f64, n_cost: f64) -> Result<CostWeights> {
        for (name, w) in [
            ("alpha_u", alpha_u),
            ("alpha_v", alpha_v),
            ("n_cost", n_cost),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be nonnegative and finite, got {w}"
                )));
            }
        }
        if alpha_u == 0.0 && alpha_v == 0.0 && n_cost == 0.0 {
            return Err(Error::InvalidArgument(
                "all cost weights are zero; the objective is degenerate".into(),
            ));
        }
        Ok(CostWeights {
            alpha_u,
            alpha_v,
            n_cost,
        })
    }
}

/// Desired states, one field per time step (step `n` is compared with the
/// state at `t_{n+1}`). Values outside the observation mask are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredStates {
    pub u_d: Vec<ScalarField>,
    pub v_d: Vec<ScalarField>,
}

impl DesiredStates {
    pub fn new(
        params: &ModelParams,
        u_d: Vec<ScalarField>,
        v_d: Vec<ScalarField>,
    ) -> Result<DesiredStates> {
        let n = params.time.n_steps();
        if u_d.len() != n || v_d.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "desired states have {} / {} steps, expected {n}",
                u_d.len(),
                v_d.len()
            )));
        }
        for f in u_d.iter().chain(&v_d) {
            params.grid.check(f)?;
            if !f.is_finite() {
                return Err(Error::InvalidArgument(
                    "desired states have non-finite entries".into(),
                ));
            }
        }
        Ok(DesiredStates { u_d, v_d })
    }

    /// Replicates a single pair of fields over every step.
    pub fn constant_in_time(
        params: &ModelParams,
        u_d: ScalarField,
        v_d: ScalarField,
    ) -> Result<DesiredStates> {
        let n = params.time.n_steps();
        DesiredStates::new(params, vec![u_d; n], vec![v_d; n])
    }

    /// Uses a trajectory's states at `t_1 .. t_N` as targets.
    pub fn from_trajectory(params: &ModelParams, traj: &Trajectory) -> Result<DesiredStates> {
        DesiredStates::new(params, traj.u[1..].to_vec(), traj.v[1..].to_vec())
    }

    pub(crate) fn check(&self, params: &ModelParams) -> Result<()> {
        let n = params.time.n_steps();
        if self.u_d.len() != n || self.v_d.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "desired states have {} / {} steps, expected {n}",
                self.u_d.len(),
                self.v_d.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub total: f64,
    pub tracking_u: f64,
    pub tracking_v: f64,
    pub cost_f: f64,
}

pub(crate) fn check_trajectory(params: &ModelParams, traj: &Trajectory) -> Result<()> {
    let n = params.time.n_steps();
    if traj.u.len() != n + 1 || traj.v.len() != n + 1 {
        return Err(Error::ShapeMismatch(format!(
            "trajectory has {} time levels, expected {}",
            traj.u.len(),
            n + 1
        )));
    }
    for f in traj.u.iter().chain(&traj.v) {
        params.grid.check(f)?;
    }
    Ok(())
}

/// Neumaier-compensated sum. The objective is a sum of many small
/// nonnegative terms and is compared across line-search trials, so its
/// rounding error should stay at the level of one ulp of the total.
pub(crate) fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn masked_sq_dist<'a>(
    a: &'a [f64],
    b: &'a [f64],
    mask: &'a [bool],
) -> impl Iterator<Item = f64> + 'a {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| (x - y) * (x - y))
}

pub fn evaluate_j(
    params: &ModelParams,
    traj: &Trajectory,
    control: &Control,
    weights: &CostWeights,
    desired: &DesiredStates,
) -> Result<Objective> {
    check_trajectory(params, traj)?;
    control.check_params(params)?;
    desired.check(params)?;
    let w = params.cell_weight();
    let mask_d = params.grid.observation_mask();
    let steps = 0..params.time.n_steps();

    let su = compensated_sum(
        steps
            .clone()
            .flat_map(|n| masked_sq_dist(traj.u[n + 1].values(), desired.u_d[n].values(), mask_d)),
    );
    let sv = compensated_sum(
        steps.flat_map(|n| masked_sq_dist(traj.v[n + 1].values(), desired.v_d[n].values(), mask_d)),
    );
    // Off-mask control entries are zero, so the whole array can be summed.
    let sf = compensated_sum(control.values().iter().map(|f| (f * f) * (f * f)));

    let tracking_u = 0.5 * weights.alpha_u * w * su;
    let tracking_v = 0.5 * weights.alpha_v * w * sv;
    let cost_f = 0.25 * weights.n_cost * w * sf;
    Ok(Objective {
        total: tracking_u + tracking_v + cost_f,
        tracking_u,
        tracking_v,
        cost_f,
    })
}

/// `J(b) - J(a)` from factored differences, `x^2 - y^2 = (x - y)(x + y)`,
/// so that changes far below one ulp of `J` keep their sign.
pub fn objective_change(
    params: &ModelParams,
    (traj_a, f_a): (&Trajectory, &Control),
    (traj_b, f_b): (&Trajectory, &Control),
    weights: &CostWeights,
    desired: &DesiredStates,
) -> Result<f64> {
    check_trajectory(params, traj_a)?;
    check_trajectory(params, traj_b)?;
    f_a.check_params(params)?;
    f_b.check_params(params)?;
    desired.check(params)?;
    let mask_d = params.grid.observation_mask();
    let diff = |a: &[f64], b: &[f64], d: &[f64]| -> f64 {
        compensated_sum(
            a.iter()
                .zip(b)
                .zip(d)
                .zip(mask_d)
                .filter(|(_, &m)| m)
                .map(|(((x, y), z), _)| (y - x) * ((y - z) + (x - z))),
        )
    };
    let mut du = 0.0;
    let mut dv = 0.0;
    for n in 0..params.time.n_steps() {
        du += diff(
            traj_a.u[n + 1].values(),
            traj_b.u[n + 1].values(),
            desired.u_d[n].values(),
        );
        dv += diff(
            traj_a.v[n + 1].values(),
            traj_b.v[n + 1].values(),
            desired.v_d[n].values(),
        );
    }
    let df = compensated_sum(
        f_a.values()
            .iter()
            .zip(f_b.values())
            .map(|(x, y)| (y - x) * (y + x) * (y * y + x * x)),
    );
    let w = params.cell_weight();
    Ok(w * (0.5 * weights.alpha_u * du + 0.5 * weights.alpha_v * dv + 0.25 * weights.n_cost * df))
}
