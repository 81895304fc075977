//! Runtime invariant suite behind the `verify` subcommand.

use std::fmt;

use crate::adjoint::{initial_data_gradient, linearized_forward, linearized_objective};
use crate::config::ProblemSpec;
use crate::error::Result;
use crate::forward::{solve_forward, Control};
use crate::grid::ScalarField;
use crate::optimizer::{
    control_law, evaluate_with_gradient, gradient_check, optimize, random_direction,
    relative_error, sample_variational_inequality, AdmissibleSet, OptimizeOptions, Termination,
};

pub const MASS_TOL: f64 = 1e-11;
pub const POSITIVITY_FLOOR: f64 = -1e-12;
pub const DUALITY_TOL: f64 = 1e-9;
pub const GRADIENT_TOL: f64 = 1e-5;
pub const VI_FLOOR: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skip => "SKIP",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, ok: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        status: if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        detail,
    }
}

fn seeded_field(spec: &ProblemSpec, seed: u64) -> ScalarField {
    let d = random_direction(&spec.params, seed);
    spec.params
        .grid
        .field(d.step(0).to_vec())
        .expect("grid-sized slice")
}

pub fn run_invariant_suite(spec: &ProblemSpec) -> Result<Vec<CheckResult>> {
    let params = &spec.params;
    let grid = &params.grid;
    let dt = params.time.dt();
    let mut results = Vec::new();

    let traj = solve_forward(params, &spec.f_init)?;
    let m0 = traj.diagnostics.mass[0];
    let drift = traj
        .diagnostics
        .mass
        .iter()
        .map(|m| (m - m0).abs())
        .fold(0.0, f64::max);
    let rel = if m0.abs() > 0.0 {
        drift / m0.abs()
    } else {
        drift
    };
    results.push(check(
        "mass_conservation",
        rel <= MASS_TOL,
        format!("max relative drift {rel:.3e} (limit {MASS_TOL:e})"),
    ));

    let min_state = traj.min_u().min(traj.min_v());
    if traj.positivity_certified(dt) {
        results.push(check(
            "positivity",
            min_state >= POSITIVITY_FLOOR,
            format!("min(u, v) = {min_state:.3e} (floor {POSITIVITY_FLOOR:e})"),
        ));
    } else {
        let uncertified = traj
            .diagnostics
            .dt_limit
            .iter()
            .filter(|&&lim| dt > lim)
            .count();
        results.push(CheckResult {
            name: "positivity",
            status: CheckStatus::Skip,
            detail: format!(
                "dt = {dt:e} exceeds the certified bound on {uncertified} steps; min(u, v) = {min_state:.3e}"
            ),
        });
    }

    let eval = evaluate_with_gradient(params, &spec.f_init, &spec.weights, &spec.desired)?;
    let du0 = seeded_field(spec, spec.seed ^ 0x5eed_0001);
    let dv0 = seeded_field(spec, spec.seed ^ 0x5eed_0002);
    let df = random_direction(params, spec.seed ^ 0x5eed_0003);
    let pert = linearized_forward(params, &eval.trajectory, &spec.f_init, &du0, &dv0, &df)?;
    let forward_side = linearized_objective(
        params,
        &eval.trajectory,
        &pert,
        &spec.f_init,
        &df,
        &spec.weights,
        &spec.desired,
    )?;
    let (g_u0, g_v0) = initial_data_gradient(params, &eval.trajectory, &eval.adjoint)?;
    let adjoint_side =
        df.dot(&eval.gradient.values) + grid.inner(&du0, &g_u0) + grid.inner(&dv0, &g_v0);
    let err = relative_error(forward_side, adjoint_side);
    results.push(check(
        "adjoint_duality",
        err <= DUALITY_TOL,
        format!(
            "tangent {forward_side:.12e} vs adjoint {adjoint_side:.12e}, relative error {err:.3e}"
        ),
    ));

    let n_dir = spec.gradcheck_directions.min(3);
    let gc = gradient_check(
        params,
        &spec.f_init,
        &spec.weights,
        &spec.desired,
        n_dir,
        &spec.gradcheck_eps,
        spec.seed,
    )?;
    let worst = gc.worst_error();
    results.push(check(
        "gradient_finite_difference",
        worst <= GRADIENT_TOL,
        format!("worst best-eps relative error {worst:.3e} over {n_dir} directions"),
    ));

    let opts = OptimizeOptions {
        record_iterates: true,
        ..spec.optimizer
    };
    let report = optimize(
        params,
        &spec.weights,
        &spec.desired,
        &spec.admissible,
        &spec.f_init,
        &opts,
    )?;
    let monotone = report.j_history.windows(2).all(|w| w[1] <= w[0]);
    let feasible = report
        .iterates
        .iter()
        .all(|c: &Control| spec.admissible.is_feasible(c));
    results.push(check(
        "descent_and_feasibility",
        monotone && feasible,
        format!(
            "{} iterates, monotone J: {monotone}, all feasible: {feasible}",
            report.iterates.len()
        ),
    ));

    if report.termination != Termination::Converged {
        results.push(check(
            "stationarity",
            false,
            format!(
                "optimizer stopped with {:?} after {} iterations (residual {:.3e})",
                report.termination,
                report.iterations,
                report.residual_history.last().copied().unwrap_or(f64::NAN)
            ),
        ));
        return Ok(results);
    }

    let at_opt = evaluate_with_gradient(params, &report.control, &spec.weights, &spec.desired)?;
    match spec.admissible {
        AdmissibleSet::Free => {
            let w = report.control.weight();
            let grad_norm = (w * at_opt.gradient.values.iter().map(|g| g * g).sum::<f64>()).sqrt();
            let cubes = (w * report
                .control
                .values()
                .iter()
                .map(|f| (spec.weights.n_cost * f * f * f).powi(2))
                .sum::<f64>())
            .sqrt();
            let law = control_law(params, &at_opt.trajectory, &at_opt.adjoint, &spec.weights)?;
            let law_gap = law
                .values()
                .iter()
                .zip(report.control.values())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            let limit = 10.0 * spec.optimizer.tol * cubes.max(1.0);
            results.push(check(
                "stationarity",
                grad_norm <= limit,
                format!(
                    "||N f^3 + v eta|| = {grad_norm:.3e} (limit {limit:.3e}); max |f - cbrt(-v eta / N)| = {law_gap:.3e}"
                ),
            ));
        }
        AdmissibleSet::Box { .. } => {
            let w = report.control.weight();
            let g_norm = (w * at_opt.gradient.values.iter().map(|g| g * g).sum::<f64>()).sqrt();
            let worst = sample_variational_inequality(
                &report.control,
                &at_opt.gradient,
                &spec.admissible,
                1000,
                spec.seed,
            );
            // Per unit distance; an interior optimum has g near zero, where
            // the normalized pairing is only noise.
            let pairing = worst * g_norm;
            let floor = (VI_FLOOR * g_norm).min(-10.0 * spec.optimizer.tol);
            results.push(check(
                "stationarity",
                pairing >= floor,
                format!(
                    "min <g, f - f*> / |f - f*| over 1000 samples = {pairing:.3e} (floor {floor:.3e}, |g| = {g_norm:.3e})"
                ),
            ));
        }
    }
    Ok(results)
}
