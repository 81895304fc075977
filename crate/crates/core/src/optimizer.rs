//! Projected gradient descent over a convex admissible set.
//!
//! First-order optimality at `f*` is the variational inequality
//! `<g(f*), f - f*> >= 0` for all admissible `f`, with `g = N f^3 + v eta`.
//! For a closed convex set this is equivalent to `f* = P(f* - s g(f*))` for
//! any `s > 0`, so the projected-gradient residual
//! `||f - P(f - s g)|| / s` vanishes exactly at points satisfying it and
//! serves as the stationarity measure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adjoint::{reduced_gradient, solve_adjoint, AdjointTrajectory, ControlGradient};
use crate::error::{Error, Result};
use crate::forward::{solve_forward, Control, ModelParams, Trajectory};
use crate::functional::{evaluate_j, objective_change, CostWeights, DesiredStates, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdmissibleSet {
    Free,
    Box { f_min: f64, f_max: f64 },
}

impl AdmissibleSet {
    pub fn validate(&self) -> Result<()> {
        if let AdmissibleSet::Box { f_min, f_max } = *self {
            if !(f_min <= f_max) || !f_min.is_finite() || !f_max.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "box bounds must satisfy f_min <= f_max (got {f_min}, {f_max})"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, f: f64) -> bool {
        match *self {
            AdmissibleSet::Free => f.is_finite(),
            AdmissibleSet::Box { f_min, f_max } => f >= f_min && f <= f_max,
        }
    }

    /// Feasibility of a whole control, support included. Off-mask entries
    /// are zero by construction and are not bound-checked.
    pub fn is_feasible(&self, control: &Control) -> bool {
        let n_cells = control.n_cells();
        control.support_in_mask()
            && control.values().chunks(n_cells).all(|chunk| {
                chunk
                    .iter()
                    .zip(control.mask())
                    .all(|(&f, &m)| !m || self.contains(f))
            })
    }
}

/// Euclidean projection: cell-wise clamping on the mask for a box, the
/// identity for the free set.
pub fn project(control: &Control, set: &AdmissibleSet) -> Control {
    match *set {
        AdmissibleSet::Free => control.clone(),
        AdmissibleSet::Box { f_min, f_max } => control.map_masked(|f| f.clamp(f_min, f_max)),
    }
}

fn l2_norm(weight: f64, values: impl Iterator<Item = f64>) -> f64 {
    (weight * values.map(|x| x * x).sum::<f64>()).sqrt()
}

/// `||f - P(f - s g)|| / s` in the space-time L2 norm; `||g||` for the free set.
pub fn stationarity_residual(
    control: &Control,
    grad: &ControlGradient,
    set: &AdmissibleSet,
    probe_step: f64,
) -> f64 {
    let w = control.weight();
    match *set {
        AdmissibleSet::Free => l2_norm(w, grad.values.iter().copied()),
        AdmissibleSet::Box { f_min, f_max } => {
            let n_cells = control.n_cells();
            let mask = control.mask();
            let diffs =
                control
                    .values()
                    .iter()
                    .zip(&grad.values)
                    .enumerate()
                    .map(|(idx, (&f, &g))| {
                        if mask[idx % n_cells] {
                            f - (f - probe_step * g).clamp(f_min, f_max)
                        } else {
                            0.0
                        }
                    });
            l2_norm(w, diffs) / probe_step
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    /// Target for the projected-gradient residual.
    pub tol: f64,
    pub armijo_c: f64,
    pub backtrack_ratio: f64,
    pub step_init: f64,
    /// Step used to evaluate the stationarity residual.
    pub probe_step: f64,
    /// Seed each line search with the Barzilai-Borwein step.
    pub barzilai_borwein: bool,
    pub min_step: f64,
    pub record_iterates: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            max_iters: 200,
            tol: 1e-6,
            armijo_c: 1e-4,
            backtrack_ratio: 0.5,
            step_init: 1.0,
            probe_step: 1.0,
            barzilai_borwein: true,
            min_step: 1e-14,
            record_iterates: false,
        }
    }
}

impl OptimizeOptions {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("armijo_c", self.armijo_c),
            ("step_init", self.step_init),
            ("probe_step", self.probe_step),
            ("min_step", self.min_step),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {x}"
                )));
            }
        }
        if !(self.armijo_c < 1.0) {
            return Err(Error::InvalidArgument("armijo_c must be below 1".into()));
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return Err(Error::InvalidArgument(
                "backtrack_ratio must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub control: Control,
    pub iterations: usize,
    /// One entry per accepted iterate, the initial one included.
    pub j_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    /// Step that produced each iterate (0 for the initial one).
    pub step_sizes: Vec<f64>,
    pub termination: Termination,
    pub objective: Objective,
    pub gradient: ControlGradient,
    pub options: OptimizeOptions,
    /// Every accepted iterate, when `options.record_iterates` is set.
    pub iterates: Vec<Control>,
}

/// State, multipliers, and gradient at one control.
pub struct Evaluation {
    pub trajectory: Trajectory,
    pub adjoint: AdjointTrajectory,
    pub objective: Objective,
    pub gradient: ControlGradient,
}

pub fn evaluate_with_gradient(
    params: &ModelParams,
    control: &Control,
    weights: &CostWeights,
    desired: &DesiredStates,
) -> Result<Evaluation> {
    let trajectory = solve_forward(params, control)?;
    complete_evaluation(params, trajectory, control, weights, desired)
}

fn complete_evaluation(
    params: &ModelParams,
    trajectory: Trajectory,
    control: &Control,
    weights: &CostWeights,
    desired: &DesiredStates,
) -> Result<Evaluation> {
    let objective = evaluate_j(params, &trajectory, control, weights, desired)?;
    let adjoint = solve_adjoint(params, &trajectory, control, weights, desired)?;
    let gradient = reduced_gradient(params, &trajectory, &adjoint, control, weights)?;
    Ok(Evaluation {
        trajectory,
        adjoint,
        objective,
        gradient,
    })
}

fn objective_at(
    params: &ModelParams,
    control: &Control,
    weights: &CostWeights,
    desired: &DesiredStates,
) -> Result<Objective> {
    let traj = solve_forward(params, control)?;
    evaluate_j(params, &traj, control, weights, desired)
}

/// Configuration check: an unbounded admissible set needs `N > 0`.
pub fn check_configuration(weights: &CostWeights, set: &AdmissibleSet) -> Result<()> {
    set.validate()?;
    if matches!(set, AdmissibleSet::Free) && weights.n_cost <= 0.0 {
        return Err(Error::InvalidArgument(
            "an unbounded admissible set requires a positive control cost n_cost".into(),
        ));
    }
    Ok(())
}

pub fn optimize(
    params: &ModelParams,
    weights: &CostWeights,
    desired: &DesiredStates,
    set: &AdmissibleSet,
    f_init: &Control,
    opts: &OptimizeOptions,
) -> Result<OptimizeReport> {
    check_configuration(weights, set)?;
    opts.validate()?;
    f_init.check_params(params)?;

    let mut f = project(f_init, set);
    let mut eval = evaluate_with_gradient(params, &f, weights, desired)?;
    let mut j_history = vec![eval.objective.total];
    let mut residual_history = Vec::new();
    let mut step_sizes = vec![0.0];
    let mut iterates = Vec::new();
    if opts.record_iterates {
        iterates.push(f.clone());
    }
    let mut previous: Option<(Control, ControlGradient)> = None;
    let mut iterations = 0;

    let termination = loop {
        let residual = stationarity_residual(&f, &eval.gradient, set, opts.probe_step);
        residual_history.push(residual);
        if residual <= opts.tol {
            break Termination::Converged;
        }
        if iterations >= opts.max_iters {
            break Termination::MaxIters;
        }

        let mut step = opts.step_init;
        if opts.barzilai_borwein {
            if let Some((f_prev, g_prev)) = &previous {
                let df: Vec<f64> = f
                    .values()
                    .iter()
                    .zip(f_prev.values())
                    .map(|(a, b)| a - b)
                    .collect();
                let dg: Vec<f64> = eval
                    .gradient
                    .values
                    .iter()
                    .zip(&g_prev.values)
                    .map(|(a, b)| a - b)
                    .collect();
                let ss: f64 = df.iter().map(|a| a * a).sum();
                let sy: f64 = df.iter().zip(&dg).map(|(a, b)| a * b).sum();
                if sy > 0.0 && ss > 0.0 {
                    step = (ss / sy).clamp(1e-10, 1e10);
                }
            }
        }

        let accepted = loop {
            let trial_values: Vec<f64> = f
                .values()
                .iter()
                .zip(&eval.gradient.values)
                .map(|(fi, gi)| fi - step * gi)
                .collect();
            let trial = project(&f.with_values(trial_values)?, set);
            let moved: f64 = f.weight()
                * trial
                    .values()
                    .iter()
                    .zip(f.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            let required = opts.armijo_c * moved / step;
            match solve_forward(params, &trial) {
                Ok(traj) => {
                    let obj = evaluate_j(params, &traj, &trial, weights, desired)?;
                    // The Armijo test uses the cancellation-free difference;
                    // the totals must also not increase so the recorded
                    // history stays monotone.
                    let change = objective_change(
                        params,
                        (&eval.trajectory, &f),
                        (&traj, &trial),
                        weights,
                        desired,
                    )?;
                    if obj.total.is_finite()
                        && change <= -required
                        && obj.total <= eval.objective.total
                    {
                        break Some((trial, traj, step));
                    }
                }
                // The trial left the region where the scheme is well posed
                // (e.g. the v operator lost definiteness); shrink the step.
                Err(Error::StepFailed { .. }) | Err(Error::NonFinite { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= opts.backtrack_ratio;
            if step < opts.min_step {
                break None;
            }
        };

        let Some((f_next, traj_next, step)) = accepted else {
            break Termination::LineSearchFailed;
        };
        let next = complete_evaluation(params, traj_next, &f_next, weights, desired)?;
        previous = Some((std::mem::replace(&mut f, f_next), eval.gradient));
        eval = next;
        iterations += 1;
        j_history.push(eval.objective.total);
        step_sizes.push(step);
        if opts.record_iterates {
            iterates.push(f.clone());
        }
    };

    Ok(OptimizeReport {
        control: f,
        iterations,
        j_history,
        residual_history,
        step_sizes,
        termination,
        objective: eval.objective,
        gradient: eval.gradient,
        options: *opts,
        iterates,
    })
}

/// The pointwise control law `f = cbrt(-v eta / N)` on the control mask,
/// which a stationary point of the unconstrained problem satisfies.
pub fn control_law(
    params: &ModelParams,
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    weights: &CostWeights,
) -> Result<Control> {
    if !(weights.n_cost > 0.0) {
        return Err(Error::InvalidArgument(
            "the control law needs a positive control cost".into(),
        ));
    }
    let n_cells = params.grid.n_cells();
    let mut values = vec![0.0; params.time.n_steps() * n_cells];
    for (n, chunk) in values.chunks_mut(n_cells).enumerate() {
        let v = traj.v[n + 1].values();
        let eta = adj.eta[n].values();
        for (k, x) in chunk.iter_mut().enumerate() {
            *x = (-v[k] * eta[k] / weights.n_cost).cbrt();
        }
    }
    Control::from_values(params, values)
}

/// Smallest normalized value of `<g, f - f*>` over `n_samples` random
/// admissible `f`, each divided by `||g|| ||f - f*||`. Nonnegative at a
/// point satisfying the variational inequality. Free sets are sampled in
/// the box `[-R, R]` with `R = 2 max|f*| + 1`.
pub fn sample_variational_inequality(
    control: &Control,
    grad: &ControlGradient,
    set: &AdmissibleSet,
    n_samples: usize,
    seed: u64,
) -> f64 {
    let (lo, hi) = match *set {
        AdmissibleSet::Box { f_min, f_max } => (f_min, f_max),
        AdmissibleSet::Free => {
            let r = 2.0 * control.max_abs() + 1.0;
            (-r, r)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = control.weight();
    let g_norm = l2_norm(w, grad.values.iter().copied());
    let n_cells = control.n_cells();
    let mask = control.mask();
    let mut worst = f64::INFINITY;
    for _ in 0..n_samples {
        let mut pairing = 0.0;
        let mut dist2 = 0.0;
        for (idx, (&f, &g)) in control.values().iter().zip(&grad.values).enumerate() {
            if !mask[idx % n_cells] {
                continue;
            }
            let sample = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let d = sample - f;
            pairing += g * d;
            dist2 += d * d;
        }
        let scale = g_norm * (w * dist2).sqrt();
        let value = w * pairing;
        let normalized = if scale > 0.0 { value / scale } else { 0.0 };
        worst = worst.min(normalized);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionCheck {
    pub adjoint_derivative: f64,
    /// Central differences, one per entry of the epsilon list.
    pub finite_differences: Vec<f64>,
    pub best_eps: f64,
    pub best_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheckReport {
    pub eps_list: Vec<f64>,
    pub directions: Vec<DirectionCheck>,
}

impl GradientCheckReport {
    pub fn worst_error(&self) -> f64 {
        self.directions
            .iter()
            .map(|d| d.best_relative_error)
            .fold(0.0, f64::max)
    }
}

/// `|a - b| / max(|a|, |b|)`, defined as 0 when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// `<g, d>` in the space-time L2 pairing.
pub fn directional_derivative(grad: &ControlGradient, direction: &Control) -> f64 {
    direction.dot(&grad.values)
}

/// Random unit direction (space-time L2) supported on the control mask.
pub fn random_direction(params: &ModelParams, seed: u64) -> Control {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Control::zeros(params);
    let n_cells = raw.n_cells();
    let values: Vec<f64> = (0..raw.values().len())
        .map(|idx| {
            let x: f64 = rng.gen_range(-1.0..1.0);
            if raw.mask()[idx % n_cells] {
                x
            } else {
                0.0
            }
        })
        .collect();
    let norm = l2_norm(raw.weight(), values.iter().copied());
    raw.with_values(values.into_iter().map(|x| x / norm).collect())
        .expect("finite by construction")
}

/// Compares the adjoint directional derivative with central differences of
/// the objective along `n_directions` random unit directions.
pub fn gradient_check(
    params: &ModelParams,
    control: &Control,
    weights: &CostWeights,
    desired: &DesiredStates,
    n_directions: usize,
    eps_list: &[f64],
    seed: u64,
) -> Result<GradientCheckReport> {
    if n_directions == 0 || eps_list.is_empty() {
        return Err(Error::InvalidArgument(
            "gradient check needs at least one direction and one epsilon".into(),
        ));
    }
    if eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("epsilons must be positive".into()));
    }
    let eval = evaluate_with_gradient(params, control, weights, desired)?;
    let shifted = |dir: &Control, s: f64| -> Result<f64> {
        let values = control
            .values()
            .iter()
            .zip(dir.values())
            .map(|(f, d)| f + s * d)
            .collect();
        objective_at(params, &control.with_values(values)?, weights, desired).map(|o| o.total)
    };

    let directions = (0..n_directions)
        .into_par_iter()
        .map(|k| -> Result<DirectionCheck> {
            let dir = random_direction(params, seed.wrapping_add(k as u64));
            let ad = directional_derivative(&eval.gradient, &dir);
            let mut fds = Vec::with_capacity(eps_list.len());
            let mut best = (eps_list[0], f64::INFINITY);
            for &eps in eps_list {
                let fd = (shifted(&dir, eps)? - shifted(&dir, -eps)?) / (2.0 * eps);
                let err = relative_error(fd, ad);
                if err < best.1 {
                    best = (eps, err);
                }
                fds.push(fd);
            }
            Ok(DirectionCheck {
                adjoint_derivative: ad,
                finite_differences: fds,
                best_eps: best.0,
                best_relative_error: best.1,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GradientCheckReport {
        eps_list: eps_list.to_vec(),
        directions,
    })
}
