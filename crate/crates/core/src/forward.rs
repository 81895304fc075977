//! Semi-implicit time stepping of the controlled chemo-repulsion system
//!
//! ```text
//! du/dt - lap u = div(u grad v)
//! dv/dt - lap v + v = u + f v
//! ```
//!
//! with zero-flux boundaries. Each step solves for `v` first, with the
//! bilinear term folded into the implicit diagonal and `u` lagged, then for
//! `u` with implicit diffusion and the chemotaxis flux built from the new `v`.
//! Both solves are SPD; the `u` step conserves `sum(u)` exactly up to the
//! solver tolerance.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::linsolve::{SolverOptions, StencilOperator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<TimeGrid> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        Ok(TimeGrid { t_final, n_steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t_final * n as f64 / self.n_steps as f64
    }
}

/// Grid, time discretization, and nonnegative initial data.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub grid: Grid,
    pub time: TimeGrid,
    pub u0: ScalarField,
    pub v0: ScalarField,
    pub solver: SolverOptions,
}

impl ModelParams {
    pub fn new(grid: Grid, time: TimeGrid, u0: ScalarField, v0: ScalarField) -> Result<Self> {
        grid.check(&u0)?;
        grid.check(&v0)?;
        for (name, field) in [("u0", &u0), ("v0", &v0)] {
            if !field.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} has non-finite entries"
                )));
            }
            if field.min() < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be nonnegative (min {})",
                    field.min()
                )));
            }
        }
        Ok(ModelParams {
            grid,
            time,
            u0,
            v0,
            solver: SolverOptions::default(),
        })
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    /// Space-time quadrature weight `dt * hx * hy` of one control entry.
    pub fn cell_weight(&self) -> f64 {
        self.time.dt() * self.grid.cell_area()
    }
}

/// Piecewise-constant-in-time control; step `n` acts on `(t_n, t_{n+1}]`.
/// Entries outside the control mask are held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    n_steps: usize,
    weight: f64,
    mask: Arc<[bool]>,
    values: Vec<f64>,
}

impl Control {
    pub fn zeros(params: &ModelParams) -> Control {
        Control::constant(params, 0.0)
    }

    pub fn constant(params: &ModelParams, value: f64) -> Control {
        Control::from_fn(params, |_, _, _| value)
    }

    /// Samples `f(step, x, y)` on the control mask.
    pub fn from_fn(params: &ModelParams, f: impl Fn(usize, f64, f64) -> f64) -> Control {
        let grid = &params.grid;
        let n_cells = grid.n_cells();
        let mask = grid.control_mask();
        let mut values = vec![0.0; params.time.n_steps() * n_cells];
        for (n, chunk) in values.chunks_mut(n_cells).enumerate() {
            for (k, val) in chunk.iter_mut().enumerate() {
                if mask[k] {
                    let (x, y) = grid.cell_center(k);
                    *val = f(n, x, y);
                }
            }
        }
        Control {
            n_steps: params.time.n_steps(),
            weight: params.cell_weight(),
            mask: Arc::from(mask),
            values,
        }
    }

    /// Wraps a step-major array of length `n_steps * n_cells`; entries
    /// outside the control mask are zeroed.
    pub fn from_values(params: &ModelParams, values: Vec<f64>) -> Result<Control> {
        let expected = params.time.n_steps() * params.grid.n_cells();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "control has {} values, expected {expected}",
                values.len()
            )));
        }
        let mut control = Control::zeros(params);
        control.set_values(values)?;
        Ok(control)
    }

    /// Replaces all values, re-applying the mask.
    pub fn set_values(&mut self, mut values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "control has {} values, expected {}",
                values.len(),
                self.values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "control has non-finite entries".into(),
            ));
        }
        let n_cells = self.n_cells();
        for chunk in values.chunks_mut(n_cells) {
            for (v, &m) in chunk.iter_mut().zip(self.mask.iter()) {
                if !m {
                    *v = 0.0;
                }
            }
        }
        self.values = values;
        Ok(())
    }

    /// Same layout with new values, masked.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Control> {
        let mut c = self.clone();
        c.set_values(values)?;
        Ok(c)
    }

    /// Applies `f` to every entry on the mask.
    pub fn map_masked(&self, f: impl Fn(f64) -> f64) -> Control {
        let mut c = self.clone();
        let n_cells = self.n_cells();
        for chunk in c.values.chunks_mut(n_cells) {
            for (v, &m) in chunk.iter_mut().zip(self.mask.iter()) {
                if m {
                    *v = f(*v);
                }
            }
        }
        c
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_cells(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn step(&self, n: usize) -> &[f64] {
        let n_cells = self.n_cells();
        &self.values[n * n_cells..(n + 1) * n_cells]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Discrete space-time L2 pairing `dt * hx * hy * sum(self * other)`.
    pub fn dot(&self, other: &[f64]) -> f64 {
        self.weight * crate::grid::dot(&self.values, other)
    }

    /// True when every entry off the mask is exactly zero.
    pub fn support_in_mask(&self) -> bool {
        let n_cells = self.n_cells();
        self.values.chunks(n_cells).all(|chunk| {
            chunk
                .iter()
                .zip(self.mask.iter())
                .all(|(&v, &m)| m || v == 0.0)
        })
    }

    pub(crate) fn check_params(&self, params: &ModelParams) -> Result<()> {
        if self.n_steps != params.time.n_steps() || self.n_cells() != params.grid.n_cells() {
            return Err(Error::ShapeMismatch(format!(
                "control is {} steps x {} cells, problem is {} steps x {} cells",
                self.n_steps,
                self.n_cells(),
                params.time.n_steps(),
                params.grid.n_cells()
            )));
        }
        Ok(())
    }
}

/// Per-run diagnostics recorded by [`solve_forward`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// `integrate(u[n])` for `n = 0..=n_steps`.
    pub mass: Vec<f64>,
    pub min_u: Vec<f64>,
    pub min_v: Vec<f64>,
    /// Largest dt certified nonnegativity-preserving for each step's `u`
    /// solve, evaluated on the `v` that drove it (see [`positivity_dt_limit`]).
    pub dt_limit: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub u: Vec<ScalarField>,
    pub v: Vec<ScalarField>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.u.len() - 1
    }

    pub fn min_u(&self) -> f64 {
        self.u
            .iter()
            .map(ScalarField::min)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_v(&self) -> f64 {
        self.v
            .iter()
            .map(ScalarField::min)
            .fold(f64::INFINITY, f64::min)
    }

    /// Every step ran with dt within its certified positivity limit.
    pub fn positivity_certified(&self, dt: f64) -> bool {
        self.diagnostics.dt_limit.iter().all(|&lim| dt <= lim)
    }
}

/// Additive source terms `(g_u, g_v)` for step `n`, used for manufactured
/// solutions. Production runs pass `None`.
pub type StepSource<'a> = dyn Fn(usize) -> (ScalarField, ScalarField) + 'a;

fn v_operator<'g>(grid: &'g Grid, f_n: &[f64], dt: f64) -> Result<StencilOperator<'g>> {
    if f_n.len() != grid.n_cells() {
        return Err(Error::ShapeMismatch(format!(
            "control slice has {} values, grid has {} cells",
            f_n.len(),
            grid.n_cells()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let base = 1.0 / dt + 1.0;
    let shift: Vec<f64> = f_n.iter().map(|f| base - f).collect();
    let (cell, min_diagonal) =
        shift
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (k, s)| if s < acc.1 { (k, s) } else { acc },
            );
    if !(min_diagonal > 0.0) {
        return Err(Error::DtTooLarge { cell, min_diagonal });
    }
    StencilOperator::new(grid, shift)
}

fn u_operator(grid: &Grid, dt: f64) -> Result<StencilOperator<'_>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    Ok(StencilOperator::constant_shift(grid, 1.0 / dt))
}

fn step_v_impl(
    grid: &Grid,
    u_n: &ScalarField,
    v_n: &ScalarField,
    f_n: &[f64],
    dt: f64,
    source: Option<&ScalarField>,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    grid.check(u_n)?;
    grid.check(v_n)?;
    let op = v_operator(grid, f_n, dt)?;
    let mut rhs = grid.zeros();
    for (k, r) in rhs.values_mut().iter_mut().enumerate() {
        *r = v_n.values()[k] / dt + u_n.values()[k] + source.map_or(0.0, |g| g.values()[k]);
    }
    op.solve(&rhs, opts)
}

fn step_u_impl(
    grid: &Grid,
    u_n: &ScalarField,
    v_next: &ScalarField,
    dt: f64,
    source: Option<&ScalarField>,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    let op = u_operator(grid, dt)?;
    let mut rhs = grid.chemotaxis_divergence(u_n, v_next)?;
    for (k, r) in rhs.values_mut().iter_mut().enumerate() {
        *r += u_n.values()[k] / dt + source.map_or(0.0, |g| g.values()[k]);
    }
    op.solve(&rhs, opts)
}

/// Solves `(1/dt + 1 - f_n) v' - lap v' = v_n / dt + u_n`.
pub fn step_v(
    grid: &Grid,
    u_n: &ScalarField,
    v_n: &ScalarField,
    f_n: &[f64],
    dt: f64,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    step_v_impl(grid, u_n, v_n, f_n, dt, None, opts)
}

/// Solves `u' / dt - lap u' = u_n / dt + div(u_n grad v_next)`.
pub fn step_u(
    grid: &Grid,
    u_n: &ScalarField,
    v_next: &ScalarField,
    dt: f64,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    step_u_impl(grid, u_n, v_next, dt, None, opts)
}

pub fn solve_forward(params: &ModelParams, control: &Control) -> Result<Trajectory> {
    solve_forward_with_source(params, control, None)
}

/// [`solve_forward`] with additive per-step sources in both equations.
pub fn solve_forward_with_source(
    params: &ModelParams,
    control: &Control,
    source: Option<&StepSource<'_>>,
) -> Result<Trajectory> {
    control.check_params(params)?;
    let grid = &params.grid;
    let dt = params.time.dt();
    let n_steps = params.time.n_steps();

    let mut u = Vec::with_capacity(n_steps + 1);
    let mut v = Vec::with_capacity(n_steps + 1);
    u.push(params.u0.clone());
    v.push(params.v0.clone());
    let mut diag = Diagnostics::default();
    diag.mass.push(grid.integrate(&params.u0, None)?);
    diag.min_u.push(params.u0.min());
    diag.min_v.push(params.v0.min());

    for n in 0..n_steps {
        let g = source.map(|s| s(n));
        let (g_u, g_v) = match &g {
            Some((a, b)) => (Some(a), Some(b)),
            None => (None, None),
        };
        let v_next = step_v_impl(grid, &u[n], &v[n], control.step(n), dt, g_v, &params.solver)
            .map_err(|e| Error::at_step(n, e))?;
        if !v_next.is_finite() {
            return Err(Error::NonFinite { what: "v", step: n });
        }
        let u_next = step_u_impl(grid, &u[n], &v_next, dt, g_u, &params.solver)
            .map_err(|e| Error::at_step(n, e))?;
        if !u_next.is_finite() {
            return Err(Error::NonFinite { what: "u", step: n });
        }

        diag.dt_limit.push(positivity_dt_limit(grid, &v_next));
        diag.mass.push(grid.integrate(&u_next, None)?);
        let (mu, mv) = (u_next.min(), v_next.min());
        if mu < -1e-12 || mv < -1e-12 {
            diag.warnings.push(format!(
                "step {n}: negative undershoot (min u = {mu:e}, min v = {mv:e})"
            ));
        }
        diag.min_u.push(mu);
        diag.min_v.push(mv);
        u.push(u_next);
        v.push(v_next);
    }

    Ok(Trajectory {
        u,
        v,
        diagnostics: diag,
    })
}

/// `integrate(u[n], whole)` for every time level.
pub fn mass_series(grid: &Grid, traj: &Trajectory) -> Result<Vec<f64>> {
    traj.u.iter().map(|u| grid.integrate(u, None)).collect()
}

/// Largest dt for which the `u` step driven by `v_next` maps nonnegative
/// `u_n` to nonnegative `u'`.
///
/// The step is `u' = A^{-1} M u_n` with `A = I/dt - lap` (an M-matrix, so
/// `G = A^{-1} >= 0`) and `M = I/dt + dD/du`. For neighbors `P ~ Q`, row `Q`
/// of `A G = I` gives `G(P, .) <= (1/dt + d_Q) / c_PQ * G(Q, .)`, where
/// `d_Q` is the diagonal of `-lap` and `c_PQ = 1/h^2`. Column `Q` of
/// `A^{-1} M` is then nonnegative whenever
///
/// ```text
/// (1/dt) (1 - s_Q) >= d_Q s_Q - sum_P c_PQ (v_P - v_Q) / 2,
/// s_Q = sum_P max(v_P - v_Q, 0) / 2,
/// ```
///
/// which needs `s_Q < 1` (a cell Peclet bound on `v`) and then bounds dt.
/// Returns `f64::INFINITY` when no cell constrains dt and `0.0` when some
/// cell violates the Peclet bound.
pub fn positivity_dt_limit(grid: &Grid, v_next: &ScalarField) -> f64 {
    let n = grid.n_cells();
    let v = v_next.values();
    let mut s = vec![0.0; n];
    let mut drift = vec![0.0; n];
    let cx = 1.0 / (grid.hx() * grid.hx());
    let cy = 1.0 / (grid.hy() * grid.hy());
    let mut visit = |p: usize, q: usize, c: f64| {
        let jump = v[q] - v[p];
        s[p] += 0.5 * jump.max(0.0);
        s[q] += 0.5 * (-jump).max(0.0);
        drift[p] += 0.5 * c * jump;
        drift[q] -= 0.5 * c * jump;
    };
    for j in 0..grid.ny() {
        for i in 0..grid.nx().saturating_sub(1) {
            let p = grid.index(i, j);
            visit(p, p + 1, cx);
        }
    }
    for j in 0..grid.ny().saturating_sub(1) {
        for i in 0..grid.nx() {
            let p = grid.index(i, j);
            visit(p, p + grid.nx(), cy);
        }
    }
    let d = grid.laplacian_diagonal();
    (0..n).fold(f64::INFINITY, |limit, q| {
        if s[q] >= 1.0 {
            return 0.0;
        }
        let need = d[q] * s[q] - drift[q];
        if need <= 0.0 {
            limit
        } else {
            limit.min((1.0 - s[q]) / need)
        }
    })
}

/// A priori version of [`positivity_dt_limit`] from bounds alone:
/// `grad_v_max` bounds `|v_P - v_Q| / h` over neighbor pairs and `f_max`
/// bounds `|f|`. With `g = grad_v_max * max(hx, hy)` every cell has
/// `s_Q <= 2 g` and a right-hand side at most `2.5 d_max g`, giving
/// `dt <= (1 - 2 g) / (2.5 d_max g)`. The `v` step additionally needs
/// `1/dt + 1 - f > 0`, i.e. `dt < 1 / (f_max - 1)` when `f_max > 1`.
pub fn dt_pos(grid: &Grid, grad_v_max: f64, f_max: f64) -> f64 {
    let g = grad_v_max * grid.hx().max(grid.hy());
    let d_max = grid.laplacian_diagonal().into_iter().fold(0.0, f64::max);
    let chemo = if g <= 0.0 {
        f64::INFINITY
    } else if 2.0 * g >= 1.0 {
        0.0
    } else {
        (1.0 - 2.0 * g) / (2.5 * d_max * g)
    };
    let spd = if f_max > 1.0 {
        1.0 / (f_max - 1.0)
    } else {
        f64::INFINITY
    };
    chemo.min(spd)
}

/// Result of [`coupled_step_refine`].
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub u: ScalarField,
    pub v: ScalarField,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm change between the last two iterates.
    pub last_change: f64,
}

/// Fixed-point iteration of one step with the coupling terms re-evaluated
/// at the latest iterate:
///
/// ```text
/// v_k = solve_v(v_n / dt + u_{k-1}),  u_k = solve_u(u_n / dt + div(u_{k-1} grad v_k)),
/// ```
///
/// starting from `(u_n, v_n)`. One sweep is exactly `step_v` then `step_u`.
/// Failing to reach `tol` is reported through `converged`, not as an error.
#[allow(clippy::too_many_arguments)]
pub fn coupled_step_refine(
    grid: &Grid,
    u_n: &ScalarField,
    v_n: &ScalarField,
    f_n: &[f64],
    dt: f64,
    max_picard: usize,
    tol: f64,
    opts: &SolverOptions,
) -> Result<PicardOutcome> {
    if max_picard == 0 {
        return Err(Error::InvalidArgument(
            "max_picard must be at least 1".into(),
        ));
    }
    let v_op = v_operator(grid, f_n, dt)?;
    let u_op = u_operator(grid, dt)?;
    let mut u = u_n.clone();
    let mut v = v_n.clone();
    let mut last_change = f64::INFINITY;
    for it in 1..=max_picard {
        let rhs_v = grid.field(
            v_n.values()
                .iter()
                .zip(u.values())
                .map(|(vn, uk)| vn / dt + uk)
                .collect(),
        )?;
        let v_next = v_op.solve(&rhs_v, opts)?;
        let mut rhs_u = grid.chemotaxis_divergence(&u, &v_next)?;
        for (r, un) in rhs_u.values_mut().iter_mut().zip(u_n.values()) {
            *r += un / dt;
        }
        let u_next = u_op.solve(&rhs_u, opts)?;
        last_change = u_next.max_diff(&u).max(v_next.max_diff(&v));
        u = u_next;
        v = v_next;
        if last_change < tol {
            return Ok(PicardOutcome {
                u,
                v,
                iterations: it,
                converged: true,
                last_change,
            });
        }
    }
    Ok(PicardOutcome {
        u,
        v,
        iterations: max_picard,
        converged: false,
        last_change,
    })
}
