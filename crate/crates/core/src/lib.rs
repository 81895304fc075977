//! Optimal bilinear control of the 2D chemo-repulsion system with linear
//! production, solved on a cell-centered finite-difference grid and
//! optimized with discrete-adjoint projected gradient descent.

pub mod adjoint;
pub mod config;
pub mod error;
pub mod forward;
pub mod functional;
pub mod grid;
pub mod linsolve;
pub mod optimizer;
pub mod output;
pub mod verify;

pub use adjoint::{
    initial_data_gradient, linearized_forward, linearized_objective, reduced_gradient,
    solve_adjoint, AdjointTrajectory, ControlGradient, Perturbation,
};
pub use config::{parse_config, parse_config_in, ProblemConfig, ProblemSpec};
pub use error::{Error, Result};
pub use forward::{
    coupled_step_refine, dt_pos, mass_series, positivity_dt_limit, solve_forward,
    solve_forward_with_source, step_u, step_v, Control, Diagnostics, ModelParams, PicardOutcome,
    TimeGrid, Trajectory,
};
pub use functional::{evaluate_j, objective_change, CostWeights, DesiredStates, Objective};
pub use grid::{Grid, MaskSpec, ScalarField};
pub use linsolve::{solve_spd, SolverOptions, StencilOperator};
pub use optimizer::{
    control_law, evaluate_with_gradient, gradient_check, optimize, project, stationarity_residual,
    AdmissibleSet, GradientCheckReport, OptimizeOptions, OptimizeReport, Termination,
};
