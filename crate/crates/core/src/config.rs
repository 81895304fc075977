//! JSON problem description.
//!
//! Only `grid.nx`, `grid.ny`, `time.t_final` and `time.n_steps` are
//! required; everything else has a default (see the README for the full
//! reference). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{solve_forward, Control, ModelParams, TimeGrid};
use crate::functional::{CostWeights, DesiredStates};
use crate::grid::{Grid, MaskSpec, ScalarField};
use crate::linsolve::SolverOptions;
use crate::optimizer::{AdmissibleSet, OptimizeOptions};

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub control_domain: Option<RectConfig>,
    #[serde(default)]
    pub observation_domain: Option<RectConfig>,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub desired: DesiredConfig,
    #[serde(default)]
    pub admissible: AdmissibleConfig,
    #[serde(default)]
    pub initial_control: FieldSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: i64,
    pub ny: i64,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub n_steps: i64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RectConfig {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

/// A spatial field: constant, Gaussian bump over a background, or a text
/// file of `nx * ny` row-major numbers.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    Gaussian {
        amplitude: f64,
        center: [f64; 2],
        width: f64,
        #[serde(default)]
        background: f64,
    },
    File {
        path: PathBuf,
    },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Constant { value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "default_u0")]
    pub u0: FieldSpec,
    #[serde(default = "default_v0")]
    pub v0: FieldSpec,
}

fn default_u0() -> FieldSpec {
    FieldSpec::Gaussian {
        amplitude: 1.0,
        center: [0.5, 0.5],
        width: 0.15,
        background: 0.5,
    }
}

fn default_v0() -> FieldSpec {
    FieldSpec::Constant { value: 0.5 }
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            u0: default_u0(),
            v0: default_v0(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default = "one")]
    pub alpha_u: f64,
    #[serde(default = "one")]
    pub alpha_v: f64,
    #[serde(default = "default_n_cost")]
    pub n_cost: f64,
}

fn default_n_cost() -> f64 {
    0.1
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            alpha_u: 1.0,
            alpha_v: 1.0,
            n_cost: default_n_cost(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesiredConfig {
    /// Constant-in-time fields.
    Constant { u: FieldSpec, v: FieldSpec },
    /// States of a forward run under the embedded control `f_star`
    /// (constant in time, restricted to the control domain).
    SelfTarget { f_star: FieldSpec },
}

impl Default for DesiredConfig {
    fn default() -> Self {
        DesiredConfig::Constant {
            u: FieldSpec::Constant { value: 1.0 },
            v: FieldSpec::Constant { value: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdmissibleConfig {
    #[default]
    Free,
    Box {
        f_min: f64,
        f_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub max_iters: i64,
    pub tol: f64,
    pub armijo_c: f64,
    pub backtrack_ratio: f64,
    pub step_init: f64,
    pub probe_step: f64,
    pub barzilai_borwein: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let d = OptimizeOptions::default();
        OptimizerConfig {
            max_iters: d.max_iters as i64,
            tol: d.tol,
            armijo_c: d.armijo_c,
            backtrack_ratio: d.backtrack_ratio,
            step_init: d.step_init,
            probe_step: d.probe_step,
            barzilai_borwein: d.barzilai_borwein,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: i64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverConfig {
            tol: d.tol,
            max_iter: d.max_iter as i64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub n_directions: i64,
    pub eps: Vec<f64>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            n_directions: 10,
            eps: vec![1e-3, 1e-4, 1e-5, 1e-6, 1e-7],
        }
    }
}

/// Validated problem bundle.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub config: ProblemConfig,
    pub params: ModelParams,
    pub weights: CostWeights,
    pub desired: DesiredStates,
    pub admissible: AdmissibleSet,
    pub f_init: Control,
    pub optimizer: OptimizeOptions,
    pub gradcheck_directions: usize,
    pub gradcheck_eps: Vec<f64>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// Parses and validates a configuration; relative file paths resolve
/// against the working directory.
pub fn parse_config(text: &str) -> Result<ProblemSpec> {
    parse_config_in(text, Path::new("."))
}

/// [`parse_config`] with relative file paths resolved against `base`.
pub fn parse_config_in(text: &str, base: &Path) -> Result<ProblemSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ProblemConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::config(path, format!("{inner}"))
    })?;
    validate(config, base)
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive, got {x}")))
    }
}

fn nonnegative(path: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be nonnegative, got {x}")))
    }
}

fn count(path: &str, n: i64) -> Result<usize> {
    if n >= 1 {
        Ok(n as usize)
    } else {
        Err(Error::config(path, format!("must be at least 1, got {n}")))
    }
}

fn rect(path: &str, r: &Option<RectConfig>) -> Result<MaskSpec> {
    match r {
        None => Ok(MaskSpec::Whole),
        Some(r) => {
            if !(r.x[0] <= r.x[1]) {
                return Err(Error::config(format!("{path}.x"), "expects [min, max]"));
            }
            if !(r.y[0] <= r.y[1]) {
                return Err(Error::config(format!("{path}.y"), "expects [min, max]"));
            }
            Ok(MaskSpec::Rect {
                x0: r.x[0],
                x1: r.x[1],
                y0: r.y[0],
                y1: r.y[1],
            })
        }
    }
}

/// Reads `nx * ny` numbers separated by whitespace or commas; `#` starts a
/// comment.
pub fn read_field_text(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c.is_whitespace() || c == ','))
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| format!("not a number: `{tok}`"))
        })
        .collect()
}

fn build_field(path: &str, spec: &FieldSpec, grid: &Grid, base: &Path) -> Result<ScalarField> {
    let field = match spec {
        FieldSpec::Constant { value } => grid.constant(*value),
        FieldSpec::Gaussian {
            amplitude,
            center,
            width,
            background,
        } => {
            positive(&format!("{path}.width"), *width)?;
            let (cx, cy, w2) = (center[0], center[1], width * width);
            grid.sample(|x, y| {
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                background + amplitude * (-r2 / (2.0 * w2)).exp()
            })
        }
        FieldSpec::File { path: file } => {
            let full = base.join(file);
            let text = std::fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
            let values = read_field_text(&text).map_err(|m| {
                Error::config(format!("{path}.path"), format!("{}: {m}", full.display()))
            })?;
            grid.field(values)
                .map_err(|e| Error::config(format!("{path}.path"), e.to_string()))?
        }
    };
    if !field.is_finite() {
        return Err(Error::config(path, "field has non-finite values"));
    }
    Ok(field)
}

fn validate(config: ProblemConfig, base: &Path) -> Result<ProblemSpec> {
    let nx = count("grid.nx", config.grid.nx)?;
    let ny = count("grid.ny", config.grid.ny)?;
    positive("grid.lx", config.grid.lx)?;
    positive("grid.ly", config.grid.ly)?;
    positive("time.t_final", config.time.t_final)?;
    let n_steps = count("time.n_steps", config.time.n_steps)?;

    let mask_c = rect("control_domain", &config.control_domain)?;
    let mask_d = rect("observation_domain", &config.observation_domain)?;
    let grid =
        Grid::new(nx, ny, config.grid.lx, config.grid.ly, mask_c, mask_d).map_err(|e| match e {
            Error::EmptyMask("control") => Error::config("control_domain", e.to_string()),
            Error::EmptyMask(_) => Error::config("observation_domain", e.to_string()),
            other => Error::config("grid", other.to_string()),
        })?;
    let time = TimeGrid::new(config.time.t_final, n_steps)?;

    let u0 = build_field("initial.u0", &config.initial.u0, &grid, base)?;
    let v0 = build_field("initial.v0", &config.initial.v0, &grid, base)?;
    if u0.min() < 0.0 {
        return Err(Error::config(
            "initial.u0",
            "initial density must be nonnegative",
        ));
    }
    if v0.min() < 0.0 {
        return Err(Error::config(
            "initial.v0",
            "initial concentration must be nonnegative",
        ));
    }

    let s = &config.solver;
    positive("solver.tol", s.tol)?;
    let solver = SolverOptions {
        tol: s.tol,
        max_iter: count("solver.max_iter", s.max_iter)?,
    };
    let params = ModelParams::new(grid.clone(), time, u0, v0)?.with_solver(solver);

    let w = &config.weights;
    nonnegative("weights.alpha_u", w.alpha_u)?;
    nonnegative("weights.alpha_v", w.alpha_v)?;
    nonnegative("weights.n_cost", w.n_cost)?;
    let weights = CostWeights::new(w.alpha_u, w.alpha_v, w.n_cost)
        .map_err(|e| Error::config("weights", e.to_string()))?;

    let admissible = match config.admissible {
        AdmissibleConfig::Free => AdmissibleSet::Free,
        AdmissibleConfig::Box { f_min, f_max } => {
            if !f_min.is_finite() {
                return Err(Error::config("admissible.f_min", "must be finite"));
            }
            if !f_max.is_finite() {
                return Err(Error::config("admissible.f_max", "must be finite"));
            }
            if f_min > f_max {
                return Err(Error::config(
                    "admissible",
                    format!("f_min ({f_min}) exceeds f_max ({f_max})"),
                ));
            }
            AdmissibleSet::Box { f_min, f_max }
        }
    };
    if matches!(admissible, AdmissibleSet::Free) && weights.n_cost == 0.0 {
        return Err(Error::config(
            "admissible",
            "a free admissible set requires weights.n_cost > 0",
        ));
    }

    let control_field = |path: &str, spec: &FieldSpec| -> Result<Control> {
        let f = build_field(path, spec, &grid, base)?;
        Control::from_values(
            &params,
            (0..n_steps)
                .flat_map(|_| f.values().iter().copied())
                .collect(),
        )
    };

    let desired = match &config.desired {
        DesiredConfig::Constant { u, v } => DesiredStates::constant_in_time(
            &params,
            build_field("desired.u", u, &grid, base)?,
            build_field("desired.v", v, &grid, base)?,
        )?,
        DesiredConfig::SelfTarget { f_star } => {
            let f_star = control_field("desired.f_star", f_star)?;
            let traj = solve_forward(&params, &f_star)
                .map_err(|e| Error::config("desired.f_star", e.to_string()))?;
            DesiredStates::from_trajectory(&params, &traj)?
        }
    };
    let f_init = control_field("initial_control", &config.initial_control)?;

    let o = &config.optimizer;
    let optimizer = OptimizeOptions {
        max_iters: count("optimizer.max_iters", o.max_iters)?,
        tol: {
            positive("optimizer.tol", o.tol)?;
            o.tol
        },
        armijo_c: {
            positive("optimizer.armijo_c", o.armijo_c)?;
            if o.armijo_c >= 1.0 {
                return Err(Error::config("optimizer.armijo_c", "must be below 1"));
            }
            o.armijo_c
        },
        backtrack_ratio: {
            if !(o.backtrack_ratio > 0.0 && o.backtrack_ratio < 1.0) {
                return Err(Error::config(
                    "optimizer.backtrack_ratio",
                    "must lie in (0, 1)",
                ));
            }
            o.backtrack_ratio
        },
        step_init: {
            positive("optimizer.step_init", o.step_init)?;
            o.step_init
        },
        probe_step: {
            positive("optimizer.probe_step", o.probe_step)?;
            o.probe_step
        },
        barzilai_borwein: o.barzilai_borwein,
        ..OptimizeOptions::default()
    };

    let gradcheck_directions = count("gradcheck.n_directions", config.gradcheck.n_directions)?;
    if config.gradcheck.eps.is_empty() {
        return Err(Error::config("gradcheck.eps", "must not be empty"));
    }
    for (i, e) in config.gradcheck.eps.iter().enumerate() {
        positive(&format!("gradcheck.eps[{i}]"), *e)?;
    }

    Ok(ProblemSpec {
        gradcheck_eps: config.gradcheck.eps.clone(),
        output_dir: config.output_dir.clone(),
        seed: config.seed,
        config,
        params,
        weights,
        desired,
        admissible,
        f_init,
        optimizer,
        gradcheck_directions,
    })
}
