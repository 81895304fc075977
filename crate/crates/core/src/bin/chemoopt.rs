use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use chemoopt::output::{fmt_g17, write_atomic, write_field_vtk, write_series_csv};
use chemoopt::verify::{run_invariant_suite, CheckStatus};
use chemoopt::{
    gradient_check, optimize, parse_config_in, solve_forward, AdmissibleSet, Error,
    OptimizeOptions, ProblemSpec, Termination,
};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "chemoopt",
    version,
    about = "Bilinear optimal control of a chemo-repulsion system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the state system and write snapshots plus mass and minimum series
    Forward {
        #[command(flatten)]
        common: Common,
        /// Snapshot interval in steps (default n_steps / 10)
        #[arg(long)]
        snap_every: Option<usize>,
    },
    /// Run projected gradient descent and write the final control and histories
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Compare adjoint directional derivatives with finite differences
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Run the invariant suite and print PASS/FAIL lines
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Problem configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir` in the config
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Numerical(String),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<(ProblemSpec, PathBuf), Failure> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| {
        Failure::Usage(format!(
            "cannot read config {}: {e}",
            common.config.display()
        ))
    })?;
    let base = common
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let spec = parse_config_in(&text, base)
        .map_err(|e| Failure::Usage(format!("{}: {e}", common.config.display())))?;
    let out = match &common.out {
        Some(dir) => dir.clone(),
        None if spec.output_dir.is_relative() => base.join(&spec.output_dir),
        None => spec.output_dir.clone(),
    };
    Ok((spec, out))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Numerical(format!("cannot create {}: {e}", dir.display())))
}

fn run_forward(common: &Common, snap_every: Option<usize>) -> Result<(), Failure> {
    let (spec, out) = load(common)?;
    let params = &spec.params;
    let traj = solve_forward(params, &spec.f_init)?;
    for w in &traj.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    ensure_dir(&out)?;

    let n_steps = params.time.n_steps();
    let every = snap_every.unwrap_or((n_steps / 10).max(1)).max(1);
    for n in (0..=n_steps).filter(|n| n % every == 0 || *n == n_steps) {
        write_field_vtk(&params.grid, &traj.u[n], &out.join(format!("u_{n:05}.vtk")))?;
        write_field_vtk(&params.grid, &traj.v[n], &out.join(format!("v_{n:05}.vtk")))?;
    }

    let steps: Vec<f64> = (0..=n_steps).map(|n| n as f64).collect();
    let times: Vec<f64> = (0..=n_steps).map(|n| params.time.time(n)).collect();
    let d = &traj.diagnostics;
    write_series_csv(
        &[("step", &steps), ("t", &times), ("mass", &d.mass)],
        &out.join("mass.csv"),
    )?;
    write_series_csv(
        &[
            ("step", &steps),
            ("t", &times),
            ("min_u", &d.min_u),
            ("min_v", &d.min_v),
        ],
        &out.join("min_values.csv"),
    )?;
    eprintln!(
        "forward: {n_steps} steps, mass {} -> {}, wrote {}",
        fmt_g17(d.mass[0]),
        fmt_g17(d.mass[n_steps]),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct OptimizeSummary<'a> {
    termination: Termination,
    iterations: usize,
    objective_total: f64,
    tracking_u: f64,
    tracking_v: f64,
    cost_f: f64,
    final_residual: f64,
    admissible: &'a AdmissibleSet,
    options: &'a OptimizeOptions,
    j_history: &'a [f64],
    residual_history: &'a [f64],
    step_sizes: &'a [f64],
}

fn run_optimize(common: &Common) -> Result<(), Failure> {
    let (spec, out) = load(common)?;
    let report = optimize(
        &spec.params,
        &spec.weights,
        &spec.desired,
        &spec.admissible,
        &spec.f_init,
        &spec.optimizer,
    )?;
    ensure_dir(&out)?;

    let n_cells = spec.params.grid.n_cells();
    let len = report.control.values().len();
    let steps: Vec<f64> = (0..len).map(|i| (i / n_cells) as f64).collect();
    let cells: Vec<f64> = (0..len).map(|i| (i % n_cells) as f64).collect();
    write_series_csv(
        &[
            ("step", &steps),
            ("cell", &cells),
            ("f", report.control.values()),
        ],
        &out.join("control.csv"),
    )?;
    let iters: Vec<f64> = (0..report.j_history.len()).map(|i| i as f64).collect();
    write_series_csv(
        &[
            ("iteration", &iters),
            ("J", &report.j_history),
            ("residual", &report.residual_history),
            ("step", &report.step_sizes),
        ],
        &out.join("history.csv"),
    )?;
    let summary = OptimizeSummary {
        termination: report.termination,
        iterations: report.iterations,
        objective_total: report.objective.total,
        tracking_u: report.objective.tracking_u,
        tracking_v: report.objective.tracking_v,
        cost_f: report.objective.cost_f,
        final_residual: report.residual_history.last().copied().unwrap_or(f64::NAN),
        admissible: &spec.admissible,
        options: &report.options,
        j_history: &report.j_history,
        residual_history: &report.residual_history,
        step_sizes: &report.step_sizes,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("serializable summary");
    json.push('\n');
    write_atomic(&out.join("report.json"), json.as_bytes())?;
    eprintln!(
        "optimize: {:?} after {} iterations, J = {}, residual = {:e}",
        report.termination, report.iterations, report.objective.total, summary.final_residual
    );
    match report.termination {
        Termination::LineSearchFailed => Err(Failure::Numerical(
            "line search failed; last iterate written".into(),
        )),
        _ => Ok(()),
    }
}

fn run_gradcheck(common: &Common) -> Result<(), Failure> {
    let (spec, out) = load(common)?;
    let report = gradient_check(
        &spec.params,
        &spec.f_init,
        &spec.weights,
        &spec.desired,
        spec.gradcheck_directions,
        &spec.gradcheck_eps,
        spec.seed,
    )?;
    ensure_dir(&out)?;
    let dirs: Vec<f64> = (0..report.directions.len()).map(|i| i as f64).collect();
    let ad: Vec<f64> = report
        .directions
        .iter()
        .map(|d| d.adjoint_derivative)
        .collect();
    let best_fd: Vec<f64> = report
        .directions
        .iter()
        .map(|d| {
            let k = report
                .eps_list
                .iter()
                .position(|&e| e == d.best_eps)
                .unwrap_or(0);
            d.finite_differences[k]
        })
        .collect();
    let eps: Vec<f64> = report.directions.iter().map(|d| d.best_eps).collect();
    let err: Vec<f64> = report
        .directions
        .iter()
        .map(|d| d.best_relative_error)
        .collect();
    write_series_csv(
        &[
            ("direction", &dirs),
            ("adjoint", &ad),
            ("finite_difference", &best_fd),
            ("eps", &eps),
            ("relative_error", &err),
        ],
        &out.join("gradcheck.csv"),
    )?;
    for (k, d) in report.directions.iter().enumerate() {
        println!(
            "direction {k}: adjoint {:.12e}, best eps {:e}, relative error {:.3e}",
            d.adjoint_derivative, d.best_eps, d.best_relative_error
        );
    }
    println!("worst relative error {:.3e}", report.worst_error());
    Ok(())
}

fn run_verify(common: &Common) -> Result<(), Failure> {
    let (spec, _) = load(common)?;
    let results = run_invariant_suite(&spec)?;
    for r in &results {
        println!("{r}");
    }
    if results.iter().any(|r| r.status == CheckStatus::Fail) {
        Err(Failure::Verification)
    } else {
        Ok(())
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("CHEMOOPT_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => eprintln!("warning: ignoring CHEMOOPT_THREADS={v:?}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    let result = match &cli.command {
        Command::Forward { common, snap_every } => run_forward(common, *snap_every),
        Command::Optimize { common } => run_optimize(common),
        Command::Gradcheck { common } => run_gradcheck(common),
        Command::Verify { common } => run_verify(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}
