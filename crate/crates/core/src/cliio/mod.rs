//! Command-line front end: run configurations, experiment matrices and the
//! small inspection commands.

mod config;
mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::diffcore::{grad_check, GradCheckConfig};
use crate::error::{Error, Result};
use crate::fieldgrid::{save_fgrd, write_csv_channels};
use crate::model::Normalization;
use crate::oracle::solve_linear_direct;
use crate::problems::ProblemKind;
use crate::stencil::{central_difference_kernel, format_kernel, virtual_node_weights, FitMethod, PaddingSpec};
use crate::trainer::loss_graph;

pub use config::{Resolution, RunConfig};
pub use run::{matrix, matrix_csv, run, CellResult, MatrixAxis, MatrixSpec, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Map an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) | Error::Io(_) => EXIT_CONFIG,
        Error::Numerical(_) | Error::DivisionByZero(_) | Error::NonConvergence { .. } | Error::Diverged { .. } => {
            EXIT_NUMERICAL
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mrf-pinn", version, about = "Multi-receptive-field convolutional PINN solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration and write its artifacts.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        force: bool,
    },
    /// Sweep configuration keys and aggregate the results.
    Matrix {
        #[command(flatten)]
        run: RunArgs,
        /// `key=v1;v2;...`, repeatable.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        /// Cells trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        force: bool,
    },
    /// Solve a linear benchmark with the direct sparse solver.
    Oracle {
        problem: String,
        #[arg(long, default_value = "32x64")]
        resolution: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write one CSV per channel into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print a central-difference kernel and the boundary padding weights.
    InspectStencil {
        #[arg(long, default_value_t = 2)]
        deriv: usize,
        #[arg(long, default_value_t = 8)]
        acc: usize,
    },
    /// Compare reverse-mode gradients of the training loss with finite differences.
    GradCheck {
        #[arg(default_value = "elliptic")]
        problem: String,
        #[arg(long, default_value = "16x32")]
        resolution: String,
        #[arg(long, default_value_t = 4)]
        channels: usize,
        #[arg(long, default_value_t = 8)]
        fd: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
}

/// Flags shared by `solve` and `matrix`; each overrides the config file.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Problem name (elliptic, parabolic, hyperbolic, ns-swirl, mms:...).
    pub problem: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<String>,
    #[arg(long)]
    pub channels: Option<String>,
    #[arg(long)]
    pub fd: Option<String>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub adam: Option<String>,
    #[arg(long)]
    pub lbfgs: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub history: Option<String>,
    #[arg(long)]
    pub eval_every: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra `key=value` overrides.
    #[arg(long = "set")]
    pub set: Vec<String>,
}

impl RunArgs {
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.problem) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                RunConfig::parse(&text)?
            }
            (None, Some(p)) => RunConfig::new(p)?,
            (None, None) => return Err(Error::Config("give a problem name or --config".into())),
        };
        if let (Some(_), Some(p)) = (&self.config, &self.problem) {
            cfg.set("name", p)?;
        }
        let flags = [
            ("resolution", &self.resolution),
            ("channels", &self.channels),
            ("acc_order", &self.fd),
            ("mode", &self.mode),
            ("weights", &self.weights),
            ("epochs_adam", &self.adam),
            ("epochs_lbfgs", &self.lbfgs),
            ("lr", &self.lr),
            ("history", &self.history),
            ("eval_every", &self.eval_every),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{kv}'")))?;
            cfg.set(k, v)?;
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn solve_cmd(args: &RunArgs, force: bool) -> Result<i32> {
    let cfg = args.to_config()?;
    let s = run(&cfg, force)?;
    print!("{}", s.report.summary());
    println!("parameters: {}", s.param_count);
    println!("flops: {}", s.flops);
    println!("artifacts: {}", cfg.output.display());
    if s.diverged() {
        eprintln!("training diverged");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

fn matrix_cmd(args: &RunArgs, axes: &[String], jobs: usize, force: bool) -> Result<i32> {
    let base = args.to_config()?;
    let axes = axes.iter().map(|a| MatrixAxis::parse(a)).collect::<Result<Vec<_>>>()?;
    let spec = MatrixSpec::new(base, axes, jobs)?;
    let results = matrix(&spec, force)?;
    print!("{}", matrix_csv(&spec, &results));
    let failed = results.iter().filter(|r| r.outcome.as_ref().map_or(true, |s| s.diverged())).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", results.len());
    }
    Ok(EXIT_OK)
}

fn oracle_cmd(problem: &str, resolution: &str, out: &PathBuf, csv: Option<&PathBuf>) -> Result<i32> {
    let r: Resolution = resolution.parse()?;
    let ProblemKind::Linear(p) = ProblemKind::by_name(problem)? else {
        return Err(Error::Config(format!("no direct solver for '{problem}'")));
    };
    let grid = p.grid(r.nh, r.nw)?;
    let f = solve_linear_direct(&p, &grid)?;
    save_fgrd(&f, out)?;
    if let Some(dir) = csv {
        std::fs::create_dir_all(dir)?;
        write_csv_channels(&f, dir, &problem.replace(':', "-"))?;
    }
    println!("wrote {} ({}x{}, max |u| = {:.6})", out.display(), r.nh, r.nw, f.max_abs());
    Ok(EXIT_OK)
}

fn inspect_stencil(deriv: usize, acc: usize) -> Result<i32> {
    let k = central_difference_kernel(deriv, acc).map_err(|e| Error::Config(e.to_string()))?;
    println!("d{deriv} acc{acc}: {}", format_kernel(&k));
    for p in 0..=(acc + deriv) as u32 {
        println!("  moment {p}: {}", k.moment(p));
    }
    let spec = PaddingSpec::for_accuracy(acc);
    let w = virtual_node_weights(&spec, FitMethod::default_for(&spec))?;
    println!(
        "padding: {} virtual nodes, degree {}, fit over {} points",
        spec.n_virtual, spec.degree, spec.fit_points
    );
    for (m, row) in w.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        println!("  u(-{}) = [{}] . u(0..)", m + 1, cells.join(", "));
    }
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn grad_check_cmd(
    problem: &str,
    resolution: &str,
    channels: usize,
    fd: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<i32> {
    let mut cfg = RunConfig::new(problem)?;
    cfg.resolution = resolution.parse()?;
    cfg.channels = channels;
    cfg.acc_order = fd;
    cfg.seed = seed;
    cfg.validate()?;
    let (task, mut model) = run::build(&cfg)?;
    model.set_normalization(Normalization::fit(&task.input))?;
    let weights = cfg.weights.initial()?;
    let mut store = model.store().clone();
    let report = grad_check(
        |g, s| loss_graph(g, &task, &model, s, &weights),
        &mut store,
        GradCheckConfig {
            samples,
            seed,
            ..GradCheckConfig::default()
        },
    )?;
    println!(
        "checked {} of {} parameters: max relative error {:.3e} (index {}, analytic {:.6e}, numeric {:.6e})",
        report.checked,
        store.len(),
        report.max_rel_error,
        report.worst_index,
        report.worst_analytic,
        report.worst_numeric
    );
    Ok(if report.max_rel_error <= tol { EXIT_OK } else { EXIT_NUMERICAL })
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve { run, force } => solve_cmd(&run, force),
        Command::Matrix { run, axes, jobs, force } => matrix_cmd(&run, &axes, jobs, force),
        Command::Oracle {
            problem,
            resolution,
            out,
            csv,
        } => oracle_cmd(&problem, &resolution, &out, csv.as_ref()),
        Command::InspectStencil { deriv, acc } => inspect_stencil(deriv, acc),
        Command::GradCheck {
            problem,
            resolution,
            channels,
            fd,
            samples,
            seed,
            tol,
        } => grad_check_cmd(&problem, &resolution, channels, fd, samples, seed, tol),
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
