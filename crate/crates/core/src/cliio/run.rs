use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::fieldgrid::{save_fgrd, Field};
use crate::model::{MRFModel, ModelConfig};
use crate::oracle::solve_linear_direct;
use crate::problems::{ProblemKind, Task};
use crate::trainer::{train, Outcome, Phase, TrainReport};

/// What a finished run leaves behind.
#[derive(Debug)]
pub struct RunSummary {
    pub config: RunConfig,
    pub report: TrainReport,
    pub param_count: usize,
    pub flops: u64,
    pub wall_secs: f64,
}

impl RunSummary {
    pub fn diverged(&self) -> bool {
        !self.report.completed()
    }
}

/// Refuse to reuse a non-empty directory unless `force`.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let busy = !dir.is_dir() || fs::read_dir(dir)?.next().is_some();
        if busy && !force {
            return Err(Error::Config(format!(
                "output directory {} already exists; use --force to replace it",
                dir.display()
            )));
        }
        if busy {
            if dir.is_dir() {
                fs::remove_dir_all(dir)?;
            } else {
                fs::remove_file(dir)?;
            }
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub(crate) fn build(cfg: &RunConfig) -> Result<(Task, MRFModel)> {
    let r = cfg.resolution;
    let task = Task::with_default_padding(&cfg.problem, r.nh, r.nw, cfg.acc_order)?;
    let mc = ModelConfig {
        mode: cfg.mode,
        ..ModelConfig::new(task.input.channels(), task.unknowns(), cfg.channels)
    };
    let model = MRFModel::new(mc, r.nh, r.nw, cfg.seed)?;
    Ok((task, model))
}

/// Train one configuration and write its artifacts into `cfg.output`.
///
/// A diverged run still writes everything it has; check
/// [`RunSummary::diverged`].
pub fn run(cfg: &RunConfig, force: bool) -> Result<RunSummary> {
    let t0 = Instant::now();
    cfg.validate()?;
    let (task, mut model) = build(cfg)?;
    let param_count = model.param_count();
    let flops = model.flop_estimate(cfg.resolution.nh, cfg.resolution.nw);
    let oracle = match &task.kind {
        ProblemKind::Linear(p) => Some(solve_linear_direct(p, task.grid())?),
        ProblemKind::NavierStokes(_) => None,
    };
    let reference: Option<&Field> = oracle.as_ref().or(task.reference.as_ref());

    let dir = &cfg.output;
    prepare_dir(dir, force)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    if let Some(o) = &oracle {
        save_fgrd(o, dir.join("oracle.fgrd"))?;
    }

    let report = train(&task, &mut model, &cfg.train_config(), reference)?;
    fs::write(dir.join("report.csv"), report.to_csv(true))?;
    if let Some(u) = &report.prediction {
        save_fgrd(u, dir.join("prediction.fgrd"))?;
    }
    let mut summary = report.summary();
    let _ = writeln!(summary, "parameters: {param_count}");
    let _ = writeln!(summary, "flops: {flops}");
    fs::write(dir.join("summary.txt"), summary)?;

    Ok(RunSummary {
        config: cfg.clone(),
        report,
        param_count,
        flops,
        wall_secs: t0.elapsed().as_secs_f64(),
    })
}

/// One swept configuration key and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl MatrixAxis {
    /// `key=v1;v2;...`
    pub fn parse(s: &str) -> Result<Self> {
        let (key, vals) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("axis '{s}' is not key=values")))?;
        let values: Vec<String> = vals.split(';').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(Error::Config(format!("axis '{key}' has no values")));
        }
        Ok(Self {
            key: key.trim().to_string(),
            values,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MatrixSpec {
    pub base: RunConfig,
    pub axes: Vec<MatrixAxis>,
    /// Cells trained concurrently.
    pub jobs: usize,
}

#[derive(Debug)]
pub struct CellResult {
    pub index: usize,
    pub values: Vec<String>,
    pub outcome: std::result::Result<RunSummary, String>,
    pub flops: Option<u64>,
}

impl MatrixSpec {
    /// Merge repeated keys and reject keys no config understands.
    pub fn new(base: RunConfig, axes: Vec<MatrixAxis>, jobs: usize) -> Result<Self> {
        let mut merged: Vec<MatrixAxis> = Vec::new();
        for a in axes {
            base.get(&a.key)?;
            match merged.iter_mut().find(|m| m.key == a.key) {
                Some(m) => m.values.extend(a.values),
                None => merged.push(a),
            }
        }
        Ok(Self {
            base,
            axes: merged,
            jobs: jobs.max(1),
        })
    }

    /// The cartesian product in row-major order (last axis fastest).
    pub fn cells(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = vec![Vec::new()];
        for a in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    a.values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v.clone());
                        p
                    })
                })
                .collect();
        }
        out
    }

    fn cell_config(&self, index: usize, values: &[String]) -> Result<RunConfig> {
        let mut cfg = self.base.clone();
        for (a, v) in self.axes.iter().zip(values) {
            cfg.set(&a.key, v)?;
        }
        cfg.output = self.base.output.join(format!("cell-{index:03}"));
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Run every cell, then write `matrix.csv` into the base output directory.
pub fn matrix(spec: &MatrixSpec, force: bool) -> Result<Vec<CellResult>> {
    spec.base.validate()?;
    prepare_dir(&spec.base.output, force)?;
    let cells = spec.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(index, values)| {
                let cfg = spec.cell_config(index, values);
                let flops = cfg
                    .as_ref()
                    .ok()
                    .and_then(|c| build(c).ok())
                    .map(|(_, m)| m.flop_estimate(m.spatial().0, m.spatial().1));
                let outcome = cfg.and_then(|c| run(&c, true)).map_err(|e| e.to_string());
                if let Err(e) = &outcome {
                    log::warn!("cell {index} failed: {e}");
                }
                CellResult {
                    index,
                    values: values.clone(),
                    outcome,
                    flops,
                }
            })
            .collect()
    });
    fs::write(spec.base.output.join("matrix.csv"), matrix_csv(spec, &results))?;
    Ok(results)
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per cell: axis values, status, error per channel, cost.
pub fn matrix_csv(spec: &MatrixSpec, results: &[CellResult]) -> String {
    let channels = results
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok())
        .map(|s| s.report.unknowns)
        .max()
        .unwrap_or(1);
    let mut s = String::from("cell");
    for a in &spec.axes {
        let _ = write!(s, ",{}", a.key);
    }
    s.push_str(",status");
    for c in 0..channels {
        let _ = write!(s, ",eps_{c}");
    }
    s.push_str(",final_loss,epochs,backward,backward_per_adam_epoch,adam_epoch_ms,wall_secs,params,flops,flop_ratio\n");
    let base_flops = results.first().and_then(|r| r.flops);
    for r in results {
        let _ = write!(s, "{}", r.index);
        for v in &r.values {
            let _ = write!(s, ",{}", csv_field(v));
        }
        match &r.outcome {
            Ok(sum) => {
                let rep = &sum.report;
                let status = match rep.outcome {
                    Outcome::Completed => "ok".to_string(),
                    Outcome::Diverged { epoch, .. } => format!("diverged@{epoch}"),
                };
                let _ = write!(s, ",{status}");
                for c in 0..channels {
                    match rep.final_eps.as_ref().and_then(|e| e.get(c)) {
                        Some(e) => {
                            let _ = write!(s, ",{e:e}");
                        }
                        None => s.push(','),
                    }
                }
                let adam: Vec<_> = rep.phase_rows(Phase::Adam).collect();
                let per_epoch = if adam.is_empty() {
                    0.0
                } else {
                    adam.iter().map(|r| r.backward).sum::<u64>() as f64 / adam.len() as f64
                };
                let epoch_ms = if adam.is_empty() {
                    0.0
                } else {
                    adam.iter().map(|r| r.wall_ms).sum::<f64>() / adam.len() as f64
                };
                let _ = write!(
                    s,
                    ",{:e},{},{},{},{:.3},{:.3},{}",
                    rep.final_loss,
                    rep.epochs_run(),
                    rep.total_backward(),
                    per_epoch,
                    epoch_ms,
                    sum.wall_secs,
                    sum.param_count
                );
            }
            Err(e) => {
                let _ = write!(s, ",{}", csv_field(&format!("error: {e}")));
                s.push_str(&",".repeat(channels + 7));
            }
        }
        match (r.flops, base_flops) {
            (Some(f), Some(b)) => {
                let _ = write!(s, ",{f},{:?}", f as f64 / b as f64);
            }
            (Some(f), None) => {
                let _ = write!(s, ",{f},");
            }
            _ => s.push_str(",,"),
        }
        s.push('\n');
    }
    s
}

