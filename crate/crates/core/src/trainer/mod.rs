//! Full-batch training: an Adam phase followed by an L-BFGS fine-tune, with
//! per-epoch instrumentation.

mod adam;
mod lbfgs;
mod report;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use crate::diffcore::{Graph, NodeId, ParamStore};
use crate::error::{invalid, Error, Result};
use crate::fieldgrid::{correlation, relative_l2_error, Field};
use crate::model::{MRFModel, ModelOutput, Normalization};
use crate::problems::Task;
use crate::weighting::{
    dynamic_weight_update, loss_terms, total_loss_graph, GradNorms, LossBreakdown, LossTerms, LossWeights, Scheme,
    Term, WeightConfig,
};

pub use adam::Adam;
pub use lbfgs::{Lbfgs, LbfgsConfig, StepOutcome};
pub use report::{EpochRecord, Outcome, Phase, TrainReport};

/// Loss above which a run counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs_adam: usize,
    pub lr: f64,
    pub epochs_lbfgs: usize,
    pub history: usize,
    pub weights: WeightConfig,
    pub acc_order: usize,
    pub seed: u64,
    /// Epochs between evaluations of the error against the reference.
    pub eval_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_adam: 2000,
            lr: 1e-4,
            epochs_lbfgs: 100,
            history: 20,
            weights: WeightConfig::Manual([1.0, 1000.0, 1.0, 1.0]),
            acc_order: 8,
            seed: 0,
            eval_every: 100,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.history < 1 {
            return Err(Error::Config("L-BFGS history must be at least 1".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("evaluation cadence must be at least 1".into()));
        }
        self.weights.initial().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

struct Built {
    g: Graph,
    out: ModelOutput,
    terms: LossTerms,
}

fn build(task: &Task, model: &MRFModel) -> Result<Built> {
    let mut g = Graph::new();
    let out = model.forward_graph(&mut g, &task.input)?;
    let res = task.residual_graph(&mut g, out.u)?;
    let src = task.bc_source(&mut g, out.u)?;
    let terms = loss_terms(&mut g, out.u, res, src, &task.masks)?;
    Ok(Built { g, out, terms })
}

/// Weighted total loss of `task` on `g`, parameters read from `store`.
pub fn loss_graph(g: &mut Graph, task: &Task, model: &MRFModel, store: &ParamStore, weights: &LossWeights) -> Result<NodeId> {
    let out = model.forward_graph_with(g, &task.input, store)?;
    let res = task.residual_graph(g, out.u)?;
    let src = task.bc_source(g, out.u)?;
    let terms = loss_terms(g, out.u, res, src, &task.masks)?;
    total_loss_graph(g, &terms, weights)
}

struct Snapshot {
    loss: f64,
    breakdown: LossBreakdown,
    u: Vec<f64>,
}

impl Snapshot {
    fn of(task: &Task, b: &Built, total: NodeId) -> Self {
        Self {
            loss: b.g.scalar(total),
            breakdown: LossBreakdown::read(&b.g, &b.terms, &task.masks),
            u: b.g.value(b.out.u).to_vec(),
        }
    }
}

/// The terms that own a weight, PDE equations grouped.
fn weighted_terms(b: &mut Built) -> Result<Vec<(Term, NodeId)>> {
    let mut out = Vec::new();
    if !b.terms.pde.is_empty() {
        let parts: Vec<_> = b.terms.pde.iter().map(|&n| (n, 1.0)).collect();
        out.push((Term::Pde, b.g.weighted_sum(&parts)?));
    }
    for t in [Term::Bc, Term::Ic, Term::Data] {
        if let Some(n) = b.terms.node(t) {
            out.push((t, n));
        }
    }
    Ok(out)
}

/// Recompute dynamic weights from per-term gradient norms; one backward
/// pass per term.
fn dynamic_update(b: &mut Built, model: &mut MRFModel, prev: &LossWeights, alpha: f64) -> Result<LossWeights> {
    let mut norms = GradNorms::default();
    for (term, node) in weighted_terms(b)? {
        let store = model.store_mut();
        store.zero_grad();
        b.g.backward(node, store)?;
        let n = store.grad_norm();
        match term {
            Term::Pde => norms.pde = n,
            Term::Bc => norms.bc = Some(n),
            Term::Ic => norms.ic = Some(n),
            Term::Data => norms.data = Some(n),
        }
    }
    Ok(dynamic_weight_update(&norms, prev, alpha))
}

fn errors_against(task: &Task, u: &[f64], reference: Option<&Field>) -> Result<Option<Vec<f64>>> {
    let Some(r) = reference else { return Ok(None) };
    let pred = Field::from_data(*task.grid(), task.unknowns(), u.to_vec())?;
    (0..task.unknowns())
        .map(|c| relative_l2_error(&pred, r, c))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn diverged(loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_LOSS
}

fn write_checkpoint(cfg: &TrainConfig, model: &MRFModel, name: &str) -> Result<()> {
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        model.store().write_checkpoint(BufWriter::new(File::create(dir.join(name))?))?;
    }
    Ok(())
}

/// Train `model` on `task`.
///
/// Divergence is not an error: the report comes back with
/// [`Outcome::Diverged`] and the rows recorded so far. `reference` falls
/// back to the task's own exact solution when `None`.
pub fn train(task: &Task, model: &mut MRFModel, cfg: &TrainConfig, reference: Option<&Field>) -> Result<TrainReport> {
    cfg.validate()?;
    if cfg.acc_order != task.disc.acc_order {
        return invalid(format!(
            "config asks for accuracy order {} but the task was built with {}",
            cfg.acc_order, task.disc.acc_order
        ));
    }
    let grid = *task.grid();
    if model.spatial() != (grid.nh(), grid.nw()) {
        return invalid("model and task grids differ");
    }
    let reference = reference.or(task.reference.as_ref());
    if let Some(r) = reference {
        if !r.grid().same_shape(&grid) || r.channels() != task.unknowns() {
            return invalid("reference does not match the task grid");
        }
    }

    let t0 = Instant::now();
    model.set_normalization(Normalization::fit(&task.input))?;
    let mut weights = cfg.weights.initial()?;
    let mut report = TrainReport::new(task, cfg, weights);

    let mut b = match build(task, model) {
        Ok(b) => b,
        Err(Error::Numerical(msg)) => {
            log::error!("initial evaluation failed: {msg}");
            report.outcome = Outcome::Diverged { epoch: 0, loss: f64::NAN };
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    if let Scheme::Dynamic { alpha, .. } = weights.scheme {
        // Initial estimate; not charged to any epoch.
        let passes = model.store().backward_passes();
        weights = dynamic_update(&mut b, model, &weights, alpha)?;
        report.setup_backward = model.store().backward_passes() - passes;
    }
    let total = total_loss_graph(&mut b.g, &b.terms, &weights)?;
    let snap = Snapshot::of(task, &b, total);
    report.initial = EpochRecord {
        epoch: 0,
        phase: Phase::Init,
        loss: snap.loss,
        breakdown: snap.breakdown.clone(),
        weights,
        eps: errors_against(task, &snap.u, reference)?,
        backward: 0,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
    };
    report.setup_secs = t0.elapsed().as_secs_f64();
    if diverged(snap.loss) {
        report.outcome = Outcome::Diverged { epoch: 0, loss: snap.loss };
        return Ok(report);
    }

    // Adam
    let t_adam = Instant::now();
    let mut adam = Adam::new(model.store().len(), cfg.lr);
    for e in 0..cfg.epochs_adam {
        let te = Instant::now();
        let before = model.store().backward_passes();
        let mut b = match build(task, model) {
            Ok(b) => b,
            Err(Error::Numerical(msg)) => {
                log::error!("epoch {}: {msg}", e + 1);
                report.outcome = Outcome::Diverged { epoch: e + 1, loss: f64::NAN };
                break;
            }
            Err(err) => return Err(err),
        };
        if let Scheme::Dynamic { alpha, cadence } = weights.scheme {
            if e % cadence == 0 {
                weights = dynamic_update(&mut b, model, &weights, alpha)?;
            }
        }
        let total = total_loss_graph(&mut b.g, &b.terms, &weights)?;
        let snap = Snapshot::of(task, &b, total);
        if diverged(snap.loss) {
            log::error!("epoch {}: loss {:e}", e + 1, snap.loss);
            report.outcome = Outcome::Diverged { epoch: e + 1, loss: snap.loss };
            break;
        }
        let store = model.store_mut();
        store.zero_grad();
        b.g.backward(total, store)?;
        let grads = store.grads().to_vec();
        adam.step(store.values_mut(), &grads);

        let last = e + 1 == cfg.epochs_adam;
        let eps = if e % cfg.eval_every == 0 || last {
            errors_against(task, &snap.u, reference)?
        } else {
            None
        };
        report.rows.push(EpochRecord {
            epoch: e + 1,
            phase: Phase::Adam,
            loss: snap.loss,
            breakdown: snap.breakdown,
            weights,
            eps,
            backward: model.store().backward_passes() - before,
            wall_ms: te.elapsed().as_secs_f64() * 1e3,
        });
    }
    report.adam_secs = t_adam.elapsed().as_secs_f64();
    if report.outcome != Outcome::Completed {
        return Ok(report);
    }
    write_checkpoint(cfg, model, "adam.mrfw")?;

    // L-BFGS, weights frozen
    let t_lbfgs = Instant::now();
    if cfg.epochs_lbfgs > 0 {
        let adam_params = model.store().values().to_vec();
        let mut x = adam_params.clone();
        let mut opt = Lbfgs::new(LbfgsConfig {
            history: cfg.history,
            ..LbfgsConfig::default()
        });
        let mut last: Option<Snapshot> = None;
        for it in 0..cfg.epochs_lbfgs {
            let te = Instant::now();
            let before = model.store().backward_passes();
            let outcome = {
                let mut obj = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
                    model.store_mut().set_values(p);
                    let mut b = build(task, model)?;
                    let total = total_loss_graph(&mut b.g, &b.terms, &weights)?;
                    let snap = Snapshot::of(task, &b, total);
                    if !snap.loss.is_finite() {
                        return Ok((snap.loss, Vec::new()));
                    }
                    let store = model.store_mut();
                    store.zero_grad();
                    b.g.backward(total, store)?;
                    let loss = snap.loss;
                    last = Some(snap);
                    Ok((loss, store.grads().to_vec()))
                };
                opt.step(&mut x, &mut obj)
            };
            match outcome {
                StepOutcome::Accepted => {
                    let snap = last.take().expect("accepted point was evaluated");
                    let final_it = it + 1 == cfg.epochs_lbfgs;
                    let eps = if it % cfg.eval_every == 0 || final_it {
                        errors_against(task, &snap.u, reference)?
                    } else {
                        None
                    };
                    report.rows.push(EpochRecord {
                        epoch: cfg.epochs_adam + it + 1,
                        phase: Phase::Lbfgs,
                        loss: snap.loss,
                        breakdown: snap.breakdown,
                        weights,
                        eps,
                        backward: model.store().backward_passes() - before,
                        wall_ms: te.elapsed().as_secs_f64() * 1e3,
                    });
                }
                StepOutcome::Converged => {
                    report.lbfgs_stop = Some(StepOutcome::Converged);
                    break;
                }
                StepOutcome::LineSearchFailed => {
                    log::info!("L-BFGS line search failed after {} accepted steps", opt.accepted);
                    report.lbfgs_stop = Some(StepOutcome::LineSearchFailed);
                    break;
                }
                StepOutcome::NonFinite => {
                    log::warn!("non-finite loss during L-BFGS; keeping the Adam parameters");
                    report.lbfgs_stop = Some(StepOutcome::NonFinite);
                    report.rows.retain(|r| r.phase != Phase::Lbfgs);
                    x.copy_from_slice(&adam_params);
                    break;
                }
            }
        }
        model.store_mut().set_values(&x);
        report.lbfgs_evaluations = opt.evaluations;
    }
    report.lbfgs_secs = t_lbfgs.elapsed().as_secs_f64();
    write_checkpoint(cfg, model, "final.mrfw")?;

    // Final evaluation
    let mut b = build(task, model)?;
    let total = total_loss_graph(&mut b.g, &b.terms, &weights)?;
    let snap = Snapshot::of(task, &b, total);
    let u = Field::from_data(grid, task.unknowns(), snap.u.clone())?;
    let mut corr = Vec::with_capacity(b.out.branches.len());
    for &node in &b.out.branches {
        let bf = Field::from_data(grid, task.unknowns(), b.g.value(node).to_vec())?;
        corr.push(
            (0..task.unknowns())
                .map(|c| correlation(&bf, &u, c).unwrap_or(0.0))
                .collect(),
        );
    }
    report.final_loss = snap.loss;
    report.final_eps = errors_against(task, &snap.u, reference)?;
    report.correlations = corr;
    report.final_weights = weights;
    report.prediction = Some(u);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn setup(name: &str, nh: usize, nw: usize) -> (Task, MRFModel) {
        let task = Task::with_default_padding(name, nh, nw, 4).unwrap();
        let mc = ModelConfig::new(task.input.channels(), task.unknowns(), 2);
        let model = MRFModel::new(mc, nh, nw, 0).unwrap();
        (task, model)
    }

    fn cfg(adam: usize, lbfgs: usize, weights: WeightConfig) -> TrainConfig {
        TrainConfig {
            epochs_adam: adam,
            epochs_lbfgs: lbfgs,
            weights,
            acc_order: 4,
            eval_every: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_leaves_seed_parameters() {
        let (task, mut model) = setup("elliptic", 8, 16);
        let before = model.store().values().to_vec();
        let r = train(&task, &mut model, &cfg(0, 0, WeightConfig::Manual([1.0, 1000.0, 1.0, 1.0])), None).unwrap();
        assert!(r.rows.is_empty());
        assert!(r.initial.loss.is_finite());
        assert_eq!(model.store().values(), before.as_slice());
    }

    #[test]
    fn backward_counts_follow_the_scheme() {
        let (task, mut model) = setup("elliptic", 8, 16);
        let c = cfg(6, 0, WeightConfig::Manual([1.0, 1000.0, 1.0, 1.0]));
        let r = train(&task, &mut model, &c, None).unwrap();
        assert!(r.rows.iter().all(|row| row.backward == 1));

        let (task, mut model) = setup("elliptic", 8, 16);
        let c = cfg(6, 0, WeightConfig::Dynamic { alpha: 0.1, cadence: 3 });
        let r = train(&task, &mut model, &c, None).unwrap();
        let counts: Vec<u64> = r.rows.iter().map(|row| row.backward).collect();
        // PDE and BC terms: l = 2
        assert_eq!(counts, vec![3, 1, 1, 3, 1, 1]);
        assert_eq!(r.setup_backward, 2);
    }

    #[test]
    fn lbfgs_does_not_raise_the_loss() {
        let (task, mut model) = setup("elliptic", 8, 16);
        let r = train(&task, &mut model, &cfg(20, 15, WeightConfig::Manual([1.0, 1000.0, 1.0, 1.0])), None).unwrap();
        assert!(r.completed());
        let mut prev = f64::INFINITY;
        for row in r.phase_rows(Phase::Lbfgs) {
            assert!(row.loss <= prev);
            prev = row.loss;
        }
        assert!(r.final_loss <= r.adam_final_loss().unwrap());
    }

    #[test]
    fn runs_are_reproducible() {
        let c = cfg(10, 5, WeightConfig::Dynamic { alpha: 0.1, cadence: 2 });
        let (task, mut m1) = setup("mms:sinexp", 8, 16);
        let a = train(&task, &mut m1, &c, None).unwrap();
        let (_, mut m2) = setup("mms:sinexp", 8, 16);
        let b = train(&task, &mut m2, &c, None).unwrap();
        assert_eq!(a.to_csv(false), b.to_csv(false));
        assert!(a.rows.iter().any(|r| r.eps.is_some()));
    }

    #[test]
    fn huge_loss_is_reported_as_divergence() {
        let (task, mut model) = setup("elliptic", 8, 16);
        let r = train(&task, &mut model, &cfg(5, 0, WeightConfig::Manual([1e14, 1.0, 1.0, 1.0])), None).unwrap();
        assert!(matches!(r.outcome, Outcome::Diverged { epoch: 0, .. }));
        assert!(r.rows.is_empty());
    }

    #[test]
    fn mismatched_accuracy_is_rejected() {
        let (task, mut model) = setup("elliptic", 8, 16);
        let mut c = cfg(1, 0, WeightConfig::Manual([1.0, 1.0, 1.0, 1.0]));
        c.acc_order = 8;
        assert!(train(&task, &mut model, &c, None).is_err());
        c.acc_order = 4;
        c.lr = 0.0;
        assert!(matches!(train(&task, &mut model, &c, None), Err(Error::Config(_))));
    }

    #[test]
    fn csv_has_one_row_per_epoch_plus_initial() {
        let (task, mut model) = setup("elliptic", 8, 16);
        let r = train(&task, &mut model, &cfg(4, 2, WeightConfig::Manual([1.0, 1000.0, 1.0, 1.0])), None).unwrap();
        let csv = r.to_csv(true);
        assert_eq!(csv.lines().count(), 1 + 1 + r.rows.len());
        assert!(csv.lines().next().unwrap().ends_with("backward,wall_ms"));
        assert!(r.summary().contains("outcome: completed"));
    }
}
