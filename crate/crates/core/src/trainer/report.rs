use std::fmt::Write as _;

use super::{Adam, LbfgsConfig, StepOutcome, TrainConfig, DIVERGENCE_LOSS};
use crate::fieldgrid::Field;
use crate::problems::Task;
use crate::weighting::{LossBreakdown, LossWeights, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Adam,
    Lbfgs,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Completed,
    Diverged { epoch: usize, loss: f64 },
}

/// One evaluated epoch. Adam rows carry the loss before that epoch's update,
/// L-BFGS rows the loss at the accepted point.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
    pub breakdown: LossBreakdown,
    pub weights: LossWeights,
    /// Relative L2 error per channel, on evaluation epochs only.
    pub eps: Option<Vec<f64>>,
    pub backward: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub problem: String,
    pub nh: usize,
    pub nw: usize,
    pub equations: usize,
    pub unknowns: usize,
    pub config: TrainConfig,
    pub outcome: Outcome,
    pub initial: EpochRecord,
    pub rows: Vec<EpochRecord>,
    /// Backward passes spent estimating the initial weights.
    pub setup_backward: u64,
    pub lbfgs_evaluations: usize,
    pub lbfgs_stop: Option<StepOutcome>,
    pub final_loss: f64,
    pub final_eps: Option<Vec<f64>>,
    pub final_weights: LossWeights,
    /// `correlations[branch][channel]` against the combined output.
    pub correlations: Vec<Vec<f64>>,
    pub prediction: Option<Field>,
    pub setup_secs: f64,
    pub adam_secs: f64,
    pub lbfgs_secs: f64,
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

impl TrainReport {
    pub(super) fn new(task: &Task, cfg: &TrainConfig, weights: LossWeights) -> Self {
        let grid = task.grid();
        let empty = EpochRecord {
            epoch: 0,
            phase: Phase::Init,
            loss: f64::NAN,
            breakdown: LossBreakdown::default(),
            weights,
            eps: None,
            backward: 0,
            wall_ms: 0.0,
        };
        Self {
            problem: task.name.clone(),
            nh: grid.nh(),
            nw: grid.nw(),
            equations: task.equations(),
            unknowns: task.unknowns(),
            config: cfg.clone(),
            outcome: Outcome::Completed,
            initial: empty,
            rows: Vec::new(),
            setup_backward: 0,
            lbfgs_evaluations: 0,
            lbfgs_stop: None,
            final_loss: f64::NAN,
            final_eps: None,
            final_weights: weights,
            correlations: Vec::new(),
            prediction: None,
            setup_secs: 0.0,
            adam_secs: 0.0,
            lbfgs_secs: 0.0,
        }
    }

    pub fn completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    pub fn epochs_run(&self) -> usize {
        self.rows.len()
    }

    pub fn phase_rows(&self, phase: Phase) -> impl Iterator<Item = &EpochRecord> {
        self.rows.iter().filter(move |r| r.phase == phase)
    }

    /// Loss at the end of the Adam phase: the first L-BFGS evaluation point.
    pub fn adam_final_loss(&self) -> Option<f64> {
        self.phase_rows(Phase::Adam).last().map(|r| r.loss)
    }

    pub fn total_backward(&self) -> u64 {
        self.setup_backward + self.rows.iter().map(|r| r.backward).sum::<u64>()
    }

    /// Last recorded error per channel.
    pub fn last_eps(&self) -> Option<&[f64]> {
        self.final_eps
            .as_deref()
            .or_else(|| self.rows.iter().rev().find_map(|r| r.eps.as_deref()))
    }

    /// One row per evaluated epoch, the initial evaluation first.
    pub fn to_csv(&self, with_time: bool) -> String {
        let mut s = String::from("epoch,phase,loss");
        for k in 0..self.equations {
            let _ = write!(s, ",pde_{k}");
        }
        s.push_str(",bc,ic,data,w_pde,w_bc,w_ic,w_data");
        for c in 0..self.unknowns {
            let _ = write!(s, ",eps_{c}");
        }
        s.push_str(",backward");
        if with_time {
            s.push_str(",wall_ms");
        }
        s.push('\n');
        for r in std::iter::once(&self.initial).chain(&self.rows) {
            let _ = write!(s, "{},{},{}", r.epoch, r.phase.as_str(), num(r.loss));
            for k in 0..self.equations {
                let v = r.breakdown.pde.get(k).copied().unwrap_or(0.0);
                let _ = write!(s, ",{}", num(v));
            }
            let b = &r.breakdown;
            let w = &r.weights;
            for v in [b.bc, b.ic, b.data, w.pde, w.bc, w.ic, w.data] {
                let _ = write!(s, ",{}", num(v));
            }
            for c in 0..self.unknowns {
                match &r.eps {
                    Some(e) => {
                        let _ = write!(s, ",{}", num(e[c]));
                    }
                    None => s.push(','),
                }
            }
            let _ = write!(s, ",{}", r.backward);
            if with_time {
                let _ = write!(s, ",{:.3}", r.wall_ms);
            }
            s.push('\n');
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "problem: {}", self.problem);
        let _ = writeln!(s, "grid: {}x{}", self.nh, self.nw);
        let _ = writeln!(s, "acc_order: {}", c.acc_order);
        let _ = writeln!(s, "seed: {}", c.seed);
        let _ = writeln!(s, "weights: {}", c.weights);
        let scheme = match self.final_weights.scheme {
            Scheme::Manual => "manual",
            Scheme::Dynamic { .. } => "dynamic",
            Scheme::Dimensional => "dimensional",
        };
        let w = &self.final_weights;
        let _ = writeln!(
            s,
            "final_weights: {scheme} pde={} bc={} ic={} data={}",
            num(w.pde),
            num(w.bc),
            num(w.ic),
            num(w.data)
        );
        let _ = writeln!(s, "adam: lr={} beta1={} beta2={} eps={:e}", c.lr, Adam::BETA1, Adam::BETA2, Adam::EPS);
        let lb = LbfgsConfig::default();
        let _ = writeln!(s, "lbfgs: history={} c1={} c2={}", c.history, lb.c1, lb.c2);
        let _ = writeln!(s, "divergence_threshold: {:e}", DIVERGENCE_LOSS);
        match self.outcome {
            Outcome::Completed => {
                let _ = writeln!(s, "outcome: completed");
            }
            Outcome::Diverged { epoch, loss } => {
                let _ = writeln!(s, "outcome: diverged at epoch {epoch} (loss {loss:e})");
            }
        }
        let adam = self.phase_rows(Phase::Adam).count();
        let lbfgs = self.phase_rows(Phase::Lbfgs).count();
        let _ = writeln!(s, "epochs: adam={adam} lbfgs={lbfgs}");
        if let Some(stop) = self.lbfgs_stop {
            let _ = writeln!(s, "lbfgs_stop: {stop:?}");
        }
        let _ = writeln!(s, "backward_passes: {}", self.total_backward());
        let _ = writeln!(s, "final_loss: {}", num(self.final_loss));
        if let Some(eps) = &self.final_eps {
            for (k, e) in eps.iter().enumerate() {
                let _ = writeln!(s, "eps_{k}: {}", num(*e));
            }
        }
        for (b, r) in self.correlations.iter().enumerate() {
            let vals: Vec<String> = r.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(s, "R_branch{b}: {}", vals.join(" "));
        }
        let _ = writeln!(
            s,
            "wall_secs: setup={:.3} adam={:.3} lbfgs={:.3}",
            self.setup_secs, self.adam_secs, self.lbfgs_secs
        );
        s
    }
}
