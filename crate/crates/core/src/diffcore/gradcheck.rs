use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, ParamStore};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
    /// Lower bound on the denominator of the relative error.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            samples: 100,
            seed: 0,
            floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compare reverse-mode gradients with central differences on a random
/// sample of parameter entries. `build` must construct the same scalar loss
/// every time it is called.
pub fn grad_check<F>(build: F, store: &mut ParamStore, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    if store.is_empty() {
        return invalid("gradient check on an empty parameter store");
    }
    if !(cfg.eps > 0.0) {
        return invalid("gradient check step must be positive");
    }
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, store)?;
        Ok(g.scalar(l))
    };

    store.zero_grad();
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    g.backward(loss, store)?;
    let analytic = store.grads().to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.samples.min(store.len());
    let mut report = GradCheckReport {
        checked: n,
        max_rel_error: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for k in sample(&mut rng, store.len(), n).into_iter() {
        let orig = store.values()[k];
        store.values_mut()[k] = orig + cfg.eps;
        let fp = eval(store)?;
        store.values_mut()[k] = orig - cfg.eps;
        let fm = eval(store)?;
        store.values_mut()[k] = orig;
        let numeric = (fp - fm) / (2.0 * cfg.eps);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
        if rel >= report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = k;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
