//! Compare reverse-mode gradients of the full elliptic loss with central
//! differences.

use mrf_pinn::diffcore::{grad_check, GradCheckConfig};
use mrf_pinn::model::{MRFModel, ModelConfig, Normalization};
use mrf_pinn::problems::Task;
use mrf_pinn::trainer::loss_graph;
use mrf_pinn::weighting::LossWeights;

fn main() -> mrf_pinn::Result<()> {
    let task = Task::with_default_padding("elliptic", 16, 32, 8)?;
    let mut model = MRFModel::new(ModelConfig::new(1, 1, 4), 16, 32, 0)?;
    model.set_normalization(Normalization::fit(&task.input))?;
    let weights = LossWeights::manual(1.0, 1000.0, 1.0, 1.0)?;
    let mut store = model.store().clone();
    let rep = grad_check(|g, s| loss_graph(g, &task, &model, s, &weights), &mut store, GradCheckConfig::default())?;
    println!("{rep:#?}");
    Ok(())
}
