//! Train the MRF network on the elliptic benchmark and compare with the
//! direct solve.
//!
//! `cargo run --release --example train_elliptic -- [nh] [nw] [adam] [lbfgs] [channels] [seed]`

use mrf_pinn::model::{MRFModel, ModelConfig};
use mrf_pinn::oracle::solve_linear_direct;
use mrf_pinn::problems::{ProblemKind, Task};
use mrf_pinn::trainer::{train, TrainConfig};

fn main() -> mrf_pinn::Result<()> {
    env_logger::init();
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let arg = |k: usize, d: usize| args.get(k).copied().unwrap_or(d);
    let (nh, nw) = (arg(0, 32), arg(1, 64));
    let cfg = TrainConfig {
        epochs_adam: arg(2, 2000),
        epochs_lbfgs: arg(3, 100),
        seed: arg(5, 0) as u64,
        ..TrainConfig::default()
    };

    let task = Task::with_default_padding("elliptic", nh, nw, cfg.acc_order)?;
    let ProblemKind::Linear(prob) = &task.kind else { unreachable!() };
    let reference = solve_linear_direct(prob, task.grid())?;

    let mc = ModelConfig::new(task.input.channels(), task.unknowns(), arg(4, 4));
    let mut model = MRFModel::new(mc, nh, nw, cfg.seed)?;
    println!("parameters: {}", model.param_count());

    let report = train(&task, &mut model, &cfg, Some(&reference))?;
    for r in report.rows.iter().filter(|r| r.eps.is_some()) {
        println!(
            "epoch {:5} {:5} loss {:.4e} eps {:.4e}",
            r.epoch,
            r.phase.as_str(),
            r.loss,
            r.eps.as_ref().unwrap()[0]
        );
    }
    print!("{}", report.summary());
    Ok(())
}
