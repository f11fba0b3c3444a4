//! The three loss weighting schemes side by side.

use mrf_pinn::weighting::{dimensional_balance_weights, dynamic_weight_update, DimensionalSpec, GradNorms, LossWeights, Scheme};

fn main() -> mrf_pinn::Result<()> {
    println!("manual      {:?}", LossWeights::manual(1.0, 1000.0, 1.0, 1.0)?);
    println!("dimensional {:?}", dimensional_balance_weights(&DimensionalSpec::momentum(128.0, 1.0))?);

    let norms = GradNorms {
        pde: 4.0,
        bc: Some(0.01),
        ic: None,
        data: Some(0.5),
    };
    let mut w = LossWeights::ones(Scheme::Dynamic { alpha: 0.1, cadence: 1 });
    for step in 1..=60 {
        w = dynamic_weight_update(&norms, &w, 0.1);
        if step % 10 == 0 {
            println!("dynamic step {step:3}: bc {:8.3} data {:6.3}", w.bc, w.data);
        }
    }
    Ok(())
}
