//! Branch dilations, receptive fields, parameter counts and FLOP estimates
//! across resolutions.

use mrf_pinn::model::{dilation_for, receptive_field, MRFModel, ModelConfig, BRANCH_RATIOS};

fn main() -> mrf_pinn::Result<()> {
    for (h, w) in [(32, 64), (64, 128), (128, 256), (128, 1536)] {
        let branches: Vec<String> = BRANCH_RATIOS
            .iter()
            .map(|&k| {
                let d = dilation_for(h, w, k);
                format!("k{k}:d{d}/rf{}", receptive_field(d))
            })
            .collect();
        let model = MRFModel::new(ModelConfig::new(1, 1, 4), h, w, 0)?;
        println!(
            "{h:>4}x{w:<5} params {:6} flops {:>12}  {}",
            model.param_count(),
            model.flop_estimate(h, w),
            branches.join(" ")
        );
    }
    Ok(())
}
