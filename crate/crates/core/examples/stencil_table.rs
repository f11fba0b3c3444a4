//! Print the central-difference kernels for first and second derivatives
//! and the Taylor padding weights that go with them.

use mrf_pinn::stencil::{central_difference_kernel, format_kernel, virtual_node_weights, FitMethod, PaddingSpec};

fn main() -> mrf_pinn::Result<()> {
    for d in [1, 2] {
        for acc in [2, 4, 6, 8] {
            let k = central_difference_kernel(d, acc)?;
            println!("d{d} acc{acc}: {}", format_kernel(&k));
        }
    }

    let spec = PaddingSpec::for_accuracy(8);
    println!("\nvirtual nodes for acc 8 (degree {}, {} fit points):", spec.degree, spec.fit_points);
    for (m, row) in virtual_node_weights(&spec, FitMethod::default_for(&spec))?.iter().enumerate() {
        println!("  u(-{}) = {:?}", m + 1, row);
    }
    Ok(())
}
