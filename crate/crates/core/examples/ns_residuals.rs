//! Swirl-flow residuals: a rigid rotation that solves the equations exactly
//! and a manufactured field whose residual shrinks with the grid.

use mrf_pinn::fieldgrid::Field;
use mrf_pinn::problems::ns::{NavierStokesProblem, P, W};
use mrf_pinn::problems::ns_residuals;
use mrf_pinn::stencil::PaddingSpec;

fn main() -> mrf_pinn::Result<()> {
    let base = NavierStokesProblem::swirl();
    let grid = base.grid(17, 49)?;
    let omega = 3.0;
    let x = Field::from_fn(grid, 4, |c, r, _| match c {
        W => omega * r,
        P => 0.5 * base.rho * omega * omega * r * r,
        _ => 0.0,
    });
    let spec = PaddingSpec::for_accuracy(8);
    let r = ns_residuals(&x.extract(0), &x.extract(1), &x.extract(2), &x.extract(3), &base, 8, &spec)?;
    println!("rigid rotation: {:?}", r.each_ref().map(|f| format!("{:.1e}", f.max_abs())));

    let prob = NavierStokesProblem::manufactured_swirl();
    let ms = prob.manufactured.clone().expect("manufactured problem");
    for (nh, nw) in [(9, 25), (17, 49), (33, 97)] {
        let grid = prob.grid(nh, nw)?;
        let x = ms.field(&grid);
        let r = ns_residuals(&x.extract(0), &x.extract(1), &x.extract(2), &x.extract(3), &prob, 4, &PaddingSpec::for_accuracy(4))?;
        println!("{}, {nh}x{nw}: {:?}", prob.name, r.each_ref().map(|f| format!("{:.2e}", f.max_abs())));
    }
    Ok(())
}
