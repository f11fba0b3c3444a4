//! Direct sparse solve of every linear benchmark, plus the discretisation
//! error of the manufactured case under refinement.

use mrf_pinn::fieldgrid::relative_l2_error;
use mrf_pinn::oracle::solve_linear_direct;
use mrf_pinn::problems::LinearPDEProblem;

fn main() -> mrf_pinn::Result<()> {
    for p in [LinearPDEProblem::elliptic(), LinearPDEProblem::parabolic(), LinearPDEProblem::hyperbolic()] {
        let grid = p.grid(32, 64)?;
        let u = solve_linear_direct(&p, &grid)?;
        println!("{:10} 32x64  max|u| {:.4}", p.name, u.max_abs());
    }

    let p = LinearPDEProblem::manufactured_sinexp();
    let exact = p.exact.clone().expect("manufactured problem");
    for (nh, nw) in [(9, 17), (17, 33), (33, 65)] {
        let grid = p.grid(nh, nw)?;
        let u = solve_linear_direct(&p, &grid)?;
        let e = relative_l2_error(&u, &exact.field(&grid), 0)?;
        println!("{:10} {nh}x{nw}  eps {e:.3e}", p.name);
    }
    Ok(())
}
