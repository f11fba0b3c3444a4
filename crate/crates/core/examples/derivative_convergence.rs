//! Differentiate sin(2 pi x) on refined lines and report the observed order,
//! away from the boundary and over the whole line. The quadratic padding
//! caps the second at order 2.

use std::f64::consts::PI;

use mrf_pinn::fieldgrid::{Axis, Field, Grid2D};
use mrf_pinn::stencil::{derivative, PaddingSpec};

fn max_error(n: usize, acc: usize) -> mrf_pinn::Result<(f64, f64)> {
    let grid = Grid2D::cartesian(n, 3, 1.0, 1.0)?;
    let f = Field::from_fn(grid, 1, |_, x, _| (2.0 * PI * x).sin());
    let d = derivative(&f, Axis::First, 1, acc, &PaddingSpec::for_accuracy(acc))?;
    let err = |i: usize| (d.get(0, i, 1) - 2.0 * PI * (2.0 * PI * grid.x1(i)).cos()).abs();
    let half = acc / 2;
    Ok(((half..n - half).map(err).fold(0.0, f64::max), (0..n).map(err).fold(0.0, f64::max)))
}

fn main() -> mrf_pinn::Result<()> {
    println!("{:>4} {:>6} {:>12} {:>6} {:>12} {:>6}", "acc", "nodes", "interior", "order", "all", "order");
    for acc in [2, 4, 6, 8] {
        let mut prev: Option<(usize, (f64, f64))> = None;
        for n in [17, 33, 65, 129] {
            let e = max_error(n, acc)?;
            let rate = |a: f64, b: f64, m: usize| (a / b).ln() / ((n - 1) as f64 / (m - 1) as f64).ln();
            let (o1, o2) = match prev {
                Some((m, p)) => (format!("{:.2}", rate(p.0, e.0, m)), format!("{:.2}", rate(p.1, e.1, m))),
                None => (String::new(), String::new()),
            };
            println!("{acc:>4} {n:>6} {:>12.3e} {o1:>6} {:>12.3e} {o2:>6}", e.0, e.1);
            prev = Some((n, e));
        }
    }
    Ok(())
}
