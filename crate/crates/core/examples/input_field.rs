//! Build the network input for each linear benchmark by filling boundary
//! values inward, and print a coarse view of it.

use mrf_pinn::problems::{ProblemKind, Task};

fn main() -> mrf_pinn::Result<()> {
    for name in ["elliptic", "parabolic", "hyperbolic"] {
        let task = Task::with_default_padding(name, 9, 17, 4)?;
        let ProblemKind::Linear(p) = &task.kind else { unreachable!() };
        println!("{name} ({:?}, fill {:?})", p.classification(), p.fill_direction());
        let g = task.grid();
        for i in 0..g.nh() {
            let row: Vec<String> = (0..g.nw()).step_by(2).map(|j| format!("{:6.2}", task.input.get(0, i, j))).collect();
            println!("  {}", row.join(""));
        }
    }
    Ok(())
}
