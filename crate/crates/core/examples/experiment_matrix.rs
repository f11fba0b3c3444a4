//! A small experiment matrix over accuracy order and resolution, written to
//! a temporary directory.

use mrf_pinn::cliio::{matrix, matrix_csv, MatrixAxis, MatrixSpec, RunConfig};

fn main() -> mrf_pinn::Result<()> {
    let dir = std::env::temp_dir().join("mrf-pinn-matrix-example");
    let mut base = RunConfig::new("mms:sinexp")?;
    base.set("epochs_adam", "50")?;
    base.set("epochs_lbfgs", "5")?;
    base.set("output", dir.to_str().expect("utf-8 temp dir"))?;
    let axes = vec![MatrixAxis::parse("acc_order=4;8")?, MatrixAxis::parse("resolution=16x32;32x64")?];
    let spec = MatrixSpec::new(base, axes, 1)?;
    let results = matrix(&spec, true)?;
    print!("{}", matrix_csv(&spec, &results));
    println!("artifacts in {}", dir.display());
    Ok(())
}
