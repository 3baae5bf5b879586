//! Iterations needed in the log, rate and time parameterisations.

use mpm::simulate::{run_basis_experiment, SimConfig};
use mpm::Basis;

fn main() -> mpm::Result<()> {
    let cfg = SimConfig { n_voxels: 100, seed: 1, ..Default::default() };
    let res = run_basis_experiment(&cfg, &[Basis::Log, Basis::Rate, Basis::Time], 5000, 1e-12, 1e-5)?;
    for (i, run) in res.runs.iter().enumerate() {
        println!("{:?}: median {} iterations to gain < 1e-5", run.basis, res.median_iters(i));
    }
    let (mutual, disagree) = res.agreement(1e-4);
    println!("{mutual} voxels converged in every basis, {disagree} disagree");
    Ok(())
}
