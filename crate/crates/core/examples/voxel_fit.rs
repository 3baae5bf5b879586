//! Fit simulated single voxels with the proposed method, Gauss-Newton with
//! Armijo backtracking and Levenberg-Marquardt.

use mpm::optim::{fit_voxel_ml, MlOptions, Strategy, StrategyKind};
use mpm::signal::voxel_nll;
use mpm::simulate::{simulate_voxels, SimConfig};
use mpm::LogParams;

fn main() -> mpm::Result<()> {
    let voxels = simulate_voxels(&SimConfig { n_voxels: 5, seed: 3, ..Default::default() })?;
    let opts = MlOptions { max_iters: 500, tol: 1e-10, ..Default::default() };
    for (v, vox) in voxels.iter().enumerate() {
        print!("voxel {v}: true nll {:8.3}", voxel_nll(&vox.truth, &vox.data)?);
        for kind in [StrategyKind::Proposed, StrategyKind::GnArmijo, StrategyKind::Lm] {
            let (_, r) = fit_voxel_ml(&vox.data, &LogParams::default(), &Strategy::new(kind), &opts)?;
            print!("  {kind:?} {:8.3} ({} its)", r.objective_trace.last().unwrap(), r.iterations_used);
        }
        println!();
    }
    Ok(())
}
