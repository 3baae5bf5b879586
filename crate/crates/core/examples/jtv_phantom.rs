//! Fit a noisy phantom voxel-wise and with joint total variation.

use mpm::optim::{fit_ml_volume, initial_maps, InitDefaults, MlOptions, Strategy};
use mpm::regularization::fit_map_jtv;
use mpm::simulate::{simulate_phantom, PhantomConfig, CHANNELS};
use mpm::FitConfig;

fn main() -> mpm::Result<()> {
    let ph = simulate_phantom(&PhantomConfig::new(24, 1, 20.0))?;
    let init = initial_maps(&ph.contrasts, &ph.foreground_means(), &InitDefaults::default())?;
    let ml = fit_ml_volume(&ph.contrasts, &init, &Strategy::default(), &MlOptions::default(), Some(&ph.mask))?;
    let jtv = fit_map_jtv(&ph.contrasts, &init, &FitConfig::default(), Some(&ph.mask))?;
    println!("objective per IRLS iteration: {:?}", jtv.report.outer_objective);
    let (a, b) = (ph.rmse(&ml.maps), ph.rmse(&jtv.maps));
    for (k, name) in CHANNELS.iter().enumerate() {
        println!("{name:9} rmse  ml {:.4}  jtv {:.4}", a[k], b[k]);
    }
    Ok(())
}
