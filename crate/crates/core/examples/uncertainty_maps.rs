//! Posterior standard deviations of the log maps and log-normal moments of
//! R1 and T1.

use mpm::optim::{initial_maps, InitDefaults};
use mpm::regularization::fit_map_jtv;
use mpm::simulate::{simulate_phantom, PhantomConfig, CHANNELS};
use mpm::uncertainty::posterior_variances;
use mpm::FitConfig;

fn main() -> mpm::Result<()> {
    let ph = simulate_phantom(&PhantomConfig::new(20, 5, 20.0))?;
    let cfg = FitConfig::default();
    let init = initial_maps(&ph.contrasts, &ph.foreground_means(), &InitDefaults::default())?;
    let fit = fit_map_jtv(&ph.contrasts, &init, &cfg, Some(&ph.mask))?;
    let unc = posterior_variances(
        &ph.contrasts,
        &fit.maps,
        Some((&fit.weights, &cfg.lambda)),
        cfg.effective_loading(),
        Some(&ph.mask),
    )?;
    let edges = ph.edges();
    for (k, name) in CHANNELS.iter().enumerate() {
        let sd = unc.sd(k);
        let mean = |f: &dyn Fn(usize) -> bool| {
            let v: Vec<f64> = (0..sd.len()).filter(|&v| ph.mask[v] && f(v)).map(|v| sd[v]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        println!("{name:9} sd at edges {:.4}, elsewhere {:.4}", mean(&|v| edges[v]), mean(&|v| !edges[v]));
    }
    let centre = fit.maps.grid.index(10, 10, 10);
    let (e_r1, sd_r1) = unc.moments(&fit.maps, 1, 1.0);
    let (e_t1, sd_t1) = unc.moments(&fit.maps, 1, -1.0);
    println!(
        "centre voxel: R1 {:.4} +- {:.4} 1/s, T1 {:.4} +- {:.4} s",
        e_r1[centre], sd_r1[centre], e_t1[centre], sd_t1[centre]
    );
    Ok(())
}
