//! Estimate the noise variance and mean foreground intensity of each echo
//! with a two-class Rician mixture.

use mpm::noise::{estimate_noise, pool_variances};
use mpm::simulate::{simulate_phantom, PhantomConfig};

fn main() -> mpm::Result<()> {
    let ph = simulate_phantom(&PhantomConfig::new(24, 4, 20.0))?;
    println!("true noise variance {:.3}", ph.sigma2);
    for (k, c) in ph.contrasts.iter().enumerate() {
        let mut vars = Vec::new();
        for (e, vol) in c.volumes.iter().enumerate().take(3) {
            let mag: Vec<f64> = vol.iter().map(|x| x.abs()).collect();
            let est = estimate_noise(&mag)?;
            println!(
                "contrast {k} echo {e}: sigma2 {:.3} foreground mean {:.1} ({:?})",
                est.sigma2_bg, est.mu_fg, est.model
            );
            vars.push(est.sigma2_bg);
        }
        println!("contrast {k}: pooled {:.3}", pool_variances(&vars)?);
    }
    Ok(())
}
