//! Evaluate the multi-echo SPGR signal and its derivatives for white matter.

use mpm::signal::{spgr_derivs, spgr_signal};
use mpm::{EchoSpec, LogParams, NaturalParams};

fn main() -> mpm::Result<()> {
    let wm = LogParams::from_natural(NaturalParams { a: 700.0, r1: 1.0, r2: 20.0, mt: 0.018 })?;
    for (name, flip, mt) in [("PDw", 6.0f64, false), ("T1w", 21.0, false), ("MTw", 6.0, true)] {
        println!("{name}");
        for e in 0..4 {
            let echo = EchoSpec {
                flip_angle: flip.to_radians(),
                tr: 0.025,
                te: 0.0023 * (e + 1) as f64,
                sigma2: 1.0,
                has_mt_pulse: mt,
            };
            let s = spgr_signal(&wm, &echo, 1.0, 1.0)?;
            let d = spgr_derivs(&wm, &echo, 1.0, 1.0)?;
            println!("  te {:.4} s  signal {s:8.3}  grad {:?}", echo.te, d.grad.map(|g| (g * 1e3).round() / 1e3));
        }
    }
    Ok(())
}
