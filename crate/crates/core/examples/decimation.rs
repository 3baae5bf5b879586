//! Error of ML and JTV fits as echoes are removed.

use mpm::simulate::{rmse_csv, run_decimation_experiment, DecimationConfig, PhantomConfig};

fn main() -> mpm::Result<()> {
    let rows = run_decimation_experiment(&DecimationConfig::new(PhantomConfig::new(20, 1, 20.0)))?;
    print!("{}", rmse_csv(&rows));
    Ok(())
}
