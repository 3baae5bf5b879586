//! Write a simulated contrast as a raw volume with a JSON sidecar, read it
//! back and list it in a dataset file.

use mpm::io::{contrast_from_volume, read_dataset, volume_from_contrast, write_json, write_volume, Dataset, Dtype};
use mpm::simulate::{simulate_phantom, PhantomConfig};

fn main() -> mpm::Result<()> {
    let dir = std::env::temp_dir().join("mpm_volume_io");
    let ph = simulate_phantom(&PhantomConfig::new(8, 7, 30.0))?;
    write_volume(&dir.join("pdw"), &volume_from_contrast(&ph.contrasts[0], true), Dtype::F32)?;
    write_json(&dir.join("data.json"), &Dataset { contrasts: vec!["pdw".into()], mask: None })?;

    let ds = read_dataset(&dir.join("data.json"))?;
    let c = contrast_from_volume(ds.volumes[0].clone(), None)?;
    let diff = c.volumes[0]
        .iter()
        .zip(&ph.contrasts[0].volumes[0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("{} echoes on {:?}, largest f32 round-off {diff:.2e}", c.echoes.len(), c.grid.dims);
    println!("files in {}", dir.display());
    Ok(())
}
