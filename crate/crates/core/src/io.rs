//! Raw volumes with JSON sidecars, datasets, manifests and atomic writes.
//!
//! A volume `<name>` is stored as `<name>.raw`, little-endian IEEE-754
//! values in x-fastest order, and `<name>.json`:
//!
//! ```json
//! { "dims": [nx, ny, nz], "voxel_size": [1.0, 1.0, 1.0],
//!   "affine": [16 values, row-major], "dtype": "f64",
//!   "frames": 8,
//!   "protocol": { "flip_deg": 6.0, "tr_s": 0.025, "te_s": [...],
//!                 "mt": false, "sigma2": 1.0 } }
//! ```
//!
//! `frames` (default 1) stacks several volumes of the same grid, for
//! example the echoes of one contrast; `protocol` is optional.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MpmError, Result};
use crate::types::{Contrast, EchoSpec, VolumeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Acquisition parameters of a multi-echo contrast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub flip_deg: f64,
    pub tr_s: f64,
    pub te_s: Vec<f64>,
    #[serde(default)]
    pub mt: bool,
    /// Noise variance; estimated from the data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub affine: Vec<f64>,
    pub dtype: Dtype,
    #[serde(default = "one")]
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
}

fn one() -> usize {
    1
}

/// One or more volumes sharing a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub grid: VolumeGrid,
    pub frames: Vec<Vec<f64>>,
    pub protocol: Option<Protocol>,
}

impl Volume {
    pub fn single(grid: VolumeGrid, data: Vec<f64>) -> Self {
        Self {
            grid,
            frames: vec![data],
            protocol: None,
        }
    }
}

/// `<stem>.json` and `<stem>.raw` for a path with or without extension.
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let add = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (add(".json"), add(".raw"))
}

/// Write `bytes` to a temporary file next to `path`, then rename it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| MpmError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| MpmError::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| MpmError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| MpmError::io(&tmp, e))?;
    f.sync_all().map_err(|e| MpmError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| MpmError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| MpmError::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

fn affine_from(v: &[f64]) -> Result<[[f64; 4]; 4]> {
    if v.len() != 16 {
        return Err(MpmError::Format(format!("affine needs 16 values, found {}", v.len())));
    }
    Ok(std::array::from_fn(|i| std::array::from_fn(|j| v[4 * i + j])))
}

pub fn write_volume(path: &Path, vol: &Volume, dtype: Dtype) -> Result<()> {
    let n = vol.grid.n_voxels();
    if vol.frames.is_empty() {
        return Err(MpmError::Format("volume has no frames".into()));
    }
    let mut bytes = Vec::with_capacity(n * vol.frames.len() * dtype.bytes());
    for f in &vol.frames {
        if f.len() != n {
            return Err(MpmError::Format(format!("frame has {} values, grid has {n}", f.len())));
        }
        for &v in f {
            match dtype {
                Dtype::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    let side = Sidecar {
        dims: vol.grid.dims,
        voxel_size: vol.grid.voxel_size,
        affine: vol.grid.affine.iter().flatten().copied().collect(),
        dtype,
        frames: vol.frames.len(),
        protocol: vol.protocol.clone(),
    };
    let (json, raw) = volume_paths(path);
    write_atomic(&raw, &bytes)?;
    write_json(&json, &side)
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let (json, raw) = volume_paths(path);
    let side: Sidecar = read_json(&json)?;
    let grid = VolumeGrid::with_affine(side.dims, side.voxel_size, affine_from(&side.affine)?)
        .map_err(|e| MpmError::Format(format!("{}: {e}", json.display())))?;
    if side.frames == 0 {
        return Err(MpmError::Format(format!("{}: zero frames", json.display())));
    }
    let bytes = fs::read(&raw).map_err(|e| MpmError::io(&raw, e))?;
    let n = grid.n_voxels();
    let expected = n * side.frames * side.dtype.bytes();
    if bytes.len() != expected {
        return Err(MpmError::Format(format!(
            "{}: expected {expected} bytes ({} x {} frames x {} bytes), found {}",
            raw.display(),
            n,
            side.frames,
            side.dtype.bytes(),
            bytes.len()
        )));
    }
    let values: Vec<f64> = match side.dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Ok(Volume {
        grid,
        frames: values.chunks(n).map(<[f64]>::to_vec).collect(),
        protocol: side.protocol,
    })
}

/// Turn a multi-echo volume with a protocol into a contrast. `sigma2` is
/// used when the protocol does not carry a noise variance.
pub fn contrast_from_volume(vol: Volume, sigma2: Option<f64>) -> Result<Contrast> {
    let p = vol
        .protocol
        .ok_or_else(|| MpmError::Format("volume has no protocol block".into()))?;
    if p.te_s.len() != vol.frames.len() {
        return Err(MpmError::Format(format!(
            "protocol lists {} echo times for {} frames",
            p.te_s.len(),
            vol.frames.len()
        )));
    }
    let s2 = p
        .sigma2
        .or(sigma2)
        .ok_or_else(|| MpmError::Config("no noise variance available".into()))?;
    let echoes = p
        .te_s
        .iter()
        .map(|&te| EchoSpec {
            flip_angle: p.flip_deg.to_radians(),
            tr: p.tr_s,
            te,
            sigma2: s2,
            has_mt_pulse: p.mt,
        })
        .collect();
    Contrast::new(echoes, vol.frames, vol.grid)
}

/// Volume holding the echoes of a contrast, with its protocol.
pub fn volume_from_contrast(c: &Contrast, with_sigma2: bool) -> Volume {
    let e = &c.echoes[0];
    Volume {
        grid: c.grid.clone(),
        frames: c.volumes.clone(),
        protocol: Some(Protocol {
            flip_deg: e.flip_angle.to_degrees(),
            tr_s: e.tr,
            te_s: c.echoes.iter().map(|e| e.te).collect(),
            mt: e.has_mt_pulse,
            sigma2: with_sigma2.then_some(e.sigma2),
        }),
    }
}

/// Dataset description: contrast volumes and an optional mask, with paths
/// relative to the dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub contrasts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

pub struct LoadedDataset {
    pub volumes: Vec<Volume>,
    pub mask: Option<Vec<bool>>,
}

pub fn read_dataset(path: &Path) -> Result<LoadedDataset> {
    let ds: Dataset = read_json(path)?;
    if ds.contrasts.is_empty() {
        return Err(MpmError::Format(format!("{}: no contrasts listed", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let volumes = ds
        .contrasts
        .iter()
        .map(|c| read_volume(&base.join(c)))
        .collect::<Result<Vec<_>>>()?;
    let mask = match &ds.mask {
        Some(m) => {
            let v = read_volume(&base.join(m))?;
            if v.grid.dims != volumes[0].grid.dims {
                return Err(MpmError::Format(format!(
                    "mask dims {:?} differ from contrast dims {:?}",
                    v.grid.dims, volumes[0].grid.dims
                )));
            }
            Some(v.frames[0].iter().map(|&x| x > 0.5).collect())
        }
        None => None,
    };
    Ok(LoadedDataset { volumes, mask })
}

/// Provenance of an experiment: enough to rerun it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: T,
}

impl<T> Manifest<T> {
    pub fn new(command: &str, config: T) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> VolumeGrid {
        let aff = [[0.0, 1.5, 0.0, 3.0], [1.0, 0.0, 0.0, -2.0], [0.0, 0.0, 2.0, 1.0], [0.0, 0.0, 0.0, 1.0]];
        VolumeGrid::with_affine([3, 4, 2], [1.0, 1.5, 2.0], aff).unwrap()
    }

    #[test]
    fn f64_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = grid();
        let vol = Volume {
            frames: (0..3).map(|_| (0..g.n_voxels()).map(|_| rng.gen::<f64>() * 1e3 - 5.0).collect()).collect(),
            grid: g,
            protocol: Some(Protocol {
                flip_deg: 6.0,
                tr_s: 0.025,
                te_s: vec![0.002, 0.004, 0.006],
                mt: true,
                sigma2: None,
            }),
        };
        let p = dir.path().join("sub/vol");
        write_volume(&p, &vol, Dtype::F64).unwrap();
        let back = read_volume(&dir.path().join("sub/vol.json")).unwrap();
        assert_eq!(back, vol);
        for (a, b) in back.frames[0].iter().zip(&vol.frames[0]) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn f32_round_trip_quantises() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid();
        let data: Vec<f64> = (0..g.n_voxels()).map(|i| i as f64 / 7.0).collect();
        let p = dir.path().join("v.raw");
        write_volume(&p, &Volume::single(g, data.clone()), Dtype::F32).unwrap();
        let back = read_volume(&p).unwrap();
        for (a, b) in back.frames[0].iter().zip(&data) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn size_mismatch_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let g = VolumeGrid::new([2, 2, 2], [1.0; 3]);
        let p = dir.path().join("v");
        write_volume(&p, &Volume::single(g, vec![1.0; 8]), Dtype::F64).unwrap();
        fs::write(dir.path().join("v.raw"), vec![0u8; 7 * 8]).unwrap();
        match read_volume(&p) {
            Err(MpmError::Format(m)) => assert!(m.contains("expected 64 bytes") && m.contains("found 56"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contrast_conversion() {
        let g = VolumeGrid::new([2, 1, 1], [1.0; 3]);
        let mut vol = Volume::single(g, vec![3.0, 4.0]);
        assert!(contrast_from_volume(vol.clone(), Some(1.0)).is_err());
        vol.protocol = Some(Protocol {
            flip_deg: 20.0,
            tr_s: 0.02,
            te_s: vec![0.003],
            mt: false,
            sigma2: None,
        });
        assert!(contrast_from_volume(vol.clone(), None).is_err());
        let c = contrast_from_volume(vol, Some(2.0)).unwrap();
        assert_eq!(c.echoes[0].sigma2, 2.0);
        assert!((c.echoes[0].flip_angle - 20f64.to_radians()).abs() < 1e-15);
        let back = volume_from_contrast(&c, true);
        assert_eq!(back.protocol.unwrap().sigma2, Some(2.0));
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"x\n").unwrap();
        write_atomic(&p, b"y\n").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"y\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
