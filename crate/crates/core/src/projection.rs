//! Trilinear resampling between reconstruction and acquisition grids.
//!
//! `pull` samples a reconstruction-space field at acquisition voxel centres;
//! `push` is its exact adjoint. Acquisition voxels that fall outside the
//! reconstruction field of view are flagged missing and carry no weights.

use crate::error::{MpmError, Result};
use crate::linalg::{inverse4, mat4_mul, Mat4, ZERO4};
use crate::types::VolumeGrid;

// Sample coordinates this close to a lattice point (or the FOV edge) are snapped.
const SNAP: f64 = 1e-9;

/// Sparse trilinear operator from a source (reconstruction) grid to a
/// destination (acquisition) grid.
#[derive(Clone, Debug)]
pub struct Resampler {
    n_src: usize,
    /// Up to eight (source index, weight) pairs per destination voxel.
    weights: Vec<Vec<(usize, f64)>>,
    valid: Vec<bool>,
}

fn axis_weights(x: f64, dim: usize) -> Option<[(usize, f64); 2]> {
    let max = (dim - 1) as f64;
    let mut x = x;
    if x < -SNAP || x > max + SNAP {
        return None;
    }
    let r = x.round();
    if (x - r).abs() <= SNAP {
        x = r;
    }
    x = x.clamp(0.0, max);
    if dim == 1 {
        return Some([(0, 1.0), (0, 0.0)]);
    }
    let i0 = (x.floor() as usize).min(dim - 2);
    let f = x - i0 as f64;
    Some([(i0, 1.0 - f), (i0 + 1, f)])
}

impl Resampler {
    /// Operator sampling a field on `src` at the voxel centres of `dst`.
    pub fn new(src: &VolumeGrid, dst: &VolumeGrid) -> Result<Self> {
        src.validate()?;
        dst.validate()?;
        let inv = inverse4(&src.affine)
            .ok_or_else(|| MpmError::Domain("source affine is not invertible".into()))?;
        let m = mat4_mul(&inv, &dst.affine);
        let n_dst = dst.n_voxels();
        let mut weights = Vec::with_capacity(n_dst);
        let mut valid = Vec::with_capacity(n_dst);
        for d in 0..n_dst {
            let [i, j, k] = dst.coords(d);
            let p = [i as f64, j as f64, k as f64, 1.0];
            let c: [f64; 3] = std::array::from_fn(|r| (0..4).map(|q| m[r][q] * p[q]).sum());
            let ax = (0..3).map(|a| axis_weights(c[a], src.dims[a])).collect::<Option<Vec<_>>>();
            match ax {
                None => {
                    weights.push(Vec::new());
                    valid.push(false);
                }
                Some(ax) => {
                    let mut w = Vec::with_capacity(8);
                    for &(iz, wz) in &ax[2] {
                        for &(iy, wy) in &ax[1] {
                            for &(ix, wx) in &ax[0] {
                                let ww = wx * wy * wz;
                                if ww != 0.0 {
                                    w.push((src.index(ix, iy, iz), ww));
                                }
                            }
                        }
                    }
                    weights.push(w);
                    valid.push(true);
                }
            }
        }
        Ok(Self {
            n_src: src.n_voxels(),
            weights,
            valid,
        })
    }

    /// Destination voxels inside the source field of view.
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn n_src(&self) -> usize {
        self.n_src
    }

    pub fn n_dst(&self) -> usize {
        self.weights.len()
    }

    /// Sum of the weights of each destination row (1 inside the FOV).
    pub fn row_sums(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.iter().map(|(_, v)| v).sum()).collect()
    }

    /// Sample `field` (source grid) at every destination voxel; missing
    /// voxels get 0.
    pub fn pull(&self, field: &[f64]) -> Vec<f64> {
        assert_eq!(field.len(), self.n_src, "field size does not match source grid");
        self.weights
            .iter()
            .map(|w| w.iter().map(|&(s, v)| v * field[s]).sum())
            .collect()
    }

    /// Adjoint of [`Resampler::pull`].
    pub fn push(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.weights.len(), "values do not match destination grid");
        let mut out = vec![0.0; self.n_src];
        for (w, &u) in self.weights.iter().zip(values) {
            for &(s, v) in w {
                out[s] += v * u;
            }
        }
        out
    }

    /// Pull a stack of 4-vectors channel by channel.
    pub fn pull4(&self, field: &[[f64; 4]]) -> Vec<[f64; 4]> {
        assert_eq!(field.len(), self.n_src, "field size does not match source grid");
        self.weights
            .iter()
            .map(|w| {
                let mut o = [0.0; 4];
                for &(s, v) in w {
                    for k in 0..4 {
                        o[k] += v * field[s][k];
                    }
                }
                o
            })
            .collect()
    }

    /// Push a stack of 4-vectors channel by channel.
    pub fn push4(&self, values: &[[f64; 4]]) -> Vec<[f64; 4]> {
        assert_eq!(values.len(), self.weights.len(), "values do not match destination grid");
        let mut out = vec![[0.0; 4]; self.n_src];
        for (w, u) in self.weights.iter().zip(values) {
            for &(s, v) in w {
                for k in 0..4 {
                    out[s][k] += v * u[k];
                }
            }
        }
        out
    }

    /// Block-diagonal majoriser of `Ψᵀ H Ψ`: source block `n` receives
    /// `sum_m Ψ_mn (sum_n' Ψ_mn') H_m`.
    pub fn push_majorizer(&self, h: &[Mat4]) -> Vec<Mat4> {
        assert_eq!(h.len(), self.weights.len(), "blocks do not match destination grid");
        let mut out = vec![ZERO4; self.n_src];
        for (w, hm) in self.weights.iter().zip(h) {
            let row: f64 = w.iter().map(|(_, v)| v).sum();
            for &(s, v) in w {
                let c = v * row;
                for i in 0..4 {
                    for j in 0..4 {
                        out[s][i][j] += c * hm[i][j];
                    }
                }
            }
        }
        out
    }
}

/// Resample `field` from `src` onto `dst`; returns the samples and the
/// in-FOV flags.
pub fn pull(field: &[f64], src: &VolumeGrid, dst: &VolumeGrid) -> Result<(Vec<f64>, Vec<bool>)> {
    check_len(field.len(), src)?;
    let r = Resampler::new(src, dst)?;
    let v = r.pull(field);
    Ok((v, r.valid))
}

/// Adjoint of [`pull`]: send `values` living on `dst` back to `src`.
pub fn push(values: &[f64], dst: &VolumeGrid, src: &VolumeGrid) -> Result<Vec<f64>> {
    check_len(values.len(), dst)?;
    Ok(Resampler::new(src, dst)?.push(values))
}

/// Push per-voxel 4x4 Hessian blocks from acquisition to reconstruction space
/// as a block-diagonal majoriser.
pub fn majorized_hessian_push(h: &[Mat4], acq: &VolumeGrid, recon: &VolumeGrid) -> Result<Vec<Mat4>> {
    check_len(h.len(), acq)?;
    Ok(Resampler::new(recon, acq)?.push_majorizer(h))
}

fn check_len(n: usize, grid: &VolumeGrid) -> Result<()> {
    if n != grid.n_voxels() {
        return Err(MpmError::Config(format!(
            "field has {n} values, grid {:?} has {}",
            grid.dims,
            grid.n_voxels()
        )));
    }
    Ok(())
}
