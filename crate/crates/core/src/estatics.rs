//! Log-linear ESTATICS baseline: per-contrast log intercepts and one shared
//! R2* decay, fitted by linear least squares on log intensities.

use rayon::prelude::*;

use crate::error::{MpmError, Result};
use crate::linalg::solve_spd;
use crate::types::Contrast;

/// Smallest R2* reported when the fitted decay is not positive.
pub const R2_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LoglinFit {
    /// One field of log TE=0 intensities per contrast.
    pub intercepts: Vec<Vec<f64>>,
    pub r2_log: Vec<f64>,
    /// Voxels with a nonpositive intensity (not fitted, left at 0).
    pub masked: Vec<bool>,
    /// Voxels whose fitted decay was clamped to `R2_FLOOR`.
    pub clamped: Vec<bool>,
}

/// Exact solution of `min sum_{c,e} (log x_ce - b_c + r2 te_ce)^2` for one voxel.
/// Returns `(b, r2)` with `r2` unclamped.
pub fn loglin_voxel(tes: &[Vec<f64>], logs: &[Vec<f64>]) -> Option<(Vec<f64>, f64)> {
    let c = tes.len();
    let n = c + 1;
    // unknowns (b_0..b_{C-1}, r2); row for echo e of contrast c: e_c - te * e_C
    let mut a = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (k, (t, y)) in tes.iter().zip(logs).enumerate() {
        for (&te, &ly) in t.iter().zip(y) {
            a[k * n + k] += 1.0;
            a[k * n + c] -= te;
            a[c * n + k] -= te;
            a[c * n + c] += te * te;
            rhs[k] += ly;
            rhs[c] -= te * ly;
        }
    }
    let x = solve_spd(&a, &rhs)?;
    let r2 = x[c];
    Some((x[..c].to_vec(), r2))
}

/// Log-linear fit of every voxel. Needs at least two distinct echo times in
/// at least one contrast so the shared decay is identifiable.
pub fn loglin_fit(contrasts: &[Contrast]) -> Result<LoglinFit> {
    if contrasts.is_empty() {
        return Err(MpmError::Config("no contrasts given".into()));
    }
    for c in contrasts {
        c.validate()?;
    }
    let identifiable = contrasts.iter().any(|c| {
        c.echoes
            .iter()
            .any(|e| e.te != c.echoes[0].te)
    });
    if !identifiable {
        return Err(MpmError::Config(
            "log-linear fit needs two distinct echo times in one contrast".into(),
        ));
    }
    let n = contrasts[0].grid.n_voxels();
    if contrasts.iter().any(|c| c.grid.n_voxels() != n) {
        return Err(MpmError::Config("contrasts must share a grid".into()));
    }
    let tes: Vec<Vec<f64>> = contrasts.iter().map(|c| c.echoes.iter().map(|e| e.te).collect()).collect();

    let per_voxel: Vec<Option<(Vec<f64>, f64)>> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut logs = Vec::with_capacity(contrasts.len());
            for c in contrasts {
                let mut l = Vec::with_capacity(c.volumes.len());
                for vol in &c.volumes {
                    let x = vol[v];
                    if !(x > 0.0) {
                        return None;
                    }
                    l.push(x.ln());
                }
                logs.push(l);
            }
            loglin_voxel(&tes, &logs)
        })
        .collect();

    let mut out = LoglinFit {
        intercepts: vec![vec![0.0; n]; contrasts.len()],
        r2_log: vec![0.0; n],
        masked: vec![false; n],
        clamped: vec![false; n],
    };
    for (v, r) in per_voxel.into_iter().enumerate() {
        match r {
            None => out.masked[v] = true,
            Some((b, r2)) => {
                for (k, bk) in b.into_iter().enumerate() {
                    out.intercepts[k][v] = bk;
                }
                if r2 > R2_FLOOR {
                    out.r2_log[v] = r2.ln();
                } else {
                    out.r2_log[v] = R2_FLOOR.ln();
                    out.clamped[v] = true;
                }
            }
        }
    }
    Ok(out)
}
