//! Laplace approximation of the posterior of the log-parameter maps, using
//! the inverse of the block-diagonal preconditioner, and log-normal moments
//! of the natural parameters.

use rayon::prelude::*;

use crate::error::{MpmError, Result};
use crate::linalg::{spd_inverse4, Mat4, Vec4};
use crate::regularization::{JtvWeights, Stencil, VolumeLikelihood};
use crate::signal::Curvature;
use crate::types::{Contrast, HessianLoading, ParameterMaps};

/// Diagonal of `(P + diag(reg))⁻¹`. With `n_active = 3` the MT channel is
/// excluded and reported as zero variance.
pub fn laplace_covariance(p: &Mat4, reg_diag: &Vec4, n_active: usize) -> Result<Vec4> {
    let mut b = *p;
    for k in 0..4 {
        b[k][k] += reg_diag[k];
    }
    let inv = spd_inverse4(&b, n_active).ok_or_else(|| MpmError::Singular("posterior block is not positive definite".into()))?;
    let mut out = [0.0; 4];
    for k in 0..n_active {
        out[k] = inv[k][k];
        if !(out[k] > 0.0) || !out[k].is_finite() {
            return Err(MpmError::Singular(format!("posterior variance {} in channel {k}", out[k])));
        }
    }
    Ok(out)
}

/// Mean and variance of `exp(sign * y)` for `y ~ N(mu, sigma2)`.
pub fn lognormal_moments(mu_log: f64, sigma2_log: f64, sign: f64) -> (f64, f64) {
    let s = if sign < 0.0 { -1.0 } else { 1.0 };
    let point = (s * mu_log).exp();
    let es = sigma2_log.exp();
    (es.sqrt() * point, (es - 1.0) * es * point * point)
}

#[derive(Clone, Debug)]
pub struct UncertaintyMaps {
    /// Posterior variances of the four log-parameter channels.
    pub sigma2: Vec<Vec4>,
    /// Voxels outside the mask or with a singular block (variances zero).
    pub masked: Vec<bool>,
}

impl UncertaintyMaps {
    /// Posterior mean and standard deviation of `exp(sign * y_k)`.
    pub fn moments(&self, maps: &ParameterMaps, channel: usize, sign: f64) -> (Vec<f64>, Vec<f64>) {
        (0..self.sigma2.len())
            .map(|v| {
                let (e, var) = lognormal_moments(maps.data[v][channel], self.sigma2[v][channel], sign);
                (e, var.sqrt())
            })
            .unzip()
    }

    pub fn sd(&self, channel: usize) -> Vec<f64> {
        self.sigma2.iter().map(|s| s[channel].sqrt()).collect()
    }
}

/// Per-voxel posterior variances at `maps`. `prior` gives the JTV weights
/// and per-channel λ of a regularised fit; `None` for an ML fit.
pub fn posterior_variances(
    contrasts: &[Contrast],
    maps: &ParameterMaps,
    prior: Option<(&JtvWeights, &[f64; 4])>,
    loading: HessianLoading,
    mask: Option<&[bool]>,
) -> Result<UncertaintyMaps> {
    let lik = VolumeLikelihood::new(contrasts, &maps.grid, Curvature::Loaded(loading), mask)?;
    let d = lik.evaluate(&maps.data)?;
    let n = maps.grid.n_voxels();
    let reg = match prior {
        Some((w, lambda)) => {
            let mut l = *lambda;
            if lik.n_active == 3 {
                l[3] = 0.0;
            }
            Stencil::new(&maps.grid, mask).diagonal(&w.w, &l)
        }
        None => vec![[0.0; 4]; n],
    };
    let per: Vec<Option<Vec4>> = (0..n)
        .into_par_iter()
        .map(|v| {
            if mask.is_some_and(|m| !m[v]) {
                return None;
            }
            laplace_covariance(&d.precond[v], &reg[v], lik.n_active).ok()
        })
        .collect();
    Ok(UncertaintyMaps {
        masked: per.iter().map(Option::is_none).collect(),
        sigma2: per.into_iter().map(|s| s.unwrap_or([0.0; 4])).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn diagonal_block() {
        let mut p = [[0.0; 4]; 4];
        for (k, v) in [4.0, 9.0, 16.0, 25.0].into_iter().enumerate() {
            p[k][k] = v;
        }
        let s = laplace_covariance(&p, &[0.0; 4], 4).unwrap();
        for (k, e) in [0.25, 1.0 / 9.0, 1.0 / 16.0, 1.0 / 25.0].into_iter().enumerate() {
            assert!((s[k] - e).abs() < 1e-15);
        }
        let big = laplace_covariance(&p, &[1e12; 4], 4).unwrap();
        assert!(big.iter().all(|v| *v < 1e-11));
        let frozen = laplace_covariance(&p, &[0.0; 4], 3).unwrap();
        assert_eq!(frozen[3], 0.0);
        assert!(laplace_covariance(&[[0.0; 4]; 4], &[0.0; 4], 4).is_err());
    }

    #[test]
    fn random_spd_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let b: Mat4 = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
            let mut p: Mat4 = std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|k| b[i][k] * b[j][k]).sum()));
            for (i, row) in p.iter_mut().enumerate() {
                row[i] += 0.05;
            }
            let reg: Vec4 = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
            let mut full = p;
            for k in 0..4 {
                full[k][k] += reg[k];
            }
            let m = nalgebra::Matrix4::from_fn(|i, j| full[i][j]);
            let inv = m.try_inverse().unwrap();
            let s = laplace_covariance(&p, &reg, 4).unwrap();
            for k in 0..4 {
                assert!((s[k] - inv[(k, k)]).abs() <= 1e-10 * inv[(k, k)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn lognormal_known_values() {
        assert_eq!(lognormal_moments(0.7, 0.0, 1.0), (0.7f64.exp(), 0.0));
        let (e, v) = lognormal_moments(0.0, 2f64.ln(), 1.0);
        assert!((e - 2f64.sqrt()).abs() < 1e-15);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rate_and_time_expectations() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..1000 {
            let mu = rng.gen_range(-3.0..3.0);
            let s2 = rng.gen_range(0.0..2.0);
            let (er, _) = lognormal_moments(mu, s2, 1.0);
            let (et, _) = lognormal_moments(mu, s2, -1.0);
            assert!((er * et - f64::exp(s2)).abs() <= 1e-12 * f64::exp(s2));
        }
    }

    #[test]
    fn monte_carlo_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (mu, s2, sign) in [(0.3, 0.2, 1.0), (-0.5, 0.05, -1.0)] {
            let d = Normal::new(mu, f64::sqrt(s2)).unwrap();
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| f64::exp(sign * d.sample(&mut rng))).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
            let (e, var) = lognormal_moments(mu, s2, sign);
            assert!((m - e).abs() < 0.01 * e);
            assert!((v - var).abs() < 0.03 * var);
        }
    }
}
