//! Noise variance and foreground mean from the intensity distribution of a
//! magnitude image, by a two-class Rician mixture fitted with EM.

use crate::error::{MpmError, Result};

/// Largest number of samples used by the mixture fit.
pub const MAX_SAMPLES: usize = 1_000_000;
/// Minimal number of samples accepted.
pub const MIN_SAMPLES: usize = 1000;
/// A class whose weight falls below this is considered collapsed.
pub const MIN_WEIGHT: f64 = 1e-3;

const MAX_EM_ITERS: usize = 500;
const EM_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixtureModel {
    Rician,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseEstimate {
    /// Noise variance of the background (lowest-mean) class.
    pub sigma2_bg: f64,
    /// Mean intensity of the other class.
    pub mu_fg: f64,
    /// Mixing proportion of the other class.
    pub fg_fraction: f64,
    pub model: MixtureModel,
    /// Set when the Rician fit collapsed to one class (the Gaussian fallback
    /// was then used), or when the fallback collapsed too.
    pub degenerate: bool,
}

/// `e^{-x} I0(x)` for `x >= 0` (polynomial approximations, relative error
/// below 2e-7).
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x < 3.75 {
        let t = (x / 3.75).powi(2);
        let i0 = 1.0
            + t * (3.5156229 + t * (3.0899424 + t * (1.2067492 + t * (0.2659732 + t * (0.0360768 + t * 0.0045813)))));
        i0 * (-x).exp()
    } else {
        let t = 3.75 / x;
        let p = 0.39894228
            + t * (0.01328592
                + t * (0.00225319
                    + t * (-0.00157565
                        + t * (0.00916281 + t * (-0.02057706 + t * (0.02635537 + t * (-0.01647633 + t * 0.00392377)))))));
        p / x.sqrt()
    }
}

/// `e^{-x} I1(x)` for `x >= 0`.
pub fn bessel_i1e(x: f64) -> f64 {
    let x = x.abs();
    if x < 3.75 {
        let t = (x / 3.75).powi(2);
        let i1 = x
            * (0.5
                + t * (0.87890594
                    + t * (0.51498869 + t * (0.15084934 + t * (0.02658733 + t * (0.00301532 + t * 0.00032411))))));
        i1 * (-x).exp()
    } else {
        let t = 3.75 / x;
        let p = 0.39894228
            + t * (-0.03988024
                + t * (-0.00362018
                    + t * (0.00163801
                        + t * (-0.01031555 + t * (0.02282967 + t * (-0.02895312 + t * (0.01787654 - t * 0.00420059)))))));
        p / x.sqrt()
    }
}

/// `I1(z) / I0(z)` for `z >= 0`: continued fraction below 20, asymptotic
/// expansion above.
pub fn bessel_ratio(z: f64) -> f64 {
    let z = z.abs();
    if z == 0.0 {
        return 0.0;
    }
    if z < 20.0 {
        // I_{k+1}/I_k = 1 / (2(k+1)/z + I_{k+2}/I_{k+1}), evaluated backwards
        let depth = 60 + (2.0 * z) as usize;
        let mut r = 0.0;
        for k in (0..depth).rev() {
            r = 1.0 / (2.0 * (k + 1) as f64 / z + r);
        }
        r
    } else {
        let u = 1.0 / z;
        1.0 - u * (0.5 + u * (0.125 + u * (0.125 + u * (25.0 / 128.0 + u * (13.0 / 32.0 + u * (1073.0 / 1024.0 + u * 103.0 / 32.0))))))
    }
}

/// Mean of a Rician distribution.
pub fn rician_mean(nu: f64, sigma2: f64) -> f64 {
    let sigma = sigma2.sqrt();
    if sigma == 0.0 {
        return nu;
    }
    let a = nu * nu / (4.0 * sigma2);
    if a > 1e4 {
        // large-SNR expansion, avoids the loss of accuracy of the polynomials
        return nu + sigma2 / (2.0 * nu);
    }
    sigma * (std::f64::consts::PI / 2.0).sqrt() * ((1.0 + 2.0 * a) * bessel_i0e(a) + 2.0 * a * bessel_i1e(a))
}

fn rician_log_pdf(x: f64, nu: f64, sigma2: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = x * nu / sigma2;
    // log I0(z) = z + log(i0e(z))
    x.ln() - sigma2.ln() - (x - nu).powi(2) / (2.0 * sigma2) + bessel_i0e(z).ln()
}

fn gaussian_log_pdf(x: f64, mu: f64, sigma2: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - (x - mu).powi(2) / (2.0 * sigma2)
}

/// Geometric mean of per-echo variances.
pub fn pool_variances(sigma2: &[f64]) -> Result<f64> {
    if sigma2.is_empty() {
        return Err(MpmError::Domain("no variances to pool".into()));
    }
    if let Some(v) = sigma2.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(MpmError::Domain(format!("variances must be positive, got {v}")));
    }
    Ok((sigma2.iter().map(|v| v.ln()).sum::<f64>() / sigma2.len() as f64).exp())
}

/// Sorted finite samples, thinned to evenly spaced order statistics when
/// there are more than `MAX_SAMPLES`. Sorting first makes the estimate
/// independent of sample order.
fn prepare(volume: &[f64]) -> Result<Vec<f64>> {
    let mut s: Vec<f64> = volume.iter().copied().filter(|v| v.is_finite()).collect();
    if s.len() < MIN_SAMPLES {
        return Err(MpmError::Domain(format!(
            "need at least {MIN_SAMPLES} finite samples, got {}",
            s.len()
        )));
    }
    if s.iter().any(|&v| v < 0.0) {
        return Err(MpmError::Domain("magnitude samples must be nonnegative".into()));
    }
    s.sort_by(f64::total_cmp);
    if s.len() > MAX_SAMPLES {
        let n = s.len();
        s = (0..MAX_SAMPLES).map(|i| s[i * n / MAX_SAMPLES]).collect();
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug)]
struct Class {
    mean: f64,
    var: f64,
    weight: f64,
}

/// Two-class EM. `rician` selects the component density. Classes are
/// returned in the order (low, high) of their distribution means.
fn em(x: &[f64], rician: bool) -> Option<[Class; 2]> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return None;
    }
    // split at the overall mean
    let split = x.partition_point(|&v| v <= mean).clamp(1, x.len() - 1);
    let stats = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let v = s.iter().map(|y| (y - m).powi(2)).sum::<f64>() / s.len() as f64;
        (m, v.max(var * 1e-6))
    };
    let (m0, v0) = stats(&x[..split]);
    let (m1, v1) = stats(&x[split..]);
    let w0 = split as f64 / n;
    let mut c = if rician {
        // the low class starts Rayleigh-like: mean = sigma sqrt(pi/2)
        let s0 = m0 * m0 * 2.0 / std::f64::consts::PI;
        [
            Class { mean: 0.1 * s0.sqrt(), var: s0, weight: w0 },
            Class { mean: m1, var: v1, weight: 1.0 - w0 },
        ]
    } else {
        [
            Class { mean: m0, var: v0, weight: w0 },
            Class { mean: m1, var: v1, weight: 1.0 - w0 },
        ]
    };
    let logpdf = |x: f64, c: &Class| {
        if rician {
            rician_log_pdf(x, c.mean, c.var)
        } else {
            gaussian_log_pdf(x, c.mean, c.var)
        }
    };
    let floor = var * 1e-12;
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..MAX_EM_ITERS {
        let mut ll = 0.0;
        let mut acc = [[0.0f64; 3]; 2];
        for &xi in x {
            let l0 = c[0].weight.ln() + logpdf(xi, &c[0]);
            let l1 = c[1].weight.ln() + logpdf(xi, &c[1]);
            let m = l0.max(l1);
            if !m.is_finite() {
                continue;
            }
            let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
            ll += lse;
            for (k, lk) in [l0, l1].into_iter().enumerate() {
                let r = (lk - lse).exp();
                let e = if rician {
                    xi * bessel_ratio(xi * c[k].mean / c[k].var)
                } else {
                    xi
                };
                acc[k][0] += r;
                acc[k][1] += r * e;
                acc[k][2] += r * xi * xi;
            }
        }
        for k in 0..2 {
            let rs = acc[k][0];
            c[k].weight = rs / n;
            if rs <= 0.0 {
                return None;
            }
            let m = acc[k][1] / rs;
            let second = acc[k][2] / rs;
            c[k].var = if rician { 0.5 * (second - m * m) } else { second - m * m }.max(floor);
            c[k].mean = m;
        }
        if c.iter().any(|k| k.weight < MIN_WEIGHT) {
            return None;
        }
        if (ll - prev_ll).abs() <= EM_TOL * ll.abs() {
            break;
        }
        prev_ll = ll;
    }
    let mean_of = |k: &Class| if rician { rician_mean(k.mean, k.var) } else { k.mean };
    let mut out = c;
    if mean_of(&out[0]) > mean_of(&out[1]) {
        out.swap(0, 1);
    }
    if rician {
        for k in out.iter_mut() {
            k.mean = rician_mean(k.mean, k.var);
        }
    }
    Some(out)
}

/// Fit a two-class mixture to a magnitude volume. The class with the lower
/// mean is the background.
pub fn estimate_noise(volume: &[f64]) -> Result<NoiseEstimate> {
    let x = prepare(volume)?;
    let pack = |c: [Class; 2], model, degenerate| NoiseEstimate {
        sigma2_bg: c[0].var,
        mu_fg: c[1].mean,
        fg_fraction: c[1].weight,
        model,
        degenerate,
    };
    if let Some(c) = em(&x, true) {
        return Ok(pack(c, MixtureModel::Rician, false));
    }
    if let Some(c) = em(&x, false) {
        return Ok(pack(c, MixtureModel::Gaussian, true));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    Ok(NoiseEstimate {
        sigma2_bg: x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n,
        mu_fg: mean,
        fg_fraction: 1.0,
        model: MixtureModel::Gaussian,
        degenerate: true,
    })
}
