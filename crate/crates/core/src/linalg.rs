//! Small dense linear algebra for per-voxel systems.

use crate::error::{MpmError, Result};

pub type Vec4 = [f64; 4];
pub type Mat4 = [[f64; 4]; 4];

pub const ZERO4: Mat4 = [[0.0; 4]; 4];

pub fn identity4() -> Mat4 {
    let mut m = ZERO4;
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = ZERO4;
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn mat4_vec(a: &Mat4, x: &Vec4) -> Vec4 {
    let mut y = [0.0; 4];
    for i in 0..4 {
        y[i] = a[i][0] * x[0] + a[i][1] * x[1] + a[i][2] * x[2] + a[i][3] * x[3];
    }
    y
}

pub fn dot4(a: &Vec4, b: &Vec4) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

pub fn norm4(a: &Vec4) -> f64 {
    dot4(a, a).sqrt()
}

/// Inverse of a general 4x4 matrix by Gauss-Jordan elimination with partial pivoting.
pub fn inverse4(m: &Mat4) -> Option<Mat4> {
    let mut a = *m;
    let mut inv = identity4();
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..4 {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..4 {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..4 {
                        a[i][j] -= f * a[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Lower Cholesky factor of the leading `n x n` block of a symmetric matrix.
/// Returns `None` if a pivot is not safely positive.
pub fn cholesky4(p: &Mat4, n: usize) -> Option<Mat4> {
    let mut l = ZERO4;
    let scale = (0..n).map(|i| p[i][i].abs()).fold(0.0f64, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let floor = scale * 1e-15;
    for j in 0..n {
        let mut d = p[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > floor) {
            return None;
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in (j + 1)..n {
            let mut s = p[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / d;
        }
    }
    Some(l)
}

/// Solve `L L^T x = b` on the leading `n` components; the rest of `x` is zero.
pub fn cholesky_solve4(l: &Mat4, b: &Vec4, n: usize) -> Vec4 {
    let mut y = [0.0; 4];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; 4];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Add a small ridge to the leading block of `p` if its Cholesky factorisation
/// fails; returns the factor of the (possibly regularised) matrix.
pub fn factor_with_ridge(p: &mut Mat4, n: usize) -> Result<Mat4> {
    if let Some(l) = cholesky4(p, n) {
        return Ok(l);
    }
    let trace: f64 = (0..n).map(|i| p[i][i]).sum();
    let mut ridge = 1e-10 * trace.abs() / n as f64;
    if !(ridge > 0.0) || !ridge.is_finite() {
        return Err(MpmError::Singular(format!("zero or non-finite trace ({trace})")));
    }
    // Escalate if the first ridge is not enough (e.g. a negative pivot).
    for _ in 0..12 {
        let mut q = *p;
        for (i, row) in q.iter_mut().enumerate().take(n) {
            row[i] += ridge;
        }
        if let Some(l) = cholesky4(&q, n) {
            *p = q;
            return Ok(l);
        }
        ridge *= 10.0;
    }
    Err(MpmError::Singular("factorisation failed after ridge".into()))
}

/// Newton direction `P^{-1} g` restricted to the first `n_active` parameters.
///
/// A zero system with a zero gradient yields a zero step.
pub fn newton_update(g: &Vec4, p: &Mat4, n_active: usize) -> Result<Vec4> {
    if g[..n_active].iter().all(|&v| v == 0.0) {
        return Ok([0.0; 4]);
    }
    let mut p = *p;
    let l = factor_with_ridge(&mut p, n_active)?;
    Ok(cholesky_solve4(&l, g, n_active))
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse4(p: &Mat4, n: usize) -> Option<Mat4> {
    let l = cholesky4(p, n)?;
    let mut inv = ZERO4;
    for j in 0..n {
        let mut e = [0.0; 4];
        e[j] = 1.0;
        let col = cholesky_solve4(&l, &e, n);
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// Solve a dense symmetric positive-definite system `A x = b` (row-major `A`).
pub fn solve_spd(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}
