//! Spoiled gradient echo forward model and its derivatives with respect to
//! the log/logit parameters, plus the per-voxel least-squares objective with
//! the absolute-loaded preconditioner.

use crate::error::{MpmError, Result};
use crate::linalg::{Mat4, Vec4, ZERO4};
use crate::types::{sigmoid, Basis, EchoSpec, HessianLoading, LogParams};

/// Signal value with gradient and diagonal Hessian w.r.t. (ã, r̃1, r̃2, δ̃).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalDerivs {
    pub s: f64,
    pub grad: Vec4,
    pub hess_diag: Vec4,
}

struct Terms {
    s: f64,
    /// s with the (1 - e^{-r1 tr}) factor removed, to avoid 0/0 when r1 tr -> 0
    s_over_n: f64,
    r1tr: f64,
    r2te: f64,
    mt: f64,
    ucae: f64,
    /// 1 - (1-δ) cos α
    one_minus_uc: f64,
    /// 1 - cos α e1
    one_minus_ce1: f64,
    denom: f64,
    e1: f64,
    has_mt: bool,
}

fn terms(p: &LogParams, e: &EchoSpec, b1p: f64, b1m: f64) -> Result<Terms> {
    let alpha = e.flip_angle * b1p;
    if !(alpha > 0.0 && alpha < std::f64::consts::PI) {
        return Err(MpmError::Domain(format!(
            "effective flip angle {alpha} outside (0, pi)"
        )));
    }
    let a = p.a_log.exp();
    let r1 = p.r1_log.exp();
    let r2 = p.r2_log.exp();
    let mt = if e.has_mt_pulse { sigmoid(p.mt_logit) } else { 0.0 };
    let u = 1.0 - mt;
    let r1tr = r1 * e.tr;
    let r2te = r2 * e.te;
    let e1 = (-r1tr).exp();
    let ucae = u * alpha.cos() * e1;
    // 1 - (1-δ) cos α e1 = (1 - e1) + e1 (δ + (1-δ)(1 - cos α)), free of cancellation
    let one_minus_c = 2.0 * (0.5 * alpha).sin().powi(2);
    let one_minus_uc = mt + u * one_minus_c;
    let one_minus_e1 = -(-r1tr).exp_m1();
    let denom = one_minus_e1 + e1 * one_minus_uc;
    let s_over_n = b1m * a * alpha.sin() * u / denom * (-r2te).exp();
    let s = s_over_n * one_minus_e1;
    Ok(Terms {
        s,
        s_over_n,
        r1tr,
        r2te,
        mt,
        ucae,
        one_minus_uc,
        one_minus_ce1: one_minus_e1 + e1 * one_minus_c,
        denom,
        e1,
        has_mt: e.has_mt_pulse,
    })
}

/// Predicted intensity of one echo. `b1p` scales the flip angle and `b1m`
/// the whole signal; both default to 1.
pub fn spgr_signal(p: &LogParams, e: &EchoSpec, b1p: f64, b1m: f64) -> Result<f64> {
    Ok(terms(p, e, b1p, b1m)?.s)
}

fn derivs_from(t: &Terms) -> SignalDerivs {
    let s = t.s;
    // ((1-δ) cos α - 1) e^{-r1 tr} / ((1 - (1-δ) cos α e^{-r1 tr}) (1 - e^{-r1 tr})) * s
    let g1 = t.r1tr * t.e1 * t.one_minus_uc / t.denom * t.s_over_n;
    let g2 = -t.r2te * s;
    let g3 = if t.has_mt { -t.mt * s / t.denom } else { 0.0 };
    let h1 = (1.0 - t.r1tr * (1.0 + t.ucae) / t.denom) * g1;
    let h2 = (1.0 - t.r2te) * g2;
    let h3 = if t.has_mt {
        let u = 1.0 - t.mt;
        // (2 (1-δ)(1 - cos α e^{-r1 tr}) / D - 1) ∂s/∂δ̃
        (2.0 * u * t.one_minus_ce1 / t.denom - 1.0) * g3
    } else {
        0.0
    };
    SignalDerivs {
        s,
        grad: [s, g1, g2, g3],
        hess_diag: [s, h1, h2, h3],
    }
}

pub fn spgr_derivs(p: &LogParams, e: &EchoSpec, b1p: f64, b1m: f64) -> Result<SignalDerivs> {
    Ok(derivs_from(&terms(p, e, b1p, b1m)?))
}

/// Signal derivatives with the full symmetric 4x4 Hessian, including the
/// mixed partials needed by the row-sum loading and by basis changes.
pub fn spgr_hessian(p: &LogParams, e: &EchoSpec, b1p: f64, b1m: f64) -> Result<(SignalDerivs, Mat4)> {
    let t = terms(p, e, b1p, b1m)?;
    let d = derivs_from(&t);
    let [s, g1, g2, g3] = d.grad;
    let mut h = ZERO4;
    for i in 0..4 {
        h[i][i] = d.hess_diag[i];
    }
    // s is linear in a = exp(ã)
    h[0][1] = g1;
    h[0][2] = g2;
    h[0][3] = g3;
    // the r̃2 dependence is a separate exponential factor
    h[1][2] = -t.r2te * g1;
    h[2][3] = -t.r2te * g3;
    if t.has_mt {
        // ∂/∂r̃1 of -δ s / D, with ∂D/∂r̃1 = (1-δ) cos α tr r1 e^{-r1 tr}
        h[1][3] = -t.mt / t.denom * (g1 - s * t.ucae * t.r1tr / t.denom);
    }
    for i in 0..4 {
        for j in 0..i {
            h[i][j] = h[j][i];
        }
    }
    Ok((d, h))
}

/// One observed echo intensity with its acquisition parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub echo: EchoSpec,
    pub x: f64,
    pub b1p: f64,
    pub b1m: f64,
}

impl Observation {
    pub fn new(echo: EchoSpec, x: f64) -> Self {
        Self {
            echo,
            x,
            b1p: 1.0,
            b1m: 1.0,
        }
    }
}

/// Negative log-likelihood, its gradient and preconditioner for one voxel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelObjective {
    pub nll: f64,
    pub grad: Vec4,
    pub precond: Mat4,
}

impl VoxelObjective {
    /// Flag a preconditioner that cannot be factorised as is.
    pub fn is_degenerate(&self, n_active: usize) -> bool {
        crate::linalg::cholesky4(&self.precond, n_active).is_none()
    }
}

/// Curvature used in the preconditioner: Fisher scoring (Gauss-Newton) or
/// Fisher scoring plus an absolute loading of the residual-weighted term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curvature {
    GaussNewton,
    Loaded(HessianLoading),
}

fn accumulate(
    out: &mut VoxelObjective,
    s: f64,
    grad: &Vec4,
    hess: &Mat4,
    x: f64,
    sigma2: f64,
    curvature: Curvature,
) {
    let res = s - x;
    let w = 1.0 / sigma2;
    out.nll += 0.5 * w * res * res;
    for i in 0..4 {
        out.grad[i] += w * res * grad[i];
        for j in 0..4 {
            out.precond[i][j] += w * grad[i] * grad[j];
        }
    }
    match curvature {
        Curvature::GaussNewton => {}
        Curvature::Loaded(HessianLoading::AbsDiag) => {
            let r = w * res.abs();
            for i in 0..4 {
                out.precond[i][i] += r * hess[i][i].abs();
            }
        }
        Curvature::Loaded(HessianLoading::AbsRowSum) => {
            let r = w * res.abs();
            for i in 0..4 {
                let row: f64 = hess[i].iter().map(|v| v.abs()).sum();
                out.precond[i][i] += r * row;
            }
        }
    }
}

/// Objective `sum (x - s)^2 / (2 sigma^2)` with gradient and preconditioner in
/// the log basis.
pub fn voxel_objective(p: &LogParams, data: &[Observation], curvature: Curvature) -> Result<VoxelObjective> {
    if data.is_empty() {
        return Err(MpmError::Domain("voxel objective needs at least one echo".into()));
    }
    let mut out = VoxelObjective {
        nll: 0.0,
        grad: [0.0; 4],
        precond: ZERO4,
    };
    let need_full = curvature == Curvature::Loaded(HessianLoading::AbsRowSum);
    for o in data {
        if !(o.echo.sigma2 > 0.0) {
            return Err(MpmError::Domain("noise variance must be positive".into()));
        }
        if need_full {
            let (d, h) = spgr_hessian(p, &o.echo, o.b1p, o.b1m)?;
            accumulate(&mut out, d.s, &d.grad, &h, o.x, o.echo.sigma2, curvature);
        } else {
            let d = spgr_derivs(p, &o.echo, o.b1p, o.b1m)?;
            let mut h = ZERO4;
            for i in 0..4 {
                h[i][i] = d.hess_diag[i];
            }
            accumulate(&mut out, d.s, &d.grad, &h, o.x, o.echo.sigma2, curvature);
        }
    }
    Ok(out)
}

pub fn voxel_nll(p: &LogParams, data: &[Observation]) -> Result<f64> {
    let mut nll = 0.0;
    for o in data {
        let r = spgr_signal(p, &o.echo, o.b1p, o.b1m)? - o.x;
        nll += 0.5 * r * r / o.echo.sigma2;
    }
    Ok(nll)
}

/// Smallest positive value allowed for A, R1, R2*, T1, T2* in the rate and time bases.
const NATURAL_FLOOR: f64 = 1e-18;
const MT_MARGIN: f64 = 1e-15;

impl Basis {
    /// Coordinates of `p` in this basis.
    pub fn encode(self, p: &LogParams) -> Vec4 {
        let n = p.to_natural();
        match self {
            Basis::Log => p.to_array(),
            Basis::Rate => [n.a, n.r1, n.r2, n.mt],
            Basis::Time => [n.a, 1.0 / n.r1, 1.0 / n.r2, n.mt],
        }
    }

    /// Log parameters of in-domain coordinates.
    pub fn decode(self, theta: &Vec4) -> LogParams {
        match self {
            Basis::Log => LogParams::from_array(*theta),
            Basis::Rate => LogParams::new(
                theta[0].ln(),
                theta[1].ln(),
                theta[2].ln(),
                crate::types::logit(theta[3]),
            ),
            Basis::Time => LogParams::new(
                theta[0].ln(),
                -theta[1].ln(),
                -theta[2].ln(),
                crate::types::logit(theta[3]),
            ),
        }
    }

    /// Clamp coordinates into the valid domain; returns whether anything moved.
    pub fn project(self, theta: &mut Vec4) -> bool {
        if self == Basis::Log {
            return false;
        }
        let mut moved = false;
        for v in theta.iter_mut().take(3) {
            if !(*v >= NATURAL_FLOOR) {
                *v = NATURAL_FLOOR;
                moved = true;
            }
        }
        let lo = MT_MARGIN;
        let hi = 1.0 - MT_MARGIN;
        if !(theta[3] >= lo) {
            theta[3] = lo;
            moved = true;
        } else if theta[3] > hi {
            theta[3] = hi;
            moved = true;
        }
        moved
    }

    /// First and second derivatives of each log coordinate with respect to
    /// the matching basis coordinate.
    fn chain(self, theta: &Vec4) -> (Vec4, Vec4) {
        let d = theta[3];
        let dd = d * (1.0 - d);
        let mt = (1.0 / dd, (2.0 * d - 1.0) / (dd * dd));
        match self {
            Basis::Log => ([1.0; 4], [0.0; 4]),
            Basis::Rate => {
                let [a, r1, r2, _] = *theta;
                (
                    [1.0 / a, 1.0 / r1, 1.0 / r2, mt.0],
                    [-1.0 / (a * a), -1.0 / (r1 * r1), -1.0 / (r2 * r2), mt.1],
                )
            }
            Basis::Time => {
                let [a, t1, t2, _] = *theta;
                (
                    [1.0 / a, -1.0 / t1, -1.0 / t2, mt.0],
                    [-1.0 / (a * a), 1.0 / (t1 * t1), 1.0 / (t2 * t2), mt.1],
                )
            }
        }
    }
}

/// Voxel objective with derivatives expressed in an arbitrary basis.
/// `theta` must be inside the basis domain (see [`Basis::project`]).
pub fn voxel_objective_in_basis(
    theta: &Vec4,
    basis: Basis,
    data: &[Observation],
    curvature: Curvature,
) -> Result<VoxelObjective> {
    let p = basis.decode(theta);
    if basis == Basis::Log {
        return voxel_objective(&p, data, curvature);
    }
    if data.is_empty() {
        return Err(MpmError::Domain("voxel objective needs at least one echo".into()));
    }
    let (t1, t2) = basis.chain(theta);
    let mut out = VoxelObjective {
        nll: 0.0,
        grad: [0.0; 4],
        precond: ZERO4,
    };
    for o in data {
        let (d, hl) = spgr_hessian(&p, &o.echo, o.b1p, o.b1m)?;
        let mut g = [0.0; 4];
        let mut h = ZERO4;
        for i in 0..4 {
            g[i] = d.grad[i] * t1[i];
            for j in 0..4 {
                h[i][j] = hl[i][j] * t1[i] * t1[j];
            }
            h[i][i] += d.grad[i] * t2[i];
        }
        accumulate(&mut out, d.s, &g, &h, o.x, o.echo.sigma2, curvature);
    }
    Ok(out)
}
