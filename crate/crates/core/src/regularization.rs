//! Joint total variation prior and the regularised (MAP) volume fit.
//!
//! With `G_n` the six forward/backward differences at voxel `n`,
//! `JTV(Y) = sum_n sqrt(sum_k λ_k |G_n y_k|²)`. IRLS replaces each square
//! root by the quadratic bound `1/(2w) + w q / 2`, turning the prior into
//! `½ yᵀ (GᵀWG ⊗ diag λ) y`. The operator is applied as a weighted
//! six-neighbour stencil; differences that cross the volume boundary (or
//! leave the mask) are zero.

use rayon::prelude::*;

use crate::error::{MpmError, Result};
use crate::linalg::{cholesky_solve4, factor_with_ridge, Mat4, Vec4, ZERO4};
use crate::projection::Resampler;
use crate::signal::{voxel_objective, Curvature, Observation};
use crate::types::{any_mt, normalized_gain, Basis, Contrast, FitConfig, FitReport, ParameterMaps, VolumeGrid};

/// IRLS weights, one positive value per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct JtvWeights {
    pub w: Vec<f64>,
}

/// Forward and backward differences along x, y and z, in that order, divided
/// by the voxel size. Differences leaving the volume are zero.
pub fn finite_diff(field: &[f64], grid: &VolumeGrid) -> [Vec<f64>; 6] {
    let n = grid.n_voxels();
    assert_eq!(field.len(), n, "field does not match grid");
    let mut out: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; n]);
    let [nx, ny, nz] = grid.dims;
    let stride = [1, nx, nx * ny];
    for v in 0..n {
        let c = grid.coords(v);
        for a in 0..3 {
            let h = grid.voxel_size[a];
            if c[a] + 1 < [nx, ny, nz][a] {
                out[2 * a][v] = (field[v + stride[a]] - field[v]) / h;
            }
            if c[a] > 0 {
                out[2 * a + 1][v] = (field[v] - field[v - stride[a]]) / h;
            }
        }
    }
    out
}

/// Adjoint of [`finite_diff`].
pub fn finite_diff_adjoint(diffs: &[Vec<f64>; 6], grid: &VolumeGrid) -> Vec<f64> {
    let n = grid.n_voxels();
    let [nx, ny, nz] = grid.dims;
    let stride = [1, nx, nx * ny];
    let mut out = vec![0.0; n];
    for v in 0..n {
        let c = grid.coords(v);
        for a in 0..3 {
            let h = grid.voxel_size[a];
            if c[a] + 1 < [nx, ny, nz][a] {
                let d = diffs[2 * a][v] / h;
                out[v + stride[a]] += d;
                out[v] -= d;
            }
            if c[a] > 0 {
                let d = diffs[2 * a + 1][v] / h;
                out[v] += d;
                out[v - stride[a]] -= d;
            }
        }
    }
    out
}

/// Six-neighbour stencil on a grid with an optional mask.
#[derive(Clone, Copy, Debug)]
pub struct Stencil<'a> {
    pub grid: &'a VolumeGrid,
    pub mask: Option<&'a [bool]>,
}

impl<'a> Stencil<'a> {
    pub fn new(grid: &'a VolumeGrid, mask: Option<&'a [bool]>) -> Self {
        Self { grid, mask }
    }

    fn inside(&self, v: usize) -> bool {
        self.mask.is_none_or(|m| m[v])
    }

    /// Call `f(neighbour, 1/h²)` for every in-bounds, in-mask neighbour of `v`.
    #[inline]
    fn for_neighbours(&self, v: usize, mut f: impl FnMut(usize, f64)) {
        if !self.inside(v) {
            return;
        }
        let dims = self.grid.dims;
        let stride = [1, dims[0], dims[0] * dims[1]];
        let c = self.grid.coords(v);
        for a in 0..3 {
            let ih2 = 1.0 / (self.grid.voxel_size[a] * self.grid.voxel_size[a]);
            if c[a] + 1 < dims[a] && self.inside(v + stride[a]) {
                f(v + stride[a], ih2);
            }
            if c[a] > 0 && self.inside(v - stride[a]) {
                f(v - stride[a], ih2);
            }
        }
    }

    /// `q_n = sum_k λ_k |G_n y_k|²` at every voxel (0 outside the mask).
    pub fn squared_gradients(&self, y: &[Vec4], lambda: &[f64; 4]) -> Vec<f64> {
        (0..y.len())
            .into_par_iter()
            .map(|v| {
                let mut q = 0.0;
                self.for_neighbours(v, |m, ih2| {
                    for k in 0..4 {
                        let d = y[m][k] - y[v][k];
                        q += lambda[k] * d * d * ih2;
                    }
                });
                q
            })
            .collect()
    }

    /// `(GᵀWG ⊗ diag λ) y`.
    pub fn apply(&self, y: &[Vec4], w: &[f64], lambda: &[f64; 4]) -> Vec<Vec4> {
        (0..y.len())
            .into_par_iter()
            .map(|v| {
                let mut o = [0.0; 4];
                self.for_neighbours(v, |m, ih2| {
                    let c = (w[v] + w[m]) * ih2;
                    for k in 0..4 {
                        o[k] += c * (y[v][k] - y[m][k]);
                    }
                });
                for k in 0..4 {
                    o[k] *= lambda[k];
                }
                o
            })
            .collect()
    }

    /// Diagonal of `GᵀWG ⊗ diag λ`.
    pub fn diagonal(&self, w: &[f64], lambda: &[f64; 4]) -> Vec<Vec4> {
        (0..w.len())
            .into_par_iter()
            .map(|v| {
                let mut d = 0.0;
                self.for_neighbours(v, |m, ih2| d += (w[v] + w[m]) * ih2);
                std::array::from_fn(|k| lambda[k] * d)
            })
            .collect()
    }
}

/// `JTV(Y)` without smoothing.
pub fn jtv_energy(maps: &ParameterMaps, lambda: &[f64; 4]) -> f64 {
    let q = Stencil::new(&maps.grid, None).squared_gradients(&maps.data, lambda);
    sum(q.iter().map(|v| v.sqrt()))
}

/// `sum_n sqrt(q_n + eps)` over in-mask voxels: the objective the IRLS
/// weights actually majorise.
pub fn jtv_energy_smoothed(maps: &ParameterMaps, lambda: &[f64; 4], eps: f64, mask: Option<&[bool]>) -> f64 {
    let st = Stencil::new(&maps.grid, mask);
    let q = st.squared_gradients(&maps.data, lambda);
    sum(q.iter().enumerate().filter(|(v, _)| st.inside(*v)).map(|(_, q)| (q + eps).sqrt()))
}

/// Closed-form IRLS weights `w_n = (eps + q_n)^{-1/2}`.
pub fn irls_weights(maps: &ParameterMaps, lambda: &[f64; 4], eps: f64) -> JtvWeights {
    irls_weights_masked(maps, lambda, eps, None)
}

pub fn irls_weights_masked(maps: &ParameterMaps, lambda: &[f64; 4], eps: f64, mask: Option<&[bool]>) -> JtvWeights {
    let q = Stencil::new(&maps.grid, mask).squared_gradients(&maps.data, lambda);
    JtvWeights {
        w: q.into_iter().map(|q| 1.0 / (eps + q).sqrt()).collect(),
    }
}

pub fn apply_regularizer(y: &ParameterMaps, w: &JtvWeights, lambda: &[f64; 4]) -> Vec<Vec4> {
    Stencil::new(&y.grid, None).apply(&y.data, &w.w, lambda)
}

pub fn regularizer_diag(grid: &VolumeGrid, w: &JtvWeights, lambda: &[f64; 4]) -> Vec<Vec4> {
    Stencil::new(grid, None).diagonal(&w.w, lambda)
}

// Fixed-size chunks keep parallel reductions independent of the thread count.
const CHUNK: usize = 4096;

fn sum(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let partial: Vec<f64> = v.par_chunks(CHUNK).map(|c| c.iter().sum::<f64>()).collect();
    partial.iter().sum()
}

fn dot(a: &[Vec4], b: &[Vec4]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(p, q)| p[0] * q[0] + p[1] * q[1] + p[2] * q[2] + p[3] * q[3])
                .sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Debug, PartialEq)]
pub struct PcgResult {
    pub x: Vec<Vec4>,
    pub iterations: usize,
    /// `|A x - b| / |b|` at exit (0 for a zero right-hand side).
    pub rel_residual: f64,
    /// Set if a direction with nonpositive curvature was met.
    pub breakdown: bool,
}

/// Preconditioned conjugate gradient for `A x = b`, starting from zero.
pub fn pcg_solve(
    matvec: impl Fn(&[Vec4]) -> Vec<Vec4>,
    precond: impl Fn(&[Vec4]) -> Vec<Vec4>,
    rhs: &[Vec4],
    iters: usize,
    tol: f64,
) -> PcgResult {
    let n = rhs.len();
    let mut x = vec![[0.0; 4]; n];
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        return PcgResult {
            x,
            iterations: 0,
            rel_residual: 0.0,
            breakdown: false,
        };
    }
    let mut r = rhs.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    let mut it = 0;
    let mut breakdown = false;
    while it < iters {
        let ap = matvec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            breakdown = true;
            break;
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| {
            for k in 0..4 {
                xi[k] += alpha * pi[k];
            }
        });
        r.par_iter_mut().zip(&ap).for_each(|(ri, ai)| {
            for k in 0..4 {
                ri[k] -= alpha * ai[k];
            }
        });
        it += 1;
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            break;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| {
            for k in 0..4 {
                pi[k] = zi[k] + beta * pi[k];
            }
        });
    }
    PcgResult {
        x,
        iterations: it,
        rel_residual: rel,
        breakdown,
    }
}

struct Acquisition<'a> {
    contrast: &'a Contrast,
    /// `None` when the contrast lives on the reconstruction grid.
    resampler: Option<Resampler>,
    /// Acquisition voxels entering the likelihood.
    active: Vec<bool>,
}

/// Negative log-likelihood of all contrasts as a function of the
/// reconstruction-space maps, with per-voxel gradients and block-diagonal
/// preconditioners.
pub struct VolumeLikelihood<'a> {
    grid: VolumeGrid,
    acqs: Vec<Acquisition<'a>>,
    curvature: Curvature,
    pub n_active: usize,
}

/// Gradient and preconditioner blocks in reconstruction space.
#[derive(Clone, Debug)]
pub struct VolumeDerivs {
    pub nll: f64,
    pub grad: Vec<Vec4>,
    pub precond: Vec<Mat4>,
}

impl<'a> VolumeLikelihood<'a> {
    /// `mask` (reconstruction space) selects voxels carrying data; with a
    /// resampled contrast an acquisition voxel is used when its sample of
    /// the mask is at least one half and it lies inside the field of view.
    pub fn new(contrasts: &'a [Contrast], grid: &VolumeGrid, curvature: Curvature, mask: Option<&[bool]>) -> Result<Self> {
        if contrasts.is_empty() {
            return Err(MpmError::Config("no contrasts given".into()));
        }
        let n = grid.n_voxels();
        if let Some(m) = mask {
            if m.len() != n {
                return Err(MpmError::Config(format!("mask has {} voxels, expected {n}", m.len())));
            }
        }
        let mut acqs = Vec::with_capacity(contrasts.len());
        for c in contrasts {
            c.validate()?;
            if c.grid.same_space(grid) {
                let active = mask.map_or_else(|| vec![true; n], |m| m.to_vec());
                acqs.push(Acquisition {
                    contrast: c,
                    resampler: None,
                    active,
                });
            } else {
                let r = Resampler::new(grid, &c.grid)?;
                let mvals: Vec<f64> = match mask {
                    Some(m) => r.pull(&m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<_>>()),
                    None => vec![1.0; c.grid.n_voxels()],
                };
                let active = r.valid().iter().zip(&mvals).map(|(&ok, &mv)| ok && mv >= 0.5).collect();
                acqs.push(Acquisition {
                    contrast: c,
                    resampler: Some(r),
                    active,
                });
            }
        }
        Ok(Self {
            grid: grid.clone(),
            n_active: if any_mt(contrasts) { 4 } else { 3 },
            acqs,
            curvature,
        })
    }

    fn observations(c: &Contrast, v: usize) -> Vec<Observation> {
        c.echoes
            .iter()
            .zip(&c.volumes)
            .map(|(e, vol)| Observation {
                echo: *e,
                x: vol[v],
                b1p: c.b1p(v),
                b1m: c.b1m(v),
            })
            .collect()
    }

    /// Objective, gradient and preconditioner blocks at `y`.
    pub fn evaluate(&self, y: &[Vec4]) -> Result<VolumeDerivs> {
        let n = self.grid.n_voxels();
        let mut grad = vec![[0.0; 4]; n];
        let mut precond = vec![ZERO4; n];
        let mut nll = 0.0;
        for acq in &self.acqs {
            let pulled;
            let ya: &[Vec4] = match &acq.resampler {
                Some(r) => {
                    pulled = r.pull4(y);
                    &pulled
                }
                None => y,
            };
            let per: Vec<Result<(f64, Vec4, Mat4)>> = (0..ya.len())
                .into_par_iter()
                .map(|v| {
                    if !acq.active[v] {
                        return Ok((0.0, [0.0; 4], ZERO4));
                    }
                    let obs = Self::observations(acq.contrast, v);
                    let o = voxel_objective(&crate::types::LogParams::from_array(ya[v]), &obs, self.curvature)?;
                    Ok((o.nll, o.grad, o.precond))
                })
                .collect();
            let mut l = Vec::with_capacity(per.len());
            let mut g = Vec::with_capacity(per.len());
            let mut h = Vec::with_capacity(per.len());
            for r in per {
                let (a, b, c) = r?;
                l.push(a);
                g.push(b);
                h.push(c);
            }
            nll += sum(l.into_iter());
            let (g, h) = match &acq.resampler {
                Some(r) => (r.push4(&g), r.push_majorizer(&h)),
                None => (g, h),
            };
            for v in 0..n {
                for i in 0..4 {
                    grad[v][i] += g[v][i];
                    for j in 0..4 {
                        precond[v][i][j] += h[v][i][j];
                    }
                }
            }
        }
        if !nll.is_finite() {
            return Err(MpmError::NonFinite(format!("volume negative log-likelihood is {nll}")));
        }
        if self.n_active == 3 {
            for v in 0..n {
                grad[v][3] = 0.0;
                for i in 0..4 {
                    precond[v][i][3] = 0.0;
                    precond[v][3][i] = 0.0;
                }
            }
        }
        Ok(VolumeDerivs { nll, grad, precond })
    }

    /// Negative log-likelihood only.
    pub fn nll(&self, y: &[Vec4]) -> Result<f64> {
        let mut nll = 0.0;
        for acq in &self.acqs {
            let pulled;
            let ya: &[Vec4] = match &acq.resampler {
                Some(r) => {
                    pulled = r.pull4(y);
                    &pulled
                }
                None => y,
            };
            let per: Vec<f64> = (0..ya.len())
                .into_par_iter()
                .map(|v| {
                    if !acq.active[v] {
                        return 0.0;
                    }
                    let obs = Self::observations(acq.contrast, v);
                    crate::signal::voxel_nll(&crate::types::LogParams::from_array(ya[v]), &obs).unwrap_or(f64::NAN)
                })
                .collect();
            nll += sum(per.into_iter());
        }
        Ok(nll)
    }
}

/// Result of a regularised fit.
#[derive(Clone, Debug)]
pub struct MapFit {
    pub maps: ParameterMaps,
    /// Weights at the returned maps.
    pub weights: JtvWeights,
    pub report: FitReport,
}

fn quad(y: &[Vec4], ly: &[Vec4]) -> f64 {
    0.5 * dot(y, ly)
}

/// JTV-regularised fit of log-parameter maps on the grid of `init`.
///
/// Outer IRLS iterations update the weights in closed form; each inner
/// Newton iteration solves `(P + L) δ = g + L y` by block-Jacobi PCG and
/// sets `y <- y - δ`. `objective_trace` holds the majorised objective
/// `NLL + ½ yᵀLy` after every Newton iteration (starting value first);
/// `outer_objective` holds `NLL + sum sqrt(q + eps)` before the first and
/// after every IRLS iteration. Voxels outside `mask` keep their initial value.
pub fn fit_map_jtv(
    contrasts: &[Contrast],
    init: &ParameterMaps,
    config: &FitConfig,
    mask: Option<&[bool]>,
) -> Result<MapFit> {
    config.validate()?;
    if config.basis != Basis::Log {
        return Err(MpmError::Config("regularised fits run in the log basis".into()));
    }
    let grid = &init.grid;
    let lik = VolumeLikelihood::new(contrasts, grid, Curvature::Loaded(config.effective_loading()), mask)?;
    let mut lambda = config.lambda;
    if lik.n_active == 3 {
        lambda[3] = 0.0;
    }
    let st = Stencil::new(grid, mask);
    let n = grid.n_voxels();
    let inside = |v: usize| mask.is_none_or(|m| m[v]);
    let eps = config.jtv_eps;
    let mut y = init.data.clone();
    let outer = |y: &[Vec4]| -> Result<f64> {
        let q = st.squared_gradients(y, &lambda);
        let jtv = sum((0..n).filter(|&v| inside(v)).map(|v| (q[v] + eps).sqrt()));
        Ok(lik.nll(y)? + jtv)
    };

    let mut report = FitReport::default();
    let f0 = outer(&y)?;
    report.outer_objective.push(f0);
    let mut f_prev = f0;
    let mut m0_global = None;

    for _ in 0..config.irls_iters {
        let q = st.squared_gradients(&y, &lambda);
        let w: Vec<f64> = q.iter().map(|q| 1.0 / (eps + q).sqrt()).collect();
        let ldiag = st.diagonal(&w, &lambda);

        let mut ly = st.apply(&y, &w, &lambda);
        let mut m_cur = lik.nll(&y)? + quad(&y, &ly);
        let m_start = m_cur;
        if m0_global.is_none() {
            m0_global = Some(m_cur);
            report.objective_trace.push(m_cur);
        }
        for _ in 0..config.newton_iters {
            let d = lik.evaluate(&y)?;
            // blocks P_n + diag(L)_n, with a ridge on singular ones
            let factors: Vec<Result<(Mat4, Mat4)>> = (0..n)
                .into_par_iter()
                .map(|v| {
                    if !inside(v) {
                        let mut id = ZERO4;
                        for i in 0..4 {
                            id[i][i] = 1.0;
                        }
                        return Ok((id, id));
                    }
                    let mut b = d.precond[v];
                    for k in 0..4 {
                        b[k][k] += ldiag[v][k];
                    }
                    if lik.n_active == 3 {
                        b[3][3] = 1.0;
                    }
                    let before = b;
                    let l = factor_with_ridge(&mut b, 4)?;
                    let mut p = d.precond[v];
                    for k in 0..4 {
                        p[k][k] += b[k][k] - before[k][k];
                    }
                    if lik.n_active == 3 {
                        p[3][3] = 1.0;
                    }
                    Ok((p, l))
                })
                .collect();
            let mut blocks = Vec::with_capacity(n);
            let mut chol = Vec::with_capacity(n);
            for f in factors {
                let (p, l) = f?;
                blocks.push(p);
                chol.push(l);
            }
            let rhs: Vec<Vec4> = (0..n)
                .map(|v| {
                    if !inside(v) {
                        return [0.0; 4];
                    }
                    std::array::from_fn(|k| d.grad[v][k] + ly[v][k])
                })
                .collect();
            let matvec = |x: &[Vec4]| -> Vec<Vec4> {
                let lx = st.apply(x, &w, &lambda);
                (0..n)
                    .into_par_iter()
                    .map(|v| {
                        let b = &blocks[v];
                        std::array::from_fn(|i| {
                            b[i][0] * x[v][0] + b[i][1] * x[v][1] + b[i][2] * x[v][2] + b[i][3] * x[v][3] + lx[v][i]
                        })
                    })
                    .collect()
            };
            let precond = |r: &[Vec4]| -> Vec<Vec4> {
                (0..n).into_par_iter().map(|v| cholesky_solve4(&chol[v], &r[v], 4)).collect()
            };
            let sol = pcg_solve(matvec, precond, &rhs, config.cg_iters, config.tol_cg);
            for v in 0..n {
                if inside(v) {
                    for k in 0..4 {
                        y[v][k] -= sol.x[v][k];
                    }
                }
            }
            ly = st.apply(&y, &w, &lambda);
            let m_prev = m_cur;
            m_cur = lik.nll(&y)? + quad(&y, &ly);
            if !m_cur.is_finite() {
                return Err(MpmError::NonFinite(format!(
                    "objective became {m_cur} at IRLS iteration {}, previous value {m_prev}, CG residual {}",
                    report.outer_objective.len(),
                    sol.rel_residual
                )));
            }
            report.objective_trace.push(m_cur);
            report.gain_trace.push(normalized_gain(m_start, m_prev, m_cur));
            report.iterations_used += 1;
            if normalized_gain(m_start, m_prev, m_cur) < config.tol_newton {
                break;
            }
        }
        let f = outer(&y)?;
        report.outer_objective.push(f);
        let g = normalized_gain(f0, f_prev, f);
        f_prev = f;
        if g < config.tol_irls {
            report.converged = true;
            break;
        }
    }

    let mut maps = init.clone();
    maps.data = y;
    let weights = irls_weights_masked(&maps, &lambda, eps, mask);
    Ok(MapFit { maps, weights, report })
}
