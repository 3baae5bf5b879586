//! Domain types shared across the crate: parameter encodings, acquisition
//! metadata, volume grids and the fitting configuration.

use serde::{Deserialize, Serialize};

use crate::error::{MpmError, Result};
use crate::linalg;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Per-voxel parameters in their optimisation encoding: log PD, log R1,
/// log R2* and logit MTsat.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogParams {
    pub a_log: f64,
    pub r1_log: f64,
    pub r2_log: f64,
    pub mt_logit: f64,
}

/// The same parameters in natural space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    pub a: f64,
    pub r1: f64,
    pub r2: f64,
    pub mt: f64,
}

impl LogParams {
    pub const fn new(a_log: f64, r1_log: f64, r2_log: f64, mt_logit: f64) -> Self {
        Self {
            a_log,
            r1_log,
            r2_log,
            mt_logit,
        }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a_log, self.r1_log, self.r2_log, self.mt_logit]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn to_natural(self) -> NaturalParams {
        NaturalParams {
            a: self.a_log.exp(),
            r1: self.r1_log.exp(),
            r2: self.r2_log.exp(),
            mt: sigmoid(self.mt_logit),
        }
    }

    pub fn from_natural(n: NaturalParams) -> Result<Self> {
        if !(n.a > 0.0 && n.r1 > 0.0 && n.r2 > 0.0) {
            return Err(MpmError::Domain(format!(
                "a, r1, r2 must be positive (got {}, {}, {})",
                n.a, n.r1, n.r2
            )));
        }
        if !(n.mt > 0.0 && n.mt < 1.0) {
            return Err(MpmError::Domain(format!(
                "MT saturation must lie in (0, 1), got {}",
                n.mt
            )));
        }
        Ok(Self {
            a_log: n.a.ln(),
            r1_log: n.r1.ln(),
            r2_log: n.r2.ln(),
            mt_logit: logit(n.mt),
        })
    }
}

/// Acquisition parameters of a single echo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoSpec {
    /// Nominal flip angle (radians).
    pub flip_angle: f64,
    /// Repetition time (s).
    pub tr: f64,
    /// Echo time (s).
    pub te: f64,
    /// Noise variance.
    pub sigma2: f64,
    pub has_mt_pulse: bool,
}

impl EchoSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.flip_angle > 0.0 && self.flip_angle < std::f64::consts::PI) {
            return Err(MpmError::Domain(format!(
                "flip angle {} outside (0, pi)",
                self.flip_angle
            )));
        }
        if !(self.tr > 0.0) || !(self.te >= 0.0) || !(self.sigma2 > 0.0) {
            return Err(MpmError::Domain(format!(
                "invalid echo timing/noise: tr={}, te={}, sigma2={}",
                self.tr, self.te, self.sigma2
            )));
        }
        Ok(())
    }
}

/// A 3D lattice with voxel size and voxel-to-world affine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeGrid {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub affine: [[f64; 4]; 4],
}

impl VolumeGrid {
    /// Grid with an axis-aligned affine scaled by the voxel size.
    pub fn new(dims: [usize; 3], voxel_size: [f64; 3]) -> Self {
        let mut affine = [[0.0; 4]; 4];
        for (d, row) in affine.iter_mut().enumerate().take(3) {
            row[d] = voxel_size[d];
        }
        affine[3][3] = 1.0;
        Self {
            dims,
            voxel_size,
            affine,
        }
    }

    pub fn with_affine(dims: [usize; 3], voxel_size: [f64; 3], affine: [[f64; 4]; 4]) -> Result<Self> {
        let g = Self {
            dims,
            voxel_size,
            affine,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(MpmError::Domain(format!("zero-sized dims {:?}", self.dims)));
        }
        if self.voxel_size.iter().any(|&v| !(v > 0.0)) {
            return Err(MpmError::Domain(format!(
                "voxel size must be positive, got {:?}",
                self.voxel_size
            )));
        }
        if linalg::inverse4(&self.affine).is_none() {
            return Err(MpmError::Domain("affine is not invertible".into()));
        }
        Ok(())
    }

    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear index, x fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, n: usize) -> [usize; 3] {
        let i = n % self.dims[0];
        let j = (n / self.dims[0]) % self.dims[1];
        let k = n / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn same_space(&self, other: &VolumeGrid) -> bool {
        self.dims == other.dims && self.affine == other.affine
    }
}

/// A group of echoes sharing flip angle, TR and MT status, with one observed
/// volume per echo.
#[derive(Clone, Debug)]
pub struct Contrast {
    pub echoes: Vec<EchoSpec>,
    pub volumes: Vec<Vec<f64>>,
    pub grid: VolumeGrid,
    /// Transmit efficiency map (multiplies the nominal flip angle).
    pub b1_plus: Option<Vec<f64>>,
    /// Receive modulation map (multiplies the signal).
    pub b1_minus: Option<Vec<f64>>,
}

impl Contrast {
    pub fn new(echoes: Vec<EchoSpec>, volumes: Vec<Vec<f64>>, grid: VolumeGrid) -> Result<Self> {
        let c = Self {
            echoes,
            volumes,
            grid,
            b1_plus: None,
            b1_minus: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let first = self
            .echoes
            .first()
            .ok_or_else(|| MpmError::Domain("contrast without echoes".into()))?;
        if self.echoes.len() != self.volumes.len() {
            return Err(MpmError::Domain(format!(
                "{} echoes but {} volumes",
                self.echoes.len(),
                self.volumes.len()
            )));
        }
        for e in &self.echoes {
            e.validate()?;
            if e.flip_angle != first.flip_angle || e.tr != first.tr || e.has_mt_pulse != first.has_mt_pulse {
                return Err(MpmError::Domain(
                    "echoes of a contrast must share flip angle, TR and MT flag".into(),
                ));
            }
        }
        let n = self.grid.n_voxels();
        for (i, v) in self.volumes.iter().enumerate() {
            if v.len() != n {
                return Err(MpmError::Domain(format!(
                    "echo {} has {} voxels, grid has {}",
                    i,
                    v.len(),
                    n
                )));
            }
        }
        for map in [&self.b1_plus, &self.b1_minus].into_iter().flatten() {
            if map.len() != n || map.iter().any(|&b| !(b > 0.0)) {
                return Err(MpmError::Domain("B1 maps must match the grid and be positive".into()));
            }
        }
        Ok(())
    }

    pub fn has_mt(&self) -> bool {
        self.echoes[0].has_mt_pulse
    }

    /// Keep only the first `n` echoes.
    pub fn truncated(&self, n: usize) -> Contrast {
        let n = n.min(self.echoes.len()).max(1);
        Contrast {
            echoes: self.echoes[..n].to_vec(),
            volumes: self.volumes[..n].to_vec(),
            grid: self.grid.clone(),
            b1_plus: self.b1_plus.clone(),
            b1_minus: self.b1_minus.clone(),
        }
    }

    #[inline]
    pub fn b1p(&self, n: usize) -> f64 {
        self.b1_plus.as_ref().map_or(1.0, |m| m[n])
    }

    #[inline]
    pub fn b1m(&self, n: usize) -> f64 {
        self.b1_minus.as_ref().map_or(1.0, |m| m[n])
    }
}

/// Whether any contrast carries an MT pulse; decides if the MT channel is fitted.
pub fn any_mt(contrasts: &[Contrast]) -> bool {
    contrasts.iter().any(Contrast::has_mt)
}

/// Four log-parameter channels over a grid, stored voxel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterMaps {
    pub grid: VolumeGrid,
    pub data: Vec<[f64; 4]>,
}

impl ParameterMaps {
    pub fn constant(grid: VolumeGrid, p: LogParams) -> Self {
        let n = grid.n_voxels();
        Self {
            grid,
            data: vec![p.to_array(); n],
        }
    }

    pub fn get(&self, n: usize) -> LogParams {
        LogParams::from_array(self.data[n])
    }

    pub fn set(&mut self, n: usize, p: LogParams) {
        self.data[n] = p.to_array();
    }

    pub fn channel(&self, k: usize) -> Vec<f64> {
        self.data.iter().map(|v| v[k]).collect()
    }

    pub fn set_channel(&mut self, k: usize, values: &[f64]) {
        for (v, &x) in self.data.iter_mut().zip(values) {
            v[k] = x;
        }
    }
}

/// Diagonal loading of the residual-weighted second-order term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HessianLoading {
    /// `diag(|H|)`
    #[default]
    AbsDiag,
    /// `diag(|H| 1)`, a majoriser of `H`.
    AbsRowSum,
}

/// Parameter representation used during optimisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// (log A, log R1, log R2*, logit MTsat)
    #[default]
    Log,
    /// (A, R1, R2*, MTsat)
    Rate,
    /// (A, T1, T2*, MTsat)
    Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: [f64; 4],
    pub irls_iters: usize,
    pub newton_iters: usize,
    pub cg_iters: usize,
    pub tol_irls: f64,
    pub tol_newton: f64,
    pub tol_cg: f64,
    pub hessian_loading: HessianLoading,
    pub basis: Basis,
    /// Floor added to the squared gradient magnitude before computing JTV weights.
    pub jtv_eps: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: [10.0; 4],
            irls_iters: 10,
            newton_iters: 5,
            cg_iters: 32,
            tol_irls: 1e-5,
            tol_newton: 1e-5,
            tol_cg: 1e-3,
            hessian_loading: HessianLoading::AbsDiag,
            basis: Basis::Log,
            jtv_eps: 1e-5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.irls_iters == 0 || self.newton_iters == 0 || self.cg_iters == 0 {
            return Err(MpmError::Config("iteration counts must be >= 1".into()));
        }
        if !(self.tol_irls > 0.0 && self.tol_newton > 0.0 && self.tol_cg > 0.0 && self.jtv_eps > 0.0) {
            return Err(MpmError::Config("tolerances must be positive".into()));
        }
        if self.lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(MpmError::Config(format!(
                "regularisation factors must be finite and >= 0, got {:?}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Rate and time bases need the row-sum loading to stay stable.
    pub fn effective_loading(&self) -> HessianLoading {
        match self.basis {
            Basis::Log => self.hessian_loading,
            Basis::Rate | Basis::Time => HessianLoading::AbsRowSum,
        }
    }
}

/// Iteration history of a fit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Objective after each (outer, inner) iteration, starting with the initial value.
    pub objective_trace: Vec<f64>,
    /// Normalised gain of each iteration.
    pub gain_trace: Vec<f64>,
    pub converged: bool,
    pub iterations_used: usize,
    /// True objective (likelihood + JTV) after each IRLS iteration, when regularised.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outer_objective: Vec<f64>,
    /// Set when the objective became non-finite (baseline divergence).
    #[serde(default)]
    pub diverged: bool,
}

/// Normalised gain `(l_prev - l) / (l_0 - l)`, zero when nothing was gained yet.
pub fn normalized_gain(l0: f64, prev: f64, cur: f64) -> f64 {
    let denom = l0 - cur;
    if denom == 0.0 {
        if prev == cur {
            0.0
        } else {
            (prev - cur) / l0.abs().max(f64::MIN_POSITIVE)
        }
    } else {
        (prev - cur) / denom
    }
}
