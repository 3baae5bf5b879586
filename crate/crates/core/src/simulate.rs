//! Synthetic data and experiment drivers.
//!
//! Every random draw comes from a ChaCha8 generator seeded with the
//! experiment seed; voxel `n` uses stream `n`, so generation order (and
//! parallelism) never changes the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MpmError, Result};
use crate::linalg::norm4;
use crate::optim::{fit_ml_volume, fit_voxel_ml, initial_maps, InitDefaults, MlOptions, Strategy, StrategyKind};
use crate::regularization::fit_map_jtv;
use crate::signal::{spgr_signal, voxel_nll, voxel_objective, Curvature, Observation};
use crate::types::{
    Basis, Contrast, EchoSpec, FitConfig, FitReport, LogParams, NaturalParams, ParameterMaps, VolumeGrid,
};

/// Generator for stream `stream` of experiment `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Single-voxel ensemble configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_voxels: usize,
    pub seed: u64,
    pub n_contrasts: usize,
    pub echoes_per_contrast: usize,
    /// Range of every log parameter, including log TR and log TE (seconds).
    pub param_range: [f64; 2],
    /// Flip angle range in radians.
    pub flip_range: [f64; 2],
    pub sigma2: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_voxels: 1000,
            seed: 0,
            n_contrasts: 3,
            echoes_per_contrast: 5,
            param_range: [-5.0, 5.0],
            flip_range: [0.0, std::f64::consts::FRAC_PI_4],
            sigma2: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
        if !ok_range(self.param_range) || !ok_range(self.flip_range) {
            return Err(MpmError::Config("sampling ranges must be nonempty".into()));
        }
        if self.flip_range[0] < 0.0 || self.flip_range[1] >= std::f64::consts::PI {
            return Err(MpmError::Config("flip range must lie in [0, pi)".into()));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(MpmError::Config("sigma2 must be finite and >= 0".into()));
        }
        if self.n_contrasts == 0 || self.echoes_per_contrast == 0 {
            return Err(MpmError::Config("need at least one contrast and one echo".into()));
        }
        Ok(())
    }
}

/// One simulated voxel: true parameters and noisy observations.
#[derive(Clone, Debug, PartialEq)]
pub struct SimVoxel {
    pub truth: LogParams,
    pub data: Vec<Observation>,
}

/// Simulate independent voxels, each with its own parameters and protocol.
///
/// The last contrast carries the MT pulse. Flip angles of exactly zero are
/// redrawn. A zero `sigma2` produces noiseless data; the likelihood then
/// uses unit variance.
pub fn simulate_voxels(cfg: &SimConfig) -> Result<Vec<SimVoxel>> {
    cfg.validate()?;
    let [lo, hi] = cfg.param_range;
    let noise = Normal::new(0.0, cfg.sigma2.sqrt()).map_err(|e| MpmError::Config(e.to_string()))?;
    let lik_sigma2 = if cfg.sigma2 > 0.0 { cfg.sigma2 } else { 1.0 };
    (0..cfg.n_voxels)
        .map(|n| {
            let mut rng = stream_rng(cfg.seed, n as u64);
            let truth = LogParams::new(
                rng.gen_range(lo..hi),
                rng.gen_range(lo..hi),
                rng.gen_range(lo..hi),
                rng.gen_range(lo..hi),
            );
            let mut data = Vec::with_capacity(cfg.n_contrasts * cfg.echoes_per_contrast);
            for c in 0..cfg.n_contrasts {
                let tr = rng.gen_range(lo..hi).exp();
                let mut flip = 0.0;
                while flip <= 0.0 {
                    flip = rng.gen_range(cfg.flip_range[0]..cfg.flip_range[1]);
                }
                let mut tes: Vec<f64> = (0..cfg.echoes_per_contrast)
                    .map(|_| rng.gen_range(lo..hi).exp())
                    .collect();
                tes.sort_by(f64::total_cmp);
                for te in tes {
                    let echo = EchoSpec {
                        flip_angle: flip,
                        tr,
                        te,
                        sigma2: lik_sigma2,
                        has_mt_pulse: c + 1 == cfg.n_contrasts,
                    };
                    let s = spgr_signal(&truth, &echo, 1.0, 1.0)?;
                    let x = if cfg.sigma2 > 0.0 { s + noise.sample(&mut rng) } else { s };
                    data.push(Observation::new(echo, x));
                }
            }
            Ok(SimVoxel { truth, data })
        })
        .collect()
}


/// Region of a phantom tissue, in coordinates normalised to `[0, 1]` along
/// each axis (voxel centres at `(i + 0.5) / n`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Sphere { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half_width: [f64; 3] },
}

impl Region {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Region::Sphere { center, radius } => {
                (0..3).map(|a| (p[a] - center[a]).powi(2)).sum::<f64>() <= radius * radius
            }
            Region::Box { center, half_width } => (0..3).all(|a| (p[a] - center[a]).abs() <= half_width[a]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tissue {
    pub name: String,
    pub region: Region,
    pub params: NaturalParams,
}

/// Tissues are painted in order; later ones overwrite earlier ones.
/// Values are illustrative, not measured.
pub fn default_tissues() -> Vec<Tissue> {
    let c = [0.5; 3];
    vec![
        Tissue {
            name: "gm".into(),
            region: Region::Sphere { center: c, radius: 0.42 },
            params: NaturalParams { a: 850.0, r1: 0.65, r2: 15.0, mt: 0.009 },
        },
        Tissue {
            name: "wm".into(),
            region: Region::Box { center: c, half_width: [0.22, 0.2, 0.2] },
            params: NaturalParams { a: 700.0, r1: 1.0, r2: 20.0, mt: 0.018 },
        },
        Tissue {
            name: "csf".into(),
            region: Region::Sphere { center: [0.5, 0.45, 0.5], radius: 0.09 },
            params: NaturalParams { a: 1000.0, r1: 0.3, r2: 5.0, mt: 0.003 },
        },
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastProtocol {
    pub flip_deg: f64,
    pub tr: f64,
    pub n_echoes: usize,
    pub first_te: f64,
    pub echo_spacing: f64,
    pub mt: bool,
}

/// PDw / T1w / MTw layout with 8/8/6 echoes.
pub fn default_protocol() -> Vec<ContrastProtocol> {
    let c = |flip_deg, n_echoes, mt| ContrastProtocol {
        flip_deg,
        tr: 0.025,
        n_echoes,
        first_te: 0.0023,
        echo_spacing: 0.0023,
        mt,
    };
    vec![c(6.0, 8, false), c(21.0, 8, false), c(6.0, 6, true)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub seed: u64,
    /// Mean first-echo foreground signal of the first contrast over the
    /// noise standard deviation. Infinite for noiseless data.
    pub snr: f64,
    pub tissues: Vec<Tissue>,
    pub protocol: Vec<ContrastProtocol>,
}

impl PhantomConfig {
    pub fn new(n: usize, seed: u64, snr: f64) -> Self {
        Self {
            dims: [n; 3],
            voxel_size: [1.0; 3],
            seed,
            snr,
            tissues: default_tissues(),
            protocol: default_protocol(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0 || d > 48) {
            return Err(MpmError::Config(format!("phantom dims must be in 1..=48, got {:?}", self.dims)));
        }
        if !(self.snr > 0.0) {
            return Err(MpmError::Config(format!("snr must be positive, got {}", self.snr)));
        }
        if self.tissues.is_empty() || self.protocol.is_empty() {
            return Err(MpmError::Config("phantom needs tissues and a protocol".into()));
        }
        if self.protocol.iter().any(|c| c.n_echoes == 0) {
            return Err(MpmError::Config("every contrast needs an echo".into()));
        }
        for t in &self.tissues {
            LogParams::from_natural(t.params)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub truth: ParameterMaps,
    pub contrasts: Vec<Contrast>,
    /// Foreground (any tissue).
    pub mask: Vec<bool>,
    /// Tissue index per voxel, `None` for background.
    pub labels: Vec<Option<usize>>,
    pub sigma2: f64,
}

/// Background parameters (`a` close to zero). Background voxels hold noise
/// only and are excluded from fits through `Phantom::mask`.
pub const BACKGROUND: NaturalParams = NaturalParams { a: 1e-6, r1: 1.0, r2: 20.0, mt: 0.05 };

/// Piecewise-constant phantom with Gaussian noise. Geometry depends only on
/// the configuration, noise on `seed` (voxel `n` uses stream `n`).
pub fn simulate_phantom(cfg: &PhantomConfig) -> Result<Phantom> {
    cfg.validate()?;
    let grid = VolumeGrid::new(cfg.dims, cfg.voxel_size);
    let n = grid.n_voxels();
    let labels: Vec<Option<usize>> = (0..n)
        .map(|v| {
            let c = grid.coords(v);
            let p: [f64; 3] = std::array::from_fn(|a| (c[a] as f64 + 0.5) / cfg.dims[a] as f64);
            cfg.tissues.iter().rposition(|t| t.region.contains(p))
        })
        .collect();
    let bg = LogParams::from_natural(BACKGROUND)?;
    let mut truth = ParameterMaps::constant(grid.clone(), bg);
    for (v, l) in labels.iter().enumerate() {
        if let Some(t) = l {
            truth.set(v, LogParams::from_natural(cfg.tissues[*t].params)?);
        }
    }
    let mask: Vec<bool> = labels.iter().map(Option::is_some).collect();
    if !mask.iter().any(|&m| m) {
        return Err(MpmError::Config("phantom has no foreground voxel".into()));
    }

    let echoes: Vec<Vec<EchoSpec>> = cfg
        .protocol
        .iter()
        .map(|c| {
            (0..c.n_echoes)
                .map(|e| EchoSpec {
                    flip_angle: c.flip_deg.to_radians(),
                    tr: c.tr,
                    te: c.first_te + e as f64 * c.echo_spacing,
                    sigma2: 1.0,
                    has_mt_pulse: c.mt,
                })
                .collect()
        })
        .collect();
    let clean: Vec<Vec<Vec<f64>>> = echoes
        .iter()
        .map(|es| {
            es.iter()
                .map(|e| (0..n).map(|v| spgr_signal(&truth.get(v), e, 1.0, 1.0)).collect::<Result<Vec<f64>>>())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let fg: Vec<f64> = (0..n).filter(|&v| mask[v]).map(|v| clean[0][0][v]).collect();
    let mean_fg = fg.iter().sum::<f64>() / fg.len() as f64;
    let sigma = if cfg.snr.is_finite() { mean_fg / cfg.snr } else { 0.0 };
    let sigma2 = if sigma > 0.0 { sigma * sigma } else { 1.0 };

    let total: usize = echoes.iter().map(Vec::len).sum();
    let noise: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut rng = stream_rng(cfg.seed, v as u64);
            let d = Normal::new(0.0, 1.0).expect("unit normal");
            (0..total).map(|_| sigma * d.sample(&mut rng)).collect()
        })
        .collect();

    let mut contrasts = Vec::with_capacity(echoes.len());
    let mut offset = 0;
    for (es, vols) in echoes.into_iter().zip(clean) {
        let es: Vec<EchoSpec> = es.into_iter().map(|e| EchoSpec { sigma2, ..e }).collect();
        let vols = vols
            .into_iter()
            .enumerate()
            .map(|(k, vol)| vol.into_iter().enumerate().map(|(v, s)| s + noise[v][offset + k]).collect())
            .collect();
        offset += es.len();
        contrasts.push(Contrast::new(es, vols, grid.clone())?);
    }
    Ok(Phantom {
        truth,
        contrasts,
        mask,
        labels,
        sigma2,
    })
}

impl Phantom {
    /// Mean first-echo intensity over the foreground, per contrast.
    pub fn foreground_means(&self) -> Vec<f64> {
        let idx: Vec<usize> = (0..self.mask.len()).filter(|&v| self.mask[v]).collect();
        self.contrasts
            .iter()
            .map(|c| idx.iter().map(|&v| c.volumes[0][v]).sum::<f64>() / idx.len() as f64)
            .collect()
    }

    /// Foreground voxels with a 6-neighbour whose tissue label differs.
    pub fn edges(&self) -> Vec<bool> {
        let g = &self.truth.grid;
        let d = g.dims;
        (0..self.labels.len())
            .map(|v| {
                let c = g.coords(v);
                if !self.mask[v] {
                    return false;
                }
                (0..3).any(|a| {
                    [-1i64, 1].iter().any(|s| {
                        let mut q = c.map(|x| x as i64);
                        q[a] += s;
                        q[a] >= 0
                            && (q[a] as usize) < d[a]
                            && self.labels[g.index(q[0] as usize, q[1] as usize, q[2] as usize)] != self.labels[v]
                    })
                })
            })
            .collect()
    }

    /// Root mean squared error of each log-parameter channel over the mask.
    pub fn rmse(&self, maps: &ParameterMaps) -> [f64; 4] {
        let mut acc = [0.0; 4];
        let mut count = 0usize;
        for v in 0..self.mask.len() {
            if self.mask[v] {
                count += 1;
                for k in 0..4 {
                    acc[k] += (maps.data[v][k] - self.truth.data[v][k]).powi(2);
                }
            }
        }
        acc.map(|a| (a / count as f64).sqrt())
    }
}


/// Per-voxel traces of one strategy in the convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub reports: Vec<FitReport>,
    pub final_nll: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceResult {
    pub runs: Vec<StrategyRun>,
    /// NLL of the generating parameters, per voxel.
    pub true_nll: Vec<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    if s.is_empty() {
        return f64::NAN;
    }
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

impl ConvergenceResult {
    pub fn median_true_nll(&self) -> f64 {
        median(&self.true_nll)
    }

    pub fn median_final_nll(&self, run: usize) -> f64 {
        median(&self.runs[run].final_nll)
    }

    /// Voxels with at least one iteration whose gain is below `-threshold`.
    pub fn negative_gain_voxels(&self, run: usize, threshold: f64) -> usize {
        self.runs[run]
            .reports
            .iter()
            .filter(|r| r.gain_trace.iter().any(|&g| g < -threshold))
            .count()
    }

    /// CSV rows `strategy,voxel,iter,nll,gain`; iteration 0 is the start.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("strategy,voxel,iter,nll,gain\n");
        for run in &self.runs {
            let name = strategy_name(run.strategy.kind);
            for (v, r) in run.reports.iter().enumerate() {
                for (i, l) in r.objective_trace.iter().enumerate() {
                    let g = if i == 0 { f64::NAN } else { r.gain_trace[i - 1] };
                    out.push_str(&format!("{name},{v},{i},{l:e},{g:e}\n"));
                }
            }
        }
        out
    }

    /// CSV rows `voxel,true_nll,<strategy>...,diverged_<strategy>...`.
    pub fn final_csv(&self) -> String {
        let names: Vec<&str> = self.runs.iter().map(|r| strategy_name(r.strategy.kind)).collect();
        let mut out = format!(
            "voxel,true_nll,{},{}\n",
            names.join(","),
            names.iter().map(|n| format!("diverged_{n}")).collect::<Vec<_>>().join(",")
        );
        for v in 0..self.true_nll.len() {
            let vals: Vec<String> = self.runs.iter().map(|r| format!("{:e}", r.final_nll[v])).collect();
            let div: Vec<String> = self.runs.iter().map(|r| (r.reports[v].diverged as u8).to_string()).collect();
            out.push_str(&format!("{v},{:e},{},{}\n", self.true_nll[v], vals.join(","), div.join(",")));
        }
        out
    }
}

pub fn strategy_name(kind: StrategyKind) -> &'static str {
    match kind {
        StrategyKind::Proposed => "proposed",
        StrategyKind::GnArmijo => "gn",
        StrategyKind::Lm => "lm",
    }
}

/// Fit every simulated voxel with each strategy from `LogParams` zero,
/// for at most `n_iters` iterations or until the gain drops below `tol`.
pub fn run_convergence_experiment(
    cfg: &SimConfig,
    strategies: &[Strategy],
    n_iters: usize,
    tol: f64,
) -> Result<ConvergenceResult> {
    let voxels = simulate_voxels(cfg)?;
    let true_nll = voxels
        .par_iter()
        .map(|v| voxel_nll(&v.truth, &v.data))
        .collect::<Result<Vec<f64>>>()?;
    let mut runs = Vec::with_capacity(strategies.len());
    for s in strategies {
        let opts = MlOptions {
            max_iters: n_iters,
            tol,
            ..Default::default()
        };
        let reports = voxels
            .par_iter()
            .map(|v| fit_voxel_ml(&v.data, &LogParams::default(), s, &opts).map(|(_, r)| r))
            .collect::<Result<Vec<FitReport>>>()?;
        let final_nll = reports
            .iter()
            .map(|r| r.objective_trace.last().copied().unwrap_or(f64::NAN))
            .collect();
        runs.push(StrategyRun {
            strategy: *s,
            reports,
            final_nll,
        });
    }
    Ok(ConvergenceResult { runs, true_nll })
}

/// One basis of the parameterisation comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisRun {
    pub basis: Basis,
    /// Iterations until the first gain below the threshold (`n_iters` if never).
    pub iters_to_gain: Vec<usize>,
    pub final_nll: Vec<f64>,
    /// Stopped on the gain criterion at an interior stationary point.
    pub converged: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisResult {
    pub runs: Vec<BasisRun>,
}

/// Largest log coordinate accepted as an interior end point.
pub const INTERIOR_BOUND: f64 = 20.0;
/// Largest log-basis gradient norm accepted as stationary.
pub const STATIONARY_GRAD: f64 = 1e-6;

impl BasisResult {
    pub fn median_iters(&self, run: usize) -> f64 {
        median(&self.runs[run].iters_to_gain.iter().map(|&i| i as f64).collect::<Vec<_>>())
    }

    /// Number of voxels converged in every basis, and how many of them
    /// disagree with the first basis by more than `tol` in final NLL.
    pub fn agreement(&self, tol: f64) -> (usize, usize) {
        let n = self.runs[0].final_nll.len();
        let mut mutual = 0;
        let mut disagree = 0;
        for v in 0..n {
            if self.runs.iter().all(|r| r.converged[v]) {
                mutual += 1;
                let l0 = self.runs[0].final_nll[v];
                if self.runs[1..].iter().any(|r| (r.final_nll[v] - l0).abs() > tol) {
                    disagree += 1;
                }
            }
        }
        (mutual, disagree)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("basis,voxel,iters_to_gain,final_nll,converged\n");
        for r in &self.runs {
            let name = format!("{:?}", r.basis).to_lowercase();
            for v in 0..r.final_nll.len() {
                out.push_str(&format!(
                    "{name},{v},{},{:e},{}\n",
                    r.iters_to_gain[v], r.final_nll[v], r.converged[v] as u8
                ));
            }
        }
        out
    }
}

/// Proposed-strategy fits of the simulated voxels in several bases.
pub fn run_basis_experiment(
    cfg: &SimConfig,
    bases: &[Basis],
    n_iters: usize,
    tol: f64,
    gain_threshold: f64,
) -> Result<BasisResult> {
    let voxels = simulate_voxels(cfg)?;
    let mut runs = Vec::with_capacity(bases.len());
    for &basis in bases {
        let opts = MlOptions {
            max_iters: n_iters,
            tol,
            basis,
            ..Default::default()
        };
        let fits = voxels
            .par_iter()
            .map(|v| {
                let (p, r) = fit_voxel_ml(&v.data, &LogParams::default(), &Strategy::default(), &opts)?;
                let grad = voxel_objective(&p, &v.data, Curvature::GaussNewton)?.grad;
                let iters = r
                    .gain_trace
                    .iter()
                    .position(|&g| g < gain_threshold)
                    .map_or(n_iters, |i| i + 1);
                let converged = r.converged
                    && r.gain_trace.last().is_some_and(|&g| g >= 0.0)
                    && p.to_array().iter().all(|y| y.abs() <= INTERIOR_BOUND)
                    && norm4(&grad) <= STATIONARY_GRAD;
                Ok((iters, *r.objective_trace.last().unwrap_or(&f64::NAN), converged))
            })
            .collect::<Result<Vec<(usize, f64, bool)>>>()?;
        runs.push(BasisRun {
            basis,
            iters_to_gain: fits.iter().map(|f| f.0).collect(),
            final_nll: fits.iter().map(|f| f.1).collect(),
            converged: fits.iter().map(|f| f.2).collect(),
        });
    }
    Ok(BasisResult { runs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecimationConfig {
    pub phantom: PhantomConfig,
    pub echo_counts: Vec<usize>,
    pub fit: FitConfig,
    pub ml: MlOptions,
}

impl DecimationConfig {
    pub fn new(phantom: PhantomConfig) -> Self {
        Self {
            phantom,
            echo_counts: vec![2, 4, 6],
            fit: FitConfig::default(),
            ml: MlOptions {
                max_iters: 200,
                tol: 1e-8,
                ..Default::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub method: String,
    pub echoes: usize,
    pub rmse: [f64; 4],
}

/// Fit the phantom keeping the first `n` echoes of every contrast, by ML
/// and by JTV, and compare to the ground truth over the foreground.
pub fn run_decimation_experiment(cfg: &DecimationConfig) -> Result<Vec<RmseRow>> {
    let ph = simulate_phantom(&cfg.phantom)?;
    let mut rows = Vec::new();
    for &n in &cfg.echo_counts {
        if n == 0 {
            return Err(MpmError::Config("echo count must be positive".into()));
        }
        let cs: Vec<Contrast> = ph.contrasts.iter().map(|c| c.truncated(n)).collect();
        let init = initial_maps(&cs, &ph.foreground_means(), &InitDefaults::default())?;
        let ml = fit_ml_volume(&cs, &init, &Strategy::default(), &cfg.ml, Some(&ph.mask))?;
        rows.push(RmseRow {
            method: "ml".into(),
            echoes: n,
            rmse: ph.rmse(&ml.maps),
        });
        let jtv = fit_map_jtv(&cs, &init, &cfg.fit, Some(&ph.mask))?;
        rows.push(RmseRow {
            method: "jtv".into(),
            echoes: n,
            rmse: ph.rmse(&jtv.maps),
        });
    }
    Ok(rows)
}

pub fn rmse_csv(rows: &[RmseRow]) -> String {
    let mut out = String::from("method,echoes,channel,rmse\n");
    for r in rows {
        for (k, name) in CHANNELS.iter().enumerate() {
            out.push_str(&format!("{},{},{name},{:e}\n", r.method, r.echoes, r.rmse[k]));
        }
    }
    out
}

/// Channel names in storage order.
pub const CHANNELS: [&str; 4] = ["log_a", "log_r1", "log_r2", "logit_mt"];
