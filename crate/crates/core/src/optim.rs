//! Per-voxel maximum-likelihood fitting.
//!
//! Three update rules are available:
//!
//! * `Proposed`: plain steps `y <- y - P⁻¹g` with the absolute-loaded
//!   preconditioner, no line search.
//! * `GnArmijo`: Gauss-Newton direction scaled by a per-voxel Armijo factor,
//!   divided by 10 on failure and multiplied by 10 (up to 1) on success.
//! * `Lm`: Levenberg-Marquardt damping `P + mu diag(P)`, `mu` multiplied by 10
//!   on failure and divided by 10 on success.
//!
//! The baselines only accept a trial point if it lowers the objective.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MpmError, Result};
use crate::linalg::{newton_update, Vec4};
use crate::signal::{voxel_nll, voxel_objective_in_basis, Curvature, Observation};
use crate::types::{
    logit, normalized_gain, Basis, Contrast, EchoSpec, FitReport, HessianLoading, LogParams,
    ParameterMaps,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Proposed,
    GnArmijo,
    Lm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    /// Initial Armijo factor (GN) or damping (LM). Unused by `Proposed`.
    pub init_factor: f64,
}

impl Strategy {
    pub const fn new(kind: StrategyKind) -> Self {
        Self { kind, init_factor: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.init_factor > 0.0) || !self.init_factor.is_finite() {
            return Err(MpmError::Config(format!(
                "strategy factor must be positive, got {}",
                self.init_factor
            )));
        }
        Ok(())
    }
}

impl Default for Strategy {
    fn default() -> Self {
        Self::new(StrategyKind::Proposed)
    }
}

/// Stopping rule and parameterisation of a per-voxel fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlOptions {
    pub max_iters: usize,
    /// Stop once the normalised gain of an accepted step falls below this.
    pub tol: f64,
    pub basis: Basis,
    pub loading: HessianLoading,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-5,
            basis: Basis::Log,
            loading: HessianLoading::AbsDiag,
        }
    }
}

impl MlOptions {
    fn curvature(&self, kind: StrategyKind) -> Curvature {
        match kind {
            StrategyKind::Proposed => Curvature::Loaded(match self.basis {
                Basis::Log => self.loading,
                Basis::Rate | Basis::Time => HessianLoading::AbsRowSum,
            }),
            StrategyKind::GnArmijo | StrategyKind::Lm => Curvature::GaussNewton,
        }
    }
}

// Factors beyond these bounds mean the baseline can no longer move.
const MIN_ARMIJO: f64 = 1e-20;
const MAX_DAMPING: f64 = 1e20;

/// Number of free parameters: the MT channel is frozen without MT data.
pub fn active_params(data: &[Observation]) -> usize {
    if data.iter().any(|o| o.echo.has_mt_pulse) {
        4
    } else {
        3
    }
}

fn freeze(g: &mut Vec4, n_active: usize) {
    for v in g.iter_mut().skip(n_active) {
        *v = 0.0;
    }
}

fn step_point(theta: &Vec4, step: &Vec4, scale: f64, basis: Basis) -> Vec4 {
    let mut next = [0.0; 4];
    for i in 0..4 {
        next[i] = theta[i] - scale * step[i];
    }
    basis.project(&mut next);
    next
}

fn nll_at(theta: &Vec4, basis: Basis, data: &[Observation]) -> f64 {
    voxel_nll(&basis.decode(theta), data).unwrap_or(f64::NAN)
}

/// Fit one voxel by maximum likelihood starting from `init`.
///
/// Each iteration appends the current objective and its normalised gain to
/// the report. A proposed step that lands on a non-finite objective stops the
/// fit with `diverged` set and returns the last finite point.
pub fn fit_voxel_ml(
    data: &[Observation],
    init: &LogParams,
    strategy: &Strategy,
    opts: &MlOptions,
) -> Result<(LogParams, FitReport)> {
    strategy.validate()?;
    if data.is_empty() {
        return Err(MpmError::Domain("voxel fit needs at least one echo".into()));
    }
    if !init.is_finite() {
        return Err(MpmError::Domain(format!("non-finite initial parameters {init:?}")));
    }
    let basis = opts.basis;
    let curvature = opts.curvature(strategy.kind);
    let n_active = active_params(data);

    let mut theta = basis.encode(init);
    basis.project(&mut theta);
    let l0 = nll_at(&theta, basis, data);
    if !l0.is_finite() {
        return Err(MpmError::NonFinite(format!("initial objective {l0} at {init:?}")));
    }
    let mut report = FitReport {
        objective_trace: vec![l0],
        ..Default::default()
    };
    let mut cur = l0;
    let mut factor = strategy.init_factor;

    for _ in 0..opts.max_iters {
        let obj = voxel_objective_in_basis(&theta, basis, data, curvature)?;
        let mut g = obj.grad;
        freeze(&mut g, n_active);
        let mut p = obj.precond;
        if strategy.kind == StrategyKind::Lm {
            for i in 0..n_active {
                p[i][i] *= 1.0 + factor;
            }
        }
        let step = match newton_update(&g, &p, n_active) {
            Ok(s) => s,
            Err(MpmError::Singular(_)) => break,
            Err(e) => return Err(e),
        };
        let scale = if strategy.kind == StrategyKind::GnArmijo { factor } else { 1.0 };
        let trial = step_point(&theta, &step, scale, basis);
        let l_trial = nll_at(&trial, basis, data);
        report.iterations_used += 1;

        let accepted = match strategy.kind {
            StrategyKind::Proposed => {
                if !l_trial.is_finite() {
                    report.diverged = true;
                    break;
                }
                true
            }
            StrategyKind::GnArmijo => {
                let ok = l_trial < cur;
                factor = if ok { (factor * 10.0).min(1.0) } else { factor / 10.0 };
                ok
            }
            StrategyKind::Lm => {
                let ok = l_trial < cur;
                factor = if ok { factor / 10.0 } else { factor * 10.0 };
                ok
            }
        };

        let prev = cur;
        if accepted {
            theta = trial;
            cur = l_trial;
        }
        let gain = normalized_gain(l0, prev, cur);
        report.objective_trace.push(cur);
        report.gain_trace.push(gain);

        if accepted && gain < opts.tol {
            report.converged = true;
            break;
        }
        if factor < MIN_ARMIJO || factor > MAX_DAMPING {
            break;
        }
    }
    Ok((basis.decode(&theta), report))
}

/// Observations of voxel `n` across all contrasts (all on the same grid).
pub fn voxel_observations(contrasts: &[Contrast], n: usize) -> Vec<Observation> {
    let mut obs = Vec::new();
    for c in contrasts {
        for (e, vol) in c.echoes.iter().zip(&c.volumes) {
            obs.push(Observation {
                echo: *e,
                x: vol[n],
                b1p: c.b1p(n),
                b1m: c.b1m(n),
            });
        }
    }
    obs
}

/// Result of a volumetric ML fit.
#[derive(Clone, Debug)]
pub struct VolumeFit {
    pub maps: ParameterMaps,
    /// Sum over fitted voxels of the per-voxel traces; finished voxels carry
    /// their last value forward.
    pub report: FitReport,
    /// Voxels whose fit failed; they keep their initial value.
    pub failed: Vec<bool>,
    /// Per-voxel reports (`None` outside the mask, on failure, or when the
    /// contrasts were resampled and the fit ran jointly).
    pub voxel_reports: Vec<Option<FitReport>>,
}

/// Sum per-voxel traces into one volume trace.
pub(crate) fn sum_traces(reports: &[&FitReport]) -> Vec<f64> {
    let len = reports.iter().map(|r| r.objective_trace.len()).max().unwrap_or(0);
    let mut total = vec![0.0; len];
    for r in reports {
        let last = *r.objective_trace.last().unwrap_or(&0.0);
        for (k, t) in total.iter_mut().enumerate() {
            *t += r.objective_trace.get(k).copied().unwrap_or(last);
        }
    }
    total
}

/// Independent ML fits of every voxel where `mask` is true (all voxels when
/// no mask is given). Contrasts must share the grid of `init`.
pub fn fit_ml_volume(
    contrasts: &[Contrast],
    init: &ParameterMaps,
    strategy: &Strategy,
    opts: &MlOptions,
    mask: Option<&[bool]>,
) -> Result<VolumeFit> {
    if contrasts.is_empty() {
        return Err(MpmError::Config("no contrasts given".into()));
    }
    let n = init.grid.n_voxels();
    for c in contrasts {
        c.validate()?;
    }
    if contrasts.iter().any(|c| !c.grid.same_space(&init.grid)) {
        return fit_ml_projected(contrasts, init, strategy, opts, mask);
    }
    if let Some(m) = mask {
        if m.len() != n {
            return Err(MpmError::Config(format!("mask has {} voxels, expected {n}", m.len())));
        }
    }
    strategy.validate()?;

    let results: Vec<Option<Result<(LogParams, FitReport)>>> = (0..n)
        .into_par_iter()
        .map(|v| {
            if mask.is_some_and(|m| !m[v]) {
                return None;
            }
            let obs = voxel_observations(contrasts, v);
            Some(fit_voxel_ml(&obs, &init.get(v), strategy, opts))
        })
        .collect();

    let mut maps = init.clone();
    let mut failed = vec![false; n];
    let mut reports = Vec::new();
    let mut converged = true;
    let mut iterations = 0;
    let mut diverged = false;
    let mut voxel_reports = vec![None; n];
    for (v, r) in results.iter().enumerate() {
        match r {
            None => {}
            Some(Ok((p, rep))) => {
                voxel_reports[v] = Some(rep.clone());
                maps.set(v, *p);
                converged &= rep.converged;
                diverged |= rep.diverged;
                iterations = iterations.max(rep.iterations_used);
                reports.push(rep);
            }
            Some(Err(_)) => failed[v] = true,
        }
    }
    let objective_trace = sum_traces(&reports);
    let l0 = objective_trace.first().copied().unwrap_or(0.0);
    let gain_trace = objective_trace
        .windows(2)
        .map(|w| normalized_gain(l0, w[0], w[1]))
        .collect();
    Ok(VolumeFit {
        maps,
        report: FitReport {
            objective_trace,
            gain_trace,
            converged,
            iterations_used: iterations,
            outer_objective: Vec::new(),
            diverged,
        },
        failed,
        voxel_reports,
    })
}

/// ML fit of contrasts living on other grids: the unregularised case of
/// the projected volume solver, with one Newton step per iteration.
fn fit_ml_projected(
    contrasts: &[Contrast],
    init: &ParameterMaps,
    strategy: &Strategy,
    opts: &MlOptions,
    mask: Option<&[bool]>,
) -> Result<VolumeFit> {
    if strategy.kind != StrategyKind::Proposed || opts.basis != Basis::Log {
        return Err(MpmError::Config(
            "resampled contrasts need the proposed strategy in the log basis".into(),
        ));
    }
    let cfg = crate::types::FitConfig {
        lambda: [0.0; 4],
        irls_iters: 1,
        newton_iters: opts.max_iters,
        tol_newton: opts.tol,
        hessian_loading: opts.loading,
        ..Default::default()
    };
    let fit = crate::regularization::fit_map_jtv(contrasts, init, &cfg, mask)?;
    Ok(VolumeFit {
        maps: fit.maps,
        report: FitReport {
            outer_objective: Vec::new(),
            converged: fit.report.gain_trace.last().is_some_and(|&g| g < opts.tol),
            ..fit.report
        },
        failed: vec![false; init.grid.n_voxels()],
        voxel_reports: vec![None; init.grid.n_voxels()],
    })
}

/// Constants used to turn a mean foreground intensity into starting maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitDefaults {
    pub r1: f64,
    pub r2: f64,
    pub mt: f64,
}

impl Default for InitDefaults {
    fn default() -> Self {
        Self {
            r1: 1.0,
            r2: 20.0,
            mt: 0.05,
        }
    }
}

/// Constant starting parameters from per-contrast mean foreground intensities.
///
/// R1, R2* and MTsat take the defaults; `a` is chosen so that the predicted
/// first-echo signal matches the mean intensity of each contrast, averaged
/// in the log domain across contrasts.
pub fn initial_params(contrasts: &[Contrast], means: &[f64], defaults: &InitDefaults) -> Result<LogParams> {
    if contrasts.len() != means.len() || contrasts.is_empty() {
        return Err(MpmError::Config("need one mean intensity per contrast".into()));
    }
    let unit = LogParams::new(0.0, defaults.r1.ln(), defaults.r2.ln(), logit(defaults.mt));
    if !unit.is_finite() {
        return Err(MpmError::Config(format!("invalid initial defaults {defaults:?}")));
    }
    let mut acc = 0.0;
    for (c, &m) in contrasts.iter().zip(means) {
        if !(m > 0.0) {
            return Err(MpmError::Domain(format!("mean intensity must be positive, got {m}")));
        }
        let e: &EchoSpec = c
            .echoes
            .first()
            .ok_or_else(|| MpmError::Config("contrast without echoes".into()))?;
        let s = crate::signal::spgr_signal(&unit, e, 1.0, 1.0)?;
        acc += (m / s).ln();
    }
    Ok(LogParams {
        a_log: acc / means.len() as f64,
        ..unit
    })
}

/// Starting maps for a volume fit (see [`initial_params`]).
pub fn initial_maps(contrasts: &[Contrast], means: &[f64], defaults: &InitDefaults) -> Result<ParameterMaps> {
    let p = initial_params(contrasts, means, defaults)?;
    let grid = contrasts[0].grid.clone();
    Ok(ParameterMaps::constant(grid, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::spgr_signal;
    use crate::types::VolumeGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn protocol() -> Vec<EchoSpec> {
        let mut v = Vec::new();
        for (flip, mt) in [(21f64, false), (6.0, false), (6.0, true)] {
            for e in 0..6 {
                v.push(EchoSpec {
                    flip_angle: flip.to_radians(),
                    tr: 0.025,
                    te: 0.0023 * (e + 1) as f64,
                    sigma2: 1.0,
                    has_mt_pulse: mt,
                });
            }
        }
        v
    }

    fn noiseless(p: &LogParams, echoes: &[EchoSpec]) -> Vec<Observation> {
        echoes
            .iter()
            .map(|e| Observation::new(*e, spgr_signal(p, e, 1.0, 1.0).unwrap()))
            .collect()
    }

    fn truth() -> LogParams {
        LogParams::new(8.0, 0.0, 3.0, logit(0.02))
    }

    #[test]
    fn noiseless_recovery() {
        let data = noiseless(&truth(), &protocol());
        let init = LogParams::new(7.0, 0.5, 2.5, logit(0.05));
        let opts = MlOptions {
            max_iters: 2000,
            tol: 1e-16,
            ..Default::default()
        };
        let (p, rep) = fit_voxel_ml(&data, &init, &Strategy::default(), &opts).unwrap();
        let err = p
            .to_array()
            .iter()
            .zip(truth().to_array())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-6, "error {err}");
        assert!(*rep.objective_trace.last().unwrap() <= 1e-10);
    }

    #[test]
    fn proposed_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let echoes = protocol();
        for _ in 0..50 {
            let t = LogParams::new(
                rng.gen_range(6.0..9.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(2.0..4.0),
                rng.gen_range(-5.0..-2.0),
            );
            let data: Vec<_> = noiseless(&t, &echoes)
                .into_iter()
                .map(|mut o| {
                    o.x += rng.gen_range(-3.0..3.0);
                    o
                })
                .collect();
            let (_, rep) = fit_voxel_ml(&data, &LogParams::default(), &Strategy::default(), &MlOptions {
                max_iters: 200,
                tol: 1e-12,
                ..Default::default()
            })
            .unwrap();
            assert!(rep.gain_trace.iter().all(|&g| g >= -1e-10), "{:?}", rep.gain_trace);
        }
    }

    #[test]
    fn start_at_optimum_does_not_move() {
        let data = noiseless(&truth(), &protocol());
        for kind in [StrategyKind::Proposed, StrategyKind::GnArmijo, StrategyKind::Lm] {
            let (p, rep) = fit_voxel_ml(&data, &truth(), &Strategy::new(kind), &MlOptions::default()).unwrap();
            assert_eq!(p, truth());
            assert!(rep.objective_trace.iter().all(|&l| l == rep.objective_trace[0]));
        }
    }

    #[test]
    fn baselines_never_increase() {
        let data = noiseless(&truth(), &protocol());
        for kind in [StrategyKind::GnArmijo, StrategyKind::Lm] {
            let (_, rep) =
                fit_voxel_ml(&data, &LogParams::default(), &Strategy::new(kind), &MlOptions::default()).unwrap();
            assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn frozen_mt_without_mt_data() {
        let echoes: Vec<_> = protocol().into_iter().filter(|e| !e.has_mt_pulse).collect();
        let data = noiseless(&truth(), &echoes);
        assert_eq!(active_params(&data), 3);
        let init = LogParams::new(7.0, 0.5, 2.5, 1.234);
        let (p, _) = fit_voxel_ml(&data, &init, &Strategy::default(), &MlOptions::default()).unwrap();
        assert_eq!(p.mt_logit, 1.234);
    }

    #[test]
    fn rate_and_time_bases_reach_the_same_optimum() {
        let data = noiseless(&truth(), &protocol());
        let init = LogParams::new(7.5, 0.2, 2.8, logit(0.03));
        for basis in [Basis::Rate, Basis::Time] {
            let opts = MlOptions {
                max_iters: 20000,
                tol: 1e-16,
                basis,
                ..Default::default()
            };
            let (_, rep) = fit_voxel_ml(&data, &init, &Strategy::default(), &opts).unwrap();
            assert!(*rep.objective_trace.last().unwrap() < 1e-6, "{basis:?}");
        }
    }

    #[test]
    fn volume_matches_standalone_fits() {
        let grid = VolumeGrid::new([2, 2, 2], [1.0; 3]);
        let echoes = protocol();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truths: Vec<LogParams> = (0..8)
            .map(|_| LogParams::new(rng.gen_range(6.0..9.0), rng.gen_range(-1.0..1.0), 3.0, logit(0.02)))
            .collect();
        let mut contrasts = Vec::new();
        for chunk in echoes.chunks(6) {
            let vols = chunk
                .iter()
                .map(|e| truths.iter().map(|t| spgr_signal(t, e, 1.0, 1.0).unwrap()).collect())
                .collect();
            contrasts.push(Contrast::new(chunk.to_vec(), vols, grid.clone()).unwrap());
        }
        let init = ParameterMaps::constant(grid, LogParams::new(7.0, 0.0, 2.5, logit(0.05)));
        let strat = Strategy::default();
        let opts = MlOptions::default();
        let fit = fit_ml_volume(&contrasts, &init, &strat, &opts, None).unwrap();
        for v in 0..8 {
            let (p, _) = fit_voxel_ml(&voxel_observations(&contrasts, v), &init.get(v), &strat, &opts).unwrap();
            assert_eq!(fit.maps.get(v), p);
        }
        assert!(fit.failed.iter().all(|f| !f));
    }

    #[test]
    fn initial_params_match_mean_signal() {
        let grid = VolumeGrid::new([1, 1, 1], [1.0; 3]);
        let echoes = protocol();
        let c = Contrast::new(echoes[..6].to_vec(), vec![vec![1.0]; 6], grid).unwrap();
        let p = initial_params(std::slice::from_ref(&c), &[250.0], &InitDefaults::default()).unwrap();
        let s = spgr_signal(&p, &c.echoes[0], 1.0, 1.0).unwrap();
        assert!((s - 250.0).abs() < 1e-9);
        assert!(initial_params(&[c], &[0.0], &InitDefaults::default()).is_err());
    }
}
