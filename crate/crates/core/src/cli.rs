//! Command-line interface. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{MpmError, Result};
use crate::estatics::loglin_fit;
use crate::io::{
    contrast_from_volume, read_dataset, read_json, volume_from_contrast, write_atomic, write_json, write_volume, Dataset,
    Dtype, Manifest, Volume,
};
use crate::noise::{estimate_noise, pool_variances};
use crate::optim::{fit_ml_volume, initial_maps, InitDefaults, MlOptions, Strategy, StrategyKind};
use crate::regularization::fit_map_jtv;
use crate::simulate::{
    rmse_csv, run_basis_experiment, run_convergence_experiment, run_decimation_experiment, simulate_phantom,
    strategy_name, DecimationConfig, PhantomConfig, SimConfig, CHANNELS,
};
use crate::toys::{
    grid_sweep_1d, random_sweep_2d, sweep_csv, toy_iterate, trajectory_csv, ToyKind, ToyPreconditioner, ToyProblem,
};
use crate::types::{Basis, Contrast, FitConfig, FitReport, HessianLoading, ParameterMaps};
use crate::uncertainty::posterior_variances;

#[derive(Parser, Debug)]
#[command(name = "mpm", version, about = "Joint quantitative MRI parameter mapping", arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a noisy multi-contrast phantom dataset.
    Simulate(SimulateArgs),
    /// Fit parameter maps to a dataset.
    Fit(FitArgs),
    /// Run a toy problem trajectory or a monotonic-condition sweep.
    Toy(ToyArgs),
    /// Single-voxel convergence study and basis comparison.
    Convergence(ConvergenceArgs),
    /// Echo decimation study on a phantom.
    Decimate(DecimateArgs),
    /// Fit a dataset and write posterior uncertainty maps.
    Uncertainty(UncertaintyArgs),
    /// Per-voxel traces of the proposed, Gauss-Newton and Levenberg-Marquardt fits.
    CompareOptimizers(CompareArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BasisArg {
    Log,
    Rate,
    Time,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LoadingArg {
    AbsDiag,
    AbsRowSum,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StrategyArg {
    Proposed,
    Gn,
    Lm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DtypeArg {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ToyKindArg {
    Exp1d,
    NestedExp1d,
    Exp2d,
    NestedExp2d,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PrecondArg {
    Newton,
    Gn,
    Proposed,
    ProposedPlus,
}

impl From<BasisArg> for Basis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Log => Basis::Log,
            BasisArg::Rate => Basis::Rate,
            BasisArg::Time => Basis::Time,
        }
    }
}

impl From<LoadingArg> for HessianLoading {
    fn from(l: LoadingArg) -> Self {
        match l {
            LoadingArg::AbsDiag => HessianLoading::AbsDiag,
            LoadingArg::AbsRowSum => HessianLoading::AbsRowSum,
        }
    }
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Proposed => StrategyKind::Proposed,
            StrategyArg::Gn => StrategyKind::GnArmijo,
            StrategyArg::Lm => StrategyKind::Lm,
        }
    }
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        }
    }
}

impl From<ToyKindArg> for ToyKind {
    fn from(k: ToyKindArg) -> Self {
        match k {
            ToyKindArg::Exp1d => ToyKind::Exp1d,
            ToyKindArg::NestedExp1d => ToyKind::NestedExp1d,
            ToyKindArg::Exp2d => ToyKind::Exp2d,
            ToyKindArg::NestedExp2d => ToyKind::NestedExp2d,
        }
    }
}

impl From<PrecondArg> for ToyPreconditioner {
    fn from(p: PrecondArg) -> Self {
        match p {
            PrecondArg::Newton => ToyPreconditioner::Newton,
            PrecondArg::Gn => ToyPreconditioner::GaussNewton,
            PrecondArg::Proposed => ToyPreconditioner::Proposed,
            PrecondArg::ProposedPlus => ToyPreconditioner::ProposedPlus,
        }
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("invalid number '{v}': {e}")))
        .collect()
}

fn parse_lambda(s: &str) -> std::result::Result<[f64; 4], String> {
    let v = parse_list(s)?;
    let l = match v.len() {
        1 => [v[0]; 4],
        4 => [v[0], v[1], v[2], v[3]],
        n => return Err(format!("expected 1 or 4 values, got {n}")),
    };
    if l.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err("lambda must be finite and >= 0".into());
    }
    Ok(l)
}

/// Regularised-solver settings shared by several commands.
#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Regularisation weight, one value or four comma-separated values.
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: Option<[f64; 4]>,
    #[arg(long)]
    pub irls: Option<usize>,
    #[arg(long)]
    pub newton: Option<usize>,
    #[arg(long)]
    pub cg: Option<usize>,
    #[arg(long)]
    pub tol_irls: Option<f64>,
    #[arg(long)]
    pub tol_newton: Option<f64>,
    #[arg(long)]
    pub tol_cg: Option<f64>,
    #[arg(long, value_enum)]
    pub loading: Option<LoadingArg>,
    /// Smoothing of the JTV square root.
    #[arg(long)]
    pub eps: Option<f64>,
}

impl SolverArgs {
    fn apply(&self, mut c: FitConfig) -> Result<FitConfig> {
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.irls {
            c.irls_iters = v;
        }
        if let Some(v) = self.newton {
            c.newton_iters = v;
        }
        if let Some(v) = self.cg {
            c.cg_iters = v;
        }
        if let Some(v) = self.tol_irls {
            c.tol_irls = v;
        }
        if let Some(v) = self.tol_newton {
            c.tol_newton = v;
        }
        if let Some(v) = self.tol_cg {
            c.tol_cg = v;
        }
        if let Some(v) = self.loading {
            c.hessian_loading = v.into();
        }
        if let Some(v) = self.eps {
            c.jtv_eps = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Phantom size along each axis (at most 48).
    #[arg(long, default_value_t = 24)]
    pub size: usize,
    /// Mean first-echo foreground signal over noise standard deviation; 0 for noiseless data.
    #[arg(long, default_value_t = 20.0)]
    pub snr: f64,
    #[arg(long, value_enum, default_value = "f64")]
    pub dtype: DtypeArg,
    /// Rerun the experiment recorded in a manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("method").required(true).args(["ml", "jtv", "estatics"])))]
pub struct FitArgs {
    /// Dataset description (JSON).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Voxel-wise maximum likelihood.
    #[arg(long)]
    pub ml: bool,
    /// JTV-regularised fit.
    #[arg(long)]
    pub jtv: bool,
    /// Log-linear fit of intercepts and a shared R2*.
    #[arg(long)]
    pub estatics: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value = "proposed")]
    pub strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "log")]
    pub basis: BasisArg,
    /// Keep only the first n echoes of every contrast.
    #[arg(long)]
    pub echoes: Option<usize>,
    /// Iteration cap of the ML fits.
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    /// Gain tolerance of the ML fits.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, value_enum, default_value = "f64")]
    pub dtype: DtypeArg,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    #[arg(long, value_enum)]
    pub kind: ToyKindArg,
    /// Observations; one value for 1D problems (a list for 1D sweeps), two for 2D problems.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// Sampling times of 2D problems.
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,
    /// Starting point (y, or y,z).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "proposed")]
    pub precond: PrecondArg,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    /// Check the monotonic condition over a grid (1D) or random problems (2D).
    #[arg(long)]
    pub sweep: bool,
    /// Grid range of 1D sweeps.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-8.0, 8.0])]
    pub range: Vec<f64>,
    /// Points of a 1D sweep or problems of a 2D sweep.
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    /// Seed of 2D sweeps.
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV output file (standard output if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConvergenceArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub voxels: usize,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    /// Early-stopping gain.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Gain threshold for the iteration counts of the basis comparison.
    #[arg(long, default_value_t = 1e-5)]
    pub gain_threshold: f64,
    /// Skip the basis comparison.
    #[arg(long)]
    pub no_bases: bool,
    /// Also write per-iteration traces (large).
    #[arg(long)]
    pub traces: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecimateArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 20.0)]
    pub snr: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 6])]
    pub echoes: Vec<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct UncertaintyArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Use a voxel-wise ML fit instead of the JTV fit.
    #[arg(long)]
    pub ml: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub echoes: Option<usize>,
    #[arg(long, value_enum, default_value = "f64")]
    pub dtype: DtypeArg,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Dataset to fit; simulated single voxels are used when absent.
    #[arg(long = "in", conflicts_with_all = ["seed", "voxels"])]
    pub input: Option<PathBuf>,
    #[arg(long, required_unless_present_any = ["input", "manifest"])]
    pub seed: Option<u64>,
    #[arg(long)]
    pub voxels: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Parse and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Toy(a) => toy_cmd(a),
        Command::Convergence(a) => convergence_cmd(a),
        Command::Decimate(a) => decimate_cmd(a),
        Command::Uncertainty(a) => uncertainty_cmd(a),
        Command::CompareOptimizers(a) => compare_cmd(a),
    }
}

fn load_manifest<T: for<'de> Deserialize<'de>>(path: &Path, command: &str) -> Result<T> {
    let m: Manifest<serde_json::Value> = read_json(path)?;
    if m.command != command {
        return Err(MpmError::Config(format!(
            "manifest {} records command '{}', not '{command}'",
            path.display(),
            m.command
        )));
    }
    serde_json::from_value(m.config).map_err(|e| MpmError::Format(format!("manifest {}: {e}", path.display())))
}

fn write_csv(path: &Path, csv: &str) -> Result<()> {
    write_atomic(path, csv.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub phantom: PhantomConfig,
    pub dtype: Dtype,
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let cfg = match &a.manifest {
        Some(m) => load_manifest(m, "simulate")?,
        None => SimulateConfig {
            phantom: PhantomConfig::new(
                a.size,
                a.seed.expect("required by the parser"),
                if a.snr == 0.0 { f64::INFINITY } else { a.snr },
            ),
            dtype: a.dtype.into(),
        },
    };
    run_simulate(&cfg, &a.out)
}

/// Write a phantom dataset: contrast volumes, mask, ground truth and
/// `data.json`.
pub fn run_simulate(cfg: &SimulateConfig, out: &Path) -> Result<()> {
    let ph = simulate_phantom(&cfg.phantom)?;
    let mut names = Vec::new();
    for (k, c) in ph.contrasts.iter().enumerate() {
        let name = format!("contrast_{k}");
        write_volume(&out.join(&name), &volume_from_contrast(c, true), cfg.dtype)?;
        names.push(name);
    }
    let grid = ph.truth.grid.clone();
    let mask: Vec<f64> = ph.mask.iter().map(|&m| m as u8 as f64).collect();
    write_volume(&out.join("mask"), &Volume::single(grid.clone(), mask), Dtype::F32)?;
    write_maps(&out.join("truth"), &ph.truth, Dtype::F64)?;
    write_json(
        &out.join("data.json"),
        &Dataset {
            contrasts: names,
            mask: Some("mask".into()),
        },
    )?;
    write_json(&out.join("manifest.json"), &Manifest::new("simulate", cfg))
}

/// One volume per channel under `dir`.
pub fn write_maps(dir: &Path, maps: &ParameterMaps, dtype: Dtype) -> Result<()> {
    for (k, name) in CHANNELS.iter().enumerate() {
        write_volume(&dir.join(name), &Volume::single(maps.grid.clone(), maps.channel(k)), dtype)?;
    }
    Ok(())
}

pub fn read_maps(dir: &Path) -> Result<ParameterMaps> {
    let mut maps: Option<ParameterMaps> = None;
    for (k, name) in CHANNELS.iter().enumerate() {
        let v = crate::io::read_volume(&dir.join(name))?;
        let m = maps.get_or_insert_with(|| ParameterMaps::constant(v.grid.clone(), Default::default()));
        if v.grid != m.grid {
            return Err(MpmError::Format(format!("{name} lies on a different grid")));
        }
        m.set_channel(k, &v.frames[0]);
    }
    Ok(maps.expect("four channels"))
}

/// Contrasts, mask and per-contrast mean foreground intensity.
pub type LoadedContrasts = (Vec<Contrast>, Option<Vec<bool>>, Vec<f64>);

/// Load a dataset for fitting.
/// Missing noise variances are estimated per echo from the magnitude
/// histogram and pooled by geometric mean.
pub fn load_contrasts(path: &Path, echoes: Option<usize>) -> Result<LoadedContrasts> {
    let ds = read_dataset(path)?;
    let mut contrasts = Vec::with_capacity(ds.volumes.len());
    let mut means = Vec::with_capacity(ds.volumes.len());
    for vol in ds.volumes {
        let needs_sigma = vol.protocol.as_ref().is_some_and(|p| p.sigma2.is_none());
        let mut fg = None;
        let sigma2 = if needs_sigma {
            let mut vars = Vec::with_capacity(vol.frames.len());
            for (e, f) in vol.frames.iter().enumerate() {
                let mag: Vec<f64> = f.iter().map(|x| x.abs()).collect();
                let est = estimate_noise(&mag)?;
                if e == 0 {
                    fg = Some(est.mu_fg);
                }
                vars.push(est.sigma2_bg);
            }
            Some(pool_variances(&vars)?)
        } else {
            None
        };
        let c = contrast_from_volume(vol, sigma2)?;
        let mean = match (&ds.mask, fg) {
            (Some(m), _) => {
                let vals: Vec<f64> = (0..m.len()).filter(|&v| m[v]).map(|v| c.volumes[0][v]).collect();
                if vals.is_empty() {
                    return Err(MpmError::Config("mask is empty".into()));
                }
                vals.iter().sum::<f64>() / vals.len() as f64
            }
            (None, Some(mu)) => mu,
            (None, None) => {
                let mag: Vec<f64> = c.volumes[0].iter().map(|x| x.abs()).collect();
                estimate_noise(&mag)?.mu_fg
            }
        };
        means.push(mean);
        contrasts.push(match echoes {
            Some(n) => c.truncated(n),
            None => c,
        });
    }
    Ok((contrasts, ds.mask, means))
}

fn report_csv(r: &FitReport) -> String {
    let mut out = String::from("iter,objective,gain\n");
    for (i, l) in r.objective_trace.iter().enumerate() {
        let g = if i == 0 { f64::NAN } else { r.gain_trace.get(i - 1).copied().unwrap_or(f64::NAN) };
        out.push_str(&format!("{i},{l:e},{g:e}\n"));
    }
    out
}

fn voxel_traces_csv(rows: &mut String, label: &str, reports: &[Option<FitReport>]) {
    for (v, r) in reports.iter().enumerate() {
        if let Some(r) = r {
            for (i, l) in r.objective_trace.iter().enumerate() {
                let g = if i == 0 { f64::NAN } else { r.gain_trace[i - 1] };
                rows.push_str(&format!("{label}{v},{i},{l:e},{g:e}\n"));
            }
        }
    }
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let (contrasts, mask, means) = load_contrasts(&a.input, a.echoes)?;
    let dtype: Dtype = a.dtype.into();
    if a.estatics {
        let fit = loglin_fit(&contrasts)?;
        let grid = contrasts[0].grid.clone();
        for (k, b) in fit.intercepts.iter().enumerate() {
            write_volume(&a.out.join(format!("intercept_{k}")), &Volume::single(grid.clone(), b.clone()), dtype)?;
        }
        write_volume(&a.out.join("log_r2"), &Volume::single(grid.clone(), fit.r2_log.clone()), dtype)?;
        let flags = fit.masked.iter().map(|&m| m as u8 as f64).collect();
        write_volume(&a.out.join("masked"), &Volume::single(grid, flags), Dtype::F32)?;
        return write_json(
            &a.out.join("report.json"),
            &serde_json::json!({
                "method": "estatics",
                "masked": fit.masked.iter().filter(|m| **m).count(),
                "clamped": fit.clamped.iter().filter(|m| **m).count(),
            }),
        );
    }
    let init = initial_maps(&contrasts, &means, &InitDefaults::default())?;
    let config = a.solver.apply(FitConfig {
        basis: a.basis.into(),
        ..Default::default()
    })?;
    if a.ml {
        let opts = MlOptions {
            max_iters: a.max_iters,
            tol: a.tol,
            basis: a.basis.into(),
            loading: config.hessian_loading,
        };
        let fit = fit_ml_volume(&contrasts, &init, &Strategy::new(a.strategy.into()), &opts, mask.as_deref())?;
        write_maps(&a.out, &fit.maps, dtype)?;
        write_csv(&a.out.join("trace.csv"), &report_csv(&fit.report))?;
        let mut rows = String::from("voxel,iter,nll,gain\n");
        voxel_traces_csv(&mut rows, "", &fit.voxel_reports);
        write_csv(&a.out.join("voxel_traces.csv"), &rows)?;
        write_json(
            &a.out.join("report.json"),
            &serde_json::json!({
                "method": "ml",
                "strategy": strategy_name(a.strategy.into()),
                "failed": fit.failed.iter().filter(|f| **f).count(),
                "report": fit.report,
            }),
        )
    } else {
        let fit = fit_map_jtv(&contrasts, &init, &config, mask.as_deref())?;
        write_maps(&a.out, &fit.maps, dtype)?;
        write_volume(&a.out.join("weights"), &Volume::single(fit.maps.grid.clone(), fit.weights.w.clone()), dtype)?;
        write_csv(&a.out.join("trace.csv"), &report_csv(&fit.report))?;
        write_json(
            &a.out.join("report.json"),
            &serde_json::json!({ "method": "jtv", "config": config, "report": fit.report }),
        )
    }
}

fn toy_cmd(a: ToyArgs) -> Result<()> {
    let kind: ToyKind = a.kind.into();
    let which: ToyPreconditioner = a.precond.into();
    let csv = if a.sweep {
        if kind.dim() == 1 {
            let xs = a.x.clone().unwrap_or_else(|| match kind {
                ToyKind::NestedExp1d => vec![0.1, 0.5, 0.9],
                _ => vec![0.1, 1.0, 10.0],
            });
            if a.range.len() != 2 {
                return Err(MpmError::Config("--range needs two values".into()));
            }
            sweep_csv(&grid_sweep_1d(kind, &xs, [a.range[0], a.range[1]], a.points, which)?)
        } else {
            let seed = a
                .seed
                .ok_or_else(|| MpmError::Config("2D sweeps are randomized and need --seed".into()))?;
            sweep_csv(&random_sweep_2d(kind, a.points, seed, which)?)
        }
    } else {
        let x = a.x.clone().ok_or_else(|| MpmError::Config("--x is required".into()))?;
        let start = a.start.clone().ok_or_else(|| MpmError::Config("--start is required".into()))?;
        let prob = if kind.dim() == 1 {
            if x.len() != 1 || start.len() != 1 {
                return Err(MpmError::Config("1D problems take one --x and one --start value".into()));
            }
            ToyProblem {
                kind,
                x: [x[0], 0.0],
                t: [0.0; 2],
            }
        } else {
            let t = a.t.clone().ok_or_else(|| MpmError::Config("--t is required for 2D problems".into()))?;
            if x.len() != 2 || t.len() != 2 || start.len() != 2 {
                return Err(MpmError::Config("2D problems take two --x, --t and --start values".into()));
            }
            ToyProblem {
                kind,
                x: [x[0], x[1]],
                t: [t[0], t[1]],
            }
        };
        let y0 = [start[0], start.get(1).copied().unwrap_or(0.0)];
        let traj = toy_iterate(&prob, y0, which, a.iters)?;
        trajectory_csv(&prob, &traj, which)
    };
    match &a.out {
        Some(p) => write_csv(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub sim: SimConfig,
    pub iters: usize,
    pub tol: f64,
    pub gain_threshold: f64,
    pub bases: bool,
    pub traces: bool,
}

fn convergence_cmd(a: ConvergenceArgs) -> Result<()> {
    let cfg = match &a.manifest {
        Some(m) => load_manifest(m, "convergence")?,
        None => ConvergenceConfig {
            sim: SimConfig {
                n_voxels: a.voxels,
                seed: a.seed.expect("required by the parser"),
                ..Default::default()
            },
            iters: a.iters,
            tol: a.tol,
            gain_threshold: a.gain_threshold,
            bases: !a.no_bases,
            traces: a.traces,
        },
    };
    run_convergence(&cfg, &a.out)
}

fn all_strategies() -> [Strategy; 3] {
    [
        Strategy::new(StrategyKind::Proposed),
        Strategy::new(StrategyKind::GnArmijo),
        Strategy::new(StrategyKind::Lm),
    ]
}

pub fn run_convergence(cfg: &ConvergenceConfig, out: &Path) -> Result<()> {
    let res = run_convergence_experiment(&cfg.sim, &all_strategies(), cfg.iters, cfg.tol)?;
    write_csv(&out.join("final.csv"), &res.final_csv())?;
    if cfg.traces {
        write_csv(&out.join("traces.csv"), &res.trace_csv())?;
    }
    let mut summary = serde_json::json!({
        "median_true_nll": res.median_true_nll(),
        "strategies": res.runs.iter().enumerate().map(|(i, r)| serde_json::json!({
            "strategy": strategy_name(r.strategy.kind),
            "median_final_nll": res.median_final_nll(i),
            "voxels_with_negative_gain": res.negative_gain_voxels(i, 1e-10),
            "diverged": r.reports.iter().filter(|r| r.diverged).count(),
        })).collect::<Vec<_>>(),
    });
    if cfg.bases {
        let b = run_basis_experiment(&cfg.sim, &[Basis::Log, Basis::Rate, Basis::Time], cfg.iters, cfg.tol, cfg.gain_threshold)?;
        write_csv(&out.join("basis.csv"), &b.csv())?;
        let (mutual, disagree) = b.agreement(1e-4);
        summary["bases"] = serde_json::json!({
            "median_iterations": b.runs.iter().enumerate().map(|(i, r)| (format!("{:?}", r.basis).to_lowercase(), b.median_iters(i))).collect::<std::collections::BTreeMap<_, _>>(),
            "mutually_converged": mutual,
            "disagreeing": disagree,
        });
    }
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("manifest.json"), &Manifest::new("convergence", cfg))
}

fn decimate_cmd(a: DecimateArgs) -> Result<()> {
    let cfg = match &a.manifest {
        Some(m) => load_manifest(m, "decimate")?,
        None => {
            let mut c = DecimationConfig::new(PhantomConfig::new(
                a.size,
                a.seed.expect("required by the parser"),
                if a.snr == 0.0 { f64::INFINITY } else { a.snr },
            ));
            c.echo_counts = a.echoes.clone();
            c.fit = a.solver.apply(c.fit)?;
            c
        }
    };
    run_decimate(&cfg, &a.out)
}

pub fn run_decimate(cfg: &DecimationConfig, out: &Path) -> Result<()> {
    let rows = run_decimation_experiment(cfg)?;
    write_csv(&out.join("rmse.csv"), &rmse_csv(&rows))?;
    write_json(&out.join("manifest.json"), &Manifest::new("decimate", cfg))
}

fn uncertainty_cmd(a: UncertaintyArgs) -> Result<()> {
    let (contrasts, mask, means) = load_contrasts(&a.input, a.echoes)?;
    let dtype: Dtype = a.dtype.into();
    let init = initial_maps(&contrasts, &means, &InitDefaults::default())?;
    let config = a.solver.apply(FitConfig::default())?;
    let (maps, unc) = if a.ml {
        let opts = MlOptions {
            loading: config.hessian_loading,
            ..Default::default()
        };
        let fit = fit_ml_volume(&contrasts, &init, &Strategy::default(), &opts, mask.as_deref())?;
        let u = posterior_variances(&contrasts, &fit.maps, None, config.effective_loading(), mask.as_deref())?;
        (fit.maps, u)
    } else {
        let fit = fit_map_jtv(&contrasts, &init, &config, mask.as_deref())?;
        let u = posterior_variances(
            &contrasts,
            &fit.maps,
            Some((&fit.weights, &config.lambda)),
            config.effective_loading(),
            mask.as_deref(),
        )?;
        (fit.maps, u)
    };
    let grid = maps.grid.clone();
    write_maps(&a.out.join("maps"), &maps, dtype)?;
    for (k, name) in CHANNELS.iter().enumerate() {
        write_volume(&a.out.join(format!("sigma_{name}")), &Volume::single(grid.clone(), unc.sd(k)), dtype)?;
    }
    // natural-unit moments of the log-encoded channels; T1 from log R1
    for (name, k, sign) in [("a", 0, 1.0), ("r1", 1, 1.0), ("t1", 1, -1.0), ("r2", 2, 1.0)] {
        let (e, sd) = unc.moments(&maps, k, sign);
        write_volume(&a.out.join(format!("e_{name}")), &Volume::single(grid.clone(), e), dtype)?;
        write_volume(&a.out.join(format!("sd_{name}")), &Volume::single(grid.clone(), sd), dtype)?;
    }
    write_json(
        &a.out.join("report.json"),
        &serde_json::json!({
            "method": if a.ml { "ml" } else { "jtv" },
            "masked": unc.masked.iter().filter(|m| **m).count(),
        }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub sim: SimConfig,
    pub iters: usize,
    pub tol: f64,
}

fn compare_cmd(a: CompareArgs) -> Result<()> {
    if let Some(input) = &a.input {
        let (contrasts, mask, means) = load_contrasts(input, None)?;
        let init = initial_maps(&contrasts, &means, &InitDefaults::default())?;
        let opts = MlOptions {
            max_iters: a.iters,
            tol: a.tol,
            ..Default::default()
        };
        let mut rows = String::from("strategy,voxel,iter,nll,gain\n");
        let mut summary = Vec::new();
        for s in all_strategies() {
            let fit = fit_ml_volume(&contrasts, &init, &s, &opts, mask.as_deref())?;
            voxel_traces_csv(&mut rows, &format!("{},", strategy_name(s.kind)), &fit.voxel_reports);
            summary.push(serde_json::json!({
                "strategy": strategy_name(s.kind),
                "final_objective": fit.report.objective_trace.last(),
                "failed": fit.failed.iter().filter(|f| **f).count(),
            }));
        }
        write_csv(&a.out.join("traces.csv"), &rows)?;
        return write_json(&a.out.join("summary.json"), &summary);
    }
    let cfg = match &a.manifest {
        Some(m) => load_manifest(m, "compare-optimizers")?,
        None => CompareConfig {
            sim: SimConfig {
                n_voxels: a.voxels.unwrap_or(100),
                seed: a.seed.expect("required by the parser"),
                ..Default::default()
            },
            iters: a.iters,
            tol: a.tol,
        },
    };
    run_compare(&cfg, &a.out)
}

pub fn run_compare(cfg: &CompareConfig, out: &Path) -> Result<()> {
    let res = run_convergence_experiment(&cfg.sim, &all_strategies(), cfg.iters, cfg.tol)?;
    write_csv(&out.join("traces.csv"), &res.trace_csv())?;
    write_csv(&out.join("final.csv"), &res.final_csv())?;
    write_json(&out.join("manifest.json"), &Manifest::new("compare-optimizers", cfg))
}
