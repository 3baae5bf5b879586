//! One- and two-dimensional exponential least-squares problems used to study
//! the monotonic-convergence behaviour of Newton-like preconditioners.
//!
//! Every problem is a sum of squared residuals `½ Σ (f_i(y) - x_i)^2`:
//!
//! | kind            | residual model                       |
//! |-----------------|--------------------------------------|
//! | `Exp1d`         | `f = exp(-y)`                        |
//! | `NestedExp1d`   | `f = exp(-exp(y))`                   |
//! | `Exp2d`         | `f_i = exp(z - t_i y)`, i = 0, 1     |
//! | `NestedExp2d`   | `f_i = exp(z - t_i exp(y))`          |
//!
//! Points are stored as `[y, z]`; one-dimensional problems ignore `z`.

use serde::{Deserialize, Serialize};

use crate::error::{MpmError, Result};

pub type Point = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    Exp1d,
    NestedExp1d,
    Exp2d,
    NestedExp2d,
}

impl ToyKind {
    pub fn dim(self) -> usize {
        match self {
            ToyKind::Exp1d | ToyKind::NestedExp1d => 1,
            ToyKind::Exp2d | ToyKind::NestedExp2d => 2,
        }
    }
}

/// Which curvature matrix drives the Newton-like step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyPreconditioner {
    /// True Hessian (may be indefinite).
    Newton,
    GaussNewton,
    /// Fisher scoring plus `|residual| diag(|H_f|)`.
    Proposed,
    /// Fisher scoring plus `|residual| diag(|H_f| 1)`.
    ProposedPlus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyProblem {
    pub kind: ToyKind,
    /// Observations; only `x[0]` is used by 1D problems.
    pub x: [f64; 2],
    /// Sampling times of the 2D problems.
    pub t: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyEval {
    pub value: f64,
    pub grad: Point,
    pub hessian: Mat2,
    pub gauss_newton: Mat2,
    pub proposed: Mat2,
    pub proposed_plus: Mat2,
}

impl ToyEval {
    pub fn preconditioner(&self, which: ToyPreconditioner) -> &Mat2 {
        match which {
            ToyPreconditioner::Newton => &self.hessian,
            ToyPreconditioner::GaussNewton => &self.gauss_newton,
            ToyPreconditioner::Proposed => &self.proposed,
            ToyPreconditioner::ProposedPlus => &self.proposed_plus,
        }
    }
}

struct Residual {
    f: f64,
    grad: Point,
    hess: Mat2,
}

impl ToyProblem {
    pub fn exp1d(x: f64) -> Self {
        Self {
            kind: ToyKind::Exp1d,
            x: [x, 0.0],
            t: [0.0; 2],
        }
    }

    pub fn nested_exp1d(x: f64) -> Self {
        Self {
            kind: ToyKind::NestedExp1d,
            x: [x, 0.0],
            t: [0.0; 2],
        }
    }

    pub fn exp2d(x: [f64; 2], t: [f64; 2]) -> Self {
        Self {
            kind: ToyKind::Exp2d,
            x,
            t,
        }
    }

    pub fn nested_exp2d(x: [f64; 2], t: [f64; 2]) -> Self {
        Self {
            kind: ToyKind::NestedExp2d,
            x,
            t,
        }
    }

    fn residuals(&self, p: &Point) -> ([Residual; 2], usize) {
        let [y, z] = *p;
        let zero = || Residual {
            f: 0.0,
            grad: [0.0; 2],
            hess: [[0.0; 2]; 2],
        };
        match self.kind {
            ToyKind::Exp1d => {
                let f = (-y).exp();
                (
                    [
                        Residual {
                            f,
                            grad: [-f, 0.0],
                            hess: [[f, 0.0], [0.0, 0.0]],
                        },
                        zero(),
                    ],
                    1,
                )
            }
            ToyKind::NestedExp1d => {
                let ey = y.exp();
                let f = (-ey).exp();
                (
                    [
                        Residual {
                            f,
                            grad: [-ey * f, 0.0],
                            hess: [[(ey * ey - ey) * f, 0.0], [0.0, 0.0]],
                        },
                        zero(),
                    ],
                    1,
                )
            }
            ToyKind::Exp2d => {
                let r = |t: f64| {
                    let f = (z - t * y).exp();
                    Residual {
                        f,
                        grad: [-t * f, f],
                        hess: [[t * t * f, -t * f], [-t * f, f]],
                    }
                };
                ([r(self.t[0]), r(self.t[1])], 2)
            }
            ToyKind::NestedExp2d => {
                let ey = y.exp();
                let r = |t: f64| {
                    let f = (z - t * ey).exp();
                    let te = t * ey;
                    Residual {
                        f,
                        grad: [-te * f, f],
                        hess: [[(te * te - te) * f, -te * f], [-te * f, f]],
                    }
                };
                ([r(self.t[0]), r(self.t[1])], 2)
            }
        }
    }

    pub fn value(&self, p: &Point) -> f64 {
        let (rs, n) = self.residuals(p);
        rs[..n].iter().zip(self.x).map(|(r, x)| 0.5 * (r.f - x).powi(2)).sum()
    }

    /// Objective, gradient, true Hessian and the three preconditioners.
    pub fn eval(&self, p: &Point) -> ToyEval {
        let (rs, n) = self.residuals(p);
        let mut out = ToyEval {
            value: 0.0,
            grad: [0.0; 2],
            hessian: [[0.0; 2]; 2],
            gauss_newton: [[0.0; 2]; 2],
            proposed: [[0.0; 2]; 2],
            proposed_plus: [[0.0; 2]; 2],
        };
        for (r, x) in rs[..n].iter().zip(self.x) {
            let res = r.f - x;
            out.value += 0.5 * res * res;
            for i in 0..2 {
                out.grad[i] += res * r.grad[i];
                for j in 0..2 {
                    let gg = r.grad[i] * r.grad[j];
                    out.hessian[i][j] += gg + res * r.hess[i][j];
                    out.gauss_newton[i][j] += gg;
                    out.proposed[i][j] += gg;
                    out.proposed_plus[i][j] += gg;
                }
                out.proposed[i][i] += res.abs() * r.hess[i][i].abs();
                out.proposed_plus[i][i] += res.abs() * (r.hess[i][0].abs() + r.hess[i][1].abs());
            }
        }
        out
    }

    /// Closed-form optimum of the 1D problems.
    pub fn closed_form_optimum(&self) -> Result<Point> {
        let x = self.x[0];
        match self.kind {
            ToyKind::Exp1d if x > 0.0 => Ok([-x.ln(), 0.0]),
            ToyKind::NestedExp1d if x > 0.0 && x < 1.0 => Ok([(-x.ln()).ln(), 0.0]),
            ToyKind::Exp1d | ToyKind::NestedExp1d => Err(MpmError::OptimumUnavailable(format!(
                "{:?} has no finite optimum for x = {x}",
                self.kind
            ))),
            _ => Err(MpmError::OptimumUnavailable(
                "2D problems have no closed-form optimum here".into(),
            )),
        }
    }

    /// Optimum used as ground truth: closed form in 1D, a long run of the
    /// proposed scheme to gradient norm 1e-12 in 2D.
    pub fn optimum(&self) -> Result<Point> {
        if self.kind.dim() == 1 {
            return self.closed_form_optimum();
        }
        if !(self.x[0] > 0.0 && self.x[1] > 0.0) || self.t[0] == self.t[1] {
            return Err(MpmError::OptimumUnavailable(
                "2D problems need positive observations at distinct times".into(),
            ));
        }
        let z0 = 0.5 * (self.x[0].ln() + self.x[1].ln());
        let mut p = [0.0, z0];
        // gradient norm 1e-12 in units of the squared data scale
        let tol = 1e-12 * (self.x[0] * self.x[0] + self.x[1] * self.x[1]).max(1.0);
        for _ in 0..200_000 {
            let e = self.eval(&p);
            let gnorm = e.grad[0].hypot(e.grad[1]);
            if gnorm <= tol {
                return Ok(p);
            }
            let step = solve2(&e.proposed, &e.grad, 2)
                .ok_or_else(|| MpmError::OptimumUnavailable("singular preconditioner".into()))?;
            let next = [p[0] - step[0], p[1] - step[1]];
            if !(next[0].is_finite() && next[1].is_finite()) || next[0].abs() > DIVERGENCE_BOUND {
                break;
            }
            p = next;
        }
        Err(MpmError::OptimumUnavailable(
            "inner solver did not reach gradient norm 1e-12".into(),
        ))
    }
}

/// Trajectories are stopped once a coordinate exceeds this magnitude.
pub const DIVERGENCE_BOUND: f64 = 700.0;

fn solve2(m: &Mat2, g: &Point, dim: usize) -> Option<Point> {
    if dim == 1 {
        if m[0][0] == 0.0 {
            return None;
        }
        return Some([g[0] / m[0][0], 0.0]);
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([
        (m[1][1] * g[0] - m[0][1] * g[1]) / det,
        (m[0][0] * g[1] - m[1][0] * g[0]) / det,
    ])
}

/// 1D step with the common factor `f` cancelled from gradient and
/// preconditioner, so it stays finite where `f` underflows.
fn step_1d(prob: &ToyProblem, y: f64, which: ToyPreconditioner) -> Option<f64> {
    // d1 = f'/f, d2 = f''/f
    let (f, d1, d2) = match prob.kind {
        ToyKind::Exp1d => ((-y).exp(), -1.0, 1.0),
        ToyKind::NestedExp1d => {
            let ey = y.exp();
            ((-ey).exp(), -ey, ey * ey - ey)
        }
        _ => unreachable!(),
    };
    let res = f - prob.x[0];
    let num = res * d1;
    let den = match which {
        ToyPreconditioner::Newton => f * d1 * d1 + res * d2,
        ToyPreconditioner::GaussNewton => f * d1 * d1,
        ToyPreconditioner::Proposed | ToyPreconditioner::ProposedPlus => f * d1 * d1 + res.abs() * d2.abs(),
    };
    if num == 0.0 {
        return Some(0.0);
    }
    let s = num / den;
    s.is_finite().then_some(s)
}

/// Newton-like step `P^{-1} g` (to be subtracted from the point).
pub fn toy_step(prob: &ToyProblem, p: &Point, which: ToyPreconditioner) -> Option<Point> {
    if prob.kind.dim() == 1 {
        return step_1d(prob, p[0], which).map(|s| [s, 0.0]);
    }
    let e = prob.eval(p);
    solve2(e.preconditioner(which), &e.grad, prob.kind.dim())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    /// Set when a coordinate left `±700` or the objective became non-finite.
    pub diverged: bool,
}

/// Apply `y <- y - P^{-1} g` for `n_iters` iterations, recording every iterate.
pub fn toy_iterate(prob: &ToyProblem, y0: Point, which: ToyPreconditioner, n_iters: usize) -> Result<Trajectory> {
    if n_iters == 0 {
        return Err(MpmError::Config("n_iters must be >= 1".into()));
    }
    let mut traj = Trajectory {
        points: vec![y0],
        values: vec![prob.value(&y0)],
        diverged: false,
    };
    let mut p = y0;
    for _ in 0..n_iters {
        let Some(step) = toy_step(prob, &p, which) else {
            traj.diverged = true;
            break;
        };
        p = [p[0] - step[0], p[1] - step[1]];
        let v = prob.value(&p);
        traj.points.push(p);
        traj.values.push(v);
        if !v.is_finite() || p.iter().any(|c| !c.is_finite() || c.abs() > DIVERGENCE_BOUND) {
            traj.diverged = true;
            break;
        }
    }
    Ok(traj)
}

/// Step length versus distance to the optimum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicCheck {
    pub step: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Relative slack absorbing rounding when the step and the distance coincide.
const CONDITION_RTOL: f64 = 1e-9;

/// Check `||P^{-1} g|| <= ||y - y*||` at `point` against a known optimum.
pub fn monotonic_condition_at(prob: &ToyProblem, point: &Point, optimum: &Point, which: ToyPreconditioner) -> MonotonicCheck {
    let dim = prob.kind.dim();
    let step = match toy_step(prob, point, which) {
        Some(s) => s[..dim].iter().map(|v| v * v).sum::<f64>().sqrt(),
        None => f64::INFINITY,
    };
    let bound = (0..dim).map(|i| (point[i] - optimum[i]).powi(2)).sum::<f64>().sqrt();
    let satisfied = step.is_finite() && step <= bound * (1.0 + CONDITION_RTOL);
    MonotonicCheck { step, bound, satisfied }
}

pub fn monotonic_condition(prob: &ToyProblem, point: &Point, which: ToyPreconditioner) -> Result<MonotonicCheck> {
    let opt = prob.optimum()?;
    Ok(monotonic_condition_at(prob, point, &opt, which))
}

/// One sampled (problem, point) pair of a condition sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub problem: ToyProblem,
    pub point: Point,
    pub optimum: Point,
    pub check: MonotonicCheck,
    /// The step raised the objective by more than 1e-12.
    pub increase: bool,
}

fn sample(prob: &ToyProblem, point: Point, optimum: Point, which: ToyPreconditioner) -> SweepSample {
    let check = monotonic_condition_at(prob, &point, &optimum, which);
    let increase = match toy_step(prob, &point, which) {
        Some(s) => {
            let next = [point[0] - s[0], point[1] - s[1]];
            !(prob.value(&next) <= prob.value(&point) + 1e-12)
        }
        None => true,
    };
    SweepSample {
        problem: *prob,
        point,
        optimum,
        check,
        increase,
    }
}

/// Evenly spaced points `y in [lo, hi]` for every observation in `xs`.
pub fn grid_sweep_1d(
    kind: ToyKind,
    xs: &[f64],
    range: [f64; 2],
    n: usize,
    which: ToyPreconditioner,
) -> Result<Vec<SweepSample>> {
    if kind.dim() != 1 || n < 2 {
        return Err(MpmError::Config("1D sweep needs a 1D problem and at least 2 points".into()));
    }
    let mut out = Vec::with_capacity(xs.len() * n);
    for &x in xs {
        let prob = ToyProblem {
            kind,
            x: [x, 0.0],
            t: [0.0; 2],
        };
        let opt = prob.optimum()?;
        for i in 0..n {
            let y = range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64;
            out.push(sample(&prob, [y, 0.0], opt, which));
        }
    }
    Ok(out)
}

/// Random 2D problem with noiseless data: sampling times `t0 ~ U(0.1, 1)`,
/// `t1 = t0 + U(0.2, 2)`, generating point `y ~ U(-2, 1)`, `z ~ U(-2, 2)`.
pub fn random_problem_2d<R: rand::Rng>(kind: ToyKind, rng: &mut R) -> ToyProblem {
    let t0 = rng.gen_range(0.1..1.0);
    let t1 = t0 + rng.gen_range(0.2..2.0);
    let (y, z) = (rng.gen_range(-2.0..1.0), rng.gen_range(-2.0..2.0));
    let decay = if kind == ToyKind::NestedExp2d { f64::exp(y) } else { y };
    ToyProblem {
        kind,
        x: [f64::exp(z - t0 * decay), f64::exp(z - t1 * decay)],
        t: [t0, t1],
    }
}

/// `n` random problems, each checked at its optimum plus `U(-3, 3)²`.
/// Sample `i` uses stream `i` of `seed`.
pub fn random_sweep_2d(kind: ToyKind, n: usize, seed: u64, which: ToyPreconditioner) -> Result<Vec<SweepSample>> {
    use rand::Rng;
    if kind.dim() != 2 {
        return Err(MpmError::Config("2D sweep needs a 2D problem".into()));
    }
    (0..n)
        .map(|i| {
            let mut rng = crate::simulate::stream_rng(seed, i as u64);
            let prob = random_problem_2d(kind, &mut rng);
            let opt = prob.optimum()?;
            let p = [opt[0] + rng.gen_range(-3.0..3.0), opt[1] + rng.gen_range(-3.0..3.0)];
            Ok(sample(&prob, p, opt, which))
        })
        .collect()
}

/// CSV with columns `iter,y,z,objective,step,bound,satisfied`.
pub fn trajectory_csv(prob: &ToyProblem, traj: &Trajectory, which: ToyPreconditioner) -> String {
    let opt = prob.optimum().ok();
    let mut out = String::from("iter,y,z,objective,step,bound,satisfied\n");
    for (i, (p, v)) in traj.points.iter().zip(&traj.values).enumerate() {
        let (step, bound, ok) = match opt {
            Some(o) => {
                let c = monotonic_condition_at(prob, p, &o, which);
                (c.step, c.bound, (c.satisfied as u8).to_string())
            }
            None => (f64::NAN, f64::NAN, String::new()),
        };
        out.push_str(&format!("{i},{:e},{:e},{v:e},{step:e},{bound:e},{ok}\n", p[0], p[1]));
    }
    out
}

/// CSV of a sweep; `iter` is the sample index.
pub fn sweep_csv(samples: &[SweepSample]) -> String {
    let mut out = String::from("iter,y,z,objective,step,bound,satisfied\n");
    for (i, s) in samples.iter().enumerate() {
        out.push_str(&format!(
            "{i},{:e},{:e},{:e},{:e},{:e},{}\n",
            s.point[0],
            s.point[1],
            s.problem.value(&s.point),
            s.check.step,
            s.check.bound,
            s.check.satisfied as u8
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp1d_at_optimum() {
        let p = ToyProblem::exp1d(1.0);
        let e = p.eval(&[0.0, 0.0]);
        assert_eq!(e.value, 0.0);
        assert_eq!(e.grad[0], 0.0);
        assert_eq!(p.optimum().unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn exp1d_closed_forms() {
        let x = 0.7;
        let p = ToyProblem::exp1d(x);
        for y in [-2.0, -0.3, 0.0, 1.1, 4.0] {
            let e = p.eval(&[y, 0.0]);
            let f = (-y).exp();
            assert!((e.grad[0] - (-(f - x) * f)).abs() < 1e-14);
            assert!((e.hessian[0][0] - (f * f + (f - x) * f)).abs() < 1e-14);
            assert!((e.gauss_newton[0][0] - f * f).abs() < 1e-14);
            assert!((e.proposed[0][0] - (f * f + (f - x).abs() * f)).abs() < 1e-14);
        }
    }

    #[test]
    fn nested_optimum_is_stationary() {
        let p = ToyProblem::nested_exp1d(0.5);
        let y = p.optimum().unwrap();
        assert!((y[0] - 2f64.ln().ln()).abs() < 1e-15);
        assert!(p.eval(&y).grad[0].abs() < 1e-15);
    }

    #[test]
    fn missing_optimum() {
        assert!(matches!(
            ToyProblem::exp1d(-1.0).optimum(),
            Err(MpmError::OptimumUnavailable(_))
        ));
        assert!(ToyProblem::nested_exp1d(1.5).optimum().is_err());
        assert!(monotonic_condition(&ToyProblem::exp1d(0.0), &[0.0; 2], ToyPreconditioner::Proposed).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let probs = [
            ToyProblem::exp1d(2.0),
            ToyProblem::nested_exp1d(0.3),
            ToyProblem::exp2d([1.5, 0.4], [0.2, 1.3]),
            ToyProblem::nested_exp2d([1.5, 0.4], [0.2, 1.3]),
        ];
        let h = 1e-5;
        for prob in probs {
            for p in [[-0.7, 0.2], [0.3, -0.4], [1.2, 0.9]] {
                let e = prob.eval(&p);
                for i in 0..prob.kind.dim() {
                    let mut pp = p;
                    let mut pm = p;
                    pp[i] += h;
                    pm[i] -= h;
                    let fd = (prob.value(&pp) - prob.value(&pm)) / (2.0 * h);
                    assert!((fd - e.grad[i]).abs() < 1e-7 * fd.abs().max(1.0));
                    let (ep, em) = (prob.eval(&pp), prob.eval(&pm));
                    for j in 0..prob.kind.dim() {
                        let fdh = (ep.grad[j] - em.grad[j]) / (2.0 * h);
                        assert!((fdh - e.hessian[i][j]).abs() < 1e-6 * fdh.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn fixed_point_at_optimum() {
        let p = ToyProblem::exp1d(1.0);
        let y = p.optimum().unwrap();
        for which in [
            ToyPreconditioner::GaussNewton,
            ToyPreconditioner::Proposed,
            ToyPreconditioner::Newton,
        ] {
            let t = toy_iterate(&p, y, which, 10).unwrap();
            assert!(t.points.iter().all(|q| *q == y));
        }
        let c = monotonic_condition(&p, &y, ToyPreconditioner::Proposed).unwrap();
        assert_eq!((c.step, c.bound, c.satisfied), (0.0, 0.0, true));
    }

    #[test]
    fn proposed_monotone_from_both_sides() {
        let p = ToyProblem::exp1d(1.0);
        for y0 in [-3.0, 3.0] {
            let t = toy_iterate(&p, [y0, 0.0], ToyPreconditioner::Proposed, 100).unwrap();
            assert!(!t.diverged);
            for w in t.values.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert!(t.points.last().unwrap()[0].abs() < 1e-8);
        }
    }

    #[test]
    fn gauss_newton_overshoots_on_nonconvex_side() {
        let p = ToyProblem::exp1d(1.0);
        let t = toy_iterate(&p, [3.0, 0.0], ToyPreconditioner::GaussNewton, 1).unwrap();
        assert!(t.values[1] > t.values[0]);
        let c = monotonic_condition(&p, &[3.0, 0.0], ToyPreconditioner::GaussNewton).unwrap();
        assert!(!c.satisfied);
    }

    #[test]
    fn nested_gauss_newton_diverges() {
        let p = ToyProblem::nested_exp1d(0.5);
        let opt = p.optimum().unwrap()[0];
        let y0 = opt + 1.5;
        let t = toy_iterate(&p, [y0, 0.0], ToyPreconditioner::GaussNewton, 50).unwrap();
        let last = t.points.last().unwrap()[0];
        assert!(t.diverged || (last - opt).abs() > (y0 - opt).abs());
        let t = toy_iterate(&p, [y0, 0.0], ToyPreconditioner::Proposed, 200).unwrap();
        assert!((t.points.last().unwrap()[0] - opt).abs() < 1e-8);
    }

    #[test]
    fn optimum_2d_matches_log_linear_solution() {
        // noiseless data: exact log-linear solution
        let (y, z, t): (f64, f64, [f64; 2]) = (0.8, 1.3, [0.5, 2.0]);
        let x = [(z - t[0] * y).exp(), (z - t[1] * y).exp()];
        let opt = ToyProblem::exp2d(x, t).optimum().unwrap();
        assert!((opt[0] - y).abs() < 1e-9 && (opt[1] - z).abs() < 1e-9);
        let ey = y.exp();
        let x = [(z - t[0] * ey).exp(), (z - t[1] * ey).exp()];
        let opt = ToyProblem::nested_exp2d(x, t).optimum().unwrap();
        assert!((opt[0] - y).abs() < 1e-9 && (opt[1] - z).abs() < 1e-9);
    }

    #[test]
    fn sweeps() {
        let s = grid_sweep_1d(ToyKind::Exp1d, &[0.1, 1.0, 10.0], [-8.0, 8.0], 1000, ToyPreconditioner::Proposed).unwrap();
        assert_eq!(s.len(), 3000);
        assert!(s.iter().all(|p| p.check.satisfied && !p.increase));
        let g = grid_sweep_1d(ToyKind::Exp1d, &[1.0], [-8.0, 8.0], 1000, ToyPreconditioner::GaussNewton).unwrap();
        assert!(g.iter().any(|p| !p.check.satisfied));
        let r = random_sweep_2d(ToyKind::Exp2d, 200, 4, ToyPreconditioner::ProposedPlus).unwrap();
        assert!(r.iter().all(|p| p.check.satisfied));
        assert_eq!(r, random_sweep_2d(ToyKind::Exp2d, 200, 4, ToyPreconditioner::ProposedPlus).unwrap());
        assert!(grid_sweep_1d(ToyKind::Exp2d, &[1.0], [0.0, 1.0], 10, ToyPreconditioner::Proposed).is_err());
        assert_eq!(sweep_csv(&r).lines().count(), 201);
        let p = ToyProblem::exp1d(1.0);
        let t = toy_iterate(&p, [-3.0, 0.0], ToyPreconditioner::Proposed, 5).unwrap();
        let csv = trajectory_csv(&p, &t, ToyPreconditioner::Proposed);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",1")));
    }
}
