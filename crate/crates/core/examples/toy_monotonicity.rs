//! Compare preconditioners on the exponential toy problems: one trajectory,
//! then the fraction of points where a step could overshoot the optimum.

use mpm::toys::{grid_sweep_1d, random_sweep_2d, toy_iterate, ToyKind, ToyPreconditioner, ToyProblem};

fn main() -> mpm::Result<()> {
    let prob = ToyProblem::exp1d(1.0);
    for which in [ToyPreconditioner::Newton, ToyPreconditioner::GaussNewton, ToyPreconditioner::Proposed] {
        let t = toy_iterate(&prob, [3.0, 0.0], which, 20)?;
        let last = t.points.last().unwrap();
        println!("{which:?}: y after 20 steps = {:.3e}", last[0]);
    }

    let all = [
        ToyPreconditioner::Newton,
        ToyPreconditioner::GaussNewton,
        ToyPreconditioner::Proposed,
        ToyPreconditioner::ProposedPlus,
    ];
    for kind in [ToyKind::Exp1d, ToyKind::NestedExp1d] {
        for which in &all[..3] {
            let s = grid_sweep_1d(kind, &[0.5], [-8.0, 8.0], 1000, *which)?;
            let bad = s.iter().filter(|p| !p.check.satisfied).count();
            println!("{kind:?} {which:?}: {bad}/1000 violations");
        }
    }
    for kind in [ToyKind::Exp2d, ToyKind::NestedExp2d] {
        for which in &all[1..] {
            let s = random_sweep_2d(kind, 2000, 0, *which)?;
            let bad = s.iter().filter(|p| !p.check.satisfied).count();
            println!("{kind:?} {which:?}: {bad}/2000 violations");
        }
    }
    Ok(())
}
