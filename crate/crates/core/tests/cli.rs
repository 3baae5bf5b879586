use std::path::Path;
use std::process::{Command, Output};

use mpm::cli::read_maps;
use mpm::io::{read_volume, write_json, Dataset};

fn mpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpm")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mpm(args);
    assert!(out.status.success(), "mpm {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_and_runtime_exit_codes() {
    let out = mpm(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(mpm(&["--help"]).status.code(), Some(0));
    assert_eq!(mpm(&["--version"]).status.code(), Some(0));
    assert_eq!(mpm(&["fit", "--in", "x.json", "--out", "y"]).status.code(), Some(1));
    assert_eq!(mpm(&["fit", "--ml", "--jtv", "--in", "x.json", "--out", "y"]).status.code(), Some(1));
    assert_eq!(mpm(&["decimate", "--out", "y"]).status.code(), Some(1));
    assert_eq!(mpm(&["fit", "--jtv", "--lambda", "1,2", "--in", "x", "--out", "y"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = mpm(&["fit", "--ml", "--in", p(&missing), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert_eq!(mpm(&["toy", "--kind", "exp2d", "--sweep"]).status.code(), Some(2));
}

#[test]
fn toy_trajectory_reaches_optimum() {
    let csv = ok(&["toy", "--kind", "exp1d", "--x", "1", "--start", "-3", "--precond", "proposed", "--iters", "60"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "iter,y,z,objective,step,bound,satisfied");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.iter().all(|r| r[6] == 1.0));
    assert!(rows.windows(2).all(|w| w[1][3] <= w[0][3]));
    assert!(rows.last().unwrap()[1].abs() < 1e-8);

    let csv = ok(&["toy", "--kind", "exp1d", "--x", "1", "--start", "2", "--precond", "gn", "--iters", "3"]);
    assert!(csv.lines().skip(1).any(|l| l.ends_with(",0")));
}

#[test]
fn toy_sweeps_are_seeded() {
    let a = ok(&["toy", "--kind", "nested-exp2d", "--sweep", "--points", "50", "--seed", "3", "--precond", "proposed-plus"]);
    let b = ok(&["toy", "--kind", "nested-exp2d", "--sweep", "--points", "50", "--seed", "3", "--precond", "proposed-plus"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 51);
    let c = ok(&["toy", "--kind", "nested-exp2d", "--sweep", "--points", "50", "--seed", "4", "--precond", "proposed-plus"]);
    assert_ne!(a, c);
}

#[test]
fn noiseless_ml_fit_recovers_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let fit = dir.path().join("fit");
    ok(&["simulate", "--seed", "2", "--size", "10", "--snr", "0", "--out", p(&data)]);
    ok(&["fit", "--ml", "--in", p(&data.join("data.json")), "--out", p(&fit), "--max-iters", "200", "--tol", "1e-10"]);
    let truth = read_maps(&data.join("truth")).unwrap();
    let maps = read_maps(&fit).unwrap();
    let mask = read_volume(&data.join("mask")).unwrap().frames[0].clone();
    let mut worst = 0.0f64;
    for v in (0..mask.len()).filter(|&v| mask[v] > 0.5) {
        for k in 0..4 {
            worst = worst.max((maps.data[v][k] - truth.data[v][k]).abs());
        }
    }
    assert!(worst < 1e-4, "worst error {worst}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fit.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failed"], 0);
    assert!(fit.join("voxel_traces.csv").exists());
}

#[test]
fn jtv_estatics_and_uncertainty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["simulate", "--seed", "3", "--size", "12", "--dtype", "f32", "--out", p(&data)]);
    let ds = data.join("data.json");

    let jtv = dir.path().join("jtv");
    ok(&["fit", "--jtv", "--lambda", "5", "--irls", "3", "--in", p(&ds), "--out", p(&jtv)]);
    let w = read_volume(&jtv.join("weights")).unwrap();
    assert!(w.frames[0].iter().all(|x| *x > 0.0 && x.is_finite()));
    let trace = std::fs::read_to_string(jtv.join("trace.csv")).unwrap();
    assert!(trace.lines().count() > 2);

    let es = dir.path().join("es");
    ok(&["fit", "--estatics", "--in", p(&ds), "--out", p(&es)]);
    for name in ["intercept_0", "intercept_1", "intercept_2", "log_r2", "masked"] {
        assert!(read_volume(&es.join(name)).is_ok(), "{name}");
    }

    let unc = dir.path().join("unc");
    ok(&["uncertainty", "--in", p(&ds), "--out", p(&unc), "--irls", "3"]);
    let e_r1 = read_volume(&unc.join("e_r1")).unwrap().frames[0].clone();
    let e_t1 = read_volume(&unc.join("e_t1")).unwrap().frames[0].clone();
    let s = read_volume(&unc.join("sigma_log_r1")).unwrap().frames[0].clone();
    for v in 0..s.len() {
        let expect = (s[v] * s[v]).exp();
        assert!((e_r1[v] * e_t1[v] - expect).abs() <= 1e-12 * expect);
    }
}

#[test]
fn noise_is_estimated_when_missing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["simulate", "--seed", "4", "--size", "16", "--out", p(&data)]);
    // drop the known noise variance from every sidecar
    for k in 0..3 {
        let path = data.join(format!("contrast_{k}.json"));
        let mut side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let proto = side["protocol"].as_object_mut().unwrap();
        assert!(proto.remove("sigma2").is_some());
        std::fs::write(&path, serde_json::to_string(&side).unwrap()).unwrap();
    }
    // and the mask, so the initial intensities come from the mixture fit too
    let ds = dir.path().join("nomask.json");
    write_json(
        &ds,
        &Dataset {
            contrasts: (0..3).map(|k| format!("data/contrast_{k}")).collect(),
            mask: None,
        },
    )
    .unwrap();
    let fit = dir.path().join("fit");
    ok(&["fit", "--ml", "--max-iters", "5", "--in", p(&ds), "--out", p(&fit)]);
    assert!(read_maps(&fit).unwrap().data.iter().all(|v| v.iter().all(|x| x.is_finite())));
}

#[test]
fn compare_optimizers_on_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["simulate", "--seed", "5", "--size", "8", "--out", p(&data)]);
    let out = dir.path().join("cmp");
    ok(&["compare-optimizers", "--in", p(&data.join("data.json")), "--iters", "10", "--out", p(&out)]);
    let traces = std::fs::read_to_string(out.join("traces.csv")).unwrap();
    for s in ["proposed,", "gn,", "lm,"] {
        assert!(traces.lines().any(|l| l.starts_with(s)), "{s}");
    }
}

#[test]
fn manifest_of_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["simulate", "--seed", "6", "--size", "8", "--out", p(&data)]);
    let out = mpm(&["decimate", "--manifest", p(&data.join("manifest.json")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate"));
}
