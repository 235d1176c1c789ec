use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stablesgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stablesgd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn smoke(out: &Path, repeat: usize) -> String {
    format!(
        "dataset.name = synthetic\ndataset.d = 4\ndataset.classes = 2\ndataset.per_class = 40\n\
         dataset.separation = 8\nmodel.n = 24\nmodel.activation = tanh\ntrain.eta = 0.05\n\
         train.batch_size = 20\ntrain.epochs = 10\nrun.repeat = {repeat}\nrun.output = {}\n",
        out.display()
    )
}

#[test]
fn smoke_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke");
    let cfg = write_config(dir.path(), "smoke.conf", &smoke(&out, 2));

    let first = stablesgd(&["run", &cfg]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
    assert!(out.join("checkpoints/seed-1.ckpt").exists());

    let again = stablesgd(&["run", &cfg]);
    assert!(again.status.success());
    assert_eq!(fs::read(out.join("results.csv")).unwrap(), results.as_bytes());
    assert_eq!(first.stdout, again.stdout);
}

#[test]
fn out_of_range_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = smoke(&dir.path().join("x"), 1) + "noise.alpha = 2.5\nnoise.sigma = 0.1\n";
    let cfg = write_config(dir.path(), "bad.conf", &body);
    let out = stablesgd(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(0, 2]"));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let body = smoke(&dir.path().join("x"), 1) + "train.etta = 0.1\n";
    let cfg = write_config(dir.path(), "typo.conf", &body);
    let out = stablesgd(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.etta"));
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = stablesgd(&["report", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn report_spread_is_the_sample_std_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs/five");
    let cfg = write_config(dir.path(), "five.conf", &smoke(&out, 5));
    assert!(stablesgd(&["run", &cfg]).status.success());

    let seeds = fs::read_to_string(out.join("seeds.csv")).unwrap();
    let acc: Vec<f64> = seeds
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(acc.len(), 5);
    let mean = acc.iter().sum::<f64>() / 5.0;
    let std = (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 4.0).sqrt();

    let rep = stablesgd(&["report", dir.path().join("runs").to_str().unwrap()]);
    assert!(rep.status.success());
    let text = String::from_utf8_lossy(&rep.stdout);
    let cell = format!("{mean:.4} ± {std:.4}");
    assert!(text.contains(&cell), "missing {cell} in\n{text}");
}

#[test]
fn prune_command_reads_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let cfg = write_config(dir.path(), "p.conf", &smoke(&out, 1));
    assert!(stablesgd(&["run", &cfg]).status.success());
    let ckpt = out.join("checkpoints/seed-0.ckpt");
    let res = stablesgd(&["prune", ckpt.to_str().unwrap(), "--epsilon", "0.2"]);
    assert!(res.status.success());
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("units 24"));
    let ratio: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("pruning_ratio "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.0..=100.0).contains(&ratio));

    let bad = stablesgd(&["prune", ckpt.to_str().unwrap(), "--epsilon", "1.5"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn zero_drift_euler_errors_vanish() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("euler");
    let body = format!(
        "experiment.kind = euler-error\ndrift.kind = zero\nnoise.alpha = 1.5\nsystem.n = 8\nsystem.dim = 2\n\
         system.horizon = 1\nsystem.etas = 0.25, 0.125, 0.0625\nsystem.eta_ref = 0.015625\nrun.trials = 3\n\
         run.output = {}\n",
        out.display()
    );
    let cfg = write_config(dir.path(), "e.conf", &body);
    let res = stablesgd(&["sde-run", &cfg]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("euler-error.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let center: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert!(center.abs() < 1e-12, "{r}");
    }
}

#[test]
fn propagation_of_chaos_table_has_a_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("poc");
    let body = format!(
        "experiment.kind = poc\ndrift.kind = mean-field-logistic\nnoise.alpha = 1.75\nsystem.ns = 16, 64, 256\n\
         system.n_ref = 1024\nsystem.horizon = 0.5\nsystem.eta = 0.0625\nrun.trials = 4\nrun.output = {}\n",
        out.display()
    );
    let cfg = write_config(dir.path(), "poc.conf", &body);
    let res = stablesgd(&["sde-run", &cfg]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("poc.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| !r.split(',').nth(3).unwrap().is_empty()));
    assert!(out.join("manifest.txt").exists());

    let rep = stablesgd(&["report", dir.path().to_str().unwrap()]);
    assert!(rep.status.success());
}
