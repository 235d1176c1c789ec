//! Repeated seeded runs of train, prune and evaluate, and their CSV outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use stablesgd::data::Dataset;
use stablesgd::trainer::{self, EpochRecord};
use stablesgd::{checkpoint, prune, stats, Error, Network};

use crate::config::ExperimentConfig;

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
    pub metrics: Result<SeedMetrics, String>,
}

/// Final metrics of a completed seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedMetrics {
    pub train_acc: f64,
    pub test_acc: f64,
    pub pruning_ratio: f64,
    pub train_acc_ap: f64,
    pub test_acc_ap: f64,
    /// Share of the squared Frobenius norm in the largest 10% of columns.
    pub top10_share: f64,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        MeanStd {
            mean: stats::mean(xs),
            std: if xs.len() > 1 { stats::sample_std(xs) } else { 0.0 },
        }
    }
}

/// One table row: metrics aggregated over the completed seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// `alpha` as text, or `no noise`.
    pub label: String,
    pub repeats: usize,
    pub completed: usize,
    pub train_acc: MeanStd,
    pub test_acc: MeanStd,
    pub pruning_ratio: MeanStd,
    pub train_acc_ap: MeanStd,
    pub test_acc_ap: MeanStd,
}

pub const RESULTS_HEADER: &str = "label,repeats,completed,train_acc_mean,train_acc_std,test_acc_mean,test_acc_std,\
pruning_ratio_mean,pruning_ratio_std,train_acc_ap_mean,train_acc_ap_std,test_acc_ap_mean,test_acc_ap_std";

pub const SEEDS_HEADER: &str =
    "seed,status,epochs,train_acc,test_acc,pruning_ratio,train_acc_ap,test_acc_ap,top10_share,message";

impl ResultRow {
    pub fn aggregate(label: impl Into<String>, seeds: &[SeedResult]) -> Self {
        let done: Vec<SeedMetrics> = seeds.iter().filter_map(|s| s.metrics.as_ref().ok().copied()).collect();
        let col = |f: fn(&SeedMetrics) -> f64| MeanStd::of(&done.iter().map(f).collect::<Vec<_>>());
        ResultRow {
            label: label.into(),
            repeats: seeds.len(),
            completed: done.len(),
            train_acc: col(|m| m.train_acc),
            test_acc: col(|m| m.test_acc),
            pruning_ratio: col(|m| m.pruning_ratio),
            train_acc_ap: col(|m| m.train_acc_ap),
            test_acc_ap: col(|m| m.test_acc_ap),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.completed == self.repeats && self.repeats > 0
    }

    pub fn to_csv_line(&self) -> String {
        let mut s = format!("{},{},{}", self.label, self.repeats, self.completed);
        for m in [
            self.train_acc,
            self.test_acc,
            self.pruning_ratio,
            self.train_acc_ap,
            self.test_acc_ap,
        ] {
            let _ = write!(s, ",{},{}", m.mean, m.std);
        }
        s
    }

    pub fn from_csv_line(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 13 {
            return None;
        }
        let num = |i: usize| f[i].parse::<f64>().ok();
        let ms = |i: usize| Some(MeanStd { mean: num(i)?, std: num(i + 1)? });
        Some(ResultRow {
            label: f[0].to_string(),
            repeats: f[1].parse().ok()?,
            completed: f[2].parse().ok()?,
            train_acc: ms(3)?,
            test_acc: ms(5)?,
            pruning_ratio: ms(7)?,
            train_acc_ap: ms(9)?,
            test_acc_ap: ms(11)?,
        })
    }
}

pub fn noise_label(config: &ExperimentConfig) -> String {
    if config.train.noise.is_noiseless() {
        "no noise".into()
    } else {
        config.train.noise.alpha().to_string()
    }
}

/// Train, measure the pruning ratio at `epsilon`, and evaluate the network
/// pruned to the surviving columns.
pub fn run_seed(config: &ExperimentConfig, seed: u64, train_set: &Dataset, test_set: &Dataset) -> (SeedResult, Option<Network>) {
    let mut tc = config.train.clone();
    tc.seed = seed;
    log::info!("seed {seed}: training n={} for {} epochs", config.n, tc.epochs);
    let outcome = match trainer::train::<f64>(&tc, train_set, test_set, config.n) {
        Ok(o) => o,
        Err(failure) => {
            let epochs = failure.state.as_ref().map_or(0, |s| s.history.last().map_or(0, |r| r.epoch));
            let history = failure.state.map(|s| s.history).unwrap_or_default();
            log::warn!("seed {seed}: {}", failure.error);
            return (
                SeedResult {
                    seed,
                    epochs_run: epochs,
                    history,
                    metrics: Err(failure.error.to_string()),
                },
                None,
            );
        }
    };
    let metrics = (|| -> stablesgd::Result<SeedMetrics> {
        let params = &outcome.params;
        let x_train = train_set.features_as::<f64>();
        let x_test = test_set.features_as::<f64>();
        let (train_acc, test_acc) = match outcome.history.last() {
            Some(r) if r.epoch == outcome.epochs_run => (r.train_acc, r.test_acc),
            _ => (
                stablesgd::net::accuracy(params, x_train.view(), &train_set.labels)?,
                stablesgd::net::accuracy(params, x_test.view(), &test_set.labels)?,
            ),
        };
        let ratio = prune::pruning_ratio(params, config.epsilon)?;
        let kappa = prune::kappa_for_ratio(ratio);
        let (train_acc_ap, test_acc_ap) = prune::evaluate_pruned(
            params,
            kappa,
            (x_train.view(), &train_set.labels),
            (x_test.view(), &test_set.labels),
        )?;
        Ok(SeedMetrics {
            train_acc,
            test_acc,
            pruning_ratio: ratio,
            train_acc_ap,
            test_acc_ap,
            top10_share: prune::top_share(params, 0.1),
        })
    })();
    if let Ok(m) = &metrics {
        log::info!(
            "seed {seed}: train {:.4} test {:.4} ratio {:.2}% a.p. {:.4}/{:.4}",
            m.train_acc,
            m.test_acc,
            m.pruning_ratio,
            m.train_acc_ap,
            m.test_acc_ap
        );
    }
    (
        SeedResult {
            seed,
            epochs_run: outcome.epochs_run,
            history: outcome.history,
            metrics: metrics.map_err(|e| e.to_string()),
        },
        Some(outcome.params),
    )
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub row: ResultRow,
    pub seeds: Vec<SeedResult>,
    pub output: PathBuf,
}

/// Content hash in the style of git blobs: sha256 of `blob <len>\0<content>`.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

fn write(path: &Path, text: &str) -> stablesgd::Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn manifest_text(canonical: &str, seeds: &[u64]) -> String {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    format!(
        "config_hash {}\nseeds {}\nversion {}\n---\n{}",
        content_hash(canonical.as_bytes()),
        seeds.join(","),
        env!("CARGO_PKG_VERSION"),
        canonical
    )
}

/// Runs every seed of `config` and writes the output directory:
/// `manifest.txt`, `results.csv`, `seeds.csv`, `metrics.csv` and `checkpoints/`.
pub fn run_experiment(config: &ExperimentConfig) -> stablesgd::Result<RunSummary> {
    let (train_set, test_set) = config.dataset.load()?;
    log::info!(
        "loaded {}: {} train / {} test samples, d={}",
        train_set.name,
        train_set.len(),
        test_set.len(),
        train_set.dim()
    );
    let out = &config.output;
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::Io {
        path: ckpt_dir.clone(),
        source: e,
    })?;
    write(&out.join("manifest.txt"), &manifest_text(&config.canonical, &config.seeds()))?;

    let mut seeds = Vec::with_capacity(config.repeat);
    for seed in config.seeds() {
        let (result, params) = run_seed(config, seed, &train_set, &test_set);
        if let Some(p) = params {
            checkpoint::save(&p, &ckpt_dir.join(format!("seed-{seed}.ckpt")))?;
        }
        seeds.push(result);
    }
    let row = ResultRow::aggregate(noise_label(config), &seeds);
    write(&out.join("results.csv"), &format!("{RESULTS_HEADER}\n{}\n", row.to_csv_line()))?;
    write(&out.join("seeds.csv"), &seeds_csv(&seeds))?;
    write(&out.join("metrics.csv"), &metrics_csv(&seeds))?;
    Ok(RunSummary {
        row,
        seeds,
        output: out.clone(),
    })
}

pub fn seeds_csv(seeds: &[SeedResult]) -> String {
    let mut s = format!("{SEEDS_HEADER}\n");
    for r in seeds {
        match &r.metrics {
            Ok(m) => {
                let _ = writeln!(
                    s,
                    "{},ok,{},{},{},{},{},{},{},",
                    r.seed, r.epochs_run, m.train_acc, m.test_acc, m.pruning_ratio, m.train_acc_ap, m.test_acc_ap, m.top10_share
                );
            }
            Err(msg) => {
                let _ = writeln!(s, "{},failed,{},,,,,,,{}", r.seed, r.epochs_run, msg.replace([',', '\n'], ";"));
            }
        }
    }
    s
}

pub fn metrics_csv(seeds: &[SeedResult]) -> String {
    let mut s = String::from("seed,epoch,train_loss,train_acc,test_acc\n");
    for r in seeds {
        for e in &r.history {
            let _ = writeln!(s, "{},{},{},{},{}", r.seed, e.epoch, e.train_loss, e.train_acc, e.test_acc);
        }
    }
    s
}

/// Parses `seeds.csv`; failed seeds come back with `metrics: Err`.
pub fn parse_seeds_csv(text: &str) -> Option<Vec<SeedResult>> {
    let mut out = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.splitn(10, ',').collect();
        if f.len() != 10 {
            return None;
        }
        let num = |i: usize| f[i].parse::<f64>().ok();
        let metrics = if f[1] == "ok" {
            Ok(SeedMetrics {
                train_acc: num(3)?,
                test_acc: num(4)?,
                pruning_ratio: num(5)?,
                train_acc_ap: num(6)?,
                test_acc_ap: num(7)?,
                top10_share: num(8)?,
            })
        } else {
            Err(f[9].to_string())
        };
        out.push(SeedResult {
            seed: f[0].parse().ok()?,
            epochs_run: f[2].parse().ok()?,
            history: Vec::new(),
            metrics,
        });
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(seed: u64, acc: f64) -> SeedResult {
        SeedResult {
            seed,
            epochs_run: 1,
            history: vec![],
            metrics: Ok(SeedMetrics {
                train_acc: acc,
                test_acc: acc,
                pruning_ratio: 10.0 * acc,
                train_acc_ap: acc,
                test_acc_ap: acc,
                top10_share: 0.5,
            }),
        }
    }

    #[test]
    fn aggregation_uses_sample_std_and_skips_failures() {
        let mut seeds: Vec<SeedResult> = [0.9, 0.92, 0.94].iter().enumerate().map(|(i, &a)| ok(i as u64, a)).collect();
        seeds.push(SeedResult {
            seed: 9,
            epochs_run: 0,
            history: vec![],
            metrics: Err("diverged".into()),
        });
        let row = ResultRow::aggregate("1.9", &seeds);
        assert_eq!((row.repeats, row.completed), (4, 3));
        assert!(!row.is_complete());
        assert!((row.test_acc.mean - 0.92).abs() < 1e-12);
        assert!((row.test_acc.std - 0.02).abs() < 1e-12);
        let back = ResultRow::from_csv_line(&row.to_csv_line()).unwrap();
        assert_eq!(back, row);
        let parsed = parse_seeds_csv(&seeds_csv(&seeds)).unwrap();
        assert_eq!(parsed.len(), 4);
        assert_eq!(ResultRow::aggregate("1.9", &parsed), row);
    }

    #[test]
    fn content_hash_matches_git_blob_construction() {
        // sha256 of "blob 0\0"
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
