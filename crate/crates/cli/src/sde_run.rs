//! Config-driven particle-system experiments.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use stablesgd::data;
use stablesgd::net::{Activation, SecondLayer};
use stablesgd::sde::{
    self, ConstantDrift, Drift, EulerErrorSetup, LinearDrift, MeanFieldLogistic, NetworkDrift, PocSetup, RateTable,
    TailProbeReport, TailProbeSetup, ZeroDrift,
};
use stablesgd::stable::{StableSpec, VectorType};
use stablesgd::Error;

use crate::config::{noise_from_keys, ConfigError, KeyValues};
use crate::run::manifest_text;

#[derive(Clone)]
pub enum SdeExperiment {
    EulerError(EulerErrorSetup),
    Poc(PocSetup),
    IidCompressibility { alpha: f64, ns: Vec<usize>, kappa: f64, trials: usize, seed: u64 },
    MaxStable { alpha: f64, ns: Vec<usize>, trials: usize, seed: u64 },
    TailProbe(TailProbeSetup),
}

impl SdeExperiment {
    pub fn kind(&self) -> &'static str {
        match self {
            SdeExperiment::EulerError(_) => "euler-error",
            SdeExperiment::Poc(_) => "poc",
            SdeExperiment::IidCompressibility { .. } => "iid-compressibility",
            SdeExperiment::MaxStable { .. } => "max-stable",
            SdeExperiment::TailProbe(_) => "tail-probe",
        }
    }
}

pub struct SdeConfig {
    pub experiment: SdeExperiment,
    pub drift: Arc<dyn Drift<f64>>,
    pub output: PathBuf,
    pub canonical: String,
}

fn drift_from_keys(kv: &KeyValues, dim: usize) -> Result<Arc<dyn Drift<f64>>, ConfigError> {
    let kind: String = kv.get_or("drift.kind", "zero".to_string())?;
    Ok(match kind.as_str() {
        "zero" => Arc::new(ZeroDrift),
        "constant" => {
            let v: Vec<f64> = kv.list("drift.value")?.unwrap_or_else(|| vec![0.0]);
            let v = if v.len() == 1 { vec![v[0]; dim] } else { v };
            if v.len() != dim {
                return Err(kv.error("drift.value", format!("expected 1 or {dim} values, found {}", v.len())));
            }
            Arc::new(ConstantDrift(v))
        }
        "linear" => Arc::new(LinearDrift {
            rate: kv.get_or("drift.rate", 1.0)?,
        }),
        "mean-field-logistic" => Arc::new(MeanFieldLogistic {
            confinement: kv.get_or("drift.confinement", 1.0)?,
            coupling: kv.get_or("drift.coupling", 2.0)?,
        }),
        "network" => {
            let d: usize = kv.get_or("dataset.d", 2)?;
            let classes: usize = kv.get_or("dataset.classes", 2)?;
            let set = data::synthetic_mixture(
                d,
                classes,
                kv.get_or("dataset.per_class", 20)?,
                kv.get_or("dataset.separation", 6.0)?,
                kv.get_or("dataset.seed", 0)?,
            )
            .map_err(|e| kv.error("dataset", e.to_string()))?;
            let drift = NetworkDrift {
                x: set.features,
                y: set.labels,
                classes,
                mode: kv.get_or("model.second_layer", SecondLayer::Trainable)?,
                activation: kv.get_or("model.activation", Activation::Tanh)?,
                bias: kv.get_or("model.bias", true)?,
            };
            if drift.particle_dim() != dim {
                return Err(kv.error(
                    "system.dim",
                    format!("network drift needs particle dimension {}", drift.particle_dim()),
                ));
            }
            Arc::new(drift)
        }
        other => {
            return Err(kv.error(
                "drift.kind",
                format!("unknown drift {other:?} (zero, constant, linear, mean-field-logistic, network)"),
            ))
        }
    })
}

fn heavy_alpha(kv: &KeyValues, noise: &StableSpec) -> Result<f64, ConfigError> {
    if noise.alpha() >= 2.0 {
        return Err(kv.error("noise.alpha", "this experiment needs alpha in (0, 2)"));
    }
    Ok(noise.alpha())
}

impl SdeConfig {
    pub fn from_keys(kv: &KeyValues) -> Result<Self, ConfigError> {
        let kind: String = kv.require("experiment.kind")?;
        let noise = noise_from_keys(kv, VectorType::TypeIII, 1.0)?;
        let dim: usize = kv.get_or("system.dim", 1)?;
        if dim == 0 {
            return Err(kv.error("system.dim", "dimension must be at least 1"));
        }
        let trials: usize = kv.get_or("run.trials", 20)?;
        if trials == 0 {
            return Err(kv.error("run.trials", "need at least one trial"));
        }
        let seed: u64 = kv.get_or("run.seed", 0)?;
        let init_scale: f64 = kv.get_or("system.init_scale", 1.0)?;
        let experiment = match kind.as_str() {
            "euler-error" => SdeExperiment::EulerError(EulerErrorSetup {
                noise,
                n: kv.get_or("system.n", 8)?,
                dim,
                horizon: kv.get_or("system.horizon", 1.0)?,
                etas: kv.list("system.etas")?.ok_or_else(|| kv.error("system.etas", "missing required key"))?,
                eta_ref: kv.require("system.eta_ref")?,
                trials,
                init_scale,
                seed,
            }),
            "poc" => SdeExperiment::Poc(PocSetup {
                noise,
                ns: kv.list("system.ns")?.ok_or_else(|| kv.error("system.ns", "missing required key"))?,
                n_ref: kv.get_or("system.n_ref", 4096)?,
                dim,
                horizon: kv.get_or("system.horizon", 1.0)?,
                eta: kv.require("system.eta")?,
                trials,
                init_scale,
                seed,
            }),
            "iid-compressibility" => SdeExperiment::IidCompressibility {
                alpha: heavy_alpha(kv, &noise)?,
                ns: kv.list("system.ns")?.ok_or_else(|| kv.error("system.ns", "missing required key"))?,
                kappa: kv.get_or("prune.kappa", 0.05)?,
                trials,
                seed,
            },
            "max-stable" => SdeExperiment::MaxStable {
                alpha: noise.alpha(),
                ns: kv.list("system.ns")?.ok_or_else(|| kv.error("system.ns", "missing required key"))?,
                trials,
                seed,
            },
            "tail-probe" => SdeExperiment::TailProbe(TailProbeSetup {
                noise,
                dim,
                t: kv.get_or("system.horizon", 1.0)?,
                eta: kv.get_or("system.eta", 1.0)?,
                replicas: kv.get_or("tail.replicas", 100_000)?,
                init_scale,
                hill_fraction: kv.get_or("tail.hill_fraction", sde::DEFAULT_HILL_FRACTION)?,
                seed,
            }),
            other => {
                return Err(kv.error(
                    "experiment.kind",
                    format!("unknown experiment {other:?} (euler-error, poc, iid-compressibility, max-stable, tail-probe)"),
                ))
            }
        };
        let drift = drift_from_keys(kv, dim)?;
        let output = PathBuf::from(kv.get_or("run.output", format!("results/{kind}"))?);
        kv.finish()?;
        Ok(SdeConfig {
            experiment,
            drift,
            output,
            canonical: kv.canonical(),
        })
    }
}

pub enum SdeOutcome {
    Table(RateTable),
    Tail(TailProbeReport),
}

impl SdeOutcome {
    pub fn summary(&self) -> String {
        match self {
            SdeOutcome::Table(t) => {
                let mut s = t.to_csv();
                if let Some(note) = &t.note {
                    s.push_str(&format!("# {note}\n"));
                }
                s
            }
            SdeOutcome::Tail(r) => format!(
                "hill_index {:.4} (k={})\ndominance_ratio {:.4e} (threshold {:.4e})\nheavy_tailed {}\n",
                r.hill_index,
                r.hill_k,
                r.dominance_ratio,
                r.dominance_threshold,
                r.heavy_tailed()
            ),
        }
    }
}

pub fn execute(cfg: &SdeConfig) -> stablesgd::Result<SdeOutcome> {
    let drift = cfg.drift.clone();
    Ok(match &cfg.experiment {
        SdeExperiment::EulerError(s) => SdeOutcome::Table(sde::euler_error_experiment(drift, s)?),
        SdeExperiment::Poc(s) => SdeOutcome::Table(sde::poc_experiment(drift, s)?),
        SdeExperiment::IidCompressibility { alpha, ns, kappa, trials, seed } => {
            SdeOutcome::Table(sde::iid_compressibility_experiment(*alpha, ns, *kappa, *trials, *seed)?)
        }
        SdeExperiment::MaxStable { alpha, ns, trials, seed } => {
            SdeOutcome::Table(sde::max_stable_scaling(*alpha, ns, *trials, *seed)?)
        }
        SdeExperiment::TailProbe(s) => SdeOutcome::Tail(sde::second_moment_divergence_probe(drift, s)?),
    })
}

/// Runs the experiment and writes `<kind>.csv`, `<kind>.tsv` (or the tail
/// summary) and `manifest.txt` into the output directory.
pub fn run_sde(cfg: &SdeConfig) -> stablesgd::Result<SdeOutcome> {
    let outcome = execute(cfg)?;
    let out = &cfg.output;
    let io = |path: PathBuf| move |e| Error::Io { path, source: e };
    fs::create_dir_all(out).map_err(io(out.clone()))?;
    let seeds = match &cfg.experiment {
        SdeExperiment::EulerError(s) => s.seed,
        SdeExperiment::Poc(s) => s.seed,
        SdeExperiment::IidCompressibility { seed, .. } | SdeExperiment::MaxStable { seed, .. } => *seed,
        SdeExperiment::TailProbe(s) => s.seed,
    };
    let manifest = out.join("manifest.txt");
    fs::write(&manifest, manifest_text(&cfg.canonical, &[seeds])).map_err(io(manifest))?;
    let kind = cfg.experiment.kind();
    match &outcome {
        SdeOutcome::Table(t) => t.write(&out.join(format!("{kind}.csv")), &out.join(format!("{kind}.tsv")))?,
        SdeOutcome::Tail(r) => {
            let csv = out.join(format!("{kind}.csv"));
            fs::write(&csv, r.to_csv()).map_err(io(csv))?;
            let txt = out.join(format!("{kind}.txt"));
            fs::write(&txt, outcome.summary()).map_err(io(txt))?;
        }
    }
    Ok(outcome)
}
