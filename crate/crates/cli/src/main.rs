use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stablesgd::{checkpoint, prune, Network};
use stablesgd_cli::config::{self, ExperimentConfig, KeyValues};
use stablesgd_cli::sde_run::{self, SdeConfig};
use stablesgd_cli::{exit, fetch, report, run};

#[derive(Parser)]
#[command(name = "stablesgd", version, about = "Heavy-tailed SGD training, pruning and particle-system experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, prune and evaluate over repeated seeds.
    Run { config: PathBuf },
    /// Run a particle-system rate experiment.
    SdeRun { config: PathBuf },
    /// Summarise every run under a results directory.
    Report { dir: PathBuf },
    /// Pruning ratio of a saved network.
    Prune {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
    /// Install a dataset into the data root from a local directory or zip archive.
    FetchData {
        /// ecg5000, mnist or cifar10
        name: String,
        #[arg(long)]
        from: PathBuf,
        /// Destination root (defaults to $STABLESGD_DATA or ./data).
        #[arg(long)]
        dest: Option<PathBuf>,
        #[arg(long)]
        skip_checksum: bool,
    },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config } => {
            let cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return code(exit::CONFIG);
                }
            };
            match run::run_experiment(&cfg) {
                Ok(summary) => {
                    println!("{}\n{}", run::RESULTS_HEADER, summary.row.to_csv_line());
                    if summary.row.is_complete() {
                        code(exit::OK)
                    } else {
                        eprintln!(
                            "{} of {} seeds failed; see {}",
                            summary.row.repeats - summary.row.completed,
                            summary.row.repeats,
                            summary.output.join("seeds.csv").display()
                        );
                        code(exit::FAILURE)
                    }
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    code(exit::FAILURE)
                }
            }
        }
        Command::SdeRun { config } => {
            let cfg = match KeyValues::load(&config).and_then(|kv| SdeConfig::from_keys(&kv)) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return code(exit::CONFIG);
                }
            };
            match sde_run::run_sde(&cfg) {
                Ok(outcome) => {
                    print!("{}", outcome.summary());
                    code(exit::OK)
                }
                Err(e) => {
                    eprintln!("experiment failed: {e}");
                    code(exit::FAILURE)
                }
            }
        }
        Command::Report { dir } => {
            let mut r = report::collect(&dir);
            if let Err(e) = report::write_plots(&dir, &mut r) {
                eprintln!("{e}");
                return code(exit::FAILURE);
            }
            print!("{}", r.render());
            for p in &r.plots {
                println!("wrote {}", p.display());
            }
            if r.is_empty() {
                eprintln!("no results under {}", dir.display());
                code(exit::FAILURE)
            } else {
                code(exit::OK)
            }
        }
        Command::Prune { checkpoint: path, epsilon } => {
            let result = checkpoint::load::<f64>(&path).and_then(|net: Network| {
                let ratio = prune::pruning_ratio(&net, epsilon)?;
                let (_, rep) = prune::prune_topk(&net, prune::kappa_for_ratio(ratio))?;
                Ok((net.n(), ratio, rep))
            });
            match result {
                Ok((n, ratio, rep)) => {
                    println!("units {n}");
                    println!("epsilon {epsilon}");
                    println!("pruning_ratio {ratio}");
                    println!("kept {}", rep.kept.len());
                    println!("rel_error {}", rep.rel_error);
                    code(exit::OK)
                }
                Err(stablesgd::Error::Domain(msg)) => {
                    eprintln!("{msg}");
                    code(exit::CONFIG)
                }
                Err(e) => {
                    eprintln!("{e}");
                    code(exit::FAILURE)
                }
            }
        }
        Command::FetchData { name, from, dest, skip_checksum } => {
            let dest = dest.unwrap_or_else(config::data_root);
            match fetch::fetch(&name, &from, &dest, skip_checksum) {
                Ok(r) => {
                    for (path, hash) in &r.files {
                        println!("{hash}  {}", path.display());
                    }
                    code(exit::OK)
                }
                Err(e) => {
                    eprintln!("{e}");
                    code(exit::FAILURE)
                }
            }
        }
    }
}
