use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use udn_energy::cli::{self, ExperimentConfig, Overrides};
use udn_energy::control::ControlConfig;
use udn_energy::scenario::{load_scenario, DensityName, RegionSize};
use udn_energy::sim::OracleSize;

#[derive(Parser)]
#[command(name = "udn-sim", version, about = "Load-aware BS sleeping and OFDMA allocation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file for a density tier.
    Generate {
        #[arg(long, value_parser = parse_tier)]
        tier: DensityName,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000.0)]
        width_m: f64,
        #[arg(long, default_value_t = 1000.0)]
        height_m: f64,
        /// Mean utilisation under the fixed scheme to scale traffic to.
        #[arg(long, default_value_t = 0.3)]
        offered_load: f64,
    },
    /// Run an experiment described by a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Parallel runs; defaults to the number of processors.
        #[arg(long)]
        jobs: Option<usize>,
        /// Single V value, replacing the config's V list.
        #[arg(long)]
        v: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Compare the greedy load-aware step with exhaustive search.
    Verify {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        bs: usize,
        #[arg(long, default_value_t = 3)]
        users: usize,
        #[arg(long, default_value_t = 2)]
        subcarriers: usize,
        #[arg(long)]
        v: Option<f64>,
        /// Write the per-instance gap report here (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print every default parameter, or summarise a scenario file.
    Describe {
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn parse_tier(s: &str) -> Result<DensityName, String> {
    s.parse()
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate {
            tier,
            seed,
            out,
            width_m,
            height_m,
            offered_load,
        } => {
            let dims = RegionSize { width_m, height_m };
            let s = cli::cmd_generate(tier, seed, dims, offered_load, &out)?;
            println!(
                "wrote {}: {} macro, {} small, {} users, fixed-scheme utilisation {:.3}",
                out.display(),
                s.macro_count,
                s.small_count,
                s.user_count,
                s.fixed_utilization
            );
        }
        Command::Run {
            config,
            output_dir,
            horizon,
            jobs,
            v,
            seeds,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply(&Overrides {
                output_dir,
                horizon_slots: horizon,
                jobs,
                v_weight: v,
                seeds,
            });
            let table = cli::cmd_run(&cfg)?;
            print!("{table}");
            println!("results in {}", cfg.output_dir.display());
        }
        Command::Verify {
            instances,
            seed,
            bs,
            users,
            subcarriers,
            v,
            out,
        } => {
            let mut config = ControlConfig::default();
            if let Some(v) = v {
                config.v_weight = v;
            }
            let size = OracleSize {
                num_bs: bs,
                num_users: users,
                num_subcarriers: subcarriers,
            };
            let report = cli::cmd_verify(instances, seed, size, &config, out.as_deref())?;
            let fmt = |g: Option<f64>| g.map_or("-".to_string(), |g| format!("{:.4}", g));
            let worse = report.instances.iter().filter(|i| !i.not_worse_than_all_on).count();
            println!(
                "{} instances: median gap {}, p90 {}, max {}, worse than all-on: {}",
                report.instances.len(),
                fmt(report.median_gap),
                fmt(report.p90_gap),
                fmt(report.max_gap),
                worse
            );
        }
        Command::Describe { scenario } => match scenario {
            Some(path) => print!("{}", cli::describe_scenario(&load_scenario(&path)?)),
            None => print!("{}", cli::cmd_describe()),
        },
    }
    Ok(())
}
