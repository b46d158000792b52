use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use manip_rl_harness::plot::plot_curves;
use manip_rl_harness::sweep::{load_config_dir, sweep, write_table};
use manip_rl_harness::train::{apply_env_override, run_training, summary_to_csv};
use manip_rl_harness::{Checkpoint, RunConfig};

#[derive(Parser)]
#[command(name = "manip-rl", version, about = "Train and evaluate VPG, TRPO and DQN-NAF on planar-arm tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration (every configured seed).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replace the configured seed list with this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output root (takes precedence over MANIP_RL_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every *.toml configuration in a directory.
    Sweep {
        #[arg(long)]
        config_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output root for all runs and the merged table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot learning-curve CSVs into one SVG.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved checkpoint with the noise-free controller.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn resolve_out(cfg: &mut RunConfig, out: &Option<PathBuf>) {
    match out {
        Some(dir) => cfg.out_dir = dir.clone(),
        None => apply_env_override(cfg),
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = RunConfig::from_toml(&text)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            resolve_out(&mut cfg, &out);
            let outcome = run_training(&cfg)?;
            print!("{}", summary_to_csv(&outcome.rows));
            println!("artifacts: {}", outcome.dir.display());
            Ok(true)
        }
        Command::Sweep { config_dir, jobs, out } => {
            let mut cfgs: Vec<RunConfig> = load_config_dir(&config_dir)?.into_iter().map(|(_, c)| c).collect();
            if cfgs.is_empty() {
                anyhow::bail!("no *.toml configurations in {}", config_dir.display());
            }
            for c in cfgs.iter_mut() {
                resolve_out(c, &out);
            }
            let report = sweep(&cfgs, jobs)?;
            let table = cfgs[0].out_dir.join("sweep_summary.csv");
            write_table(&report, &table)?;
            print!("{}", summary_to_csv(&report.table));
            for (name, err) in report.failures() {
                eprintln!("run {name} failed: {err}");
            }
            println!("table: {}", table.display());
            Ok(report.all_succeeded())
        }
        Command::Plot { runs, out } => {
            plot_curves(&runs, &out)?;
            println!("plot: {}", out.display());
            Ok(true)
        }
        Command::Eval { checkpoint, episodes, seed } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let ev = ckpt.evaluate(episodes, seed)?;
            println!(
                "episodes {} mean_return {} std_return {} successes {}",
                ev.returns.len(),
                ev.mean_return,
                ev.std_return,
                ev.successes
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
