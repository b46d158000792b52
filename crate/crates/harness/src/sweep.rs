//! Grid sweeps over run configurations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::train::{run_training, summary_to_csv, SummaryRow};

#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub name: String,
    /// Summary rows, or the error that ended the run.
    pub result: Result<Vec<SummaryRow>, String>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Rows of every successful run ordered by (algo, env, arch, batch).
    pub table: Vec<SummaryRow>,
}

impl SweepReport {
    pub fn all_succeeded(&self) -> bool {
        self.entries.iter().all(|e| e.result.is_ok())
    }

    pub fn failures(&self) -> Vec<(&str, &str)> {
        self.entries
            .iter()
            .filter_map(|e| e.result.as_ref().err().map(|m| (e.name.as_str(), m.as_str())))
            .collect()
    }
}

/// Runs each configuration on a pool of `jobs` threads. Each run stays
/// single-threaded; a failing run is recorded and the others continue.
pub fn sweep(cfgs: &[RunConfig], jobs: usize) -> anyhow::Result<SweepReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building the sweep thread pool")?;
    let entries: Vec<SweepEntry> = pool.install(|| {
        cfgs.par_iter()
            .map(|cfg| SweepEntry {
                name: cfg.run_name(),
                result: run_training(cfg).map(|o| o.rows).map_err(|e| format!("{e:#}")),
            })
            .collect()
    });
    let mut table: Vec<SummaryRow> = entries
        .iter()
        .filter_map(|e| e.result.as_ref().ok())
        .flatten()
        .cloned()
        .collect();
    table.sort_by(|a, b| {
        (a.algo.as_str(), a.env.as_str(), a.arch.as_str(), a.batch)
            .cmp(&(b.algo.as_str(), b.env.as_str(), b.arch.as_str(), b.batch))
    });
    Ok(SweepReport { entries, table })
}

/// Reads every `*.toml` in `dir`, in file-name order.
pub fn load_config_dir(dir: &Path) -> anyhow::Result<Vec<(PathBuf, RunConfig)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p)?;
            let cfg = RunConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?;
            Ok((p, cfg))
        })
        .collect()
}

pub fn write_table(report: &SweepReport, path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, summary_to_csv(&report.table))?;
    Ok(())
}
