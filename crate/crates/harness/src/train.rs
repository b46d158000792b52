//! Training runs and their on-disk artifacts.
//!
//! Layout under the output root, per run and seed:
//!
//! ```text
//! <out>/<run>/summary.csv
//! <out>/<run>/seed_<s>/config.toml
//! <out>/<run>/seed_<s>/curve.csv
//! <out>/<run>/seed_<s>/best.json
//! ```

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::info;
use manip_rl::env::Environment;
use manip_rl::estimation::{
    evaluate_policy, mean_and_std, summarize_run, CurveRow, CurvePoint, Evaluation, RunSummary,
    ValueBaseline,
};
use manip_rl::naf::{naf_train, NafAgent, NafNetwork, NafRngs};
use manip_rl::nn::AdamState;
use manip_rl::policy::GaussianMlpPolicy;
use manip_rl::rollout::collect_episodes;
use manip_rl::seeding::{Seeds, Stream};
use manip_rl::trpo::trpo_step;
use manip_rl::vpg::{score_weights, vpg_update};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, RunConfig, OUT_DIR_ENV};

/// Learned parameters saved at the best evaluation so far.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Policy {
        policy: GaussianMlpPolicy,
        baseline: Option<ValueBaseline>,
    },
    Naf {
        online: NafNetwork,
        target: NafNetwork,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub seed: u64,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub model: Model,
}

impl Checkpoint {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes through a temporary file so a crash never leaves a torn
    /// checkpoint behind.
    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string(self)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Noise-free evaluation of the saved controller.
    pub fn evaluate(&self, n_episodes: usize, seed: u64) -> anyhow::Result<Evaluation> {
        let mut env = self.config.make_env()?;
        let mut rng = Seeds::new(seed).rng(Stream::Eval);
        let (low, high) = env.action_bounds();
        let ev = match &self.model {
            Model::Policy { policy, .. } => evaluate_policy(
                |s| Ok(policy.clamp(&policy.mean_action(s)?)),
                env.as_mut(),
                n_episodes,
                &mut rng,
            )?,
            Model::Naf { online, .. } => evaluate_policy(
                |s| {
                    let mu = online.mu(s)?;
                    Ok(mu.iter().zip(low.iter().zip(&high)).map(|(a, (l, h))| a.clamp(*l, *h)).collect())
                },
                env.as_mut(),
                n_episodes,
                &mut rng,
            )?,
        };
        Ok(ev)
    }
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algo: String,
    pub env: String,
    pub arch: String,
    pub batch: usize,
    pub final_avg_return: f64,
    pub final_std: f64,
    pub max_return: f64,
    pub episodes_required: f64,
    /// Seed, or `mean` / `std` for rows aggregated over seeds.
    pub seed: String,
}

pub const SUMMARY_HEADER: &str = "algo,env,arch,batch,final_avg_return,final_std,max_return,episodes_required,seed";

impl SummaryRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.algo,
            self.env,
            self.arch,
            self.batch,
            self.final_avg_return,
            self.final_std,
            self.max_return,
            self.episodes_required,
            self.seed
        )
    }

    pub fn parse_csv_line(line: &str) -> anyhow::Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            bail!("summary row needs 9 fields, got {}", f.len());
        }
        Ok(SummaryRow {
            algo: f[0].to_string(),
            env: f[1].to_string(),
            arch: f[2].to_string(),
            batch: f[3].parse()?,
            final_avg_return: f[4].parse()?,
            final_std: f[5].parse()?,
            max_return: f[6].parse()?,
            episodes_required: f[7].parse()?,
            seed: f[8].to_string(),
        })
    }
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn parse_summary_csv(text: &str) -> anyhow::Result<Vec<SummaryRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(SUMMARY_HEADER) {
        bail!("summary CSV is missing its header");
    }
    lines.map(SummaryRow::parse_csv_line).collect()
}

/// Per-seed rows followed, for several seeds, by `mean` and `std` rows
/// (population std over seeds).
pub fn aggregate_rows(per_seed: &[SummaryRow]) -> Vec<SummaryRow> {
    let mut rows = per_seed.to_vec();
    if per_seed.len() > 1 {
        let col = |f: fn(&SummaryRow) -> f64| mean_and_std(&per_seed.iter().map(f).collect::<Vec<_>>());
        let stats = [
            col(|r| r.final_avg_return),
            col(|r| r.final_std),
            col(|r| r.max_return),
            col(|r| r.episodes_required),
        ];
        for (label, pick) in [("mean", 0usize), ("std", 1usize)] {
            let v = |i: usize| if pick == 0 { stats[i].0 } else { stats[i].1 };
            rows.push(SummaryRow {
                final_avg_return: v(0),
                final_std: v(1),
                max_return: v(2),
                episodes_required: v(3),
                seed: label.to_string(),
                ..per_seed[0].clone()
            });
        }
    }
    rows
}

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub curve: Vec<CurveRow>,
    /// Success-terminal episodes out of `n_test` at each evaluation.
    pub successes: Vec<usize>,
    pub summary: RunSummary,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
    pub rows: Vec<SummaryRow>,
}

/// Replaces the configured output root with `$MANIP_RL_OUT` when set.
pub fn apply_env_override(cfg: &mut RunConfig) {
    if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
        cfg.out_dir = PathBuf::from(dir);
    }
}

/// Runs every configured seed and writes the run's summary table.
pub fn run_training(cfg: &RunConfig) -> anyhow::Result<RunOutcome> {
    if let Err(errs) = cfg.validate() {
        bail!("invalid run configuration:\n  {}", errs.join("\n  "));
    }
    let dir = cfg.out_dir.join(cfg.run_name());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut seeds = Vec::new();
    for &seed in &cfg.seeds {
        seeds.push(run_seed(cfg, seed)?);
    }
    let per_seed: Vec<SummaryRow> = seeds.iter().map(|s| summary_row(cfg, s)).collect();
    let rows = aggregate_rows(&per_seed);
    fs::write(dir.join("summary.csv"), summary_to_csv(&rows))?;
    Ok(RunOutcome {
        name: cfg.run_name(),
        dir,
        seeds,
        rows,
    })
}

fn summary_row(cfg: &RunConfig, s: &SeedOutcome) -> SummaryRow {
    SummaryRow {
        algo: cfg.algorithm.id().to_string(),
        env: cfg.env.id().to_string(),
        arch: cfg.architecture.to_string(),
        batch: cfg.batch(),
        final_avg_return: s.summary.final_avg_return,
        final_std: s.summary.final_std,
        max_return: s.summary.max_return,
        episodes_required: s.summary.episodes_required as f64,
        seed: s.seed.to_string(),
    }
}

/// Appends curve rows to disk as they are produced and keeps the best
/// checkpoint current.
struct Recorder {
    cfg: RunConfig,
    seed: u64,
    csv: File,
    best_path: PathBuf,
    best: f64,
    rows: Vec<CurveRow>,
    successes: Vec<usize>,
}

impl Recorder {
    fn new(cfg: &RunConfig, seed: u64, dir: &Path) -> anyhow::Result<Self> {
        let mut csv = File::create(dir.join("curve.csv"))?;
        writeln!(csv, "{}", CurveRow::HEADER)?;
        Ok(Recorder {
            cfg: cfg.clone(),
            seed,
            csv,
            best_path: dir.join("best.json"),
            best: f64::NEG_INFINITY,
            rows: Vec::new(),
            successes: Vec::new(),
        })
    }

    fn record(&mut self, row: CurveRow, successes: usize, model: impl FnOnce() -> Model) -> anyhow::Result<()> {
        writeln!(self.csv, "{}", row.to_csv_line())?;
        self.csv.flush()?;
        info!(
            "{} seed {}: episodes {} mean return {:.4} ± {:.4}, successes {}/{}",
            self.cfg.run_name(),
            self.seed,
            row.total_episodes,
            row.mean_return,
            row.std_return,
            successes,
            self.cfg.n_test
        );
        if row.mean_return > self.best {
            self.best = row.mean_return;
            Checkpoint {
                config: self.cfg.clone(),
                seed: self.seed,
                episodes: row.total_episodes,
                mean_return: row.mean_return,
                std_return: row.std_return,
                model: model(),
            }
            .save(&self.best_path)?;
        }
        self.rows.push(row);
        self.successes.push(successes);
        Ok(())
    }
}

/// Trains one seed. On failure the curve written so far and the best
/// checkpoint stay on disk.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> anyhow::Result<SeedOutcome> {
    let dir = cfg.out_dir.join(cfg.run_name()).join(format!("seed_{seed}"));
    fs::create_dir_all(&dir)?;
    let echo = RunConfig {
        seeds: vec![seed],
        ..cfg.clone()
    };
    fs::write(dir.join("config.toml"), echo.to_toml()?)?;
    let mut rec = Recorder::new(cfg, seed, &dir)?;
    let result = match cfg.algorithm {
        Algorithm::Vpg | Algorithm::Trpo => train_policy_gradient(cfg, seed, &mut rec),
        Algorithm::DqnNaf => train_naf(cfg, seed, &mut rec),
    };
    result.with_context(|| format!("run {} seed {seed} aborted", cfg.run_name()))?;
    let points: Vec<CurvePoint> = rec.rows.iter().map(CurveRow::point).collect();
    let summary = summarize_run(&points)?;
    Ok(SeedOutcome {
        seed,
        dir,
        curve: rec.rows,
        successes: rec.successes,
        summary,
    })
}

fn evaluate_mean(policy: &GaussianMlpPolicy, env: &mut dyn Environment, n: usize, rng: &mut ChaCha8Rng) -> manip_rl::Result<Evaluation> {
    evaluate_policy(|s| Ok(policy.clamp(&policy.mean_action(s)?)), env, n, rng)
}

fn train_policy_gradient(cfg: &RunConfig, seed: u64, rec: &mut Recorder) -> anyhow::Result<()> {
    let seeds = Seeds::new(seed);
    let mut env = cfg.make_env()?;
    let mut eval_env = cfg.make_env()?;
    let (low, high) = env.action_bounds();
    let obs_dim = env.obs_dim();
    let mut policy = GaussianMlpPolicy::new(
        obs_dim,
        &cfg.architecture.hidden(),
        low,
        high,
        &mut seeds.rng(Stream::PolicyInit),
    )?;
    let use_baseline = cfg.algorithm == Algorithm::Trpo || cfg.vpg.use_baseline;
    let mut baseline = if use_baseline {
        Some(ValueBaseline::new(obs_dim, &cfg.baseline_hidden, &mut seeds.rng(Stream::BaselineInit))?)
    } else {
        None
    };
    let mut adam = AdamState::new(policy.param_count(), cfg.vpg.learning_rate);
    let mut env_rng = seeds.rng(Stream::Env);
    let mut action_rng = seeds.rng(Stream::Exploration);
    let mut eval_rng = seeds.rng(Stream::Eval);

    let max_episodes = cfg.max_episodes();
    let per_update = cfg.episodes_per_update();
    let eval_every = cfg.eval_every();
    let snapshot = |p: &GaussianMlpPolicy, b: &Option<ValueBaseline>| Model::Policy {
        policy: p.clone(),
        baseline: b.clone(),
    };

    let ev = evaluate_mean(&policy, eval_env.as_mut(), cfg.n_test, &mut eval_rng)?;
    rec.record(curve_row(0, 0, 0, &ev, f64::NAN, f64::NAN), ev.successes, || {
        snapshot(&policy, &baseline)
    })?;
    let (mut episodes, mut timesteps, mut iteration) = (0, 0, 0);
    while episodes < max_episodes {
        let n = per_update.min(max_episodes - episodes);
        let trajs = collect_episodes(env.as_mut(), &policy, n, &mut env_rng, &mut action_rng)?;
        episodes += n;
        timesteps += trajs.iter().map(|t| t.len()).sum::<usize>();
        iteration += 1;
        let (kl, gain) = match cfg.algorithm {
            Algorithm::Trpo => {
                let d = trpo_step(&mut policy, &trajs, baseline.as_mut(), &cfg.trpo)?;
                (d.kl, d.surrogate_improvement)
            }
            _ => {
                let w = score_weights(
                    &trajs,
                    baseline.as_mut(),
                    cfg.vpg.gae,
                    cfg.vpg.baseline_max_kl,
                    cfg.vpg.baseline_cg_iters,
                    true,
                )?;
                vpg_update(&mut policy, &trajs, &w, &mut adam)?;
                (f64::NAN, f64::NAN)
            }
        };
        if iteration % eval_every == 0 || episodes >= max_episodes {
            let ev = evaluate_mean(&policy, eval_env.as_mut(), cfg.n_test, &mut eval_rng)?;
            rec.record(curve_row(iteration, episodes, timesteps, &ev, kl, gain), ev.successes, || {
                snapshot(&policy, &baseline)
            })?;
        }
    }
    Ok(())
}

fn curve_row(iteration: usize, episodes: usize, timesteps: usize, ev: &Evaluation, kl: f64, gain: f64) -> CurveRow {
    CurveRow {
        iteration,
        total_episodes: episodes,
        total_timesteps: timesteps,
        mean_return: ev.mean_return,
        std_return: ev.std_return,
        kl,
        surrogate_improvement: gain,
    }
}

fn train_naf(cfg: &RunConfig, seed: u64, rec: &mut Recorder) -> anyhow::Result<()> {
    let seeds = Seeds::new(seed);
    let mut env = cfg.make_env()?;
    let mut eval_env = cfg.make_env()?;
    let online = NafNetwork::new(
        env.obs_dim(),
        &cfg.architecture.hidden(),
        env.action_dim(),
        &mut seeds.rng(Stream::PolicyInit),
    )?;
    let mut agent = NafAgent::new(online, cfg.naf.clone())?;
    let mut rngs = NafRngs {
        env: seeds.rng(Stream::Env),
        noise: seeds.rng(Stream::Exploration),
        minibatch: seeds.rng(Stream::Minibatch),
        eval: seeds.rng(Stream::Eval),
    };
    let mut failure = None;
    let result = naf_train(
        &mut agent,
        env.as_mut(),
        eval_env.as_mut(),
        cfg.max_episodes(),
        cfg.eval_every(),
        cfg.n_test,
        &mut rngs,
        |row, agent, ev| {
            rec.record(*row, ev.successes, || Model::Naf {
                online: agent.online.clone(),
                target: agent.target.clone(),
            })
            .map_err(|e| {
                failure = Some(e);
                manip_rl::Error::InvalidConfig("artifact write failed".into())
            })
        },
    );
    if let Some(e) = failure {
        return Err(e);
    }
    result?;
    Ok(())
}
