//! Run configuration.

use std::fmt;
use std::path::PathBuf;

use manip_rl::env::{Environment, GraspConfig, GraspEnv, ReachConfig, ReachEnv};
use manip_rl::naf::NafConfig;
use manip_rl::trpo::TrpoConfig;
use manip_rl::vpg::VpgConfig;
use serde::{Deserialize, Serialize};

/// Environment variable that overrides the output root of every run.
pub const OUT_DIR_ENV: &str = "MANIP_RL_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Vpg,
    Trpo,
    DqnNaf,
}

impl Algorithm {
    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Vpg => "vpg",
            Algorithm::Trpo => "trpo",
            Algorithm::DqnNaf => "dqn_naf",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Reach,
    Grasp,
}

impl EnvId {
    pub fn id(self) -> &'static str {
        match self {
            EnvId::Reach => "reach",
            EnvId::Grasp => "grasp",
        }
    }

    /// Episode budget when none is configured.
    pub fn default_max_episodes(self) -> usize {
        match self {
            EnvId::Reach => 4000,
            EnvId::Grasp => 5000,
        }
    }
}

/// Hidden-layer sizes of the policy (or Q) network.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "ArchSpec", into = "ArchSpec")]
pub enum Architecture {
    H32x32,
    H100x100,
    H150x100x50,
    H400x300,
    Custom(Vec<usize>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ArchSpec {
    Named(String),
    Layers(Vec<usize>),
}

impl Architecture {
    pub const SWEEP: [Architecture; 4] = [
        Architecture::H32x32,
        Architecture::H100x100,
        Architecture::H150x100x50,
        Architecture::H400x300,
    ];

    pub fn hidden(&self) -> Vec<usize> {
        match self {
            Architecture::H32x32 => vec![32, 32],
            Architecture::H100x100 => vec![100, 100],
            Architecture::H150x100x50 => vec![150, 100, 50],
            Architecture::H400x300 => vec![400, 300],
            Architecture::Custom(h) => h.clone(),
        }
    }

    /// Parses `"100x100"`-style labels.
    pub fn parse(label: &str) -> Result<Self, String> {
        let layers: Result<Vec<usize>, _> = label.split('x').map(|p| p.trim().parse::<usize>()).collect();
        match layers {
            Ok(l) if !l.is_empty() && l.iter().all(|&n| n > 0) => Ok(Self::from_layers(l)),
            _ => Err(format!("unrecognised architecture {label:?}")),
        }
    }

    fn from_layers(l: Vec<usize>) -> Self {
        Architecture::SWEEP
            .into_iter()
            .find(|a| a.hidden() == l)
            .unwrap_or(Architecture::Custom(l))
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.hidden().iter().map(|n| n.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

impl TryFrom<ArchSpec> for Architecture {
    type Error = String;

    fn try_from(spec: ArchSpec) -> Result<Self, String> {
        match spec {
            ArchSpec::Named(s) => Architecture::parse(&s),
            ArchSpec::Layers(l) if !l.is_empty() && l.iter().all(|&n| n > 0) => Ok(Self::from_layers(l)),
            ArchSpec::Layers(l) => Err(format!("invalid hidden layers {l:?}")),
        }
    }
}

impl From<Architecture> for ArchSpec {
    fn from(a: Architecture) -> Self {
        ArchSpec::Named(a.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run name; defaults to `<algo>_<env>_<arch>_<batch>`.
    pub name: Option<String>,
    pub algorithm: Algorithm,
    pub env: EnvId,
    pub architecture: Architecture,
    /// Hidden layers of the value baseline (VPG and TRPO).
    pub baseline_hidden: Vec<usize>,
    /// Training stops once this many episodes have been run; 0 only
    /// evaluates the initial policy.
    pub max_episodes: Option<usize>,
    /// Evaluate after this many updates (VPG, TRPO) or episodes (DQN-NAF).
    pub eval_every: Option<usize>,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub trpo: TrpoConfig,
    pub vpg: VpgConfig,
    pub naf: NafConfig,
    pub reach: ReachConfig,
    pub grasp: GraspConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: None,
            algorithm: Algorithm::Trpo,
            env: EnvId::Reach,
            architecture: Architecture::H100x100,
            baseline_hidden: vec![64, 64],
            max_episodes: None,
            eval_every: None,
            n_test: 10,
            seeds: vec![0],
            out_dir: PathBuf::from("runs"),
            trpo: TrpoConfig::default(),
            vpg: VpgConfig::default(),
            naf: NafConfig::default(),
            reach: ReachConfig::default(),
            grasp: GraspConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn max_episodes(&self) -> usize {
        self.max_episodes.unwrap_or_else(|| self.env.default_max_episodes())
    }

    pub fn eval_every(&self) -> usize {
        self.eval_every.unwrap_or(match self.algorithm {
            Algorithm::DqnNaf => 10,
            _ => 1,
        })
    }

    /// Timesteps per update (VPG, TRPO) or minibatch size (DQN-NAF).
    pub fn batch(&self) -> usize {
        match self.algorithm {
            Algorithm::Vpg => self.vpg.batch_size,
            Algorithm::Trpo => self.trpo.batch_size,
            Algorithm::DqnNaf => self.naf.minibatch_size,
        }
    }

    pub fn horizon(&self) -> usize {
        match self.env {
            EnvId::Reach => self.reach.horizon,
            EnvId::Grasp => self.grasp.horizon,
        }
    }

    /// Episodes per update for the batch algorithms, `𝓑 / T`.
    pub fn episodes_per_update(&self) -> usize {
        (self.batch() / self.horizon().max(1)).max(1)
    }

    pub fn run_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            format!(
                "{}_{}_{}_{}",
                self.algorithm.id(),
                self.env.id(),
                self.architecture,
                self.batch()
            )
        })
    }

    pub fn make_env(&self) -> manip_rl::Result<Box<dyn Environment + Send>> {
        Ok(match self.env {
            EnvId::Reach => Box::new(ReachEnv::new(self.reach.clone())?),
            EnvId::Grasp => Box::new(GraspEnv::new(self.grasp.clone())?),
        })
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut bad = Vec::new();
        if self.architecture.hidden().is_empty() || self.architecture.hidden().contains(&0) {
            bad.push("architecture: hidden layer sizes must be positive".to_string());
        }
        if self.baseline_hidden.contains(&0) {
            bad.push("baseline_hidden: layer sizes must be positive".to_string());
        }
        if self.eval_every == Some(0) {
            bad.push("eval_every: must be positive".to_string());
        }
        if self.n_test == 0 {
            bad.push("n_test: must be at least 1".to_string());
        }
        if self.seeds.is_empty() {
            bad.push("seeds: at least one seed is required".to_string());
        }
        if self.seeds.iter().any(|&s| s > i64::MAX as u64) {
            bad.push("seeds: must fit in a signed 64-bit integer".to_string());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            bad.push("seeds: duplicates".to_string());
        }
        let env_check = match self.env {
            EnvId::Reach => self.reach.validate(),
            EnvId::Grasp => self.grasp.validate(),
        };
        if let Err(e) = env_check {
            bad.push(format!("{}: {e}", self.env.id()));
        }
        let algo_check = match self.algorithm {
            Algorithm::Vpg => self.vpg.validate(self.horizon()),
            Algorithm::Trpo => self.trpo.validate().and_then(|_| {
                if self.trpo.batch_size < self.horizon() {
                    Err(manip_rl::Error::InvalidConfig(format!(
                        "batch_size {} is shorter than one horizon ({})",
                        self.trpo.batch_size,
                        self.horizon()
                    )))
                } else {
                    Ok(())
                }
            }),
            Algorithm::DqnNaf => self.naf.validate(),
        };
        if let Err(e) = algo_check {
            bad.push(format!("{}: {e}", self.algorithm.id()));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }
}
