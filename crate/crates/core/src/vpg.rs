//! Vanilla policy gradient with Adam ascent.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::estimation::{
    discounted_returns, gae_from_values, stack_raw_actions, stack_states, standardize, GaeConfig,
    Trajectory, ValueBaseline,
};
use crate::nn::AdamState;
use crate::policy::GaussianMlpPolicy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VpgConfig {
    /// Timesteps gathered per update.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gae: GaeConfig,
    /// Weight scores by standardized GAE advantages from a fitted value
    /// baseline instead of raw discounted returns.
    pub use_baseline: bool,
    pub baseline_max_kl: f64,
    pub baseline_cg_iters: usize,
}

impl Default for VpgConfig {
    fn default() -> Self {
        VpgConfig {
            batch_size: 6000,
            learning_rate: 1e-2,
            gae: GaeConfig::default(),
            use_baseline: true,
            baseline_max_kl: 0.01,
            baseline_cg_iters: 10,
        }
    }
}

impl VpgConfig {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        let mut bad = Vec::new();
        if let Err(Error::InvalidConfig(msg)) = self.gae.validate() {
            bad.push(msg);
        }
        if self.batch_size < horizon {
            bad.push(format!(
                "batch_size {} is shorter than one horizon ({horizon})",
                self.batch_size
            ));
        }
        if !(self.learning_rate > 0.0) {
            bad.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad.join("; ")))
        }
    }
}

/// `(1/N_τ) Σ_i Σ_t ∇log π(a_t|s_t) · w_t`.
pub fn vpg_gradient(
    policy: &GaussianMlpPolicy,
    trajs: &[Trajectory],
    weights: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if trajs.is_empty() {
        return Err(Error::EmptyBatch("vpg_gradient"));
    }
    check_len("vpg weight trajectories", trajs.len(), weights.len())?;
    for (t, w) in trajs.iter().zip(weights) {
        check_len("vpg weights per trajectory", t.len(), w.len())?;
    }
    let flat: Vec<f64> = weights.iter().flatten().copied().collect();
    let mut g = policy.weighted_log_prob_grad(&stack_states(trajs), &stack_raw_actions(trajs), &flat)?;
    let n = trajs.len() as f64;
    for v in g.iter_mut() {
        *v /= n;
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VpgDiagnostics {
    pub grad_norm: f64,
    pub mean_log_prob_before: f64,
    pub mean_log_prob_after: f64,
}

/// One Adam ascent step along the VPG estimate.
pub fn vpg_update(
    policy: &mut GaussianMlpPolicy,
    trajs: &[Trajectory],
    weights: &[Vec<f64>],
    adam: &mut AdamState,
) -> Result<VpgDiagnostics> {
    let g = vpg_gradient(policy, trajs, weights)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("vpg gradient".into()));
    }
    let states = stack_states(trajs);
    let actions = stack_raw_actions(trajs);
    let mean_lp = |p: &GaussianMlpPolicy| -> Result<f64> {
        let lp = p.log_prob_batch(&states, &actions)?;
        Ok(lp.iter().sum::<f64>() / lp.len() as f64)
    };
    let mean_log_prob_before = mean_lp(policy)?;
    let mut params = policy.params();
    let descent: Vec<f64> = g.iter().map(|v| -v).collect();
    adam.step(&mut params, &descent)?;
    policy.set_params(&params)?;
    Ok(VpgDiagnostics {
        grad_norm: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
        mean_log_prob_before,
        mean_log_prob_after: mean_lp(policy)?,
    })
}

/// Per-timestep score weights for a batch: standardized GAE advantages when
/// a baseline is supplied (fitted first on the batch's discounted returns),
/// otherwise the discounted returns themselves.
pub fn score_weights(
    trajs: &[Trajectory],
    baseline: Option<&mut ValueBaseline>,
    gae: GaeConfig,
    baseline_max_kl: f64,
    baseline_cg_iters: usize,
    fit_first: bool,
) -> Result<Vec<Vec<f64>>> {
    match baseline {
        None => Ok(trajs
            .iter()
            .map(|t| discounted_returns(&t.rewards(), gae.gamma, 0.0))
            .collect()),
        Some(vb) => {
            let targets = baseline_targets(trajs, vb, gae.gamma)?;
            let states = stack_states(trajs);
            if fit_first {
                vb.fit(&states, &targets, baseline_max_kl, baseline_cg_iters, 1e-5)?;
            }
            let mut adv = advantages_with(trajs, vb, gae)?;
            if !fit_first {
                vb.fit(&states, &targets, baseline_max_kl, baseline_cg_iters, 1e-5)?;
            }
            standardize_nested(&mut adv);
            Ok(adv)
        }
    }
}

/// Discounted-return regression targets, bootstrapped with the current
/// baseline on truncated episodes.
pub fn baseline_targets(trajs: &[Trajectory], vb: &ValueBaseline, gamma: f64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for t in trajs {
        let tail = if t.ends_terminal() {
            0.0
        } else {
            vb.predict(t.final_state())?
        };
        out.extend(discounted_returns(&t.rewards(), gamma, tail));
    }
    Ok(out)
}

fn advantages_with(trajs: &[Trajectory], vb: &ValueBaseline, gae: GaeConfig) -> Result<Vec<Vec<f64>>> {
    let states = stack_states(trajs);
    let values = vb.predict_batch(&states)?;
    let mut out = Vec::with_capacity(trajs.len());
    let mut offset = 0;
    for t in trajs {
        let v = &values[offset..offset + t.len()];
        offset += t.len();
        let tail = if t.ends_terminal() {
            0.0
        } else {
            vb.predict(t.final_state())?
        };
        out.push(gae_from_values(&t.rewards(), v, tail, gae));
    }
    Ok(out)
}

pub(crate) fn standardize_nested(adv: &mut [Vec<f64>]) {
    let mut flat: Vec<f64> = adv.iter().flatten().copied().collect();
    standardize(&mut flat);
    let mut it = flat.into_iter();
    for a in adv.iter_mut() {
        for v in a.iter_mut() {
            *v = it.next().unwrap();
        }
    }
}
