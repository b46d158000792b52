//! Trajectories, returns, GAE(λ), the trust-region value baseline and the
//! evaluation statistics used for learning curves.

use std::fmt::Write as _;

use log::warn;
use ndarray::Array2;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::cg::{conjugate_gradient, dot};
use crate::env::Environment;
use crate::error::{check_len, Error, Result};
use crate::nn::{Activation, Mlp};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Action as drawn from the policy, before clamping.
    pub action_raw: Vec<f64>,
    /// Action actually applied to the environment.
    pub action_env: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True terminal state (not horizon truncation).
    pub terminal: bool,
    /// Zero-based timestep within the episode.
    pub t: usize,
}

/// One episode. Timesteps are contiguous from zero and only the last
/// transition may be terminal; a non-terminal last transition means the
/// episode was truncated at the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    transitions: Vec<Transition>,
    total_reward: f64,
    success: bool,
}

impl Trajectory {
    pub fn new(transitions: Vec<Transition>, success: bool) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::EmptyBatch("trajectory"));
        }
        for (i, tr) in transitions.iter().enumerate() {
            if tr.t != i {
                return Err(Error::InvalidConfig(format!(
                    "trajectory timesteps must be contiguous from 0, found t={} at index {i}",
                    tr.t
                )));
            }
            if tr.terminal && i + 1 != transitions.len() {
                return Err(Error::InvalidConfig(format!(
                    "terminal transition at index {i} does not end the trajectory"
                )));
            }
        }
        let total_reward = transitions.iter().map(|t| t.reward).sum();
        Ok(Trajectory {
            transitions,
            total_reward,
            success,
        })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Undiscounted return.
    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }

    /// Whether the task was achieved at any step.
    pub fn success(&self) -> bool {
        self.success
    }

    pub fn ends_terminal(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.terminal)
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    /// States `s_0..s_{T-1}` as rows.
    pub fn states(&self) -> Array2<f64> {
        rows_to_matrix(self.transitions.iter().map(|t| t.state.as_slice()))
    }

    pub fn raw_actions(&self) -> Array2<f64> {
        rows_to_matrix(self.transitions.iter().map(|t| t.action_raw.as_slice()))
    }

    pub fn final_state(&self) -> &[f64] {
        &self.transitions.last().unwrap().next_state
    }
}

pub(crate) fn rows_to_matrix<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Array2<f64> {
    let mut data = Vec::new();
    let mut n_rows = 0;
    let mut n_cols = 0;
    for r in rows {
        n_cols = r.len();
        data.extend_from_slice(r);
        n_rows += 1;
    }
    Array2::from_shape_vec((n_rows, n_cols), data).expect("rows share a length")
}

/// States of every transition in a batch of trajectories, stacked.
pub fn stack_states(trajs: &[Trajectory]) -> Array2<f64> {
    rows_to_matrix(
        trajs
            .iter()
            .flat_map(|t| t.transitions.iter().map(|tr| tr.state.as_slice())),
    )
}

pub fn stack_raw_actions(trajs: &[Trajectory]) -> Array2<f64> {
    rows_to_matrix(
        trajs
            .iter()
            .flat_map(|t| t.transitions.iter().map(|tr| tr.action_raw.as_slice())),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        GaeConfig {
            gamma: 0.99,
            lambda: 0.97,
        }
    }
}

impl GaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) && self.gamma != 1.0 {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// `Σ_{k ≥ from_t} γ^{k - from_t} r_k` over the recorded rewards.
pub fn discounted_return(traj: &Trajectory, gamma: f64, from_t: usize) -> f64 {
    let mut acc = 0.0;
    for tr in traj.transitions[from_t..].iter().rev() {
        acc = tr.reward + gamma * acc;
    }
    acc
}

/// Discounted returns for every timestep, optionally bootstrapped with
/// `tail_value` after the last step.
pub fn discounted_returns(rewards: &[f64], gamma: f64, tail_value: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = tail_value;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// GAE(λ) for one episode given `V(s_t)` for every step and the value used
/// after the final step (0 for terminal endings, `V(s_T)` for truncation).
pub fn gae_from_values(rewards: &[f64], values: &[f64], tail_value: f64, cfg: GaeConfig) -> Vec<f64> {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next_v = if t + 1 < n { values[t + 1] } else { tail_value };
        let delta = rewards[t] + cfg.gamma * next_v - values[t];
        acc = delta + cfg.gamma * cfg.lambda * acc;
        adv[t] = acc;
    }
    adv
}

/// Per-timestep GAE(λ) advantages, one vector per trajectory.
pub fn gae_advantages<V>(trajs: &[Trajectory], value_fn: V, cfg: GaeConfig) -> Vec<Vec<f64>>
where
    V: Fn(&[f64]) -> f64,
{
    trajs
        .iter()
        .map(|traj| {
            let values: Vec<f64> = traj.transitions.iter().map(|t| value_fn(&t.state)).collect();
            let tail = if traj.ends_terminal() {
                0.0
            } else {
                value_fn(traj.final_state())
            };
            gae_from_values(&traj.rewards(), &values, tail, cfg)
        })
        .collect()
}

/// In-place standardization to zero mean and unit (population) variance.
/// Constant batches are only centred.
pub fn standardize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    for v in values.iter_mut() {
        *v -= mean;
    }
    let std = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if std > 1e-12 {
        for v in values.iter_mut() {
            *v /= std;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineFitReport {
    pub accepted: bool,
    pub mse_before: f64,
    pub mse_after: f64,
    /// Step halvings the line search needed.
    pub halvings: usize,
    /// Curvature `xᵀGx` of the unscaled Gauss-Newton direction.
    pub curvature: f64,
}

/// One trust-region Gauss-Newton step of a scalar-output network on the mean
/// squared error.
///
/// Solves `(G + damping·I) x = -∇L` by CG, with `G = (2/N) JᵀJ` the
/// Gauss-Newton matrix of the loss, shrinks `x` so the predicted mean squared
/// change of the outputs `½ xᵀGx` stays within `max_kl`, then halves the
/// step (at most 10 times) until the training MSE does not increase. If no
/// candidate qualifies the network is left unchanged.
pub fn fit_baseline(
    value_net: &mut Mlp,
    states: &Array2<f64>,
    targets: &[f64],
    max_kl: f64,
    n_cg: usize,
    damping: f64,
) -> Result<BaselineFitReport> {
    check_len("baseline targets", states.nrows(), targets.len())?;
    check_len("baseline output", 1, value_net.output_dim())?;
    let n = states.nrows();
    if n == 0 {
        return Err(Error::EmptyBatch("fit_baseline"));
    }
    let mse = |net: &Mlp| -> Result<f64> {
        let pred = net.predict_batch(states)?;
        Ok(pred
            .iter()
            .zip(targets)
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / n as f64)
    };
    let cache = value_net.forward_batch(states)?;
    let residual = cache.output().column(0).to_owned() - &ndarray::Array1::from(targets.to_vec());
    let mse_before = residual.iter().map(|r| r * r).sum::<f64>() / n as f64;
    let out_grad = (&residual * (2.0 / n as f64)).insert_axis(ndarray::Axis(1));
    let grad = value_net.backward_batch(&cache, &out_grad)?.params;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("baseline gradient".into()));
    }
    let unchanged = |curvature| BaselineFitReport {
        accepted: false,
        mse_before,
        mse_after: mse_before,
        halvings: 0,
        curvature,
    };
    if grad.iter().all(|g| *g == 0.0) {
        return Ok(unchanged(0.0));
    }

    let gauss_newton = |v: &[f64]| -> Result<Vec<f64>> {
        let jv = value_net.jvp_batch(&cache, v)?;
        value_net.backward_batch(&cache, &(jv * (2.0 / n as f64))).map(|g| g.params)
    };
    let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
    let solve = conjugate_gradient(
        |v| {
            let mut out = gauss_newton(v)?;
            for (o, x) in out.iter_mut().zip(v) {
                *o += damping * x;
            }
            Ok(out)
        },
        &neg_grad,
        n_cg,
        1e-10,
    )?;
    let gx = gauss_newton(&solve.x)?;
    let curvature = dot(&solve.x, &gx);
    if solve.breakdown || !(curvature > 0.0) {
        warn!("baseline fit skipped: no curvature along the Gauss-Newton direction");
        return Ok(unchanged(curvature));
    }
    let scale = (2.0 * max_kl / curvature).sqrt().min(1.0);
    let theta = value_net.flatten_params();
    let mut candidate = value_net.clone();
    let mut step = scale;
    for halvings in 0..=10 {
        let p: Vec<f64> = theta
            .iter()
            .zip(&solve.x)
            .map(|(t, x)| t + step * x)
            .collect();
        candidate.set_params(&p)?;
        let mse_after = mse(&candidate)?;
        if mse_after <= mse_before {
            *value_net = candidate;
            return Ok(BaselineFitReport {
                accepted: true,
                mse_before,
                mse_after,
                halvings,
                curvature,
            });
        }
        step *= 0.5;
    }
    Ok(unchanged(curvature))
}

/// MLP state-value baseline with target normalization.
///
/// The network predicts standardized values; each fit re-estimates the
/// target mean and scale from the new batch and rescales the output layer so
/// predictions are unchanged by the re-normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueBaseline {
    net: Mlp,
    target_mean: f64,
    target_std: f64,
}

impl ValueBaseline {
    pub fn new<R: rand::Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut net = Mlp::new(&sizes, &[Activation::Relu], rng)?;
        let last = sizes.len() - 2;
        net.scale_layer(last, 0.0);
        Ok(ValueBaseline {
            net,
            target_mean: 0.0,
            target_std: 1.0,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn predict_batch(&self, states: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(self
            .net
            .predict_batch(states)?
            .iter()
            .map(|v| v * self.target_std + self.target_mean)
            .collect())
    }

    pub fn predict(&self, state: &[f64]) -> Result<f64> {
        Ok(self.net.forward(state)?[0] * self.target_std + self.target_mean)
    }

    pub fn fit(
        &mut self,
        states: &Array2<f64>,
        targets: &[f64],
        max_kl: f64,
        n_cg: usize,
        damping: f64,
    ) -> Result<BaselineFitReport> {
        if targets.is_empty() {
            return Err(Error::EmptyBatch("baseline fit"));
        }
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let std = (targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n)
            .sqrt()
            .max(1e-6);
        // keep predictions fixed across the change of normalization
        let last = self.net.layer_sizes().len() - 2;
        let (w, b) = self.net.layer_mut(last);
        let ratio = self.target_std / std;
        w.mapv_inplace(|v| v * ratio);
        b.mapv_inplace(|v| (v * self.target_std + self.target_mean - mean) / std);
        self.target_mean = mean;
        self.target_std = std;
        let normalized: Vec<f64> = targets.iter().map(|y| (y - mean) / std).collect();
        fit_baseline(&mut self.net, states, &normalized, max_kl, n_cg, damping)
    }
}

/// Mean and population standard deviation of undiscounted episode returns.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    pub std_return: f64,
    pub returns: Vec<f64>,
    pub successes: usize,
    pub episode_lengths: Vec<usize>,
}

impl Evaluation {
    pub fn from_trajectories(trajs: &[Trajectory]) -> Self {
        let returns: Vec<f64> = trajs.iter().map(|t| t.total_reward()).collect();
        let (mean_return, std_return) = mean_and_std(&returns);
        Evaluation {
            mean_return,
            std_return,
            successes: trajs.iter().filter(|t| t.success()).count(),
            episode_lengths: trajs.iter().map(|t| t.len()).collect(),
            returns,
        }
    }

    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.returns.len().max(1) as f64
    }
}

/// Mean and population (divisor `N`) standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `n_test` episodes with a deterministic controller and reports the
/// return statistics.
pub fn evaluate_policy<F>(
    mut act: F,
    env: &mut dyn Environment,
    n_test: usize,
    rng: &mut dyn RngCore,
) -> Result<Evaluation>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if n_test == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let mut trajs = Vec::with_capacity(n_test);
    for _ in 0..n_test {
        let traj = crate::rollout::run_episode(env, rng, |s| {
            let a = act(s)?;
            Ok((a.clone(), a))
        })?;
        trajs.push(traj);
    }
    Ok(Evaluation::from_trajectories(&trajs))
}

/// One evaluation point of a learning curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Mean of the last (up to) 10 evaluation means.
    pub final_avg_return: f64,
    /// Mean evaluation standard deviation over the same window.
    pub final_std: f64,
    pub max_return: f64,
    pub max_return_std: f64,
    /// Episode count of the max-return point.
    pub max_return_episodes: usize,
    /// First episode count whose mean reaches `final_avg_return - final_std`.
    pub episodes_required: usize,
}

pub const FINAL_WINDOW: usize = 10;

pub fn summarize_run(curve: &[CurvePoint]) -> Result<RunSummary> {
    if curve.is_empty() {
        return Err(Error::EmptyBatch("summarize_run"));
    }
    let window = &curve[curve.len().saturating_sub(FINAL_WINDOW)..];
    let k = window.len() as f64;
    let final_avg_return = window.iter().map(|p| p.mean_return).sum::<f64>() / k;
    let final_std = window.iter().map(|p| p.std_return).sum::<f64>() / k;
    let best = curve
        .iter()
        .fold(curve[0], |best, p| if p.mean_return > best.mean_return { *p } else { best });
    let threshold = final_avg_return - final_std;
    let episodes_required = curve
        .iter()
        .find(|p| p.mean_return >= threshold)
        .map(|p| p.episodes)
        .expect("the final window contains a point at or above its own mean");
    Ok(RunSummary {
        final_avg_return,
        final_std,
        max_return: best.mean_return,
        max_return_std: best.std_return,
        max_return_episodes: best.episodes,
        episodes_required,
    })
}

/// One row of the learning-curve CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub total_episodes: usize,
    pub total_timesteps: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub kl: f64,
    pub surrogate_improvement: f64,
}

impl CurveRow {
    pub const HEADER: &'static str =
        "iteration,total_episodes,total_timesteps,mean_return,std_return,kl,surrogate_improvement";

    pub fn to_csv_line(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.total_episodes,
            self.total_timesteps,
            self.mean_return,
            self.std_return,
            self.kl,
            self.surrogate_improvement
        )
        .unwrap();
        s
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        check_len("learning-curve row fields", 7, fields.len())?;
        let bad = |f: &str| Error::InvalidConfig(format!("malformed learning-curve field {f:?}"));
        let int = |f: &str| f.parse::<usize>().map_err(|_| bad(f));
        let real = |f: &str| f.parse::<f64>().map_err(|_| bad(f));
        Ok(CurveRow {
            iteration: int(fields[0])?,
            total_episodes: int(fields[1])?,
            total_timesteps: int(fields[2])?,
            mean_return: real(fields[3])?,
            std_return: real(fields[4])?,
            kl: real(fields[5])?,
            surrogate_improvement: real(fields[6])?,
        })
    }

    pub fn point(&self) -> CurvePoint {
        CurvePoint {
            episodes: self.total_episodes,
            mean_return: self.mean_return,
            std_return: self.std_return,
        }
    }
}

/// Renders a full learning-curve CSV including the header.
pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CurveRow::HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CurveRow::HEADER => {}
        _ => {
            return Err(Error::InvalidConfig(
                "learning-curve CSV is missing its header".into(),
            ))
        }
    }
    lines.map(CurveRow::parse_csv_line).collect()
}
