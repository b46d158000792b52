//! Continuous Q-learning with normalized advantage functions.
//!
//! `Q(s, a) = V(s) - ½ (a - μ(s))ᵀ P(s) (a - μ(s))` with `P = LLᵀ` and `L`
//! lower triangular with a positive (exponentiated) diagonal.

use ndarray::Array2;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{clamp_to, Environment};
use crate::error::{check_len, Error, Result};
use crate::estimation::{rows_to_matrix, CurveRow, Evaluation, Transition};
use crate::nn::{Activation, AdamState, Mlp};
use crate::rollout::run_episode;

/// Number of packed entries of an `n × n` lower-triangular matrix.
pub fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Row-major packed index of `(i, j)`, `j ≤ i`.
pub fn tri_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Shared trunk with three linear heads. The heads are stored as one output
/// layer laid out as `[μ (n_a) | V (1) | packed L (n_a(n_a+1)/2)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NafNetwork {
    net: Mlp,
    action_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NafHeads {
    pub mu: Vec<f64>,
    pub value: f64,
    /// Lower-triangular factor, `n_a × n_a`.
    pub l: Array2<f64>,
}

impl NafHeads {
    /// `P = LLᵀ`.
    pub fn p_matrix(&self) -> Array2<f64> {
        self.l.dot(&self.l.t())
    }

    pub fn q_value(&self, action: &[f64]) -> f64 {
        let d: Vec<f64> = action.iter().zip(&self.mu).map(|(a, m)| a - m).collect();
        let n = d.len();
        let mut quad = 0.0;
        for j in 0..n {
            let w: f64 = (j..n).map(|i| self.l[[i, j]] * d[i]).sum();
            quad += w * w;
        }
        self.value - 0.5 * quad
    }
}

impl NafNetwork {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim + 1 + tri_len(action_dim));
        let mut net = Mlp::new(&sizes, &[Activation::Relu], rng)?;
        let last = sizes.len() - 2;
        net.scale_layer(last, 0.1);
        Ok(NafNetwork { net, action_dim })
    }

    pub fn from_mlp(net: Mlp, action_dim: usize) -> Result<Self> {
        check_len("naf output width", action_dim + 1 + tri_len(action_dim), net.output_dim())?;
        Ok(NafNetwork { net, action_dim })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.net
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        self.net.flatten_params()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.set_params(params)
    }

    fn split(&self, out: &[f64]) -> NafHeads {
        let n = self.action_dim;
        let mu = out[..n].to_vec();
        let value = out[n];
        let packed = &out[n + 1..];
        let mut l = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..i {
                l[[i, j]] = packed[tri_index(i, j)];
            }
            l[[i, i]] = packed[tri_index(i, i)].exp();
        }
        NafHeads { mu, value, l }
    }

    pub fn heads(&self, state: &[f64]) -> Result<NafHeads> {
        Ok(self.split(&self.net.forward(state)?))
    }

    pub fn mu(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.net.forward(state)?;
        out.truncate(self.action_dim);
        Ok(out)
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.net.forward(state)?[self.action_dim])
    }

    pub fn value_batch(&self, states: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(self.net.predict_batch(states)?.column(self.action_dim).to_vec())
    }

    pub fn q_value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        check_len("naf action", self.action_dim, action.len())?;
        Ok(self.heads(state)?.q_value(action))
    }

    /// Mean squared TD loss `(1/N) Σ (y_i - Q(s_i, a_i))²` and its parameter
    /// gradient.
    pub fn td_loss_grad(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        targets: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let n_b = states.nrows();
        if n_b == 0 {
            return Err(Error::EmptyBatch("naf td loss"));
        }
        check_len("naf td actions", n_b, actions.nrows())?;
        check_len("naf td targets", n_b, targets.len())?;
        check_len("naf td action dim", self.action_dim, actions.ncols())?;
        let n = self.action_dim;
        let cache = self.net.forward_batch(states)?;
        let out = cache.output();
        let mut out_grad = Array2::zeros(out.raw_dim());
        let mut loss = 0.0;
        for b in 0..n_b {
            let row = out.row(b).to_vec();
            let heads = self.split(&row);
            let d: Vec<f64> = (0..n).map(|i| actions[[b, i]] - heads.mu[i]).collect();
            let w: Vec<f64> = (0..n)
                .map(|j| (j..n).map(|i| heads.l[[i, j]] * d[i]).sum())
                .collect();
            let q = heads.value - 0.5 * w.iter().map(|x| x * x).sum::<f64>();
            let err = targets[b] - q;
            loss += err * err;
            // dLoss/dQ
            let c = -2.0 * err / n_b as f64;
            for i in 0..n {
                // dQ/dμ_i = (L w)_i
                let lw: f64 = (0..=i).map(|j| heads.l[[i, j]] * w[j]).sum();
                out_grad[[b, i]] = c * lw;
            }
            out_grad[[b, n]] = c;
            for i in 0..n {
                for j in 0..=i {
                    let mut g = -w[j] * d[i];
                    if i == j {
                        g *= heads.l[[i, i]];
                    }
                    out_grad[[b, n + 1 + tri_index(i, j)]] = c * g;
                }
            }
        }
        let loss = loss / n_b as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("naf td loss".into()));
        }
        let grad = self.net.backward_batch(&cache, &out_grad)?.params;
        Ok((loss, grad))
    }
}

/// `target ← ξ·online + (1 - ξ)·target`, elementwise.
pub fn soft_update(target: &mut [f64], online: &[f64], xi: f64) -> Result<()> {
    check_len("soft update", target.len(), online.len())?;
    for (t, o) in target.iter_mut().zip(online) {
        *t = xi * o + (1.0 - xi) * *t;
    }
    Ok(())
}

/// Bounded FIFO transition store with uniform sampling (with replacement).
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stores a transition, evicting the oldest when full.
    pub fn push(&mut self, tr: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(tr);
        } else {
            self.items[self.next] = tr;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Indices into insertion-order storage of a uniform sample.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBatch("replay sample"));
        }
        Ok(self
            .sample_indices(n, rng)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    pub fn get(&self, slot: usize) -> Option<&Transition> {
        self.items.get(slot)
    }
}

/// TD targets `y = r_s·r + γ·(1 - terminal)·V'(s')` from the target network.
pub fn td_targets(target: &NafNetwork, batch: &[&Transition], gamma: f64, reward_scale: f64) -> Result<Vec<f64>> {
    let next = rows_to_matrix(batch.iter().map(|t| t.next_state.as_slice()));
    let v_next = target.value_batch(&next)?;
    Ok(batch
        .iter()
        .zip(v_next)
        .map(|(t, v)| {
            let boot = if t.terminal { 0.0 } else { gamma * v };
            reward_scale * t.reward + boot
        })
        .collect())
}

/// One Adam step on the mean squared TD loss; returns the pre-step loss.
pub fn critic_update(
    net: &mut NafNetwork,
    target: &NafNetwork,
    batch: &[&Transition],
    gamma: f64,
    reward_scale: f64,
    adam: &mut AdamState,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch("critic_update"));
    }
    let y = td_targets(target, batch, gamma, reward_scale)?;
    let states = rows_to_matrix(batch.iter().map(|t| t.state.as_slice()));
    let actions = rows_to_matrix(batch.iter().map(|t| t.action_env.as_slice()));
    let (loss, grad) = net.td_loss_grad(&states, &actions, &y)?;
    let mut params = net.params();
    adam.step(&mut params, &grad)?;
    net.set_params(&params)?;
    Ok(loss)
}

/// `clamp(μ(s) + σ·z)` with `z ~ N(0, I)` and per-dimension `σ`.
pub fn naf_act<R: Rng + ?Sized>(
    net: &NafNetwork,
    state: &[f64],
    sigma: &[f64],
    low: &[f64],
    high: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_len("exploration std", net.action_dim(), sigma.len())?;
    let mut a = net.mu(state)?;
    for (x, s) in a.iter_mut().zip(sigma) {
        if *s != 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            *x += s * z;
        }
    }
    Ok(clamp_to(&a, low, high))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NafConfig {
    /// Minibatch size N_b.
    pub minibatch_size: usize,
    /// Critic fits per environment step K_Q.
    pub critic_updates_per_step: usize,
    /// Soft target update coefficient ξ.
    pub soft_update: f64,
    /// Reward scale r_s.
    pub reward_scale: f64,
    pub gamma: f64,
    /// Initial exploration std as a fraction of each action range.
    pub exploration_std: f64,
    /// Exploration std reached at the end of training, same units.
    pub exploration_std_final: f64,
    pub buffer_capacity: usize,
    pub learning_rate: f64,
    /// Transitions stored before the first critic update.
    pub warmup: usize,
}

impl Default for NafConfig {
    fn default() -> Self {
        NafConfig {
            minibatch_size: 64,
            critic_updates_per_step: 5,
            soft_update: 1e-3,
            reward_scale: 1.0,
            gamma: 0.99,
            exploration_std: 0.1,
            exploration_std_final: 0.01,
            buffer_capacity: 1_000_000,
            learning_rate: 1e-3,
            warmup: 1000,
        }
    }
}

impl NafConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.soft_update > 0.0 && self.soft_update <= 1.0) {
            bad.push(format!("soft_update must lie in (0, 1], got {}", self.soft_update));
        }
        if self.minibatch_size == 0 {
            bad.push("minibatch_size must be at least 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            bad.push(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.buffer_capacity == 0 {
            bad.push("buffer_capacity must be positive".to_string());
        }
        if !(self.learning_rate > 0.0) {
            bad.push("learning_rate must be positive".to_string());
        }
        if !(self.exploration_std >= 0.0 && self.exploration_std_final >= 0.0) {
            bad.push("exploration stds must be non-negative".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad.join("; ")))
        }
    }

    /// Exploration std fraction after `episode` of `total` episodes.
    pub fn exploration_at(&self, episode: usize, total: usize) -> f64 {
        let frac = if total <= 1 {
            0.0
        } else {
            (episode as f64 / (total - 1) as f64).min(1.0)
        };
        self.exploration_std + frac * (self.exploration_std_final - self.exploration_std)
    }
}

/// Online and target networks, replay memory and optimizer state.
#[derive(Clone, Debug)]
pub struct NafAgent {
    pub online: NafNetwork,
    pub target: NafNetwork,
    pub buffer: ReplayBuffer,
    pub adam: AdamState,
    pub cfg: NafConfig,
    pub updates: u64,
    pub last_loss: f64,
}

impl NafAgent {
    /// The target network starts as an exact copy of `online`.
    pub fn new(online: NafNetwork, cfg: NafConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(NafAgent {
            target: online.clone(),
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            adam: AdamState::new(online.param_count(), cfg.learning_rate),
            online,
            cfg,
            updates: 0,
            last_loss: f64::NAN,
        })
    }

    /// Stores a transition, then runs K_Q critic fits each followed by a soft
    /// target update (once the warmup is over).
    pub fn observe<R: Rng + ?Sized>(&mut self, tr: Transition, rng: &mut R) -> Result<()> {
        self.buffer.push(tr);
        if self.buffer.len() < self.cfg.warmup.max(1) {
            return Ok(());
        }
        for _ in 0..self.cfg.critic_updates_per_step {
            let batch = self.buffer.sample(self.cfg.minibatch_size, rng)?;
            self.last_loss = critic_update(
                &mut self.online,
                &self.target,
                &batch,
                self.cfg.gamma,
                self.cfg.reward_scale,
                &mut self.adam,
            )?;
            let mut tp = self.target.params();
            soft_update(&mut tp, &self.online.params(), self.cfg.soft_update)?;
            self.target.set_params(&tp)?;
            self.updates += 1;
        }
        Ok(())
    }

    /// One exploratory training episode; returns its undiscounted return.
    pub fn train_episode<R: Rng>(
        &mut self,
        env: &mut dyn Environment,
        env_rng: &mut dyn RngCore,
        noise_rng: &mut R,
        update_rng: &mut R,
        sigma_frac: f64,
    ) -> Result<(f64, usize)> {
        let (low, high) = env.action_bounds();
        let sigma: Vec<f64> = low
            .iter()
            .zip(&high)
            .map(|(l, h)| {
                let range = h - l;
                if range.is_finite() {
                    sigma_frac * range
                } else {
                    sigma_frac
                }
            })
            .collect();
        let mut state = env.reset(env_rng);
        let mut total = 0.0;
        let mut steps = 0;
        for t in 0..env.horizon() {
            let a = naf_act(&self.online, &state, &sigma, &low, &high, noise_rng)?;
            let step = env.step(&a)?;
            total += step.reward;
            steps += 1;
            let done = step.info.done();
            let tr = Transition {
                state: std::mem::replace(&mut state, step.observation.clone()),
                action_raw: a.clone(),
                action_env: a,
                reward: step.reward,
                next_state: step.observation,
                terminal: step.info.terminal,
                t,
            };
            self.observe(tr, update_rng)?;
            if done {
                break;
            }
        }
        Ok((total, steps))
    }

    /// Noise-free evaluation of `μ(s)`.
    pub fn evaluate(&self, env: &mut dyn Environment, n_test: usize, rng: &mut dyn RngCore) -> Result<Evaluation> {
        let (low, high) = env.action_bounds();
        let mut trajs = Vec::with_capacity(n_test);
        for _ in 0..n_test {
            trajs.push(run_episode(env, rng, |s| {
                let a = clamp_to(&self.online.mu(s)?, &low, &high);
                Ok((a.clone(), a))
            })?);
        }
        Ok(Evaluation::from_trajectories(&trajs))
    }
}

/// Randomness consumed by [`naf_train`].
pub struct NafRngs<R> {
    pub env: R,
    pub noise: R,
    pub minibatch: R,
    pub eval: R,
}

/// Trains for `max_episodes` episodes, evaluating the noise-free policy on
/// `n_test` episodes before training and after every `eval_every` episodes.
/// `on_eval` sees each curve row with the agent in its evaluated state.
pub fn naf_train<R, F>(
    agent: &mut NafAgent,
    env: &mut dyn Environment,
    eval_env: &mut dyn Environment,
    max_episodes: usize,
    eval_every: usize,
    n_test: usize,
    rngs: &mut NafRngs<R>,
    mut on_eval: F,
) -> Result<Vec<CurveRow>>
where
    R: Rng,
    F: FnMut(&CurveRow, &NafAgent, &Evaluation) -> Result<()>,
{
    if eval_every == 0 {
        return Err(Error::InvalidConfig("evaluation cadence must be positive".into()));
    }
    let mut rows = Vec::new();
    let mut record = |agent: &NafAgent, episodes: usize, timesteps: usize, rows: &mut Vec<CurveRow>, rng: &mut R| -> Result<()> {
        let ev = agent.evaluate(eval_env, n_test, rng)?;
        let row = CurveRow {
            iteration: rows.len(),
            total_episodes: episodes,
            total_timesteps: timesteps,
            mean_return: ev.mean_return,
            std_return: ev.std_return,
            kl: f64::NAN,
            surrogate_improvement: f64::NAN,
        };
        on_eval(&row, agent, &ev)?;
        rows.push(row);
        Ok(())
    };
    record(agent, 0, 0, &mut rows, &mut rngs.eval)?;
    let mut timesteps = 0;
    for ep in 0..max_episodes {
        let sigma = agent.cfg.exploration_at(ep, max_episodes);
        let (_, steps) = agent.train_episode(env, &mut rngs.env, &mut rngs.noise, &mut rngs.minibatch, sigma)?;
        timesteps += steps;
        if (ep + 1) % eval_every == 0 || ep + 1 == max_episodes {
            record(agent, ep + 1, timesteps, &mut rows, &mut rngs.eval)?;
        }
    }
    Ok(rows)
}
