//! Trust region policy optimization: natural gradient by conjugate gradient
//! on Fisher-vector products, an analytic step length and a backtracking
//! line search gated on surrogate improvement and KL.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use crate::cg::{conjugate_gradient, CgResult};
use crate::cg::dot;
use crate::error::{check_len, Error, Result};
use crate::estimation::{stack_raw_actions, stack_states, GaeConfig, Trajectory, ValueBaseline};
use crate::policy::{kl_divergence, FisherOperator, GaussianMlpPolicy};
use crate::vpg::score_weights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrpoConfig {
    /// Trust region δ_D on the mean KL between consecutive policies.
    pub max_kl: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtrack_coeff: f64,
    pub max_backtracks: usize,
    /// Timesteps gathered per update.
    pub batch_size: usize,
    pub gae: GaeConfig,
    /// Trust region δ_V of the value baseline.
    pub baseline_max_kl: f64,
    pub baseline_cg_iters: usize,
    /// Multiply each advantage by `γ^t`.
    pub discounted_state_weighting: bool,
    /// Fit the baseline before estimating advantages with it.
    pub fit_baseline_first: bool,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        TrpoConfig {
            max_kl: 0.01,
            cg_iters: 10,
            cg_damping: 0.1,
            backtrack_coeff: 0.5,
            max_backtracks: 10,
            batch_size: 6000,
            gae: GaeConfig::default(),
            baseline_max_kl: 0.01,
            baseline_cg_iters: 10,
            discounted_state_weighting: false,
            fit_baseline_first: true,
        }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if let Err(Error::InvalidConfig(msg)) = self.gae.validate() {
            bad.push(msg);
        }
        if !(self.max_kl > 0.0) {
            bad.push(format!("max_kl must be positive, got {}", self.max_kl));
        }
        if self.cg_iters == 0 {
            bad.push("cg_iters must be at least 1".to_string());
        }
        if !(self.cg_damping >= 0.0) {
            bad.push(format!("cg_damping must be non-negative, got {}", self.cg_damping));
        }
        if !(self.backtrack_coeff > 0.0 && self.backtrack_coeff < 1.0) {
            bad.push(format!("backtrack_coeff must lie in (0, 1), got {}", self.backtrack_coeff));
        }
        if self.max_backtracks == 0 {
            bad.push("max_backtracks must be at least 1".to_string());
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be positive".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrpoDiagnostics {
    pub accepted: bool,
    /// Backtracking index of the accepted candidate.
    pub backtracks: Option<usize>,
    /// KL(θ_new ‖ θ_k) of the accepted candidate (0 when rejected).
    pub kl: f64,
    pub surrogate_improvement: f64,
    /// `ĝᵀĤ⁻¹ĝ` with the CG solution.
    pub ghg: f64,
    pub grad_norm: f64,
    pub cg_iterations: usize,
    /// KL of every candidate tried, in backtracking order.
    pub candidate_kls: Vec<f64>,
}

impl TrpoDiagnostics {
    fn rejected(ghg: f64, grad_norm: f64, cg_iterations: usize, candidate_kls: Vec<f64>) -> Self {
        TrpoDiagnostics {
            accepted: false,
            backtracks: None,
            kl: 0.0,
            surrogate_improvement: 0.0,
            ghg,
            grad_norm,
            cg_iterations,
            candidate_kls,
        }
    }
}

/// Importance-weighted surrogate `mean[(π_θ/π_θk)(a|s)·Â] - mean[Â]`, which
/// is exactly zero at `θ = θ_k`.
pub fn surrogate(
    candidate: &GaussianMlpPolicy,
    old_log_probs: &[f64],
    states: &Array2<f64>,
    actions: &Array2<f64>,
    advantages: &[f64],
) -> Result<f64> {
    let lp = candidate.log_prob_batch(states, actions)?;
    check_len("surrogate log-probs", lp.len(), old_log_probs.len())?;
    check_len("surrogate advantages", lp.len(), advantages.len())?;
    let n = lp.len() as f64;
    Ok(lp
        .iter()
        .zip(old_log_probs)
        .zip(advantages)
        .map(|((l, l0), a)| ((l - l0).exp() - 1.0) * a)
        .sum::<f64>()
        / n)
}

/// Gradient of the surrogate at `θ_k`: `mean[∇log π·Â]`.
pub fn surrogate_gradient(
    policy: &GaussianMlpPolicy,
    states: &Array2<f64>,
    actions: &Array2<f64>,
    advantages: &[f64],
) -> Result<Vec<f64>> {
    let mut g = policy.weighted_log_prob_grad(states, actions, advantages)?;
    let n = states.nrows() as f64;
    for v in g.iter_mut() {
        *v /= n;
    }
    Ok(g)
}

/// Natural-gradient direction `x ≈ (H + damping·I)⁻¹ g` and the full step
/// `Δ = sqrt(2δ / gᵀx)·x`. Returns `None` when `gᵀx ≤ 0`.
pub fn natural_step(
    policy: &GaussianMlpPolicy,
    states: &Array2<f64>,
    g: &[f64],
    cfg: &TrpoConfig,
) -> Result<(Option<Vec<f64>>, f64, usize)> {
    let fisher = FisherOperator::new(policy, states, cfg.cg_damping)?;
    let cg = conjugate_gradient(|v| fisher.apply(v), g, cfg.cg_iters, 1e-10)?;
    let ghg = dot(g, &cg.x);
    if !(ghg > 0.0) || cg.breakdown {
        return Ok((None, ghg, cg.iterations));
    }
    let scale = (2.0 * cfg.max_kl / ghg).sqrt();
    Ok((Some(cg.x.iter().map(|v| scale * v).collect()), ghg, cg.iterations))
}

/// KL(θ_k + ν^l Δ ‖ θ_k) for `l = 0..max_backtracks`.
pub fn line_search_kls(
    policy: &GaussianMlpPolicy,
    states: &Array2<f64>,
    full_step: &[f64],
    cfg: &TrpoConfig,
) -> Result<Vec<f64>> {
    let theta = policy.params();
    (0..cfg.max_backtracks)
        .map(|l| {
            let frac = cfg.backtrack_coeff.powi(l as i32);
            let cand = policy.with_params(&axpy(&theta, frac, full_step))?;
            kl_divergence(&cand, policy, states)
        })
        .collect()
}

fn axpy(theta: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    theta.iter().zip(x).map(|(t, v)| t + a * v).collect()
}

/// The policy update given a flat advantage vector aligned with the rows of
/// `states` and `actions`.
pub fn trpo_update(
    policy: &mut GaussianMlpPolicy,
    states: &Array2<f64>,
    actions: &Array2<f64>,
    advantages: &[f64],
    cfg: &TrpoConfig,
) -> Result<TrpoDiagnostics> {
    if states.nrows() == 0 {
        return Err(Error::EmptyBatch("trpo_update"));
    }
    let g = surrogate_gradient(policy, states, actions, advantages)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("trpo policy gradient".into()));
    }
    let grad_norm = dot(&g, &g).sqrt();
    if grad_norm == 0.0 {
        return Ok(TrpoDiagnostics::rejected(0.0, 0.0, 0, Vec::new()));
    }
    let (step, ghg, cg_iterations) = natural_step(policy, states, &g, cfg)?;
    let Some(step) = step else {
        log::warn!("trpo step rejected: gᵀH⁻¹g = {ghg} is not positive");
        return Ok(TrpoDiagnostics::rejected(ghg, grad_norm, cg_iterations, Vec::new()));
    };
    let old_lp = policy.log_prob_batch(states, actions)?;
    let theta = policy.params();
    let mut candidate_kls = Vec::new();
    for l in 0..cfg.max_backtracks {
        let frac = cfg.backtrack_coeff.powi(l as i32);
        let cand = policy.with_params(&axpy(&theta, frac, &step))?;
        let gain = surrogate(&cand, &old_lp, states, actions, advantages)?;
        let kl = kl_divergence(&cand, policy, states)?;
        candidate_kls.push(kl);
        if !gain.is_finite() || !kl.is_finite() {
            continue;
        }
        if gain >= 0.0 && kl <= cfg.max_kl {
            *policy = cand;
            return Ok(TrpoDiagnostics {
                accepted: true,
                backtracks: Some(l),
                kl,
                surrogate_improvement: gain,
                ghg,
                grad_norm,
                cg_iterations,
                candidate_kls,
            });
        }
    }
    Ok(TrpoDiagnostics::rejected(ghg, grad_norm, cg_iterations, candidate_kls))
}

/// Full iteration on a freshly collected batch: baseline fit and GAE
/// (or discounted returns without a baseline), then the policy update.
pub fn trpo_step(
    policy: &mut GaussianMlpPolicy,
    trajs: &[Trajectory],
    baseline: Option<&mut ValueBaseline>,
    cfg: &TrpoConfig,
) -> Result<TrpoDiagnostics> {
    if trajs.is_empty() {
        return Err(Error::EmptyBatch("trpo_step"));
    }
    let weights = score_weights(
        trajs,
        baseline,
        cfg.gae,
        cfg.baseline_max_kl,
        cfg.baseline_cg_iters,
        cfg.fit_baseline_first,
    )?;
    let advantages = flatten_advantages(trajs, &weights, cfg);
    trpo_update(policy, &stack_states(trajs), &stack_raw_actions(trajs), &advantages, cfg)
}

fn flatten_advantages(trajs: &[Trajectory], weights: &[Vec<f64>], cfg: &TrpoConfig) -> Vec<f64> {
    trajs
        .iter()
        .zip(weights)
        .flat_map(|(t, w)| {
            t.transitions().iter().zip(w).map(|(tr, a)| {
                if cfg.discounted_state_weighting {
                    a * cfg.gae.gamma.powi(tr.t as i32)
                } else {
                    *a
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::Transition;
    use crate::nn::Mlp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn batch(rng: &mut ChaCha8Rng, policy: &GaussianMlpPolicy, n: usize) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
        let states = Array2::from_shape_fn((n, policy.obs_dim()), |_| rng.random_range(-1.0..1.0));
        let mut actions = Array2::zeros((n, policy.action_dim()));
        for i in 0..n {
            let a = policy.sample_action(&states.row(i).to_vec(), rng).unwrap();
            for (j, v) in a.raw.iter().enumerate() {
                actions[[i, j]] = *v;
            }
        }
        let adv: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (states, actions, adv)
    }

    fn policy(seed: u64, obs: usize, hidden: &[usize], n_a: usize) -> GaussianMlpPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GaussianMlpPolicy::new(obs, hidden, vec![-1.0; n_a], vec![1.0; n_a], &mut rng).unwrap()
    }

    /// Dense `H` with columns `H e_i` from the matrix-free product.
    fn explicit_fisher(p: &GaussianMlpPolicy, states: &Array2<f64>) -> Vec<Vec<f64>> {
        let n = p.param_count();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                p.fisher_vector_product(states, &e, 0.0).unwrap()
            })
            .collect();
        (0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect()
    }

    #[test]
    fn surrogate_is_zero_at_current_params() {
        let p = policy(0, 3, &[8], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (s, a, adv) = batch(&mut rng, &p, 50);
        let lp = p.log_prob_batch(&s, &a).unwrap();
        assert_eq!(surrogate(&p, &lp, &s, &a, &adv).unwrap(), 0.0);
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let p = policy(2, 3, &[6], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (s, a, adv) = batch(&mut rng, &p, 30);
        let lp = p.log_prob_batch(&s, &a).unwrap();
        let g = surrogate_gradient(&p, &s, &a, &adv).unwrap();
        let theta = p.params();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let fp = surrogate(&p.with_params(&tp).unwrap(), &lp, &s, &a, &adv).unwrap();
            let fm = surrogate(&p.with_params(&tm).unwrap(), &lp, &s, &a, &adv).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "coord {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let mut p = policy(4, 3, &[8], 2);
        let before = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (s, a, _) = batch(&mut rng, &p, 40);
        let d = trpo_update(&mut p, &s, &a, &vec![0.0; 40], &TrpoConfig::default()).unwrap();
        assert!(!d.accepted);
        assert_eq!(p, before);
    }

    #[test]
    fn full_step_sits_on_the_trust_radius() {
        // linear mean, 5 parameters: CG with 10 iterations is exact
        let p = policy(6, 3, &[], 1);
        assert_eq!(p.param_count(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (s, a, adv) = batch(&mut rng, &p, 64);
        let cfg = TrpoConfig { cg_damping: 0.0, ..TrpoConfig::default() };
        let g = surrogate_gradient(&p, &s, &a, &adv).unwrap();
        let (step, _, _) = natural_step(&p, &s, &g, &cfg).unwrap();
        let step = step.unwrap();
        let h = explicit_fisher(&p, &s);
        let hd: Vec<f64> = h.iter().map(|row| dot(row, &step)).collect();
        let quad = 0.5 * dot(&step, &hd);
        assert!((quad - cfg.max_kl).abs() / cfg.max_kl < 1e-6, "{quad}");
    }

    #[test]
    fn accepted_steps_respect_the_kl_gate() {
        for seed in 0..10 {
            let mut p = policy(100 + seed, 4, &[16, 16], 2);
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let (s, a, adv) = batch(&mut rng, &p, 100);
            let old = p.clone();
            let d = trpo_update(&mut p, &s, &a, &adv, &TrpoConfig::default()).unwrap();
            if d.accepted {
                let kl = kl_divergence(&p, &old, &s).unwrap();
                assert!(kl <= 0.01 + 1e-6);
                assert!((kl - d.kl).abs() < 1e-15);
                assert!(d.surrogate_improvement >= 0.0);
            } else {
                assert_eq!(p, old);
            }
        }
    }

    #[test]
    fn candidate_kl_shrinks_with_backtracking() {
        let p = policy(8, 3, &[10], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (s, a, adv) = batch(&mut rng, &p, 80);
        let cfg = TrpoConfig::default();
        let g = surrogate_gradient(&p, &s, &a, &adv).unwrap();
        let step = natural_step(&p, &s, &g, &cfg).unwrap().0.unwrap();
        let kls = line_search_kls(&p, &s, &step, &cfg).unwrap();
        assert_eq!(kls.len(), 10);
        for w in kls.windows(2) {
            assert!(w[1] <= w[0] + 1e-8);
        }
    }

    #[test]
    fn gaussian_bandit_step_follows_natural_gradient() {
        // μ = w + b on the constant observation 1; reward -(a - 2)²
        let net = Mlp::zeros(&[1, 1], &[]).unwrap();
        let mut p = GaussianMlpPolicy::from_parts(net, vec![0.0], vec![-10.0], vec![10.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 20_000;
        let s = Array2::from_elem((n, 1), 1.0);
        let mut a = Array2::zeros((n, 1));
        let mut r = vec![0.0; n];
        for i in 0..n {
            let x = p.sample_action(&[1.0], &mut rng).unwrap().raw[0];
            a[[i, 0]] = x;
            r[i] = -(x - 2.0) * (x - 2.0);
        }
        let mean_r = r.iter().sum::<f64>() / n as f64;
        let adv: Vec<f64> = r.iter().map(|v| v - mean_r).collect();
        let cfg = TrpoConfig::default();
        let g = surrogate_gradient(&p, &s, &a, &adv).unwrap();
        let step = natural_step(&p, &s, &g, &cfg).unwrap().0.unwrap();
        // analytic: dJ/dμ = -2(μ - 2) > 0 at μ = 0, dJ/dlogσ = -2σ² < 0
        assert!(step[0] + step[1] > 0.0);
        assert!(step[2] < 0.0);
        let full = p.with_params(&axpy(&p.params(), 1.0, &step)).unwrap();
        let kl = kl_divergence(&full, &p, &s).unwrap();
        assert!((kl - 0.01).abs() / 0.01 < 0.25, "{kl}");
        let d = trpo_update(&mut p, &s, &a, &adv, &cfg).unwrap();
        assert!(d.accepted);
    }

    #[test]
    fn discounted_weighting_scales_by_gamma_power() {
        let mk = |t: usize| Transition {
            state: vec![1.0],
            action_raw: vec![0.0],
            action_env: vec![0.0],
            reward: 0.0,
            next_state: vec![1.0],
            terminal: false,
            t,
        };
        let traj = Trajectory::new((0..3).map(mk).collect(), false).unwrap();
        let w = vec![vec![1.0, 2.0, 3.0]];
        let plain = flatten_advantages(&[traj.clone()], &w, &TrpoConfig::default());
        assert_eq!(plain, vec![1.0, 2.0, 3.0]);
        let cfg = TrpoConfig { discounted_state_weighting: true, ..TrpoConfig::default() };
        let disc = flatten_advantages(&[traj], &w, &cfg);
        assert_eq!(disc, vec![1.0, 2.0 * 0.99, 3.0 * 0.99 * 0.99]);
    }

    #[test]
    fn config_validation_lists_every_field() {
        let cfg = TrpoConfig { max_kl: 0.0, cg_iters: 0, max_backtracks: 0, ..TrpoConfig::default() };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("max_kl") && msg.contains("cg_iters") && msg.contains("max_backtracks"));
    }
}
