//! Diagonal-Gaussian policy with an MLP mean and a state-independent
//! log standard deviation.
//!
//! The flattened parameter vector is the mean network's parameters followed
//! by the `n_a` log-std entries.


use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::{Activation, ForwardCache, Mlp};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMlpPolicy {
    mean_net: Mlp,
    log_std: Vec<f64>,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

/// An action both before clamping (what the log-density is evaluated on)
/// and after clamping to the action bounds (what the environment receives).
#[derive(Clone, Debug, PartialEq)]
pub struct SampledAction {
    pub raw: Vec<f64>,
    pub env: Vec<f64>,
}

impl GaussianMlpPolicy {
    /// Tanh hidden layers; the output layer is shrunk by 0.01 so initial
    /// means sit near zero. Initial log-std is 0.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        check_len("action bounds", action_low.len(), action_high.len())?;
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_low.len());
        let mut mean_net = Mlp::new(&sizes, &[Activation::Tanh], rng)?;
        let last = sizes.len() - 2;
        mean_net.scale_layer(last, 0.01);
        let n_a = action_low.len();
        Self::from_parts(mean_net, vec![0.0; n_a], action_low, action_high)
    }

    pub fn from_parts(
        mean_net: Mlp,
        log_std: Vec<f64>,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
    ) -> Result<Self> {
        let n_a = mean_net.output_dim();
        check_len("log_std", n_a, log_std.len())?;
        check_len("action low bound", n_a, action_low.len())?;
        check_len("action high bound", n_a, action_high.len())?;
        if action_low.iter().zip(&action_high).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidConfig(
                "action low bound exceeds high bound".into(),
            ));
        }
        Ok(GaussianMlpPolicy {
            mean_net,
            log_std,
            action_low,
            action_high,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean_net(&self) -> &Mlp {
        &self.mean_net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn set_log_std(&mut self, log_std: &[f64]) -> Result<()> {
        check_len("log_std", self.action_dim(), log_std.len())?;
        self.log_std.copy_from_slice(log_std);
        Ok(())
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.action_low, &self.action_high)
    }

    pub fn param_count(&self) -> usize {
        self.mean_net.param_count() + self.action_dim()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.mean_net.flatten_params();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len("policy params", self.param_count(), params.len())?;
        let split = self.mean_net.param_count();
        self.mean_net.set_params(&params[..split])?;
        self.log_std.copy_from_slice(&params[split..]);
        Ok(())
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let mut p = self.clone();
        p.set_params(params)?;
        Ok(p)
    }

    pub fn clamp(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(&a, (&lo, &hi))| a.clamp(lo, hi))
            .collect()
    }

    pub fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.forward(state)
    }

    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        rng: &mut R,
    ) -> Result<SampledAction> {
        let mut raw = self.mean_action(state)?;
        for (a, ls) in raw.iter_mut().zip(&self.log_std) {
            let z: f64 = rng.sample(StandardNormal);
            *a += ls.exp() * z;
        }
        let env = self.clamp(&raw);
        Ok(SampledAction { raw, env })
    }

    /// Log-density of the unclamped action.
    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        check_len("log_prob action", self.action_dim(), action.len())?;
        let mean = self.mean_action(state)?;
        Ok(self.log_prob_given_mean(&mean, action))
    }

    fn log_prob_given_mean(&self, mean: &[f64], action: &[f64]) -> f64 {
        let mut lp = -0.5 * self.action_dim() as f64 * LN_2PI;
        for i in 0..mean.len() {
            let z = (action[i] - mean[i]) * (-self.log_std[i]).exp();
            lp -= 0.5 * z * z + self.log_std[i];
        }
        lp
    }

    pub fn log_prob_batch(&self, states: &Array2<f64>, actions: &Array2<f64>) -> Result<Vec<f64>> {
        check_len("log_prob batch", states.nrows(), actions.nrows())?;
        check_len("log_prob action", self.action_dim(), actions.ncols())?;
        let means = self.mean_net.predict_batch(states)?;
        Ok(means
            .rows()
            .into_iter()
            .zip(actions.rows())
            .map(|(m, a)| {
                self.log_prob_given_mean(m.as_slice().unwrap(), a.to_vec().as_slice())
            })
            .collect())
    }

    /// Differential entropy; independent of the state.
    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|ls| ls + 0.5 * (LN_2PI + 1.0))
            .sum()
    }

    /// Gradient of `log_prob(state, action)` w.r.t. all parameters.
    pub fn log_prob_grad(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let s = Array2::from_shape_vec((1, state.len()), state.to_vec()).unwrap();
        let a = Array2::from_shape_vec((1, action.len()), action.to_vec()).unwrap();
        self.weighted_log_prob_grad(&s, &a, &[1.0])
    }

    /// `Σ_i w_i ∇ log π(a_i | s_i)` over a batch.
    pub fn weighted_log_prob_grad(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
        weights: &[f64],
    ) -> Result<Vec<f64>> {
        check_len("score batch", states.nrows(), actions.nrows())?;
        check_len("score weights", states.nrows(), weights.len())?;
        check_len("score action", self.action_dim(), actions.ncols())?;
        let cache = self.mean_net.forward_batch(states)?;
        let mean = cache.output();
        let inv_var: Vec<f64> = self.log_std.iter().map(|l| (-2.0 * l).exp()).collect();
        let n_a = self.action_dim();
        let mut out_grad = Array2::zeros(mean.raw_dim());
        let mut log_std_grad = vec![0.0; n_a];
        for i in 0..states.nrows() {
            let w = weights[i];
            for j in 0..n_a {
                let d = actions[[i, j]] - mean[[i, j]];
                out_grad[[i, j]] = w * d * inv_var[j];
                log_std_grad[j] += w * (d * d * inv_var[j] - 1.0);
            }
        }
        let mut grad = self.mean_net.backward_batch(&cache, &out_grad)?.params;
        grad.extend(log_std_grad);
        Ok(grad)
    }

    /// Gradient w.r.t. `self`'s parameters of the mean over `states` of
    /// KL(self ‖ reference).
    pub fn kl_divergence_grad(&self, reference: &Self, states: &Array2<f64>) -> Result<Vec<f64>> {
        let n = states.nrows();
        if n == 0 {
            return Err(Error::EmptyBatch("kl_divergence_grad"));
        }
        let cache = self.mean_net.forward_batch(states)?;
        let ref_mean = reference.mean_net.predict_batch(states)?;
        let ref_inv_var: Vec<f64> = reference
            .log_std
            .iter()
            .map(|l| (-2.0 * l).exp())
            .collect();
        let out_grad = (cache.output() - &ref_mean) * &ndarray::Array1::from(ref_inv_var.clone())
            / n as f64;
        let mut grad = self.mean_net.backward_batch(&cache, &out_grad)?.params;
        for (j, ls) in self.log_std.iter().enumerate() {
            grad.push(-1.0 + (2.0 * ls).exp() * ref_inv_var[j]);
        }
        Ok(grad)
    }

    /// Matrix-free `(H + damping·I)·v` with `H` the Hessian of the mean KL at
    /// the current parameters over `states`.
    pub fn fisher_vector_product(
        &self,
        states: &Array2<f64>,
        v: &[f64],
        damping: f64,
    ) -> Result<Vec<f64>> {
        FisherOperator::new(self, states, damping)?.apply(v)
    }
}

/// Mean KL(first ‖ second) over a batch of states, in closed form.
pub fn kl_divergence(
    first: &GaussianMlpPolicy,
    second: &GaussianMlpPolicy,
    states: &Array2<f64>,
) -> Result<f64> {
    check_len("kl action dims", first.action_dim(), second.action_dim())?;
    let n = states.nrows();
    if n == 0 {
        return Err(Error::EmptyBatch("kl_divergence"));
    }
    let m1 = first.mean_net.predict_batch(states)?;
    let m2 = second.mean_net.predict_batch(states)?;
    let n_a = first.action_dim();
    // state-independent part
    let mut const_part = 0.0;
    let mut inv_var2 = vec![0.0; n_a];
    for j in 0..n_a {
        let (l1, l2) = (first.log_std[j], second.log_std[j]);
        inv_var2[j] = (-2.0 * l2).exp();
        const_part += l2 - l1 + 0.5 * (2.0 * (l1 - l2)).exp() - 0.5;
    }
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n_a {
            let d = m1[[i, j]] - m2[[i, j]];
            quad += 0.5 * d * d * inv_var2[j];
        }
    }
    Ok(const_part + quad / n as f64)
}

/// Fisher-vector products for a fixed policy and state batch. The forward
/// pass is computed once and reused across conjugate-gradient iterations.
///
/// For a diagonal Gaussian with state-independent variance the KL Hessian at
/// the current parameters is `mean_s J(s)ᵀ Σ⁻¹ J(s)` on the mean-network block
/// and `2·I` on the log-std block; `J(s)v` comes from a forward-mode pass and
/// `Jᵀu` from backpropagation.
pub struct FisherOperator<'a> {
    policy: &'a GaussianMlpPolicy,
    cache: ForwardCache,
    inv_var: ndarray::Array1<f64>,
    damping: f64,
}

impl<'a> FisherOperator<'a> {
    pub fn new(policy: &'a GaussianMlpPolicy, states: &Array2<f64>, damping: f64) -> Result<Self> {
        if states.nrows() == 0 {
            return Err(Error::EmptyBatch("fisher_vector_product"));
        }
        let cache = policy.mean_net.forward_batch(states)?;
        let inv_var = policy.log_std.iter().map(|l| (-2.0 * l).exp()).collect();
        Ok(FisherOperator {
            policy,
            cache,
            inv_var,
            damping,
        })
    }

    pub fn dim(&self) -> usize {
        self.policy.param_count()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("fisher vector", self.dim(), v.len())?;
        let split = self.policy.mean_net.param_count();
        let n = self.cache.batch_size() as f64;
        let jv = self.policy.mean_net.jvp_batch(&self.cache, &v[..split])?;
        let u = jv * &self.inv_var / n;
        let mut out = self.policy.mean_net.backward_batch(&self.cache, &u)?.params;
        out.extend(v[split..].iter().map(|x| 2.0 * x));
        for (o, x) in out.iter_mut().zip(v) {
            *o += self.damping * x;
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("fisher-vector product".into()));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy_1d(mean: f64, log_std: f64) -> GaussianMlpPolicy {
        let mut net = Mlp::zeros(&[1, 1], &[]).unwrap();
        net.set_params(&[0.0, mean]).unwrap();
        GaussianMlpPolicy::from_parts(net, vec![log_std], vec![-1e9], vec![1e9]).unwrap()
    }

    fn random_policy(obs: usize, hidden: &[usize], n_a: usize, seed: u64) -> GaussianMlpPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p =
            GaussianMlpPolicy::new(obs, hidden, vec![-2.0; n_a], vec![2.0; n_a], &mut rng).unwrap();
        // undo the output shrink so gradients are not dominated by tiny weights
        let params: Vec<f64> = p
            .params()
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.3 * ((i as f64) * 1.3).sin())
            .collect();
        p.set_params(&params).unwrap();
        p
    }

    fn states(n: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn standard_normal_mode() {
        let p = policy_1d(0.0, 0.0);
        let lp = p.log_prob(&[0.0], &[0.0]).unwrap();
        assert!((lp - (-0.5 * (2.0 * PI).ln())).abs() < 1e-15);
        assert!((lp + 0.91894).abs() < 1e-5);
    }

    #[test]
    fn two_dim_density() {
        let net = Mlp::zeros(&[1, 2], &[]).unwrap();
        let p = GaussianMlpPolicy::from_parts(net, vec![0.0, 0.0], vec![-1.0; 2], vec![1.0; 2])
            .unwrap();
        let lp = p.log_prob(&[0.3], &[1.0, 0.0]).unwrap();
        assert!((lp - (-(2.0 * PI).ln() - 0.5)).abs() < 1e-14);
        assert!((lp + 2.33788).abs() < 1e-5);
    }

    #[test]
    fn log_prob_peaks_at_mean() {
        let p = random_policy(3, &[4], 2, 1);
        let s = [0.2, -0.4, 0.9];
        let mu = p.mean_action(&s).unwrap();
        let best = p.log_prob(&s, &mu).unwrap();
        for k in 0..20 {
            let a = [mu[0] + 0.1 * (k as f64 - 10.0), mu[1] - 0.05 * k as f64];
            if a != [mu[0], mu[1]] {
                assert!(p.log_prob(&s, &a).unwrap() < best);
            }
        }
    }

    #[test]
    fn density_integrates_to_one_trapezoid() {
        let p = policy_1d(0.4, -0.3);
        let sigma = (-0.3f64).exp();
        let n = 20_000;
        let (lo, hi) = (0.4 - 8.0 * sigma, 0.4 + 8.0 * sigma);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let a = lo + h * i as f64;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * p.log_prob(&[0.0], &[a]).unwrap().exp();
        }
        assert!((total * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn density_mc_integral_two_dims() {
        // E_uniform[π(a)]·volume over a box covering ±6σ
        let net = Mlp::zeros(&[1, 2], &[]).unwrap();
        let p = GaussianMlpPolicy::from_parts(net, vec![0.0, -0.5], vec![-1.0; 2], vec![1.0; 2])
            .unwrap();
        let half = [6.0, 6.0 * (-0.5f64).exp()];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let a = [
                rng.random_range(-half[0]..half[0]),
                rng.random_range(-half[1]..half[1]),
            ];
            acc += p.log_prob(&[0.0], &a).unwrap().exp();
        }
        let volume = 4.0 * half[0] * half[1];
        assert!((acc / n as f64 * volume - 1.0).abs() < 0.01);
    }

    #[test]
    fn near_deterministic_sample_is_mean() {
        let p = policy_1d(1.25, (1e-8f64).ln());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = p.sample_action(&[0.0], &mut rng).unwrap();
        assert!((a.raw[0] - 1.25).abs() < 1e-6);
    }

    #[test]
    fn sample_moments_and_determinism() {
        let p = policy_1d(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let a = p.sample_action(&[0.0], &mut rng).unwrap().raw[0];
            sum += a;
            sq += a * a;
        }
        let mean = sum / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((sq / n as f64 - 1.0).abs() < 0.02);

        let mut r1 = ChaCha8Rng::seed_from_u64(77);
        let mut r2 = ChaCha8Rng::seed_from_u64(77);
        assert_eq!(
            p.sample_action(&[0.0], &mut r1).unwrap(),
            p.sample_action(&[0.0], &mut r2).unwrap()
        );
    }

    #[test]
    fn clamping_only_touches_env_action() {
        let net = Mlp::zeros(&[1, 1], &[]).unwrap();
        let p = GaussianMlpPolicy::from_parts(net, vec![2.0], vec![-0.1], vec![0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut clamped = 0;
        for _ in 0..100 {
            let a = p.sample_action(&[0.0], &mut rng).unwrap();
            assert!(a.env[0].abs() <= 0.1);
            if a.raw[0].abs() > 0.1 {
                clamped += 1;
                assert_ne!(a.raw, a.env);
            }
        }
        assert!(clamped > 50);
    }

    #[test]
    fn kl_identical_is_zero_and_closed_form() {
        let p = random_policy(2, &[3], 2, 3);
        let s = states(10, 2, 4);
        assert_eq!(kl_divergence(&p, &p, &s).unwrap(), 0.0);

        let old = policy_1d(0.3, 0.0);
        let new = policy_1d(0.3, 1.0);
        let e = std::f64::consts::E;
        let kl = kl_divergence(&old, &new, &s.slice(ndarray::s![.., ..1]).to_owned()).unwrap();
        let expected = 1.0 + 1.0 / (2.0 * e * e) - 0.5;
        assert!((kl - expected).abs() < 1e-14);
        assert!((kl - 0.56767).abs() < 1e-5);
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        let base = random_policy(2, &[4], 2, 10);
        let s = states(8, 2, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let pa: Vec<f64> = base.params().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let pb: Vec<f64> = base.params().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = base.with_params(&pa).unwrap();
            let b = base.with_params(&pb).unwrap();
            assert!(kl_divergence(&a, &b, &s).unwrap() >= 0.0);
        }
    }

    #[test]
    fn score_gradient_matches_finite_differences() {
        let p = random_policy(3, &[5, 4], 2, 20);
        let s = [0.5, -0.2, 0.8];
        let a = [0.7, -1.1];
        let g = p.log_prob_grad(&s, &a).unwrap();
        let p0 = p.params();
        let h = 1e-5;
        for i in 0..p0.len() {
            let mut up = p0.clone();
            up[i] += h;
            let mut down = p0.clone();
            down[i] -= h;
            let fd = (p.with_params(&up).unwrap().log_prob(&s, &a).unwrap()
                - p.with_params(&down).unwrap().log_prob(&s, &a).unwrap())
                / (2.0 * h);
            let denom = fd.abs().max(g[i].abs()).max(1e-6);
            assert!((fd - g[i]).abs() / denom < 1e-4, "coord {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn score_at_mean_has_zero_mean_block() {
        let p = random_policy(2, &[3], 1, 21);
        let s = [0.1, 0.2];
        let mu = p.mean_action(&s).unwrap();
        let g = p.log_prob_grad(&s, &mu).unwrap();
        let split = p.mean_net().param_count();
        assert!(g[..split].iter().all(|v| *v == 0.0));
        // log-std block is -1 at the mean
        assert_eq!(g[split], -1.0);
    }

    #[test]
    fn unit_gaussian_score_is_residual() {
        let p = policy_1d(0.5, 0.0);
        let g = p.log_prob_grad(&[0.0], &[1.75]).unwrap();
        // layout: [weight, bias, log_std]; bias gradient = ∂logp/∂μ
        assert!((g[1] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn fvp_of_zero_is_zero() {
        let p = random_policy(2, &[3], 2, 30);
        let s = states(5, 2, 31);
        let out = p.fisher_vector_product(&s, &vec![0.0; p.param_count()], 0.1).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fvp_matches_explicit_kl_hessian() {
        let p = random_policy(2, &[1], 1, 40);
        let s = states(6, 2, 41);
        let n = p.param_count();
        let p0 = p.params();
        let h = 1e-5;
        // explicit Hessian columns by central differences of the KL gradient
        let mut hess = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut up = p0.clone();
            up[j] += h;
            let mut down = p0.clone();
            down[j] -= h;
            let gu = p.with_params(&up).unwrap().kl_divergence_grad(&p, &s).unwrap();
            let gd = p.with_params(&down).unwrap().kl_divergence_grad(&p, &s).unwrap();
            for i in 0..n {
                hess[i][j] = (gu[i] - gd[i]) / (2.0 * h);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let hv = p.fisher_vector_product(&s, &v, 0.0).unwrap();
            let explicit: Vec<f64> = hess
                .iter()
                .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
                .collect();
            let err: f64 = hv.iter().zip(&explicit).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = explicit.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err / norm < 1e-3, "relative error {}", err / norm);
        }
    }

    #[test]
    fn fisher_is_positive_semidefinite() {
        let p = random_policy(3, &[6, 4], 2, 50);
        let s = states(20, 3, 51);
        let op = FisherOperator::new(&p, &s, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..50 {
            let v: Vec<f64> = (0..op.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let hv = op.apply(&v).unwrap();
            let q: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
            assert!(q >= -1e-10);
        }
    }

    #[test]
    fn kl_second_order_taylor() {
        let p = random_policy(2, &[5], 2, 60);
        let s = states(12, 2, 61);
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let eps = 1e-3;
        for _ in 0..10 {
            let d: Vec<f64> = (0..p.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let hd = p.fisher_vector_product(&s, &d, 0.0).unwrap();
            let quad: f64 = 0.5 * eps * eps * d.iter().zip(&hd).map(|(a, b)| a * b).sum::<f64>();
            let moved: Vec<f64> = p.params().iter().zip(&d).map(|(a, b)| a + eps * b).collect();
            let kl = kl_divergence(&p, &p.with_params(&moved).unwrap(), &s).unwrap();
            assert!((kl - quad).abs() / quad < 0.1, "kl {kl} vs quadratic {quad}");
        }
    }

    #[test]
    fn serde_round_trip() {
        let p = random_policy(3, &[4], 2, 70);
        let json = serde_json::to_string(&p).unwrap();
        let back: GaussianMlpPolicy = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
