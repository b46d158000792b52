//! The single-sample score-function estimator on a one-state bandit agrees
//! with the analytic gradient of the expected reward.

use manip_rl::estimation::{Trajectory, Transition};
use manip_rl::nn::Mlp;
use manip_rl::policy::GaussianMlpPolicy;
use manip_rl::vpg::vpg_gradient;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn single_sample_gradient_is_unbiased() {
    let (w, b, log_std, target, s) = (0.4, -0.3, -0.5f64, 1.5, 1.0);
    let mut net = Mlp::zeros(&[1, 1], &[]).unwrap();
    net.set_params(&[w, b]).unwrap();
    let policy = GaussianMlpPolicy::from_parts(net, vec![log_std], vec![-1e9], vec![1e9]).unwrap();

    // E[-(a - c)²] = -((μ - c)² + σ²)
    let mu = w * s + b;
    let var = (2.0 * log_std).exp();
    let d_mu = -2.0 * (mu - target);
    let analytic = [d_mu * s, d_mu, -2.0 * var];

    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sum = [0.0; 3];
    let mut sum_sq = [0.0; 3];
    for _ in 0..n {
        let a = policy.sample_action(&[s], &mut rng).unwrap();
        let reward = -(a.raw[0] - target).powi(2);
        let traj = Trajectory::new(
            vec![Transition {
                state: vec![s],
                action_raw: a.raw.clone(),
                action_env: a.env,
                reward,
                next_state: vec![s],
                terminal: true,
                t: 0,
            }],
            false,
        )
        .unwrap();
        let g = vpg_gradient(&policy, &[traj], &[vec![reward]]).unwrap();
        for k in 0..3 {
            sum[k] += g[k];
            sum_sq[k] += g[k] * g[k];
        }
    }
    for k in 0..3 {
        let mean = sum[k] / n as f64;
        let var = sum_sq[k] / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - analytic[k]).abs() < 3.0 * se,
            "coordinate {k}: estimate {mean} vs analytic {} (se {se})",
            analytic[k]
        );
    }
}
