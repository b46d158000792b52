//! Episode and batch collection.

use rand::{Rng, RngCore};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::estimation::{Trajectory, Transition};
use crate::policy::GaussianMlpPolicy;

/// Runs one episode. `act` maps a state to `(raw, applied)` actions.
pub fn run_episode<F>(env: &mut dyn Environment, rng: &mut dyn RngCore, mut act: F) -> Result<Trajectory>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let mut state = env.reset(rng);
    let horizon = env.horizon();
    let mut transitions = Vec::with_capacity(horizon);
    let mut success = false;
    for t in 0..horizon {
        let (action_raw, action_env) = act(&state)?;
        let step = env.step(&action_env)?;
        success |= step.info.success;
        let done = step.info.done();
        transitions.push(Transition {
            state: std::mem::replace(&mut state, step.observation.clone()),
            action_raw,
            action_env,
            reward: step.reward,
            next_state: step.observation,
            terminal: step.info.terminal,
            t,
        });
        if done {
            break;
        }
    }
    Trajectory::new(transitions, success)
}

/// Samples complete episodes from the stochastic policy until at least
/// `min_timesteps` transitions have been gathered.
pub fn collect_batch<R: Rng>(
    env: &mut dyn Environment,
    policy: &GaussianMlpPolicy,
    min_timesteps: usize,
    env_rng: &mut dyn RngCore,
    action_rng: &mut R,
) -> Result<Vec<Trajectory>> {
    if min_timesteps == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut trajs = Vec::new();
    let mut steps = 0;
    while steps < min_timesteps {
        let traj = run_episode(env, env_rng, |s| {
            let a = policy.sample_action(s, action_rng)?;
            Ok((a.raw, a.env))
        })?;
        steps += traj.len();
        trajs.push(traj);
    }
    Ok(trajs)
}

/// Collects exactly `n_episodes` episodes from the stochastic policy.
pub fn collect_episodes<R: Rng>(
    env: &mut dyn Environment,
    policy: &GaussianMlpPolicy,
    n_episodes: usize,
    env_rng: &mut dyn RngCore,
    action_rng: &mut R,
) -> Result<Vec<Trajectory>> {
    (0..n_episodes)
        .map(|_| {
            run_episode(env, env_rng, |s| {
                let a = policy.sample_action(s, action_rng)?;
                Ok((a.raw, a.env))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{QuadraticBandit, ReachConfig, ReachEnv};
    use crate::nn::Mlp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bandit_episode_is_one_terminal_step() {
        let mut env = QuadraticBandit::new(vec![2.0], 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = run_episode(&mut env, &mut rng, |_| Ok((vec![1.0], vec![1.0]))).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(tr.ends_terminal());
        assert_eq!(tr.total_reward(), -1.0);
    }

    #[test]
    fn zero_torque_reach_truncates_at_horizon() {
        let cfg = ReachConfig {
            horizon: 25,
            ..ReachConfig::default()
        };
        let mut env = ReachEnv::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tr = run_episode(&mut env, &mut rng, |_| Ok((vec![0.0; 2], vec![0.0; 2]))).unwrap();
        assert!(tr.len() <= 25);
        if tr.len() == 25 {
            assert!(!tr.ends_terminal());
        }
        for w in tr.transitions().windows(2) {
            assert_eq!(w[0].next_state, w[1].state);
        }
    }

    #[test]
    fn batch_reaches_requested_size_with_whole_episodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[1, 4, 1], &[crate::nn::Activation::Tanh], &mut rng).unwrap();
        let policy = GaussianMlpPolicy::from_parts(net, vec![0.0], vec![-5.0], vec![5.0]).unwrap();
        let mut env = QuadraticBandit::new(vec![0.0], 5.0);
        let mut env_rng = ChaCha8Rng::seed_from_u64(3);
        let trajs = collect_batch(&mut env, &policy, 37, &mut env_rng, &mut rng).unwrap();
        assert_eq!(trajs.len(), 37);
    }
}
