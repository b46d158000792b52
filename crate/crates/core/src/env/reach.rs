//! Random-target reaching with a penalizing reward.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::arm::{self, ArmConfig};
use super::{clamp_to, dist, norm, Environment, StepInfo, StepResult};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReachConfig {
    pub arm: ArmConfig,
    /// Nominal initial joint angles (rad).
    pub q0: Vec<f64>,
    /// Centre of the square goal box (m).
    pub goal_center: [f64; 2],
    /// Half side of the goal box (m).
    pub goal_half_width: f64,
    pub horizon: usize,
    /// Weight of the `‖a‖` penalty.
    pub action_penalty: f64,
    /// End-effector distance at which the task counts as achieved (m).
    pub success_radius: f64,
    /// Half-width of the uniform noise added to `q0` (rad).
    pub q_noise: f64,
    /// Half-width of the uniform initial joint-velocity noise (rad/s).
    pub qd_noise: f64,
    /// Goal resampling attempts before giving up on the reachability filter.
    pub max_goal_retries: usize,
}

impl Default for ReachConfig {
    fn default() -> Self {
        let arm = ArmConfig::default();
        let goal_center = [0.3, 0.1];
        // home pose above the goal box, clear of the success radius
        let q0 = arm::two_link_ik([0.0, 0.45], arm.link_lengths[0], arm.link_lengths[1])
            .expect("home position is reachable")
            .to_vec();
        ReachConfig {
            arm,
            q0,
            goal_center,
            goal_half_width: 0.2,
            horizon: 300,
            action_penalty: 1e-3,
            success_radius: 0.05,
            q_noise: 0.02,
            qd_noise: 0.1,
            max_goal_retries: 1000,
        }
    }
}

impl ReachConfig {
    pub fn validate(&self) -> Result<()> {
        self.arm.validate()?;
        check_len("reach q0", self.arm.n_links(), self.q0.len())?;
        if self.horizon == 0 || !(self.goal_half_width >= 0.0) || !(self.success_radius > 0.0) {
            return Err(Error::InvalidConfig(
                "reach horizon, goal box and success radius must be positive".into(),
            ));
        }
        // nearest point of the goal box to the arm base
        let nearest: Vec<f64> = self
            .goal_center
            .iter()
            .map(|c| 0.0f64.clamp(c - self.goal_half_width, c + self.goal_half_width))
            .collect();
        if norm(&nearest) > self.arm.reach() {
            return Err(Error::InvalidConfig(
                "goal box does not intersect the reachable workspace".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReachState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub goal: [f64; 2],
    pub ee: [f64; 2],
    pub t: usize,
}

impl ReachState {
    /// `[q, q̇, p_goal, p_ee]` with joint angles wrapped onto `[-π, π)`.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(2 * self.q.len() + 4);
        obs.extend(self.q.iter().map(|&q| arm::wrap_angle(q)));
        obs.extend(&self.qd);
        obs.extend(self.goal);
        obs.extend(self.ee);
        obs
    }

    pub fn distance(&self) -> f64 {
        dist(self.ee, self.goal)
    }
}

pub fn reach_reward(goal: [f64; 2], ee: [f64; 2], action: &[f64], action_penalty: f64) -> f64 {
    // 0.0 - x keeps a perfect step at +0.0 rather than -0.0
    0.0 - (dist(goal, ee) + action_penalty * norm(action))
}

pub fn reach_reset<R: Rng + ?Sized>(cfg: &ReachConfig, rng: &mut R) -> ReachState {
    let jitter = |rng: &mut R, half: f64| {
        if half > 0.0 {
            rng.random_range(-half..=half)
        } else {
            0.0
        }
    };
    let q: Vec<f64> = cfg.q0.iter().map(|q| q + jitter(rng, cfg.q_noise)).collect();
    let qd: Vec<f64> = cfg.q0.iter().map(|_| jitter(rng, cfg.qd_noise)).collect();
    let reach = cfg.arm.reach();
    let mut goal = cfg.goal_center;
    for _ in 0..cfg.max_goal_retries.max(1) {
        let candidate = [
            cfg.goal_center[0] + jitter(rng, cfg.goal_half_width),
            cfg.goal_center[1] + jitter(rng, cfg.goal_half_width),
        ];
        goal = candidate;
        if norm(&candidate) <= reach {
            break;
        }
    }
    if norm(&goal) > reach {
        // project onto the workspace boundary
        let s = reach / norm(&goal);
        goal = [goal[0] * s, goal[1] * s];
    }
    let ee = arm::forward_kinematics(&q, &cfg.arm.link_lengths);
    ReachState {
        q,
        qd,
        goal,
        ee,
        t: 0,
    }
}

pub fn reach_step(
    state: &ReachState,
    action: &[f64],
    cfg: &ReachConfig,
) -> Result<(ReachState, f64, StepInfo)> {
    check_len("reach action", cfg.arm.n_links(), action.len())?;
    let lim = cfg.arm.torque_limit;
    let n = action.len();
    let torque = clamp_to(action, &vec![-lim; n], &vec![lim; n]);
    let (q, qd) = arm::integrate(&state.q, &state.qd, &torque, &cfg.arm)?;
    let ee = arm::forward_kinematics(&q, &cfg.arm.link_lengths);
    let next = ReachState {
        q,
        qd,
        goal: state.goal,
        ee,
        t: state.t + 1,
    };
    let reward = reach_reward(next.goal, next.ee, &torque, cfg.action_penalty);
    let d = next.distance();
    let success = d < cfg.success_radius;
    let info = StepInfo {
        terminal: success,
        success,
        bad_terminal: false,
        truncated: !success && next.t >= cfg.horizon,
        distances: vec![d],
    };
    Ok((next, reward, info))
}

/// [`Environment`] wrapper around [`reach_reset`] / [`reach_step`].
#[derive(Clone, Debug)]
pub struct ReachEnv {
    cfg: ReachConfig,
    state: Option<ReachState>,
}

impl ReachEnv {
    pub fn new(cfg: ReachConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ReachEnv { cfg, state: None })
    }

    pub fn config(&self) -> &ReachConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&ReachState> {
        self.state.as_ref()
    }
}

impl Environment for ReachEnv {
    fn obs_dim(&self) -> usize {
        2 * self.cfg.arm.n_links() + 4
    }

    fn action_dim(&self) -> usize {
        self.cfg.arm.n_links()
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.action_dim();
        let lim = self.cfg.arm.torque_limit;
        (vec![-lim; n], vec![lim; n])
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let s = reach_reset(&self.cfg, rng);
        let obs = s.observation();
        self.state = Some(s);
        obs
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("step called before reset".into()))?;
        let (next, reward, info) = reach_step(state, action, &self.cfg)?;
        let observation = next.observation();
        self.state = Some(next);
        Ok(StepResult {
            observation,
            reward,
            info,
        })
    }
}
