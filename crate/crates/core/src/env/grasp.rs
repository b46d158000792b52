//! Toy grasp-and-lift with an encouraging reward and bad-terminal checks.
//!
//! Contact is not simulated: the cylinder rigidly follows the end effector
//! while the gripper is closed around it, and otherwise falls back to the
//! table under gravity.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::arm::{self, ArmConfig};
use super::{clamp_to, dist, norm, Environment, StepInfo, StepResult};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspConfig {
    pub arm: ArmConfig,
    /// Nominal initial arm joint angles (rad).
    pub q0: Vec<f64>,
    pub q_noise: f64,
    pub qd_noise: f64,
    /// Cylinder radius (m).
    pub cylinder_radius: f64,
    /// Cylinder resting position on the table (m); also the table height.
    pub cylinder_start: [f64; 2],
    /// Placement goal (m), directly above the start.
    pub goal: [f64; 2],
    pub horizon: usize,
    /// Weights `c_1..c_3` of the three distances in the reward.
    pub distance_weights: [f64; 3],
    pub action_penalty: f64,
    /// `d1` or `d3` beyond this ends the episode (m).
    pub bad_terminal_radius: f64,
    /// `d3` below this is reported as success (m); never terminal.
    pub success_radius: f64,
    /// Fully open gripper aperture (m).
    pub aperture_max: f64,
    /// Aperture rate per unit gripper command (m/s).
    pub aperture_speed: f64,
    /// The gripper holds the cylinder when its aperture is below this (m).
    pub attach_aperture: f64,
    /// Extra end-effector distance beyond the radius allowed for attaching (m).
    pub attach_margin: f64,
    /// Symmetric bound of the gripper command.
    pub gripper_limit: f64,
}

impl Default for GraspConfig {
    fn default() -> Self {
        let arm = ArmConfig::default();
        let cylinder_start = [0.45, -0.1];
        let home = [0.45, 0.05];
        let q0 = arm::two_link_ik(home, arm.link_lengths[0], arm.link_lengths[1])
            .expect("default home pose is reachable")
            .to_vec();
        GraspConfig {
            arm,
            q0,
            q_noise: 0.02,
            qd_noise: 0.1,
            cylinder_radius: 0.02,
            cylinder_start,
            goal: [cylinder_start[0], cylinder_start[1] + 0.3],
            horizon: 500,
            distance_weights: [1.0, 1.0, 1.0],
            action_penalty: 1e-3,
            bad_terminal_radius: 0.35,
            success_radius: 0.05,
            aperture_max: 0.08,
            aperture_speed: 0.2,
            attach_aperture: 0.045,
            attach_margin: 0.02,
            gripper_limit: 1.0,
        }
    }
}

impl GraspConfig {
    pub fn validate(&self) -> Result<()> {
        self.arm.validate()?;
        check_len("grasp q0", self.arm.n_links(), self.q0.len())?;
        let lift = [
            self.goal[0] - self.cylinder_start[0],
            self.goal[1] - self.cylinder_start[1],
        ];
        if lift[0].abs() > 1e-9 || (lift[1] - 0.3).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "grasp goal must sit 0.30 m straight above the cylinder start".into(),
            ));
        }
        if self.horizon == 0
            || !(self.cylinder_radius > 0.0)
            || !(self.aperture_max > 2.0 * self.cylinder_radius)
            || !(self.attach_aperture > 2.0 * self.cylinder_radius)
        {
            return Err(Error::InvalidConfig(
                "grasp horizon, radius and gripper apertures are inconsistent".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraspState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub aperture: f64,
    pub aperture_rate: f64,
    pub cylinder: [f64; 2],
    pub cylinder_vy: f64,
    pub attached: bool,
    pub goal: [f64; 2],
    pub ee: [f64; 2],
    pub t: usize,
}

impl GraspState {
    /// `[q, q̇, p_ee, p_goal, p_cyl]`, with the gripper aperture as the last
    /// entry of `q` and its rate as the last entry of `q̇`. Joint angles are
    /// wrapped onto `[-π, π)`.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(2 * self.q.len() + 8);
        obs.extend(self.q.iter().map(|&q| arm::wrap_angle(q)));
        obs.push(self.aperture);
        obs.extend(&self.qd);
        obs.push(self.aperture_rate);
        obs.extend(self.ee);
        obs.extend(self.goal);
        obs.extend(self.cylinder);
        obs
    }
}

/// `[d1, d2, d3]`: end effector to cylinder, fingertips to cylinder surface,
/// cylinder to goal. Fingertip terms inside the radius count as zero.
pub fn grasp_distances(state: &GraspState, cfg: &GraspConfig) -> [f64; 3] {
    let d1 = dist(state.ee, state.cylinder);
    let d2 = arm::fingertips(&state.q, &cfg.arm.link_lengths, state.aperture)
        .iter()
        .map(|f| (dist(state.cylinder, *f) - cfg.cylinder_radius).max(0.0))
        .sum();
    let d3 = dist(state.cylinder, state.goal);
    [d1, d2, d3]
}

pub fn grasp_reward(distances: [f64; 3], action: &[f64], cfg: &GraspConfig) -> f64 {
    let weighted: f64 = distances
        .iter()
        .zip(&cfg.distance_weights)
        .map(|(d, c)| c * d)
        .sum();
    1.0 / (1.0 + weighted) - cfg.action_penalty * norm(action)
}

pub fn bad_terminal(distances: [f64; 3], cfg: &GraspConfig) -> bool {
    distances[0] > cfg.bad_terminal_radius || distances[2] > cfg.bad_terminal_radius
}

pub fn grasp_reset<R: Rng + ?Sized>(cfg: &GraspConfig, rng: &mut R) -> GraspState {
    let jitter = |rng: &mut R, half: f64| {
        if half > 0.0 {
            rng.random_range(-half..=half)
        } else {
            0.0
        }
    };
    let q: Vec<f64> = cfg.q0.iter().map(|q| q + jitter(rng, cfg.q_noise)).collect();
    let qd: Vec<f64> = cfg.q0.iter().map(|_| jitter(rng, cfg.qd_noise)).collect();
    let ee = arm::forward_kinematics(&q, &cfg.arm.link_lengths);
    GraspState {
        q,
        qd,
        aperture: cfg.aperture_max,
        aperture_rate: 0.0,
        cylinder: cfg.cylinder_start,
        cylinder_vy: 0.0,
        attached: false,
        goal: cfg.goal,
        ee,
        t: 0,
    }
}

/// Action layout: arm joint torques followed by one gripper command
/// (positive opens).
pub fn grasp_step(
    state: &GraspState,
    action: &[f64],
    cfg: &GraspConfig,
) -> Result<(GraspState, f64, StepInfo)> {
    let n = cfg.arm.n_links();
    check_len("grasp action", n + 1, action.len())?;
    let (low, high) = grasp_bounds(cfg);
    let action = clamp_to(action, &low, &high);
    let (q, qd) = arm::integrate(&state.q, &state.qd, &action[..n], &cfg.arm)?;
    let ee = arm::forward_kinematics(&q, &cfg.arm.link_lengths);
    let dt = cfg.arm.dt;

    let min_aperture = if state.attached {
        2.0 * cfg.cylinder_radius
    } else {
        0.0
    };
    let aperture = (state.aperture + dt * cfg.aperture_speed * action[n])
        .clamp(min_aperture, cfg.aperture_max);
    let aperture_rate = (aperture - state.aperture) / dt;

    let mut attached = state.attached;
    let mut cylinder = state.cylinder;
    let mut cylinder_vy = state.cylinder_vy;
    if attached && aperture >= cfg.attach_aperture {
        attached = false;
        cylinder_vy = 0.0;
    } else if !attached
        && aperture < cfg.attach_aperture
        && dist(ee, cylinder) < cfg.cylinder_radius + cfg.attach_margin
    {
        attached = true;
    }
    if attached {
        cylinder = ee;
        cylinder_vy = 0.0;
    } else {
        let table = cfg.cylinder_start[1];
        cylinder_vy -= cfg.arm.gravity * dt;
        cylinder[1] += cylinder_vy * dt;
        if cylinder[1] <= table {
            cylinder[1] = table;
            cylinder_vy = 0.0;
        }
    }

    let next = GraspState {
        q,
        qd,
        aperture,
        aperture_rate,
        cylinder,
        cylinder_vy,
        attached,
        goal: state.goal,
        ee,
        t: state.t + 1,
    };
    let d = grasp_distances(&next, cfg);
    let reward = grasp_reward(d, &action, cfg);
    let bad = bad_terminal(d, cfg);
    let info = StepInfo {
        terminal: bad,
        success: d[2] < cfg.success_radius,
        bad_terminal: bad,
        truncated: !bad && next.t >= cfg.horizon,
        distances: d.to_vec(),
    };
    Ok((next, reward, info))
}

fn grasp_bounds(cfg: &GraspConfig) -> (Vec<f64>, Vec<f64>) {
    let n = cfg.arm.n_links();
    let lim = cfg.arm.torque_limit;
    let mut low = vec![-lim; n];
    let mut high = vec![lim; n];
    low.push(-cfg.gripper_limit);
    high.push(cfg.gripper_limit);
    (low, high)
}

#[derive(Clone, Debug)]
pub struct GraspEnv {
    cfg: GraspConfig,
    state: Option<GraspState>,
}

impl GraspEnv {
    pub fn new(cfg: GraspConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(GraspEnv { cfg, state: None })
    }

    pub fn config(&self) -> &GraspConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&GraspState> {
        self.state.as_ref()
    }
}

impl Environment for GraspEnv {
    fn obs_dim(&self) -> usize {
        2 * (self.cfg.arm.n_links() + 1) + 6
    }

    fn action_dim(&self) -> usize {
        self.cfg.arm.n_links() + 1
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        grasp_bounds(&self.cfg)
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let s = grasp_reset(&self.cfg, rng);
        let obs = s.observation();
        self.state = Some(s);
        obs
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("step called before reset".into()))?;
        let (next, reward, info) = grasp_step(state, action, &self.cfg)?;
        let observation = next.observation();
        self.state = Some(next);
        Ok(StepResult {
            observation,
            reward,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_state_earns_one() {
        let cfg = GraspConfig::default();
        assert_eq!(grasp_reward([0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &cfg), 1.0);
    }

    #[test]
    fn far_end_effector_is_bad_terminal() {
        let cfg = GraspConfig::default();
        assert!(bad_terminal([0.4, 0.0, 0.0], &cfg));
        assert!(bad_terminal([0.4, 10.0, 0.1], &cfg));
        assert!(bad_terminal([0.0, 0.0, 0.36], &cfg));
        assert!(!bad_terminal([0.35, 5.0, 0.35], &cfg));
    }

    #[test]
    fn reward_strictly_decreasing_in_each_distance() {
        let cfg = GraspConfig {
            action_penalty: 0.0,
            ..GraspConfig::default()
        };
        let base = [0.1, 0.05, 0.2];
        for j in 0..3 {
            let mut more = base;
            more[j] += 0.01;
            assert!(grasp_reward(more, &[1.0, 1.0, 1.0], &cfg) < grasp_reward(base, &[1.0, 1.0, 1.0], &cfg));
        }
    }

    #[test]
    fn reward_bounds_hold_along_random_rollouts() {
        let cfg = GraspConfig::default();
        let mut env = GraspEnv::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let max_penalty = cfg.action_penalty * norm(&[5.0, 5.0, 1.0]);
        for _ in 0..20 {
            env.reset(&mut rng);
            loop {
                let a = [
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-2.0..2.0),
                ];
                let r = env.step(&a).unwrap();
                assert!(r.reward <= 1.0 && r.reward > -max_penalty - 1e-12);
                if r.info.done() {
                    assert!(r.info.bad_terminal == r.info.terminal);
                    break;
                }
            }
        }
    }

    #[test]
    fn closed_gripper_carries_cylinder() {
        let cfg = GraspConfig {
            arm: ArmConfig {
                gravity: 0.0,
                ..ArmConfig::default()
            },
            ..GraspConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = grasp_reset(&cfg, &mut rng);
        // park the end effector on the cylinder with zero velocity
        s.q = arm::two_link_ik(cfg.cylinder_start, 0.35, 0.35).unwrap().to_vec();
        s.qd = vec![0.0, 0.0];
        s.ee = arm::forward_kinematics(&s.q, &cfg.arm.link_lengths);
        for _ in 0..30 {
            let (next, _, _) = grasp_step(&s, &[0.0, 0.0, -1.0], &cfg).unwrap();
            s = next;
        }
        assert!(s.attached);
        assert!(s.aperture >= 2.0 * cfg.cylinder_radius);
        let d = grasp_distances(&s, &cfg);
        assert!(d[0] == 0.0 && d[1] == 0.0);
        // move the arm: the cylinder follows
        let (next, _, _) = grasp_step(&s, &[1.0, 0.5, -1.0], &cfg).unwrap();
        assert_eq!(next.cylinder, next.ee);
        // open: it detaches
        let mut s = next;
        for _ in 0..10 {
            s = grasp_step(&s, &[0.0, 0.0, 1.0], &cfg).unwrap().0;
        }
        assert!(!s.attached);
    }

    #[test]
    fn released_cylinder_falls_to_table() {
        let cfg = GraspConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = grasp_reset(&cfg, &mut rng);
        s.cylinder = [cfg.cylinder_start[0], cfg.cylinder_start[1] + 0.1];
        let mut heights = vec![s.cylinder[1]];
        for _ in 0..60 {
            s = grasp_step(&s, &[0.0, 0.0, 1.0], &cfg).unwrap().0;
            heights.push(s.cylinder[1]);
        }
        assert!(heights.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(s.cylinder[1], cfg.cylinder_start[1]);
    }

    #[test]
    fn observation_layout_and_initial_distances() {
        let cfg = GraspConfig::default();
        let mut env = GraspEnv::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let obs = env.reset(&mut rng);
        assert_eq!(obs.len(), env.obs_dim());
        let s = env.state().unwrap();
        assert_eq!(&obs[6..8], &s.ee);
        assert_eq!(&obs[8..10], &cfg.goal);
        assert_eq!(&obs[10..12], &cfg.cylinder_start);
        let d = grasp_distances(s, &cfg);
        assert!(!bad_terminal(d, &cfg));
        assert!((d[2] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn goal_offset_is_validated() {
        let cfg = GraspConfig {
            goal: [0.45, 0.1],
            ..GraspConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
