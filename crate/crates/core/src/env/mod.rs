//! Environments: a torque-controlled planar arm for random-target reaching,
//! a toy grasp-and-lift task on the same arm, and a one-step quadratic
//! bandit for algorithm sanity checks.

pub mod arm;
mod bandit;
mod grasp;
mod reach;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use bandit::QuadraticBandit;
pub use grasp::{
    bad_terminal, grasp_distances, grasp_reset, grasp_reward, grasp_step, GraspConfig, GraspEnv,
    GraspState,
};
pub use reach::{reach_reset, reach_reward, reach_step, ReachConfig, ReachEnv, ReachState};

/// Why an episode ended (or didn't) at a given step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// True MDP terminal: the episode ends and nothing is bootstrapped past it.
    pub terminal: bool,
    /// Task achieved (terminal for reaching, informational for grasping).
    pub success: bool,
    /// Agent strayed beyond the allowed distances.
    pub bad_terminal: bool,
    /// Horizon reached without a terminal state.
    pub truncated: bool,
    /// Task distances in metres (reach: `[d_goal]`, grasp: `[d1, d2, d3]`).
    pub distances: Vec<f64>,
}

impl StepInfo {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub info: StepInfo,
}

/// Episodic environment with continuous observations and actions.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Per-dimension `(low, high)` action bounds.
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn horizon(&self) -> usize;
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;
    /// Advances one step. Actions outside the bounds are clamped.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

pub(crate) fn clamp_to(action: &[f64], low: &[f64], high: &[f64]) -> Vec<f64> {
    action
        .iter()
        .zip(low.iter().zip(high))
        .map(|(&a, (&l, &h))| a.clamp(l, h))
        .collect()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
