use rand::RngCore;

use super::{clamp_to, Environment, StepInfo, StepResult};
use crate::error::{check_len, Result};

/// One-step continuous bandit with reward `-‖a - target‖²` and a constant
/// observation `[1.0]`.
#[derive(Clone, Debug)]
pub struct QuadraticBandit {
    target: Vec<f64>,
    bound: f64,
}

impl QuadraticBandit {
    pub fn new(target: Vec<f64>, bound: f64) -> Self {
        QuadraticBandit { target, bound }
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }
}

impl Environment for QuadraticBandit {
    fn obs_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        self.target.len()
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.target.len();
        (vec![-self.bound; n], vec![self.bound; n])
    }

    fn horizon(&self) -> usize {
        1
    }

    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![1.0]
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_len("bandit action", self.target.len(), action.len())?;
        let (low, high) = self.action_bounds();
        let a = clamp_to(action, &low, &high);
        let reward = -a
            .iter()
            .zip(&self.target)
            .map(|(a, t)| (a - t) * (a - t))
            .sum::<f64>();
        Ok(StepResult {
            observation: vec![1.0],
            reward,
            info: StepInfo {
                terminal: true,
                ..StepInfo::default()
            },
        })
    }
}
