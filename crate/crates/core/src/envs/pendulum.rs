//! Torque-limited pendulum swing-up. `theta = 0` is upright.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, Env, Step, TaskDescriptor};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumConstants {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub horizon: usize,
}

impl Default for PendulumConstants {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            horizon: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    pub constants: PendulumConstants,
    pub theta: f64,
    pub theta_dot: f64,
    steps: usize,
    descriptor: TaskDescriptor,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new(PendulumConstants::default())
    }
}

/// Angle wrapped into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

impl Pendulum {
    pub fn new(constants: PendulumConstants) -> Self {
        let c = constants;
        let descriptor = TaskDescriptor {
            name: "pendulum".into(),
            obs_dim: 3,
            act_dim: 1,
            action_low: vec![-c.max_torque],
            action_high: vec![c.max_torque],
            obs_ranges: vec![(-1.0, 1.0), (-1.0, 1.0), (-c.max_speed, c.max_speed)],
            max_episode_steps: c.horizon,
        };
        Self {
            constants,
            theta: 0.0,
            theta_dot: 0.0,
            steps: 0,
            descriptor,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    /// Places the pendulum in a given state and restarts the episode clock.
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.steps = 0;
    }
}

impl Env for Pendulum {
    fn descriptor(&self) -> &TaskDescriptor {
        &self.descriptor
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.random_range(-PI..=PI);
        let theta_dot = rng.random_range(-1.0..=1.0);
        self.set_state(theta, theta_dot);
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let u = check_action(action, &self.descriptor)?[0];
        let c = &self.constants;
        let reward = -(wrap_angle(self.theta).powi(2) + 0.1 * self.theta_dot.powi(2) + 0.001 * u * u);
        let accel = 3.0 * c.gravity / (2.0 * c.length) * self.theta.sin() + 3.0 / (c.mass * c.length * c.length) * u;
        self.theta_dot = (self.theta_dot + accel * c.dt).clamp(-c.max_speed, c.max_speed);
        self.theta += self.theta_dot * c.dt;
        self.steps += 1;
        Ok(Step {
            obs: self.observation(),
            reward,
            terminal: false,
            truncated: self.steps >= c.horizon,
        })
    }
}
