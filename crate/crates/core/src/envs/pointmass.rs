//! Planar point mass steered to the origin by a bounded force.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, Env, Step, TaskDescriptor};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointMassConstants {
    pub dt: f64,
    pub max_force: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_radius: f64,
    pub horizon: usize,
}

impl Default for PointMassConstants {
    fn default() -> Self {
        Self {
            dt: 0.05,
            max_force: 1.0,
            max_position: 2.0,
            max_speed: 2.0,
            goal_radius: 0.05,
            horizon: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointMass {
    pub constants: PointMassConstants,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    steps: usize,
    descriptor: TaskDescriptor,
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new(PointMassConstants::default())
    }
}

impl PointMass {
    pub fn new(constants: PointMassConstants) -> Self {
        let c = constants;
        let descriptor = TaskDescriptor {
            name: "pointmass".into(),
            obs_dim: 4,
            act_dim: 2,
            action_low: vec![-c.max_force; 2],
            action_high: vec![c.max_force; 2],
            obs_ranges: vec![
                (-c.max_position, c.max_position),
                (-c.max_position, c.max_position),
                (-c.max_speed, c.max_speed),
                (-c.max_speed, c.max_speed),
            ],
            max_episode_steps: c.horizon,
        };
        Self {
            constants,
            position: [0.0; 2],
            velocity: [0.0; 2],
            steps: 0,
            descriptor,
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.position[0], self.position[1], self.velocity[0], self.velocity[1]]
    }

    pub fn set_state(&mut self, position: [f64; 2], velocity: [f64; 2]) {
        self.position = position;
        self.velocity = velocity;
        self.steps = 0;
    }
}

impl Env for PointMass {
    fn descriptor(&self) -> &TaskDescriptor {
        &self.descriptor
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let position = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        self.set_state(position, [0.0; 2]);
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let f = check_action(action, &self.descriptor)?;
        let c = &self.constants;
        for d in 0..2 {
            self.velocity[d] = (self.velocity[d] + f[d] * c.dt).clamp(-c.max_speed, c.max_speed);
            self.position[d] = (self.position[d] + self.velocity[d] * c.dt).clamp(-c.max_position, c.max_position);
        }
        self.steps += 1;
        let dist2 = self.position[0].powi(2) + self.position[1].powi(2);
        let reward = -dist2 - 0.01 * (f[0] * f[0] + f[1] * f[1]);
        let terminal = dist2.sqrt() < c.goal_radius;
        Ok(Step {
            obs: self.observation(),
            reward,
            terminal,
            truncated: !terminal && self.steps >= c.horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_at_rest_terminates_immediately() {
        let mut env = PointMass::default();
        env.set_state([0.0; 2], [0.0; 2]);
        let s = env.step(&[0.0, 0.0]).unwrap();
        assert!(s.terminal);
        assert_eq!(s.reward, 0.0);
    }

    #[test]
    fn euler_step_from_rest() {
        let mut env = PointMass::default();
        env.set_state([1.0, 0.5], [0.0; 2]);
        let s = env.step(&[1.0, 0.0]).unwrap();
        assert!((env.velocity[0] - 0.05).abs() < 1e-15);
        assert!((env.position[0] - 1.0025).abs() < 1e-15);
        assert_eq!(env.position[1], 0.5);
        assert!(s.reward <= 0.0);
    }

    #[test]
    fn mirrored_policy_mirrors_trajectory() {
        let mut a = PointMass::default();
        let mut b = PointMass::default();
        a.set_state([0.7, -0.4], [0.0; 2]);
        b.set_state([-0.7, 0.4], [0.0; 2]);
        for t in 0..50 {
            let f = [(t as f64 * 0.3).sin(), -0.5];
            let sa = a.step(&f).unwrap();
            let sb = b.step(&[-f[0], -f[1]]).unwrap();
            assert_eq!(sa.reward, sb.reward);
            for d in 0..4 {
                assert_eq!(sa.obs[d], -sb.obs[d]);
            }
        }
    }

    #[test]
    fn reset_is_seeded() {
        let mut env = PointMass::default();
        let a = env.reset(3);
        assert_eq!(a, env.reset(3));
        assert_eq!(&a[2..], &[0.0, 0.0]);
        assert!(a[..2].iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn horizon_truncates_and_state_stays_bounded() {
        let mut env = PointMass::default();
        env.set_state([1.5, 1.5], [0.0; 2]);
        for i in 1..=200 {
            let s = env.step(&[1.0, 1.0]).unwrap();
            assert!(s.reward <= 0.0);
            assert!(env.position.iter().all(|x| x.abs() <= 2.0));
            assert!(env.velocity.iter().all(|v| v.abs() <= 2.0));
            assert_eq!(s.truncated, i == 200);
        }
    }
}
