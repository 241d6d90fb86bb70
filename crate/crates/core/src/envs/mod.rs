//! Built-in continuous-control tasks behind a uniform interface.

mod pendulum;
mod pointmass;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pendulum::{Pendulum, PendulumConstants};
pub use pointmass::{PointMass, PointMassConstants};

/// Static description of a task: dimensions, bounds, and episode length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Per-dimension ranges used to lay out the encoder receptive fields.
    pub obs_ranges: Vec<(f64, f64)>,
    pub max_episode_steps: usize,
}

impl TaskDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.action_low.len() != self.act_dim || self.action_high.len() != self.act_dim {
            return Err(Error::Config(format!("task `{}`: action bounds do not match act_dim", self.name)));
        }
        if self.obs_ranges.len() != self.obs_dim {
            return Err(Error::Config(format!("task `{}`: observation ranges do not match obs_dim", self.name)));
        }
        let bounds = self.action_low.iter().zip(&self.action_high).chain(self.obs_ranges.iter().map(|(l, h)| (l, h)));
        for (lo, hi) in bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("task `{}`: bound [{lo}, {hi}] is not a finite interval", self.name)));
            }
        }
        Ok(())
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }

    pub fn action_mid(&self) -> Vec<f64> {
        self.action_low.iter().zip(&self.action_high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn action_half_range(&self) -> Vec<f64> {
        self.action_low.iter().zip(&self.action_high).map(|(l, h)| 0.5 * (h - l)).collect()
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// True terminal state: no bootstrapping past it.
    pub terminal: bool,
    /// Episode cut by the horizon.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Env: Send {
    fn descriptor(&self) -> &TaskDescriptor;

    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one step. Actions outside the bounds are clipped; non-finite
    /// actions are rejected.
    fn step(&mut self, action: &[f64]) -> Result<Step>;
}

pub(crate) fn check_action(action: &[f64], desc: &TaskDescriptor) -> Result<Vec<f64>> {
    if action.len() != desc.act_dim {
        return Err(Error::Input(format!(
            "task `{}` takes {} action dimensions, got {}",
            desc.name,
            desc.act_dim,
            action.len()
        )));
    }
    if let Some(bad) = action.iter().find(|a| !a.is_finite()) {
        return Err(Error::Input(format!("action component {bad} is not finite")));
    }
    Ok(desc.clip_action(action))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Pendulum,
    PointMass,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Pendulum => "pendulum",
            TaskKind::PointMass => "pointmass",
        }
    }

    pub fn descriptor(self) -> TaskDescriptor {
        make_env(self).descriptor().clone()
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(TaskKind::Pendulum),
            "pointmass" => Ok(TaskKind::PointMass),
            other => Err(Error::Config(format!("unknown task `{other}` (expected pendulum or pointmass)"))),
        }
    }
}

pub fn make_env(kind: TaskKind) -> Box<dyn Env> {
    match kind {
        TaskKind::Pendulum => Box::new(Pendulum::default()),
        TaskKind::PointMass => Box::new(PointMass::default()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for kind in [TaskKind::Pendulum, TaskKind::PointMass] {
            assert_eq!(kind.name().parse::<TaskKind>().unwrap(), kind);
            let d = kind.descriptor();
            d.validate().unwrap();
            assert_eq!(d.name, kind.name());
        }
        assert!("cartpole".parse::<TaskKind>().is_err());
    }

    #[test]
    fn non_finite_action_rejected() {
        for kind in [TaskKind::Pendulum, TaskKind::PointMass] {
            let mut env = make_env(kind);
            env.reset(0);
            let mut action = vec![0.0; env.descriptor().act_dim];
            action[0] = f64::NAN;
            assert!(matches!(env.step(&action), Err(Error::Input(_))));
        }
    }
}
