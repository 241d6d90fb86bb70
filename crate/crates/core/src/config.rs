//! Run configuration: TOML sections with documented defaults and strict
//! key checking, plus `--key value` overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::{TaskDescriptor, TaskKind};
use crate::error::{Error, Result};
use crate::gradients::SurrogateConfig;
use crate::popcode::EncoderMode;
use crate::popsan::PopSanConfig;
use crate::snn::NeuronConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ddpg,
    Td3,
    Ppo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ddpg => "ddpg",
            Algorithm::Td3 => "td3",
            Algorithm::Ppo => "ppo",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpg" => Ok(Algorithm::Ddpg),
            "td3" => Ok(Algorithm::Td3),
            "ppo" => Ok(Algorithm::Ppo),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Which network acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    /// Population-coded spiking actor.
    Popsan,
    /// Deep actor on raw observations.
    Mlp,
    /// Deep actor behind a frozen population encoder, with one ReLU layer
    /// per output population; the source network for conversion.
    Popdnn,
}

impl ActorKind {
    pub fn name(self) -> &'static str {
        match self {
            ActorKind::Popsan => "popsan",
            ActorKind::Mlp => "mlp",
            ActorKind::Popdnn => "popdnn",
        }
    }
}

impl fmt::Display for ActorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub task: TaskKind,
    pub algorithm: Algorithm,
    pub actor: ActorKind,
    pub seed: u64,
    pub out_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            task: TaskKind::Pendulum,
            algorithm: Algorithm::Td3,
            actor: ActorKind::Popsan,
            seed: 0,
            out_dir: "runs/default".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub gamma: f64,
    pub tau: f64,
    /// Exploration noise, as a fraction of the action half-range.
    pub exploration_std: f64,
    /// Target policy smoothing noise, as a fraction of the action half-range.
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub warmup_steps: u64,
    pub policy_delay: u64,
    /// Defaults depend on actor and algorithm when absent.
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub critic_hidden: Vec<usize>,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub ppo_epochs: usize,
    pub ppo_minibatch: usize,
    pub n_envs: usize,
    /// Steps per environment per PPO iteration.
    pub rollout_steps: usize,
    pub log_std_init: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            eval_interval: 5_000,
            eval_episodes: 10,
            gamma: 0.99,
            tau: 0.005,
            exploration_std: 0.1,
            target_noise_std: 0.2,
            target_noise_clip: 0.5,
            batch_size: 100,
            replay_capacity: 1_000_000,
            warmup_steps: 1_000,
            policy_delay: 2,
            actor_lr: None,
            critic_lr: None,
            critic_hidden: vec![64, 64],
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            entropy_coef: 0.001,
            value_coef: 0.5,
            ppo_epochs: 25,
            ppo_minibatch: 100,
            n_envs: 10,
            rollout_steps: 200,
            log_std_init: -0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopSanSection {
    pub pop_in: usize,
    pub pop_out: usize,
    pub hidden: Vec<usize>,
    pub timesteps: usize,
    pub encoder_mode: EncoderMode,
    pub epsilon: f64,
    pub overlap: f64,
    pub current_decay: f64,
    pub voltage_decay: f64,
    pub threshold: f64,
    pub surrogate_window: f64,
    pub learn_encoder: bool,
}

impl Default for PopSanSection {
    fn default() -> Self {
        let neuron = NeuronConfig::default();
        Self {
            pop_in: 10,
            pop_out: 10,
            hidden: vec![64, 64],
            timesteps: 5,
            encoder_mode: EncoderMode::Deterministic,
            epsilon: 1e-3,
            overlap: 1.0,
            current_decay: neuron.current_decay,
            voltage_decay: neuron.voltage_decay,
            threshold: neuron.threshold,
            surrogate_window: SurrogateConfig::default().window,
            learn_encoder: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpActorSection {
    pub hidden: Vec<usize>,
}

impl Default for MlpActorSection {
    fn default() -> Self {
        Self { hidden: vec![64, 64] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub train: TrainSection,
    pub popsan: PopSanSection,
    pub mlp_actor: MlpActorSection,
}

const SECTIONS: [&str; 4] = ["run", "train", "popsan", "mlp_actor"];

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run configuration is always representable as TOML")
    }

    /// Applies `key = value` overrides. Keys are either `section.key` or a
    /// bare key that names exactly one field; dashes read as underscores.
    /// Values are parsed as TOML literals, falling back to plain strings.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Internal(e.to_string()))?;
        for (raw_key, raw_value) in overrides {
            let key = raw_key.replace('-', "_");
            let (section, field) = match key.split_once('.') {
                Some((s, f)) => {
                    let known = table.get(s).and_then(|v| v.as_table()).is_some_and(|t| t.contains_key(f))
                        || (SECTIONS.contains(&s) && Self::optional_fields(s).contains(&f));
                    if !known {
                        return Err(Error::Config(format!("unknown configuration key `{raw_key}`")));
                    }
                    (s.to_string(), f.to_string())
                }
                None => {
                    let owners: Vec<&str> = SECTIONS
                        .iter()
                        .copied()
                        .filter(|s| {
                            table.get(*s).and_then(|v| v.as_table()).is_some_and(|t| t.contains_key(&key))
                                || Self::optional_fields(s).contains(&key.as_str())
                        })
                        .collect();
                    match owners.as_slice() {
                        [one] => (one.to_string(), key.clone()),
                        [] => return Err(Error::Config(format!("unknown configuration key `{raw_key}`"))),
                        _ => {
                            return Err(Error::Config(format!(
                                "configuration key `{raw_key}` is ambiguous; qualify it as one of {}",
                                owners.iter().map(|s| format!("{s}.{key}")).collect::<Vec<_>>().join(", ")
                            )))
                        }
                    }
                }
            };
            let value = parse_value(raw_value);
            table
                .get_mut(&section)
                .and_then(|v| v.as_table_mut())
                .ok_or_else(|| Error::Internal(format!("missing section {section}")))?
                .insert(field, value);
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fields that serialize to nothing while unset.
    fn optional_fields(section: &str) -> &'static [&'static str] {
        match section {
            "train" => &["actor_lr", "critic_lr"],
            _ => &[],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if !(t.gamma > 0.0 && t.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", t.gamma)));
        }
        if !(0.0..=1.0).contains(&t.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", t.tau)));
        }
        for (name, v) in [
            ("exploration_std", t.exploration_std),
            ("target_noise_std", t.target_noise_std),
            ("target_noise_clip", t.target_noise_clip),
            ("entropy_coef", t.entropy_coef),
            ("value_coef", t.value_coef),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be a non-negative number")));
            }
        }
        if !(0.0..=1.0).contains(&t.gae_lambda) {
            return Err(Error::Config(format!("gae_lambda {} outside [0, 1]", t.gae_lambda)));
        }
        for (name, v) in [
            ("batch_size", t.batch_size),
            ("replay_capacity", t.replay_capacity),
            ("eval_episodes", t.eval_episodes),
            ("ppo_epochs", t.ppo_epochs),
            ("ppo_minibatch", t.ppo_minibatch),
            ("n_envs", t.n_envs),
            ("rollout_steps", t.rollout_steps),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if t.eval_interval == 0 || t.policy_delay == 0 {
            return Err(Error::Config("eval_interval and policy_delay must be positive".into()));
        }
        for lr in [t.actor_lr, t.critic_lr].into_iter().flatten() {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate {lr} must be positive")));
            }
        }
        self.neuron().validate()?;
        SurrogateConfig::new(self.popsan.surrogate_window)?;
        if self.popsan.timesteps == 0 {
            return Err(Error::Config("popsan.timesteps must be positive".into()));
        }
        Ok(())
    }

    pub fn neuron(&self) -> NeuronConfig {
        NeuronConfig {
            current_decay: self.popsan.current_decay,
            voltage_decay: self.popsan.voltage_decay,
            threshold: self.popsan.threshold,
        }
    }

    pub fn surrogate(&self) -> SurrogateConfig {
        SurrogateConfig {
            window: self.popsan.surrogate_window,
        }
    }

    pub fn popsan_config(&self, task: &TaskDescriptor) -> PopSanConfig {
        let p = &self.popsan;
        PopSanConfig {
            obs_ranges: task.obs_ranges.clone(),
            act_dim: task.act_dim,
            pop_in: p.pop_in,
            pop_out: p.pop_out,
            hidden: p.hidden.clone(),
            timesteps: p.timesteps,
            neuron: self.neuron(),
            encoder_mode: p.encoder_mode,
            epsilon: p.epsilon,
            overlap: p.overlap,
        }
    }

    pub fn actor_lr(&self) -> f64 {
        self.train.actor_lr.unwrap_or(match (self.run.actor, self.run.algorithm) {
            (ActorKind::Popsan, Algorithm::Ppo) => 5e-6,
            (ActorKind::Popsan, _) => 1e-4,
            (_, Algorithm::Ppo) => 1e-4,
            _ => 1e-3,
        })
    }

    pub fn critic_lr(&self) -> f64 {
        self.train.critic_lr.unwrap_or(match self.run.algorithm {
            Algorithm::Ppo => 1e-4,
            _ => 1e-3,
        })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Splits `--key value` pairs (or `--key=value`) from a flat argument list.
pub fn parse_override_args(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(key) = arg.strip_prefix("--") else {
            return Err(Error::Config(format!("expected `--key value`, found `{arg}`")));
        };
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            let value = it
                .next()
                .ok_or_else(|| Error::Config(format!("override `--{key}` is missing its value")))?;
            out.push((key.to_string(), value.clone()));
        }
    }
    Ok(out)
}
