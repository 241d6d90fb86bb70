//! PPO with a diagonal Gaussian policy whose mean is the actor output.

use std::f64::consts::{E, PI};

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::actor::Actor;
use super::UpdateStats;
use crate::checkpoint::{Persist, TensorTable};
use crate::config::RunConfig;
use crate::envs::TaskDescriptor;
use crate::error::{ensure_len, Error, Result};
use crate::mlp::{Activation, Mlp};
use crate::optim::{Adam, AdamConfig, Parameters};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_ratio: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl PpoConfig {
    pub fn from_run(cfg: &RunConfig) -> Self {
        let t = &cfg.train;
        Self {
            gamma: t.gamma,
            lambda: t.gae_lambda,
            clip_ratio: t.clip_ratio,
            entropy_coef: t.entropy_coef,
            value_coef: t.value_coef,
            epochs: t.ppo_epochs,
            minibatch: t.ppo_minibatch,
            actor_lr: cfg.actor_lr(),
            critic_lr: cfg.critic_lr(),
        }
    }
}

/// One on-policy sample with its rollout-time statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub obs: Vec<f64>,
    /// The sampled action before clipping to the bounds.
    pub action: Vec<f64>,
    pub logp_old: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Generalized advantage estimation over one trajectory segment.
///
/// `values` has one more entry than `rewards`: the bootstrap value of the
/// state after the last step. A `done` step does not bootstrap.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    ensure_len("values", n + 1, values.len())?;
    ensure_len("dones", n, dones.len())?;
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 * (2.0 * PI * E).ln() + ls).sum()
}

/// Per-sample `-min(r A, clip(r, 1-c, 1+c) A)` and its derivative in `r`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (-unclipped, -advantage)
    } else {
        (-clipped, 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct PpoAgent<A: Actor> {
    pub actor: A,
    /// State-independent log standard deviation per action dimension.
    pub log_std: Vec<f64>,
    pub critic: Mlp,
    pub actor_opt: Adam,
    pub log_std_opt: Adam,
    pub critic_opt: Adam,
    pub cfg: PpoConfig,
    /// Minibatches skipped because the probability ratio was not finite.
    pub rejected_batches: u64,
}

impl<A: Actor> PpoAgent<A> {
    pub fn new(
        actor: A,
        task: &TaskDescriptor,
        critic_hidden: &[usize],
        log_std_init: f64,
        cfg: PpoConfig,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        let critic = Mlp::with_hidden(task.obs_dim, critic_hidden, 1, Activation::Relu, Activation::Linear, rng)?;
        let log_std = vec![log_std_init; task.act_dim];
        Ok(Self {
            actor_opt: Adam::new(AdamConfig::with_lr(cfg.actor_lr), &actor),
            log_std_opt: Adam::new(AdamConfig::with_lr(cfg.actor_lr), &log_std),
            critic_opt: Adam::new(AdamConfig::with_lr(cfg.critic_lr), &critic),
            actor,
            log_std,
            critic,
            cfg,
            rejected_batches: 0,
        })
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.predict(obs)?[0])
    }

    /// Samples an action from the current policy; returns it unclipped with
    /// its log-probability.
    pub fn sample(&self, obs: &[f64], noise_rng: &mut StreamRng, enc_rng: &mut StreamRng) -> Result<(Vec<f64>, f64)> {
        let (mean, _) = self.actor.act(obs, enc_rng)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = noise_rng.sample(StandardNormal);
                m + ls.exp() * z
            })
            .collect();
        let logp = gaussian_log_prob(&action, &mean, &self.log_std);
        Ok((action, logp))
    }

    /// Runs the configured epochs of minibatch updates over one rollout.
    pub fn update(&mut self, samples: &[PpoSample], shuffle_rng: &mut StreamRng, enc_rng: &mut StreamRng) -> Result<UpdateStats> {
        if samples.is_empty() {
            return Err(Error::Internal("empty PPO rollout".into()));
        }
        let normalized = normalize(&samples.iter().map(|s| s.advantage).collect::<Vec<_>>());
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let (mut actor_sum, mut critic_sum, mut accepted) = (0.0, 0.0, 0usize);
        for _ in 0..self.cfg.epochs {
            order.shuffle(shuffle_rng);
            for chunk in order.chunks(self.cfg.minibatch.max(1)) {
                match self.minibatch_step(samples, &normalized, chunk, enc_rng)? {
                    Some((a, c)) => {
                        actor_sum += a;
                        critic_sum += c;
                        accepted += 1;
                    }
                    None => {
                        self.rejected_batches += 1;
                        warn!("rejected PPO minibatch with a non-finite probability ratio");
                    }
                }
            }
        }
        let n = accepted as f64;
        Ok(UpdateStats {
            critic_loss: if accepted > 0 { critic_sum / n } else { f64::NAN },
            actor_loss: (accepted > 0).then(|| actor_sum / n),
        })
    }

    /// Returns `None` without touching any parameter if a ratio is not finite.
    fn minibatch_step(
        &mut self,
        samples: &[PpoSample],
        advantages: &[f64],
        chunk: &[usize],
        enc_rng: &mut StreamRng,
    ) -> Result<Option<(f64, f64)>> {
        let b = chunk.len() as f64;
        let std: Vec<f64> = self.log_std.iter().map(|ls| ls.exp()).collect();
        let mut actor_grads = self.actor.zero_grads();
        let mut log_std_grads = vec![-self.cfg.entropy_coef; self.log_std.len()];
        let mut critic_grads = self.critic.zero_grads();
        let mut policy_loss = -self.cfg.entropy_coef * gaussian_entropy(&self.log_std);
        let mut value_loss = 0.0;
        for &i in chunk {
            let s = &samples[i];
            let (mean, trace) = self.actor.act(&s.obs, enc_rng)?;
            let logp = gaussian_log_prob(&s.action, &mean, &self.log_std);
            let ratio = (logp - s.logp_old).exp();
            if !ratio.is_finite() {
                return Ok(None);
            }
            let (loss, dloss_dratio) = clipped_surrogate(ratio, advantages[i], self.cfg.clip_ratio);
            policy_loss += loss / b;
            let dloss_dlogp = dloss_dratio * ratio / b;
            let mut grad_mean = vec![0.0; mean.len()];
            for d in 0..mean.len() {
                let z = (s.action[d] - mean[d]) / std[d];
                grad_mean[d] = dloss_dlogp * z / std[d];
                log_std_grads[d] += dloss_dlogp * (z * z - 1.0);
            }
            self.actor.backward(&trace, &grad_mean, &mut actor_grads)?;

            let (v, vt) = self.critic.forward(&s.obs)?;
            let err = v[0] - s.ret;
            value_loss += self.cfg.value_coef * err * err / b;
            self.critic.backward(&vt, &[self.cfg.value_coef * 2.0 * err / b], &mut critic_grads)?;
        }
        if !(actor_grads.all_finite() && log_std_grads.all_finite() && critic_grads.all_finite()) {
            return Ok(None);
        }
        self.actor_opt.update(&mut self.actor, &actor_grads)?;
        self.actor.post_update();
        self.log_std_opt.update(&mut self.log_std, &log_std_grads)?;
        self.critic_opt.update(&mut self.critic, &critic_grads)?;
        Ok(Some((policy_loss, value_loss)))
    }
}

fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    x.iter().map(|v| (v - mean) / std).collect()
}

impl<A: Actor> Persist for PpoAgent<A> {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        self.actor.store(&format!("{prefix}.actor"), table);
        self.log_std.store(&format!("{prefix}.log_std"), table);
        self.critic.store(&format!("{prefix}.critic"), table);
        self.actor_opt.store(&format!("{prefix}.opt.actor"), table);
        self.log_std_opt.store(&format!("{prefix}.opt.log_std"), table);
        self.critic_opt.store(&format!("{prefix}.opt.critic"), table);
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        self.actor.restore(&format!("{prefix}.actor"), table)?;
        self.log_std.restore(&format!("{prefix}.log_std"), table)?;
        self.critic.restore(&format!("{prefix}.critic"), table)?;
        self.actor_opt.restore(&format!("{prefix}.opt.actor"), table)?;
        self.log_std_opt.restore(&format!("{prefix}.opt.log_std"), table)?;
        self.critic_opt.restore(&format!("{prefix}.opt.critic"), table)
    }
}
