//! DDPG and TD3 with a pluggable actor and MLP critics on `concat(s, a)`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::actor::Actor;
use super::replay::Transition;
use super::UpdateStats;
use crate::checkpoint::{Persist, TensorTable};
use crate::config::{Algorithm, RunConfig};
use crate::envs::TaskDescriptor;
use crate::error::{Error, Result};
use crate::mlp::{Activation, Mlp};
use crate::optim::{soft_update, Adam, AdamConfig, Parameters};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffPolicyConfig {
    /// Twin critics, target smoothing and delayed actor updates.
    pub td3: bool,
    pub gamma: f64,
    pub tau: f64,
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub policy_delay: u64,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl OffPolicyConfig {
    pub fn from_run(cfg: &RunConfig) -> Result<Self> {
        let td3 = match cfg.run.algorithm {
            Algorithm::Td3 => true,
            Algorithm::Ddpg => false,
            Algorithm::Ppo => return Err(Error::Config("PPO is not an off-policy algorithm".into())),
        };
        let t = &cfg.train;
        Ok(Self {
            td3,
            gamma: t.gamma,
            tau: t.tau,
            target_noise_std: t.target_noise_std,
            target_noise_clip: t.target_noise_clip,
            policy_delay: if td3 { t.policy_delay } else { 1 },
            actor_lr: cfg.actor_lr(),
            critic_lr: cfg.critic_lr(),
        })
    }
}

/// `y = r + gamma * (1 - done) * min_j Q'_j(s', a')`.
pub fn bellman_target(reward: f64, done: bool, gamma: f64, next_q: &[f64]) -> f64 {
    if done {
        return reward;
    }
    let q = next_q.iter().copied().fold(f64::INFINITY, f64::min);
    reward + gamma * q
}

#[derive(Debug, Clone)]
pub struct OffPolicyAgent<A: Actor> {
    pub actor: A,
    pub actor_target: A,
    pub critics: Vec<Mlp>,
    pub critic_targets: Vec<Mlp>,
    pub actor_opt: Adam,
    pub critic_opts: Vec<Adam>,
    pub cfg: OffPolicyConfig,
    pub critic_updates: u64,
    obs_dim: usize,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
    half_range: Vec<f64>,
}

impl<A: Actor> OffPolicyAgent<A> {
    pub fn new(actor: A, task: &TaskDescriptor, critic_hidden: &[usize], cfg: OffPolicyConfig, rng: &mut StreamRng) -> Result<Self> {
        let n_critics = if cfg.td3 { 2 } else { 1 };
        let critics = (0..n_critics)
            .map(|_| Mlp::with_hidden(task.obs_dim + task.act_dim, critic_hidden, 1, Activation::Relu, Activation::Linear, rng))
            .collect::<Result<Vec<_>>>()?;
        let critic_opts = critics.iter().map(|c| Adam::new(AdamConfig::with_lr(cfg.critic_lr), c)).collect();
        Ok(Self {
            actor_target: actor.clone(),
            actor_opt: Adam::new(AdamConfig::with_lr(cfg.actor_lr), &actor),
            actor,
            critic_targets: critics.clone(),
            critics,
            critic_opts,
            cfg,
            critic_updates: 0,
            obs_dim: task.obs_dim,
            action_low: task.action_low.clone(),
            action_high: task.action_high.clone(),
            half_range: task.action_half_range(),
        })
    }

    fn clip(&self, action: &mut [f64]) {
        for ((a, lo), hi) in action.iter_mut().zip(&self.action_low).zip(&self.action_high) {
            *a = a.clamp(*lo, *hi);
        }
    }

    /// Behaviour action: actor output plus Gaussian noise (a fraction of the
    /// half-range), clipped to the bounds.
    pub fn explore(&self, obs: &[f64], noise_std: f64, noise_rng: &mut StreamRng, enc_rng: &mut StreamRng) -> Result<Vec<f64>> {
        let (mut a, _) = self.actor.act(obs, enc_rng)?;
        for (a, h) in a.iter_mut().zip(&self.half_range) {
            let z: f64 = noise_rng.sample(StandardNormal);
            *a += noise_std * h * z;
        }
        self.clip(&mut a);
        Ok(a)
    }

    /// Deterministic action clipped to the bounds.
    pub fn greedy(&self, obs: &[f64], enc_rng: &mut StreamRng) -> Result<Vec<f64>> {
        let (mut a, _) = self.actor.act(obs, enc_rng)?;
        self.clip(&mut a);
        Ok(a)
    }

    fn critic_input(obs: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.len() + action.len());
        x.extend_from_slice(obs);
        x.extend_from_slice(action);
        x
    }

    /// Bellman targets for a batch.
    pub fn targets(&self, batch: &[&Transition], noise_rng: &mut StreamRng, enc_rng: &mut StreamRng) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|t| {
                if t.done {
                    return Ok(t.reward);
                }
                let (mut a, _) = self.actor_target.act(&t.next_obs, enc_rng)?;
                if self.cfg.td3 {
                    for (a, h) in a.iter_mut().zip(&self.half_range) {
                        let z: f64 = noise_rng.sample(StandardNormal);
                        let c = self.cfg.target_noise_clip * h;
                        *a += (self.cfg.target_noise_std * h * z).clamp(-c, c);
                    }
                }
                self.clip(&mut a);
                let x = Self::critic_input(&t.next_obs, &a);
                let q = self
                    .critic_targets
                    .iter()
                    .map(|c| c.predict(&x).map(|y| y[0]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(bellman_target(t.reward, false, self.cfg.gamma, &q))
            })
            .collect()
    }

    /// One critic regression step, and every `policy_delay` critic steps
    /// one actor step followed by the soft target updates.
    pub fn update(&mut self, batch: &[&Transition], noise_rng: &mut StreamRng, enc_rng: &mut StreamRng) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::Internal("empty update batch".into()));
        }
        let n = batch.len() as f64;
        let y = self.targets(batch, noise_rng, enc_rng)?;

        let mut critic_loss = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            let mut grads = critic.zero_grads();
            for (t, &target) in batch.iter().zip(&y) {
                let (q, trace) = critic.forward(&Self::critic_input(&t.obs, &t.action))?;
                let err = q[0] - target;
                critic_loss += err * err / n;
                critic.backward(&trace, &[2.0 * err / n], &mut grads)?;
            }
            opt.update(critic, &grads)?;
        }
        critic_loss /= self.critics.len() as f64;
        self.critic_updates += 1;

        let mut actor_loss = None;
        if self.critic_updates.is_multiple_of(self.cfg.policy_delay) {
            let mut grads = self.actor.zero_grads();
            let mut scratch = self.critics[0].zero_grads();
            let mut loss = 0.0;
            for t in batch {
                let (a, trace) = self.actor.act(&t.obs, enc_rng)?;
                // The critic sees the raw action so its gradient is defined
                // outside the bounds as well.
                let (q, q_trace) = self.critics[0].forward(&Self::critic_input(&t.obs, &a))?;
                loss -= q[0] / n;
                let grad_x = self.critics[0].backward(&q_trace, &[-1.0 / n], &mut scratch)?;
                self.actor.backward(&trace, &grad_x[self.obs_dim..], &mut grads)?;
            }
            if !grads.all_finite() {
                return Err(Error::NonFinite("actor gradient".into()));
            }
            self.actor_opt.update(&mut self.actor, &grads)?;
            self.actor.post_update();
            soft_update(&mut self.actor_target, &self.actor, self.cfg.tau);
            for (target, online) in self.critic_targets.iter_mut().zip(&self.critics) {
                soft_update(target, online, self.cfg.tau);
            }
            actor_loss = Some(loss);
        }
        if !critic_loss.is_finite() {
            return Err(Error::NonFinite("critic loss".into()));
        }
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
        })
    }
}

impl<A: Actor> Persist for OffPolicyAgent<A> {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        self.actor.store(&format!("{prefix}.actor"), table);
        self.actor_target.store(&format!("{prefix}.actor_target"), table);
        self.actor_opt.store(&format!("{prefix}.opt.actor"), table);
        for (i, ((c, t), o)) in self.critics.iter().zip(&self.critic_targets).zip(&self.critic_opts).enumerate() {
            c.store(&format!("{prefix}.critic.{i}"), table);
            t.store(&format!("{prefix}.critic_target.{i}"), table);
            o.store(&format!("{prefix}.opt.critic.{i}"), table);
        }
        table.insert_f64(format!("{prefix}.critic_updates"), &[1], &[self.critic_updates as f64]);
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        self.actor.restore(&format!("{prefix}.actor"), table)?;
        self.actor_target.restore(&format!("{prefix}.actor_target"), table)?;
        self.actor_opt.restore(&format!("{prefix}.opt.actor"), table)?;
        for (i, ((c, t), o)) in self
            .critics
            .iter_mut()
            .zip(&mut self.critic_targets)
            .zip(&mut self.critic_opts)
            .enumerate()
        {
            c.restore(&format!("{prefix}.critic.{i}"), table)?;
            t.restore(&format!("{prefix}.critic_target.{i}"), table)?;
            o.restore(&format!("{prefix}.opt.critic.{i}"), table)?;
        }
        self.critic_updates = table.f64s(&format!("{prefix}.critic_updates"), &[1])?[0] as u64;
        Ok(())
    }
}
