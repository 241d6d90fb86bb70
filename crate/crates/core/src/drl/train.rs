//! Training loops, periodic deterministic evaluation, metrics and
//! checkpoints.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, RngCore};

use super::actor::{Actor, MlpActor, PopSanActor};
use super::offpolicy::{OffPolicyAgent, OffPolicyConfig};
use super::ppo::{compute_gae, PpoAgent, PpoConfig, PpoSample};
use super::replay::{ReplayBuffer, Transition};
use super::UpdateStats;
use crate::checkpoint::{self, Checkpoint, Persist, RngState, TensorTable};
use crate::config::{ActorKind, Algorithm, RunConfig};
use crate::envs::{make_env, Env, TaskDescriptor};
use crate::error::{Error, Result};
use crate::optim::Parameters;
use crate::popsan::PopSanParams;
use crate::rng::{self, StreamRng};

pub const METRICS_HEADER: &str = "step,eval_return_mean,eval_return_std,actor_loss,critic_loss";

/// Checkpoint kind written by the training loop.
pub const AGENT_KIND: &str = "agent";

/// Either actor family, for code that picks one at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyActor {
    PopSan(PopSanActor),
    Mlp(MlpActor),
}

impl From<PopSanActor> for AnyActor {
    fn from(a: PopSanActor) -> Self {
        AnyActor::PopSan(a)
    }
}

impl From<MlpActor> for AnyActor {
    fn from(a: MlpActor) -> Self {
        AnyActor::Mlp(a)
    }
}

impl AnyActor {
    /// Raw deterministic action.
    pub fn act(&self, obs: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        match self {
            AnyActor::PopSan(a) => Ok(a.act(obs, rng)?.0),
            AnyActor::Mlp(a) => Ok(a.act(obs, rng)?.0),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            AnyActor::PopSan(a) => a.num_params(),
            AnyActor::Mlp(a) => a.num_params(),
        }
    }
}

impl Persist for AnyActor {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        match self {
            AnyActor::PopSan(a) => a.store(prefix, table),
            AnyActor::Mlp(a) => a.store(prefix, table),
        }
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        match self {
            AnyActor::PopSan(a) => a.restore(prefix, table),
            AnyActor::Mlp(a) => a.restore(prefix, table),
        }
    }
}

pub fn build_actor(cfg: &RunConfig, task: &TaskDescriptor, rng: &mut StreamRng) -> Result<AnyActor> {
    Ok(match cfg.run.actor {
        ActorKind::Popsan => {
            let params = PopSanParams::init(&cfg.popsan_config(task), rng)?;
            PopSanActor::new(params, cfg.surrogate(), cfg.popsan.learn_encoder).into()
        }
        ActorKind::Mlp => MlpActor::plain(task, &cfg.mlp_actor.hidden, rng)?.into(),
        ActorKind::Popdnn => MlpActor::population(task, &cfg.popsan_config(task), rng)?.into(),
    })
}

/// Rebuilds the trained actor stored in a training checkpoint.
pub fn actor_from_checkpoint(ck: &Checkpoint) -> Result<(RunConfig, AnyActor)> {
    ck.ensure_kind(AGENT_KIND)?;
    let cfg: RunConfig = toml::Value::Table(ck.config.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::Malformed(format!("config snapshot: {}", e.message())))?;
    let task = cfg.run.task.descriptor();
    ck.ensure_task(&task)?;
    let mut actor = build_actor(&cfg, &task, &mut rng::stream(0, rng::INIT))?;
    actor.restore("agent.actor", &ck.tensors)?;
    Ok((cfg, actor))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub mean: f64,
    /// Population standard deviation of the episode returns.
    pub std: f64,
    pub returns: Vec<f64>,
}

impl EvalStats {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std, returns }
    }

    pub fn std_error(&self) -> f64 {
        self.std / (self.returns.len() as f64).sqrt()
    }
}

/// Runs `episodes` episodes with a deterministic policy. Episode `i` is reset
/// from a seed derived from `(seed, i)`, so the start states are the same for
/// every policy evaluated with the same seed.
pub fn evaluate<F>(mut policy: F, env: &mut dyn Env, episodes: usize, seed: u64) -> Result<EvalStats>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut obs = env.reset(rng::derive_seed(seed, &format!("episode.{i}")));
        let mut total = 0.0;
        loop {
            let step = env.step(&policy(&obs)?)?;
            total += step.reward;
            if step.done() {
                break;
            }
            obs = step.obs;
        }
        returns.push(total);
    }
    Ok(EvalStats::from_returns(returns))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    /// NaN when no update happened since the previous row.
    pub actor_loss: f64,
    pub critic_loss: f64,
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.eval_return_mean, r.eval_return_std, r.actor_loss, r.critic_loss
        ));
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricRow>,
    pub actor: AnyActor,
    pub checkpoints: Vec<PathBuf>,
    /// PPO minibatches skipped for non-finite ratios.
    pub rejected_batches: u64,
}

impl TrainOutcome {
    /// Mean of the last `n` evaluation means.
    pub fn final_mean(&self, n: usize) -> Option<f64> {
        let tail = &self.metrics[self.metrics.len().saturating_sub(n)..];
        (!tail.is_empty()).then(|| tail.iter().map(|r| r.eval_return_mean).sum::<f64>() / tail.len() as f64)
    }
}

/// Trains the configured agent, writing `metrics.csv`, `config.toml` and
/// checkpoints under `run.out_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let task = cfg.run.task.descriptor();
    let out_dir = PathBuf::from(&cfg.run.out_dir);
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml_string())?;
    let mut init = rng::stream(cfg.run.seed, rng::INIT);
    let outcome = match build_actor(cfg, &task, &mut init)? {
        AnyActor::PopSan(a) => run(cfg, &task, a, &mut init, &out_dir)?,
        AnyActor::Mlp(a) => run(cfg, &task, a, &mut init, &out_dir)?,
    };
    write_metrics(&out_dir.join("metrics.csv"), &outcome.metrics)?;
    Ok(outcome)
}

fn run<A>(cfg: &RunConfig, task: &TaskDescriptor, actor: A, init: &mut StreamRng, out_dir: &Path) -> Result<TrainOutcome>
where
    A: Actor + Into<AnyActor>,
{
    let mut session = Session::new(cfg, task, out_dir)?;
    match cfg.run.algorithm {
        Algorithm::Ddpg | Algorithm::Td3 => {
            let agent = OffPolicyAgent::new(actor, task, &cfg.train.critic_hidden, OffPolicyConfig::from_run(cfg)?, init)?;
            let agent = train_off_policy(cfg, agent, &mut session)?;
            Ok(session.finish(agent.actor.into(), 0))
        }
        Algorithm::Ppo => {
            let agent = PpoAgent::new(
                actor,
                task,
                &cfg.train.critic_hidden,
                cfg.train.log_std_init,
                PpoConfig::from_run(cfg),
                init,
            )?;
            let agent = train_ppo(cfg, agent, &mut session)?;
            let rejected = agent.rejected_batches;
            Ok(session.finish(agent.actor.into(), rejected))
        }
    }
}

/// Evaluation, loss bookkeeping and checkpointing shared by both loops.
struct Session<'a> {
    cfg: &'a RunConfig,
    task: &'a TaskDescriptor,
    config_table: toml::Table,
    eval_env: Box<dyn Env>,
    out_dir: &'a Path,
    metrics: Vec<MetricRow>,
    checkpoints: Vec<PathBuf>,
    actor_losses: Vec<f64>,
    critic_losses: Vec<f64>,
}

impl<'a> Session<'a> {
    fn new(cfg: &'a RunConfig, task: &'a TaskDescriptor, out_dir: &'a Path) -> Result<Self> {
        let config_table = cfg
            .to_toml_string()
            .parse()
            .map_err(|e: toml::de::Error| Error::Internal(format!("config does not round-trip: {}", e.message())))?;
        Ok(Self {
            cfg,
            task,
            config_table,
            eval_env: make_env(cfg.run.task),
            out_dir,
            metrics: Vec::new(),
            checkpoints: Vec::new(),
            actor_losses: Vec::new(),
            critic_losses: Vec::new(),
        })
    }

    fn record(&mut self, stats: UpdateStats) {
        self.critic_losses.push(stats.critic_loss);
        if let Some(a) = stats.actor_loss {
            self.actor_losses.push(a);
        }
    }

    fn mean_or_nan(xs: &mut Vec<f64>) -> f64 {
        let m = if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        xs.clear();
        m
    }

    /// Evaluates the current actor, appends a metrics row and saves a
    /// checkpoint of `agent`.
    fn checkpoint<A: Actor, P: Persist>(
        &mut self,
        step: u64,
        actor: &A,
        agent: &P,
        streams: &[(&str, &StreamRng)],
        is_final: bool,
    ) -> Result<()> {
        let seed = rng::derive_seed(self.cfg.run.seed, rng::EVAL);
        let mut enc = rng::stream(seed, rng::ENCODER);
        let stats = evaluate(
            |obs| Ok(actor.act(obs, &mut enc)?.0),
            self.eval_env.as_mut(),
            self.cfg.train.eval_episodes,
            seed,
        )?;
        let row = MetricRow {
            step,
            eval_return_mean: stats.mean,
            eval_return_std: stats.std,
            actor_loss: Self::mean_or_nan(&mut self.actor_losses),
            critic_loss: Self::mean_or_nan(&mut self.critic_losses),
        };
        info!(
            "step {step}: return {:.2} ± {:.2}, actor loss {:.4}, critic loss {:.4}",
            row.eval_return_mean, row.eval_return_std, row.actor_loss, row.critic_loss
        );
        self.metrics.push(row);

        let mut ck = Checkpoint::new(AGENT_KIND, self.task.clone(), self.config_table.clone());
        ck.step = step;
        ck.rng = streams.iter().map(|(name, r)| RngState::capture(name, r)).collect();
        agent.store("agent", &mut ck.tensors);
        let dir = self.out_dir.join("checkpoints");
        let path = if is_final {
            dir.join("final.psck")
        } else {
            dir.join(format!("step_{step:08}.psck"))
        };
        checkpoint::save(&path, &ck)?;
        self.checkpoints.push(path);
        Ok(())
    }

    fn finish(self, actor: AnyActor, rejected_batches: u64) -> TrainOutcome {
        TrainOutcome {
            metrics: self.metrics,
            actor,
            checkpoints: self.checkpoints,
            rejected_batches,
        }
    }
}

fn env_fault(step: u64, e: Error) -> Error {
    Error::Environment(format!("at environment step {step}: {e}"))
}

fn train_off_policy<A: Actor>(cfg: &RunConfig, mut agent: OffPolicyAgent<A>, session: &mut Session) -> Result<OffPolicyAgent<A>> {
    let t = &cfg.train;
    let seed = cfg.run.seed;
    let mut env = make_env(cfg.run.task);
    let task = env.descriptor().clone();
    let mut env_rng = rng::stream(seed, rng::ENV);
    let mut explore = rng::stream(seed, rng::EXPLORATION);
    let mut enc = rng::stream(seed, rng::ENCODER);
    let mut replay_rng = rng::stream(seed, rng::REPLAY);
    let mut buffer = ReplayBuffer::new(t.replay_capacity)?;

    let mut obs = env.reset(env_rng.next_u64());
    for step in 1..=t.total_steps {
        let raw = if step <= t.warmup_steps {
            task.action_low
                .iter()
                .zip(&task.action_high)
                .map(|(lo, hi)| explore.random_range(*lo..=*hi))
                .collect()
        } else {
            agent.explore(&obs, t.exploration_std, &mut explore, &mut enc)?
        };
        let action = task.clip_action(&raw);
        let s = env.step(&action).map_err(|e| env_fault(step, e))?;
        if !s.reward.is_finite() {
            return Err(env_fault(step, Error::NonFinite("reward".into())));
        }
        let next_obs = if s.done() {
            env.reset(env_rng.next_u64())
        } else {
            s.obs.clone()
        };
        buffer.push(Transition {
            obs: std::mem::replace(&mut obs, next_obs),
            action,
            reward: s.reward,
            next_obs: s.obs,
            done: s.terminal,
        });

        if step > t.warmup_steps {
            let batch = buffer.sample(t.batch_size, &mut replay_rng)?;
            let stats = agent.update(&batch, &mut explore, &mut enc)?;
            session.record(stats);
        }

        let is_final = step == t.total_steps;
        if step % t.eval_interval == 0 || is_final {
            let streams = [
                (rng::ENV, &env_rng),
                (rng::EXPLORATION, &explore),
                (rng::ENCODER, &enc),
                (rng::REPLAY, &replay_rng),
            ];
            session.checkpoint(step, &agent.actor, &agent, &streams, is_final)?;
        }
    }
    Ok(agent)
}

/// One parallel environment's persistent state across PPO iterations.
struct Worker {
    env: Box<dyn Env>,
    env_rng: StreamRng,
    noise: StreamRng,
    enc: StreamRng,
    obs: Vec<f64>,
}

fn train_ppo<A: Actor>(cfg: &RunConfig, mut agent: PpoAgent<A>, session: &mut Session) -> Result<PpoAgent<A>> {
    let t = &cfg.train;
    let seed = cfg.run.seed;
    let mut workers: Vec<Worker> = (0..t.n_envs)
        .map(|i| {
            let worker_seed = rng::derive_seed(seed, &format!("worker.{i}"));
            let mut env_rng = rng::stream(worker_seed, rng::ENV);
            let mut env = make_env(cfg.run.task);
            let obs = env.reset(env_rng.next_u64());
            Worker {
                env,
                env_rng,
                noise: rng::stream(worker_seed, rng::EXPLORATION),
                enc: rng::stream(worker_seed, rng::ENCODER),
                obs,
            }
        })
        .collect();
    let mut shuffle = rng::stream(seed, rng::REPLAY);
    let mut update_enc = rng::stream(seed, rng::ENCODER);

    let per_iter = (t.n_envs * t.rollout_steps) as u64;
    let iterations = t.total_steps.div_ceil(per_iter);
    let mut steps = 0u64;
    for iter in 0..iterations {
        let mut samples = Vec::with_capacity(per_iter as usize);
        for w in &mut workers {
            samples.extend(rollout(&agent, w, t.rollout_steps, t.gamma, t.gae_lambda, steps)?);
        }
        let before = steps;
        steps += per_iter;
        let stats = agent.update(&samples, &mut shuffle, &mut update_enc)?;
        session.record(stats);

        let is_final = iter + 1 == iterations;
        if steps / t.eval_interval > before / t.eval_interval || is_final {
            let streams = [(rng::REPLAY, &shuffle), (rng::ENCODER, &update_enc)];
            session.checkpoint(steps, &agent.actor, &agent, &streams, is_final)?;
        }
    }
    Ok(agent)
}

/// Collects `n` steps from one worker and returns them with advantages.
/// At a horizon cut the bootstrap value of the final state is folded into
/// the reward, so GAE can treat every episode end alike.
fn rollout<A: Actor>(agent: &PpoAgent<A>, w: &mut Worker, n: usize, gamma: f64, lambda: f64, step0: u64) -> Result<Vec<PpoSample>> {
    let mut obs = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    let mut logps = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n + 1);
    let mut dones = Vec::with_capacity(n);
    for k in 0..n {
        let (action, logp) = agent.sample(&w.obs, &mut w.noise, &mut w.enc)?;
        values.push(agent.value(&w.obs)?);
        let s = w.env.step(&action).map_err(|e| env_fault(step0 + k as u64, e))?;
        let mut reward = s.reward;
        if !reward.is_finite() {
            return Err(env_fault(step0 + k as u64, Error::NonFinite("reward".into())));
        }
        if s.truncated && !s.terminal {
            reward += gamma * agent.value(&s.obs)?;
        }
        let done = s.done();
        let next = if done { w.env.reset(w.env_rng.next_u64()) } else { s.obs };
        obs.push(std::mem::replace(&mut w.obs, next));
        actions.push(action);
        logps.push(logp);
        rewards.push(reward);
        dones.push(done);
    }
    values.push(agent.value(&w.obs)?);
    let (adv, ret) = compute_gae(&rewards, &values, &dones, gamma, lambda)?;
    Ok(obs
        .into_iter()
        .zip(actions)
        .zip(logps)
        .zip(adv.into_iter().zip(ret))
        .map(|(((obs, action), logp_old), (advantage, ret))| PpoSample {
            obs,
            action,
            logp_old,
            advantage,
            ret,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Step;

    /// Pays 1 per step for 5 steps regardless of the action.
    struct Constant {
        desc: TaskDescriptor,
        steps: usize,
    }

    impl Constant {
        fn new() -> Self {
            Self {
                desc: TaskDescriptor {
                    name: "constant".into(),
                    obs_dim: 1,
                    act_dim: 1,
                    action_low: vec![-1.0],
                    action_high: vec![1.0],
                    obs_ranges: vec![(0.0, 1.0)],
                    max_episode_steps: 5,
                },
                steps: 0,
            }
        }
    }

    impl Env for Constant {
        fn descriptor(&self) -> &TaskDescriptor {
            &self.desc
        }

        fn reset(&mut self, _seed: u64) -> Vec<f64> {
            self.steps = 0;
            vec![0.0]
        }

        fn step(&mut self, _action: &[f64]) -> Result<Step> {
            self.steps += 1;
            Ok(Step {
                obs: vec![0.0],
                reward: 1.0,
                terminal: false,
                truncated: self.steps >= 5,
            })
        }
    }

    #[test]
    fn evaluate_constant_env() {
        let mut env = Constant::new();
        let stats = evaluate(|_| Ok(vec![0.0]), &mut env, 3, 0).unwrap();
        assert_eq!(stats.returns, vec![5.0; 3]);
        assert_eq!((stats.mean, stats.std), (5.0, 0.0));
        assert!(evaluate(|_| Ok(vec![0.0]), &mut env, 0, 0).is_err());
    }

    #[test]
    fn evaluate_is_seeded() {
        let mut env = make_env(crate::envs::TaskKind::Pendulum);
        let policy = |obs: &[f64]| Ok(vec![-obs[2]]);
        let a = evaluate(policy, env.as_mut(), 3, 7).unwrap();
        let b = evaluate(policy, env.as_mut(), 3, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.returns[0], a.returns[1]);
    }

    #[test]
    fn metrics_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let row = MetricRow {
            step: 10,
            eval_return_mean: -1.5,
            eval_return_std: 0.25,
            actor_loss: f64::NAN,
            critic_loss: 2.0,
        };
        write_metrics(&path, &[row]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{METRICS_HEADER}\n10,-1.5,0.25,NaN,2\n"));
    }

    fn small(algorithm: Algorithm, actor: ActorKind, out: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.run.algorithm = algorithm;
        cfg.run.actor = actor;
        cfg.run.out_dir = out.display().to_string();
        cfg.train.total_steps = 300;
        cfg.train.eval_interval = 120;
        cfg.train.eval_episodes = 1;
        cfg.train.warmup_steps = 100;
        cfg.train.batch_size = 8;
        cfg.train.n_envs = 2;
        cfg.train.rollout_steps = 50;
        cfg.train.ppo_epochs = 2;
        cfg.train.ppo_minibatch = 25;
        cfg.train.critic_hidden = vec![8];
        cfg.popsan.hidden = vec![8];
        cfg.popsan.pop_in = 3;
        cfg.popsan.pop_out = 3;
        cfg.mlp_actor.hidden = vec![8];
        cfg
    }

    #[test]
    fn every_algorithm_and_actor_runs() {
        for algorithm in [Algorithm::Ddpg, Algorithm::Td3, Algorithm::Ppo] {
            for actor in [ActorKind::Popsan, ActorKind::Mlp, ActorKind::Popdnn] {
                let dir = tempfile::tempdir().unwrap();
                let out = train(&small(algorithm, actor, dir.path())).unwrap();
                assert!(!out.metrics.is_empty(), "{algorithm} {actor}");
                assert!(out.metrics.iter().all(|r| r.eval_return_mean.is_finite()));
                assert!(dir.path().join("checkpoints/final.psck").exists());
                let ck = checkpoint::load(&dir.path().join("checkpoints/final.psck")).unwrap();
                let (_, restored) = actor_from_checkpoint(&ck).unwrap();
                assert_eq!(restored, out.actor);
            }
        }
    }

    #[test]
    fn eval_schedule() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&small(Algorithm::Td3, ActorKind::Mlp, dir.path())).unwrap();
        let steps: Vec<u64> = out.metrics.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![120, 240, 300]);
        // Warmup only: no updates before the first evaluation.
        assert!(out.metrics[0].critic_loss.is_finite());
        let mut cfg = small(Algorithm::Td3, ActorKind::Mlp, dir.path());
        cfg.train.warmup_steps = 1000;
        let out = train(&cfg).unwrap();
        assert!(out.metrics.iter().all(|r| r.critic_loss.is_nan() && r.actor_loss.is_nan()));
    }

    #[test]
    fn interval_beyond_total_gives_one_evaluation() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Algorithm::Ddpg, ActorKind::Mlp, dir.path());
        cfg.train.eval_interval = 10_000;
        let out = train(&cfg).unwrap();
        assert_eq!(out.metrics.len(), 1);
        assert_eq!(out.metrics[0].step, 300);
    }

    #[test]
    fn zero_steps_writes_empty_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Algorithm::Td3, ActorKind::Popsan, dir.path());
        cfg.train.total_steps = 0;
        let out = train(&cfg).unwrap();
        assert!(out.metrics.is_empty() && out.checkpoints.is_empty());
        assert_eq!(fs::read_to_string(dir.path().join("metrics.csv")).unwrap(), format!("{METRICS_HEADER}\n"));
    }

    #[test]
    fn same_seed_same_metrics() {
        for algorithm in [Algorithm::Td3, Algorithm::Ppo] {
            let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
            train(&small(algorithm, ActorKind::Popsan, a.path())).unwrap();
            train(&small(algorithm, ActorKind::Popsan, b.path())).unwrap();
            let read = |d: &tempfile::TempDir| fs::read(d.path().join("metrics.csv")).unwrap();
            assert_eq!(read(&a), read(&b));
        }
    }
}
