//! The work behind each CLI subcommand, callable without a process
//! boundary. Every command writes its machine-readable output under an
//! output directory and returns what it computed.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint, Persist};
use crate::config::{ActorKind, RunConfig};
use crate::conversion::{
    collect_max_activations, convert, converted_template, grid_search_scale, profiling_observations, ConvertedSnn,
    GridSearch, ResetMode,
};
use crate::deploy::{quantize_layerwise, quantized_eval, DeployedPopSan, OpsReport, QuantizedLayer};
use crate::drl::{actor_from_checkpoint, build_actor, evaluate, train, AnyActor, EvalStats, TrainOutcome};
use crate::envs::{make_env, TaskDescriptor};
use crate::error::{Error, Result};
use crate::popcode::mean_pairwise_encoding_distance;
use crate::popsan::PopSanParams;
use crate::rng;

pub const CONVERTED_KIND: &str = "converted";
pub const QUANTIZED_KIND: &str = "quantized";

/// Reads a run configuration (defaults when `path` is `None`) and applies
/// `--key value` overrides.
pub fn load_run_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let base = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.with_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    train(cfg)
}

fn config_table(cfg: &RunConfig) -> Result<toml::Table> {
    toml::Table::try_from(cfg).map_err(|e| Error::Internal(e.to_string()))
}

fn snapshot(ck: &Checkpoint) -> Result<RunConfig> {
    toml::Value::Table(ck.config.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::Malformed(format!("config snapshot: {}", e.message())))
}

/// Any policy a checkpoint can hold.
#[derive(Debug, Clone)]
pub enum LoadedPolicy {
    Agent(RunConfig, AnyActor),
    Converted(RunConfig, ConvertedSnn),
    Deployed(RunConfig, DeployedPopSan),
}

impl LoadedPolicy {
    pub fn config(&self) -> &RunConfig {
        match self {
            LoadedPolicy::Agent(c, _) | LoadedPolicy::Converted(c, _) | LoadedPolicy::Deployed(c, _) => c,
        }
    }

    pub fn task(&self) -> TaskDescriptor {
        self.config().run.task.descriptor()
    }
}

pub fn load_policy(path: &Path) -> Result<LoadedPolicy> {
    let ck = checkpoint::load(path)?;
    match ck.kind.as_str() {
        CONVERTED_KIND => {
            let (cfg, snn) = converted_from_checkpoint(&ck)?;
            Ok(LoadedPolicy::Converted(cfg, snn))
        }
        QUANTIZED_KIND => {
            let (cfg, net) = deployed_from_checkpoint(&ck)?;
            Ok(LoadedPolicy::Deployed(cfg, net))
        }
        _ => {
            let (cfg, actor) = actor_from_checkpoint(&ck)?;
            Ok(LoadedPolicy::Agent(cfg, actor))
        }
    }
}

/// Deterministic evaluation on seeded episodes; spiking policies draw
/// encoder randomness from the `encoder` stream of `seed`.
pub fn eval_policy(policy: &LoadedPolicy, episodes: usize, seed: u64) -> Result<EvalStats> {
    let mut env = make_env(policy.config().run.task);
    match policy {
        LoadedPolicy::Agent(_, actor) => {
            let mut enc = rng::stream(seed, rng::ENCODER);
            evaluate(|o| actor.act(o, &mut enc), env.as_mut(), episodes, seed)
        }
        LoadedPolicy::Converted(_, snn) => evaluate(|o| snn.act(o), env.as_mut(), episodes, seed),
        LoadedPolicy::Deployed(_, net) => Ok(quantized_eval(net, env.as_mut(), episodes, seed)?.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertOptions {
    pub timesteps: usize,
    pub reset: ResetMode,
    pub factors: Vec<f64>,
    /// Observations visited by the source actor used to find the maxima.
    pub profile_steps: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            timesteps: 5,
            reset: ResetMode::Soft,
            factors: crate::conversion::DEFAULT_FACTORS.to_vec(),
            profile_steps: 2_000,
            episodes: 10,
            seed: 0,
        }
    }
}

fn population_dnn(actor: AnyActor) -> Result<crate::drl::MlpActor> {
    match actor {
        AnyActor::Mlp(a) if a.encoder.is_some() => Ok(a),
        _ => Err(Error::Config("conversion needs a checkpoint of a `popdnn` actor".into())),
    }
}

/// Converts a trained population DNN actor, picks the scale factor by grid
/// search, and writes `converted.psck` and `gridsearch.csv` into `out_dir`.
pub fn cmd_convert(source: &Path, opts: &ConvertOptions, out_dir: &Path) -> Result<(ConvertedSnn, GridSearch)> {
    let ck = checkpoint::load(source)?;
    let (cfg, actor) = actor_from_checkpoint(&ck)?;
    let dnn = population_dnn(actor)?;
    let mut env = make_env(cfg.run.task);
    let observations = profiling_observations(&dnn, env.as_mut(), opts.profile_steps, opts.seed)?;
    let profile = collect_max_activations(&dnn, &observations)?;
    let snn = convert(&dnn, &profile, opts.reset, opts.timesteps)?;
    let grid = grid_search_scale(&snn, env.as_mut(), &opts.factors, opts.episodes, opts.seed)?;
    let snn = snn.with_scale(grid.best_factor())?;

    fs::create_dir_all(out_dir)?;
    let mut out = Checkpoint::new(CONVERTED_KIND, cfg.run.task.descriptor(), config_table(&cfg)?);
    dnn.store("source", &mut out.tensors);
    snn.store("snn", &mut out.tensors);
    out.tensors.insert_i32("snn.timesteps", &[1], &[checked_i32(snn.timesteps)?]);
    out.tensors.insert_i32("snn.reset", &[1], &[i32::from(snn.reset == ResetMode::Soft)]);
    checkpoint::save(&out_dir.join("converted.psck"), &out)?;
    fs::write(out_dir.join("gridsearch.csv"), grid.to_csv())?;
    Ok((snn, grid))
}

fn checked_i32(x: usize) -> Result<i32> {
    i32::try_from(x).map_err(|_| Error::Config(format!("{x} does not fit a checkpoint integer")))
}

fn converted_from_checkpoint(ck: &Checkpoint) -> Result<(RunConfig, ConvertedSnn)> {
    ck.ensure_kind(CONVERTED_KIND)?;
    let cfg = snapshot(ck)?;
    let task = cfg.run.task.descriptor();
    ck.ensure_task(&task)?;
    let mut dnn = population_dnn(build_actor(&cfg, &task, &mut rng::stream(0, rng::INIT))?)?;
    dnn.restore("source", &ck.tensors)?;
    let timesteps = ck.tensors.i32s("snn.timesteps", &[1])?[0];
    let timesteps = usize::try_from(timesteps).map_err(|_| Error::Malformed(format!("timesteps {timesteps}")))?;
    let reset = if ck.tensors.i32s("snn.reset", &[1])?[0] == 1 {
        ResetMode::Soft
    } else {
        ResetMode::Hard
    };
    let mut snn = converted_template(&dnn, reset, timesteps)?;
    snn.restore("snn", &ck.tensors)?;
    Ok((cfg, snn))
}

fn popsan_params(actor: AnyActor) -> Result<PopSanParams> {
    match actor {
        AnyActor::PopSan(a) => Ok(a.params),
        AnyActor::Mlp(_) => Err(Error::Config("deployment needs a checkpoint of a `popsan` actor".into())),
    }
}

/// Quantizes the LIF stack of a trained PopSAN layer by layer and writes a
/// `quantized` checkpoint to `out`.
pub fn cmd_quantize(source: &Path, bits: u32, out: &Path) -> Result<DeployedPopSan> {
    let ck = checkpoint::load(source)?;
    let (cfg, actor) = actor_from_checkpoint(&ck)?;
    let net = DeployedPopSan::new(popsan_params(actor)?, Some(bits))?;
    let mut ck = Checkpoint::new(QUANTIZED_KIND, cfg.run.task.descriptor(), config_table(&cfg)?);
    net.params.store("net", &mut ck.tensors);
    if let Some(q) = &net.quantized {
        q.store("chip", &mut ck.tensors);
    }
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    checkpoint::save(out, &ck)?;
    Ok(net)
}

fn deployed_from_checkpoint(ck: &Checkpoint) -> Result<(RunConfig, DeployedPopSan)> {
    ck.ensure_kind(QUANTIZED_KIND)?;
    let cfg = snapshot(ck)?;
    let task = cfg.run.task.descriptor();
    ck.ensure_task(&task)?;
    if cfg.run.actor != ActorKind::Popsan {
        return Err(Error::Malformed("quantized checkpoint does not hold a PopSAN".into()));
    }
    let mut params = PopSanParams::zeros(&cfg.popsan_config(&task))?;
    params.restore("net", &ck.tensors)?;
    let bits = ck.tensors.i32s("chip.0.bits", &[1])?[0];
    let bits = u32::try_from(bits).map_err(|_| Error::Malformed(format!("bit width {bits}")))?;
    let mut chip: Vec<QuantizedLayer> = quantize_layerwise(&params.layers, bits)?;
    chip.restore("chip", &ck.tensors)?;
    Ok((
        cfg,
        DeployedPopSan {
            params,
            quantized: Some(chip),
        },
    ))
}

/// Runs a quantized checkpoint (or an agent checkpoint, unquantized) on the
/// simulated chip and writes `ops.csv` into `out_dir`.
pub fn cmd_deploy_eval(source: &Path, episodes: usize, seed: u64, out_dir: &Path) -> Result<(EvalStats, OpsReport)> {
    let policy = load_policy(source)?;
    let mut env = make_env(policy.config().run.task);
    let net = match policy {
        LoadedPolicy::Deployed(_, net) => net,
        LoadedPolicy::Agent(cfg, actor) if cfg.run.actor == ActorKind::Popsan => {
            DeployedPopSan::new(popsan_params(actor)?, None)?
        }
        _ => return Err(Error::Config("deploy-eval needs a quantized or PopSAN checkpoint".into())),
    };
    let (stats, ops) = quantized_eval(&net, env.as_mut(), episodes, seed)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("ops.csv"), ops.to_csv())?;
    Ok((stats, ops))
}

/// Which population an ablation resizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PopulationTarget {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub pop_size: usize,
    pub learn_encoder: bool,
    pub seed: u64,
    /// Last evaluation mean of the run.
    pub final_return: f64,
    /// Mean pairwise spike-count distance of the trained encoder.
    pub encoding_distance: f64,
}

pub const ABLATION_HEADER: &str = "pop_size,learn_encoder,seed,final_return,encoding_distance";

/// A fixed set of observations drawn uniformly from the task ranges.
pub fn probe_observations(task: &TaskDescriptor, n: usize) -> Vec<Vec<f64>> {
    let mut r = rng::stream(0, "probe");
    (0..n)
        .map(|_| task.obs_ranges.iter().map(|&(lo, hi)| r.random_range(lo..=hi)).collect())
        .collect()
}

/// Trains one PopSAN per (size, encoder setting, seed) under `base` and
/// writes `ablation.csv` into `base.run.out_dir`. Each run gets its own
/// subdirectory.
pub fn cmd_ablate(
    base: &RunConfig,
    sizes: &[usize],
    target: PopulationTarget,
    learn_encoder: &[bool],
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    if base.run.actor != ActorKind::Popsan {
        return Err(Error::Config("ablations vary PopSAN populations; set actor = \"popsan\"".into()));
    }
    let root = PathBuf::from(&base.run.out_dir);
    let task = base.run.task.descriptor();
    let probes = probe_observations(&task, 64);
    let mut rows = Vec::new();
    for &size in sizes {
        for &learn in learn_encoder {
            for &seed in seeds {
                let mut cfg = base.clone();
                match target {
                    PopulationTarget::Input => cfg.popsan.pop_in = size,
                    PopulationTarget::Output => cfg.popsan.pop_out = size,
                }
                cfg.popsan.learn_encoder = learn;
                cfg.run.seed = seed;
                let tag = if learn { "learned" } else { "frozen" };
                cfg.run.out_dir = root
                    .join(format!("pop{size}_{tag}_seed{seed}"))
                    .to_string_lossy()
                    .into_owned();
                let outcome = train(&cfg)?;
                let AnyActor::PopSan(actor) = &outcome.actor else {
                    return Err(Error::Internal("ablation trained a non-PopSAN actor".into()));
                };
                let p = &actor.params;
                rows.push(AblationRow {
                    pop_size: size,
                    learn_encoder: learn,
                    seed,
                    final_return: outcome.final_mean(1).unwrap_or(f64::NAN),
                    encoding_distance: mean_pairwise_encoding_distance(&p.encoder, &probes, p.timesteps)?,
                });
            }
        }
    }
    fs::create_dir_all(&root)?;
    let mut csv = format!("{ABLATION_HEADER}\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.pop_size, r.learn_encoder, r.seed, r.final_return, r.encoding_distance
        ));
    }
    fs::write(root.join("ablation.csv"), csv)?;
    Ok(rows)
}
