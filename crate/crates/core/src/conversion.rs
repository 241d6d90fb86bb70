//! Conversion of a trained ReLU population actor into an integrate-and-fire
//! spiking network by layer-wise weight rescaling.
//!
//! Layer `k` of the converted network fires at rate 1 when the original
//! activation equals `lambda[k]`, the largest activation seen while
//! profiling. The input layer is the population encoder, driven at
//! `A_E / lambda[0]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Persist, TensorTable};
use crate::drl::{evaluate, Actor, EvalStats, MlpActor};
use crate::envs::Env;
use crate::error::{ensure_len, Error, Result};
use crate::mlp::{Activation, DenseLayer};
use crate::popcode::{compute_stimulation, encode_deterministic, EncoderParams};
use crate::rng;
use crate::snn::SpikeTrain;

/// Candidate global scale factors `0.1, 0.2, ..., 1.0`.
pub const DEFAULT_FACTORS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResetMode {
    /// Membrane potential returns to zero after a spike.
    Hard,
    /// The threshold is subtracted, keeping the residual.
    Soft,
}

impl ResetMode {
    pub fn name(self) -> &'static str {
        match self {
            ResetMode::Hard => "hard",
            ResetMode::Soft => "soft",
        }
    }
}

impl fmt::Display for ResetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" | "h" | "H" => Ok(ResetMode::Hard),
            "soft" | "s" | "S" => Ok(ResetMode::Soft),
            other => Err(Error::Config(format!("unknown reset mode `{other}` (expected hard or soft)"))),
        }
    }
}

/// Largest activation per layer; `layers[k]` belongs to ReLU layer `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationProfile {
    pub input: f64,
    pub layers: Vec<f64>,
}

/// The layers of a population actor that become spiking: every layer but
/// the dense readout.
fn spiking_part(dnn: &MlpActor) -> Result<(&EncoderParams, &[DenseLayer], &DenseLayer)> {
    let encoder = dnn
        .encoder
        .as_ref()
        .ok_or_else(|| Error::Config("conversion needs a population-encoded actor".into()))?;
    let (readout, hidden) = dnn
        .net
        .layers
        .split_last()
        .ok_or_else(|| Error::Config("actor network has no layers".into()))?;
    if hidden.is_empty() || hidden.iter().any(|l| l.activation != Activation::Relu) {
        return Err(Error::Config("conversion needs ReLU layers before the readout".into()));
    }
    Ok((encoder, hidden, readout))
}

fn relu_forward(layers: &[DenseLayer], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(layers.len());
    let mut h = x.to_vec();
    for l in layers {
        h = l.affine(&h).into_iter().map(|v| v.max(0.0)).collect();
        acts.push(h.clone());
    }
    acts
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

pub fn collect_max_activations(dnn: &MlpActor, observations: &[Vec<f64>]) -> Result<ActivationProfile> {
    if observations.is_empty() {
        return Err(Error::Input("profiling set is empty".into()));
    }
    let (encoder, hidden, _) = spiking_part(dnn)?;
    let mut profile = ActivationProfile {
        input: 0.0,
        layers: vec![0.0; hidden.len()],
    };
    for obs in observations {
        let x = compute_stimulation(obs, encoder)?;
        profile.input = profile.input.max(max_of(&x));
        for (m, a) in profile.layers.iter_mut().zip(relu_forward(hidden, &x)) {
            *m = m.max(max_of(&a));
        }
    }
    Ok(profile)
}

/// Observations visited by the deterministic actor, `n` in total.
pub fn profiling_observations(dnn: &MlpActor, env: &mut dyn Env, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(n);
    let mut rng = rng::stream(seed, rng::EVAL);
    let mut episode = 0u64;
    while out.len() < n {
        let mut obs = env.reset(rng::derive_seed(seed, &format!("profile.{episode}")));
        episode += 1;
        loop {
            out.push(obs.clone());
            if out.len() == n {
                break;
            }
            let (a, _) = dnn.act(&obs, &mut rng)?;
            let s = env.step(&a)?;
            if s.done() {
                break;
            }
            obs = s.obs;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertedSnn {
    pub encoder: EncoderParams,
    /// Rescaled layers; thresholds are 1.
    pub layers: Vec<DenseLayer>,
    /// The original dense readout, applied to un-rescaled rates.
    pub readout: DenseLayer,
    pub profile: ActivationProfile,
    pub reset: ResetMode,
    pub timesteps: usize,
    /// Global factor in `(0, 1]` multiplying every layer's `lambda`.
    pub scale: f64,
    pub action_mid: Vec<f64>,
    pub action_half_range: Vec<f64>,
    /// The unscaled layers, kept so the scale can be changed.
    source: Vec<DenseLayer>,
}

/// `W' = W * lambda[k-1] / lambda[k]`, `b' = b / lambda[k]`.
pub fn rescale_layers(layers: &[DenseLayer], input_scale: f64, scales: &[f64]) -> Result<Vec<DenseLayer>> {
    ensure_len("activation profile", layers.len(), scales.len())?;
    let mut prev = input_scale;
    let mut out = Vec::with_capacity(layers.len());
    for (k, (l, &lambda)) in layers.iter().zip(scales).enumerate() {
        if !(lambda > 0.0 && lambda.is_finite()) || !(prev > 0.0 && prev.is_finite()) {
            return Err(Error::Config(format!(
                "layer {k} cannot be rescaled: maximum activation {lambda} after input scale {prev}"
            )));
        }
        let mut r = l.clone();
        r.weights.iter_mut().for_each(|w| *w *= prev / lambda);
        r.biases.iter_mut().for_each(|b| *b /= lambda);
        out.push(r);
        prev = lambda;
    }
    Ok(out)
}

pub fn convert(dnn: &MlpActor, profile: &ActivationProfile, reset: ResetMode, timesteps: usize) -> Result<ConvertedSnn> {
    if timesteps == 0 {
        return Err(Error::Config("converted network needs at least one timestep".into()));
    }
    let (encoder, hidden, readout) = spiking_part(dnn)?;
    let layers = rescale_layers(hidden, profile.input, &profile.layers)?;
    Ok(ConvertedSnn {
        encoder: encoder.clone(),
        layers,
        readout: readout.clone(),
        profile: profile.clone(),
        reset,
        timesteps,
        scale: 1.0,
        action_mid: dnn.action_mid.clone(),
        action_half_range: dnn.action_half_range.clone(),
        source: hidden.to_vec(),
    })
}

impl ConvertedSnn {
    /// Re-derives the layers with every hidden `lambda` multiplied by `factor`.
    pub fn with_scale(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::Config(format!("scale factor {factor} outside (0, 1]")));
        }
        let scales: Vec<f64> = self.profile.layers.iter().map(|l| l * factor).collect();
        let mut out = self.clone();
        out.layers = rescale_layers(&self.source, self.profile.input, &scales)?;
        out.scale = factor;
        Ok(out)
    }

    pub fn with_timesteps(&self, timesteps: usize) -> Result<Self> {
        if timesteps == 0 {
            return Err(Error::Config("converted network needs at least one timestep".into()));
        }
        Ok(Self {
            timesteps,
            ..self.clone()
        })
    }

    /// Input raster: the stimulation divided by `lambda[0]`, clipped to 1
    /// and fed through the deterministic encoder.
    pub fn encode(&self, obs: &[f64]) -> Result<SpikeTrain> {
        let x: Vec<f64> = compute_stimulation(obs, &self.encoder)?
            .into_iter()
            .map(|a| (a / self.profile.input).min(1.0))
            .collect();
        Ok(encode_deterministic(&x, self.timesteps, self.encoder.epsilon))
    }

    /// Raw action; rates are mapped back to activations before the readout.
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let trains = if_forward(&self.layers, &self.encode(obs)?, self.reset)?;
        let out = trains.last().expect("at least one layer");
        let lambda = self.profile.layers.last().expect("at least one layer") * self.scale;
        let h: Vec<f64> = out
            .counts()
            .iter()
            .map(|&c| f64::from(c) / self.timesteps as f64 * lambda)
            .collect();
        Ok(self
            .readout
            .affine(&h)
            .iter()
            .zip(self.action_mid.iter().zip(&self.action_half_range))
            .map(|(y, (m, r))| m + r * y.tanh())
            .collect())
    }
}

/// Rounding slack on the unit threshold, so that drives summing to exactly
/// 1 in real arithmetic fire despite floating-point error.
pub const FIRE_TOLERANCE: f64 = 1e-9;

/// Non-leaky integrate-and-fire layers with threshold 1, spiking when the
/// potential reaches the threshold. Layer `k` sees layer `k-1`'s spikes
/// from the same step.
pub fn if_forward(layers: &[DenseLayer], input: &SpikeTrain, reset: ResetMode) -> Result<Vec<SpikeTrain>> {
    let steps = input.steps();
    let mut width = input.width();
    for (k, l) in layers.iter().enumerate() {
        if l.n_in != width {
            return Err(Error::Config(format!("layer {k} expects {} inputs, gets {width}", l.n_in)));
        }
        width = l.n_out;
    }
    let mut voltages: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.n_out]).collect();
    let mut trains: Vec<SpikeTrain> = layers.iter().map(|l| SpikeTrain::zeros(steps, l.n_out)).collect();
    for t in 0..steps {
        for (k, l) in layers.iter().enumerate() {
            let active: Vec<usize> = {
                let row = if k == 0 { input.row(t) } else { trains[k - 1].row(t) };
                row.iter().enumerate().filter_map(|(i, &s)| s.then_some(i)).collect()
            };
            for j in 0..l.n_out {
                let w = l.row(j);
                let v = &mut voltages[k][j];
                *v += l.biases[j] + active.iter().map(|&i| w[i]).sum::<f64>();
                let spike = *v >= 1.0 - FIRE_TOLERANCE;
                if spike {
                    match reset {
                        ResetMode::Hard => *v = 0.0,
                        ResetMode::Soft => *v -= 1.0,
                    }
                }
                trains[k].set(t, j, spike);
            }
        }
    }
    Ok(trains)
}

/// Spike count of one IF neuron under constant per-step drive.
pub fn if_neuron_count(drive: f64, steps: usize, reset: ResetMode) -> u32 {
    let layer = DenseLayer {
        n_in: 0,
        n_out: 1,
        weights: Vec::new(),
        biases: vec![drive],
        activation: Activation::Relu,
    };
    let trains = if_forward(&[layer], &SpikeTrain::zeros(steps, 0), reset).expect("shapes agree");
    trains[0].counts()[0]
}

/// Index of the factor with the highest score; ties go to the larger factor.
pub fn best_factor(factors: &[f64], scores: &[f64]) -> Result<usize> {
    ensure_len("grid-search scores", factors.len(), scores.len())?;
    if factors.is_empty() {
        return Err(Error::Config("grid search needs at least one factor".into()));
    }
    let mut best = 0;
    for i in 1..factors.len() {
        let better = scores[i] > scores[best] || (scores[i] == scores[best] && factors[i] > factors[best]);
        if better {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub factors: Vec<f64>,
    pub stats: Vec<EvalStats>,
    pub best: usize,
}

impl GridSearch {
    pub fn best_factor(&self) -> f64 {
        self.factors[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("factor,return_mean,return_std,selected\n");
        for (i, (f, s)) in self.factors.iter().zip(&self.stats).enumerate() {
            out.push_str(&format!("{f},{},{},{}\n", s.mean, s.std, u8::from(i == self.best)));
        }
        out
    }
}

/// Evaluates every factor on the same seeded episodes.
pub fn grid_search_scale(net: &ConvertedSnn, env: &mut dyn Env, factors: &[f64], episodes: usize, seed: u64) -> Result<GridSearch> {
    let mut stats = Vec::with_capacity(factors.len());
    for &f in factors {
        let candidate = net.with_scale(f)?;
        stats.push(evaluate(|obs| candidate.act(obs), env, episodes, seed)?);
    }
    let scores: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    let best = best_factor(factors, &scores)?;
    Ok(GridSearch {
        factors: factors.to_vec(),
        stats,
        best,
    })
}

impl Persist for ConvertedSnn {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        self.encoder.store(&format!("{prefix}.encoder"), table);
        for (k, (l, s)) in self.layers.iter().zip(&self.source).enumerate() {
            table.insert_f64(format!("{prefix}.layers.{k}.weights"), &[l.n_out, l.n_in], &l.weights);
            table.insert_f64(format!("{prefix}.layers.{k}.biases"), &[l.n_out], &l.biases);
            table.insert_f64(format!("{prefix}.source.{k}.weights"), &[s.n_out, s.n_in], &s.weights);
            table.insert_f64(format!("{prefix}.source.{k}.biases"), &[s.n_out], &s.biases);
        }
        let r = &self.readout;
        table.insert_f64(format!("{prefix}.readout.weights"), &[r.n_out, r.n_in], &r.weights);
        table.insert_f64(format!("{prefix}.readout.biases"), &[r.n_out], &r.biases);
        let mut lambdas = vec![self.profile.input];
        lambdas.extend_from_slice(&self.profile.layers);
        table.insert_f64(format!("{prefix}.lambda"), &[lambdas.len()], &lambdas);
        table.insert_f64(format!("{prefix}.scale"), &[1], &[self.scale]);
        table.insert_f64(format!("{prefix}.action_mid"), &[self.action_mid.len()], &self.action_mid);
        table.insert_f64(
            format!("{prefix}.action_half_range"),
            &[self.action_half_range.len()],
            &self.action_half_range,
        );
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        self.encoder.restore(&format!("{prefix}.encoder"), table)?;
        for (k, (l, s)) in self.layers.iter_mut().zip(&mut self.source).enumerate() {
            table.read_into(&format!("{prefix}.layers.{k}.weights"), &[l.n_out, l.n_in], &mut l.weights)?;
            table.read_into(&format!("{prefix}.layers.{k}.biases"), &[l.n_out], &mut l.biases)?;
            table.read_into(&format!("{prefix}.source.{k}.weights"), &[s.n_out, s.n_in], &mut s.weights)?;
            table.read_into(&format!("{prefix}.source.{k}.biases"), &[s.n_out], &mut s.biases)?;
        }
        let r = &mut self.readout;
        table.read_into(&format!("{prefix}.readout.weights"), &[r.n_out, r.n_in], &mut r.weights)?;
        table.read_into(&format!("{prefix}.readout.biases"), &[r.n_out], &mut r.biases)?;
        let n = self.profile.layers.len() + 1;
        let lambdas = table.f64s(&format!("{prefix}.lambda"), &[n])?;
        self.profile.input = lambdas[0];
        self.profile.layers.copy_from_slice(&lambdas[1..]);
        self.scale = table.f64s(&format!("{prefix}.scale"), &[1])?[0];
        self.action_mid.restore(&format!("{prefix}.action_mid"), table)?;
        self.action_half_range.restore(&format!("{prefix}.action_half_range"), table)
    }
}

/// Builds a fresh converted network from the same source actor shape, for
/// restoring from a checkpoint.
pub fn converted_template(dnn: &MlpActor, reset: ResetMode, timesteps: usize) -> Result<ConvertedSnn> {
    let (_, hidden, _) = spiking_part(dnn)?;
    let profile = ActivationProfile {
        input: 1.0,
        layers: vec![1.0; hidden.len()],
    };
    convert(dnn, &profile, reset, timesteps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Step, TaskDescriptor};
    use proptest::prelude::*;

    fn random_population_actor(seed: u64, widths: &[usize]) -> Result<MlpActor> {
        use crate::envs::TaskKind;
        use crate::popcode::EncoderMode;
        use crate::popsan::PopSanConfig;
        use crate::snn::NeuronConfig;
        let task = TaskKind::Pendulum.descriptor();
        let cfg = PopSanConfig {
            obs_ranges: task.obs_ranges.clone(),
            act_dim: task.act_dim,
            pop_in: 4,
            pop_out: 4,
            hidden: widths.to_vec(),
            timesteps: 5,
            neuron: NeuronConfig::default(),
            encoder_mode: EncoderMode::Deterministic,
            epsilon: 1e-3,
            overlap: 1.0,
        };
        let mut rng = rng::stream(seed, rng::INIT);
        let mut actor = MlpActor::population(&task, &cfg, &mut rng)?;
        // Positive biases keep every layer alive on any input.
        for l in &mut actor.net.layers {
            l.biases.iter_mut().for_each(|b| *b = b.abs() + 0.05);
        }
        Ok(actor)
    }

    fn profile_of(actor: &MlpActor, n: usize) -> (Vec<Vec<f64>>, ActivationProfile) {
        let obs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let th = i as f64 * 0.7;
                vec![th.cos(), th.sin(), (i as f64 * 1.3).sin() * 6.0]
            })
            .collect();
        let p = collect_max_activations(actor, &obs).unwrap();
        (obs, p)
    }

    #[test]
    fn single_observation_profile_is_its_activations() {
        let actor = random_population_actor(0, &[6]).unwrap();
        let obs = vec![0.5, -0.2, 1.0];
        let p = collect_max_activations(&actor, std::slice::from_ref(&obs)).unwrap();
        let x = compute_stimulation(&obs, actor.encoder.as_ref().unwrap()).unwrap();
        let acts = relu_forward(&actor.net.layers[..2], &x);
        assert_eq!(p.input, max_of(&x));
        assert_eq!(p.layers, vec![max_of(&acts[0]), max_of(&acts[1])]);
        assert!(collect_max_activations(&actor, &[]).is_err());
    }

    #[test]
    fn profile_is_monotone_in_the_set() {
        let actor = random_population_actor(1, &[6, 5]).unwrap();
        let (obs, full) = profile_of(&actor, 40);
        let sub = collect_max_activations(&actor, &obs[..10]).unwrap();
        assert!(full.input >= sub.input);
        assert!(full.layers.iter().zip(&sub.layers).all(|(f, s)| f >= s));
    }

    #[test]
    fn zero_profile_is_rejected() {
        let mut actor = random_population_actor(2, &[4]).unwrap();
        for l in &mut actor.net.layers {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
        let (_, p) = profile_of(&actor, 5);
        assert_eq!(p.layers, vec![0.0, 0.0]);
        assert!(convert(&actor, &p, ResetMode::Soft, 5).is_err());
    }

    #[test]
    fn rescale_formulas() {
        let l = DenseLayer {
            n_in: 2,
            n_out: 1,
            weights: vec![1.0, -2.0],
            biases: vec![4.0],
            activation: Activation::Relu,
        };
        let same = rescale_layers(std::slice::from_ref(&l), 1.0, &[1.0]).unwrap();
        assert_eq!(same[0], l);
        let r = rescale_layers(&[l], 2.0, &[4.0]).unwrap();
        assert_eq!(r[0].weights, vec![0.5, -1.0]);
        assert_eq!(r[0].biases, vec![1.0]);
    }

    #[test]
    fn rescaled_relu_network_is_equivalent() {
        for seed in 0..10 {
            let actor = random_population_actor(seed, &[8, 6]).unwrap();
            let (obs, p) = profile_of(&actor, 30);
            let (_, hidden, _) = spiking_part(&actor).unwrap();
            let scaled = rescale_layers(hidden, p.input, &p.layers).unwrap();
            for o in &obs {
                let x = compute_stimulation(o, actor.encoder.as_ref().unwrap()).unwrap();
                let orig = relu_forward(hidden, &x);
                let xs: Vec<f64> = x.iter().map(|a| a / p.input).collect();
                let resc = relu_forward(&scaled, &xs);
                for (k, (a, b)) in orig.iter().zip(&resc).enumerate() {
                    for (a, b) in a.iter().zip(b) {
                        assert!((a - b * p.layers[k]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn reset_examples() {
        for reset in [ResetMode::Hard, ResetMode::Soft] {
            assert_eq!(if_neuron_count(0.0, 10, reset), 0);
            assert_eq!(if_neuron_count(1.0, 10, reset), 10);
            assert_eq!(if_neuron_count(1.5, 4, reset), 4);
        }
        // 0.6 per step: soft keeps the residual, hard discards it.
        assert_eq!(if_neuron_count(0.6, 5, ResetMode::Soft), 3);
        assert_eq!(if_neuron_count(0.6, 5, ResetMode::Hard), 2);
        assert_eq!(if_neuron_count(0.6, 100, ResetMode::Soft), 60);
    }

    #[test]
    fn two_neuron_rates_approach_activations() {
        // Input neuron at rate 0.5 drives two ReLU units with activations
        // 0.5 * 1.2 - 0.1 = 0.5 and 0.5 * 0.4 + 0.05 = 0.25.
        let layer = DenseLayer {
            n_in: 1,
            n_out: 2,
            weights: vec![1.2, 0.4],
            biases: vec![-0.1, 0.05],
            activation: Activation::Relu,
        };
        for steps in [10, 100, 1000] {
            let input = encode_deterministic(&[0.5], steps, 1e-3);
            let trains = if_forward(std::slice::from_ref(&layer), &input, ResetMode::Soft).unwrap();
            let rates: Vec<f64> = trains[0].counts().iter().map(|&c| f64::from(c) / steps as f64).collect();
            assert!((rates[0] - 0.5).abs() <= 2.0 / steps as f64, "{rates:?}");
            assert!((rates[1] - 0.25).abs() <= 2.0 / steps as f64, "{rates:?}");
        }
    }

    #[test]
    fn grid_search_tie_breaks_and_single_factor() {
        assert_eq!(best_factor(&DEFAULT_FACTORS, &[1.0; 10]).unwrap(), 9);
        assert_eq!(best_factor(&[0.3], &[-5.0]).unwrap(), 0);
        let scores: Vec<f64> = DEFAULT_FACTORS.iter().map(|f| -(f - 0.5_f64).abs()).collect();
        assert_eq!(DEFAULT_FACTORS[best_factor(&DEFAULT_FACTORS, &scores).unwrap()], 0.5);
        assert!(best_factor(&[], &[]).is_err());
    }

    /// Pays the negative distance of the first action from 0.5 for one step.
    struct Target {
        desc: TaskDescriptor,
    }

    impl Env for Target {
        fn descriptor(&self) -> &TaskDescriptor {
            &self.desc
        }

        fn reset(&mut self, _seed: u64) -> Vec<f64> {
            vec![0.0, 1.0, 0.0]
        }

        fn step(&mut self, action: &[f64]) -> Result<Step> {
            Ok(Step {
                obs: vec![0.0, 1.0, 0.0],
                reward: -(action[0] - 0.5).abs(),
                terminal: true,
                truncated: false,
            })
        }
    }

    #[test]
    fn grid_search_on_a_constant_env_picks_largest() {
        let actor = random_population_actor(3, &[6]).unwrap();
        let (_, p) = profile_of(&actor, 20);
        let net = convert(&actor, &p, ResetMode::Soft, 5).unwrap();
        let mut env = Target {
            desc: TaskDescriptor {
                name: "target".into(),
                ..crate::envs::TaskKind::Pendulum.descriptor()
            },
        };
        // A network whose readout ignores the rates gives equal returns.
        let mut flat = net.clone();
        flat.readout.weights.fill(0.0);
        let gs = grid_search_scale(&flat, &mut env, &DEFAULT_FACTORS, 2, 0).unwrap();
        assert_eq!(gs.best_factor(), 1.0);
        assert_eq!(gs.to_csv().lines().count(), 11);
        let gs = grid_search_scale(&net, &mut env, &[0.5], 1, 0).unwrap();
        assert_eq!(gs.best_factor(), 0.5);
    }

    #[test]
    fn converted_network_persists() {
        let actor = random_population_actor(4, &[6, 5]).unwrap();
        let (_, p) = profile_of(&actor, 20);
        let net = convert(&actor, &p, ResetMode::Hard, 25).unwrap().with_scale(0.7).unwrap();
        let mut table = TensorTable::new();
        net.store("snn", &mut table);
        let mut fresh = converted_template(&actor, ResetMode::Hard, 25).unwrap();
        fresh.restore("snn", &table).unwrap();
        assert_eq!(fresh, net);
    }

    proptest! {
        #[test]
        fn rates_never_exceed_one(seed in any::<u64>(), steps in 1usize..40) {
            let actor = random_population_actor(seed, &[6]).unwrap();
            let (_, p) = profile_of(&actor, 10);
            let net = convert(&actor, &p, ResetMode::Soft, steps).unwrap().with_scale(0.1).unwrap();
            let trains = if_forward(&net.layers, &net.encode(&[1.0, 0.0, 3.0]).unwrap(), net.reset).unwrap();
            for t in &trains {
                prop_assert!(t.counts().iter().all(|&c| c as usize <= steps));
            }
        }

        #[test]
        fn soft_reset_never_fires_less(drive in 0.0f64..1.0, steps in 1usize..200) {
            prop_assert!(if_neuron_count(drive, steps, ResetMode::Soft) >= if_neuron_count(drive, steps, ResetMode::Hard));
        }
    }
}
