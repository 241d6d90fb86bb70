//! The population-coded spiking actor: Gaussian population encoder, a stack
//! of LIF layers ending in the output populations, and an affine decoder.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mlp::uniform_init;
use crate::optim::Parameters;
use crate::popcode::{
    compute_stimulation, encode, firing_rates, init_encoder, DecoderParams, EncoderMode, EncoderParams,
};
use crate::snn::{snn_forward, validate_stack, ForwardTrace, LifLayerParams, NeuronConfig, SpikeTrain};

/// Architecture and neuron constants of a PopSAN.
#[derive(Debug, Clone, PartialEq)]
pub struct PopSanConfig {
    pub obs_ranges: Vec<(f64, f64)>,
    pub act_dim: usize,
    pub pop_in: usize,
    pub pop_out: usize,
    pub hidden: Vec<usize>,
    pub timesteps: usize,
    pub neuron: NeuronConfig,
    pub encoder_mode: EncoderMode,
    pub epsilon: f64,
    pub overlap: f64,
}

impl PopSanConfig {
    pub fn obs_dim(&self) -> usize {
        self.obs_ranges.len()
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.obs_dim() * self.pop_in];
        widths.extend_from_slice(&self.hidden);
        widths.push(self.act_dim * self.pop_out);
        widths
    }
}

/// All trainable tensors of a PopSAN.
#[derive(Debug, Clone, PartialEq)]
pub struct PopSanParams {
    pub encoder: EncoderParams,
    pub layers: Vec<LifLayerParams>,
    pub decoder: DecoderParams,
    pub timesteps: usize,
}

impl PopSanParams {
    pub fn init<R: Rng + ?Sized>(cfg: &PopSanConfig, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(cfg)?;
        for layer in &mut params.layers {
            layer.weights = uniform_init(rng, layer.n_in(), layer.weights.len());
            layer.biases = uniform_init(rng, layer.n_in(), layer.n_out());
        }
        let p = cfg.pop_out;
        params.decoder.weights = uniform_init(rng, p, params.decoder.weights.len());
        params.decoder.biases = uniform_init(rng, p, cfg.act_dim);
        Ok(params)
    }

    /// Encoder at its initial receptive fields, everything else zero.
    pub fn zeros(cfg: &PopSanConfig) -> Result<Self> {
        if cfg.timesteps < 1 {
            return Err(Error::Config("PopSAN needs at least one timestep".into()));
        }
        cfg.neuron.validate()?;
        let encoder = init_encoder(&cfg.obs_ranges, cfg.pop_in, cfg.overlap, cfg.epsilon, cfg.encoder_mode)?;
        let widths = cfg.layer_widths();
        let layers: Vec<LifLayerParams> = widths
            .windows(2)
            .map(|w| LifLayerParams::zeros(w[0], w[1], cfg.neuron))
            .collect();
        validate_stack(&layers, encoder.width())?;
        let decoder = DecoderParams::new(
            cfg.act_dim,
            cfg.pop_out,
            vec![0.0; cfg.act_dim * cfg.pop_out],
            vec![0.0; cfg.act_dim],
        )?;
        Ok(Self {
            encoder,
            layers,
            decoder,
            timesteps: cfg.timesteps,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        validate_stack(&self.layers, self.encoder.width())?;
        let out = self.layers.last().map_or(0, LifLayerParams::n_out);
        if out != self.decoder.width() {
            return Err(Error::Config(format!(
                "output layer has {out} neurons but the decoder reads {}",
                self.decoder.width()
            )));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.decoder.act_dim()
    }

    /// Input populations plus every LIF neuron.
    pub fn total_neurons(&self) -> usize {
        self.encoder.width() + self.layers.iter().map(LifLayerParams::n_out).sum::<usize>()
    }

    /// Full forward pass, recording what the backward pass needs.
    pub fn forward<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<PopSanTrace> {
        let stimulation = compute_stimulation(obs, &self.encoder)?;
        let input = encode(&stimulation, &self.encoder, self.timesteps, rng);
        self.forward_spikes(obs, stimulation, input)
    }

    /// Forward pass from an already generated input raster.
    pub fn forward_spikes(&self, obs: &[f64], stimulation: Vec<f64>, input: SpikeTrain) -> Result<PopSanTrace> {
        if input.steps() != self.timesteps {
            return Err(Error::Config(format!(
                "input raster has {} steps, network runs {}",
                input.steps(),
                self.timesteps
            )));
        }
        let snn = snn_forward(&self.layers, &input)?;
        let rates = firing_rates(snn.output());
        let action = self.decoder.apply(&rates);
        Ok(PopSanTrace {
            obs: obs.to_vec(),
            stimulation,
            snn,
            rates,
            action,
        })
    }

    pub fn zero_grads(&self) -> PopSanGradients {
        PopSanGradients {
            means: vec![0.0; self.encoder.means.len()],
            stds: vec![0.0; self.encoder.stds.len()],
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
            decoder_weights: vec![0.0; self.decoder.weights.len()],
            decoder_biases: vec![0.0; self.decoder.biases.len()],
        }
    }

    /// Applies the receptive field floor after an update.
    pub fn post_update(&mut self) {
        self.encoder.clamp_stds();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopSanTrace {
    pub obs: Vec<f64>,
    pub stimulation: Vec<f64>,
    pub snn: ForwardTrace,
    pub rates: Vec<f64>,
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Gradients laid out exactly like [`PopSanParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct PopSanGradients {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub layers: Vec<LayerGrads>,
    pub decoder_weights: Vec<f64>,
    pub decoder_biases: Vec<f64>,
}

impl PopSanGradients {
    pub fn freeze_encoder(&mut self) {
        self.means.fill(0.0);
        self.stds.fill(0.0);
    }
}

impl Parameters for PopSanParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.encoder.means.as_slice(), self.encoder.stds.as_slice()];
        for l in &self.layers {
            out.push(&l.weights);
            out.push(&l.biases);
        }
        out.push(&self.decoder.weights);
        out.push(&self.decoder.biases);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.encoder.means.as_mut_slice(), self.encoder.stds.as_mut_slice()];
        for l in &mut self.layers {
            out.push(&mut l.weights);
            out.push(&mut l.biases);
        }
        out.push(&mut self.decoder.weights);
        out.push(&mut self.decoder.biases);
        out
    }
}

impl Parameters for PopSanGradients {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.means.as_slice(), self.stds.as_slice()];
        for l in &self.layers {
            out.push(&l.weights);
            out.push(&l.biases);
        }
        out.push(&self.decoder_weights);
        out.push(&self.decoder_biases);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.means.as_mut_slice(), self.stds.as_mut_slice()];
        for l in &mut self.layers {
            out.push(&mut l.weights);
            out.push(&mut l.biases);
        }
        out.push(&mut self.decoder_weights);
        out.push(&mut self.decoder_biases);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_config() -> PopSanConfig {
        PopSanConfig {
            obs_ranges: vec![(-1.0, 1.0), (-2.0, 2.0)],
            act_dim: 2,
            pop_in: 4,
            pop_out: 3,
            hidden: vec![5],
            timesteps: 5,
            neuron: NeuronConfig::default(),
            encoder_mode: EncoderMode::Deterministic,
            epsilon: 1e-3,
            overlap: 1.0,
        }
    }

    #[test]
    fn init_shapes_follow_config() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = PopSanParams::init(&cfg, &mut rng).unwrap();
        p.validate().unwrap();
        assert_eq!(p.layers.len(), 2);
        assert_eq!((p.layers[0].n_in(), p.layers[0].n_out()), (8, 5));
        assert_eq!((p.layers[1].n_in(), p.layers[1].n_out()), (5, 6));
        assert_eq!(p.total_neurons(), 8 + 5 + 6);
        let g = p.zero_grads();
        let shapes = |t: Vec<&[f64]>| t.iter().map(|x| x.len()).collect::<Vec<_>>();
        assert_eq!(shapes(p.tensors()), shapes(g.tensors()));
    }

    #[test]
    fn forward_decodes_rates() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = PopSanParams::init(&cfg, &mut rng).unwrap();
        let trace = p.forward(&[0.2, -0.5], &mut rng).unwrap();
        assert_eq!(trace.action.len(), 2);
        assert!(trace.rates.iter().all(|&r| (0.0..=1.0).contains(&r)));
        assert_eq!(trace.action, p.decoder.apply(&trace.rates));
    }
}
