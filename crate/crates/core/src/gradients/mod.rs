//! Closed-form backward pass through a PopSAN.
//!
//! The loss gradient with respect to the decoded action flows through the
//! affine decoder, is spread uniformly over the output spikes of every
//! timestep, then runs backwards through time and layers:
//!
//! ```text
//! dL/dv(t) = z(v(t)) * dL/do(t) + d_v * (1 - o(t)) * dL/dv(t+1)
//! dL/dc(t) = dL/dv(t) + d_c * dL/dc(t+1)
//! dL/do_in(t) = W^T dL/dc(t)
//! ```
//!
//! with the temporal terms absent at the last step. Input spikes pass their
//! gradient straight through to the stimulation strengths, and from there
//! to the receptive field centres and widths.

mod check;
mod fd;
mod oracle;

pub use check::{gradcheck, random_instance, GradCheckReport};
pub use fd::{central_difference_check, finite_diff_check, SmoothParam, FD_STEP};
pub use oracle::{oracle_unrolled_backward, ORACLE_MAX_NEURONS, ORACLE_MAX_TIMESTEPS};

use crate::error::{ensure_len, Error, Result};
use crate::popcode::{DecoderParams, EncoderParams};
use crate::popsan::{LayerGrads, PopSanGradients, PopSanParams, PopSanTrace};
use crate::snn::{ForwardTrace, LifLayerParams};

/// Width of the rectangular pseudo-derivative window around the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    pub window: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { window: 0.5 }
    }
}

impl SurrogateConfig {
    pub fn new(window: f64) -> Result<Self> {
        if !(window > 0.0) {
            return Err(Error::Config(format!("surrogate window {window} must be positive")));
        }
        Ok(Self { window })
    }
}

/// Rectangular pseudo-derivative of the spike function: 1 inside the open
/// window `|v - V_th| < w`, 0 elsewhere.
#[inline]
pub fn surrogate_z(v: f64, threshold: f64, window: f64) -> f64 {
    if (v - threshold).abs() < window {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    /// Gradient with respect to the output firing rates.
    pub rates: Vec<f64>,
}

pub fn backward_decoder(grad_action: &[f64], rates: &[f64], dec: &DecoderParams) -> Result<DecoderGrads> {
    ensure_len("action gradient", dec.act_dim(), grad_action.len())?;
    ensure_len("firing rates", dec.width(), rates.len())?;
    let p = dec.pop_size();
    let mut weights = vec![0.0; dec.width()];
    let mut grad_rates = vec![0.0; dec.width()];
    for (i, &g) in grad_action.iter().enumerate() {
        for j in i * p..(i + 1) * p {
            weights[j] = g * rates[j];
            grad_rates[j] = g * dec.weights[j];
        }
    }
    Ok(DecoderGrads {
        weights,
        biases: grad_action.to_vec(),
        rates: grad_rates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnGrads {
    pub layers: Vec<LayerGrads>,
    /// `[T x input width]` gradient at the input spikes.
    pub input: Vec<f64>,
}

/// Which voltage gradient feeds the current gradient at step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurrentIndexing {
    /// `dL/dc(t) = dL/dv(t) + d_c dL/dc(t+1)`, matching `v(t) = ... + c(t)`.
    #[default]
    SameStep,
    /// `dL/dc(t) = dL/dv(t+1) + d_c dL/dc(t+1)`, kept only to show that it
    /// disagrees with the unrolled graph.
    NextStep,
}

/// Backpropagation through time over a recorded forward pass.
///
/// `grad_output` is the `[T x output width]` gradient at the output spikes.
pub fn backward_snn(
    trace: &ForwardTrace,
    grad_output: &[f64],
    layers: &[LifLayerParams],
    cfg: &SurrogateConfig,
) -> Result<SnnGrads> {
    backward_snn_indexed(trace, grad_output, layers, cfg, CurrentIndexing::SameStep)
}

pub fn backward_snn_indexed(
    trace: &ForwardTrace,
    grad_output: &[f64],
    layers: &[LifLayerParams],
    cfg: &SurrogateConfig,
    indexing: CurrentIndexing,
) -> Result<SnnGrads> {
    let steps = trace.timesteps();
    if trace.layers.len() != layers.len() {
        return Err(Error::Internal(format!(
            "trace records {} layers, network has {}",
            trace.layers.len(),
            layers.len()
        )));
    }
    for (k, (lt, lp)) in trace.layers.iter().zip(layers).enumerate() {
        if lt.spikes.steps() != steps || lt.currents.len() != steps * lp.n_out() || lt.voltages.len() != steps * lp.n_out() {
            return Err(Error::Internal(format!("trace of layer {k} is missing timesteps")));
        }
    }
    let out_width = layers.last().map_or(0, LifLayerParams::n_out);
    ensure_len("output spike gradient", steps * out_width, grad_output.len())?;

    let mut grads: Vec<LayerGrads> = layers
        .iter()
        .map(|l| LayerGrads {
            weights: vec![0.0; l.weights.len()],
            biases: vec![0.0; l.biases.len()],
        })
        .collect();

    let mut grad_o = grad_output.to_vec();
    for (k, layer) in layers.iter().enumerate().rev() {
        let (n_in, n_out) = (layer.n_in(), layer.n_out());
        let neuron = layer.neuron;
        let lt = &trace.layers[k];
        let g = &mut grads[k];
        let mut grad_in = vec![0.0; steps * n_in];
        let mut grad_v_next = vec![0.0; n_out];
        let mut grad_c_next = vec![0.0; n_out];
        let mut grad_c = vec![0.0; n_out];

        for t in (0..steps).rev() {
            let last = t + 1 == steps;
            let v = lt.voltage(t);
            let o = lt.spikes.row(t);
            let go = &grad_o[t * n_out..(t + 1) * n_out];
            for j in 0..n_out {
                let mut gv = surrogate_z(v[j], neuron.threshold, cfg.window) * go[j];
                let mut gc = 0.0;
                if !last {
                    if !o[j] {
                        gv += neuron.voltage_decay * grad_v_next[j];
                    }
                    gc = neuron.current_decay * grad_c_next[j];
                }
                gc += match indexing {
                    CurrentIndexing::NextStep if !last => grad_v_next[j],
                    _ => gv,
                };
                grad_v_next[j] = gv;
                grad_c[j] = gc;
            }
            grad_c_next.copy_from_slice(&grad_c);

            let active: Vec<usize> = trace
                .layer_input(k, t)
                .iter()
                .enumerate()
                .filter_map(|(i, &s)| s.then_some(i))
                .collect();
            let gi = &mut grad_in[t * n_in..(t + 1) * n_in];
            for j in 0..n_out {
                let gc = grad_c[j];
                if gc == 0.0 {
                    continue;
                }
                g.biases[j] += gc;
                let gw = &mut g.weights[j * n_in..(j + 1) * n_in];
                for &i in &active {
                    gw[i] += gc;
                }
                for (gi, w) in gi.iter_mut().zip(layer.row(j)) {
                    *gi += gc * w;
                }
            }
        }
        grad_o = grad_in;
    }

    Ok(SnnGrads {
        layers: grads,
        input: grad_o,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Gradient with respect to the stimulation strengths.
    pub stimulation: Vec<f64>,
}

/// Straight-through encoder gradient: every input spike is treated as
/// having unit derivative with respect to its stimulation strength.
pub fn backward_encoder(
    grad_input: &[f64],
    stimulation: &[f64],
    obs: &[f64],
    enc: &EncoderParams,
) -> Result<EncoderGrads> {
    let width = enc.width();
    ensure_len("stimulation", width, stimulation.len())?;
    ensure_len("observation", enc.obs_dim(), obs.len())?;
    if width == 0 || !grad_input.len().is_multiple_of(width) {
        return Err(Error::Config(format!(
            "input gradient of length {} does not tile width {width}",
            grad_input.len()
        )));
    }
    let mut grad_a = vec![0.0; width];
    for row in grad_input.chunks_exact(width) {
        for (ga, g) in grad_a.iter_mut().zip(row) {
            *ga += g;
        }
    }
    let p = enc.pop_size();
    let mut means = vec![0.0; width];
    let mut stds = vec![0.0; width];
    for idx in 0..width {
        let s = obs[idx / p];
        let (mu, sigma) = (enc.means[idx], enc.stds[idx]);
        let common = grad_a[idx] * stimulation[idx];
        let d = s - mu;
        means[idx] = common * d / (sigma * sigma);
        stds[idx] = common * d * d / (sigma * sigma * sigma);
    }
    Ok(EncoderGrads {
        means,
        stds,
        stimulation: grad_a,
    })
}

/// Gradient of the loss with respect to every PopSAN parameter, given the
/// gradient with respect to the decoded action.
pub fn popsan_backward(
    grad_action: &[f64],
    trace: &PopSanTrace,
    params: &PopSanParams,
    cfg: &SurrogateConfig,
) -> Result<PopSanGradients> {
    popsan_backward_indexed(grad_action, trace, params, cfg, CurrentIndexing::SameStep)
}

pub fn popsan_backward_indexed(
    grad_action: &[f64],
    trace: &PopSanTrace,
    params: &PopSanParams,
    cfg: &SurrogateConfig,
    indexing: CurrentIndexing,
) -> Result<PopSanGradients> {
    let steps = params.timesteps;
    if trace.snn.timesteps() != steps {
        return Err(Error::Internal("trace length differs from network timesteps".into()));
    }
    let dec = backward_decoder(grad_action, &trace.rates, &params.decoder)?;
    let grad_count: Vec<f64> = dec.rates.iter().map(|g| g / steps as f64).collect();
    let mut grad_output = Vec::with_capacity(steps * grad_count.len());
    for _ in 0..steps {
        grad_output.extend_from_slice(&grad_count);
    }
    let snn = backward_snn_indexed(&trace.snn, &grad_output, &params.layers, cfg, indexing)?;
    let enc = backward_encoder(&snn.input, &trace.stimulation, &trace.obs, &params.encoder)?;
    Ok(PopSanGradients {
        means: enc.means,
        stds: enc.stds,
        layers: snn.layers,
        decoder_weights: dec.weights,
        decoder_biases: dec.biases,
    })
}
