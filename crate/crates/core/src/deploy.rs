//! Simulated neuromorphic deployment: layer-wise fixed-point quantization,
//! one-timestep-per-layer pipelined execution, and synaptic operation
//! counts.
//!
//! The population encoder and the decoder stay in floating point on the
//! host; only the LIF stack runs on the simulated chip.

use std::fmt::Write as _;

use rand::Rng;

use crate::checkpoint::{Persist, TensorTable};
use crate::drl::{evaluate, EvalStats};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::popcode::{compute_stimulation, encode, firing_rates};
use crate::popsan::PopSanParams;
use crate::rng;
use crate::snn::{lif_layer_step, LayerState, LifLayerParams, SpikeTrain};

/// Fractional bits of the integer membrane state.
pub const FRAC_BITS: u32 = 24;
const ONE: i64 = 1 << FRAC_BITS;

pub const MIN_BITS: u32 = 4;
pub const MAX_BITS: u32 = 16;

/// Largest representable magnitude of a signed `bits`-wide weight.
pub fn max_level(bits: u32) -> i64 {
    (1i64 << (bits - 1)) - 1
}

/// Rounds half away from zero.
pub fn round_half_away(x: f64) -> i64 {
    x.round() as i64
}

/// `scale = max|w| / (2^(B-1) - 1)`; an all-zero tensor gets scale 1.
pub fn quantize_weights(weights: &[f64], bits: u32) -> Result<(Vec<i32>, f64)> {
    check_bits(bits)?;
    let max = weights.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    if !max.is_finite() {
        return Err(Error::NonFinite("layer weights".into()));
    }
    let scale = if max == 0.0 { 1.0 } else { max / max_level(bits) as f64 };
    let q = weights.iter().map(|w| round_half_away(w / scale) as i32).collect();
    Ok((q, scale))
}

fn check_bits(bits: u32) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(Error::Config(format!("bit width {bits} outside {MIN_BITS}..={MAX_BITS}")));
    }
    Ok(())
}

fn to_fixed(x: f64) -> i64 {
    round_half_away(x * ONE as f64)
}

/// An LIF layer in integer units of `scale`. Weights, biases and threshold
/// share the scale, so spike decisions match the real-valued layer up to
/// rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub bits: u32,
    pub weights: Vec<i32>,
    pub biases: Vec<i32>,
    pub threshold: i32,
    pub scale: f64,
    /// Decays with `FRAC_BITS` fractional bits.
    pub current_decay: i64,
    pub voltage_decay: i64,
}

fn to_i32(x: i64, what: &str) -> Result<i32> {
    i32::try_from(x).map_err(|_| Error::Overflow(format!("{what} does not fit in 32 bits")))
}

pub fn quantize_layer(layer: &LifLayerParams, bits: u32) -> Result<QuantizedLayer> {
    let (weights, scale) = quantize_weights(&layer.weights, bits)?;
    let biases = layer
        .biases
        .iter()
        .map(|b| to_i32(round_half_away(b / scale), "quantized bias"))
        .collect::<Result<_>>()?;
    Ok(QuantizedLayer {
        n_in: layer.n_in(),
        n_out: layer.n_out(),
        bits,
        weights,
        biases,
        threshold: to_i32(round_half_away(layer.neuron.threshold / scale), "quantized threshold")?,
        scale,
        current_decay: to_fixed(layer.neuron.current_decay),
        voltage_decay: to_fixed(layer.neuron.voltage_decay),
    })
}

pub fn quantize_layerwise(layers: &[LifLayerParams], bits: u32) -> Result<Vec<QuantizedLayer>> {
    layers.iter().map(|l| quantize_layer(l, bits)).collect()
}

/// Integer membrane state, `FRAC_BITS` fractional bits.
#[derive(Debug, Clone, PartialEq)]
pub struct IntState {
    pub current: Vec<i64>,
    pub voltage: Vec<i64>,
    pub spikes: Vec<bool>,
}

fn overflow(what: &str) -> Error {
    Error::Overflow(what.to_string())
}

/// `(a * b) >> FRAC_BITS`, rounding half up.
fn mul_fixed(a: i64, b: i64) -> Result<i64> {
    let p = (i128::from(a) * i128::from(b) + i128::from(ONE / 2)) >> FRAC_BITS;
    i64::try_from(p).map_err(|_| overflow("membrane decay"))
}

/// A layer that advances one timestep at a time.
pub trait SpikingLayer {
    type State;

    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    fn zero_state(&self) -> Self::State;
    fn step(&self, state: &mut Self::State, input: &[bool]) -> Result<()>;
    fn spikes<'a>(&self, state: &'a Self::State) -> &'a [bool];
}

impl SpikingLayer for LifLayerParams {
    type State = LayerState;

    fn n_in(&self) -> usize {
        LifLayerParams::n_in(self)
    }

    fn n_out(&self) -> usize {
        LifLayerParams::n_out(self)
    }

    fn zero_state(&self) -> LayerState {
        LayerState::zeros(self.n_out())
    }

    fn step(&self, state: &mut LayerState, input: &[bool]) -> Result<()> {
        *state = lif_layer_step(self, state, input)?;
        Ok(())
    }

    fn spikes<'a>(&self, state: &'a LayerState) -> &'a [bool] {
        &state.spikes
    }
}

impl SpikingLayer for QuantizedLayer {
    type State = IntState;

    fn n_in(&self) -> usize {
        self.n_in
    }

    fn n_out(&self) -> usize {
        self.n_out
    }

    fn zero_state(&self) -> IntState {
        IntState {
            current: vec![0; self.n_out],
            voltage: vec![0; self.n_out],
            spikes: vec![false; self.n_out],
        }
    }

    fn step(&self, state: &mut IntState, input: &[bool]) -> Result<()> {
        if input.len() != self.n_in {
            return Err(Error::Config(format!("layer expects {} inputs, got {}", self.n_in, input.len())));
        }
        let threshold = i64::from(self.threshold) << FRAC_BITS;
        for j in 0..self.n_out {
            let row = &self.weights[j * self.n_in..(j + 1) * self.n_in];
            let drive: i64 = row
                .iter()
                .zip(input)
                .filter(|(_, &s)| s)
                .map(|(&w, _)| i64::from(w))
                .sum::<i64>()
                + i64::from(self.biases[j]);
            let drive = drive.checked_mul(ONE).ok_or_else(|| overflow("synaptic input"))?;
            let c = mul_fixed(self.current_decay, state.current[j])?
                .checked_add(drive)
                .ok_or_else(|| overflow("synaptic current"))?;
            let carried = if state.spikes[j] {
                0
            } else {
                mul_fixed(self.voltage_decay, state.voltage[j])?
            };
            let v = carried.checked_add(c).ok_or_else(|| overflow("membrane voltage"))?;
            state.current[j] = c;
            state.voltage[j] = v;
            state.spikes[j] = v > threshold;
        }
        Ok(())
    }

    fn spikes<'a>(&self, state: &'a IntState) -> &'a [bool] {
        &state.spikes
    }
}

/// Spike rasters of a pipelined run. Layer `k` (from 1) starts at pipeline
/// step `k` and reads layer `k-1`'s spikes from the previous step, so every
/// raster has `T + K` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTrace {
    pub timesteps: usize,
    pub layers: Vec<SpikeTrain>,
}

impl PipelineTrace {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Total latency in pipeline steps.
    pub fn latency(&self) -> usize {
        self.timesteps + self.depth()
    }

    /// The `T` rows of layer `k` (from 0) in which it was computing.
    pub fn window(&self, k: usize) -> SpikeTrain {
        let raster = &self.layers[k];
        let mut out = SpikeTrain::zeros(self.timesteps, raster.width());
        for t in 0..self.timesteps {
            out.row_mut(t).copy_from_slice(raster.row(t + k + 1));
        }
        out
    }

    pub fn output_window(&self) -> SpikeTrain {
        self.window(self.depth() - 1)
    }
}

pub fn pipelined_forward<L: SpikingLayer>(layers: &[L], input: &SpikeTrain) -> Result<PipelineTrace> {
    let steps = input.steps();
    if steps < 1 {
        return Err(Error::Config("pipelined run needs at least one timestep".into()));
    }
    if layers.is_empty() {
        return Err(Error::Config("pipelined run needs at least one layer".into()));
    }
    let mut width = input.width();
    for (k, l) in layers.iter().enumerate() {
        if l.n_in() != width {
            return Err(Error::Config(format!("layer {k} expects {} inputs, gets {width}", l.n_in())));
        }
        width = l.n_out();
    }
    let depth = layers.len();
    let total = steps + depth;
    let mut states: Vec<L::State> = layers.iter().map(SpikingLayer::zero_state).collect();
    let mut rasters: Vec<SpikeTrain> = layers.iter().map(|l| SpikeTrain::zeros(total, l.n_out())).collect();
    for tau in 1..total {
        // Deepest first, so each layer reads its source's previous step.
        for k in (0..depth).rev() {
            let start = k + 1;
            if tau < start || tau >= start + steps {
                continue;
            }
            let src: Vec<bool> = if k == 0 {
                input.row(tau - 1).to_vec()
            } else {
                rasters[k - 1].row(tau - 1).to_vec()
            };
            layers[k].step(&mut states[k], &src)?;
            rasters[k].row_mut(tau).copy_from_slice(layers[k].spikes(&states[k]));
        }
    }
    Ok(PipelineTrace {
        timesteps: steps,
        layers: rasters,
    })
}

/// Synaptic operation and neuron update counts over some inferences.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OpsReport {
    /// One per delivered spike per target neuron.
    pub synaptic_ops: u64,
    pub neuron_updates: u64,
    /// `[layer][timestep]`, with the input layer first.
    pub spikes: Vec<Vec<u64>>,
    pub inferences: u64,
}

impl OpsReport {
    pub fn merge(&mut self, other: &OpsReport) {
        self.synaptic_ops += other.synaptic_ops;
        self.neuron_updates += other.neuron_updates;
        self.inferences += other.inferences;
        if self.spikes.is_empty() {
            self.spikes = other.spikes.clone();
        } else {
            for (a, b) in self.spikes.iter_mut().zip(&other.spikes) {
                for (a, b) in a.iter_mut().zip(b) {
                    *a += b;
                }
            }
        }
    }

    pub fn synaptic_ops_per_inference(&self) -> f64 {
        self.synaptic_ops as f64 / self.inferences.max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "inferences,{}", self.inferences);
        let _ = writeln!(out, "synaptic_ops,{}", self.synaptic_ops);
        let _ = writeln!(out, "neuron_updates,{}", self.neuron_updates);
        let _ = writeln!(out, "synaptic_ops_per_inference,{}", self.synaptic_ops_per_inference());
        for (k, row) in self.spikes.iter().enumerate() {
            for (t, n) in row.iter().enumerate() {
                let _ = writeln!(out, "spikes.layer{k}.t{t},{n}");
            }
        }
        out
    }
}

/// Counts one inference. `rasters[0]` is the input raster and `fan_out[k]`
/// the number of targets of every neuron in `rasters[k]`.
pub fn count_ops(rasters: &[&SpikeTrain], fan_out: &[usize]) -> Result<OpsReport> {
    if rasters.len() != fan_out.len() {
        return Err(Error::Config("one fan-out per raster is required".into()));
    }
    let mut report = OpsReport {
        inferences: 1,
        ..OpsReport::default()
    };
    for (k, (r, &f)) in rasters.iter().zip(fan_out).enumerate() {
        let per_step: Vec<u64> = (0..r.steps())
            .map(|t| r.row(t).iter().filter(|&&s| s).count() as u64)
            .collect();
        report.synaptic_ops += per_step.iter().sum::<u64>() * f as u64;
        if k > 0 {
            report.neuron_updates += (r.width() * r.steps()) as u64;
        }
        report.spikes.push(per_step);
    }
    Ok(report)
}

/// A PopSAN whose LIF stack is quantized for the simulated chip.
#[derive(Debug, Clone, PartialEq)]
pub struct DeployedPopSan {
    pub params: PopSanParams,
    /// `None` runs the stack in floating point.
    pub quantized: Option<Vec<QuantizedLayer>>,
}

impl DeployedPopSan {
    pub fn new(params: PopSanParams, bits: Option<u32>) -> Result<Self> {
        let quantized = bits.map(|b| quantize_layerwise(&params.layers, b)).transpose()?;
        Ok(Self { params, quantized })
    }

    pub fn bits(&self) -> Option<u32> {
        self.quantized.as_ref().and_then(|q| q.first()).map(|l| l.bits)
    }

    /// One control step: host encoding, pipelined stack, host decoding.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, OpsReport)> {
        let p = &self.params;
        let stimulation = compute_stimulation(obs, &p.encoder)?;
        let input = encode(&stimulation, &p.encoder, p.timesteps, rng);
        let trace = match &self.quantized {
            Some(q) => pipelined_forward(q, &input)?,
            None => pipelined_forward(&p.layers, &input)?,
        };
        let windows: Vec<SpikeTrain> = (0..trace.depth()).map(|k| trace.window(k)).collect();
        let mut rasters = vec![&input];
        rasters.extend(windows.iter());
        let mut fan_out: Vec<usize> = p.layers.iter().map(LifLayerParams::n_out).collect();
        // Output spikes leave the chip for the host decoder.
        fan_out.push(0);
        let ops = count_ops(&rasters, &fan_out)?;
        let action = p.decoder.apply(&firing_rates(&trace.output_window()));
        Ok((action, ops))
    }
}

/// Evaluates the deployed network with the same episode seeds and encoder
/// stream as the floating-point evaluation.
pub fn quantized_eval(net: &DeployedPopSan, env: &mut dyn Env, episodes: usize, seed: u64) -> Result<(EvalStats, OpsReport)> {
    let mut enc = rng::stream(seed, rng::ENCODER);
    let mut report = OpsReport::default();
    let stats = evaluate(
        |obs| {
            let (a, ops) = net.act(obs, &mut enc)?;
            report.merge(&ops);
            Ok(a)
        },
        env,
        episodes,
        seed,
    )?;
    Ok((stats, report))
}

impl Persist for Vec<QuantizedLayer> {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        for (k, l) in self.iter().enumerate() {
            let p = format!("{prefix}.{k}");
            table.insert_i32(format!("{p}.weights"), &[l.n_out, l.n_in], &l.weights);
            table.insert_i32(format!("{p}.biases"), &[l.n_out], &l.biases);
            table.insert_i32(format!("{p}.threshold"), &[1], &[l.threshold]);
            table.insert_i32(format!("{p}.bits"), &[1], &[l.bits as i32]);
            table.insert_f64(format!("{p}.scale"), &[1], &[l.scale]);
            table.insert_f64(
                format!("{p}.decays"),
                &[2],
                &[l.current_decay as f64, l.voltage_decay as f64],
            );
        }
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        for (k, l) in self.iter_mut().enumerate() {
            let p = format!("{prefix}.{k}");
            l.weights.copy_from_slice(table.i32s(&format!("{p}.weights"), &[l.n_out, l.n_in])?);
            l.biases.copy_from_slice(table.i32s(&format!("{p}.biases"), &[l.n_out])?);
            l.threshold = table.i32s(&format!("{p}.threshold"), &[1])?[0];
            let bits = table.i32s(&format!("{p}.bits"), &[1])?[0];
            l.bits = u32::try_from(bits).map_err(|_| Error::Malformed(format!("bit width {bits}")))?;
            check_bits(l.bits)?;
            l.scale = table.f64s(&format!("{p}.scale"), &[1])?[0];
            let d = table.f64s(&format!("{p}.decays"), &[2])?;
            l.current_decay = d[0] as i64;
            l.voltage_decay = d[1] as i64;
        }
        Ok(())
    }
}
