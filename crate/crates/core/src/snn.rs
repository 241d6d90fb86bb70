//! Current-based leaky integrate-and-fire layers and the multi-layer
//! forward pass.
//!
//! Each layer `k` updates, at timestep `t`,
//!
//! ```text
//! c(t) = d_c * c(t-1) + W * o_in(t) + b
//! v(t) = d_v * v(t-1) * (1 - o(t-1)) + c(t)
//! o(t) = v(t) > V_th
//! ```
//!
//! Spikes reach the next layer within the same timestep. The rest potential
//! is zero and the `(1 - o(t-1))` mask is the hard reset.

use crate::error::{ensure_len, Error, Result};

/// Decay factors and firing threshold shared by the neurons of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronConfig {
    pub current_decay: f64,
    pub voltage_decay: f64,
    pub threshold: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            current_decay: 0.5,
            voltage_decay: 0.75,
            threshold: 0.5,
        }
    }
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.current_decay) {
            return Err(Error::Config(format!(
                "current decay {} outside [0, 1]",
                self.current_decay
            )));
        }
        if !(0.0..=1.0).contains(&self.voltage_decay) {
            return Err(Error::Config(format!(
                "voltage decay {} outside [0, 1]",
                self.voltage_decay
            )));
        }
        // +inf is allowed: it disables spiking for the layer.
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(Error::Config(format!(
                "threshold {} must be positive",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Weights, biases and neuron constants of one fully connected LIF layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LifLayerParams {
    n_in: usize,
    n_out: usize,
    /// Row-major `[n_out x n_in]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub neuron: NeuronConfig,
}

impl LifLayerParams {
    pub fn new(
        n_in: usize,
        n_out: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        neuron: NeuronConfig,
    ) -> Result<Self> {
        let layer = Self {
            n_in,
            n_out,
            weights,
            biases,
            neuron,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn zeros(n_in: usize, n_out: usize, neuron: NeuronConfig) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
            neuron,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_out == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        ensure_len("layer weights", self.n_in * self.n_out, self.weights.len())?;
        ensure_len("layer biases", self.n_out, self.biases.len())?;
        self.neuron.validate()
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    #[inline]
    pub fn weight(&self, out: usize, input: usize) -> f64 {
        self.weights[out * self.n_in + input]
    }

    #[inline]
    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.n_in..(out + 1) * self.n_in]
    }
}

/// Binary spike raster, `steps` rows of `width` neurons.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeTrain {
    steps: usize,
    width: usize,
    data: Vec<bool>,
}

impl SpikeTrain {
    pub fn zeros(steps: usize, width: usize) -> Self {
        Self {
            steps,
            width,
            data: vec![false; steps * width],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in rows {
            ensure_len("spike row", width, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            steps: rows.len(),
            width,
            data,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[bool] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize) -> &mut [bool] {
        &mut self.data[t * self.width..(t + 1) * self.width]
    }

    #[inline]
    pub fn get(&self, t: usize, j: usize) -> bool {
        self.data[t * self.width + j]
    }

    pub fn set(&mut self, t: usize, j: usize, spike: bool) {
        self.data[t * self.width + j] = spike;
    }

    /// Spike count per neuron over all steps.
    pub fn counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.width];
        for t in 0..self.steps {
            for (c, &s) in counts.iter_mut().zip(self.row(t)) {
                *c += u32::from(s);
            }
        }
        counts
    }

    pub fn total(&self) -> u64 {
        self.data.iter().filter(|&&s| s).count() as u64
    }
}

/// Per-layer dynamic state between timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    pub spikes: Vec<bool>,
}

impl LayerState {
    pub fn zeros(width: usize) -> Self {
        Self {
            current: vec![0.0; width],
            voltage: vec![0.0; width],
            spikes: vec![false; width],
        }
    }

    pub fn width(&self) -> usize {
        self.current.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnState {
    pub layers: Vec<LayerState>,
}

impl SnnState {
    pub fn zeros(layers: &[LifLayerParams]) -> Self {
        Self {
            layers: layers.iter().map(|l| LayerState::zeros(l.n_out())).collect(),
        }
    }
}

pub fn reset_state(mut state: SnnState) -> SnnState {
    for layer in &mut state.layers {
        layer.current.fill(0.0);
        layer.voltage.fill(0.0);
        layer.spikes.fill(false);
    }
    state
}

/// One timestep of one LIF layer.
pub fn lif_layer_step(
    params: &LifLayerParams,
    prev: &LayerState,
    in_spikes: &[bool],
) -> Result<LayerState> {
    ensure_len("layer input spikes", params.n_in(), in_spikes.len())?;
    ensure_len("layer state", params.n_out(), prev.width())?;
    let mut next = LayerState::zeros(params.n_out());
    step_into(params, prev, in_spikes, &mut next);
    Ok(next)
}

fn step_into(params: &LifLayerParams, prev: &LayerState, in_spikes: &[bool], next: &mut LayerState) {
    let NeuronConfig {
        current_decay,
        voltage_decay,
        threshold,
    } = params.neuron;
    let active: Vec<usize> = in_spikes
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| s.then_some(i))
        .collect();
    for j in 0..params.n_out() {
        let row = params.row(j);
        let mut drive = 0.0;
        for &i in &active {
            drive += row[i];
        }
        let c = current_decay * prev.current[j] + drive + params.biases[j];
        let carried = if prev.spikes[j] {
            0.0
        } else {
            voltage_decay * prev.voltage[j]
        };
        let v = carried + c;
        next.current[j] = c;
        next.voltage[j] = v;
        next.spikes[j] = v > threshold;
    }
}

/// Row-major `[T x width]` record of one layer over a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub width: usize,
    pub currents: Vec<f64>,
    pub voltages: Vec<f64>,
    pub spikes: SpikeTrain,
}

impl LayerTrace {
    #[inline]
    pub fn current(&self, t: usize) -> &[f64] {
        &self.currents[t * self.width..(t + 1) * self.width]
    }

    #[inline]
    pub fn voltage(&self, t: usize) -> &[f64] {
        &self.voltages[t * self.width..(t + 1) * self.width]
    }
}

/// Everything recorded by [`snn_forward`]: the input raster and, per layer,
/// the currents, voltages and spikes at every timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: SpikeTrain,
    pub layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    pub fn timesteps(&self) -> usize {
        self.input.steps()
    }

    /// Spikes entering layer `k` (0-based) at step `t`.
    pub fn layer_input(&self, k: usize, t: usize) -> &[bool] {
        if k == 0 {
            self.input.row(t)
        } else {
            self.layers[k - 1].spikes.row(t)
        }
    }

    pub fn output(&self) -> &SpikeTrain {
        &self.layers.last().expect("at least one layer").spikes
    }
}

pub fn validate_stack(layers: &[LifLayerParams], input_width: usize) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    let mut width = input_width;
    for (k, layer) in layers.iter().enumerate() {
        layer.validate()?;
        if layer.n_in() != width {
            return Err(Error::Config(format!(
                "layer {k} expects {} inputs but receives {width}",
                layer.n_in()
            )));
        }
        width = layer.n_out();
    }
    Ok(())
}

/// Runs the network over every row of `input`, starting from the zero state.
pub fn snn_forward(layers: &[LifLayerParams], input: &SpikeTrain) -> Result<ForwardTrace> {
    let steps = input.steps();
    if steps < 1 {
        return Err(Error::Config("forward pass needs at least one timestep".into()));
    }
    validate_stack(layers, input.width())?;

    let mut traces: Vec<LayerTrace> = layers
        .iter()
        .map(|l| LayerTrace {
            width: l.n_out(),
            currents: Vec::with_capacity(steps * l.n_out()),
            voltages: Vec::with_capacity(steps * l.n_out()),
            spikes: SpikeTrain::zeros(steps, l.n_out()),
        })
        .collect();
    let mut state = SnnState::zeros(layers);
    let mut scratch: Vec<LayerState> = layers.iter().map(|l| LayerState::zeros(l.n_out())).collect();

    for t in 0..steps {
        for (k, layer) in layers.iter().enumerate() {
            let (done, rest) = state.layers.split_at(k);
            let in_spikes: &[bool] = if k == 0 { input.row(t) } else { &done[k - 1].spikes };
            step_into(layer, &rest[0], in_spikes, &mut scratch[k]);
            std::mem::swap(&mut state.layers[k], &mut scratch[k]);

            let s = &state.layers[k];
            let trace = &mut traces[k];
            trace.currents.extend_from_slice(&s.current);
            trace.voltages.extend_from_slice(&s.voltage);
            trace.spikes.row_mut(t).copy_from_slice(&s.spikes);
        }
    }

    Ok(ForwardTrace {
        input: input.clone(),
        layers: traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(weight: f64, neuron: NeuronConfig) -> LifLayerParams {
        LifLayerParams::new(1, 1, vec![weight], vec![0.0], neuron).unwrap()
    }

    fn train(rows: &[&[u8]]) -> SpikeTrain {
        let rows: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|&x| x == 1).collect()).collect();
        SpikeTrain::from_rows(&rows).unwrap()
    }

    fn random_stack(rng: &mut ChaCha8Rng, widths: &[usize]) -> Vec<LifLayerParams> {
        widths
            .windows(2)
            .map(|w| {
                let weights = (0..w[0] * w[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
                let biases = (0..w[1]).map(|_| rng.random_range(-0.2..0.4)).collect();
                LifLayerParams::new(w[0], w[1], weights, biases, NeuronConfig::default()).unwrap()
            })
            .collect()
    }

    fn random_input(rng: &mut ChaCha8Rng, steps: usize, width: usize) -> SpikeTrain {
        let mut x = SpikeTrain::zeros(steps, width);
        for t in 0..steps {
            for j in 0..width {
                x.set(t, j, rng.random_bool(0.4));
            }
        }
        x
    }

    #[test]
    fn single_neuron_hand_recurrence() {
        let layer = single(1.0, NeuronConfig::default());
        let mut state = LayerState::zeros(1);
        let mut spikes = Vec::new();
        let mut volts = Vec::new();
        for input in [true, false, false] {
            state = lif_layer_step(&layer, &state, &[input]).unwrap();
            spikes.push(state.spikes[0]);
            volts.push(state.voltage[0]);
        }
        assert_eq!(spikes, vec![true, false, true]);
        assert_eq!(volts, vec![1.0, 0.5, 0.625]);
    }

    #[test]
    fn zero_layer_stays_silent() {
        let layer = LifLayerParams::zeros(3, 2, NeuronConfig::default());
        let next = lif_layer_step(&layer, &LayerState::zeros(2), &[true, true, false]).unwrap();
        assert_eq!(next, LayerState::zeros(2));
    }

    #[test]
    fn decay_free_layer_ignores_history() {
        let neuron = NeuronConfig {
            current_decay: 0.0,
            voltage_decay: 0.0,
            threshold: 0.5,
        };
        let layer = single(1.0, neuron);
        let prev = LayerState {
            current: vec![-3.0],
            voltage: vec![7.0],
            spikes: vec![false],
        };
        let next = lif_layer_step(&layer, &prev, &[true]).unwrap();
        assert_eq!((next.current[0], next.voltage[0], next.spikes[0]), (1.0, 1.0, true));
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let layer = LifLayerParams::zeros(3, 2, NeuronConfig::default());
        let err = lif_layer_step(&layer, &LayerState::zeros(2), &[true]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(LifLayerParams::new(2, 2, vec![0.0; 3], vec![0.0; 2], NeuronConfig::default()).is_err());
        let bad = NeuronConfig {
            threshold: 0.0,
            ..NeuronConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn strict_threshold() {
        let layer = LifLayerParams::new(1, 1, vec![0.5], vec![0.0], NeuronConfig::default()).unwrap();
        let next = lif_layer_step(&layer, &LayerState::zeros(1), &[true]).unwrap();
        assert_eq!(next.voltage[0], 0.5);
        assert!(!next.spikes[0]);
    }

    #[test]
    fn forward_matches_single_step_example() {
        let layers = vec![single(1.0, NeuronConfig::default())];
        let trace = snn_forward(&layers, &train(&[&[1], &[0], &[0]])).unwrap();
        assert_eq!(trace.output().counts(), vec![2]);
        assert_eq!(
            (0..3).map(|t| trace.output().get(t, 0)).collect::<Vec<_>>(),
            vec![true, false, true]
        );
    }

    #[test]
    fn silent_input_and_zero_bias_stay_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layers = random_stack(&mut rng, &[4, 5, 3]);
        for l in &mut layers {
            l.biases.fill(0.0);
        }
        let trace = snn_forward(&layers, &SpikeTrain::zeros(6, 4)).unwrap();
        for l in &trace.layers {
            assert!(l.currents.iter().all(|&c| c == 0.0));
            assert!(l.voltages.iter().all(|&v| v == 0.0));
            assert_eq!(l.spikes.total(), 0);
        }
    }

    #[test]
    fn zero_timesteps_rejected() {
        let layers = vec![single(1.0, NeuronConfig::default())];
        assert!(matches!(
            snn_forward(&layers, &SpikeTrain::zeros(0, 1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reset_state_zeroes_and_is_idempotent() {
        let state = SnnState {
            layers: vec![LayerState {
                current: vec![1.0, -2.0],
                voltage: vec![0.3, 4.0],
                spikes: vec![true, false],
            }],
        };
        let zero = reset_state(state);
        assert_eq!(zero.layers[0], LayerState::zeros(2));
        assert_eq!(reset_state(zero.clone()), zero);
    }

    #[test]
    fn hard_reset_ignores_previous_voltage() {
        let layer = LifLayerParams::new(1, 1, vec![0.2], vec![0.1], NeuronConfig::default()).unwrap();
        let mk = |v: f64| LayerState {
            current: vec![0.4],
            voltage: vec![v],
            spikes: vec![true],
        };
        let a = lif_layer_step(&layer, &mk(0.9), &[true]).unwrap();
        let b = lif_layer_step(&layer, &mk(123.0), &[true]).unwrap();
        assert_eq!(a.voltage, b.voltage);
    }

    proptest! {
        #[test]
        fn spikes_are_binary_and_forward_is_deterministic(seed in any::<u64>(), steps in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layers = random_stack(&mut rng, &[6, 5, 4]);
            let x = random_input(&mut rng, steps, 6);
            let a = snn_forward(&layers, &x).unwrap();
            let b = snn_forward(&layers, &x).unwrap();
            prop_assert_eq!(&a, &b);
            for l in &a.layers {
                for t in 0..steps {
                    for (j, &v) in l.voltage(t).iter().enumerate() {
                        prop_assert_eq!(l.spikes.get(t, j), v > 0.5);
                    }
                }
            }
        }

        #[test]
        fn currents_superpose_without_spiking(seed in any::<u64>(), steps in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layers = random_stack(&mut rng, &[5, 3]);
            layers[0].biases.fill(0.0);
            layers[0].neuron.threshold = f64::INFINITY;
            let x1 = random_input(&mut rng, steps, 5);
            let x2 = random_input(&mut rng, steps, 5);
            // Disjoint union so the sum is still a binary raster.
            let mut x2_only = x2.clone();
            let mut union = x1.clone();
            for t in 0..steps {
                for j in 0..5 {
                    if x1.get(t, j) { x2_only.set(t, j, false); }
                    union.set(t, j, x1.get(t, j) || x2.get(t, j));
                }
            }
            let a = snn_forward(&layers, &x1).unwrap();
            let b = snn_forward(&layers, &x2_only).unwrap();
            let u = snn_forward(&layers, &union).unwrap();
            for ((ca, cb), cu) in a.layers[0].currents.iter().zip(&b.layers[0].currents).zip(&u.layers[0].currents) {
                let scale = cu.abs().max(1.0);
                prop_assert!((ca + cb - cu).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn reset_then_forward_equals_fresh_forward(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layers = random_stack(&mut rng, &[3, 4]);
            let x = random_input(&mut rng, 4, 3);
            let fresh = snn_forward(&layers, &x).unwrap();
            let dirty = SnnState { layers: vec![LayerState { current: vec![1.0; 4], voltage: vec![2.0; 4], spikes: vec![true; 4] }] };
            let mut state = reset_state(dirty);
            let mut out = Vec::new();
            for t in 0..4 {
                state.layers[0] = lif_layer_step(&layers[0], &state.layers[0], x.row(t)).unwrap();
                out.extend_from_slice(&state.layers[0].spikes);
            }
            prop_assert_eq!(out, fresh.output().row(0).iter().chain(fresh.output().row(1)).chain(fresh.output().row(2)).chain(fresh.output().row(3)).copied().collect::<Vec<_>>());
        }
    }
}
