//! Population encoding of observations and decoding of output populations.
//!
//! Every observation dimension drives its own population of neurons with
//! Gaussian receptive fields. The resulting stimulation strengths either
//! feed one-step soft-reset integrate-and-fire neurons (deterministic mode)
//! or are used directly as per-step spike probabilities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::snn::SpikeTrain;

/// Lower bound applied to receptive field widths after every update.
pub const MIN_STD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    Deterministic,
    Probabilistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    obs_dim: usize,
    pop_size: usize,
    /// `[obs_dim x pop_size]`, population `i` occupies row `i`.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub epsilon: f64,
    pub mode: EncoderMode,
}

impl EncoderParams {
    pub fn new(
        obs_dim: usize,
        pop_size: usize,
        means: Vec<f64>,
        stds: Vec<f64>,
        epsilon: f64,
        mode: EncoderMode,
    ) -> Result<Self> {
        let enc = Self {
            obs_dim,
            pop_size,
            means,
            stds,
            epsilon,
            mode,
        };
        enc.validate()?;
        Ok(enc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.pop_size == 0 {
            return Err(Error::Config("encoder needs at least one neuron per population".into()));
        }
        ensure_len("encoder means", self.width(), self.means.len())?;
        ensure_len("encoder stds", self.width(), self.stds.len())?;
        if let Some(s) = self.stds.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::Config(format!("receptive field width {s} must be positive")));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.1) {
            return Err(Error::Config(format!("encoder epsilon {} outside (0, 0.1)", self.epsilon)));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn pop_size(&self) -> usize {
        self.pop_size
    }

    /// Total number of input neurons.
    pub fn width(&self) -> usize {
        self.obs_dim * self.pop_size
    }

    pub fn clamp_stds(&mut self) {
        for s in &mut self.stds {
            *s = s.max(MIN_STD);
        }
    }
}

/// Places `pop_size` receptive fields evenly over each observation range,
/// endpoints included, with width `spacing * overlap`.
pub fn init_encoder(
    ranges: &[(f64, f64)],
    pop_size: usize,
    overlap: f64,
    epsilon: f64,
    mode: EncoderMode,
) -> Result<EncoderParams> {
    if pop_size < 2 {
        return Err(Error::Config(format!(
            "input population size must be at least 2, got {pop_size}"
        )));
    }
    if !(overlap > 0.0) {
        return Err(Error::Config(format!("overlap factor {overlap} must be positive")));
    }
    let mut means = Vec::with_capacity(ranges.len() * pop_size);
    let mut stds = Vec::with_capacity(ranges.len() * pop_size);
    for &(low, high) in ranges {
        if !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(Error::Config(format!("observation range ({low}, {high}) is empty")));
        }
        let spacing = (high - low) / (pop_size - 1) as f64;
        for j in 0..pop_size {
            means.push(low + spacing * j as f64);
            stds.push(spacing * overlap);
        }
    }
    EncoderParams::new(ranges.len(), pop_size, means, stds, epsilon, mode)
}

/// Gaussian receptive field response of every input neuron, `[obs_dim x pop_size]`.
///
/// Far tails are floored at the smallest positive normal number instead of
/// underflowing to zero, so every response lies in `(0, 1]`.
pub fn compute_stimulation(obs: &[f64], enc: &EncoderParams) -> Result<Vec<f64>> {
    ensure_len("observation", enc.obs_dim(), obs.len())?;
    if let Some(x) = obs.iter().find(|x| !x.is_finite()) {
        return Err(Error::Input(format!("observation contains {x}")));
    }
    let p = enc.pop_size();
    let mut out = Vec::with_capacity(enc.width());
    for (i, &s) in obs.iter().enumerate() {
        for j in 0..p {
            let idx = i * p + j;
            let z = (s - enc.means[idx]) / enc.stds[idx];
            out.push((-0.5 * z * z).exp().max(f64::MIN_POSITIVE));
        }
    }
    Ok(out)
}

/// Membrane state of the encoder's one-step soft-reset IF neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderIfState {
    pub voltage: Vec<f64>,
}

impl EncoderIfState {
    pub fn zeros(width: usize) -> Self {
        Self {
            voltage: vec![0.0; width],
        }
    }

    pub fn step(&mut self, stimulation: &[f64], epsilon: f64, spikes: &mut [bool]) {
        let threshold = 1.0 - epsilon;
        for ((v, &a), o) in self.voltage.iter_mut().zip(stimulation).zip(spikes.iter_mut()) {
            *v += a;
            *o = *v > threshold;
            if *o {
                *v -= threshold;
            }
        }
    }
}

pub fn encode_deterministic(stimulation: &[f64], steps: usize, epsilon: f64) -> SpikeTrain {
    let mut state = EncoderIfState::zeros(stimulation.len());
    let mut out = SpikeTrain::zeros(steps, stimulation.len());
    for t in 0..steps {
        state.step(stimulation, epsilon, out.row_mut(t));
    }
    out
}

/// Independent Bernoulli spikes with probability `stimulation[j]` per step.
pub fn encode_probabilistic<R: Rng + ?Sized>(stimulation: &[f64], steps: usize, rng: &mut R) -> SpikeTrain {
    let mut out = SpikeTrain::zeros(steps, stimulation.len());
    for t in 0..steps {
        for (o, &a) in out.row_mut(t).iter_mut().zip(stimulation) {
            *o = rng.random::<f64>() < a;
        }
    }
    out
}

pub fn encode<R: Rng + ?Sized>(stimulation: &[f64], enc: &EncoderParams, steps: usize, rng: &mut R) -> SpikeTrain {
    match enc.mode {
        EncoderMode::Deterministic => encode_deterministic(stimulation, steps, enc.epsilon),
        EncoderMode::Probabilistic => encode_probabilistic(stimulation, steps, rng),
    }
}

/// Affine readout from the firing rates of each output population.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    act_dim: usize,
    pop_size: usize,
    /// `[act_dim x pop_size]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DecoderParams {
    pub fn new(act_dim: usize, pop_size: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if act_dim == 0 || pop_size == 0 {
            return Err(Error::Config("decoder needs at least one neuron per population".into()));
        }
        ensure_len("decoder weights", act_dim * pop_size, weights.len())?;
        ensure_len("decoder biases", act_dim, biases.len())?;
        Ok(Self {
            act_dim,
            pop_size,
            weights,
            biases,
        })
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn pop_size(&self) -> usize {
        self.pop_size
    }

    pub fn width(&self) -> usize {
        self.act_dim * self.pop_size
    }

    /// `a_i = W_d[i] . fr[i] + b_d[i]`.
    pub fn apply(&self, rates: &[f64]) -> Vec<f64> {
        let p = self.pop_size;
        (0..self.act_dim)
            .map(|i| {
                let w = &self.weights[i * p..(i + 1) * p];
                let fr = &rates[i * p..(i + 1) * p];
                w.iter().zip(fr).map(|(w, f)| w * f).sum::<f64>() + self.biases[i]
            })
            .collect()
    }
}

pub fn firing_rates(out_spikes: &SpikeTrain) -> Vec<f64> {
    let steps = out_spikes.steps() as f64;
    out_spikes.counts().into_iter().map(|c| f64::from(c) / steps).collect()
}

pub fn decode(out_spikes: &SpikeTrain, dec: &DecoderParams) -> Result<Vec<f64>> {
    ensure_len("output spikes", dec.width(), out_spikes.width())?;
    if out_spikes.steps() == 0 {
        return Err(Error::Config("cannot decode an empty spike train".into()));
    }
    Ok(dec.apply(&firing_rates(out_spikes)))
}

/// Mean pairwise L2 distance between the deterministic spike-count
/// encodings of `observations`.
pub fn mean_pairwise_encoding_distance(enc: &EncoderParams, observations: &[Vec<f64>], steps: usize) -> Result<f64> {
    let codes = observations
        .iter()
        .map(|s| {
            let a = compute_stimulation(s, enc)?;
            Ok(encode_deterministic(&a, steps, enc.epsilon)
                .counts()
                .into_iter()
                .map(f64::from)
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..codes.len() {
        for j in i + 1..codes.len() {
            let d2: f64 = codes[i].iter().zip(&codes[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            total += d2.sqrt();
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Input("need at least two observations".into()));
    }
    Ok(total / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spike_rows(train: &SpikeTrain) -> Vec<u8> {
        (0..train.steps()).map(|t| u8::from(train.get(t, 0))).collect()
    }

    #[test]
    fn init_spreads_means_over_range() {
        let enc = init_encoder(&[(-1.0, 1.0)], 3, 1.0, 1e-3, EncoderMode::Deterministic).unwrap();
        assert_eq!(enc.means, vec![-1.0, 0.0, 1.0]);
        assert_eq!(enc.stds, vec![1.0, 1.0, 1.0]);
        let enc = init_encoder(&[(-2.0, 2.0)], 2, 1.0, 1e-3, EncoderMode::Deterministic).unwrap();
        assert_eq!(enc.means, vec![-2.0, 2.0]);
        assert_eq!(enc.stds, vec![4.0, 4.0]);
    }

    #[test]
    fn init_rejects_degenerate_range() {
        assert!(matches!(
            init_encoder(&[(0.0, 0.0)], 3, 1.0, 1e-3, EncoderMode::Deterministic),
            Err(Error::Config(_))
        ));
        assert!(init_encoder(&[(0.0, 1.0)], 1, 1.0, 1e-3, EncoderMode::Deterministic).is_err());
    }

    #[test]
    fn stimulation_analytic_values() {
        let enc = EncoderParams::new(1, 3, vec![0.3, -0.2, 1.5], vec![0.7, 0.4, 0.25], 1e-3, EncoderMode::Deterministic)
            .unwrap();
        assert_eq!(compute_stimulation(&[0.3], &enc).unwrap()[0], 1.0);
        let a = compute_stimulation(&[0.2], &enc).unwrap();
        assert!((a[1] - (-0.5f64).exp()).abs() < 1e-15);
        let a = compute_stimulation(&[1.0], &enc).unwrap();
        assert!((a[2] - (-2.0f64).exp()).abs() < 1e-15);
        assert!((a[2] - 0.135335).abs() < 1e-6);
        assert!(matches!(compute_stimulation(&[f64::NAN], &enc), Err(Error::Input(_))));
    }

    #[test]
    fn deterministic_encoder_examples() {
        assert_eq!(spike_rows(&encode_deterministic(&[0.5], 5, 1e-3)), vec![0, 1, 0, 1, 0]);
        assert_eq!(spike_rows(&encode_deterministic(&[1.0], 4, 1e-3)), vec![1, 1, 1, 1]);
        assert_eq!(encode_deterministic(&[1e-9], 50, 1e-3).total(), 0);
    }

    #[test]
    fn encoder_state_soft_reset_subtracts_threshold() {
        let mut state = EncoderIfState::zeros(1);
        let mut o = [false];
        state.step(&[0.75], 0.001, &mut o);
        state.step(&[0.75], 0.001, &mut o);
        assert!(o[0]);
        assert!((state.voltage[0] - (1.5 - 0.999)).abs() < 1e-15);
    }

    #[test]
    fn probabilistic_encoder_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(encode_probabilistic(&[1.0, 0.0], 100, &mut rng).counts(), vec![100, 0]);
    }

    #[test]
    fn probabilistic_rate_within_binomial_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let rate = f64::from(encode_probabilistic(&[0.3], n, &mut rng).counts()[0]) / n as f64;
        assert!((rate - 0.3).abs() <= 3.0 * (0.3f64 * 0.7 / n as f64).sqrt());
    }

    #[test]
    fn decode_examples() {
        let dec = DecoderParams::new(1, 2, vec![0.5, -0.2], vec![0.1]).unwrap();
        let mut out = SpikeTrain::zeros(5, 2);
        for t in 0..5 {
            out.set(t, 1, true);
            if t < 3 {
                out.set(t, 0, true);
            }
        }
        let a = decode(&out, &dec).unwrap();
        assert!((a[0] - 0.2).abs() < 1e-15);
        assert_eq!(decode(&SpikeTrain::zeros(5, 2), &dec).unwrap(), vec![0.1]);
        let mut ones = SpikeTrain::zeros(4, 2);
        for t in 0..4 {
            ones.row_mut(t).fill(true);
        }
        assert!((decode(&ones, &dec).unwrap()[0] - 0.4).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn deterministic_count_law(a in 1e-6f64..=1.0, steps in 1usize..1000) {
            let eps = 1e-3;
            let k = f64::from(encode_deterministic(&[a], steps, eps).counts()[0]);
            prop_assert!((k - steps as f64 * a / (1.0 - eps)).abs() <= 1.0);
        }

        #[test]
        fn deterministic_count_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, steps in 1usize..200) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let k_lo = encode_deterministic(&[lo], steps, 1e-3).counts()[0];
            let k_hi = encode_deterministic(&[hi], steps, 1e-3).counts()[0];
            prop_assert!(k_lo <= k_hi);
        }

        #[test]
        fn stimulation_in_unit_interval(s in -5.0f64..5.0, mu in -2.0f64..2.0, sigma in 0.1f64..3.0) {
            let enc = EncoderParams::new(1, 1, vec![mu], vec![sigma], 1e-3, EncoderMode::Deterministic).unwrap();
            let a = compute_stimulation(&[s], &enc).unwrap()[0];
            prop_assert!(a > 0.0 && a <= 1.0);
        }

        #[test]
        fn decoder_affine_in_rates(alpha in 0.0f64..1.0, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dec = DecoderParams::new(2, 3, w, b).unwrap();
            let f1: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let f2: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let mix: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let lhs = dec.apply(&mix);
            let (a1, a2) = (dec.apply(&f1), dec.apply(&f2));
            for i in 0..2 {
                prop_assert!((lhs[i] - (alpha * a1[i] + (1.0 - alpha) * a2[i])).abs() <= 1e-12);
            }
        }
    }
}
