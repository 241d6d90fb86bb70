//! Randomized agreement checks between the closed-form backward pass, the
//! unrolled-graph oracle and central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{finite_diff_check, oracle_unrolled_backward, popsan_backward, SmoothParam, SurrogateConfig, FD_STEP};
use crate::error::Result;
use crate::optim::{relative_error, Parameters};
use crate::popcode::EncoderMode;
use crate::popsan::{PopSanConfig, PopSanParams, PopSanTrace};
use crate::snn::NeuronConfig;

/// Random small network whose voltages land inside the surrogate window
/// often enough for the gradients to be non-trivial.
pub fn random_instance(seed: u64, width: usize, hidden_layers: usize, steps: usize, mode: EncoderMode) -> Result<(PopSanParams, PopSanTrace, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs_dim = rng.random_range(1..=2);
    let act_dim = rng.random_range(1..=2);
    let cfg = PopSanConfig {
        obs_ranges: vec![(-1.0, 1.0); obs_dim],
        act_dim,
        pop_in: width,
        pop_out: width,
        hidden: vec![width; hidden_layers],
        timesteps: steps,
        neuron: NeuronConfig {
            current_decay: rng.random_range(0.2..0.9),
            voltage_decay: rng.random_range(0.2..0.9),
            threshold: rng.random_range(0.3..0.7),
        },
        encoder_mode: mode,
        epsilon: 1e-3,
        overlap: 1.0,
    };
    let mut params = PopSanParams::init(&cfg, &mut rng)?;
    for layer in &mut params.layers {
        for w in &mut layer.weights {
            *w *= 1.5;
        }
    }
    for s in &mut params.encoder.stds {
        *s *= rng.random_range(0.6..1.4);
    }
    let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.2..1.2)).collect();
    let trace = params.forward(&obs, &mut rng)?;
    let grad_a: Vec<f64> = (0..act_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok((params, trace, grad_a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub instances: usize,
    /// Worst relative error of the closed form against the oracle.
    pub oracle_error: f64,
    /// Worst relative error of the smooth groups against central differences.
    pub fd_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, oracle_tol: f64, fd_tol: f64) -> bool {
        self.oracle_error < oracle_tol && self.fd_error < fd_tol
    }
}

/// Sweeps widths {2, 4, 8}, one or two hidden layers, T in {1, 3, 5, 10}
/// and both encoders, `rounds` times with fresh seeds.
pub fn gradcheck(rounds: usize, seed: u64, surrogate: &SurrogateConfig) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        instances: 0,
        oracle_error: 0.0,
        fd_error: 0.0,
    };
    for round in 0..rounds as u64 {
        for width in [2, 4, 8] {
            for hidden in [1, 2] {
                for steps in [1, 3, 5, 10] {
                    for mode in [EncoderMode::Deterministic, EncoderMode::Probabilistic] {
                        let s = seed.wrapping_add(round);
                        let (params, trace, grad_a) = random_instance(s, width, hidden, steps, mode)?;
                        let closed = popsan_backward(&grad_a, &trace, &params, surrogate)?;
                        let oracle = oracle_unrolled_backward(&trace, &params, surrogate, &grad_a)?;
                        let err = relative_error(&closed.flatten(), &oracle.flatten());
                        report.oracle_error = report.oracle_error.max(err);
                        for sel in [
                            SmoothParam::DecoderWeights,
                            SmoothParam::DecoderBiases,
                            SmoothParam::EncoderMeans,
                            SmoothParam::EncoderStds,
                        ] {
                            let err = finite_diff_check(&params, &trace, &grad_a, sel, FD_STEP)?;
                            report.fd_error = report.fd_error.max(err);
                        }
                        report.instances += 1;
                    }
                }
            }
        }
    }
    Ok(report)
}
