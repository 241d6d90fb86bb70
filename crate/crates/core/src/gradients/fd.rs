//! Central finite differences on the smooth parts of the network.
//!
//! Spikes are step functions, so differences through the LIF layers say
//! nothing about the surrogate gradient. Only the decoder and the Gaussian
//! receptive fields (with spikes held fixed) are checked this way.

use super::{backward_decoder, backward_encoder, backward_snn, SurrogateConfig};
use crate::error::{ensure_len, Error, Result};
use crate::optim::relative_error;
use crate::popcode::{compute_stimulation, EncoderParams};
use crate::popsan::{PopSanParams, PopSanTrace};

pub const FD_STEP: f64 = 1e-5;

/// Parameter groups a finite-difference check can be pointed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothParam {
    DecoderWeights,
    DecoderBiases,
    EncoderMeans,
    EncoderStds,
    /// Refused: the influence passes through spikes.
    SnnWeights(usize),
    /// Refused: the influence passes through spikes.
    SnnBiases(usize),
}

/// Max relative error between `analytic` and central differences of `f`
/// around `x` with step `h`.
pub fn central_difference_check<F>(f: F, x: &[f64], analytic: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length differs from point");
    let mut probe = x.to_vec();
    let numeric: Vec<f64> = (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect();
    relative_error(analytic, &numeric)
}

/// Compares the closed-form gradient of `sum_i grad_action[i] * a_i` for
/// one smooth parameter group against central differences.
///
/// Decoder groups perturb the decoder with the recorded firing rates held
/// fixed. Encoder groups perturb the receptive fields with the input spike
/// gradient held fixed, checking the smooth factor `dA_E/d(mu, sigma)`.
pub fn finite_diff_check(
    params: &PopSanParams,
    trace: &PopSanTrace,
    grad_action: &[f64],
    selector: SmoothParam,
    h: f64,
) -> Result<f64> {
    ensure_len("action gradient", params.act_dim(), grad_action.len())?;
    let dec = &params.decoder;
    let weighted = |action: Vec<f64>| action.iter().zip(grad_action).map(|(a, g)| a * g).sum::<f64>();
    match selector {
        SmoothParam::DecoderWeights => {
            let analytic = backward_decoder(grad_action, &trace.rates, dec)?.weights;
            Ok(central_difference_check(
                |w| {
                    let mut d = dec.clone();
                    d.weights.copy_from_slice(w);
                    weighted(d.apply(&trace.rates))
                },
                &dec.weights,
                &analytic,
                h,
            ))
        }
        SmoothParam::DecoderBiases => {
            let analytic = backward_decoder(grad_action, &trace.rates, dec)?.biases;
            Ok(central_difference_check(
                |b| {
                    let mut d = dec.clone();
                    d.biases.copy_from_slice(b);
                    weighted(d.apply(&trace.rates))
                },
                &dec.biases,
                &analytic,
                h,
            ))
        }
        SmoothParam::EncoderMeans | SmoothParam::EncoderStds => {
            let means = selector == SmoothParam::EncoderMeans;
            let grad_input = input_gradient(params, trace, grad_action)?;
            let enc = backward_encoder(&grad_input, &trace.stimulation, &trace.obs, &params.encoder)?;
            let upstream = enc.stimulation;
            let objective = |e: &EncoderParams| -> f64 {
                compute_stimulation(&trace.obs, e)
                    .map(|a| a.iter().zip(&upstream).map(|(a, u)| a * u).sum())
                    .unwrap_or(f64::NAN)
            };
            let (x, analytic) = if means {
                (&params.encoder.means, enc.means)
            } else {
                (&params.encoder.stds, enc.stds)
            };
            Ok(central_difference_check(
                |v| {
                    let mut e = params.encoder.clone();
                    if means {
                        e.means.copy_from_slice(v);
                    } else {
                        e.stds.copy_from_slice(v);
                    }
                    objective(&e)
                },
                x,
                &analytic,
                h,
            ))
        }
        SmoothParam::SnnWeights(k) | SmoothParam::SnnBiases(k) => Err(Error::Refused(format!(
            "layer {k} parameters act through spikes; finite differences do not measure a surrogate gradient"
        ))),
    }
}

fn input_gradient(params: &PopSanParams, trace: &PopSanTrace, grad_action: &[f64]) -> Result<Vec<f64>> {
    let steps = params.timesteps as f64;
    let dec = backward_decoder(grad_action, &trace.rates, &params.decoder)?;
    let per_step: Vec<f64> = dec.rates.iter().map(|g| g / steps).collect();
    let grad_output = per_step.repeat(params.timesteps);
    Ok(backward_snn(&trace.snn, &grad_output, &params.layers, &SurrogateConfig::default())?.input)
}

#[cfg(test)]
mod tests {
    use super::super::random_instance;
    use super::*;
    use crate::popcode::EncoderMode;

    #[test]
    fn quadratic_is_exact() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1] + x[1];
        let x = [0.7, -1.3];
        let analytic = [6.0 * x[0] - 2.0 * x[1], -2.0 * x[0] + x[1] + 1.0];
        assert!(central_difference_check(f, &x, &analytic, FD_STEP) < 1e-10);
    }

    #[test]
    fn zero_function_has_zero_error() {
        assert_eq!(central_difference_check(|_| 0.0, &[1.0, 2.0], &[0.0, 0.0], FD_STEP), 0.0);
    }

    #[test]
    fn smooth_groups_match() {
        for seed in 0..20 {
            let (params, trace, grad_a) = random_instance(seed, 4, 1, 5, EncoderMode::Deterministic).unwrap();
            for sel in [
                SmoothParam::DecoderWeights,
                SmoothParam::DecoderBiases,
                SmoothParam::EncoderMeans,
                SmoothParam::EncoderStds,
            ] {
                let err = finite_diff_check(&params, &trace, &grad_a, sel, FD_STEP).unwrap();
                assert!(err < 1e-6, "seed {seed} {sel:?}: {err}");
            }
        }
    }

    #[test]
    fn spiking_groups_are_refused() {
        let (params, trace, grad_a) = random_instance(0, 2, 1, 3, EncoderMode::Deterministic).unwrap();
        for sel in [SmoothParam::SnnWeights(0), SmoothParam::SnnBiases(1)] {
            assert!(matches!(
                finite_diff_check(&params, &trace, &grad_a, sel, FD_STEP),
                Err(Error::Refused(_))
            ));
        }
    }
}
