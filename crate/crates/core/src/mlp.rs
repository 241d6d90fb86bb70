//! Dense feedforward networks with hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::optim::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    /// ReLU uses subgradient 0 at 0.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// Uniform in `+-1/sqrt(fan_in)`.
pub fn uniform_init<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `[n_out x n_in]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
            activation,
        }
    }

    #[inline]
    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.n_in..(out + 1) * self.n_in]
    }

    /// Pre-activations `W x + b`.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|j| dot(self.row(j), x) + self.biases[j])
            .collect()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Inputs and pre-activations of each layer from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace {
    pub inputs: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]` with one activation per layer.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations)?;
        for layer in &mut net.layers {
            layer.weights = uniform_init(rng, layer.n_in, layer.weights.len());
            layer.biases = uniform_init(rng, layer.n_in, layer.n_out);
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        ensure_len("activations", sizes.len() - 1, activations.len())?;
        Ok(Self {
            layers: sizes
                .windows(2)
                .zip(activations)
                .map(|(w, &a)| DenseLayer::zeros(w[0], w[1], a))
                .collect(),
        })
    }

    /// Hidden layers with `hidden_act`, output layer with `output_act`.
    pub fn with_hidden<R: Rng + ?Sized>(
        n_in: usize,
        hidden: &[usize],
        n_out: usize,
        hidden_act: Activation,
        output_act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(n_out);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(output_act);
        Self::new(&sizes, &acts, rng)
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpTrace)> {
        ensure_len("network input", self.n_in(), x.len())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine(&h);
            let y: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(std::mem::replace(&mut h, y));
            pre.push(z);
        }
        let trace = MlpTrace {
            inputs,
            pre_activations: pre,
            output: h.clone(),
        };
        Ok((h, trace))
    }

    /// Output only, without keeping the trace.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len("network input", self.n_in(), x.len())?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.affine(&h).into_iter().map(|v| layer.activation.apply(v)).collect();
        }
        Ok(h)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.n_in, l.n_out, l.activation))
                .collect(),
        }
    }

    /// Adds the parameter gradients of this sample into `grads` and returns
    /// the gradient with respect to the input.
    pub fn backward(&self, trace: &MlpTrace, grad_output: &[f64], grads: &mut MlpGrads) -> Result<Vec<f64>> {
        ensure_len("output gradient", self.n_out(), grad_output.len())?;
        if trace.inputs.len() != self.layers.len() {
            return Err(Error::Internal("trace does not match network depth".into()));
        }
        let mut delta = grad_output.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre_activations[k];
            let outputs: &[f64] = if k + 1 < self.layers.len() {
                &trace.inputs[k + 1]
            } else {
                &trace.output
            };
            for j in 0..layer.n_out {
                delta[j] *= layer.activation.derivative(z[j], outputs[j]);
            }
            let x = &trace.inputs[k];
            let g = &mut grads.layers[k];
            let mut grad_in = vec![0.0; layer.n_in];
            for j in 0..layer.n_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                g.biases[j] += d;
                let gw = &mut g.weights[j * layer.n_in..(j + 1) * layer.n_in];
                for (gw, xi) in gw.iter_mut().zip(x) {
                    *gw += d * xi;
                }
                for (gi, w) in grad_in.iter_mut().zip(layer.row(j)) {
                    *gi += d * w;
                }
            }
            delta = grad_in;
        }
        Ok(delta)
    }
}

/// Same layout as [`Mlp`]; activations are carried along but unused.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseLayer>,
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }
}

impl Parameters for MlpGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::relative_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2], &[Activation::Relu, Activation::Linear]).unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut net = Mlp::zeros(&[2, 2], &[Activation::Linear]).unwrap();
        net.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(net.predict(&[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn two_layer_hand_evaluation() {
        let mut net = Mlp::zeros(&[2, 2, 1], &[Activation::Relu, Activation::Tanh]).unwrap();
        net.layers[0].weights = vec![1.0, -1.0, 0.5, 2.0];
        net.layers[0].biases = vec![0.1, -3.0];
        net.layers[1].weights = vec![0.5, 1.0];
        net.layers[1].biases = vec![0.2];
        // h = relu([1 - (-1)... ]) for x = [1, -1]: [1+1+0.1, 0.5-2-3] = [2.1, -4.5] -> [2.1, 0]
        let y = net.predict(&[1.0, -1.0]).unwrap();
        assert!((y[0] - (0.5f64 * 2.1 + 0.2).tanh()).abs() < 1e-15);
    }

    #[test]
    fn relu_subgradient_at_zero() {
        let mut net = Mlp::zeros(&[1, 1], &[Activation::Relu]).unwrap();
        net.layers[0].weights = vec![1.0];
        let (_, trace) = net.forward(&[0.0]).unwrap();
        let mut g = net.zero_grads();
        let gx = net.backward(&trace, &[1.0], &mut g).unwrap();
        assert_eq!(gx, vec![0.0]);
        assert_eq!(g.flatten(), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 5, 2], &[Activation::Tanh, Activation::Linear], &mut rng).unwrap();
        let (_, trace) = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let mut g = net.zero_grads();
        let gx = net.backward(&trace, &[0.0, 0.0], &mut g).unwrap();
        assert!(gx.iter().chain(g.flatten().iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for acts in [
            [Activation::Relu, Activation::Linear],
            [Activation::Tanh, Activation::Tanh],
            [Activation::Linear, Activation::Relu],
        ] {
            for _ in 0..10 {
                let net = Mlp::new(&[4, 6, 3], &acts, &mut rng).unwrap();
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                let up: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let loss = |n: &Mlp, x: &[f64]| -> f64 {
                    n.predict(x).unwrap().iter().zip(&up).map(|(y, u)| y * u).sum()
                };
                let (_, trace) = net.forward(&x).unwrap();
                let mut g = net.zero_grads();
                let gx = net.backward(&trace, &up, &mut g).unwrap();

                let h = 1e-5;
                let mut fd = Vec::new();
                let n_params = net.num_params();
                for idx in 0..n_params {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    nth_param(&mut plus, idx, h);
                    nth_param(&mut minus, idx, -h);
                    fd.push((loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h));
                }
                assert!(relative_error(&fd, &g.flatten()) < 1e-6);

                let fdx: Vec<f64> = (0..4)
                    .map(|i| {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[i] += h;
                        xm[i] -= h;
                        (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h)
                    })
                    .collect();
                assert!(relative_error(&fdx, &gx) < 1e-6);
            }
        }
    }

    fn nth_param(net: &mut Mlp, mut idx: usize, delta: f64) {
        for t in net.tensors_mut() {
            if idx < t.len() {
                t[idx] += delta;
                return;
            }
            idx -= t.len();
        }
    }
}
