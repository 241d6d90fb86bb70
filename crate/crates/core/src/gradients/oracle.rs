//! Reference gradients by explicit reverse accumulation over the unrolled
//! computation graph.
//!
//! Every scalar of the forward pass (parameters, stimulation strengths,
//! input spikes, each neuron's current, voltage and spike at each timestep,
//! spike counts, rates, actions) becomes a node; every elementary dependency
//! becomes an edge carrying its local partial derivative evaluated at the
//! recorded forward values. Gradients are then pushed from the actions back
//! to the parameters one edge at a time in reverse topological order.
//!
//! Local derivatives used on the edges:
//! - spike with respect to voltage: the rectangular surrogate `z(v)`;
//! - input spike with respect to stimulation: 1;
//! - the reset mask `(1 - o(t-1))` gates the voltage carry and is itself a
//!   constant (no edge from `o(t-1)` into `v(t)`).

use super::{surrogate_z, SurrogateConfig};
use crate::error::{ensure_len, Error, Result};
use crate::popsan::{LayerGrads, PopSanGradients, PopSanParams, PopSanTrace};

pub const ORACLE_MAX_NEURONS: usize = 64;
pub const ORACLE_MAX_TIMESTEPS: usize = 10;

type NodeId = usize;

#[derive(Default)]
struct Graph {
    /// `incoming[n]` lists `(source, d node / d source)`.
    incoming: Vec<Vec<(NodeId, f64)>>,
}

impl Graph {
    fn node(&mut self) -> NodeId {
        self.incoming.push(Vec::new());
        self.incoming.len() - 1
    }

    fn nodes(&mut self, n: usize) -> Vec<NodeId> {
        (0..n).map(|_| self.node()).collect()
    }

    fn edge(&mut self, from: NodeId, to: NodeId, derivative: f64) {
        debug_assert!(from < to, "edges must respect creation order");
        self.incoming[to].push((from, derivative));
    }

    fn reverse_accumulate(&self, seeds: &[(NodeId, f64)]) -> Vec<f64> {
        let mut grad = vec![0.0; self.incoming.len()];
        for &(n, g) in seeds {
            grad[n] += g;
        }
        for n in (0..self.incoming.len()).rev() {
            let g = grad[n];
            if g == 0.0 {
                continue;
            }
            for &(from, d) in &self.incoming[n] {
                grad[from] += g * d;
            }
        }
        grad
    }
}

/// Builds the unrolled graph of the recorded forward pass and returns the
/// gradients of `sum_i grad_action[i] * a_i`.
///
/// Refuses instances with more than [`ORACLE_MAX_NEURONS`] neurons
/// (input populations included) or more than [`ORACLE_MAX_TIMESTEPS`] steps.
pub fn oracle_unrolled_backward(
    trace: &PopSanTrace,
    params: &PopSanParams,
    cfg: &SurrogateConfig,
    grad_action: &[f64],
) -> Result<PopSanGradients> {
    let steps = params.timesteps;
    let neurons = params.total_neurons();
    if neurons > ORACLE_MAX_NEURONS || steps > ORACLE_MAX_TIMESTEPS {
        return Err(Error::Refused(format!(
            "oracle limited to {ORACLE_MAX_NEURONS} neurons and {ORACLE_MAX_TIMESTEPS} timesteps, \
             instance has {neurons} neurons and {steps} timesteps"
        )));
    }
    ensure_len("action gradient", params.act_dim(), grad_action.len())?;
    if trace.snn.timesteps() != steps || trace.snn.layers.len() != params.layers.len() {
        return Err(Error::Internal("trace does not match network".into()));
    }

    let enc = &params.encoder;
    let width0 = enc.width();
    let p_in = enc.pop_size();
    let mut g = Graph::default();

    // Encoder parameters and stimulation strengths.
    let mu = g.nodes(width0);
    let sigma = g.nodes(width0);
    let stim = g.nodes(width0);
    for idx in 0..width0 {
        let s = trace.obs[idx / p_in];
        let a = trace.stimulation[idx];
        let (m, sd) = (enc.means[idx], enc.stds[idx]);
        g.edge(mu[idx], stim[idx], a * (s - m) / (sd * sd));
        g.edge(sigma[idx], stim[idx], a * (s - m) * (s - m) / (sd * sd * sd));
    }

    // SNN parameters.
    let weights: Vec<Vec<NodeId>> = params.layers.iter().map(|l| g.nodes(l.weights.len())).collect();
    let biases: Vec<Vec<NodeId>> = params.layers.iter().map(|l| g.nodes(l.biases.len())).collect();

    // Unrolled dynamics, created timestep by timestep, layer by layer.
    let mut prev_c: Vec<Option<Vec<NodeId>>> = vec![None; params.layers.len()];
    let mut prev_v: Vec<Option<Vec<NodeId>>> = vec![None; params.layers.len()];
    let mut output_spikes: Vec<Vec<NodeId>> = Vec::with_capacity(steps);
    for t in 0..steps {
        let x = g.nodes(width0);
        for idx in 0..width0 {
            g.edge(stim[idx], x[idx], 1.0);
        }
        let mut below = x;
        for (k, layer) in params.layers.iter().enumerate() {
            let lt = &trace.snn.layers[k];
            let input = trace.snn.layer_input(k, t);
            let n_in = layer.n_in();
            let c = g.nodes(layer.n_out());
            let v = g.nodes(layer.n_out());
            let o = g.nodes(layer.n_out());
            for j in 0..layer.n_out() {
                for i in 0..n_in {
                    let w_idx = j * n_in + i;
                    g.edge(below[i], c[j], layer.weights[w_idx]);
                    let spike = if input[i] { 1.0 } else { 0.0 };
                    g.edge(weights[k][w_idx], c[j], spike);
                }
                g.edge(biases[k][j], c[j], 1.0);
                if let Some(pc) = &prev_c[k] {
                    g.edge(pc[j], c[j], layer.neuron.current_decay);
                }
                g.edge(c[j], v[j], 1.0);
                if let Some(pv) = &prev_v[k] {
                    let fired = lt.spikes.get(t - 1, j);
                    let mask = if fired { 0.0 } else { 1.0 };
                    g.edge(pv[j], v[j], layer.neuron.voltage_decay * mask);
                }
                let z = surrogate_z(lt.voltage(t)[j], layer.neuron.threshold, cfg.window);
                g.edge(v[j], o[j], z);
            }
            prev_c[k] = Some(c);
            prev_v[k] = Some(v);
            below = o;
        }
        output_spikes.push(below);
    }

    // Readout: spike counts, rates, actions.
    let dec = &params.decoder;
    let out_width = dec.width();
    let counts = g.nodes(out_width);
    for o in &output_spikes {
        for j in 0..out_width {
            g.edge(o[j], counts[j], 1.0);
        }
    }
    let rates = g.nodes(out_width);
    for j in 0..out_width {
        g.edge(counts[j], rates[j], 1.0 / steps as f64);
    }
    let dec_w = g.nodes(out_width);
    let dec_b = g.nodes(dec.act_dim());
    let p_out = dec.pop_size();
    let actions = g.nodes(dec.act_dim());
    for i in 0..dec.act_dim() {
        for j in i * p_out..(i + 1) * p_out {
            g.edge(rates[j], actions[i], dec.weights[j]);
            g.edge(dec_w[j], actions[i], trace.rates[j]);
        }
        g.edge(dec_b[i], actions[i], 1.0);
    }

    let seeds: Vec<(NodeId, f64)> = actions.iter().copied().zip(grad_action.iter().copied()).collect();
    let grad = g.reverse_accumulate(&seeds);
    let collect = |ids: &[NodeId]| ids.iter().map(|&n| grad[n]).collect::<Vec<f64>>();

    Ok(PopSanGradients {
        means: collect(&mu),
        stds: collect(&sigma),
        layers: weights
            .iter()
            .zip(&biases)
            .map(|(w, b)| LayerGrads {
                weights: collect(w),
                biases: collect(b),
            })
            .collect(),
        decoder_weights: collect(&dec_w),
        decoder_biases: collect(&dec_b),
    })
}
