use crate::checkpoint::{Persist, TensorTable};
use crate::envs::TaskDescriptor;
use crate::error::{ensure_len, Result};
use crate::gradients::{popsan_backward, SurrogateConfig};
use crate::mlp::{Activation, Mlp, MlpGrads, MlpTrace};
use crate::optim::Parameters;
use crate::popcode::{compute_stimulation, EncoderParams};
use crate::popsan::{PopSanConfig, PopSanGradients, PopSanParams, PopSanTrace};
use crate::rng::StreamRng;

/// A deterministic policy network that training code can drive without
/// knowing what it is.
///
/// `act` returns the raw (unclipped) action together with whatever the
/// backward pass needs; `backward` adds the parameter gradients for one
/// sample into `grads`.
pub trait Actor: Parameters + Persist + Clone + Send {
    type Trace;
    type Grads: Parameters;

    fn act(&self, obs: &[f64], rng: &mut StreamRng) -> Result<(Vec<f64>, Self::Trace)>;

    fn zero_grads(&self) -> Self::Grads;

    fn backward(&self, trace: &Self::Trace, grad_action: &[f64], grads: &mut Self::Grads) -> Result<()>;

    /// Restores invariants after an optimizer step.
    fn post_update(&mut self) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopSanActor {
    pub params: PopSanParams,
    pub surrogate: SurrogateConfig,
    /// When false, receptive fields receive zero gradient.
    pub learn_encoder: bool,
}

impl PopSanActor {
    pub fn new(params: PopSanParams, surrogate: SurrogateConfig, learn_encoder: bool) -> Self {
        Self {
            params,
            surrogate,
            learn_encoder,
        }
    }
}

impl Parameters for PopSanActor {
    fn tensors(&self) -> Vec<&[f64]> {
        self.params.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.params.tensors_mut()
    }
}

impl Persist for PopSanActor {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        self.params.store(prefix, table);
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        self.params.restore(prefix, table)
    }
}

impl Actor for PopSanActor {
    type Trace = PopSanTrace;
    type Grads = PopSanGradients;

    fn act(&self, obs: &[f64], rng: &mut StreamRng) -> Result<(Vec<f64>, PopSanTrace)> {
        let trace = self.params.forward(obs, rng)?;
        Ok((trace.action.clone(), trace))
    }

    fn zero_grads(&self) -> PopSanGradients {
        self.params.zero_grads()
    }

    fn backward(&self, trace: &PopSanTrace, grad_action: &[f64], grads: &mut PopSanGradients) -> Result<()> {
        let mut g = popsan_backward(grad_action, trace, &self.params, &self.surrogate)?;
        if !self.learn_encoder {
            g.freeze_encoder();
        }
        grads.add_scaled(&g, 1.0);
        Ok(())
    }

    fn post_update(&mut self) {
        self.params.post_update();
    }
}

/// Deep actor: `a = mid + half_range * tanh(net(x))`, where `x` is either
/// the raw observation or the output of a frozen population encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpActor {
    pub encoder: Option<EncoderParams>,
    pub net: Mlp,
    pub action_mid: Vec<f64>,
    pub action_half_range: Vec<f64>,
}

impl MlpActor {
    /// ReLU hidden layers on the raw observation.
    pub fn plain(task: &TaskDescriptor, hidden: &[usize], rng: &mut StreamRng) -> Result<Self> {
        let net = Mlp::with_hidden(task.obs_dim, hidden, task.act_dim, Activation::Relu, Activation::Tanh, rng)?;
        Ok(Self::wrap(None, net, task))
    }

    /// The same shape as a PopSAN: encoder, hidden ReLU layers, one ReLU
    /// layer as wide as the output populations, then a dense readout.
    pub fn population(task: &TaskDescriptor, cfg: &PopSanConfig, rng: &mut StreamRng) -> Result<Self> {
        let shape = PopSanParams::zeros(cfg)?;
        let mut sizes = vec![shape.encoder.width()];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(cfg.act_dim * cfg.pop_out);
        sizes.push(cfg.act_dim);
        let mut acts = vec![Activation::Relu; sizes.len() - 2];
        acts.push(Activation::Tanh);
        let net = Mlp::new(&sizes, &acts, rng)?;
        Ok(Self::wrap(Some(shape.encoder), net, task))
    }

    fn wrap(encoder: Option<EncoderParams>, net: Mlp, task: &TaskDescriptor) -> Self {
        Self {
            encoder,
            net,
            action_mid: task.action_mid(),
            action_half_range: task.action_half_range(),
        }
    }

    /// Network input for an observation.
    pub fn features(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match &self.encoder {
            Some(enc) => compute_stimulation(obs, enc),
            None => Ok(obs.to_vec()),
        }
    }

    /// Maps the network's tanh output into the action box.
    pub fn scale_output(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.action_mid.iter().zip(&self.action_half_range))
            .map(|(y, (m, h))| m + h * y)
            .collect()
    }
}

impl Parameters for MlpActor {
    fn tensors(&self) -> Vec<&[f64]> {
        self.net.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.tensors_mut()
    }
}

impl Persist for MlpActor {
    fn store(&self, prefix: &str, table: &mut TensorTable) {
        self.net.store(&format!("{prefix}.net"), table);
        if let Some(enc) = &self.encoder {
            enc.store(&format!("{prefix}.encoder"), table);
        }
    }

    fn restore(&mut self, prefix: &str, table: &TensorTable) -> Result<()> {
        self.net.restore(&format!("{prefix}.net"), table)?;
        if let Some(enc) = &mut self.encoder {
            enc.restore(&format!("{prefix}.encoder"), table)?;
        }
        Ok(())
    }
}

impl Actor for MlpActor {
    type Trace = MlpTrace;
    type Grads = MlpGrads;

    fn act(&self, obs: &[f64], _rng: &mut StreamRng) -> Result<(Vec<f64>, MlpTrace)> {
        let (y, trace) = self.net.forward(&self.features(obs)?)?;
        Ok((self.scale_output(&y), trace))
    }

    fn zero_grads(&self) -> MlpGrads {
        self.net.zero_grads()
    }

    fn backward(&self, trace: &MlpTrace, grad_action: &[f64], grads: &mut MlpGrads) -> Result<()> {
        ensure_len("action gradient", self.action_half_range.len(), grad_action.len())?;
        let grad_y: Vec<f64> = grad_action.iter().zip(&self.action_half_range).map(|(g, h)| g * h).collect();
        self.net.backward(trace, &grad_y, grads)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::TaskKind;
    use crate::popcode::EncoderMode;
    use crate::rng;
    use crate::snn::NeuronConfig;

    fn popsan_cfg(task: &TaskDescriptor) -> PopSanConfig {
        PopSanConfig {
            obs_ranges: task.obs_ranges.clone(),
            act_dim: task.act_dim,
            pop_in: 4,
            pop_out: 3,
            hidden: vec![6],
            timesteps: 5,
            neuron: NeuronConfig::default(),
            encoder_mode: EncoderMode::Deterministic,
            epsilon: 1e-3,
            overlap: 1.0,
        }
    }

    /// Checks an actor's gradient against finite differences of a smooth
    /// objective `sum_i c_i a_i`.
    fn mlp_actor_fd(actor: &MlpActor, obs: &[f64]) {
        let mut rng = rng::stream(0, rng::ENCODER);
        let c: Vec<f64> = (0..actor.action_mid.len()).map(|i| 0.5 - i as f64).collect();
        let (_, trace) = actor.act(obs, &mut rng).unwrap();
        let mut g = actor.zero_grads();
        actor.backward(&trace, &c, &mut g).unwrap();
        let analytic = g.flatten();
        let base = actor.flatten();
        let h = 1e-6;
        let objective = |flat: &[f64]| {
            let mut a = actor.clone();
            let mut offset = 0;
            for t in a.tensors_mut() {
                let n = t.len();
                t.copy_from_slice(&flat[offset..offset + n]);
                offset += n;
            }
            let y = a.act(obs, &mut rng::stream(0, rng::ENCODER)).unwrap().0;
            y.iter().zip(&c).map(|(y, c)| y * c).sum::<f64>()
        };
        let mut probe = base.clone();
        let numeric: Vec<f64> = (0..base.len())
            .map(|i| {
                probe[i] = base[i] + h;
                let up = objective(&probe);
                probe[i] = base[i] - h;
                let down = objective(&probe);
                probe[i] = base[i];
                (up - down) / (2.0 * h)
            })
            .collect();
        assert!(crate::optim::relative_error(&analytic, &numeric) < 1e-6);
    }

    #[test]
    fn mlp_actor_gradients() {
        let task = TaskKind::PointMass.descriptor();
        let mut rng = rng::stream(3, rng::INIT);
        let plain = MlpActor::plain(&task, &[8, 8], &mut rng).unwrap();
        mlp_actor_fd(&plain, &[0.3, -0.2, 0.1, 0.4]);
        let pop = MlpActor::population(&task, &popsan_cfg(&task), &mut rng).unwrap();
        mlp_actor_fd(&pop, &[0.3, -0.2, 0.1, 0.4]);
    }

    #[test]
    fn mlp_actor_stays_in_bounds() {
        let task = TaskKind::Pendulum.descriptor();
        let mut rng = rng::stream(1, rng::INIT);
        let mut actor = MlpActor::plain(&task, &[4], &mut rng).unwrap();
        actor.net.layers.last_mut().unwrap().biases[0] = 100.0;
        let a = actor.act(&[1.0, 0.0, 0.0], &mut rng).unwrap().0;
        assert!(a[0] <= 2.0 && a[0] > 1.99);
    }

    #[test]
    fn frozen_encoder_gets_no_gradient() {
        let task = TaskKind::Pendulum.descriptor();
        let mut rng = rng::stream(2, rng::INIT);
        let params = PopSanParams::init(&popsan_cfg(&task), &mut rng).unwrap();
        let actor = PopSanActor::new(params, SurrogateConfig::default(), false);
        let (_, trace) = actor.act(&[0.2, 0.9, -1.0], &mut rng).unwrap();
        let mut g = actor.zero_grads();
        actor.backward(&trace, &[1.0], &mut g).unwrap();
        assert!(g.means.iter().chain(&g.stds).all(|&x| x == 0.0));
        assert!(g.decoder_biases[0] == 1.0);
    }

    #[test]
    fn actors_persist() {
        let task = TaskKind::PointMass.descriptor();
        let mut rng = rng::stream(4, rng::INIT);
        let cfg = popsan_cfg(&task);
        let pop = MlpActor::population(&task, &cfg, &mut rng).unwrap();
        let mut table = TensorTable::new();
        pop.store("actor", &mut table);
        let mut fresh = MlpActor::population(&task, &cfg, &mut rng).unwrap();
        assert_ne!(fresh, pop);
        fresh.restore("actor", &table).unwrap();
        assert_eq!(fresh, pop);
    }
}
