//! Actor-critic training: off-policy DDPG/TD3, on-policy PPO, the shared
//! actor interface, and deterministic evaluation.

mod actor;
mod offpolicy;
mod ppo;
mod replay;
mod train;

pub use actor::{Actor, MlpActor, PopSanActor};
pub use offpolicy::{bellman_target, OffPolicyAgent, OffPolicyConfig};
pub use ppo::{
    clipped_surrogate, compute_gae, gaussian_entropy, gaussian_log_prob, PpoAgent, PpoConfig, PpoSample,
};
pub use replay::{ReplayBuffer, Transition};
pub use train::{
    actor_from_checkpoint, build_actor, evaluate, train, write_metrics, AnyActor, EvalStats, MetricRow, TrainOutcome,
    AGENT_KIND, METRICS_HEADER,
};

/// Losses averaged over the updates since the previous report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}
