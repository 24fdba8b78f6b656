//! PPO with GAE, an adaptive learning rate and asymmetric actor-critic networks.

pub mod bundle;
pub mod gae;
pub mod network;
pub mod trainer;
pub mod update;

pub use bundle::{export_policy, load_policy, BundleError, PolicyBundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use gae::{compute_gae, compute_gae_batch};
pub use network::{gaussian_log_prob, PolicyNetwork, PolicyOutput};
pub use trainer::{apply_amp_mode, train, train_with, AmpMode, TrainError, TrainOptions, TrainOutcome, TrainRecord, Trainer};
pub use update::{adapt_lr, ppo_update, PolicyOptimizer, PpoError, RolloutBatch, UpdateStats};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoParams {
    pub learning_rate: f64,
    pub gamma: f64,
    pub lam: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub kl_target: f64,
    pub adaptive_lr: bool,
    pub lr_min: f64,
    pub lr_max: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    pub init_log_std: f64,
    /// Normalized observations are clamped to this magnitude.
    pub obs_clip: f64,
    /// Weight of the mirror-consistency loss when `sym_loss` is on.
    pub symmetry_coef: f64,
    /// Full-scale widths.
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Iterations between checkpoints; 0 disables them.
    pub checkpoint_interval: usize,
}

impl Default for PpoParams {
    fn default() -> Self {
        PpoParams {
            learning_rate: 5e-4,
            gamma: 0.99,
            lam: 0.95,
            epochs: 5,
            minibatches: 4,
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.005,
            kl_target: 0.01,
            adaptive_lr: true,
            lr_min: 1e-6,
            lr_max: 1e-2,
            max_grad_norm: 1.0,
            normalize_advantages: true,
            init_log_std: 0.5f64.ln(),
            obs_clip: 10.0,
            symmetry_coef: 0.1,
            actor_hidden: vec![512, 256, 128],
            critic_hidden: vec![512, 256, 128],
            checkpoint_interval: 500,
        }
    }
}

impl PpoParams {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.learning_rate >= 0.0) {
            v.push("ppo.learning_rate must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            v.push("ppo.gamma and ppo.lam must be in [0,1]".into());
        }
        if self.epochs == 0 || self.minibatches == 0 {
            v.push("ppo.epochs and ppo.minibatches must be > 0".into());
        }
        if !(self.clip > 0.0) {
            v.push("ppo.clip must be > 0".into());
        }
        if !(self.kl_target > 0.0) || !(0.0 < self.lr_min && self.lr_min <= self.lr_max) {
            v.push("ppo.kl_target must be > 0 and 0 < lr_min <= lr_max".into());
        }
        if !(self.max_grad_norm > 0.0) {
            v.push("ppo.max_grad_norm must be > 0".into());
        }
        if !(self.obs_clip > 0.0) {
            v.push("ppo.obs_clip must be > 0".into());
        }
        v
    }
}
