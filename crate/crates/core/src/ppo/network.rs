use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{Activation, Mlp};
use crate::observation::{ACTION_DIM, CRITIC_DIM, STACK_DIM};

const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal-Gaussian log density.
pub fn gaussian_log_prob(a: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    let mut lp = 0.0;
    for j in 0..a.len() {
        let z = (a[j] - mean[j]) / log_std[j].exp();
        lp += -0.5 * z * z - log_std[j] - LOG_SQRT_2PI;
    }
    lp
}

/// Actor (stacked observation → action mean) with a state-independent
/// log-std, and a separate critic on the privileged observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub critic: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl PolicyNetwork {
    pub fn new<R: Rng + ?Sized>(actor_hidden: &[usize], critic_hidden: &[usize], init_log_std: f64, rng: &mut R) -> Self {
        Self::with_dims(STACK_DIM, CRITIC_DIM, ACTION_DIM, actor_hidden, critic_hidden, init_log_std, rng)
    }

    pub fn with_dims<R: Rng + ?Sized>(
        obs_dim: usize,
        critic_dim: usize,
        action_dim: usize,
        actor_hidden: &[usize],
        critic_hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let gain = std::f64::consts::SQRT_2;
        PolicyNetwork {
            actor: Mlp::init(&sizes(obs_dim, actor_hidden, action_dim), Activation::Elu, gain, 0.01, rng),
            log_std: vec![init_log_std; action_dim],
            critic: Mlp::init(&sizes(critic_dim, critic_hidden, 1), Activation::Elu, gain, 1.0, rng),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn action_mean(&self, obs: ArrayView2<f64>) -> Array2<f64> {
        self.actor.forward(obs)
    }

    pub fn value(&self, critic_obs: ArrayView2<f64>) -> Vec<f64> {
        self.critic.forward(critic_obs).into_raw_vec_and_offset().0
    }

    /// Mean, a sampled action and its log-probability for one (normalized) observation.
    pub fn policy_forward<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> PolicyOutput {
        assert_eq!(obs.len(), self.obs_dim(), "observation dimension mismatch");
        let mean = self.actor.forward_one(obs);
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + ls.exp() * z
            })
            .collect();
        let log_prob = gaussian_log_prob(&action, &mean, &self.log_std);
        PolicyOutput { mean, log_std: self.log_std.clone(), action, log_prob }
    }

    /// Entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 + LOG_SQRT_2PI).sum()
    }
}
