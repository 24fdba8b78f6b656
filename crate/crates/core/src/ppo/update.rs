use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::gae::compute_gae_batch;
use super::network::{gaussian_log_prob, PolicyNetwork};
use super::PpoParams;
use crate::joints;
use crate::nn::{gather_rows, Adam};
use crate::observation::{mirror_stack, RunningNormalizer, STACK_DIM};

#[derive(Debug, thiserror::Error)]
pub enum PpoError {
    #[error("non-finite {what} in PPO update (epoch {epoch}, minibatch {minibatch})")]
    NonFinite { what: &'static str, epoch: usize, minibatch: usize },
    #[error("observation dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Step-major rollout storage (`index = step · num_envs + env`). Observations are raw.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub num_envs: usize,
    pub steps: usize,
    pub obs_dim: usize,
    pub critic_dim: usize,
    pub action_dim: usize,
    pub obs: Vec<f64>,
    pub critic_obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub means: Vec<f64>,
    pub old_log_std: Vec<f64>,
    /// Combined rewards, including any time-out bootstrap.
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
    pub last_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn new(num_envs: usize, steps: usize, obs_dim: usize, critic_dim: usize, action_dim: usize) -> Self {
        let n = num_envs * steps;
        RolloutBatch {
            num_envs,
            steps,
            obs_dim,
            critic_dim,
            action_dim,
            obs: Vec::with_capacity(n * obs_dim),
            critic_obs: Vec::with_capacity(n * critic_dim),
            actions: Vec::with_capacity(n * action_dim),
            log_probs: Vec::with_capacity(n),
            means: Vec::with_capacity(n * action_dim),
            old_log_std: Vec::new(),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            last_values: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn compute_returns(&mut self, gamma: f64, lam: f64) {
        let (a, r) = compute_gae_batch(&self.rewards, &self.values, &self.dones, &self.last_values, gamma, lam);
        self.advantages = a;
        self.returns = r;
    }
}

/// Halve above `2·target`, double below `target/2`, clamp to `[1e-6, 1e-2]`.
pub fn adapt_lr(lr: f64, observed_kl: f64, kl_target: f64) -> f64 {
    adapt_lr_within(lr, observed_kl, kl_target, 1e-6, 1e-2)
}

pub fn adapt_lr_within(lr: f64, observed_kl: f64, kl_target: f64, lo: f64, hi: f64) -> f64 {
    let next = if observed_kl > 2.0 * kl_target {
        lr / 2.0
    } else if observed_kl < kl_target / 2.0 {
        lr * 2.0
    } else {
        lr
    };
    next.clamp(lo, hi)
}

/// Per-part Adam state for a [`PolicyNetwork`].
#[derive(Debug, Clone)]
pub struct PolicyOptimizer {
    pub actor: Adam,
    pub log_std: Adam,
    pub critic: Adam,
}

impl PolicyOptimizer {
    pub fn new(net: &PolicyNetwork) -> Self {
        PolicyOptimizer {
            actor: Adam::new(net.actor.params.len()),
            log_std: Adam::new(net.log_std.len()),
            critic: Adam::new(net.critic.params.len()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub symmetry_loss: f64,
    pub kl: f64,
    pub learning_rate: f64,
    pub num_updates: usize,
}

/// Loss pieces and gradients of one minibatch.
#[derive(Debug, Clone)]
pub struct MinibatchGrad {
    pub loss: f64,
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
    pub symmetry: f64,
    pub kl: f64,
    pub actor: Vec<f64>,
    pub log_std: Vec<f64>,
    pub critic: Vec<f64>,
}

fn normalized(norm: &RunningNormalizer, mut rows: Array2<f64>) -> Array2<f64> {
    if norm.count > 0.0 {
        for mut r in rows.rows_mut() {
            let v = r.to_vec();
            norm.normalize_into(&v, r.as_slice_mut().expect("contiguous row"));
        }
    }
    rows
}

/// Settings shared by every minibatch of an update.
#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Mirror-consistency weight, or `None` to disable.
    pub symmetry: Option<f64>,
}

/// Full PPO loss on rows `idx` of `batch` and its gradient.
pub fn minibatch_loss(
    net: &PolicyNetwork,
    batch: &RolloutBatch,
    advantages: &[f64],
    idx: &[usize],
    actor_norm: &RunningNormalizer,
    critic_norm: &RunningNormalizer,
    cfg: &LossConfig,
) -> MinibatchGrad {
    let b = idx.len() as f64;
    let ad = batch.action_dim;
    let raw_obs = gather_rows(&batch.obs, batch.obs_dim, idx);
    let obs = normalized(actor_norm, raw_obs.clone());
    let cobs = normalized(critic_norm, gather_rows(&batch.critic_obs, batch.critic_dim, idx));
    let cache = net.actor.forward_cached(obs.view());
    let mean = cache.output();
    let std: Vec<f64> = net.log_std.iter().map(|l| l.exp()).collect();

    let mut dmean = Array2::zeros((idx.len(), ad));
    let mut dls = vec![0.0; ad];
    let (mut surrogate, mut kl) = (0.0, 0.0);
    for (r, &i) in idx.iter().enumerate() {
        let a = &batch.actions[i * ad..(i + 1) * ad];
        let mu = mean.row(r);
        let mu = mu.as_slice().expect("contiguous");
        let lp = gaussian_log_prob(a, mu, &net.log_std);
        let ratio = (lp - batch.log_probs[i]).exp();
        let adv = advantages[i];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
        surrogate -= unclipped.min(clipped) / b;
        // gradient flows only through the unclipped branch when it is the minimum
        let dlp = if unclipped <= clipped { -adv * ratio / b } else { 0.0 };
        let old_mu = &batch.means[i * ad..(i + 1) * ad];
        for j in 0..ad {
            let z = (a[j] - mu[j]) / std[j];
            dmean[(r, j)] = dlp * z / std[j];
            dls[j] += dlp * (z * z - 1.0);
            let so = batch.old_log_std[j].exp();
            let dm = old_mu[j] - mu[j];
            kl += ((net.log_std[j] - batch.old_log_std[j]) + (so * so + dm * dm) / (2.0 * std[j] * std[j]) - 0.5) / b;
        }
    }

    let entropy = net.entropy();
    for g in dls.iter_mut() {
        *g -= cfg.entropy_coef;
    }

    let mut actor_grad = vec![0.0; net.actor.params.len()];
    let mut symmetry = 0.0;
    if let Some(coef) = cfg.symmetry {
        let mut mirrored = raw_obs.clone();
        for (src, mut dst) in raw_obs.rows().into_iter().zip(mirrored.rows_mut()) {
            mirror_stack(src.as_slice().expect("row"), dst.as_slice_mut().expect("row"));
        }
        let mobs = normalized(actor_norm, mirrored);
        let mcache = net.actor.forward_cached(mobs.view());
        let mmean = mcache.output();
        let mut dm2 = Array2::zeros((idx.len(), ad));
        for r in 0..idx.len() {
            let target = joints::mirror(mean.row(r).as_slice().expect("row"));
            let mut d = [0.0; joints::JOINTS_PER_LEG * 2];
            for j in 0..ad {
                d[j] = mmean[(r, j)] - target[j];
                symmetry += coef * d[j] * d[j] / b;
                dm2[(r, j)] = 2.0 * coef * d[j] / b;
            }
            // target = M μ(o): its gradient is −M dm2
            let back = joints::mirror(&d.map(|x| 2.0 * coef * x / b));
            for j in 0..ad {
                dmean[(r, j)] -= back[j];
            }
        }
        net.actor.backward(&mcache, dm2.view(), &mut actor_grad);
    }
    net.actor.backward(&cache, dmean.view(), &mut actor_grad);

    let ccache = net.critic.forward_cached(cobs.view());
    let v = ccache.output();
    let mut dv = Array2::zeros((idx.len(), 1));
    let mut value = 0.0;
    for (r, &i) in idx.iter().enumerate() {
        let e = v[(r, 0)] - batch.returns[i];
        value += e * e / b;
        dv[(r, 0)] = cfg.value_coef * 2.0 * e / b;
    }
    let mut critic_grad = vec![0.0; net.critic.params.len()];
    net.critic.backward(&ccache, dv.view(), &mut critic_grad);

    MinibatchGrad {
        loss: surrogate + cfg.value_coef * value - cfg.entropy_coef * entropy + symmetry,
        surrogate,
        value,
        entropy,
        symmetry,
        kl,
        actor: actor_grad,
        log_std: dls,
        critic: critic_grad,
    }
}

/// Advantages standardized to zero mean and unit variance.
pub fn normalize_advantages(a: &[f64]) -> Vec<f64> {
    let n = a.len() as f64;
    let m = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    let s = var.sqrt() + 1e-8;
    a.iter().map(|x| (x - m) / s).collect()
}

/// `epochs × minibatches` gradient steps on the clipped surrogate, value
/// loss, entropy bonus and optional mirror loss. `lr` is adapted in place.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut PolicyNetwork,
    opt: &mut PolicyOptimizer,
    batch: &RolloutBatch,
    actor_norm: &RunningNormalizer,
    critic_norm: &RunningNormalizer,
    params: &PpoParams,
    symmetry: bool,
    lr: &mut f64,
    rng: &mut R,
) -> Result<UpdateStats, PpoError> {
    if batch.obs_dim != net.obs_dim() {
        return Err(PpoError::DimensionMismatch { expected: net.obs_dim(), got: batch.obs_dim });
    }
    let n = batch.len();
    let adv = if params.normalize_advantages { normalize_advantages(&batch.advantages) } else { batch.advantages.clone() };
    let cfg = LossConfig {
        clip: params.clip,
        value_coef: params.value_coef,
        entropy_coef: params.entropy_coef,
        symmetry: (symmetry && batch.obs_dim == STACK_DIM).then_some(params.symmetry_coef),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mb = n.div_ceil(params.minibatches);
    for epoch in 0..params.epochs {
        order.shuffle(rng);
        for (k, idx) in order.chunks(mb).enumerate() {
            let mut g = minibatch_loss(net, batch, &adv, idx, actor_norm, critic_norm, &cfg);
            if !g.loss.is_finite() {
                return Err(PpoError::NonFinite { what: "loss", epoch, minibatch: k });
            }
            if params.adaptive_lr && *lr > 0.0 {
                *lr = adapt_lr_within(*lr, g.kl, params.kl_target, params.lr_min, params.lr_max);
            }
            let norm = {
                let sq: f64 = g.actor.iter().chain(&g.log_std).chain(&g.critic).map(|x| x * x).sum();
                sq.sqrt()
            };
            if !norm.is_finite() {
                return Err(PpoError::NonFinite { what: "gradient", epoch, minibatch: k });
            }
            if norm > params.max_grad_norm {
                let s = params.max_grad_norm / norm;
                for x in g.actor.iter_mut().chain(g.log_std.iter_mut()).chain(g.critic.iter_mut()) {
                    *x *= s;
                }
            }
            opt.actor.step(&mut net.actor.params, &g.actor, *lr);
            opt.log_std.step(&mut net.log_std, &g.log_std, *lr);
            opt.critic.step(&mut net.critic.params, &g.critic, *lr);
            stats.surrogate_loss += g.surrogate;
            stats.value_loss += g.value;
            stats.symmetry_loss += g.symmetry;
            stats.kl += g.kl;
            stats.num_updates += 1;
        }
    }
    let u = stats.num_updates as f64;
    stats.surrogate_loss /= u;
    stats.value_loss /= u;
    stats.symmetry_loss /= u;
    stats.kl /= u;
    stats.entropy = net.entropy();
    stats.learning_rate = *lr;
    Ok(stats)
}
