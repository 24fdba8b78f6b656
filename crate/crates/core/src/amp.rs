//! Adversarial motion prior: transition features, expert clips, the
//! least-squares discriminator with gradient penalty, and reward shaping.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{Gait, GaitSpec};
use crate::nn::{clip_grad_norm, gather_rows, Activation, Adam, Mlp};
use crate::reference::{jump_reference_with, periodic_reference_scaled, PhaseState};
use crate::sim::DEFAULT_POSE;
use crate::{JointVector, NUM_JOINTS};

/// Joint offsets (12), scaled joint velocities (12), projected gravity (3).
pub const FEATURE_DIM: usize = 27;
pub const TRANSITION_DIM: usize = 2 * FEATURE_DIM;
pub const FEATURE_VEL_SCALE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmpParams {
    /// Gradient-penalty coefficient.
    pub lambda_gp: f64,
    pub learning_rate: f64,
    /// Full-scale discriminator widths.
    pub hidden: Vec<usize>,
    /// Full-scale expert buffer size.
    pub expert_transitions: usize,
    /// Std of Gaussian noise added to expert features.
    pub expert_noise: f64,
    pub max_grad_norm: f64,
    /// α and β used when AMP is forced on for a gait whose preset disables it.
    pub forced_alpha: f64,
    pub forced_beta: f64,
}

impl Default for AmpParams {
    fn default() -> Self {
        AmpParams {
            lambda_gp: 10.0,
            learning_rate: 1e-4,
            hidden: vec![1024, 512, 256],
            expert_transitions: 200_000,
            expert_noise: 0.01,
            max_grad_norm: 1.0,
            forced_alpha: 0.3,
            forced_beta: 0.8,
        }
    }
}

impl AmpParams {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.lambda_gp >= 0.0) {
            v.push("amp.lambda_gp must be >= 0".into());
        }
        if !(self.learning_rate >= 0.0) {
            v.push("amp.learning_rate must be >= 0".into());
        }
        if !(self.expert_noise >= 0.0) {
            v.push("amp.expert_noise must be >= 0".into());
        }
        if self.expert_transitions == 0 {
            v.push("amp.expert_transitions must be > 0".into());
        }
        if !(self.forced_alpha > 0.0) || !(0.0..=1.0).contains(&self.forced_beta) {
            v.push("amp.forced_alpha must be > 0 and forced_beta in [0,1]".into());
        }
        v
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AmpError {
    #[error("transition dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty {0} batch")]
    EmptyBatch(&'static str),
    #[error("AMP is disabled for {0} (amp_alpha = 0); no expert clips are generated")]
    Refused(Gait),
    #[error("expert buffer file: {0}")]
    Io(#[from] std::io::Error),
    #[error("expert buffer file is malformed: {0}")]
    Format(String),
}

/// Discriminator features of one state.
pub fn amp_features(q: &JointVector, dq: &JointVector, gravity: &[f64; 3], q_default: &JointVector) -> [f64; FEATURE_DIM] {
    let mut f = [0.0; FEATURE_DIM];
    for i in 0..NUM_JOINTS {
        f[i] = q[i] - q_default[i];
        f[NUM_JOINTS + i] = dq[i] * FEATURE_VEL_SCALE;
    }
    f[24..27].copy_from_slice(gravity);
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionSource {
    Expert,
    Policy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub s_next: Vec<f64>,
    pub source: TransitionSource,
}

impl Transition {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.s.clone();
        v.extend_from_slice(&self.s_next);
        v
    }
}

/// Ring buffer of concatenated `(s, s')` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBuffer {
    dim: usize,
    capacity: usize,
    data: Vec<f64>,
    len: usize,
    head: usize,
}

impl TransitionBuffer {
    /// `dim` is the length of one concatenated transition.
    pub fn new(dim: usize, capacity: usize) -> Self {
        assert!(capacity > 0);
        TransitionBuffer { dim, capacity, data: vec![0.0; dim * capacity], len: 0, head: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<(), AmpError> {
        if row.len() != self.dim {
            return Err(AmpError::DimensionMismatch { expected: self.dim, got: row.len() });
        }
        let o = self.head * self.dim;
        self.data[o..o + self.dim].copy_from_slice(row);
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    pub fn push(&mut self, t: &Transition) -> Result<(), AmpError> {
        self.push_row(&t.concat())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        assert!(i < self.len);
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `n` rows drawn uniformly (with replacement) from the occupied slots.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len)).collect();
        gather_rows(&self.data, self.dim, &idx)
    }

    /// Header `u64 dim, u64 count` then `count × dim` f64 values, little endian.
    pub fn export(&self, path: &Path) -> Result<(), AmpError> {
        let mut out = Vec::with_capacity(16 + self.len * self.dim * 8);
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.len as u64).to_le_bytes());
        for i in 0..self.len {
            for v in self.row(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn import(path: &Path) -> Result<Self, AmpError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 16 {
            return Err(AmpError::Format("truncated header".into()));
        }
        let dim = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")) as usize;
        let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let need = dim.checked_mul(count).and_then(|n| n.checked_mul(8)).ok_or_else(|| AmpError::Format("header overflow".into()))?;
        if bytes.len() - 16 != need || dim == 0 || count == 0 {
            return Err(AmpError::Format(format!("expected {need} body bytes for {count}×{dim}, found {}", bytes.len() - 16)));
        }
        let mut buf = TransitionBuffer::new(dim, count);
        for (k, chunk) in bytes[16..].chunks_exact(8).enumerate() {
            buf.data[k] = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        buf.len = count;
        buf.head = 0;
        Ok(buf)
    }
}

/// Joint pose (absolute) of the reference at phase `p`.
fn reference_pose(spec: &GaitSpec, squat_depth: f64, p: PhaseState) -> JointVector {
    let r = if spec.gait_name.is_periodic() {
        periodic_reference_scaled(p, spec.ref_scale, spec.hip_scale)
    } else {
        jump_reference_with(p, squat_depth, &spec.jump)
    };
    let mut q = DEFAULT_POSE;
    for i in 0..NUM_JOINTS {
        q[i] += r.q_ref[i];
    }
    q
}

/// Expert features at phase `phi` with finite-difference joint velocity over one policy step.
fn expert_state(spec: &GaitSpec, depth: f64, phi: f64, dphi: f64, dt: f64) -> [f64; FEATURE_DIM] {
    let q0 = reference_pose(spec, depth, PhaseState::new(phi));
    let q1 = reference_pose(spec, depth, PhaseState::new(phi + dphi));
    let mut dq = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        dq[i] = (q1[i] - q0[i]) / dt;
    }
    amp_features(&q0, &dq, &[0.0, 0.0, -1.0], &DEFAULT_POSE)
}

/// Synthetic expert clips rolled out of the gait's reference trajectory,
/// without the AMP-enabled check.
pub fn expert_transitions_unchecked(spec: &GaitSpec, count: usize, noise: f64, seed: u64) -> TransitionBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = spec.control.policy_dt();
    let dphi = dt / spec.cycle_time;
    let depth = spec.jump.squat_depth_max;
    let dist = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("finite noise"));
    let mut buf = TransitionBuffer::new(TRANSITION_DIM, count);
    let mut row = vec![0.0; TRANSITION_DIM];
    for _ in 0..count {
        let phi: f64 = rng.random_range(0.0..1.0);
        row[..FEATURE_DIM].copy_from_slice(&expert_state(spec, depth, phi, dphi, dt));
        row[FEATURE_DIM..].copy_from_slice(&expert_state(spec, depth, phi + dphi, dphi, dt));
        if let Some(d) = &dist {
            row.iter_mut().for_each(|v| *v += d.sample(&mut rng));
        }
        buf.push_row(&row).expect("fixed dimension");
    }
    buf
}

/// Expert buffer for an AMP gait; refused when `amp_alpha = 0`.
pub fn generate_expert_transitions(spec: &GaitSpec, count: usize, noise: f64, seed: u64) -> Result<TransitionBuffer, AmpError> {
    if !spec.amp_enabled() {
        return Err(AmpError::Refused(spec.gait_name));
    }
    Ok(expert_transitions_unchecked(spec, count, noise, seed))
}

/// `α · max(0, 1 − ¼ (D − 1)²)`.
pub fn amp_reward(logit: f64, alpha: f64) -> f64 {
    let d = logit - 1.0;
    alpha * (1.0 - 0.25 * d * d).max(0.0)
}

/// `(1 − β) r_amp + β r_task`. At `β = 1` the task reward is returned unchanged.
pub fn combine_rewards(r_amp: f64, r_task: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        return r_task;
    }
    (1.0 - beta) * r_amp + beta * r_task
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub net: Mlp,
    pub optimizer: Adam,
}

/// Loss components and their combined weight gradient.
#[derive(Debug, Clone)]
pub struct DiscriminatorLoss {
    pub loss: f64,
    pub policy_term: f64,
    pub expert_term: f64,
    /// Mean squared input-gradient norm on expert samples.
    pub gradient_penalty: f64,
    pub grad: Vec<f64>,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let net = Mlp::init(&sizes, Activation::Relu, std::f64::consts::SQRT_2, 1.0, rng);
        let n = net.params.len();
        Discriminator { net, optimizer: Adam::new(n) }
    }

    pub fn from_net(net: Mlp) -> Self {
        let n = net.params.len();
        Discriminator { net, optimizer: Adam::new(n) }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn forward(&self, t: &Transition) -> Result<f64, AmpError> {
        let x = t.concat();
        if x.len() != self.input_dim() {
            return Err(AmpError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(self.net.forward_one(&x)[0])
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, AmpError> {
        if x.ncols() != self.input_dim() {
            return Err(AmpError::DimensionMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(self.net.forward(x).into_raw_vec_and_offset().0)
    }
}

pub fn discriminator_forward(d: &Discriminator, t: &Transition) -> Result<f64, AmpError> {
    d.forward(t)
}

/// `E_policy[(D+1)²] + E_expert[(D−1)²] + λ E_expert[‖∇D‖²]` and its weight gradient.
pub fn discriminator_loss(d: &Discriminator, policy: ArrayView2<f64>, expert: ArrayView2<f64>, lambda: f64) -> Result<DiscriminatorLoss, AmpError> {
    if policy.nrows() == 0 {
        return Err(AmpError::EmptyBatch("policy"));
    }
    if expert.nrows() == 0 {
        return Err(AmpError::EmptyBatch("expert"));
    }
    for x in [&policy, &expert] {
        if x.ncols() != d.input_dim() {
            return Err(AmpError::DimensionMismatch { expected: d.input_dim(), got: x.ncols() });
        }
    }
    let net = &d.net;
    let mut grad = vec![0.0; net.params.len()];
    let (np, ne) = (policy.nrows() as f64, expert.nrows() as f64);

    let cp = net.forward_cached(policy);
    let dp = cp.output().mapv(|v| 2.0 * (v + 1.0) / np);
    let policy_term = cp.output().iter().map(|v| (v + 1.0) * (v + 1.0)).sum::<f64>() / np;
    net.backward(&cp, dp.view(), &mut grad);

    let ce = net.forward_cached(expert);
    let de = ce.output().mapv(|v| 2.0 * (v - 1.0) / ne);
    let expert_term = ce.output().iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>() / ne;
    net.backward(&ce, de.view(), &mut grad);

    let gradient_penalty = if lambda != 0.0 {
        net.input_gradient_penalty(expert, lambda / ne, &mut grad) / ne
    } else {
        net.input_gradient(expert).iter().map(|v| v * v).sum::<f64>() / ne
    };
    Ok(DiscriminatorLoss {
        loss: policy_term + expert_term + lambda * gradient_penalty,
        policy_term,
        expert_term,
        gradient_penalty,
        grad,
    })
}

#[derive(Debug, Clone)]
pub struct AmpStep {
    pub loss: DiscriminatorLoss,
    /// `amp_reward` of every policy transition, post-update.
    pub rewards: Vec<f64>,
    pub policy_logit_mean: f64,
    pub expert_logit_mean: f64,
}

/// One gradient step on the discriminator loss using the rollout's policy
/// transitions and an equally sized expert sample, then AMP rewards for the
/// rollout from the updated discriminator.
pub fn amp_training_step<R: Rng + ?Sized>(
    d: &mut Discriminator,
    policy: ArrayView2<f64>,
    expert: &TransitionBuffer,
    params: &AmpParams,
    alpha: f64,
    rng: &mut R,
) -> Result<AmpStep, AmpError> {
    let expert_batch = expert.sample(policy.nrows().max(1), rng);
    let mut loss = discriminator_loss(d, policy, expert_batch.view(), params.lambda_gp)?;
    let mut g = loss.grad.clone();
    clip_grad_norm(&mut g, params.max_grad_norm);
    d.optimizer.step(&mut d.net.params, &g, params.learning_rate);
    loss.grad = g;
    let logits = d.logits(policy)?;
    let expert_logits = d.logits(expert_batch.view())?;
    let n = logits.len() as f64;
    Ok(AmpStep {
        rewards: logits.iter().map(|&l| amp_reward(l, alpha)).collect(),
        policy_logit_mean: logits.iter().sum::<f64>() / n,
        expert_logit_mean: expert_logits.iter().sum::<f64>() / expert_logits.len() as f64,
        loss,
    })
}
