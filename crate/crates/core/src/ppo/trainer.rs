use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bundle::{BundleError, PolicyBundle};
use super::network::{gaussian_log_prob, PolicyNetwork};
use super::update::{ppo_update, PolicyOptimizer, PpoError, RolloutBatch, UpdateStats};
use crate::amp::{amp_training_step, combine_rewards, generate_expert_transitions, AmpError, Discriminator, TransitionBuffer, TRANSITION_DIM};
use crate::config::{GaitSpec, RunScale, RunSettings};
use crate::env::{EnvOptions, VecEnv};
use crate::metrics::{MetricsError, MetricsWriter};
use crate::observation::{RunningNormalizer, ACTION_DIM, CRITIC_DIM, STACK_DIM};
use crate::randomize::lag_curriculum_between;
use crate::reference::squat_depth_for;
use crate::rewards::N_TERMS;

pub use crate::metrics::TrainRecord;

/// Whether the adversarial prior follows the preset, or is forced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmpMode {
    #[default]
    Preset,
    On,
    Off,
}

impl std::str::FromStr for AmpMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "preset" => Ok(AmpMode::Preset),
            "on" => Ok(AmpMode::On),
            "off" => Ok(AmpMode::Off),
            other => Err(format!("unknown AMP mode '{other}' (expected preset, on or off)")),
        }
    }
}

/// Spec with `amp_alpha`/`amp_beta` resolved for `mode`. Forcing AMP on a
/// gait whose preset disables it uses the configured forced pair.
pub fn apply_amp_mode(spec: &GaitSpec, mode: AmpMode) -> GaitSpec {
    let mut s = spec.clone();
    match mode {
        AmpMode::Preset => {}
        AmpMode::Off => {
            s.amp_alpha = 0.0;
            s.amp_beta = 1.0;
        }
        AmpMode::On => {
            if !s.amp_enabled() {
                s.amp_alpha = s.amp.forced_alpha;
                s.amp_beta = s.amp.forced_beta;
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub scale: RunScale,
    pub seed: u64,
    pub amp: AmpMode,
    pub iterations: Option<usize>,
    pub num_envs: Option<usize>,
    /// Run directory for metrics, checkpoints and the config snapshot.
    pub out_dir: Option<PathBuf>,
    pub checkpoint_interval: Option<usize>,
}

impl TrainOptions {
    pub fn new(seed: u64) -> Self {
        TrainOptions { scale: RunScale::Desk, seed, amp: AmpMode::Preset, iterations: None, num_envs: None, out_dir: None, checkpoint_interval: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Amp(#[from] AmpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct TrainOutcome {
    pub spec: GaitSpec,
    pub network: PolicyNetwork,
    pub normalizer: RunningNormalizer,
    pub critic_normalizer: RunningNormalizer,
    pub records: Vec<TrainRecord>,
    pub discriminator: Option<Discriminator>,
}

impl TrainOutcome {
    pub fn bundle(&self) -> PolicyBundle {
        PolicyBundle::new(self.spec.gait_name, &self.network, &self.normalizer)
    }
}

pub struct Trainer {
    spec: GaitSpec,
    settings: RunSettings,
    env: VecEnv,
    net: PolicyNetwork,
    opt: PolicyOptimizer,
    actor_norm: RunningNormalizer,
    critic_norm: RunningNormalizer,
    lr: f64,
    disc: Option<Discriminator>,
    expert: Option<TransitionBuffer>,
    rng: ChaCha8Rng,
    amp_rng: ChaCha8Rng,
    iteration: usize,
    obs_scratch: Vec<f64>,
    critic_scratch: Vec<f64>,
}

/// Stream ids carved out of the master seed, disjoint from the per-env streams.
const POLICY_STREAM: u64 = u64::MAX;
const AMP_STREAM: u64 = u64::MAX - 1;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

fn normalized_rows(norm: &RunningNormalizer, raw: &[f64], dim: usize) -> Array2<f64> {
    let n = raw.len() / dim;
    let mut out = Array2::zeros((n, dim));
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        norm.normalize_into(&raw[i * dim..(i + 1) * dim], row.as_slice_mut().expect("row"));
    }
    out
}

impl Trainer {
    pub fn new(spec: &GaitSpec, options: &TrainOptions) -> Result<Self, TrainError> {
        let problems = crate::config::validate(spec);
        if !problems.is_empty() {
            return Err(TrainError::Config(problems));
        }
        let spec = apply_amp_mode(spec, options.amp);
        let mut settings = spec.settings(options.scale);
        if let Some(n) = options.num_envs {
            settings.num_envs = n;
        }
        if let Some(n) = options.iterations {
            settings.max_iterations = n;
        }
        if settings.num_envs == 0 || settings.max_iterations == 0 {
            return Err(TrainError::Config(vec!["num_envs and max_iterations must be > 0".into()]));
        }
        let seed = options.seed;
        let mut rng = stream(seed, POLICY_STREAM);
        let net = PolicyNetwork::new(&settings.actor_hidden, &settings.critic_hidden, spec.ppo.init_log_std, &mut rng);
        let opt = PolicyOptimizer::new(&net);
        let mut amp_rng = stream(seed, AMP_STREAM);
        let (disc, expert) = if spec.amp_enabled() {
            let d = Discriminator::new(TRANSITION_DIM, &settings.discriminator_hidden, &mut amp_rng);
            let e = generate_expert_transitions(&spec, settings.expert_transitions, spec.amp.expert_noise, seed.wrapping_add(0x5eed))?;
            (Some(d), Some(e))
        } else {
            (None, None)
        };
        let env = VecEnv::new(&spec, settings.num_envs, seed, EnvOptions::default());
        let clip = spec.ppo.obs_clip;
        let mut t = Trainer {
            lr: spec.ppo.learning_rate,
            spec,
            settings,
            env,
            net,
            opt,
            actor_norm: RunningNormalizer::with_clip(STACK_DIM, clip),
            critic_norm: RunningNormalizer::with_clip(CRITIC_DIM, clip),
            disc,
            expert,
            rng,
            amp_rng,
            iteration: 0,
            obs_scratch: Vec::new(),
            critic_scratch: Vec::new(),
        };
        t.apply_curriculum();
        t.env.reset_all();
        t.warm_up_normalizers();
        Ok(t)
    }

    /// Fits both normalizers on one rollout of the initial policy, then
    /// restarts every episode.
    fn warm_up_normalizers(&mut self) {
        let std: Vec<f64> = self.net.log_std.iter().map(|l| l.exp()).collect();
        let mut obs_rows = Vec::new();
        let mut critic_rows = Vec::new();
        for _ in 0..self.settings.steps_per_env {
            self.env.actor_obs_all(&mut self.obs_scratch);
            self.env.critic_obs_all(&mut self.critic_scratch);
            obs_rows.extend_from_slice(&self.obs_scratch);
            critic_rows.extend_from_slice(&self.critic_scratch);
            let means = self.net.action_mean(normalized_rows(&self.actor_norm, &self.obs_scratch, STACK_DIM).view());
            let mut actions = means.into_raw_vec_and_offset().0;
            for (i, a) in actions.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *a += std[i % ACTION_DIM] * z;
            }
            self.env.step(&actions, None);
        }
        self.actor_norm.update_rows(&obs_rows);
        self.critic_norm.update_rows(&critic_rows);
        self.env.reset_all();
    }

    pub fn spec(&self) -> &GaitSpec {
        &self.spec
    }

    pub fn settings(&self) -> &RunSettings {
        &self.settings
    }

    pub fn amp_enabled(&self) -> bool {
        self.disc.is_some()
    }

    pub fn network(&self) -> &PolicyNetwork {
        &self.net
    }

    pub fn normalizer(&self) -> &RunningNormalizer {
        &self.actor_norm
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn bundle(&self) -> PolicyBundle {
        PolicyBundle::new(self.spec.gait_name, &self.net, &self.actor_norm)
    }

    fn lag_schedule_end(&self) -> usize {
        (self.spec.randomization.lag_curriculum_fraction * self.settings.max_iterations as f64).round() as usize
    }

    fn apply_curriculum(&mut self) {
        let r = &self.spec.randomization;
        let min_lag = lag_curriculum_between(self.iteration, self.lag_schedule_end(), r.lag_start, r.action_lag[0]);
        let depth = squat_depth_for(self.iteration, &self.settings.jump);
        self.env.set_curriculum(min_lag, depth);
    }

    /// Collects one rollout and applies one PPO (and discriminator) update.
    pub fn iterate(&mut self) -> Result<TrainRecord, TrainError> {
        let n = self.env.num_envs();
        let steps = self.settings.steps_per_env;
        let mut batch = RolloutBatch::new(n, steps, STACK_DIM, CRITIC_DIM, ACTION_DIM);
        batch.old_log_std = self.net.log_std.clone();
        let mut task = Vec::with_capacity(n * steps);
        let mut time_outs = Vec::with_capacity(n * steps);
        let mut amp_rows = self.disc.as_ref().map(|_| Vec::with_capacity(n * steps * TRANSITION_DIM));
        let mut step_rows = Vec::new();
        let mut terms = [0.0; N_TERMS];
        let (mut track_sum, mut track_n) = (0.0, 0usize);
        let mut fell = vec![false; n];
        let mut episodes = Vec::new();
        let (mut max_apex, mut max_knee) = (f64::NEG_INFINITY, 0.0f64);
        let mut divergences = 0;
        let std: Vec<f64> = self.net.log_std.iter().map(|l| l.exp()).collect();

        for _ in 0..steps {
            self.env.actor_obs_all(&mut self.obs_scratch);
            self.env.critic_obs_all(&mut self.critic_scratch);
            let obs = normalized_rows(&self.actor_norm, &self.obs_scratch, STACK_DIM);
            let cobs = normalized_rows(&self.critic_norm, &self.critic_scratch, CRITIC_DIM);
            let means = self.net.action_mean(obs.view());
            let values = self.net.value(cobs.view());
            let mut actions = vec![0.0; n * ACTION_DIM];
            for e in 0..n {
                let mu = means.row(e);
                let mu = mu.as_slice().expect("row");
                let a = &mut actions[e * ACTION_DIM..(e + 1) * ACTION_DIM];
                for j in 0..ACTION_DIM {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    a[j] = mu[j] + std[j] * z;
                }
                batch.log_probs.push(gaussian_log_prob(a, mu, &self.net.log_std));
                batch.means.extend_from_slice(mu);
            }
            batch.obs.extend_from_slice(&self.obs_scratch);
            batch.critic_obs.extend_from_slice(&self.critic_scratch);
            batch.actions.extend_from_slice(&actions);
            batch.values.extend_from_slice(&values);
            let infos = self.env.step(&actions, if amp_rows.is_some() { Some(&mut step_rows) } else { None });
            if let Some(rows) = amp_rows.as_mut() {
                rows.extend_from_slice(&step_rows);
            }
            for (e, info) in infos.iter().enumerate() {
                task.push(info.reward.total);
                batch.dones.push(info.done);
                time_outs.push(info.time_out);
                for (k, t) in info.reward.terms.iter().enumerate() {
                    terms[k] += t.weighted;
                }
                if info.tracking_error.is_finite() {
                    track_sum += info.tracking_error;
                    track_n += 1;
                }
                fell[e] |= info.fallen;
                if info.diverged {
                    divergences += 1;
                }
                if let Some((_, len)) = info.episode {
                    episodes.push(len as f64);
                }
                max_apex = max_apex.max(info.apex_height);
                max_knee = max_knee.max(info.knee_flexion);
            }
        }
        self.env.critic_obs_all(&mut self.critic_scratch);
        batch.last_values = self.net.value(normalized_rows(&self.critic_norm, &self.critic_scratch, CRITIC_DIM).view());

        let scale = self.spec.reward_params.task_reward_scale;
        let (amp_rewards, disc_loss) = match (self.disc.as_mut(), amp_rows.as_ref()) {
            (Some(d), Some(rows)) => {
                let view = ndarray::ArrayView2::from_shape((n * steps, TRANSITION_DIM), rows).expect("rollout rows");
                let step = amp_training_step(d, view, self.expert.as_ref().expect("expert buffer"), &self.spec.amp, self.spec.amp_alpha, &mut self.amp_rng)?;
                (Some(step.rewards), step.loss.loss)
            }
            _ => (None, f64::NAN),
        };
        let gamma = self.spec.ppo.gamma;
        batch.rewards = (0..n * steps)
            .map(|i| {
                let r_task = scale * task[i];
                match &amp_rewards {
                    Some(a) => combine_rewards(a[i], r_task, self.spec.amp_beta),
                    None => r_task,
                }
            })
            .collect();
        let mean_train = batch.rewards.iter().sum::<f64>() / (n * steps) as f64;
        for i in 0..n * steps {
            if time_outs[i] {
                batch.rewards[i] += gamma * batch.values[i];
            }
        }
        batch.compute_returns(gamma, self.spec.ppo.lam);

        let stats: UpdateStats = ppo_update(
            &mut self.net,
            &mut self.opt,
            &batch,
            &self.actor_norm,
            &self.critic_norm,
            &self.spec.ppo,
            self.spec.sym_loss,
            &mut self.lr,
            &mut self.rng,
        )?;
        self.actor_norm.update_rows(&batch.obs);
        self.critic_norm.update_rows(&batch.critic_obs);

        let total = (n * steps) as f64;
        let record = TrainRecord {
            iteration: self.iteration,
            mean_reward: task.iter().sum::<f64>() / total,
            mean_train_reward: mean_train,
            term_means: terms.map(|t| t / total),
            tracking_error: if track_n > 0 { track_sum / track_n as f64 } else { f64::NAN },
            failure_rate: fell.iter().filter(|&&f| f).count() as f64 / n as f64,
            mean_episode_length: if episodes.is_empty() { f64::NAN } else { episodes.iter().sum::<f64>() / episodes.len() as f64 },
            kl: stats.kl,
            learning_rate: stats.learning_rate,
            surrogate_loss: stats.surrogate_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            symmetry_loss: stats.symmetry_loss,
            disc_loss,
            amp_reward: amp_rewards.as_ref().map_or(0.0, |a| a.iter().sum::<f64>() / total),
            max_apex,
            max_knee_flexion: max_knee,
            squat_depth: self.env.squat_depth(),
            min_lag: lag_curriculum_between(
                self.iteration,
                self.lag_schedule_end(),
                self.spec.randomization.lag_start,
                self.spec.randomization.action_lag[0],
            ),
            divergences,
        };
        self.iteration += 1;
        self.apply_curriculum();
        Ok(record)
    }

    /// Trains for the configured number of iterations, calling `on_record` after each.
    pub fn run(mut self, options: &TrainOptions, mut on_record: impl FnMut(&TrainRecord)) -> Result<TrainOutcome, TrainError> {
        let mut writer = match &options.out_dir {
            Some(dir) => Some(self.prepare_run_dir(dir, options)?),
            None => None,
        };
        let interval = options.checkpoint_interval.unwrap_or(self.spec.ppo.checkpoint_interval);
        let mut records = Vec::with_capacity(self.settings.max_iterations);
        while self.iteration < self.settings.max_iterations {
            let r = self.iterate()?;
            if let Some(w) = writer.as_mut() {
                w.write(&r)?;
            }
            on_record(&r);
            records.push(r);
            if let (Some(dir), true) = (&options.out_dir, interval > 0 && self.iteration.is_multiple_of(interval)) {
                self.bundle().save(&dir.join("checkpoints").join(format!("iter_{:06}.mgpb", self.iteration)))?;
            }
        }
        if let Some(dir) = &options.out_dir {
            self.bundle().save(&dir.join("policy.mgpb"))?;
        }
        Ok(TrainOutcome {
            spec: self.spec,
            network: self.net,
            normalizer: self.actor_norm,
            critic_normalizer: self.critic_norm,
            records,
            discriminator: self.disc,
        })
    }

    fn prepare_run_dir(&self, dir: &Path, options: &TrainOptions) -> Result<MetricsWriter, TrainError> {
        std::fs::create_dir_all(dir.join("checkpoints"))?;
        std::fs::write(dir.join("config.toml"), self.spec.to_toml())?;
        let scale = match options.scale {
            RunScale::Desk => "desk",
            RunScale::Paper => "paper",
        };
        let amp = match options.amp {
            AmpMode::Preset => "preset",
            AmpMode::On => "on",
            AmpMode::Off => "off",
        };
        let run = format!(
            "version = \"{}\"\nseed = {}\nscale = \"{scale}\"\namp = \"{amp}\"\nnum_envs = {}\nmax_iterations = {}\n",
            env!("CARGO_PKG_VERSION"),
            options.seed,
            self.settings.num_envs,
            self.settings.max_iterations,
        );
        std::fs::write(dir.join("run.toml"), run)?;
        Ok(MetricsWriter::create(&dir.join("metrics.csv"))?)
    }
}

pub fn train_with(spec: &GaitSpec, options: &TrainOptions) -> Result<TrainOutcome, TrainError> {
    Trainer::new(spec, options)?.run(options, |_| {})
}

/// Desk-scale training with the preset AMP setting.
pub fn train(spec: &GaitSpec, seed: u64) -> Result<TrainOutcome, TrainError> {
    train_with(spec, &TrainOptions::new(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Gait;

    fn tiny(gait: Gait) -> (GaitSpec, TrainOptions) {
        let mut spec = GaitSpec::preset(gait);
        spec.desk.actor_hidden = vec![16];
        spec.desk.critic_hidden = vec![16];
        spec.desk.discriminator_hidden = vec![16];
        spec.desk.expert_transitions = 500;
        spec.steps_per_env = 6;
        let mut o = TrainOptions::new(3);
        o.iterations = Some(3);
        o.num_envs = Some(4);
        (spec, o)
    }

    #[test]
    fn amp_off_gait_builds_no_discriminator() {
        let (spec, o) = tiny(Gait::Running);
        let t = Trainer::new(&spec, &o).unwrap();
        assert!(!t.amp_enabled());
        let out = t.run(&o, |_| {}).unwrap();
        assert!(out.discriminator.is_none());
        assert!(out.records.iter().all(|r| r.disc_loss.is_nan() && r.amp_reward == 0.0));
    }

    #[test]
    fn amp_modes() {
        let (spec, _) = tiny(Gait::Jumping);
        let on = apply_amp_mode(&spec, AmpMode::On);
        assert_eq!((on.amp_alpha, on.amp_beta), (0.3, 0.8));
        let off = apply_amp_mode(&GaitSpec::preset(Gait::Walking), AmpMode::Off);
        assert_eq!((off.amp_alpha, off.amp_beta), (0.0, 1.0));
        assert_eq!("ON".parse::<AmpMode>().unwrap(), AmpMode::On);
    }

    #[test]
    fn records_per_iteration_and_repeatable() {
        let (spec, o) = tiny(Gait::Walking);
        let a = train_with(&spec, &o).unwrap();
        let b = train_with(&spec, &o).unwrap();
        assert_eq!(a.records.len(), 3);
        let va: Vec<_> = a.records.iter().map(|r| r.values()).collect();
        let vb: Vec<_> = b.records.iter().map(|r| r.values()).collect();
        assert_eq!(va, vb);
        assert!(a.records.iter().all(|r| (0.0..=1.0).contains(&r.failure_rate)));
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn invalid_spec_rejected() {
        let (mut spec, o) = tiny(Gait::Walking);
        spec.stance_ratio = 1.5;
        assert!(matches!(Trainer::new(&spec, &o), Err(TrainError::Config(_))));
    }
}
