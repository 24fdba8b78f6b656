//! Policy evaluation without learning.

use std::io::Write;
use std::path::PathBuf;

use crate::config::GaitSpec;
use crate::env::{EnvOptions, VecEnv};
use crate::joints::label;
use crate::observation::{ACTION_DIM, STACK_DIM};
use crate::ppo::PolicyBundle;
use crate::NUM_JOINTS;

/// Anything that maps a raw stacked observation to an action.
pub trait Controller {
    fn act(&mut self, raw_obs: &[f64]) -> Vec<f64>;
}

impl Controller for PolicyBundle {
    fn act(&mut self, raw_obs: &[f64]) -> Vec<f64> {
        self.forward(raw_obs)
    }
}

/// Always outputs the zero action (hold the default pose).
pub struct ZeroPolicy;

impl Controller for ZeroPolicy {
    fn act(&mut self, _: &[f64]) -> Vec<f64> {
        vec![0.0; ACTION_DIM]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    pub zero_lin_vel: bool,
    pub randomize: bool,
    /// Episode horizon override, policy steps.
    pub max_steps: Option<usize>,
    /// Squat depth of the jump reference; defaults to the curriculum maximum.
    pub squat_depth: Option<f64>,
    /// CSV trajectory of the first episode.
    pub dump: Option<PathBuf>,
}

impl EvalOptions {
    pub fn new(episodes: usize, seed: u64) -> Self {
        EvalOptions { episodes, seed, zero_lin_vel: false, randomize: false, max_steps: None, squat_depth: None, dump: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub success_rate: f64,
    pub fall_rate: f64,
    /// Mean hip/knee `|q − q_ref|`, rad.
    pub tracking_error: f64,
    /// RMS of the horizontal projected-gravity norm.
    pub posture_stability: f64,
    pub mean_episode_length: f64,
    pub mean_reward: f64,
    /// Median over episodes of the highest base height reached, m.
    pub apex_height: f64,
    /// Median over episodes of the largest knee flexion, rad.
    pub max_knee_flexion: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("episodes must be > 0")]
    NoEpisodes,
    #[error("policy was trained for {bundle} but evaluation gait is {spec}")]
    GaitMismatch { bundle: String, spec: String },
    #[error("policy expects {got}-dim observations and {actions} actions; environment uses {expected} and {ACTION_DIM}")]
    Dimension { expected: usize, got: usize, actions: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Checks that `bundle` was exported for `spec`'s gait and the actor dimensions.
pub fn check_bundle(bundle: &PolicyBundle, spec: &GaitSpec) -> Result<(), EvalError> {
    if bundle.gait != spec.gait_name {
        return Err(EvalError::GaitMismatch { bundle: bundle.gait.to_string(), spec: spec.gait_name.to_string() });
    }
    if bundle.obs_dim() != STACK_DIM || bundle.action_dim() != ACTION_DIM {
        return Err(EvalError::Dimension { expected: STACK_DIM, got: bundle.obs_dim(), actions: bundle.action_dim() });
    }
    Ok(())
}

/// Runs `options.episodes` episodes, one per environment slot, each until
/// its first termination or time-out.
pub fn evaluate<C: Controller>(spec: &GaitSpec, controller: &mut C, options: &EvalOptions) -> Result<EvalMetrics, EvalError> {
    if options.episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let mut spec = spec.clone();
    if let Some(steps) = options.max_steps {
        spec.task.episode_length_s = steps as f64 * spec.control.policy_dt();
    }
    let n = options.episodes;
    let env_opts = EnvOptions { randomize: options.randomize, zero_lin_vel: options.zero_lin_vel };
    let mut env = VecEnv::new(&spec, n, options.seed, env_opts);
    let depth = options.squat_depth.unwrap_or(spec.jump.squat_depth_max);
    env.set_curriculum(spec.randomization.action_lag[0], depth);
    env.reset_all();

    let mut dump = match &options.dump {
        Some(p) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
            let mut header = vec!["t".to_string(), "x".into(), "z".into(), "pitch".into()];
            header.extend((0..NUM_JOINTS).map(|i| format!("q_{}", label(i))));
            header.extend(["contact_l".to_string(), "contact_r".into()]);
            writeln!(f, "{}", header.join(","))?;
            Some(f)
        }
        None => None,
    };

    let mut finished = vec![false; n];
    let mut fell = vec![false; n];
    let mut lengths = vec![0usize; n];
    let mut apex = vec![f64::NEG_INFINITY; n];
    let mut knee = vec![0.0f64; n];
    let (mut track, mut track_n, mut tilt2, mut reward) = (0.0, 0usize, 0.0, 0.0);
    let mut actions = vec![0.0; n * ACTION_DIM];
    while finished.iter().any(|f| !f) {
        for e in 0..n {
            let a = controller.act(env.actor_obs(e));
            actions[e * ACTION_DIM..(e + 1) * ACTION_DIM].copy_from_slice(&a);
        }
        let infos = env.step(&actions, None);
        for (e, info) in infos.iter().enumerate() {
            if finished[e] {
                continue;
            }
            lengths[e] += 1;
            reward += info.reward.total;
            if info.tracking_error.is_finite() {
                track += info.tracking_error;
                tilt2 += info.posture_tilt * info.posture_tilt;
                track_n += 1;
            }
            apex[e] = apex[e].max(info.base_height);
            knee[e] = knee[e].max(info.knee_flexion);
            if e == 0 && !info.done {
                if let Some(f) = dump.as_mut() {
                    let s = env.state(0);
                    let mut row = vec![s.time, s.base_x(), s.base_height(), s.pitch()];
                    row.extend(s.joint_pos());
                    let c = s.foot_contact();
                    row.extend([c[0] as u8 as f64, c[1] as u8 as f64]);
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    writeln!(f, "{}", cells.join(","))?;
                }
            }
            if info.done {
                finished[e] = true;
                fell[e] = info.fallen;
            }
        }
    }
    if let Some(mut f) = dump {
        f.flush()?;
    }
    let falls = fell.iter().filter(|&&f| f).count() as f64;
    let steps: usize = lengths.iter().sum();
    Ok(EvalMetrics {
        episodes: n,
        success_rate: 1.0 - falls / n as f64,
        fall_rate: falls / n as f64,
        tracking_error: if track_n > 0 { track / track_n as f64 } else { f64::NAN },
        posture_stability: if track_n > 0 { (tilt2 / track_n as f64).sqrt() } else { f64::NAN },
        mean_episode_length: steps as f64 / n as f64,
        mean_reward: reward / steps.max(1) as f64,
        apex_height: median(&mut apex),
        max_knee_flexion: median(&mut knee),
    })
}

/// Loads a bundle, checks it against `spec` and evaluates it.
pub fn evaluate_bundle(spec: &GaitSpec, bundle: &PolicyBundle, options: &EvalOptions) -> Result<EvalMetrics, EvalError> {
    check_bundle(bundle, spec)?;
    let mut b = bundle.clone();
    evaluate(spec, &mut b, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Gait;

    #[test]
    fn zero_episodes_rejected() {
        let spec = GaitSpec::preset(Gait::Walking);
        assert!(matches!(evaluate(&spec, &mut ZeroPolicy, &EvalOptions::new(0, 1)), Err(EvalError::NoEpisodes)));
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    struct Flail;
    impl Controller for Flail {
        fn act(&mut self, _: &[f64]) -> Vec<f64> {
            let mut a = vec![0.0; ACTION_DIM];
            // drive both hips hard forward: the torso pitches over
            a[0] = -10.0;
            a[6] = -10.0;
            a[3] = 10.0;
            a[9] = 10.0;
            a
        }
    }

    #[test]
    fn falling_policy_scores_zero_success() {
        let spec = GaitSpec::preset(Gait::Walking);
        let m = evaluate(&spec, &mut Flail, &EvalOptions { max_steps: Some(200), ..EvalOptions::new(3, 2) }).unwrap();
        assert_eq!(m.success_rate, 0.0);
        assert_eq!(m.fall_rate, 1.0);
    }
}
