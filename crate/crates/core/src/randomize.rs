//! Per-episode domain randomization and the action-lag curriculum.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Gait;
use crate::control::ActuatorScales;

/// Uniform draw on the closed interval `[lo, hi]`; a degenerate range returns `lo`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    let [lo, hi] = range;
    if hi <= lo {
        return lo;
    }
    rng.random_range(lo..=hi)
}

/// Independent generator for environment `env` under `master_seed`.
pub fn env_rng(master_seed: u64, env: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(env + 1);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationRanges {
    /// Master switch for physical parameters, lag, pushes and init noise.
    pub enabled: bool,
    pub friction: [f64; 2],
    pub restitution: [f64; 2],
    /// Added torso mass, kg.
    pub base_mass_delta: [f64; 2],
    pub inertia_scale: [f64; 2],
    /// Torso COM shift along the body x axis, m.
    pub com_offset: [f64; 2],
    pub motor_strength: [f64; 2],
    pub kp_scale: [f64; 2],
    pub kd_scale: [f64; 2],
    pub joint_friction: [f64; 2],
    pub joint_damping: [f64; 2],
    pub armature: [f64; 2],
    /// Physics ticks; the lower end is raised by the curriculum.
    pub action_lag: [usize; 2],
    /// Lower lag bound at the start of training.
    pub lag_start: usize,
    /// Fraction of `max_iterations` over which the lower lag bound ramps up.
    pub lag_curriculum_fraction: f64,
    pub push_interval: f64,
    pub push_max_lin_vel: f64,
    pub push_max_ang_vel: f64,
    pub init_scale: [f64; 2],
    pub init_offset: [f64; 2],
}

impl RandomizationRanges {
    pub fn for_gait(gait: Gait) -> Self {
        let motor_strength = match gait {
            Gait::Walking | Gait::StairClimbing => [0.7, 1.0],
            Gait::Running | Gait::GooseStepping => [0.8, 1.2],
            Gait::Jumping => [0.9, 1.1],
        };
        RandomizationRanges {
            enabled: true,
            friction: [0.2, 1.5],
            restitution: [0.0, 1.0],
            base_mass_delta: [-2.0, 5.0],
            inertia_scale: [0.5, 1.8],
            com_offset: [-0.1, 0.1],
            motor_strength,
            kp_scale: [0.8, 1.2],
            kd_scale: [0.8, 1.2],
            joint_friction: [0.3, 1.5],
            joint_damping: [0.3, 4.0],
            armature: [0.8, 1.2],
            action_lag: [5, 10],
            lag_start: 2,
            lag_curriculum_fraction: 0.25,
            push_interval: 10.0,
            push_max_lin_vel: 2.0,
            push_max_ang_vel: 1.5,
            init_scale: [0.5, 1.5],
            init_offset: [-0.1, 0.1],
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let ranges = [
            ("friction", self.friction),
            ("restitution", self.restitution),
            ("base_mass_delta", self.base_mass_delta),
            ("inertia_scale", self.inertia_scale),
            ("com_offset", self.com_offset),
            ("motor_strength", self.motor_strength),
            ("kp_scale", self.kp_scale),
            ("kd_scale", self.kd_scale),
            ("joint_friction", self.joint_friction),
            ("joint_damping", self.joint_damping),
            ("armature", self.armature),
            ("init_scale", self.init_scale),
            ("init_offset", self.init_offset),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo <= hi) {
                v.push(format!("randomization.{name} low must be <= high"));
            }
        }
        if self.action_lag[0] > self.action_lag[1] {
            v.push("randomization.action_lag low must be <= high".into());
        }
        if self.lag_start > self.action_lag[0] {
            v.push("randomization.lag_start must be <= action_lag low".into());
        }
        if !(0.0..=1.0).contains(&self.lag_curriculum_fraction) {
            v.push("randomization.lag_curriculum_fraction out of [0,1]".into());
        }
        if !(self.push_interval > 0.0) {
            v.push("randomization.push_interval must be > 0".into());
        }
        if self.friction[0] < 0.0 || self.restitution[0] < 0.0 || self.restitution[1] > 1.0 {
            v.push("randomization.friction/restitution must be physical".into());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushSchedule {
    pub enabled: bool,
    pub interval: f64,
    pub max_lin_vel: f64,
    pub max_ang_vel: f64,
}

/// Physical and actuator parameters of one environment for one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvParams {
    pub friction: f64,
    pub restitution: f64,
    pub base_mass_delta: f64,
    /// Torso, thigh, shank, foot.
    pub inertia_scale: [f64; 4],
    pub com_offset: f64,
    pub motor_strength: f64,
    pub kp_scale: f64,
    pub kd_scale: f64,
    pub joint_friction_scale: f64,
    pub joint_damping_scale: f64,
    pub armature_scale: f64,
    /// Physics ticks.
    pub action_lag: usize,
    pub push: PushSchedule,
}

impl EnvParams {
    /// Unperturbed robot: friction 1, no restitution, no lag, no pushes.
    pub fn nominal() -> Self {
        EnvParams {
            friction: 1.0,
            restitution: 0.0,
            base_mass_delta: 0.0,
            inertia_scale: [1.0; 4],
            com_offset: 0.0,
            motor_strength: 1.0,
            kp_scale: 1.0,
            kd_scale: 1.0,
            joint_friction_scale: 1.0,
            joint_damping_scale: 1.0,
            armature_scale: 1.0,
            action_lag: 0,
            push: PushSchedule { enabled: false, interval: 10.0, max_lin_vel: 0.0, max_ang_vel: 0.0 },
        }
    }

    pub fn actuator_scales(&self) -> ActuatorScales {
        ActuatorScales { kp: self.kp_scale, kd: self.kd_scale, motor_strength: self.motor_strength }
    }

    /// Range membership against `r`, with the lag's lower bound at `min_lag`.
    pub fn within(&self, r: &RandomizationRanges, min_lag: usize) -> bool {
        let inr = |x: f64, [lo, hi]: [f64; 2]| lo <= x && x <= hi;
        inr(self.friction, r.friction)
            && inr(self.restitution, r.restitution)
            && inr(self.base_mass_delta, r.base_mass_delta)
            && self.inertia_scale.iter().all(|&s| inr(s, r.inertia_scale))
            && inr(self.com_offset, r.com_offset)
            && inr(self.motor_strength, r.motor_strength)
            && inr(self.kp_scale, r.kp_scale)
            && inr(self.kd_scale, r.kd_scale)
            && inr(self.joint_friction_scale, r.joint_friction)
            && inr(self.joint_damping_scale, r.joint_damping)
            && inr(self.armature_scale, r.armature)
            && (min_lag..=r.action_lag[1]).contains(&self.action_lag)
    }
}

/// Draws every field uniformly from its range, with the lag drawn from `[r.action_lag[0], r.action_lag[1]]`.
pub fn sample_env_params<R: Rng + ?Sized>(r: &RandomizationRanges, rng: &mut R) -> EnvParams {
    sample_env_params_with_lag(r, r.action_lag[0], rng)
}

/// As [`sample_env_params`] with the lower lag bound replaced by `min_lag`.
pub fn sample_env_params_with_lag<R: Rng + ?Sized>(r: &RandomizationRanges, min_lag: usize, rng: &mut R) -> EnvParams {
    if !r.enabled {
        return EnvParams::nominal();
    }
    let mut p = EnvParams {
        friction: uniform(rng, r.friction),
        restitution: uniform(rng, r.restitution),
        base_mass_delta: uniform(rng, r.base_mass_delta),
        inertia_scale: [1.0; 4],
        com_offset: uniform(rng, r.com_offset),
        motor_strength: uniform(rng, r.motor_strength),
        kp_scale: uniform(rng, r.kp_scale),
        kd_scale: uniform(rng, r.kd_scale),
        joint_friction_scale: uniform(rng, r.joint_friction),
        joint_damping_scale: uniform(rng, r.joint_damping),
        armature_scale: uniform(rng, r.armature),
        action_lag: 0,
        push: PushSchedule {
            enabled: true,
            interval: r.push_interval,
            max_lin_vel: r.push_max_lin_vel,
            max_ang_vel: r.push_max_ang_vel,
        },
    };
    for s in p.inertia_scale.iter_mut() {
        *s = uniform(rng, r.inertia_scale);
    }
    let hi = r.action_lag[1];
    let lo = min_lag.min(hi);
    p.action_lag = rng.random_range(lo..=hi);
    p
}

/// Lower lag bound at `iteration`: ramps from 2 to 5 over `schedule_end` iterations.
pub fn lag_curriculum(iteration: usize, schedule_end: usize) -> usize {
    lag_curriculum_between(iteration, schedule_end, 2, 5)
}

pub fn lag_curriculum_between(iteration: usize, schedule_end: usize, start: usize, end: usize) -> usize {
    if schedule_end == 0 || iteration >= schedule_end {
        return end;
    }
    let t = iteration as f64 / schedule_end as f64;
    start + ((end - start) as f64 * t).floor() as usize
}
