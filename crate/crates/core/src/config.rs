//! Per-gait configuration: presets, TOML loading and validation.
//!
//! A [`GaitSpec`] carries everything that distinguishes one gait from another.
//! Files only need `gait_name`; every other key falls back to the preset for
//! that gait and may be overridden individually, including inside sections.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::amp::AmpParams;
use crate::control::ControlParams;
use crate::joints::{JOINTS_PER_LEG, JOINT_NAMES};
use crate::ppo::PpoParams;
use crate::randomize::RandomizationRanges;
use crate::reference::JumpParams;
use crate::rewards::{RewardParams, TERMS};
use crate::sim::RobotModel;
use crate::{JointVector, NUM_JOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gait {
    Walking,
    GooseStepping,
    Running,
    StairClimbing,
    Jumping,
}

impl Gait {
    pub const ALL: [Gait; 5] = [Gait::Walking, Gait::GooseStepping, Gait::Running, Gait::StairClimbing, Gait::Jumping];

    pub fn name(self) -> &'static str {
        match self {
            Gait::Walking => "walking",
            Gait::GooseStepping => "goose_stepping",
            Gait::Running => "running",
            Gait::StairClimbing => "stair_climbing",
            Gait::Jumping => "jumping",
        }
    }

    /// Gaits driven by the sinusoidal reference.
    pub fn is_periodic(self) -> bool {
        self != Gait::Jumping
    }
}

impl fmt::Display for Gait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gait {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Gait::ALL
            .into_iter()
            .find(|g| g.name() == norm)
            .ok_or_else(|| ConfigError::UnknownGait(s.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown gait_name '{0}' (expected one of walking, goose_stepping, running, stair_climbing, jumping)")]
    UnknownGait(String),
    #[error("missing gait_name")]
    MissingGait,
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointGains {
    #[serde(rename = "Kp")]
    pub kp: f64,
    #[serde(rename = "Kd")]
    pub kd: f64,
    pub tau_max: f64,
}

const fn g(kp: f64, kd: f64, tau_max: f64) -> JointGains {
    JointGains { kp, kd, tau_max }
}

/// Gains per joint type, shared by both legs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdGains {
    pub hip_pitch: JointGains,
    pub hip_roll: JointGains,
    pub hip_yaw: JointGains,
    pub knee: JointGains,
    pub ankle_pitch: JointGains,
    pub ankle_roll: JointGains,
}

impl PdGains {
    /// Gains for joint type `j` (0..6, see [`crate::joints`]).
    pub fn joint(&self, j: usize) -> &JointGains {
        match j {
            0 => &self.hip_pitch,
            1 => &self.hip_roll,
            2 => &self.hip_yaw,
            3 => &self.knee,
            4 => &self.ankle_pitch,
            _ => &self.ankle_roll,
        }
    }

    /// `(Kp, Kd, tau_max)` expanded to all twelve joints.
    pub fn vectors(&self) -> (JointVector, JointVector, JointVector) {
        let mut kp = [0.0; NUM_JOINTS];
        let mut kd = [0.0; NUM_JOINTS];
        let mut tau = [0.0; NUM_JOINTS];
        for i in 0..NUM_JOINTS {
            let jg = self.joint(i % JOINTS_PER_LEG);
            kp[i] = jg.kp;
            kd[i] = jg.kd;
            tau[i] = jg.tau_max;
        }
        (kp, kd, tau)
    }
}

/// Episode and command settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    pub episode_length_s: f64,
    /// Forward velocity command range, m/s.
    pub command_x: [f64; 2],
    pub command_y: [f64; 2],
    pub command_yaw: [f64; 2],
    /// Defaults to the robot's standing hip height when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_height_target: Option<f64>,
}

/// Reduced sizes used for desk-scale runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskScale {
    pub num_envs: usize,
    pub max_iterations: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub expert_transitions: usize,
    /// Squat-depth curriculum window, iterations.
    pub squat_curriculum: [usize; 2],
}

impl Default for DeskScale {
    fn default() -> Self {
        DeskScale {
            num_envs: 64,
            max_iterations: 2000,
            actor_hidden: vec![128, 64, 32],
            critic_hidden: vec![128, 64, 32],
            discriminator_hidden: vec![128, 64, 32],
            expert_transitions: 20_000,
            squat_curriculum: [200, 1000],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunScale {
    #[default]
    Desk,
    Paper,
}

/// Sizes resolved for one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub num_envs: usize,
    pub max_iterations: usize,
    pub steps_per_env: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub expert_transitions: usize,
    pub jump: JumpParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSpec {
    pub gait_name: Gait,
    pub cycle_time: f64,
    pub stance_ratio: f64,
    pub ref_scale: f64,
    /// Hip swing amplitude of the periodic reference, rad.
    pub hip_scale: f64,
    pub action_scale: f64,
    pub amp_alpha: f64,
    pub amp_beta: f64,
    pub sym_loss: bool,
    pub num_envs: usize,
    pub max_iterations: usize,
    pub steps_per_env: usize,
    pub reward_weights: BTreeMap<String, f64>,
    pub pd_gains: PdGains,
    pub task: TaskParams,
    pub desk: DeskScale,
    pub control: ControlParams,
    pub reward_params: RewardParams,
    pub jump: JumpParams,
    pub ppo: PpoParams,
    pub amp: AmpParams,
    pub randomization: RandomizationRanges,
    pub robot: RobotModel,
}

fn weights(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

const WALKING_GAINS: PdGains = PdGains {
    hip_pitch: g(280.0, 10.0, 150.0),
    hip_roll: g(240.0, 8.0, 150.0),
    hip_yaw: g(75.0, 5.0, 150.0),
    knee: g(280.0, 14.0, 150.0),
    ankle_pitch: g(75.0, 5.0, 60.0),
    ankle_roll: g(75.0, 5.0, 60.0),
};

const GOOSE_GAINS: PdGains = PdGains {
    hip_pitch: g(450.0, 20.0, 150.0),
    hip_roll: g(300.0, 10.0, 150.0),
    hip_yaw: g(150.0, 8.0, 150.0),
    knee: g(800.0, 40.0, 150.0),
    ankle_pitch: g(200.0, 10.0, 60.0),
    ankle_roll: g(200.0, 10.0, 60.0),
};

const RUNNING_GAINS: PdGains = PdGains {
    hip_pitch: g(300.0, 10.0, 150.0),
    hip_roll: g(240.0, 8.0, 150.0),
    hip_yaw: g(100.0, 5.0, 150.0),
    knee: g(300.0, 14.0, 150.0),
    ankle_pitch: g(80.0, 5.0, 60.0),
    ankle_roll: g(80.0, 5.0, 60.0),
};

fn walking_weights() -> BTreeMap<String, f64> {
    weights(&[
        ("tracking", 2.0),
        ("knee_tracking", 3.0),
        ("lin_vel", 5.0),
        ("ang_vel", 3.5),
        ("orientation", 3.0),
        ("base_height", 2.0),
        ("action_rate", -0.01),
        ("joint_vel", -1e-4),
        ("torque", -0.02),
        ("feet_swing_height", 2.0),
        ("knee_collision", -1.0),
    ])
}

impl GaitSpec {
    /// Built-in configuration for `gait`.
    pub fn preset(gait: Gait) -> Self {
        let mut ppo = PpoParams::default();
        let (cycle_time, stance_ratio, ref_scale, action_scale) = match gait {
            Gait::Walking => (0.8, 0.6, 0.26, 0.25),
            Gait::GooseStepping => (0.7, 0.45, 0.28, 0.4),
            Gait::Running => (0.4, 0.35, 0.26, 0.3),
            Gait::StairClimbing => (0.7, 0.6, 0.26, 0.25),
            Gait::Jumping => (4.0, 0.5, 0.26, 0.3),
        };
        let (amp_alpha, amp_beta, sym_loss) = match gait {
            Gait::Walking | Gait::StairClimbing => (0.3, 0.8, true),
            Gait::GooseStepping => (0.6, 0.7, true),
            Gait::Running => (0.0, 1.0, true),
            Gait::Jumping => (0.0, 1.0, false),
        };
        let (num_envs, max_iterations) = match gait {
            Gait::Walking | Gait::StairClimbing => (4096, 40001),
            Gait::GooseStepping => (4096, 20001),
            Gait::Running => (2048, 40001),
            Gait::Jumping => (2048, 11000),
        };
        let pd_gains = match gait {
            Gait::Walking | Gait::StairClimbing => WALKING_GAINS,
            Gait::GooseStepping => GOOSE_GAINS,
            Gait::Running | Gait::Jumping => RUNNING_GAINS,
        };
        let reward_weights = match gait {
            Gait::Walking | Gait::StairClimbing => walking_weights(),
            Gait::GooseStepping => weights(&[
                ("tracking", 4.0),
                ("knee_tracking", 25.0),
                ("lin_vel", 8.0),
                ("ang_vel", 3.5),
                ("orientation", 5.0),
                ("base_height", 2.0),
                ("action_rate", -0.001),
                ("joint_vel", -1e-4),
                ("torque", -0.03),
                ("feet_swing_height", 2.0),
                ("alternate_swing", 6.0),
                ("leg_straightness", 12.0),
                ("calf_lift", 8.0),
                ("foot_kick", 6.0),
                ("knee_collision", -1.0),
            ]),
            Gait::Running => {
                let mut w = walking_weights();
                w.insert("lin_vel".into(), 20.0);
                w.insert("torque".into(), -0.05);
                w
            }
            Gait::Jumping => weights(&[
                ("jump_tracking", 20.0),
                ("lin_vel", 0.0),
                ("ang_vel", 3.5),
                ("orientation", 15.0),
                ("base_height", 2.0),
                ("action_rate", -0.01),
                ("joint_vel", -1e-4),
                ("torque", -0.02),
                ("jump_height", 150.0),
                ("takeoff_vel", 120.0),
                ("feet_sync", 20.0),
                ("horiz_vel", -15.0),
                ("knee_collision", -1.0),
            ]),
        };
        let command_x = match gait {
            Gait::Walking => [0.0, 0.6],
            Gait::GooseStepping | Gait::StairClimbing => [0.0, 0.4],
            Gait::Running => [0.8, 1.5],
            Gait::Jumping => [0.0, 0.0],
        };
        if gait == Gait::Jumping {
            ppo.entropy_coef = 0.01;
        }
        GaitSpec {
            gait_name: gait,
            cycle_time,
            stance_ratio,
            ref_scale,
            hip_scale: ref_scale,
            action_scale,
            amp_alpha,
            amp_beta,
            sym_loss,
            num_envs,
            max_iterations,
            steps_per_env: 24,
            reward_weights,
            pd_gains,
            task: TaskParams {
                episode_length_s: 20.0,
                command_x,
                command_y: [0.0, 0.0],
                command_yaw: [0.0, 0.0],
                base_height_target: None,
            },
            desk: DeskScale::default(),
            control: ControlParams::default(),
            reward_params: RewardParams::default(),
            jump: JumpParams::default(),
            ppo,
            amp: AmpParams::default(),
            randomization: RandomizationRanges::for_gait(gait),
            robot: RobotModel::default(),
        }
    }

    pub fn amp_enabled(&self) -> bool {
        self.amp_alpha > 0.0
    }

    pub fn base_height_target(&self) -> f64 {
        self.task.base_height_target.unwrap_or_else(|| self.robot.standing_height())
    }

    pub fn settings(&self, scale: RunScale) -> RunSettings {
        match scale {
            RunScale::Paper => RunSettings {
                num_envs: self.num_envs,
                max_iterations: self.max_iterations,
                steps_per_env: self.steps_per_env,
                actor_hidden: self.ppo.actor_hidden.clone(),
                critic_hidden: self.ppo.critic_hidden.clone(),
                discriminator_hidden: self.amp.hidden.clone(),
                expert_transitions: self.amp.expert_transitions,
                jump: self.jump,
            },
            RunScale::Desk => {
                let mut jump = self.jump;
                jump.curriculum_start = self.desk.squat_curriculum[0];
                jump.curriculum_end = self.desk.squat_curriculum[1];
                RunSettings {
                    num_envs: self.desk.num_envs,
                    max_iterations: self.desk.max_iterations,
                    steps_per_env: self.steps_per_env,
                    actor_hidden: self.desk.actor_hidden.clone(),
                    critic_hidden: self.desk.critic_hidden.clone(),
                    discriminator_hidden: self.desk.discriminator_hidden.clone(),
                    expert_transitions: self.desk.expert_transitions,
                    jump,
                }
            }
        }
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.reward_weights.get(term).copied().unwrap_or(0.0)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("GaitSpec serializes to TOML")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let gait = match table.get("gait_name") {
            Some(toml::Value::String(s)) => s.parse::<Gait>()?,
            Some(other) => return Err(ConfigError::Parse(format!("gait_name must be a string, got {other}"))),
            None => return Err(ConfigError::MissingGait),
        };
        let mut base = toml::Table::try_from(GaitSpec::preset(gait)).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut base, table);
        // normalize the gait spelling so hyphenated names deserialize
        base.insert("gait_name".into(), toml::Value::String(gait.name().into()));
        let spec: GaitSpec = toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let problems = validate(&spec);
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

/// Recursive table merge: scalars and arrays in `over` replace those in `base`.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Reads a config file and fills unspecified keys from the gait's preset.
pub fn load_gait_config(path: &Path) -> Result<GaitSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    GaitSpec::from_toml_str(&text)
}

/// Every violated invariant, as a human-readable message naming the field.
pub fn validate(spec: &GaitSpec) -> Vec<String> {
    let mut v = Vec::new();
    if !(spec.stance_ratio > 0.0 && spec.stance_ratio < 1.0) {
        v.push("stance_ratio out of (0,1)".to_string());
    }
    for (name, x) in [("cycle_time", spec.cycle_time), ("ref_scale", spec.ref_scale), ("action_scale", spec.action_scale)] {
        if !(x > 0.0) {
            v.push(format!("{name} must be > 0"));
        }
    }
    if !(spec.hip_scale >= 0.0) {
        v.push("hip_scale must be >= 0".into());
    }
    if !(spec.amp_alpha >= 0.0) {
        v.push("amp_alpha must be >= 0".into());
    }
    if !(0.0..=1.0).contains(&spec.amp_beta) {
        v.push("amp_beta out of [0,1]".into());
    }
    for (name, n) in [("num_envs", spec.num_envs), ("max_iterations", spec.max_iterations), ("steps_per_env", spec.steps_per_env)] {
        if n == 0 {
            v.push(format!("{name} must be > 0"));
        }
    }
    for (j, name) in JOINT_NAMES.iter().enumerate() {
        let jg = spec.pd_gains.joint(j);
        if !(jg.kp > 0.0) {
            v.push(format!("pd_gains.{name}.Kp must be > 0"));
        }
        if !(jg.kd >= 0.0) {
            v.push(format!("pd_gains.{name}.Kd must be >= 0"));
        }
        if !(jg.tau_max > 0.0) {
            v.push(format!("pd_gains.{name}.tau_max must be > 0"));
        }
    }
    for (term, w) in &spec.reward_weights {
        if !TERMS.contains(&term.as_str()) {
            v.push(format!("reward_weights.{term} is not a known reward term"));
        }
        if !w.is_finite() {
            v.push(format!("reward_weights.{term} must be finite"));
        }
    }
    let t = &spec.task;
    if !(t.episode_length_s > 0.0) {
        v.push("task.episode_length_s must be > 0".into());
    }
    for (name, r) in [("command_x", t.command_x), ("command_y", t.command_y), ("command_yaw", t.command_yaw)] {
        if !(r[0] <= r[1]) {
            v.push(format!("task.{name} low must be <= high"));
        }
    }
    let d = &spec.desk;
    if d.num_envs == 0 || d.max_iterations == 0 {
        v.push("desk.num_envs and desk.max_iterations must be > 0".into());
    }
    for (name, h) in [
        ("desk.actor_hidden", &d.actor_hidden),
        ("desk.critic_hidden", &d.critic_hidden),
        ("desk.discriminator_hidden", &d.discriminator_hidden),
        ("ppo.actor_hidden", &spec.ppo.actor_hidden),
        ("ppo.critic_hidden", &spec.ppo.critic_hidden),
        ("amp.hidden", &spec.amp.hidden),
    ] {
        if h.contains(&0) {
            v.push(format!("{name} widths must be > 0"));
        }
    }
    if d.squat_curriculum[0] > d.squat_curriculum[1] {
        v.push("desk.squat_curriculum start must be <= end".into());
    }
    let c = &spec.control;
    if !(c.sim_dt > 0.0) || c.decimation == 0 {
        v.push("control.sim_dt and control.decimation must be > 0".into());
    }
    if !(0.0..=1.0).contains(&c.ema_coeff) {
        v.push("control.ema_coeff out of [0,1]".into());
    }
    let j = &spec.jump;
    if !(0.0 <= j.squat_depth_min && j.squat_depth_min <= j.squat_depth_max) {
        v.push("jump.squat_depth_min must satisfy 0 <= min <= max".into());
    }
    if j.curriculum_start > j.curriculum_end {
        v.push("jump.curriculum_start must be <= curriculum_end".into());
    }
    v.extend(spec.reward_params.validate());
    v.extend(spec.ppo.validate());
    v.extend(spec.amp.validate());
    v.extend(spec.randomization.validate());
    v.extend(spec.robot.validate());
    v
}
