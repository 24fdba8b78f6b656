//! Reward terms, their weighted sum, and fall detection.
//!
//! Every term produces a raw value; the per-gait weight table turns raw
//! values into the total `Σ wᵢ rᵢ`. Exponential terms lie in `(0, 1]` and
//! peak at zero error; penalties are non-negative raw values with negative
//! weights.

use serde::{Deserialize, Serialize};

use crate::joints::{idx, Side, HIP_PITCH, KNEE};
use crate::reference::{JointReference, JumpPhase, PhaseState};
use crate::sim::{Measurements, RobotState};
use crate::{JointVector, NUM_JOINTS};

/// Every term name accepted in `reward_weights`, in breakdown order.
pub const TERMS: [&str; 20] = [
    "tracking",
    "knee_tracking",
    "jump_tracking",
    "lin_vel",
    "ang_vel",
    "orientation",
    "base_height",
    "action_rate",
    "joint_vel",
    "torque",
    "feet_swing_height",
    "alternate_swing",
    "leg_straightness",
    "calf_lift",
    "foot_kick",
    "knee_collision",
    "jump_height",
    "takeoff_vel",
    "feet_sync",
    "horiz_vel",
];
pub const N_TERMS: usize = TERMS.len();

pub fn term_index(name: &str) -> Option<usize> {
    TERMS.iter().position(|&t| t == name)
}

/// Inner scales and targets of the shaped terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    pub lin_vel_scale: f64,
    pub ang_vel_scale: f64,
    pub orientation_scale: f64,
    pub height_scale: f64,
    pub jump_tracking_k: f64,
    pub swing_height_target: f64,
    pub swing_height_scale: f64,
    pub knee_straight_scale: f64,
    pub calf_lift_target: f64,
    pub calf_lift_scale: f64,
    pub foot_kick_target: f64,
    pub foot_kick_scale: f64,
    /// Apex rise above standing height, m.
    pub jump_height_target: f64,
    pub jump_height_scale: f64,
    /// Takeoff speed where the linear ramp turns quadratic, m/s.
    pub takeoff_knee: f64,
    /// Multiplier applied to the task reward during training (typically the policy step).
    pub task_reward_scale: f64,
    pub roll_limit: f64,
    pub pitch_limit: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            lin_vel_scale: 0.25,
            ang_vel_scale: 0.25,
            orientation_scale: 0.2,
            height_scale: 0.05,
            jump_tracking_k: 4.0,
            swing_height_target: 0.08,
            swing_height_scale: 0.05,
            knee_straight_scale: 0.25,
            calf_lift_target: 0.5,
            calf_lift_scale: 0.25,
            foot_kick_target: 1.0,
            foot_kick_scale: 0.5,
            jump_height_target: 0.275,
            jump_height_scale: 0.1,
            takeoff_knee: 1.0,
            task_reward_scale: 0.02,
            roll_limit: 0.8,
            pitch_limit: 1.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let positive = [
            ("lin_vel_scale", self.lin_vel_scale),
            ("ang_vel_scale", self.ang_vel_scale),
            ("orientation_scale", self.orientation_scale),
            ("height_scale", self.height_scale),
            ("swing_height_scale", self.swing_height_scale),
            ("knee_straight_scale", self.knee_straight_scale),
            ("calf_lift_scale", self.calf_lift_scale),
            ("foot_kick_scale", self.foot_kick_scale),
            ("jump_height_scale", self.jump_height_scale),
            ("takeoff_knee", self.takeoff_knee),
            ("roll_limit", self.roll_limit),
            ("pitch_limit", self.pitch_limit),
        ];
        for (name, x) in positive {
            if !(x > 0.0) {
                v.push(format!("reward_params.{name} must be > 0"));
            }
        }
        if !(self.jump_tracking_k >= 0.0) || !(self.task_reward_scale > 0.0) {
            v.push("reward_params.jump_tracking_k must be >= 0 and task_reward_scale > 0".into());
        }
        v
    }
}

fn gauss(x: f64, target: f64, scale: f64) -> f64 {
    let d = (x - target) / scale;
    (-d * d).exp()
}

fn dual_exp(e: f64) -> f64 {
    (-4.0 * e * e).exp() + (-20.0 * e * e).exp()
}

/// Dual-exponential hip/knee tracking. `q` and `q_ref` are offsets from the
/// default pose; knee terms count only where `swing_mask` is set.
pub fn tracking_reward_periodic(q: &JointVector, q_ref: &JointVector, swing_mask: &[bool; 12]) -> f64 {
    let mut sum = 0.0;
    for side in Side::BOTH {
        let h = idx(side, HIP_PITCH);
        sum += dual_exp(q[h] - q_ref[h]);
        let k = idx(side, KNEE);
        if swing_mask[k] {
            sum += dual_exp(q[k] - q_ref[k]);
        }
    }
    0.15 * sum
}

/// The same dual-exponential on the swing-masked knee channels only.
pub fn knee_tracking_reward(q: &JointVector, q_ref: &JointVector, swing_mask: &[bool; 12]) -> f64 {
    let mut sum = 0.0;
    for side in Side::BOTH {
        let k = idx(side, KNEE);
        if swing_mask[k] {
            sum += dual_exp(q[k] - q_ref[k]);
        }
    }
    0.15 * sum
}

pub fn mse(q: &JointVector, q_ref: &JointVector) -> f64 {
    q.iter().zip(q_ref).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / NUM_JOINTS as f64
}

/// `exp(−k · MSE)` over all twelve joints.
pub fn tracking_reward_jump(q: &JointVector, q_ref: &JointVector, k: f64) -> f64 {
    (-k * mse(q, q_ref)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityKind {
    Linear,
    Angular,
}

/// `exp(−‖v − cmd‖² / s²)`.
pub fn velocity_tracking_reward(v: &[f64], cmd: &[f64], scale: f64) -> f64 {
    let e: f64 = v.iter().zip(cmd).map(|(a, b)| (a - b) * (a - b)).sum();
    (-e / (scale * scale)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posture {
    pub orientation: f64,
    pub base_height: f64,
}

pub fn posture_rewards(state: &RobotState, h_target: f64, p: &RewardParams) -> Posture {
    let g = state.projected_gravity();
    let s2 = p.orientation_scale * p.orientation_scale;
    Posture {
        orientation: (-(g[0] * g[0] + g[1] * g[1]) / s2).exp(),
        base_height: gauss(state.base_height(), h_target, p.height_scale),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    pub action_rate: f64,
    pub joint_vel: f64,
    pub torque: f64,
}

/// First- and second-difference action penalty, squared joint speed and
/// rated torque `Σ (τ / τ_max)²`.
pub fn smoothness_penalties(
    a: &JointVector,
    a1: &JointVector,
    a2: &JointVector,
    dq: &JointVector,
    tau: &JointVector,
    tau_max: &JointVector,
) -> Smoothness {
    let mut out = Smoothness { action_rate: 0.0, joint_vel: 0.0, torque: 0.0 };
    for i in 0..NUM_JOINTS {
        let d1 = a[i] - a1[i];
        let d2 = a[i] - 2.0 * a1[i] + a2[i];
        out.action_rate += d1 * d1 + d2 * d2;
        out.joint_vel += dq[i] * dq[i];
        let r = tau[i] / tau_max[i];
        out.torque += r * r;
    }
    out
}

/// Linear below `knee`, quadratic above; continuous at `knee` when `knee = 1`.
pub fn takeoff_velocity_reward(vz: f64, knee: f64) -> f64 {
    if vz <= 0.0 {
        0.0
    } else if vz < knee {
        vz / knee
    } else {
        (vz / knee) * (vz / knee)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpTerms {
    pub jump_height: f64,
    pub takeoff_vel: f64,
    pub feet_sync: f64,
    pub horiz_vel: f64,
}

pub fn jump_rewards(state: &RobotState, m: &Measurements, phase: PhaseState, standing_height: f64, p: &RewardParams) -> JumpTerms {
    let airborne = !m.contact[0] && !m.contact[1];
    let jp = JumpPhase::of(phase);
    let jump_height = match jp {
        JumpPhase::Stand => {
            if !m.contact[0] || !m.contact[1] {
                -1.0
            } else {
                0.0
            }
        }
        _ if airborne => gauss(m.apex_height - standing_height, p.jump_height_target, p.jump_height_scale),
        _ => 0.0,
    };
    let takeoff_vel = if jp == JumpPhase::Takeoff { takeoff_velocity_reward(state.velocities[1], p.takeoff_knee) } else { 0.0 };
    let v = state.world_lin_vel();
    JumpTerms {
        jump_height,
        takeoff_vel,
        feet_sync: if m.contact[0] == m.contact[1] { 1.0 } else { 0.0 },
        horiz_vel: v[0] * v[0] + v[1] * v[1],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitTerms {
    pub feet_swing_height: f64,
    pub alternate_swing: f64,
    pub leg_straightness: f64,
    pub calf_lift: f64,
    pub foot_kick: f64,
    pub knee_collision: f64,
}

/// Swing-leg shaping terms, each averaged over the legs the reference marks
/// as swinging (0 when none swing).
pub fn gait_specific_rewards(state: &RobotState, m: &Measurements, r: &JointReference, p: &RewardParams) -> GaitTerms {
    let q = state.joint_pos();
    let mut out = GaitTerms {
        feet_swing_height: 0.0,
        alternate_swing: 0.0,
        leg_straightness: 0.0,
        calf_lift: 0.0,
        foot_kick: 0.0,
        knee_collision: if m.knee_contact[0] || m.knee_contact[1] { 1.0 } else { 0.0 },
    };
    let airborne = [!m.contact[0], !m.contact[1]];
    out.alternate_swing = if airborne[0] != airborne[1] { 1.0 } else { 0.0 };
    let mut n = 0.0;
    for (li, side) in Side::BOTH.into_iter().enumerate() {
        if !r.is_swinging(side) {
            continue;
        }
        n += 1.0;
        if airborne[li] {
            out.feet_swing_height += gauss(m.foot_clearance[li], p.swing_height_target, p.swing_height_scale);
        }
        out.leg_straightness += gauss(q[idx(side, KNEE)], 0.0, p.knee_straight_scale);
        out.calf_lift += gauss(m.shank_angle[li], p.calf_lift_target, p.calf_lift_scale);
        out.foot_kick += gauss(m.foot_vx[li], p.foot_kick_target, p.foot_kick_scale);
    }
    if n > 0.0 {
        out.feet_swing_height /= n;
        out.leg_straightness /= n;
        out.calf_lift /= n;
        out.foot_kick /= n;
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unknown reward term '{0}'")]
pub struct UnknownTerm(pub String);

/// Weight table indexed like [`TERMS`]; absent terms weigh 0.
pub fn resolve_weights<'a, I>(weights: I) -> Result<[f64; N_TERMS], UnknownTerm>
where
    I: IntoIterator<Item = (&'a String, &'a f64)>,
{
    let mut w = [0.0; N_TERMS];
    for (name, &val) in weights {
        let i = term_index(name).ok_or_else(|| UnknownTerm(name.clone()))?;
        w[i] = val;
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermValue {
    pub raw: f64,
    pub weight: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub terms: [TermValue; N_TERMS],
    pub total: f64,
}

impl RewardBreakdown {
    pub fn get(&self, name: &str) -> Option<&TermValue> {
        term_index(name).map(|i| &self.terms[i])
    }
}

/// `Σ wᵢ rᵢ` with the per-term breakdown.
pub fn total_reward(raw: &[f64; N_TERMS], weights: &[f64; N_TERMS]) -> RewardBreakdown {
    let mut terms = [TermValue { raw: 0.0, weight: 0.0, weighted: 0.0 }; N_TERMS];
    let mut total = 0.0;
    for i in 0..N_TERMS {
        let weighted = weights[i] * raw[i];
        terms[i] = TermValue { raw: raw[i], weight: weights[i], weighted };
        total += weighted;
    }
    RewardBreakdown { terms, total }
}

/// Everything needed to evaluate all terms for one policy step.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs<'a> {
    pub state: &'a RobotState,
    pub measurements: &'a Measurements,
    pub reference: &'a JointReference,
    pub phase: PhaseState,
    pub command: &'a [f64; 3],
    pub q_default: &'a JointVector,
    pub action: &'a JointVector,
    pub prev_action: &'a JointVector,
    pub prev_prev_action: &'a JointVector,
    /// Mean-square-equivalent torque over the decimation window.
    pub torque: &'a JointVector,
    pub tau_max: &'a JointVector,
    pub base_height_target: f64,
    pub standing_height: f64,
}

/// Raw values of every term, indexed like [`TERMS`].
pub fn raw_terms(x: &RewardInputs, p: &RewardParams) -> [f64; N_TERMS] {
    let q = x.state.joint_pos();
    let mut off = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        off[i] = q[i] - x.q_default[i];
    }
    let r = x.reference;
    let vb = x.state.base_lin_vel();
    let posture = posture_rewards(x.state, x.base_height_target, p);
    let smooth = smoothness_penalties(x.action, x.prev_action, x.prev_prev_action, &x.state.joint_vel(), x.torque, x.tau_max);
    let jump = jump_rewards(x.state, x.measurements, x.phase, x.standing_height, p);
    let gait = gait_specific_rewards(x.state, x.measurements, r, p);
    let yaw_rate = x.state.base_ang_vel()[2];
    [
        tracking_reward_periodic(&off, &r.q_ref, &r.swing_mask),
        knee_tracking_reward(&off, &r.q_ref, &r.swing_mask),
        tracking_reward_jump(&off, &r.q_ref, p.jump_tracking_k),
        velocity_tracking_reward(&vb[..2], &x.command[..2], p.lin_vel_scale),
        velocity_tracking_reward(&[yaw_rate], &x.command[2..], p.ang_vel_scale),
        posture.orientation,
        posture.base_height,
        smooth.action_rate,
        smooth.joint_vel,
        smooth.torque,
        gait.feet_swing_height,
        gait.alternate_swing,
        gait.leg_straightness,
        gait.calf_lift,
        gait.foot_kick,
        gait.knee_collision,
        jump.jump_height,
        jump.takeoff_vel,
        jump.feet_sync,
        jump.horiz_vel,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TerminationReason {
    BaseContact,
    RollLimit,
    PitchLimit,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TerminationState {
    pub fallen: bool,
    pub reason: TerminationReason,
}

/// First matching reason among base contact, roll limit and pitch limit.
pub fn check_termination_with(state: &RobotState, roll_limit: f64, pitch_limit: f64) -> TerminationState {
    let reason = if state.base_contact {
        TerminationReason::BaseContact
    } else if state.roll().abs() > roll_limit {
        TerminationReason::RollLimit
    } else if state.pitch().abs() > pitch_limit {
        TerminationReason::PitchLimit
    } else {
        TerminationReason::None
    };
    TerminationState { fallen: reason != TerminationReason::None, reason }
}

/// Fall check with roll/pitch limits 0.8 and 1.0 rad. Roll is always 0 on the planar model.
pub fn check_termination(state: &RobotState) -> TerminationState {
    check_termination_with(state, 0.8, 1.0)
}

/// Roll-aware variant used to exercise the roll threshold.
pub fn check_termination_angles(base_contact: bool, roll: f64, pitch: f64) -> TerminationState {
    let reason = if base_contact {
        TerminationReason::BaseContact
    } else if roll.abs() > 0.8 {
        TerminationReason::RollLimit
    } else if pitch.abs() > 1.0 {
        TerminationReason::PitchLimit
    } else {
        TerminationReason::None
    };
    TerminationState { fallen: reason != TerminationReason::None, reason }
}
