//! Phase clock and joint reference trajectories.
//!
//! References are joint *offsets* from the default standing pose, so a zero
//! reference means "stand at `q_default`". Periodic gaits use a half-wave
//! sinusoid on hip pitch and knee; jumping uses a five-phase piecewise
//! trajectory driven by a squat-depth curriculum.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::joints::{idx, Side, ANKLE_PITCH, HIP_PITCH, KNEE};
use crate::JointVector;

/// Gait phase in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct PhaseState(f64);

impl PhaseState {
    /// Wraps any finite value into `[0, 1)`.
    pub fn new(phase: f64) -> Self {
        let mut p = phase.rem_euclid(1.0);
        if p >= 1.0 {
            p = 0.0;
        }
        PhaseState(p)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Phase shifted by half a cycle, i.e. the opposite leg's phase.
    pub fn opposite(self) -> Self {
        PhaseState::new(self.0 + 0.5)
    }

    /// `[sin 2πφ, cos 2πφ]`.
    pub fn encoding(self) -> [f64; 2] {
        let (s, c) = (2.0 * PI * self.0).sin_cos();
        [s, c]
    }
}

/// `φ ← (φ + dt / cycle_time) mod 1`.
pub fn advance_phase(p: PhaseState, dt: f64, cycle_time: f64) -> PhaseState {
    debug_assert!(dt > 0.0 && cycle_time > 0.0);
    PhaseState::new(p.0 + dt / cycle_time)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointReference {
    /// Offsets from `q_default`, radians.
    pub q_ref: JointVector,
    /// All joints of a leg are marked while that leg's swing indicator is active.
    pub swing_mask: [bool; 12],
}

impl JointReference {
    pub fn zero() -> Self {
        JointReference { q_ref: [0.0; 12], swing_mask: [false; 12] }
    }

    pub fn is_swinging(&self, side: Side) -> bool {
        self.swing_mask[idx(side, KNEE)]
    }
}

/// Sinusoidal reference with an explicit hip amplitude.
///
/// With `s = sin 2πφ`, the left leg is active while `s < 0`:
/// hip pitch `= -s · hip_scale`, knee `= 2 s σ`. The right leg takes the
/// sign-flipped copy `hip = s · hip_scale`, knee `= -2 s σ` while `s > 0`.
pub fn periodic_reference_scaled(p: PhaseState, sigma: f64, hip_scale: f64) -> JointReference {
    let s = (2.0 * PI * p.value()).sin();
    let mut r = JointReference::zero();
    if s < 0.0 {
        r.q_ref[idx(Side::Left, HIP_PITCH)] = -s * hip_scale;
        r.q_ref[idx(Side::Left, KNEE)] = 2.0 * s * sigma;
        r.swing_mask[..6].iter_mut().for_each(|m| *m = true);
    } else if s > 0.0 {
        r.q_ref[idx(Side::Right, HIP_PITCH)] = s * hip_scale;
        r.q_ref[idx(Side::Right, KNEE)] = -2.0 * s * sigma;
        r.swing_mask[6..].iter_mut().for_each(|m| *m = true);
    }
    r
}

/// The literal sinusoidal reference: unit hip amplitude, knee scaled by `sigma`.
pub fn periodic_reference(p: PhaseState, sigma: f64) -> JointReference {
    periodic_reference_scaled(p, sigma, 1.0)
}

/// Shape parameters of the jump trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpParams {
    pub squat_depth_min: f64,
    pub squat_depth_max: f64,
    /// Iteration window over which squat depth ramps from min to max.
    pub curriculum_start: usize,
    pub curriculum_end: usize,
    /// Knee extension beyond the default pose reached at takeoff, rad.
    pub takeoff_extension: f64,
    /// Peak knee flexion while absorbing the landing, rad.
    pub landing_depth: f64,
}

impl Default for JumpParams {
    fn default() -> Self {
        JumpParams {
            squat_depth_min: 0.05,
            squat_depth_max: 0.6,
            curriculum_start: 2000,
            curriculum_end: 10000,
            takeoff_extension: 0.0,
            landing_depth: 0.3,
        }
    }
}

/// Phase boundaries of the jump cycle: squat, takeoff, flight, landing, stand.
pub const JUMP_PHASES: [f64; 4] = [0.30, 0.42, 0.48, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpPhase {
    Squat,
    Takeoff,
    Flight,
    Landing,
    Stand,
}

impl JumpPhase {
    pub fn of(p: PhaseState) -> Self {
        let v = p.value();
        if v < JUMP_PHASES[0] {
            JumpPhase::Squat
        } else if v < JUMP_PHASES[1] {
            JumpPhase::Takeoff
        } else if v < JUMP_PHASES[2] {
            JumpPhase::Flight
        } else if v < JUMP_PHASES[3] {
            JumpPhase::Landing
        } else {
            JumpPhase::Stand
        }
    }
}

// sin²(πu/2) = (1 - cos πu) / 2: a cosine ramp from 0 to 1.
fn ramp(u: f64) -> f64 {
    let s = (0.5 * PI * u.clamp(0.0, 1.0)).sin();
    s * s
}

/// Knee offset of the jump trajectory at phase `v`.
fn jump_knee(v: f64, squat_depth: f64, params: &JumpParams) -> f64 {
    let [squat_end, takeoff_end, flight_end, landing_end] = JUMP_PHASES;
    let ext = params.takeoff_extension;
    let absorb = params.landing_depth;
    if v < squat_end {
        let s = (PI * v / squat_end).sin();
        -squat_depth * s * s
    } else if v < takeoff_end {
        ext * ramp((v - squat_end) / (takeoff_end - squat_end))
    } else if v < flight_end {
        ext
    } else if v < landing_end {
        let u = (v - flight_end) / (landing_end - flight_end);
        // first 40%: absorb from full extension into a flexed knee; then recover.
        if u < 0.4 {
            ext + (-absorb - ext) * ramp(u / 0.4)
        } else {
            -absorb * (1.0 - ramp((u - 0.4) / 0.6))
        }
    } else {
        0.0
    }
}

/// Jump reference with explicit shape parameters. Both legs are identical;
/// hip and ankle each take half the knee flexion so the foot stays level.
pub fn jump_reference_with(p: PhaseState, squat_depth: f64, params: &JumpParams) -> JointReference {
    let knee = jump_knee(p.value(), squat_depth, params);
    let mut r = JointReference::zero();
    for side in Side::BOTH {
        r.q_ref[idx(side, KNEE)] = knee;
        r.q_ref[idx(side, HIP_PITCH)] = -0.5 * knee;
        r.q_ref[idx(side, ANKLE_PITCH)] = -0.5 * knee;
    }
    r
}

pub fn jump_reference(p: PhaseState, squat_depth: f64) -> JointReference {
    jump_reference_with(p, squat_depth, &JumpParams::default())
}

/// Squat depth for a training iteration: `d_min` before the window, `d_max`
/// after it, linear in between.
pub fn squat_depth_for(iteration: usize, params: &JumpParams) -> f64 {
    let (lo, hi) = (params.curriculum_start, params.curriculum_end);
    if iteration <= lo {
        return params.squat_depth_min;
    }
    if iteration >= hi {
        return params.squat_depth_max;
    }
    let t = (iteration - lo) as f64 / (hi - lo) as f64;
    params.squat_depth_min + t * (params.squat_depth_max - params.squat_depth_min)
}

pub fn squat_depth_curriculum(iteration: usize) -> f64 {
    squat_depth_for(iteration, &JumpParams::default())
}

/// Per-foot stance flags `[left, right]`. The left foot is in stance on
/// `[0, stance_ratio)`; the right foot's window is shifted by half a cycle.
pub fn stance_mask(p: PhaseState, stance_ratio: f64) -> [bool; 2] {
    [p.value() < stance_ratio, p.opposite().value() < stance_ratio]
}
