//! Actor frame, history stack, privileged critic input and the running
//! observation normalizer.
//!
//! Actor frame layout (50):
//!
//! | range  | content                     | scale |
//! |--------|-----------------------------|-------|
//! | 0..3   | base linear velocity        | 2.0   |
//! | 3..6   | command (vx, vy, yaw rate)  | 1     |
//! | 6..8   | phase sin, cos              | 1     |
//! | 8..11  | base angular velocity       | 0.25  |
//! | 11..14 | projected gravity           | 1     |
//! | 14..26 | joint position − default    | 1     |
//! | 26..38 | joint velocity              | 0.05  |
//! | 38..50 | previous action             | 1     |

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::joints;
use crate::randomize::EnvParams;
use crate::reference::{JointReference, PhaseState};
use crate::sim::{Measurements, RobotState};
use crate::{JointVector, NUM_JOINTS};

pub const FRAME_DIM: usize = 50;
pub const HISTORY: usize = 21;
pub const STACK_DIM: usize = FRAME_DIM * HISTORY;
pub const PRIVILEGED_DIM: usize = 73;
pub const CRITIC_HISTORY: usize = 5;
pub const TERRAIN_DIM: usize = 187;
pub const CRITIC_DIM: usize = PRIVILEGED_DIM * CRITIC_HISTORY + TERRAIN_DIM;
pub const ACTION_DIM: usize = NUM_JOINTS;

pub const LIN_VEL_SCALE: f64 = 2.0;
pub const ANG_VEL_SCALE: f64 = 0.25;
pub const JOINT_VEL_SCALE: f64 = 0.05;

pub mod slot {
    use std::ops::Range;
    pub const LIN_VEL: Range<usize> = 0..3;
    pub const COMMAND: Range<usize> = 3..6;
    pub const PHASE: Range<usize> = 6..8;
    pub const ANG_VEL: Range<usize> = 8..11;
    pub const GRAVITY: Range<usize> = 11..14;
    pub const JOINT_POS: Range<usize> = 14..26;
    pub const JOINT_VEL: Range<usize> = 26..38;
    pub const PREV_ACTION: Range<usize> = 38..50;
}

/// Privileged frame layout (73).
pub mod privileged {
    use std::ops::Range;
    pub const LIN_VEL: Range<usize> = 0..3;
    pub const ANG_VEL: Range<usize> = 3..6;
    pub const GRAVITY: Range<usize> = 6..9;
    pub const COMMAND: Range<usize> = 9..12;
    pub const JOINT_POS: Range<usize> = 12..24;
    pub const JOINT_VEL: Range<usize> = 24..36;
    pub const PREV_ACTION: Range<usize> = 36..48;
    pub const PHASE: Range<usize> = 48..50;
    pub const FRICTION: usize = 50;
    pub const CONTACT: Range<usize> = 51..53;
    pub const STANCE: Range<usize> = 53..55;
    pub const TRACKING_ERROR: Range<usize> = 55..67;
    pub const PUSH: Range<usize> = 67..69;
    pub const FOOT_VZ: Range<usize> = 69..71;
    pub const FOOT_CLEARANCE: Range<usize> = 71..73;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("non-finite observation input at channel {channel}")]
pub struct NonFiniteInput {
    pub channel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationFrame(pub [f64; FRAME_DIM]);

impl ObservationFrame {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Channel labels, for debugging dumps.
pub fn frame_labels() -> Vec<String> {
    let mut out: Vec<String> = ["lin_vel_x", "lin_vel_y", "lin_vel_z", "cmd_vx", "cmd_vy", "cmd_yaw", "phase_sin", "phase_cos", "ang_vel_x", "ang_vel_y", "ang_vel_z", "gravity_x", "gravity_y", "gravity_z"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["pos_err", "vel", "prev_action"] {
        for j in 0..NUM_JOINTS {
            out.push(format!("{prefix}_{}", joints::label(j)));
        }
    }
    out
}

fn put(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = s * scale;
    }
}

/// Builds the 50-dim actor frame.
pub fn build_actor_frame(
    state: &RobotState,
    cmd: &[f64; 3],
    p: PhaseState,
    prev_a: &JointVector,
    q_default: &JointVector,
) -> Result<ObservationFrame, NonFiniteInput> {
    let mut f = [0.0; FRAME_DIM];
    let q = state.joint_pos();
    let mut err = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        err[i] = q[i] - q_default[i];
    }
    put(&mut f[slot::LIN_VEL], &state.base_lin_vel(), LIN_VEL_SCALE);
    put(&mut f[slot::COMMAND], cmd, 1.0);
    put(&mut f[slot::PHASE], &p.encoding(), 1.0);
    put(&mut f[slot::ANG_VEL], &state.base_ang_vel(), ANG_VEL_SCALE);
    put(&mut f[slot::GRAVITY], &state.projected_gravity(), 1.0);
    put(&mut f[slot::JOINT_POS], &err, 1.0);
    put(&mut f[slot::JOINT_VEL], &state.joint_vel(), JOINT_VEL_SCALE);
    put(&mut f[slot::PREV_ACTION], prev_a, 1.0);
    if let Some(channel) = f.iter().position(|x| !x.is_finite()) {
        return Err(NonFiniteInput { channel });
    }
    Ok(ObservationFrame(f))
}

/// Zeroes the linear-velocity channels, as done on hardware without a velocity estimate.
pub fn zero_lin_vel(f: &mut ObservationFrame) {
    f.0[slot::LIN_VEL].iter_mut().for_each(|x| *x = 0.0);
}

/// Sign pattern of the left/right mirror on the non-joint channels.
fn mirror_head(src: &[f64], dst: &mut [f64]) {
    // lin vel (x, -y, z)
    dst[0] = src[0];
    dst[1] = -src[1];
    dst[2] = src[2];
    // command (vx, -vy, -yaw)
    dst[3] = src[3];
    dst[4] = -src[4];
    dst[5] = -src[5];
    // half-cycle phase shift
    dst[6] = -src[6];
    dst[7] = -src[7];
    // ang vel (-x, y, -z)
    dst[8] = -src[8];
    dst[9] = src[9];
    dst[10] = -src[10];
    // gravity (x, -y, z)
    dst[11] = src[11];
    dst[12] = -src[12];
    dst[13] = src[13];
}

/// Left/right mirror of one raw actor frame.
pub fn mirror_frame(src: &[f64], dst: &mut [f64]) {
    debug_assert_eq!(src.len(), FRAME_DIM);
    mirror_head(src, dst);
    for block in [slot::JOINT_POS, slot::JOINT_VEL, slot::PREV_ACTION] {
        let m = joints::mirror(&src[block.clone()]);
        dst[block].copy_from_slice(&m);
    }
}

/// Mirror of a flattened stack, frame by frame.
pub fn mirror_stack(src: &[f64], dst: &mut [f64]) {
    for (s, d) in src.chunks_exact(FRAME_DIM).zip(dst.chunks_exact_mut(FRAME_DIM)) {
        mirror_frame(s, d);
    }
}

/// History of the last `HISTORY` frames, flattened oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStack {
    data: Vec<f64>,
}

impl ObservationStack {
    /// All slots hold `frame`.
    pub fn new(frame: &ObservationFrame) -> Self {
        let mut s = ObservationStack { data: vec![0.0; STACK_DIM] };
        s.reset(frame);
        s
    }

    pub fn reset(&mut self, frame: &ObservationFrame) {
        for chunk in self.data.chunks_exact_mut(FRAME_DIM) {
            chunk.copy_from_slice(&frame.0);
        }
        assert_eq!(self.data.len(), STACK_DIM);
    }

    /// Evicts the oldest frame and appends `f`.
    pub fn push_frame(&mut self, f: &ObservationFrame) {
        self.data.copy_within(FRAME_DIM.., 0);
        self.data[STACK_DIM - FRAME_DIM..].copy_from_slice(&f.0);
    }

    pub fn flatten(&self) -> &[f64] {
        &self.data
    }

    pub fn newest(&self) -> &[f64] {
        &self.data[STACK_DIM - FRAME_DIM..]
    }
}

/// Simulation-only inputs to the privileged frame.
#[derive(Debug, Clone, Copy)]
pub struct PrivilegedInputs<'a> {
    pub state: &'a RobotState,
    pub measurements: &'a Measurements,
    pub command: &'a [f64; 3],
    pub phase: PhaseState,
    pub prev_action: &'a JointVector,
    pub q_default: &'a JointVector,
    pub env_params: &'a EnvParams,
    pub reference: &'a JointReference,
    pub stance: [bool; 2],
    /// Last push `(Δvx, Δω)`.
    pub push: [f64; 2],
}

pub fn build_privileged_frame(x: &PrivilegedInputs) -> [f64; PRIVILEGED_DIM] {
    use privileged as p;
    let mut f = [0.0; PRIVILEGED_DIM];
    let q = x.state.joint_pos();
    let mut pos_err = [0.0; NUM_JOINTS];
    let mut track = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        pos_err[i] = q[i] - x.q_default[i];
        track[i] = pos_err[i] - x.reference.q_ref[i];
    }
    put(&mut f[p::LIN_VEL], &x.state.base_lin_vel(), LIN_VEL_SCALE);
    put(&mut f[p::ANG_VEL], &x.state.base_ang_vel(), ANG_VEL_SCALE);
    put(&mut f[p::GRAVITY], &x.state.projected_gravity(), 1.0);
    put(&mut f[p::COMMAND], x.command, 1.0);
    put(&mut f[p::JOINT_POS], &pos_err, 1.0);
    put(&mut f[p::JOINT_VEL], &x.state.joint_vel(), JOINT_VEL_SCALE);
    put(&mut f[p::PREV_ACTION], x.prev_action, 1.0);
    put(&mut f[p::PHASE], &x.phase.encoding(), 1.0);
    f[p::FRICTION] = x.env_params.friction;
    let b = |v: bool| if v { 1.0 } else { 0.0 };
    f[p::CONTACT.start] = b(x.measurements.contact[0]);
    f[p::CONTACT.start + 1] = b(x.measurements.contact[1]);
    f[p::STANCE.start] = b(x.stance[0]);
    f[p::STANCE.start + 1] = b(x.stance[1]);
    put(&mut f[p::TRACKING_ERROR], &track, 1.0);
    put(&mut f[p::PUSH], &x.push, 1.0);
    put(&mut f[p::FOOT_VZ], &x.measurements.foot_vz, 1.0);
    put(&mut f[p::FOOT_CLEARANCE], &x.measurements.foot_clearance, 1.0);
    f
}

/// Five privileged frames (oldest first) followed by the flat-terrain height scan.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticObservation {
    data: Vec<f64>,
}

impl CriticObservation {
    pub fn new(frame: &[f64; PRIVILEGED_DIM]) -> Self {
        let mut c = CriticObservation { data: vec![0.0; CRITIC_DIM] };
        c.reset(frame);
        c
    }

    pub fn reset(&mut self, frame: &[f64; PRIVILEGED_DIM]) {
        for k in 0..CRITIC_HISTORY {
            self.data[k * PRIVILEGED_DIM..(k + 1) * PRIVILEGED_DIM].copy_from_slice(frame);
        }
        self.data[PRIVILEGED_DIM * CRITIC_HISTORY..].iter_mut().for_each(|x| *x = 0.0);
        assert_eq!(self.data.len(), CRITIC_DIM);
    }

    pub fn push_frame(&mut self, frame: &[f64; PRIVILEGED_DIM]) {
        let hist = PRIVILEGED_DIM * CRITIC_HISTORY;
        self.data.copy_within(PRIVILEGED_DIM..hist, 0);
        self.data[hist - PRIVILEGED_DIM..hist].copy_from_slice(frame);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn terrain(&self) -> &[f64] {
        &self.data[PRIVILEGED_DIM * CRITIC_HISTORY..]
    }
}

/// Critic input for a single step with no history: the frame repeated.
pub fn build_critic_observation(x: &PrivilegedInputs) -> CriticObservation {
    CriticObservation::new(&build_privileged_frame(x))
}

pub const NORMALIZER_EPS: f64 = 1e-8;

/// Per-dimension running mean and population variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    /// Normalized values are clamped to `±clip` (unbounded by default).
    pub clip: f64,
}

impl RunningNormalizer {
    pub fn new(dim: usize) -> Self {
        Self::with_clip(dim, f64::INFINITY)
    }

    pub fn with_clip(dim: usize, clip: f64) -> Self {
        RunningNormalizer { mean: vec![0.0; dim], var: vec![1.0; dim], count: 0.0, clip }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges a batch (rows are samples) into the running statistics.
    pub fn update(&mut self, batch: ArrayView2<f64>) {
        let n = batch.nrows();
        assert!(n > 0, "normalizer update needs a non-empty batch");
        assert_eq!(batch.ncols(), self.dim());
        let nb = n as f64;
        let bmean = batch.mean_axis(Axis(0)).expect("non-empty");
        let mut bvar = vec![0.0; self.dim()];
        for row in batch.rows() {
            for (j, (&x, m)) in row.iter().zip(bmean.iter()).enumerate() {
                let d = x - m;
                bvar[j] += d * d;
            }
        }
        if self.count == 0.0 {
            self.mean = bmean.to_vec();
            self.var = bvar.iter().map(|v| v / nb).collect();
            self.count = nb;
            return;
        }
        let na = self.count;
        let tot = na + nb;
        for j in 0..self.dim() {
            let delta = bmean[j] - self.mean[j];
            let m2 = self.var[j] * na + bvar[j] + delta * delta * na * nb / tot;
            self.mean[j] += delta * nb / tot;
            self.var[j] = m2 / tot;
        }
        self.count = tot;
    }

    pub fn update_rows(&mut self, rows: &[f64]) {
        let d = self.dim();
        let view = ArrayView2::from_shape((rows.len() / d, d), rows).expect("row-major batch");
        self.update(view);
    }

    /// `(v − mean) / sqrt(var + ε)` clamped to `±clip`; identity before the first update.
    pub fn normalize_into(&self, v: &[f64], out: &mut [f64]) {
        if self.count == 0.0 {
            out.copy_from_slice(v);
            return;
        }
        for j in 0..v.len() {
            let z = (v[j] - self.mean[j]) / (self.var[j] + NORMALIZER_EPS).sqrt();
            out[j] = z.clamp(-self.clip, self.clip);
        }
    }

    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.normalize_into(v, &mut out);
        out
    }
}
