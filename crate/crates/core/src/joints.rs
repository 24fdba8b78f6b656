//! Joint indexing for the 12-joint action space.
//!
//! Index layout is `side * 6 + joint`, left leg first, with joints ordered
//! hip pitch, hip roll, hip yaw, knee, ankle pitch, ankle roll.

use crate::JointVector;

pub const HIP_PITCH: usize = 0;
pub const HIP_ROLL: usize = 1;
pub const HIP_YAW: usize = 2;
pub const KNEE: usize = 3;
pub const ANKLE_PITCH: usize = 4;
pub const ANKLE_ROLL: usize = 5;

pub const JOINTS_PER_LEG: usize = 6;

/// Joint names in per-leg order; these are also the config keys under `pd_gains`.
pub const JOINT_NAMES: [&str; JOINTS_PER_LEG] =
    ["hip_pitch", "hip_roll", "hip_yaw", "knee", "ankle_pitch", "ankle_roll"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn offset(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => JOINTS_PER_LEG,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            Side::Left => "l",
            Side::Right => "r",
        }
    }
}

/// Flat index of `joint` on `side`.
pub const fn idx(side: Side, joint: usize) -> usize {
    match side {
        Side::Left => joint,
        Side::Right => JOINTS_PER_LEG + joint,
    }
}

/// Joints moving in the sagittal plane; the planar simulator only integrates these.
pub const SAGITTAL: [usize; 6] = [
    idx(Side::Left, HIP_PITCH),
    idx(Side::Left, KNEE),
    idx(Side::Left, ANKLE_PITCH),
    idx(Side::Right, HIP_PITCH),
    idx(Side::Right, KNEE),
    idx(Side::Right, ANKLE_PITCH),
];

pub fn is_sagittal(i: usize) -> bool {
    matches!(i % JOINTS_PER_LEG, HIP_PITCH | KNEE | ANKLE_PITCH)
}

/// Joints whose sign flips under a left/right mirror.
fn flips_under_mirror(joint: usize) -> bool {
    matches!(joint, HIP_ROLL | HIP_YAW | ANKLE_ROLL)
}

/// Mirror a joint-space vector: swap legs and negate lateral joints.
pub fn mirror(v: &[f64]) -> JointVector {
    let mut out = [0.0; 12];
    for j in 0..JOINTS_PER_LEG {
        let sign = if flips_under_mirror(j) { -1.0 } else { 1.0 };
        out[j] = sign * v[JOINTS_PER_LEG + j];
        out[JOINTS_PER_LEG + j] = sign * v[j];
    }
    out
}

/// Human-readable label such as `l_knee`.
pub fn label(i: usize) -> String {
    let side = if i < JOINTS_PER_LEG { Side::Left } else { Side::Right };
    format!("{}_{}", side.prefix(), JOINT_NAMES[i % JOINTS_PER_LEG])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_is_an_involution() {
        let v: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 - 0.3).collect();
        let back = mirror(&mirror(&v));
        assert_eq!(back.to_vec(), v);
    }

    #[test]
    fn sagittal_set() {
        for i in 0..12 {
            assert_eq!(is_sagittal(i), SAGITTAL.contains(&i), "{}", label(i));
        }
        assert_eq!(label(9), "r_knee");
    }
}
