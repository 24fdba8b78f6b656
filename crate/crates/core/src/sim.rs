//! Planar (sagittal) biped with penalty-based ground contact.
//!
//! The model has nine generalized coordinates: hip position `(x, z)`, the
//! planar torso angle `ψ` and three joints per leg (hip pitch, knee, ankle
//! pitch). All angles rotate counter-clockwise in the x–z plane, so a positive
//! hip angle swings the leg forward and base pitch (nose down positive) is
//! `-ψ`. The twelve-joint interface is kept; hip roll, hip yaw and ankle roll
//! are frozen at zero.
//!
//! Dynamics use Kane's form `M q̈ = Q - Σ m Jᵀ (J̇ q̇)` integrated with
//! semi-implicit Euler over `substeps` sub-intervals of each physics step.

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::joints::{idx, Side, ANKLE_PITCH, HIP_PITCH, KNEE};
use crate::randomize::EnvParams;
use crate::{JointVector, NUM_JOINTS};

pub const NQ: usize = 9;
type Mat9 = SMatrix<f64, NQ, NQ>;
type Vec9 = SVector<f64, NQ>;

/// Standing pose: slightly crouched with a level foot.
pub const DEFAULT_POSE: JointVector = {
    let mut q = [0.0; NUM_JOINTS];
    q[idx(Side::Left, HIP_PITCH)] = 0.25;
    q[idx(Side::Left, KNEE)] = -0.5;
    q[idx(Side::Left, ANKLE_PITCH)] = 0.25;
    q[idx(Side::Right, HIP_PITCH)] = 0.25;
    q[idx(Side::Right, KNEE)] = -0.5;
    q[idx(Side::Right, ANKLE_PITCH)] = 0.25;
    q
};

/// `(joint index, generalized coordinate)` for the six simulated joints.
pub const JOINT_COORDS: [(usize, usize); 6] = [(0, 3), (3, 4), (4, 5), (6, 6), (9, 7), (10, 8)];

const LEG_OFFSET: [usize; 2] = [3, 6];

/// Values above this (or non-finite values) mark a diverged state.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Link table and contact constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    pub torso_mass: f64,
    pub torso_length: f64,
    /// Height of the torso COM above the hip.
    pub torso_com: f64,
    pub torso_inertia: f64,
    pub thigh_mass: f64,
    pub thigh_length: f64,
    pub thigh_inertia: f64,
    pub shank_mass: f64,
    pub shank_length: f64,
    pub shank_inertia: f64,
    pub foot_mass: f64,
    pub foot_inertia: f64,
    /// Foot COM, heel and toe in the ankle frame.
    pub foot_com: [f64; 2],
    pub heel: [f64; 2],
    pub toe: [f64; 2],
    /// Reflected rotor inertia for hip, knee and ankle.
    pub armature: [f64; 3],
    pub joint_damping: f64,
    pub joint_friction: f64,
    pub friction_velocity: f64,
    pub hip_limits: [f64; 2],
    pub knee_limits: [f64; 2],
    pub ankle_limits: [f64; 2],
    pub limit_stiffness: f64,
    pub contact_stiffness: f64,
    /// Reference mass used to turn restitution into a damping coefficient.
    pub contact_mass: f64,
    pub tangential_damping: f64,
    pub gravity: f64,
    pub substeps: usize,
}

impl Default for RobotModel {
    fn default() -> Self {
        RobotModel {
            torso_mass: 7.0,
            torso_length: 0.4,
            torso_com: 0.2,
            torso_inertia: 0.093,
            thigh_mass: 1.2,
            thigh_length: 0.3,
            thigh_inertia: 0.009,
            shank_mass: 0.9,
            shank_length: 0.3,
            shank_inertia: 0.00675,
            foot_mass: 0.4,
            foot_inertia: 0.001,
            foot_com: [0.03, -0.03],
            heel: [-0.05, -0.05],
            toe: [0.12, -0.05],
            armature: [0.08, 0.12, 0.04],
            joint_damping: 0.05,
            joint_friction: 0.1,
            friction_velocity: 0.01,
            hip_limits: [-1.2, 1.8],
            knee_limits: [-2.4, 0.05],
            ankle_limits: [-0.9, 0.9],
            limit_stiffness: 500.0,
            contact_stiffness: 2e4,
            contact_mass: 3.0,
            tangential_damping: 2000.0,
            gravity: 9.81,
            substeps: 20,
        }
    }
}

impl RobotModel {
    pub fn total_mass(&self) -> f64 {
        self.torso_mass + 2.0 * (self.thigh_mass + self.shank_mass + self.foot_mass)
    }

    /// Hip height of the default pose with the feet on the ground.
    pub fn standing_height(&self) -> f64 {
        let s = RobotState::at_pose(&DEFAULT_POSE, self);
        s.base_height()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let positive = [
            ("torso_mass", self.torso_mass),
            ("torso_length", self.torso_length),
            ("torso_inertia", self.torso_inertia),
            ("thigh_mass", self.thigh_mass),
            ("thigh_length", self.thigh_length),
            ("thigh_inertia", self.thigh_inertia),
            ("shank_mass", self.shank_mass),
            ("shank_length", self.shank_length),
            ("shank_inertia", self.shank_inertia),
            ("foot_mass", self.foot_mass),
            ("foot_inertia", self.foot_inertia),
            ("contact_stiffness", self.contact_stiffness),
            ("contact_mass", self.contact_mass),
            ("friction_velocity", self.friction_velocity),
        ];
        for (name, x) in positive {
            if !(x > 0.0) {
                v.push(format!("robot.{name} must be > 0"));
            }
        }
        if self.substeps == 0 {
            v.push("robot.substeps must be > 0".into());
        }
        for (name, l) in [("hip_limits", self.hip_limits), ("knee_limits", self.knee_limits), ("ankle_limits", self.ankle_limits)] {
            if !(l[0] < l[1]) {
                v.push(format!("robot.{name} must be increasing"));
            }
        }
        v
    }

    fn limits(&self, level: usize) -> [f64; 2] {
        match level {
            0 => self.hip_limits,
            1 => self.knee_limits,
            _ => self.ankle_limits,
        }
    }
}

/// Contact points in storage order; each leg has heel, toe and knee.
pub const CONTACT_POINTS: [&str; 6] = ["l_heel", "l_toe", "l_knee", "r_heel", "r_toe", "r_knee"];

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    /// `[x, z, ψ, hip_L, knee_L, ankle_L, hip_R, knee_R, ankle_R]`.
    pub coords: [f64; NQ],
    pub velocities: [f64; NQ],
    /// Normal and tangential force at each of `CONTACT_POINTS`, N.
    pub contact_normal: [f64; 6],
    pub contact_tangential: [f64; 6],
    /// Torso (hip or head point) touching the ground.
    pub base_contact: bool,
    /// Highest hip height since the last foot contact.
    pub apex_height: f64,
    pub time: f64,
    pub diverged: bool,
    /// Most recent push `(Δvx, Δω)`.
    pub last_push: [f64; 2],
}

/// One point's kinematics.
#[derive(Debug, Clone, Copy, Default)]
struct Kin {
    p: [f64; 2],
    v: [f64; 2],
    j: [[f64; NQ]; 2],
    bias: [f64; 2],
}

/// Walks a chain of `(level, offset)` segments from the hip. Level 0 is the
/// torso; levels 1..=3 are thigh, shank and foot of the leg at `leg`.
fn chain(q: &[f64; NQ], v: &[f64; NQ], leg: usize, segs: &[(usize, [f64; 2])]) -> Kin {
    let mut k = Kin::default();
    k.p = [q[0], q[1]];
    k.v = [v[0], v[1]];
    k.j[0][0] = 1.0;
    k.j[1][1] = 1.0;
    for &(level, r) in segs {
        let (mut ang, mut om) = (q[2], v[2]);
        for i in 0..level {
            ang += q[leg + i];
            om += v[leg + i];
        }
        let (s, c) = ang.sin_cos();
        let w = [c * r[0] - s * r[1], s * r[0] + c * r[1]];
        let perp = [-w[1], w[0]];
        for a in 0..2 {
            k.p[a] += w[a];
            k.v[a] += om * perp[a];
            k.bias[a] -= om * om * w[a];
            k.j[a][2] += perp[a];
            for i in 0..level {
                k.j[a][leg + i] += perp[a];
            }
        }
    }
    k
}

/// Mass properties after randomization.
#[derive(Debug, Clone)]
struct Bodies {
    mass: [f64; 4],
    inertia: [f64; 4],
    torso_com: [f64; 2],
    armature: [f64; 3],
    damping: f64,
    friction: f64,
}

impl Bodies {
    fn new(m: &RobotModel, p: &EnvParams) -> Self {
        Bodies {
            mass: [m.torso_mass + p.base_mass_delta, m.thigh_mass, m.shank_mass, m.foot_mass],
            inertia: [
                m.torso_inertia * p.inertia_scale[0],
                m.thigh_inertia * p.inertia_scale[1],
                m.shank_inertia * p.inertia_scale[2],
                m.foot_inertia * p.inertia_scale[3],
            ],
            torso_com: [p.com_offset, m.torso_com],
            armature: [
                m.armature[0] * p.armature_scale,
                m.armature[1] * p.armature_scale,
                m.armature[2] * p.armature_scale,
            ],
            damping: m.joint_damping * p.joint_damping_scale,
            friction: m.joint_friction * p.joint_friction_scale,
        }
    }
}

fn thigh_end(m: &RobotModel) -> (usize, [f64; 2]) {
    (1, [0.0, -m.thigh_length])
}

fn shank_end(m: &RobotModel) -> (usize, [f64; 2]) {
    (2, [0.0, -m.shank_length])
}

fn body_kin(q: &[f64; NQ], v: &[f64; NQ], m: &RobotModel, b: &Bodies, leg: usize, level: usize) -> Kin {
    match level {
        0 => chain(q, v, leg, &[(0, b.torso_com)]),
        1 => chain(q, v, leg, &[(1, [0.0, -0.5 * m.thigh_length])]),
        2 => chain(q, v, leg, &[thigh_end(m), (2, [0.0, -0.5 * m.shank_length])]),
        _ => chain(q, v, leg, &[thigh_end(m), shank_end(m), (3, m.foot_com)]),
    }
}

/// Contact point `k` of a leg: 0 heel, 1 toe, 2 knee.
fn contact_kin(q: &[f64; NQ], v: &[f64; NQ], m: &RobotModel, leg: usize, k: usize) -> Kin {
    match k {
        0 => chain(q, v, leg, &[thigh_end(m), shank_end(m), (3, m.heel)]),
        1 => chain(q, v, leg, &[thigh_end(m), shank_end(m), (3, m.toe)]),
        _ => chain(q, v, leg, &[thigh_end(m)]),
    }
}

/// Damping ratio giving restitution `e` for a linear spring-damper impact.
pub fn damping_ratio(restitution: f64) -> f64 {
    if restitution <= 0.0 {
        return 1.0;
    }
    let l = restitution.min(1.0).ln();
    (-l / (std::f64::consts::PI.powi(2) + l * l).sqrt()).max(0.05)
}

#[derive(Debug, Clone, Copy)]
struct ContactForce {
    normal: f64,
    tangential: f64,
}

/// Penalty contact at one point: spring-damper normal force, viscous friction
/// capped by the Coulomb cone.
fn contact_force(k: &Kin, m: &RobotModel, p: &EnvParams) -> ContactForce {
    let pen = -k.p[1];
    if pen <= 0.0 {
        return ContactForce { normal: 0.0, tangential: 0.0 };
    }
    let c = 2.0 * damping_ratio(p.restitution) * (m.contact_stiffness * m.contact_mass).sqrt();
    let normal = (m.contact_stiffness * pen - c * k.v[1]).max(0.0);
    let cap = p.friction * normal;
    let tangential = (-m.tangential_damping * k.v[0]).clamp(-cap, cap);
    ContactForce { normal, tangential }
}

fn limit_torque(q: f64, lim: [f64; 2], stiffness: f64) -> f64 {
    if q < lim[0] {
        stiffness * (lim[0] - q)
    } else if q > lim[1] {
        -stiffness * (q - lim[1])
    } else {
        0.0
    }
}

fn limit_energy(q: f64, lim: [f64; 2], stiffness: f64) -> f64 {
    let e = if q < lim[0] { lim[0] - q } else if q > lim[1] { q - lim[1] } else { 0.0 };
    0.5 * stiffness * e * e
}

/// Sagittal torques from a 12-joint torque vector, in coordinate order.
fn coord_torques(tau: &JointVector) -> [f64; NQ] {
    let mut out = [0.0; NQ];
    for (j, c) in JOINT_COORDS {
        out[c] = tau[j];
    }
    out
}

/// Mass matrix and generalized force at one configuration.
fn dynamics(
    q: &[f64; NQ],
    v: &[f64; NQ],
    tau: &[f64; NQ],
    m: &RobotModel,
    b: &Bodies,
    p: &EnvParams,
    forces: Option<&mut [ContactForce; 6]>,
) -> (Mat9, Vec9) {
    let mut mm = Mat9::zeros();
    let mut f = Vec9::zeros();
    let g = m.gravity;

    let mut add_body = |k: &Kin, mass: f64, inertia: f64, deps: &[usize]| {
        for r in 0..NQ {
            let (jr0, jr1) = (k.j[0][r], k.j[1][r]);
            if jr0 == 0.0 && jr1 == 0.0 {
                continue;
            }
            for c in 0..NQ {
                mm[(r, c)] += mass * (jr0 * k.j[0][c] + jr1 * k.j[1][c]);
            }
            f[r] -= mass * (jr1 * g + jr0 * k.bias[0] + jr1 * k.bias[1]);
        }
        for &r in deps {
            for &c in deps {
                mm[(r, c)] += inertia;
            }
        }
    };

    let torso = body_kin(q, v, m, b, 3, 0);
    add_body(&torso, b.mass[0], b.inertia[0], &[2]);
    for leg in LEG_OFFSET {
        for level in 1..=3 {
            let k = body_kin(q, v, m, b, leg, level);
            let mut deps = [2usize; 4];
            for i in 0..level {
                deps[i + 1] = leg + i;
            }
            add_body(&k, b.mass[level], b.inertia[level], &deps[..=level]);
        }
    }

    for leg in LEG_OFFSET {
        for level in 0..3 {
            let c = leg + level;
            mm[(c, c)] += b.armature[level];
            let w = v[c];
            f[c] += tau[c] - b.damping * w - b.friction * (w / m.friction_velocity).tanh()
                + limit_torque(q[c], m.limits(level), m.limit_stiffness);
        }
    }

    let mut store = [ContactForce { normal: 0.0, tangential: 0.0 }; 6];
    for (li, leg) in LEG_OFFSET.into_iter().enumerate() {
        for pt in 0..3 {
            let k = contact_kin(q, v, m, leg, pt);
            let cf = contact_force(&k, m, p);
            store[li * 3 + pt] = cf;
            if cf.normal > 0.0 {
                for r in 0..NQ {
                    f[r] += k.j[0][r] * cf.tangential + k.j[1][r] * cf.normal;
                }
            }
        }
    }
    if let Some(out) = forces {
        *out = store;
    }
    (mm, f)
}

impl RobotState {
    /// State at the given joint pose with the lowest contact point on the ground.
    pub fn at_pose(pose: &JointVector, model: &RobotModel) -> Self {
        let mut coords = [0.0; NQ];
        for (j, c) in JOINT_COORDS {
            coords[c] = pose[j];
        }
        let v = [0.0; NQ];
        let mut lowest = f64::INFINITY;
        for leg in LEG_OFFSET {
            for pt in 0..3 {
                lowest = lowest.min(contact_kin(&coords, &v, model, leg, pt).p[1]);
            }
        }
        coords[1] = -lowest;
        RobotState {
            coords,
            velocities: v,
            contact_normal: [0.0; 6],
            contact_tangential: [0.0; 6],
            base_contact: false,
            apex_height: coords[1],
            time: 0.0,
            diverged: false,
            last_push: [0.0; 2],
        }
    }

    pub fn base_x(&self) -> f64 {
        self.coords[0]
    }

    pub fn base_height(&self) -> f64 {
        self.coords[1]
    }

    /// Nose-down positive.
    pub fn pitch(&self) -> f64 {
        -self.coords[2]
    }

    pub fn roll(&self) -> f64 {
        0.0
    }

    pub fn pitch_rate(&self) -> f64 {
        -self.velocities[2]
    }

    /// World-frame base velocity `(vx, vy, vz)`.
    pub fn world_lin_vel(&self) -> [f64; 3] {
        [self.velocities[0], 0.0, self.velocities[1]]
    }

    /// Base velocity expressed in the base frame.
    pub fn base_lin_vel(&self) -> [f64; 3] {
        let (s, c) = self.pitch().sin_cos();
        let (vx, vz) = (self.velocities[0], self.velocities[1]);
        [c * vx - s * vz, 0.0, s * vx + c * vz]
    }

    pub fn base_ang_vel(&self) -> [f64; 3] {
        [0.0, self.pitch_rate(), 0.0]
    }

    /// World `[0, 0, -1]` expressed in the base frame.
    pub fn projected_gravity(&self) -> [f64; 3] {
        projected_gravity(self.roll(), self.pitch())
    }

    pub fn joint_pos(&self) -> JointVector {
        let mut q = [0.0; NUM_JOINTS];
        for (j, c) in JOINT_COORDS {
            q[j] = self.coords[c];
        }
        q
    }

    pub fn joint_vel(&self) -> JointVector {
        let mut dq = [0.0; NUM_JOINTS];
        for (j, c) in JOINT_COORDS {
            dq[j] = self.velocities[c];
        }
        dq
    }

    pub fn foot_normal_force(&self) -> [f64; 2] {
        [self.contact_normal[0] + self.contact_normal[1], self.contact_normal[3] + self.contact_normal[4]]
    }

    pub fn foot_contact(&self) -> [bool; 2] {
        let f = self.foot_normal_force();
        [f[0] > 0.0, f[1] > 0.0]
    }

    pub fn knee_contact(&self) -> [bool; 2] {
        [self.contact_normal[2] > 0.0, self.contact_normal[5] > 0.0]
    }

    fn is_finite_bounded(&self) -> bool {
        self.coords.iter().chain(self.velocities.iter()).all(|x| x.is_finite() && x.abs() <= DIVERGENCE_LIMIT)
    }
}

/// Gravity direction in the base frame for the given roll and pitch.
pub fn projected_gravity(roll: f64, pitch: f64) -> [f64; 3] {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    [sp, -sr * cp, -cr * cp]
}

/// Kinematic quantities derived from a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements {
    pub base_height: f64,
    pub apex_height: f64,
    /// Lowest foot point above ground, clamped at 0.
    pub foot_clearance: [f64; 2],
    /// Ankle velocity components.
    pub foot_vz: [f64; 2],
    pub foot_vx: [f64; 2],
    pub contact: [bool; 2],
    pub knee_contact: [bool; 2],
    /// Shank angle from the downward vertical, forward positive.
    pub shank_angle: [f64; 2],
}

pub fn measure(state: &RobotState, model: &RobotModel) -> Measurements {
    let q = &state.coords;
    let v = &state.velocities;
    let mut out = Measurements {
        base_height: state.base_height(),
        apex_height: state.apex_height,
        foot_clearance: [0.0; 2],
        foot_vz: [0.0; 2],
        foot_vx: [0.0; 2],
        contact: state.foot_contact(),
        knee_contact: state.knee_contact(),
        shank_angle: [0.0; 2],
    };
    for (li, leg) in LEG_OFFSET.into_iter().enumerate() {
        let heel = contact_kin(q, v, model, leg, 0);
        let toe = contact_kin(q, v, model, leg, 1);
        out.foot_clearance[li] = heel.p[1].min(toe.p[1]).max(0.0);
        let ankle = chain(q, v, leg, &[thigh_end(model), shank_end(model)]);
        out.foot_vz[li] = ankle.v[1];
        out.foot_vx[li] = ankle.v[0];
        out.shank_angle[li] = q[2] + q[leg] + q[leg + 1];
    }
    out
}

/// Kinetic plus gravitational energy plus the energy stored in contact and
/// joint-limit springs.
pub fn mechanical_energy(state: &RobotState, model: &RobotModel, params: &EnvParams) -> f64 {
    let b = Bodies::new(model, params);
    let q = &state.coords;
    let v = &state.velocities;
    let (mm, _) = dynamics(q, v, &[0.0; NQ], model, &b, params, None);
    let vv = Vec9::from_column_slice(v);
    let mut e = 0.5 * vv.dot(&(mm * vv));
    let torso = body_kin(q, v, model, &b, 3, 0);
    e += b.mass[0] * model.gravity * torso.p[1];
    for leg in LEG_OFFSET {
        for level in 1..=3 {
            e += b.mass[level] * model.gravity * body_kin(q, v, model, &b, leg, level).p[1];
        }
        for pt in 0..3 {
            let pen = -contact_kin(q, v, model, leg, pt).p[1];
            if pen > 0.0 {
                e += 0.5 * model.contact_stiffness * pen * pen;
            }
        }
        for level in 0..3 {
            e += limit_energy(q[leg + level], model.limits(level), model.limit_stiffness);
        }
    }
    e
}

/// Advances one physics step of length `dt` with torques held constant.
pub fn step(state: &RobotState, torques: &JointVector, model: &RobotModel, params: &EnvParams, dt: f64) -> RobotState {
    let mut next = state.clone();
    if state.diverged {
        return next;
    }
    let b = Bodies::new(model, params);
    let tau = coord_torques(torques);
    let h = dt / model.substeps as f64;
    let mut forces = [ContactForce { normal: 0.0, tangential: 0.0 }; 6];
    for _ in 0..model.substeps {
        let (mm, f) = dynamics(&next.coords, &next.velocities, &tau, model, &b, params, Some(&mut forces));
        let acc = match mm.cholesky() {
            Some(ch) => ch.solve(&f),
            None => {
                next.diverged = true;
                return next;
            }
        };
        for i in 0..NQ {
            next.velocities[i] += h * acc[i];
            next.coords[i] += h * next.velocities[i];
        }
        if !next.is_finite_bounded() {
            next.diverged = true;
            return next;
        }
    }
    // forces reported at the final configuration
    let _ = dynamics(&next.coords, &next.velocities, &tau, model, &b, params, Some(&mut forces));
    for i in 0..6 {
        next.contact_normal[i] = forces[i].normal;
        next.contact_tangential[i] = forces[i].tangential;
    }
    next.time = state.time + dt;
    next.base_contact = base_touches_ground(&next, model);
    if next.foot_contact().iter().any(|&c| c) {
        next.apex_height = next.base_height();
    } else {
        next.apex_height = next.apex_height.max(next.base_height());
    }
    next
}

/// Hip or torso tip at or below the ground plane.
pub fn base_touches_ground(state: &RobotState, model: &RobotModel) -> bool {
    let q = &state.coords;
    let head = chain(q, &state.velocities, 3, &[(0, [0.0, model.torso_length])]);
    q[1] <= 0.0 || head.p[1] <= 0.0
}

/// Reset-time joint perturbation: `q = q_default · scale + offset` on the
/// simulated joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitRandomization {
    pub scale: [f64; 2],
    pub offset: [f64; 2],
}

pub fn perturbed_pose(scale: &[f64; 6], offset: &[f64; 6]) -> JointVector {
    let mut q = DEFAULT_POSE;
    for (k, (j, _)) in JOINT_COORDS.iter().enumerate() {
        q[*j] = DEFAULT_POSE[*j] * scale[k] + offset[k];
    }
    q
}

/// Fresh episode state. Base sits so that its lowest point touches the
/// ground; velocities are zero.
pub fn reset<R: Rng + ?Sized>(model: &RobotModel, init: Option<&InitRandomization>, rng: &mut R) -> RobotState {
    let pose = match init {
        None => DEFAULT_POSE,
        Some(r) => {
            let mut s = [1.0; 6];
            let mut o = [0.0; 6];
            for k in 0..6 {
                s[k] = crate::randomize::uniform(rng, r.scale);
                o[k] = crate::randomize::uniform(rng, r.offset);
            }
            perturbed_pose(&s, &o)
        }
    };
    RobotState::at_pose(&pose, model)
}

/// Gate for periodic pushes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushTimer {
    pub interval: f64,
    pub next: f64,
}

impl PushTimer {
    pub fn new(interval: f64) -> Self {
        PushTimer { interval, next: interval }
    }

    /// True once `t` reaches the next scheduled push; then schedules the one after.
    pub fn poll(&mut self, t: f64) -> bool {
        if t + 1e-9 >= self.next {
            self.next += self.interval;
            true
        } else {
            false
        }
    }
}

/// Adds a random base velocity impulse bounded by the maxima.
pub fn apply_push<R: Rng + ?Sized>(state: &RobotState, max_lin: f64, max_ang: f64, rng: &mut R) -> RobotState {
    let mut next = state.clone();
    let dvx = crate::randomize::uniform(rng, [-max_lin, max_lin]);
    let dw = crate::randomize::uniform(rng, [-max_ang, max_ang]);
    next.velocities[0] += dvx;
    // pitch rate is -ψ̇
    next.velocities[2] -= dw;
    next.last_push = [dvx, dw];
    next
}
