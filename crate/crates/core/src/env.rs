//! Vectorized training environment: one planar biped per slot with its own
//! RNG stream, actuator pipeline, phase clock and observation history.

use rand_chacha::ChaCha8Rng;

use crate::amp::{amp_features, FEATURE_DIM};
use crate::config::GaitSpec;
use crate::control::{Actuator, ActuatorConfig, Plant};
use crate::joints::{HIP_PITCH, JOINTS_PER_LEG, KNEE};
use crate::observation::{
    build_actor_frame, build_privileged_frame, zero_lin_vel, CriticObservation, ObservationFrame, ObservationStack,
    PrivilegedInputs, CRITIC_DIM, STACK_DIM,
};
use crate::randomize::{env_rng, sample_env_params_with_lag, uniform, EnvParams};
use crate::reference::{
    advance_phase, jump_reference_with, periodic_reference_scaled, stance_mask, JointReference, PhaseState,
};
use crate::rewards::{check_termination_with, raw_terms, resolve_weights, total_reward, RewardBreakdown, RewardInputs, N_TERMS};
use crate::sim::{self, measure, InitRandomization, Measurements, PushTimer, RobotModel, RobotState, DEFAULT_POSE};
use crate::{JointVector, NUM_JOINTS};

/// Joint reference of `spec`'s gait at phase `p`.
pub fn gait_reference(spec: &GaitSpec, p: PhaseState, squat_depth: f64) -> JointReference {
    if spec.gait_name.is_periodic() {
        periodic_reference_scaled(p, spec.ref_scale, spec.hip_scale)
    } else {
        jump_reference_with(p, squat_depth, &spec.jump)
    }
}

/// Mean `|q − q_ref|` over the hip-pitch and knee channels.
pub fn hip_knee_tracking_error(q_offset: &JointVector, r: &JointReference) -> f64 {
    let mut s = 0.0;
    for leg in [0, JOINTS_PER_LEG] {
        for j in [HIP_PITCH, KNEE] {
            s += (q_offset[leg + j] - r.q_ref[leg + j]).abs();
        }
    }
    s / 4.0
}

struct SimPlant<'a> {
    state: &'a mut RobotState,
    model: &'a RobotModel,
    params: &'a EnvParams,
    dt: f64,
}

impl Plant for SimPlant<'_> {
    fn joint_state(&self) -> (JointVector, JointVector) {
        (self.state.joint_pos(), self.state.joint_vel())
    }

    fn apply(&mut self, torque: &JointVector) {
        *self.state = sim::step(self.state, torque, self.model, self.params, self.dt);
    }
}

/// Per-step outcome of one environment slot.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Weighted task reward of this step.
    pub reward: RewardBreakdown,
    pub done: bool,
    pub time_out: bool,
    pub fallen: bool,
    pub diverged: bool,
    pub tracking_error: f64,
    pub base_height: f64,
    pub apex_height: f64,
    /// Largest knee flexion away from the default pose, over both legs.
    pub knee_flexion: f64,
    pub posture_tilt: f64,
    /// Episode return and length, set on the step that ends an episode.
    pub episode: Option<(f64, usize)>,
}

struct Slot {
    rng: ChaCha8Rng,
    state: RobotState,
    params: EnvParams,
    actuator: Actuator,
    phase: PhaseState,
    command: [f64; 3],
    stack: ObservationStack,
    critic: CriticObservation,
    prev_action: JointVector,
    prev_prev_action: JointVector,
    push_timer: PushTimer,
    steps: usize,
    episode_return: f64,
    feature: [f64; FEATURE_DIM],
}

/// Options that differ between training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvOptions {
    /// Apply domain randomization (ignored when the spec disables it).
    pub randomize: bool,
    /// Zero the actor's base linear velocity channels.
    pub zero_lin_vel: bool,
}

impl Default for EnvOptions {
    fn default() -> Self {
        EnvOptions { randomize: true, zero_lin_vel: false }
    }
}

pub struct VecEnv {
    spec: GaitSpec,
    weights: [f64; N_TERMS],
    actuator_cfg: ActuatorConfig,
    options: EnvOptions,
    slots: Vec<Slot>,
    min_lag: usize,
    squat_depth: f64,
    max_steps: usize,
    base_height_target: f64,
    standing_height: f64,
}

impl VecEnv {
    pub fn new(spec: &GaitSpec, num_envs: usize, seed: u64, options: EnvOptions) -> Self {
        let weights = resolve_weights(&spec.reward_weights)
            .expect("validated spec has known reward terms");
        let actuator_cfg = ActuatorConfig::from_spec(spec, DEFAULT_POSE);
        let max_steps = (spec.task.episode_length_s / spec.control.policy_dt()).round().max(1.0) as usize;
        let mut env = VecEnv {
            spec: spec.clone(),
            weights,
            actuator_cfg: actuator_cfg.clone(),
            options,
            slots: Vec::with_capacity(num_envs),
            min_lag: spec.randomization.lag_start,
            squat_depth: spec.jump.squat_depth_min,
            max_steps,
            base_height_target: spec.base_height_target(),
            standing_height: spec.robot.standing_height(),
        };
        for i in 0..num_envs {
            let rng = env_rng(seed, i as u64);
            let state = RobotState::at_pose(&DEFAULT_POSE, &spec.robot);
            let blank = ObservationFrame([0.0; crate::observation::FRAME_DIM]);
            let mut slot = Slot {
                rng,
                state,
                params: EnvParams::nominal(),
                actuator: Actuator::new(actuator_cfg.clone(), spec.control.ema_coeff),
                phase: PhaseState::new(0.0),
                command: [0.0; 3],
                stack: ObservationStack::new(&blank),
                critic: CriticObservation::new(&[0.0; crate::observation::PRIVILEGED_DIM]),
                prev_action: [0.0; NUM_JOINTS],
                prev_prev_action: [0.0; NUM_JOINTS],
                push_timer: PushTimer::new(spec.randomization.push_interval),
                steps: 0,
                episode_return: 0.0,
                feature: [0.0; FEATURE_DIM],
            };
            env.reset_slot(&mut slot);
            env.slots.push(slot);
        }
        env
    }

    pub fn num_envs(&self) -> usize {
        self.slots.len()
    }

    pub fn spec(&self) -> &GaitSpec {
        &self.spec
    }

    pub fn max_episode_steps(&self) -> usize {
        self.max_steps
    }

    /// Curriculum values used for subsequent resets and references.
    pub fn set_curriculum(&mut self, min_lag: usize, squat_depth: f64) {
        self.min_lag = min_lag;
        self.squat_depth = squat_depth;
    }

    pub fn squat_depth(&self) -> f64 {
        self.squat_depth
    }

    pub fn actor_obs(&self, env: usize) -> &[f64] {
        self.slots[env].stack.flatten()
    }

    pub fn critic_obs(&self, env: usize) -> &[f64] {
        self.slots[env].critic.as_slice()
    }

    /// All actor observations, env-major.
    pub fn actor_obs_all(&self, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.slots.len() * STACK_DIM);
        for s in &self.slots {
            out.extend_from_slice(s.stack.flatten());
        }
    }

    pub fn critic_obs_all(&self, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.slots.len() * CRITIC_DIM);
        for s in &self.slots {
            out.extend_from_slice(s.critic.as_slice());
        }
    }

    pub fn state(&self, env: usize) -> &RobotState {
        &self.slots[env].state
    }

    pub fn env_params(&self, env: usize) -> &EnvParams {
        &self.slots[env].params
    }

    pub fn phase(&self, env: usize) -> PhaseState {
        self.slots[env].phase
    }

    pub fn command(&self, env: usize) -> [f64; 3] {
        self.slots[env].command
    }

    pub fn reference(&self, env: usize) -> JointReference {
        gait_reference(&self.spec, self.slots[env].phase, self.squat_depth)
    }

    fn randomizing(&self) -> bool {
        self.options.randomize && self.spec.randomization.enabled
    }

    fn privileged(&self, slot: &Slot, m: &Measurements, r: &JointReference) -> [f64; crate::observation::PRIVILEGED_DIM] {
        build_privileged_frame(&PrivilegedInputs {
            state: &slot.state,
            measurements: m,
            command: &slot.command,
            phase: slot.phase,
            prev_action: &slot.prev_action,
            q_default: &DEFAULT_POSE,
            env_params: &slot.params,
            reference: r,
            stance: stance_mask(slot.phase, self.spec.stance_ratio),
            push: slot.state.last_push,
        })
    }

    fn actor_frame(&self, slot: &Slot) -> Option<ObservationFrame> {
        let mut f = build_actor_frame(&slot.state, &slot.command, slot.phase, &slot.prev_action, &DEFAULT_POSE).ok()?;
        if self.options.zero_lin_vel {
            zero_lin_vel(&mut f);
        }
        Some(f)
    }

    fn features(state: &RobotState) -> [f64; FEATURE_DIM] {
        amp_features(&state.joint_pos(), &state.joint_vel(), &state.projected_gravity(), &DEFAULT_POSE)
    }

    fn reset_slot(&self, slot: &mut Slot) {
        let spec = &self.spec;
        let r = &spec.randomization;
        let (params, init) = if self.randomizing() {
            let p = sample_env_params_with_lag(r, self.min_lag, &mut slot.rng);
            (p, Some(InitRandomization { scale: r.init_scale, offset: r.init_offset }))
        } else {
            (EnvParams::nominal(), None)
        };
        slot.state = sim::reset(&spec.robot, init.as_ref(), &mut slot.rng);
        slot.params = params;
        slot.actuator.reset(slot.params.action_lag, slot.params.actuator_scales());
        slot.phase = PhaseState::new(0.0);
        slot.command = [
            uniform(&mut slot.rng, spec.task.command_x),
            uniform(&mut slot.rng, spec.task.command_y),
            uniform(&mut slot.rng, spec.task.command_yaw),
        ];
        slot.prev_action = [0.0; NUM_JOINTS];
        slot.prev_prev_action = [0.0; NUM_JOINTS];
        slot.push_timer = PushTimer::new(slot.params.push.interval);
        slot.steps = 0;
        slot.episode_return = 0.0;
        slot.feature = Self::features(&slot.state);
        let m = measure(&slot.state, &spec.robot);
        let reference = gait_reference(spec, slot.phase, self.squat_depth);
        let frame = self.actor_frame(slot).expect("reset state is finite");
        slot.stack.reset(&frame);
        let pf = self.privileged(slot, &m, &reference);
        slot.critic.reset(&pf);
    }

    /// Resets every slot, redrawing parameters with the current curriculum.
    pub fn reset_all(&mut self) {
        let mut slots = std::mem::take(&mut self.slots);
        for s in slots.iter_mut() {
            self.reset_slot(s);
        }
        self.slots = slots;
    }

    /// Steps all slots with env-major `actions`. Finished episodes are reset
    /// in place, so observations afterwards belong to the next episode.
    /// `amp_out` receives `(s, s')` feature rows of every slot.
    pub fn step(&mut self, actions: &[f64], amp_out: Option<&mut Vec<f64>>) -> Vec<StepInfo> {
        assert_eq!(actions.len(), self.slots.len() * NUM_JOINTS, "action batch shape");
        let mut slots = std::mem::take(&mut self.slots);
        let mut infos = Vec::with_capacity(slots.len());
        let mut amp_rows = amp_out;
        if let Some(v) = amp_rows.as_deref_mut() {
            v.clear();
        }
        for (i, slot) in slots.iter_mut().enumerate() {
            let mut a = [0.0; NUM_JOINTS];
            let clip = self.spec.control.action_clip;
            for j in 0..NUM_JOINTS {
                a[j] = actions[i * NUM_JOINTS + j].clamp(-clip, clip);
            }
            let info = self.step_slot(slot, &a, amp_rows.as_deref_mut());
            infos.push(info);
        }
        self.slots = slots;
        infos
    }

    fn step_slot(&self, slot: &mut Slot, a: &JointVector, amp_out: Option<&mut Vec<f64>>) -> StepInfo {
        let spec = &self.spec;
        let ctl = &spec.control;
        slot.state.last_push = [0.0; 2];
        let torques = {
            let mut plant = SimPlant { state: &mut slot.state, model: &spec.robot, params: &slot.params, dt: ctl.sim_dt };
            slot.actuator.control_step(a, &mut plant, ctl.decimation)
        };
        let mut tau_rms = [0.0; NUM_JOINTS];
        for t in &torques {
            for j in 0..NUM_JOINTS {
                tau_rms[j] += t[j] * t[j] / torques.len() as f64;
            }
        }
        tau_rms.iter_mut().for_each(|x| *x = x.sqrt());

        slot.phase = advance_phase(slot.phase, ctl.policy_dt(), spec.cycle_time);
        slot.steps += 1;
        if slot.params.push.enabled && slot.push_timer.poll(slot.state.time) {
            let p = slot.params.push;
            slot.state = sim::apply_push(&slot.state, p.max_lin_vel, p.max_ang_vel, &mut slot.rng);
        }

        let m = measure(&slot.state, &spec.robot);
        let reference = gait_reference(spec, slot.phase, self.squat_depth);
        let diverged = slot.state.diverged;
        let (reward, tracking_error, knee_flexion, tilt) = if diverged {
            (total_reward(&[0.0; N_TERMS], &self.weights), f64::NAN, 0.0, 0.0)
        } else {
            let raw = raw_terms(
                &RewardInputs {
                    state: &slot.state,
                    measurements: &m,
                    reference: &reference,
                    phase: slot.phase,
                    command: &slot.command,
                    q_default: &DEFAULT_POSE,
                    action: a,
                    prev_action: &slot.prev_action,
                    prev_prev_action: &slot.prev_prev_action,
                    torque: &tau_rms,
                    tau_max: &self.actuator_cfg.tau_max,
                    base_height_target: self.base_height_target,
                    standing_height: self.standing_height,
                },
                &spec.reward_params,
            );
            let q = slot.state.joint_pos();
            let mut off = [0.0; NUM_JOINTS];
            for j in 0..NUM_JOINTS {
                off[j] = q[j] - DEFAULT_POSE[j];
            }
            let g = slot.state.projected_gravity();
            (
                total_reward(&raw, &self.weights),
                hip_knee_tracking_error(&off, &reference),
                off[KNEE].abs().max(off[JOINTS_PER_LEG + KNEE].abs()),
                (g[0] * g[0] + g[1] * g[1]).sqrt(),
            )
        };
        let term = check_termination_with(&slot.state, spec.reward_params.roll_limit, spec.reward_params.pitch_limit);

        slot.prev_prev_action = slot.prev_action;
        slot.prev_action = *a;
        let next_feature = if diverged { slot.feature } else { Self::features(&slot.state) };
        if let Some(out) = amp_out {
            out.extend_from_slice(&slot.feature);
            out.extend_from_slice(&next_feature);
        }
        slot.feature = next_feature;

        let frame = if diverged { None } else { self.actor_frame(slot) };
        let fallen = term.fallen || diverged || frame.is_none();
        let time_out = !fallen && slot.steps >= self.max_steps;
        slot.episode_return += reward.total;
        let mut info = StepInfo {
            reward,
            done: fallen || time_out,
            time_out,
            fallen,
            diverged: diverged || frame.is_none(),
            tracking_error,
            base_height: m.base_height,
            apex_height: m.apex_height,
            knee_flexion,
            posture_tilt: tilt,
            episode: None,
        };
        if info.done {
            info.episode = Some((slot.episode_return, slot.steps));
            self.reset_slot(slot);
        } else {
            slot.stack.push_frame(&frame.expect("checked above"));
            let pf = self.privileged(slot, &m, &reference);
            slot.critic.push_frame(&pf);
        }
        info
    }
}
