//! Action scaling, PD law, EMA smoothing and actuator delay.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::GaitSpec;
use crate::{JointVector, NUM_JOINTS};

/// Timing and filtering of the low-level control loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    /// Physics (and PD) step, seconds.
    pub sim_dt: f64,
    /// PD evaluations per policy action.
    pub decimation: usize,
    /// EMA weight on the newest action.
    pub ema_coeff: f64,
    /// Raw policy actions are clipped to `±action_clip` before scaling.
    pub action_clip: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams { sim_dt: 0.005, decimation: 4, ema_coeff: 0.8, action_clip: 10.0 }
    }
}

impl ControlParams {
    pub fn policy_dt(&self) -> f64 {
        self.sim_dt * self.decimation as f64
    }
}

/// Per-joint actuator constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorConfig {
    pub kp: JointVector,
    pub kd: JointVector,
    pub tau_max: JointVector,
    /// `tau_max / kp`, rad.
    pub k_gain: JointVector,
    pub k_action: f64,
    pub q_default: JointVector,
}

impl ActuatorConfig {
    pub fn new(kp: JointVector, kd: JointVector, tau_max: JointVector, k_action: f64, q_default: JointVector) -> Self {
        let mut k_gain = [0.0; NUM_JOINTS];
        for i in 0..NUM_JOINTS {
            k_gain[i] = tau_max[i] / kp[i];
        }
        ActuatorConfig { kp, kd, tau_max, k_gain, k_action, q_default }
    }

    pub fn from_spec(spec: &GaitSpec, q_default: JointVector) -> Self {
        let (kp, kd, tau_max) = spec.pd_gains.vectors();
        Self::new(kp, kd, tau_max, spec.action_scale, q_default)
    }
}

/// `q_target = a · k_action · k_gain + q_default`.
pub fn action_to_target(a: &JointVector, cfg: &ActuatorConfig) -> JointVector {
    let mut out = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        out[i] = a[i] * cfg.k_action * cfg.k_gain[i] + cfg.q_default[i];
    }
    out
}

/// Multiplicative perturbations of the nominal actuator, sampled per episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorScales {
    pub kp: f64,
    pub kd: f64,
    pub motor_strength: f64,
}

impl Default for ActuatorScales {
    fn default() -> Self {
        ActuatorScales { kp: 1.0, kd: 1.0, motor_strength: 1.0 }
    }
}

/// `τ = clip(Kp (q_target − q) − Kd q̇, ±tau_max)`.
pub fn pd_torque(q_target: &JointVector, q: &JointVector, dq: &JointVector, cfg: &ActuatorConfig) -> JointVector {
    pd_torque_scaled(q_target, q, dq, cfg, &ActuatorScales::default())
}

/// PD law with randomized gains; motor strength scales the torque before clipping.
pub fn pd_torque_scaled(
    q_target: &JointVector,
    q: &JointVector,
    dq: &JointVector,
    cfg: &ActuatorConfig,
    scales: &ActuatorScales,
) -> JointVector {
    let mut tau = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        let raw = cfg.kp[i] * scales.kp * (q_target[i] - q[i]) - cfg.kd[i] * scales.kd * dq[i];
        let lim = cfg.tau_max[i];
        tau[i] = (raw * scales.motor_strength).clamp(-lim, lim);
    }
    tau
}

/// `coeff · a + (1 − coeff) · prev`.
pub fn ema_smooth(a: &JointVector, prev: &JointVector, coeff: f64) -> JointVector {
    let mut out = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        out[i] = coeff * a[i] + (1.0 - coeff) * prev[i];
    }
    out
}

/// Fixed-lag FIFO. Starts filled with the reset action.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayBuffer {
    queue: VecDeque<JointVector>,
    lag: usize,
}

impl DelayBuffer {
    pub fn new(lag: usize, reset_action: JointVector) -> Self {
        let mut queue = VecDeque::with_capacity(lag + 1);
        queue.extend(std::iter::repeat_n(reset_action, lag));
        DelayBuffer { queue, lag }
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn reset(&mut self, lag: usize, reset_action: JointVector) {
        *self = DelayBuffer::new(lag, reset_action);
    }

    /// Pushes `a` and returns the action pushed `lag` calls earlier.
    pub fn delayed_action(&mut self, a: JointVector) -> JointVector {
        self.queue.push_back(a);
        self.queue.pop_front().expect("queue holds lag + 1 entries")
    }
}

/// Something that can report joint state and absorb torques for one PD tick.
pub trait Plant {
    fn joint_state(&self) -> (JointVector, JointVector);
    fn apply(&mut self, torque: &JointVector);
}

/// Per-environment actuator pipeline: EMA at policy rate, then the delay
/// line and PD law at every physics tick.
#[derive(Debug, Clone)]
pub struct Actuator {
    pub cfg: ActuatorConfig,
    pub scales: ActuatorScales,
    ema_coeff: f64,
    filtered: JointVector,
    delay: DelayBuffer,
}

impl Actuator {
    pub fn new(cfg: ActuatorConfig, ema_coeff: f64) -> Self {
        Actuator {
            cfg,
            scales: ActuatorScales::default(),
            ema_coeff,
            filtered: [0.0; NUM_JOINTS],
            delay: DelayBuffer::new(0, [0.0; NUM_JOINTS]),
        }
    }

    /// Clears filter memory and installs a new lag and gain perturbation.
    pub fn reset(&mut self, lag: usize, scales: ActuatorScales) {
        self.scales = scales;
        self.filtered = [0.0; NUM_JOINTS];
        self.delay.reset(lag, [0.0; NUM_JOINTS]);
    }

    pub fn lag(&self) -> usize {
        self.delay.lag()
    }

    /// The smoothed action most recently fed to the delay line.
    pub fn filtered(&self) -> &JointVector {
        &self.filtered
    }

    /// Runs one policy step: `decimation` PD evaluations, each against the
    /// plant's refreshed joint state. Returns the torques applied.
    pub fn control_step<P: Plant>(&mut self, action: &JointVector, plant: &mut P, decimation: usize) -> Vec<JointVector> {
        self.filtered = ema_smooth(action, &self.filtered, self.ema_coeff);
        let mut applied = Vec::with_capacity(decimation);
        for _ in 0..decimation {
            let a = self.delay.delayed_action(self.filtered);
            let target = action_to_target(&a, &self.cfg);
            let (q, dq) = plant.joint_state();
            let tau = pd_torque_scaled(&target, &q, &dq, &self.cfg, &self.scales);
            plant.apply(&tau);
            applied.push(tau);
        }
        applied
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Gait, GaitSpec};
    use crate::joints::KNEE;
    use proptest::prelude::*;

    fn walking() -> ActuatorConfig {
        ActuatorConfig::from_spec(&GaitSpec::preset(Gait::Walking), [0.1; 12])
    }

    #[test]
    fn zero_action_is_default_pose() {
        let cfg = walking();
        assert_eq!(action_to_target(&[0.0; 12], &cfg), cfg.q_default);
    }

    #[test]
    fn knee_target_hand_calculation() {
        let cfg = walking();
        let mut a = [0.0; 12];
        a[KNEE] = 1.0;
        let t = action_to_target(&a, &cfg);
        assert_eq!(cfg.kp[KNEE], 280.0);
        assert_eq!(cfg.tau_max[KNEE], 150.0);
        assert!((t[KNEE] - (0.1 + 0.25 * 150.0 / 280.0)).abs() < 1e-15);
    }

    #[test]
    fn pd_examples() {
        let mut cfg = walking();
        let q = [0.2; 12];
        assert_eq!(pd_torque(&q, &q, &[0.0; 12], &cfg), [0.0; 12]);

        let mut qt = q;
        qt[KNEE] += 1.0;
        assert_eq!(pd_torque(&qt, &q, &[0.0; 12], &cfg)[KNEE], 150.0);

        cfg.kd[KNEE] = 14.0;
        let mut dq = [0.0; 12];
        dq[KNEE] = 1.0;
        assert_eq!(pd_torque(&q, &q, &dq, &cfg)[KNEE], -14.0);
    }

    #[test]
    fn ema_examples() {
        let a = [1.0; 12];
        let p = [3.0; 12];
        assert_eq!(ema_smooth(&a, &p, 1.0), a);
        assert_eq!(ema_smooth(&a, &p, 0.0), p);
        let mut prev = [0.0; 12];
        let mut last_gap = f64::INFINITY;
        for _ in 0..50 {
            prev = ema_smooth(&a, &prev, 0.3);
            let gap = (a[0] - prev[0]).abs();
            assert!(gap < last_gap);
            last_gap = gap;
        }
        assert!(last_gap < 1e-7);
    }

    #[test]
    fn delay_examples() {
        let mut b = DelayBuffer::new(5, [0.0; 12]);
        let mut out = [0.0; 12];
        for k in 1..=10 {
            out = b.delayed_action([k as f64; 12]);
        }
        assert_eq!(out, [5.0; 12]);

        let mut b = DelayBuffer::new(0, [0.0; 12]);
        assert_eq!(b.delayed_action([4.0; 12]), [4.0; 12]);

        let mut b = DelayBuffer::new(10, [-1.0; 12]);
        for k in 1..10 {
            assert_eq!(b.delayed_action([k as f64; 12]), [-1.0; 12]);
        }
    }

    struct Recorder {
        q: JointVector,
        calls: usize,
    }

    impl Plant for Recorder {
        fn joint_state(&self) -> (JointVector, JointVector) {
            (self.q, [0.0; 12])
        }
        fn apply(&mut self, _t: &JointVector) {
            self.calls += 1;
        }
    }

    #[test]
    fn control_step_runs_decimation_pd_ticks() {
        let mut act = Actuator::new(walking(), 0.8);
        let mut plant = Recorder { q: [0.0; 12], calls: 0 };
        assert_eq!(act.control_step(&[0.5; 12], &mut plant, 4).len(), 4);
        assert_eq!(plant.calls, 4);
        assert_eq!(act.control_step(&[0.5; 12], &mut plant, 1).len(), 1);
    }

    // joint relaxes monotonically toward a fixed target
    struct Converging {
        q: JointVector,
        target: f64,
    }

    impl Plant for Converging {
        fn joint_state(&self) -> (JointVector, JointVector) {
            (self.q, [0.0; 12])
        }
        fn apply(&mut self, _t: &JointVector) {
            for v in self.q.iter_mut() {
                *v += 0.3 * (self.target - *v);
            }
        }
    }

    #[test]
    fn torque_magnitude_shrinks_as_joint_converges() {
        let cfg = walking();
        let mut act = Actuator::new(cfg.clone(), 1.0);
        let a = [0.2; 12];
        let target = action_to_target(&a, &cfg)[KNEE];
        let mut plant = Converging { q: [-1.0; 12], target };
        let mut last = f64::INFINITY;
        for _ in 0..6 {
            for tau in act.control_step(&a, &mut plant, 4) {
                assert!(tau[KNEE].abs() <= last);
                last = tau[KNEE].abs();
            }
        }
    }

    proptest! {
        #[test]
        fn torque_never_exceeds_limit(
            qt in prop::array::uniform12(-5.0f64..5.0),
            q in prop::array::uniform12(-5.0f64..5.0),
            dq in prop::array::uniform12(-50.0f64..50.0),
            ms in 0.5f64..1.5,
        ) {
            let cfg = walking();
            let s = ActuatorScales { kp: 1.2, kd: 0.8, motor_strength: ms };
            let tau = pd_torque_scaled(&qt, &q, &dq, &cfg, &s);
            for i in 0..12 {
                prop_assert!(tau[i].abs() <= cfg.tau_max[i]);
            }
        }

        #[test]
        fn target_is_linear_in_action(a in prop::array::uniform12(-3.0f64..3.0)) {
            let cfg = walking();
            let mut a2 = a;
            a2.iter_mut().for_each(|v| *v *= 2.0);
            let t1 = action_to_target(&a, &cfg);
            let t2 = action_to_target(&a2, &cfg);
            for i in 0..12 {
                let d1 = t1[i] - cfg.q_default[i];
                let d2 = t2[i] - cfg.q_default[i];
                prop_assert!((d2 - 2.0 * d1).abs() < 1e-12);
            }
        }

        #[test]
        fn unclipped_pd_is_affine(
            e1 in prop::array::uniform12(-0.1f64..0.1),
            e2 in prop::array::uniform12(-0.1f64..0.1),
        ) {
            let cfg = walking();
            let z = [0.0; 12];
            let mut sum = [0.0; 12];
            for i in 0..12 { sum[i] = e1[i] + e2[i]; }
            let t1 = pd_torque(&e1, &z, &z, &cfg);
            let t2 = pd_torque(&e2, &z, &z, &cfg);
            let ts = pd_torque(&sum, &z, &z, &cfg);
            for i in 0..12 {
                prop_assert!((ts[i] - t1[i] - t2[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn delay_is_a_shift(lag in 0usize..12, xs in prop::collection::vec(-1.0f64..1.0, 1..60)) {
            let mut b = DelayBuffer::new(lag, [9.0; 12]);
            for (k, &x) in xs.iter().enumerate() {
                let out = b.delayed_action([x; 12]);
                let expect = if k >= lag { xs[k - lag] } else { 9.0 };
                prop_assert_eq!(out, [expect; 12]);
            }
        }
    }
}
