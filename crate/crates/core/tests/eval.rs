use std::f64::consts::PI;

use multigait::config::{Gait, GaitSpec};
use multigait::eval::{evaluate, EvalOptions, ZeroPolicy};

#[test]
fn zero_action_tracking_error_is_reference_magnitude() {
    for gait in [Gait::Walking, Gait::StairClimbing] {
        let spec = GaitSpec::preset(gait);
        // mean over a cycle of (|hip_L| + |knee_L| + |hip_R| + |knee_R|) / 4
        let oracle = (spec.hip_scale + 2.0 * spec.ref_scale) / (2.0 * PI);
        let mut opts = EvalOptions::new(2, 3);
        // a whole number of cycles
        opts.max_steps = Some((5.0 * spec.cycle_time / spec.control.policy_dt()).round() as usize);
        let m = evaluate(&spec, &mut ZeroPolicy, &opts).unwrap();
        assert_eq!(m.fall_rate, 0.0, "{gait:?}");
        assert!((m.tracking_error - oracle).abs() < 0.02, "{gait:?}: {} vs {oracle}", m.tracking_error);
    }
}

#[test]
fn eval_dump_has_one_row_per_step() {
    let spec = GaitSpec::preset(Gait::Walking);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let mut opts = EvalOptions::new(1, 1);
    opts.max_steps = Some(30);
    opts.dump = Some(path.clone());
    let m = evaluate(&spec, &mut ZeroPolicy, &opts).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("t,x,z,pitch,q_"));
    // header plus every step but the terminal one
    assert_eq!(lines.len(), m.mean_episode_length as usize);
}
