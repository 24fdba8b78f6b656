use multigait::config::Gait;
use multigait::randomize::{sample_env_params, EnvParams, RandomizationRanges};
use multigait::sim::{mechanical_energy, step, RobotModel, RobotState, DEFAULT_POSE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn passive_drop_energy_never_increases() {
    let m = RobotModel::default();
    let p = EnvParams { restitution: 0.0, ..EnvParams::nominal() };
    for lift in [0.05, 0.2, 0.4] {
        let mut s = RobotState::at_pose(&DEFAULT_POSE, &m);
        s.coords[1] += lift;
        let mut e = mechanical_energy(&s, &m, &p);
        let mut touched = false;
        for k in 0..600 {
            s = step(&s, &[0.0; 12], &m, &p, 0.005);
            assert!(!s.diverged);
            let next = mechanical_energy(&s, &m, &p);
            assert!(next <= e + 1e-6 * e.abs(), "lift {lift} step {k}: {e} -> {next}");
            touched |= s.contact_normal.iter().any(|&f| f > 0.0);
            e = next;
        }
        assert!(touched, "lift {lift} never reached the ground");
    }
}

#[test]
fn friction_cone_holds_over_random_contact_steps() {
    let m = RobotModel::default();
    let ranges = RandomizationRanges::for_gait(Gait::Walking);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut contact_steps = 0usize;
    let mut total = 0usize;
    while contact_steps < 100_000 {
        let p = sample_env_params(&ranges, &mut rng);
        let mut s = RobotState::at_pose(&DEFAULT_POSE, &m);
        s.velocities[0] = rng.random_range(-1.5..1.5);
        s.velocities[1] = rng.random_range(-0.5..0.2);
        for _ in 0..200 {
            let mut tau = [0.0; 12];
            for t in tau.iter_mut() {
                *t = rng.random_range(-20.0..20.0);
            }
            s = step(&s, &tau, &m, &p, 0.005);
            total += 1;
            if s.diverged || s.base_contact {
                break;
            }
            for i in 0..6 {
                let (n, t) = (s.contact_normal[i], s.contact_tangential[i]);
                assert!(n >= 0.0);
                assert!(t.abs() <= p.friction * n * (1.0 + 1e-12), "point {i}: |{t}| > {} * {n}", p.friction);
                if n > 0.0 {
                    contact_steps += 1;
                }
            }
        }
    }
    assert!(total > 0);
}
