use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use multigait::config::{Gait, GaitSpec};
use multigait::env::{EnvOptions, VecEnv};
use multigait::observation::{RunningNormalizer, CRITIC_DIM, STACK_DIM};
use multigait::ppo::gae::compute_gae_batch;
use multigait::ppo::network::PolicyNetwork;
use multigait::ppo::{ppo_update, PolicyOptimizer, RolloutBatch};
use multigait::randomize::EnvParams;
use multigait::sim::{step, RobotState, DEFAULT_POSE};
use multigait::NUM_JOINTS;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sim(c: &mut Criterion) {
    let spec = GaitSpec::preset(Gait::Walking);
    let params = EnvParams::nominal();
    let mut state = RobotState::at_pose(&DEFAULT_POSE, &spec.robot);
    state.coords[1] += 0.02;
    let torques = [0.0; NUM_JOINTS];
    c.bench_function("sim_step", |b| {
        b.iter(|| step(black_box(&state), black_box(&torques), &spec.robot, &params, spec.control.sim_dt))
    });

    let mut env = VecEnv::new(&spec, 16, 0, EnvOptions::default());
    let actions = vec![0.0; 16 * NUM_JOINTS];
    c.bench_function("vec_env_step_16", |b| b.iter(|| env.step(black_box(&actions), None)));
}

fn mlp(c: &mut Criterion) {
    let spec = GaitSpec::preset(Gait::Walking);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = PolicyNetwork::new(&spec.desk.actor_hidden, &spec.desk.critic_hidden, -0.7, &mut rng);
    let x = Array2::from_shape_fn((256, STACK_DIM), |_| rng.random_range(-1.0..1.0));
    c.bench_function("actor_forward_256", |b| b.iter(|| net.actor.forward(black_box(x.view()))));
    let dout = Array2::from_elem((256, NUM_JOINTS), 1.0);
    let mut grad = vec![0.0; net.actor.params.len()];
    c.bench_function("actor_forward_backward_256", |b| {
        b.iter(|| {
            let cache = net.actor.forward_cached(x.view());
            net.actor.backward(&cache, dout.view(), &mut grad)
        })
    });
}

fn gae(c: &mut Criterion) {
    let (envs, steps) = (64, 24);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rewards: Vec<f64> = (0..envs * steps).map(|_| rng.random_range(-1.0..1.0)).collect();
    let values: Vec<f64> = (0..envs * steps).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dones: Vec<bool> = (0..envs * steps).map(|_| rng.random_bool(0.02)).collect();
    let last = vec![0.5; envs];
    c.bench_function("gae_64x24", |b| b.iter(|| compute_gae_batch(&rewards, &values, &dones, &last, 0.99, 0.95)));
}

fn rollout(net: &PolicyNetwork, envs: usize, steps: usize, rng: &mut ChaCha8Rng) -> RolloutBatch {
    let mut b = RolloutBatch::new(envs, steps, STACK_DIM, CRITIC_DIM, NUM_JOINTS);
    for _ in 0..envs * steps {
        let obs: Vec<f64> = (0..STACK_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        b.critic_obs.extend((0..CRITIC_DIM).map(|_| rng.random_range(-1.0..1.0)));
        let out = net.policy_forward(&obs, rng);
        b.obs.extend_from_slice(&obs);
        b.actions.extend_from_slice(&out.action);
        b.means.extend_from_slice(&out.mean);
        b.log_probs.push(out.log_prob);
        b.rewards.push(rng.random_range(-1.0..1.0));
        b.dones.push(false);
        b.values.push(0.0);
    }
    b.old_log_std = net.log_std.clone();
    b.last_values = vec![0.0; envs];
    b.compute_returns(0.99, 0.95);
    b
}

fn ppo(c: &mut Criterion) {
    let spec = GaitSpec::preset(Gait::Walking);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = PolicyNetwork::new(&spec.desk.actor_hidden, &spec.desk.critic_hidden, -0.7, &mut rng);
    let batch = rollout(&net, 16, 24, &mut rng);
    let (an, cn) = (RunningNormalizer::new(STACK_DIM), RunningNormalizer::new(CRITIC_DIM));
    let mut params = spec.ppo.clone();
    params.epochs = 1;
    let mut group = c.benchmark_group("ppo");
    group.sample_size(10);
    group.bench_function("update_16x24_one_epoch", |b| {
        b.iter_batched(
            || (net.clone(), PolicyOptimizer::new(&net), ChaCha8Rng::seed_from_u64(3)),
            |(mut n, mut opt, mut r)| {
                let mut lr = params.learning_rate;
                ppo_update(&mut n, &mut opt, &batch, &an, &cn, &params, true, &mut lr, &mut r).expect("finite update")
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, sim, mlp, gae, ppo);
criterion_main!(benches);
