use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::Args;
use multigait::config::{Gait, GaitSpec};
use multigait::eval::{evaluate_bundle, EvalMetrics, EvalOptions};
use multigait::ppo::{load_policy, AmpMode, TrainRecord, Trainer};

use crate::manifest::{ensure_writable, ExperimentManifest};
use crate::{parse_amp, usage, ScaleArgs, SpecArgs};

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub scale: ScaleArgs,
    /// Seeds; one run directory each.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub seed: Vec<u64>,
    /// Adversarial motion prior: preset, on or off.
    #[arg(long, value_parser = parse_amp, default_value = "preset")]
    pub amp: AmpMode,
    /// Output root. Runs go to OUT/<gait>/seed_<n>.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Override the scale's iteration count.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Override the scale's environment count.
    #[arg(long)]
    pub envs: Option<usize>,
    /// Iterations between checkpoints (0 disables).
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    /// Iterations between progress lines (0 silences them).
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
}

pub fn manifest(spec: &SpecArgs, scale: ScaleArgs, seeds: &[u64], amp: AmpMode, out: &Path) -> anyhow::Result<ExperimentManifest> {
    Ok(ExperimentManifest {
        spec: spec.resolve(Gait::Walking)?,
        seeds: seeds.to_vec(),
        amp,
        out_dir: out.to_path_buf(),
        scale: scale.scale(),
        iterations: None,
        num_envs: None,
        checkpoint_interval: None,
    })
}

pub fn progress_line(label: &str, r: &TrainRecord, started: Instant) -> String {
    format!(
        "[{label}] it {:>5} {:>7.1}s reward {:.4} fail {:.3} track {:.4} ep_len {:.1} kl {:.2e} lr {:.1e}",
        r.iteration,
        started.elapsed().as_secs_f64(),
        r.mean_reward,
        r.failure_rate,
        r.tracking_error,
        r.mean_episode_length,
        r.kl,
        r.learning_rate,
    )
}

/// Trains one run into `dir`, printing progress to stderr.
pub fn train_one(m: &ExperimentManifest, seed: u64, amp: AmpMode, dir: PathBuf, label: &str, log_every: usize) -> anyhow::Result<multigait::ppo::TrainOutcome> {
    let options = m.options(seed, amp, dir.clone());
    let trainer = Trainer::new(&m.spec, &options)?;
    eprintln!(
        "[{label}] {} envs, {} iterations, writing {}",
        trainer.settings().num_envs,
        trainer.settings().max_iterations,
        dir.display()
    );
    let started = Instant::now();
    let outcome = trainer.run(&options, |r| {
        if log_every > 0 && (r.iteration + 1) % log_every == 0 {
            eprintln!("{}", progress_line(label, r, started));
        }
    })?;
    Ok(outcome)
}

pub fn run_train(a: &TrainArgs) -> anyhow::Result<()> {
    let mut m = manifest(&a.spec, a.scale, &a.seed, a.amp, &a.out)?;
    m.iterations = a.iterations;
    m.num_envs = a.envs;
    m.checkpoint_interval = a.checkpoint_interval;
    m.validate()?;
    eprintln!("{}", m.amp_note(m.amp));
    for &seed in &m.seeds {
        let dir = m.out_dir.join(m.spec.gait_name.name()).join(format!("seed_{seed}"));
        let label = format!("{} seed {seed}", m.spec.gait_name);
        let out = train_one(&m, seed, m.amp, dir.clone(), &label, a.log_every)?;
        let last = out.records.last().context("training produced no iterations")?;
        println!(
            "{}: {} iterations, final reward {:.4}, failure rate {:.3}, policy {}",
            label,
            out.records.len(),
            last.mean_reward,
            last.failure_rate,
            dir.join("policy.mgpb").display()
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Policy bundle written by `train`.
    #[arg(long, value_name = "FILE")]
    pub policy: PathBuf,
    /// Gait and config; defaults to the bundle's gait preset.
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Number of episodes, one per environment.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample randomized physics for every episode.
    #[arg(long)]
    pub randomize: bool,
    /// Zero the base linear velocity channel, as on hardware without a velocity estimate.
    #[arg(long)]
    pub zero_lin_vel: bool,
    /// Episode horizon in policy steps; defaults to the configured episode length.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Squat depth for the jump reference; defaults to the configured maximum.
    #[arg(long)]
    pub squat_depth: Option<f64>,
    /// Write the first episode's trajectory as CSV.
    #[arg(long, value_name = "FILE")]
    pub dump: Option<PathBuf>,
    /// Directory to write eval.csv into.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn metrics_rows(m: &EvalMetrics) -> Vec<(&'static str, f64)> {
    vec![
        ("episodes", m.episodes as f64),
        ("success_rate", m.success_rate),
        ("fall_rate", m.fall_rate),
        ("tracking_error", m.tracking_error),
        ("posture_stability", m.posture_stability),
        ("mean_episode_length", m.mean_episode_length),
        ("mean_reward", m.mean_reward),
        ("apex_height", m.apex_height),
        ("max_knee_flexion", m.max_knee_flexion),
    ]
}

pub fn run_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let bundle = load_policy(&a.policy).with_context(|| format!("loading {}", a.policy.display()))?;
    let spec: GaitSpec = a.spec.resolve(bundle.gait)?;
    if a.squat_depth.is_some_and(|d| !(d >= 0.0)) {
        return Err(usage("--squat-depth must be >= 0"));
    }
    let options = EvalOptions {
        episodes: a.episodes as usize,
        seed: a.seed,
        zero_lin_vel: a.zero_lin_vel,
        randomize: a.randomize,
        max_steps: a.max_steps,
        squat_depth: a.squat_depth,
        dump: a.dump.clone(),
    };
    let m = evaluate_bundle(&spec, &bundle, &options)?;
    let rows = metrics_rows(&m);
    println!("gait {}", spec.gait_name);
    for (k, v) in &rows {
        println!("{k} {v}");
    }
    if let Some(dir) = &a.out {
        ensure_writable(dir)?;
        let header: Vec<&str> = rows.iter().map(|(k, _)| *k).collect();
        let values: Vec<String> = rows.iter().map(|(_, v)| v.to_string()).collect();
        std::fs::write(dir.join("eval.csv"), format!("{}\n{}\n", header.join(","), values.join(",")))?;
    }
    Ok(())
}
