use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use multigait::config::Gait;
use multigait::env::{gait_reference, EnvOptions, VecEnv};
use multigait::joints;
use multigait::observation::{frame_labels, FRAME_DIM, HISTORY, STACK_DIM};
use multigait::ppo::load_policy;
use multigait::reference::{stance_mask, PhaseState};
use multigait::NUM_JOINTS;

use crate::{usage, SpecArgs};

fn writer(out: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

#[derive(Args, Debug)]
pub struct RefDumpArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Phase samples over one cycle.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    /// Squat depth for the jump reference; defaults to the configured maximum.
    #[arg(long)]
    pub squat_depth: Option<f64>,
    /// CSV destination; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn ref_dump(a: &RefDumpArgs) -> anyhow::Result<()> {
    let spec = a.spec.resolve(Gait::Walking)?;
    let depth = a.squat_depth.unwrap_or(spec.jump.squat_depth_max);
    if !(depth >= 0.0) {
        return Err(usage("--squat-depth must be >= 0"));
    }
    let mut w = writer(&a.out)?;
    let mut header = vec!["phase".to_string()];
    header.extend((0..NUM_JOINTS).map(|i| format!("q_ref_{}", joints::label(i))));
    header.extend(["swing_l", "swing_r", "stance_l", "stance_r"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    let n = a.samples as usize;
    for k in 0..n {
        let p = PhaseState::new(k as f64 / n as f64);
        let r = gait_reference(&spec, p, depth);
        let stance = stance_mask(p, spec.stance_ratio);
        let mut row = vec![format!("{:.6}", p.value())];
        row.extend(r.q_ref.iter().map(|q| format!("{q:.6}")));
        let flag = |b: bool| if b { "1".to_string() } else { "0".to_string() };
        row.extend([flag(r.swing_mask[0]), flag(r.swing_mask[joints::JOINTS_PER_LEG]), flag(stance[0]), flag(stance[1])]);
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct ObsDumpArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Policy steps to record after the reset frame.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the whole history stack instead of the newest frame.
    #[arg(long)]
    pub full: bool,
    /// Drive the rollout with this policy; zero actions otherwise.
    #[arg(long, value_name = "FILE")]
    pub policy: Option<PathBuf>,
    /// Sample randomized physics.
    #[arg(long)]
    pub randomize: bool,
    /// CSV destination; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn obs_dump(a: &ObsDumpArgs) -> anyhow::Result<()> {
    let bundle = match &a.policy {
        Some(p) => Some(load_policy(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    let spec = a.spec.resolve(bundle.as_ref().map_or(Gait::Walking, |b| b.gait))?;
    if let Some(b) = &bundle {
        if b.obs_dim() != STACK_DIM || b.action_dim() != NUM_JOINTS {
            return Err(usage(format!("policy expects {} inputs and {} outputs, not {STACK_DIM} and {NUM_JOINTS}", b.obs_dim(), b.action_dim())));
        }
    }
    let mut env = VecEnv::new(&spec, 1, a.seed, EnvOptions { randomize: a.randomize, zero_lin_vel: false });
    env.set_curriculum(spec.randomization.action_lag[0], spec.jump.squat_depth_max);
    env.reset_all();

    let labels = frame_labels();
    let mut header = vec!["step".to_string()];
    if a.full {
        for h in (0..HISTORY).rev() {
            header.extend(labels.iter().map(|l| format!("t-{h}_{l}")));
        }
    } else {
        header.extend(labels.iter().cloned());
    }
    let mut w = writer(&a.out)?;
    writeln!(w, "{}", header.join(","))?;
    let mut actions = vec![0.0; NUM_JOINTS];
    for step in 0..=a.steps {
        let obs = env.actor_obs(0);
        let shown = if a.full { obs } else { &obs[STACK_DIM - FRAME_DIM..] };
        let mut row = vec![step.to_string()];
        row.extend(shown.iter().map(|v| format!("{v:.6}")));
        writeln!(w, "{}", row.join(","))?;
        if step == a.steps {
            break;
        }
        if let Some(b) = &bundle {
            actions = b.forward(obs);
        }
        env.step(&actions, None);
    }
    w.flush()?;
    Ok(())
}
