use std::path::{Path, PathBuf};

use multigait::config::{GaitSpec, RunScale};
use multigait::ppo::{apply_amp_mode, AmpMode, TrainOptions};

use crate::usage;

/// Everything needed to reproduce a set of training runs.
#[derive(Debug, Clone)]
pub struct ExperimentManifest {
    pub spec: GaitSpec,
    pub seeds: Vec<u64>,
    pub amp: AmpMode,
    pub out_dir: PathBuf,
    pub scale: RunScale,
    pub iterations: Option<usize>,
    pub num_envs: Option<usize>,
    pub checkpoint_interval: Option<usize>,
}

impl ExperimentManifest {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            return Err(usage("at least one seed is required"));
        }
        if self.iterations == Some(0) || self.num_envs == Some(0) {
            return Err(usage("--iterations and --envs must be positive"));
        }
        ensure_writable(&self.out_dir)
    }

    pub fn options(&self, seed: u64, amp: AmpMode, dir: PathBuf) -> TrainOptions {
        TrainOptions {
            scale: self.scale,
            seed,
            amp,
            iterations: self.iterations,
            num_envs: self.num_envs,
            out_dir: Some(dir),
            checkpoint_interval: self.checkpoint_interval,
        }
    }

    /// One-line note on whether the adversarial prior is active for `amp`.
    pub fn amp_note(&self, amp: AmpMode) -> String {
        let s = apply_amp_mode(&self.spec, amp);
        if s.amp_enabled() {
            format!("AMP enabled for {} (alpha = {}, beta = {})", s.gait_name, s.amp_alpha, s.amp_beta)
        } else {
            format!("AMP disabled for {} (alpha = 0, beta = 1)", s.gait_name)
        }
    }
}

pub fn ensure_writable(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create output directory {}: {e}", dir.display())))?;
    let probe = dir.join(".multigait-write-test");
    std::fs::write(&probe, b"").map_err(|e| usage(format!("output directory {} is not writable: {e}", dir.display())))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}
