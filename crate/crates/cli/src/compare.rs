use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use multigait::eval::{evaluate_bundle, EvalOptions};
use multigait::metrics::{convergence_iteration, moving_average, TrainRecord, CONVERGENCE_WINDOW};
use multigait::ppo::{apply_amp_mode, AmpMode};

use crate::train::{manifest, train_one};
use crate::{ScaleArgs, SpecArgs};

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub scale: ScaleArgs,
    /// Seeds; each arm is trained once per seed.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seed: Vec<u64>,
    /// Output root. Runs go to OUT/compare_<gait>/<arm>/seed_<n>.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub envs: Option<usize>,
    /// Evaluation episodes for each final policy.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long, default_value_t = 50)]
    pub log_every: usize,
}

/// Summary of one trained run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub arm: String,
    pub seed: u64,
    pub alpha: f64,
    pub convergence_iteration: Option<usize>,
    pub final_reward: f64,
    pub initial_failure_rate: f64,
    pub final_failure_rate: f64,
    pub final_tracking_error: f64,
    pub max_knee_flexion: f64,
    pub eval_success_rate: f64,
    pub eval_tracking_error: f64,
    pub eval_apex_height: f64,
}

const RUN_COLUMNS: [&str; 13] = [
    "arm",
    "seed",
    "amp_alpha",
    "convergence_iteration",
    "final_reward",
    "initial_failure_rate",
    "final_failure_rate",
    "failure_rate_decay",
    "final_tracking_error",
    "max_knee_flexion",
    "eval_success_rate",
    "eval_tracking_error",
    "eval_apex_height",
];

fn ends(xs: &[f64]) -> (f64, f64) {
    let ma = moving_average(xs, CONVERGENCE_WINDOW);
    let head = ma[(CONVERGENCE_WINDOW - 1).min(ma.len() - 1)];
    (head, *ma.last().expect("non-empty"))
}

impl RunSummary {
    pub fn from_records(arm: &str, seed: u64, alpha: f64, records: &[TrainRecord]) -> Self {
        let col = |f: fn(&TrainRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
        let (_, final_reward) = ends(&col(|r| r.mean_reward));
        let (initial_failure_rate, final_failure_rate) = ends(&col(|r| r.failure_rate));
        let track: Vec<f64> = col(|r| r.tracking_error).into_iter().filter(|x| x.is_finite()).collect();
        let final_tracking_error = if track.is_empty() { f64::NAN } else { ends(&track).1 };
        RunSummary {
            arm: arm.to_string(),
            seed,
            alpha,
            convergence_iteration: convergence_iteration(records),
            final_reward,
            initial_failure_rate,
            final_failure_rate,
            final_tracking_error,
            max_knee_flexion: records.iter().map(|r| r.max_knee_flexion).fold(0.0, f64::max),
            eval_success_rate: f64::NAN,
            eval_tracking_error: f64::NAN,
            eval_apex_height: f64::NAN,
        }
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.arm.clone(),
            self.seed.to_string(),
            self.alpha.to_string(),
            self.convergence_iteration.map(|c| c.to_string()).unwrap_or_default(),
            fmt(self.final_reward),
            fmt(self.initial_failure_rate),
            fmt(self.final_failure_rate),
            fmt(self.initial_failure_rate - self.final_failure_rate),
            fmt(self.final_tracking_error),
            fmt(self.max_knee_flexion),
            fmt(self.eval_success_rate),
            fmt(self.eval_tracking_error),
            fmt(self.eval_apex_height),
        ]
    }
}

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        String::new()
    }
}

/// Mean and sample standard deviation; the deviation is `None` for fewer than two values.
pub fn mean_std(xs: &[f64]) -> (f64, Option<f64>) {
    let xs: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if xs.is_empty() {
        return (f64::NAN, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

type Metric = (&'static str, fn(&RunSummary) -> f64);

const SUMMARY_METRICS: [Metric; 7] = [
    ("final_reward", |r| r.final_reward),
    ("failure_rate_decay", |r| r.initial_failure_rate - r.final_failure_rate),
    ("final_tracking_error", |r| r.final_tracking_error),
    ("max_knee_flexion", |r| r.max_knee_flexion),
    ("eval_success_rate", |r| r.eval_success_rate),
    ("eval_tracking_error", |r| r.eval_tracking_error),
    ("eval_apex_height", |r| r.eval_apex_height),
];

/// Per-arm summary CSV: median convergence iteration plus mean and std of each metric.
pub fn summary_csv(runs: &[RunSummary], arms: &[String], max_iterations: usize) -> String {
    let mut header = vec!["arm".to_string(), "seeds".into(), "converged".into(), "median_convergence_iteration".into()];
    for (name, _) in SUMMARY_METRICS {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    let mut out = header.join(",") + "\n";
    for arm in arms {
        let rs: Vec<&RunSummary> = runs.iter().filter(|r| &r.arm == arm).collect();
        let converged = rs.iter().filter(|r| r.convergence_iteration.is_some()).count();
        // runs that never converge count as taking the whole budget
        let conv: Vec<f64> = rs.iter().map(|r| r.convergence_iteration.unwrap_or(max_iterations) as f64).collect();
        let mut row = vec![arm.clone(), rs.len().to_string(), converged.to_string(), fmt(median(&conv))];
        for (_, f) in SUMMARY_METRICS {
            let (m, s) = mean_std(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            row.push(fmt(m));
            row.push(s.map(fmt).unwrap_or_default());
        }
        out += &(row.join(",") + "\n");
    }
    out
}

pub fn runs_csv(runs: &[RunSummary]) -> String {
    let mut out = RUN_COLUMNS.join(",") + "\n";
    for r in runs {
        out += &(r.cells().join(",") + "\n");
    }
    out
}

fn markdown_table(csv: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), " --- |".repeat(header.len()));
    for l in lines {
        let cells: Vec<&str> = l.split(',').map(|c| if c.is_empty() { " " } else { c }).collect();
        let _ = writeln!(s, "| {} |", cells.join(" | "));
    }
    s
}

pub fn arm_name(amp_enabled: bool) -> &'static str {
    if amp_enabled {
        "amp_on"
    } else {
        "amp_off"
    }
}

pub fn run(a: &CompareArgs) -> anyhow::Result<()> {
    let mut m = manifest(&a.spec, a.scale, &a.seed, AmpMode::Preset, &a.out)?;
    m.iterations = a.iterations;
    m.num_envs = a.envs;
    m.validate()?;
    let gait = m.spec.gait_name;
    let preset_on = m.spec.amp_enabled();
    let arms = [(AmpMode::Preset, preset_on), (if preset_on { AmpMode::Off } else { AmpMode::On }, !preset_on)];
    let root = m.out_dir.join(format!("compare_{}", gait.name()));
    let max_iterations = a.iterations.unwrap_or(m.spec.settings(m.scale).max_iterations);

    let mut runs = Vec::new();
    for &seed in &m.seeds {
        for (mode, on) in arms {
            let arm = arm_name(on);
            eprintln!("{} ({arm}, seed {seed})", m.amp_note(mode));
            let dir = root.join(arm).join(format!("seed_{seed}"));
            let out = train_one(&m, seed, mode, dir, &format!("{gait} {arm} seed {seed}"), a.log_every)?;
            let alpha = apply_amp_mode(&m.spec, mode).amp_alpha;
            let mut s = RunSummary::from_records(arm, seed, alpha, &out.records);
            let eval = evaluate_bundle(&out.spec, &out.bundle(), &EvalOptions::new(a.episodes as usize, seed))?;
            s.eval_success_rate = eval.success_rate;
            s.eval_tracking_error = eval.tracking_error;
            s.eval_apex_height = eval.apex_height;
            runs.push(s);
        }
    }

    let arm_names: Vec<String> = arms.iter().map(|&(_, on)| arm_name(on).to_string()).collect();
    let runs_text = runs_csv(&runs);
    let summary_text = summary_csv(&runs, &arm_names, max_iterations);
    std::fs::write(root.join("runs.csv"), &runs_text)?;
    std::fs::write(root.join("summary.csv"), &summary_text)?;
    let mut report = format!("# AMP comparison: {gait}\n\nPreset arm: {}. Seeds: {:?}.\n\n## Per run\n\n", arm_name(preset_on), m.seeds);
    report += &markdown_table(&runs_text);
    report += "\n## Per arm\n\n";
    report += &markdown_table(&summary_text);
    std::fs::write(root.join("report.md"), &report)?;
    println!("{report}");
    println!("report written to {}", root.join("report.md").display());
    Ok(())
}
