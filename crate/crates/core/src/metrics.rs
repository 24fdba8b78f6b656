//! Per-iteration training metrics and their CSV form.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::rewards::{N_TERMS, TERMS};

pub const METRICS_HEADER: &str = "# multigait-metrics v1";

/// One row of the metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    /// Mean weighted task reward per policy step.
    pub mean_reward: f64,
    /// Mean reward actually optimized (task and AMP blend).
    pub mean_train_reward: f64,
    /// Mean weighted value of every reward term per step.
    pub term_means: [f64; N_TERMS],
    /// Mean hip/knee `|q − q_ref|`, rad.
    pub tracking_error: f64,
    /// Fraction of environments that fell during the iteration.
    pub failure_rate: f64,
    pub mean_episode_length: f64,
    pub kl: f64,
    pub learning_rate: f64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub symmetry_loss: f64,
    /// NaN when the discriminator is disabled.
    pub disc_loss: f64,
    pub amp_reward: f64,
    /// Highest base apex seen in the iteration, m.
    pub max_apex: f64,
    /// Largest knee flexion seen in the iteration, rad.
    pub max_knee_flexion: f64,
    pub squat_depth: f64,
    pub min_lag: usize,
    /// Environments reset after a simulator divergence.
    pub divergences: usize,
}

impl TrainRecord {
    pub fn columns() -> Vec<String> {
        let mut c: Vec<String> = [
            "iteration",
            "mean_reward",
            "mean_train_reward",
            "tracking_error",
            "failure_rate",
            "mean_episode_length",
            "kl",
            "learning_rate",
            "surrogate_loss",
            "value_loss",
            "entropy",
            "symmetry_loss",
            "disc_loss",
            "amp_reward",
            "max_apex",
            "max_knee_flexion",
            "squat_depth",
            "min_lag",
            "divergences",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        c.extend(TERMS.iter().map(|t| format!("r_{t}")));
        c
    }

    pub fn values(&self) -> Vec<String> {
        let f = |x: f64| if x.is_nan() { String::new() } else { format!("{x}") };
        let mut v = vec![
            self.iteration.to_string(),
            f(self.mean_reward),
            f(self.mean_train_reward),
            f(self.tracking_error),
            f(self.failure_rate),
            f(self.mean_episode_length),
            f(self.kl),
            f(self.learning_rate),
            f(self.surrogate_loss),
            f(self.value_loss),
            f(self.entropy),
            f(self.symmetry_loss),
            f(self.disc_loss),
            f(self.amp_reward),
            f(self.max_apex),
            f(self.max_knee_flexion),
            f(self.squat_depth),
            self.min_lag.to_string(),
            self.divergences.to_string(),
        ];
        v.extend(self.term_means.iter().map(|&x| f(x)));
        v
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("metrics file is empty")]
    Empty,
    #[error("metrics file lacks column '{0}'")]
    MissingColumn(String),
    #[error("bad value '{value}' in column '{column}'")]
    BadValue { column: String, value: String },
}

pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self, MetricsError> {
        let mut file = File::create(path)?;
        writeln!(file, "{METRICS_HEADER}")?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(TrainRecord::columns())?;
        Ok(MetricsWriter { inner })
    }

    pub fn write(&mut self, r: &TrainRecord) -> Result<(), MetricsError> {
        self.inner.write_record(r.values())?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Column-oriented view of a metrics file. Empty cells read as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl MetricsTable {
    pub fn read(path: &Path) -> Result<Self, MetricsError> {
        let file = BufReader::new(File::open(path)?);
        let body: String = file.lines().collect::<Result<Vec<_>, _>>()?.into_iter().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
        let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mut row = Vec::with_capacity(rec.len());
            for (i, cell) in rec.iter().enumerate() {
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse().map_err(|_| MetricsError::BadValue { column: headers[i].clone(), value: cell.to_string() })?
                };
                row.push(v);
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(MetricsError::Empty);
        }
        Ok(MetricsTable { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, MetricsError> {
        let i = self.headers.iter().position(|h| h == name).ok_or_else(|| MetricsError::MissingColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Trailing moving average; the first `window − 1` entries average what is available.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= w {
            sum -= xs[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

pub const CONVERGENCE_WINDOW: usize = 100;
pub const CONVERGENCE_TOLERANCE: f64 = 0.05;

/// First index after which the moving average of `xs` stays within
/// `tol · |final|` of its final value.
pub fn convergence_index(xs: &[f64], window: usize, tol: f64) -> Option<usize> {
    let ma = moving_average(xs, window);
    let last = *ma.last()?;
    let band = tol * last.abs();
    let mut first = ma.len();
    for i in (0..ma.len()).rev() {
        if (ma[i] - last).abs() <= band {
            first = i;
        } else {
            break;
        }
    }
    Some(first)
}

/// Convergence iteration of a reward series under the default window and band.
pub fn convergence_iteration(records: &[TrainRecord]) -> Option<usize> {
    let xs: Vec<f64> = records.iter().map(|r| r.mean_reward).collect();
    convergence_index(&xs, CONVERGENCE_WINDOW, CONVERGENCE_TOLERANCE).map(|i| records[i].iteration)
}
