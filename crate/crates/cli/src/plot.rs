use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::Args;
use multigait::metrics::MetricsTable;
use plotters::prelude::*;

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Run directory (holding metrics.csv) or a directory of runs such as a compare-amp output.
    pub dir: PathBuf,
    /// Output SVG; defaults to DIR/curves.svg.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub const PANELS: [(&str, &str); 3] = [("total reward", "mean_reward"), ("tracking error", "tracking_error"), ("failure rate", "failure_rate")];

/// One plotted curve: iteration vs. the per-iteration mean over its runs.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub columns: Vec<Vec<(f64, f64)>>,
}

fn metrics_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let direct = dir.join("metrics.csv");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    entries.sort();
    for sub in entries {
        out.extend(metrics_files(&sub)?);
    }
    Ok(out)
}

fn read_columns(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let table = MetricsTable::read(path).with_context(|| format!("reading {}", path.display()))?;
    let iteration = table.column("iteration").with_context(|| format!("{}", path.display()))?;
    let mut cols = vec![iteration];
    for (_, name) in PANELS {
        cols.push(table.column(name).with_context(|| format!("{}", path.display()))?);
    }
    Ok(cols)
}

/// Mean curve over several runs, iteration by iteration, skipping missing values.
fn average(runs: &[Vec<Vec<f64>>]) -> Vec<Vec<(f64, f64)>> {
    let len = runs.iter().map(|r| r[0].len()).max().unwrap_or(0);
    (1..=PANELS.len())
        .map(|c| {
            (0..len)
                .filter_map(|i| {
                    let vals: Vec<f64> = runs.iter().filter_map(|r| r[c].get(i).copied()).filter(|v| v.is_finite()).collect();
                    let it = runs.iter().find_map(|r| r[0].get(i).copied())?;
                    (!vals.is_empty()).then(|| (it, vals.iter().sum::<f64>() / vals.len() as f64))
                })
                .collect()
        })
        .collect()
}

/// A run directory gives one series; otherwise each subdirectory holding runs
/// becomes one series averaged over its runs.
pub fn collect_series(dir: &Path) -> anyhow::Result<Vec<Series>> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let label_of = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string());
    if dir.join("metrics.csv").is_file() {
        let cols = read_columns(&dir.join("metrics.csv"))?;
        return Ok(vec![Series { label: label_of(dir), columns: average(&[cols]) }]);
    }
    let mut subs: Vec<PathBuf> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    subs.sort();
    let mut series = Vec::new();
    for sub in subs {
        let files = metrics_files(&sub)?;
        if files.is_empty() {
            continue;
        }
        let runs = files.iter().map(|f| read_columns(f)).collect::<anyhow::Result<Vec<_>>>()?;
        let label = if files.len() > 1 { format!("{} (mean of {})", label_of(&sub), files.len()) } else { label_of(&sub) };
        series.push(Series { label, columns: average(&runs) });
    }
    if series.is_empty() {
        bail!("no metrics.csv found under {}", dir.display());
    }
    Ok(series)
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> ([f64; 2], [f64; 2]) {
    let (mut x, mut y) = ([f64::INFINITY, f64::NEG_INFINITY], [f64::INFINITY, f64::NEG_INFINITY]);
    for (a, b) in points {
        x = [x[0].min(a), x[1].max(a)];
        y = [y[0].min(b), y[1].max(b)];
    }
    if !x[0].is_finite() {
        return ([0.0, 1.0], [0.0, 1.0]);
    }
    if x[1] <= x[0] {
        x[1] = x[0] + 1.0;
    }
    let pad = ((y[1] - y[0]) * 0.05).max(1e-6);
    ([x[0], x[1]], [y[0] - pad, y[1] + pad])
}

pub fn render(series: &[Series], path: &Path) -> anyhow::Result<()> {
    let root = SVGBackend::new(path, (960, 1080)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let areas = root.split_evenly((PANELS.len(), 1));
    for (p, (area, (title, _))) in areas.iter().zip(PANELS).enumerate() {
        let (xr, yr) = bounds(series.iter().flat_map(|s| s.columns[p].iter().copied()));
        let mut chart = ChartBuilder::on(area)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(32)
            .y_label_area_size(64)
            .build_cartesian_2d(xr[0]..xr[1], yr[0]..yr[1])
            .map_err(|e| anyhow!("{e}"))?;
        chart.configure_mesh().x_desc("iteration").draw().map_err(|e| anyhow!("{e}"))?;
        for (i, s) in series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(s.columns[p].iter().copied(), color.stroke_width(2)))
                .map_err(|e| anyhow!("{e}"))?
                .label(s.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.85))
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
    }
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

pub fn run(a: &PlotArgs) -> anyhow::Result<()> {
    let series = collect_series(&a.dir)?;
    let out = a.out.clone().unwrap_or_else(|| a.dir.join("curves.svg"));
    render(&series, &out)?;
    println!("{} series, 3 panels written to {}", series.len(), out.display());
    Ok(())
}
