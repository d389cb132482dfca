use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{aggregate, final_window_mean, first_crossing, read_metrics, AggregateRow, MetricsRow, CONFIG_SNAPSHOT};
use crate::{Error, Result};

/// Metrics of one run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunData {
    pub dir: PathBuf,
    pub label: String,
    pub env: Option<String>,
    pub final_window: usize,
    pub per_seed: Vec<Vec<MetricsRow>>,
    pub curve: Vec<AggregateRow>,
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run: String,
    pub label: String,
    pub seeds: usize,
    pub final_window_mean: f64,
    pub final_window_min: f64,
    pub final_window_max: f64,
    /// Mean over seeds of the first positive-window episode; empty when some
    /// seed never got there.
    pub mean_first_positive_episode: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotOutput {
    pub figure: PathBuf,
    pub summary: PathBuf,
    pub rows: Vec<SummaryRow>,
}

/// Loads every `seed_*.csv` of a run directory.
pub fn load_run(dir: &Path) -> Result<RunData> {
    let cfg = fs::read_to_string(dir.join(CONFIG_SNAPSHOT))
        .ok()
        .and_then(|t| ExperimentConfig::from_toml(&t).ok());
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Metrics(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seed_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    let per_seed = files
        .iter()
        .map(|f| read_metrics(f))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|rows| !rows.is_empty())
        .collect::<Vec<_>>();
    if per_seed.is_empty() {
        return Err(Error::Metrics(format!("{}: no metrics rows", dir.display())));
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(RunData {
        dir: dir.to_path_buf(),
        label: cfg.as_ref().map_or(name, ExperimentConfig::label),
        env: cfg.as_ref().map(|c| c.env.clone()),
        final_window: cfg.as_ref().map_or(10, |c| c.final_window),
        curve: aggregate(&per_seed),
        per_seed,
    })
}

pub fn summarize(run: &RunData) -> SummaryRow {
    let finals: Vec<f64> = run
        .per_seed
        .iter()
        .filter_map(|rows| final_window_mean(rows, run.final_window))
        .collect();
    let crossings: Option<Vec<u64>> = run
        .per_seed
        .iter()
        .map(|rows| first_crossing(rows, 0.0, run.final_window))
        .collect();
    SummaryRow {
        run: run.dir.display().to_string(),
        label: run.label.clone(),
        seeds: run.per_seed.len(),
        final_window_mean: finals.iter().sum::<f64>() / finals.len() as f64,
        final_window_min: finals.iter().copied().fold(f64::INFINITY, f64::min),
        final_window_max: finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_first_positive_episode: crossings
            .map(|c| c.iter().sum::<u64>() as f64 / c.len() as f64),
    }
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Metrics(format!("plot: {e}"))
}

/// Mean-over-seeds return curves with min–max bands, one per run, in
/// `out_dir/returns.svg`, plus `out_dir/summary.csv`.
pub fn emit_plots(run_dirs: &[PathBuf], out_dir: &Path) -> Result<PlotOutput> {
    if run_dirs.is_empty() {
        return Err(Error::Metrics("no run directories given".into()));
    }
    let runs = run_dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir)?;
    let figure = out_dir.join("returns.svg");
    draw(&runs, &figure)?;

    let rows: Vec<SummaryRow> = runs.iter().map(summarize).collect();
    let summary = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary).map_err(plot_err)?;
    for r in &rows {
        w.serialize(r).map_err(plot_err)?;
    }
    w.flush()?;
    Ok(PlotOutput {
        figure,
        summary,
        rows,
    })
}

fn draw(runs: &[RunData], path: &Path) -> Result<()> {
    let points = runs.iter().flat_map(|r| r.curve.iter());
    let (mut x_max, mut y_min, mut y_max) = (1u64, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x_max = x_max.max(p.episode);
        y_min = y_min.min(p.min_return);
        y_max = y_max.max(p.max_return);
    }
    let envs: Vec<&str> = runs.iter().filter_map(|r| r.env.as_deref()).collect();
    let signal_game = !envs.is_empty() && envs.iter().all(|e| *e == "signal_game");
    if signal_game {
        y_max = y_max.max(1.0);
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        return Err(Error::Metrics("nothing to plot".into()));
    }
    let pad = ((y_max - y_min) * 0.05).max(0.05);
    let title = match envs.first() {
        Some(env) if envs.iter().all(|e| e == env) => format!("Greedy evaluation return, {env}"),
        _ => "Greedy evaluation return".to_string(),
    };

    let root = SVGBackend::new(path, (960, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..x_max as f64, (y_min - pad)..(y_max + pad))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("training episodes")
        .y_desc("mean return")
        .draw()
        .map_err(plot_err)?;

    if signal_game {
        // best achievable return; 0.5 is the best without messages
        chart
            .draw_series(LineSeries::new(
                [(0.0, 1.0), (x_max as f64, 1.0)],
                BLACK.mix(0.4).stroke_width(1),
            ))
            .map_err(plot_err)?
            .label("optimum")
            .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], BLACK.mix(0.4)));
    }

    for (k, run) in runs.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        let band: Vec<(f64, f64)> = run
            .curve
            .iter()
            .map(|p| (p.episode as f64, p.max_return))
            .chain(run.curve.iter().rev().map(|p| (p.episode as f64, p.min_return)))
            .collect();
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.15).filled())))
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(
                run.curve.iter().map(|p| (p.episode as f64, p.mean_return)),
                color.stroke_width(2),
            ))
            .map_err(plot_err)?
            .label(run.label.clone())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK.mix(0.3))
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
