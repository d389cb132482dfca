use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::envs::make_env;
use crate::nn::save_checkpoint;
use crate::replay::ReplayBuffer;
use crate::rng::{derive, stream, streams};
use crate::trainer::Trainer;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "seed,episode,mean_return,td_loss,epsilon,wallclock_s";
pub const CONFIG_SNAPSHOT: &str = "config.cfg";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

/// One evaluation point of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    /// Training episodes completed.
    pub episode: u64,
    /// Mean greedy return over the evaluation episodes.
    pub mean_return: f64,
    /// Mean TD loss of the updates since the previous row; 0 before the
    /// first update.
    pub td_loss: f64,
    pub epsilon: f64,
    pub wallclock_s: f64,
}

pub fn seed_csv_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Metrics(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Metrics(format!("{}: {e}", path.display())))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(Error::Metrics(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Metrics(format!("{}: {e}", path.display()))))
        .collect()
}

/// Mean of the last `window` evaluation returns.
pub fn final_window_mean(rows: &[MetricsRow], window: usize) -> Option<f64> {
    if rows.is_empty() || window == 0 {
        return None;
    }
    let tail = &rows[rows.len().saturating_sub(window)..];
    Some(tail.iter().map(|r| r.mean_return).sum::<f64>() / tail.len() as f64)
}

/// First episode at which the mean of the trailing `window` evaluation
/// returns exceeds `threshold`.
pub fn first_crossing(rows: &[MetricsRow], threshold: f64, window: usize) -> Option<u64> {
    if window == 0 || rows.len() < window {
        return None;
    }
    rows.windows(window).find_map(|w| {
        let mean = w.iter().map(|r| r.mean_return).sum::<f64>() / window as f64;
        (mean > threshold).then(|| w[window - 1].episode)
    })
}

/// Per-episode mean, min and max of `mean_return` over seeds, for the
/// episodes present in every seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub episode: u64,
    pub mean_return: f64,
    pub min_return: f64,
    pub max_return: f64,
    pub seeds: usize,
}

pub fn aggregate(per_seed: &[Vec<MetricsRow>]) -> Vec<AggregateRow> {
    let Some(first) = per_seed.first() else {
        return Vec::new();
    };
    first
        .iter()
        .filter_map(|row| {
            let values: Vec<f64> = per_seed
                .iter()
                .map(|rows| rows.iter().find(|r| r.episode == row.episode).map(|r| r.mean_return))
                .collect::<Option<_>>()?;
            let n = values.len();
            Some(AggregateRow {
                episode: row.episode,
                mean_return: values.iter().sum::<f64>() / n as f64,
                min_return: values.iter().copied().fold(f64::INFINITY, f64::min),
                max_return: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                seeds: n,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub final_window_mean: f64,
    /// First episode whose trailing-window mean return is positive.
    pub first_positive: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub label: String,
    pub seeds: Vec<SeedSummary>,
}

impl RunSummary {
    pub fn mean_final(&self) -> f64 {
        self.seeds.iter().map(|s| s.final_window_mean).sum::<f64>() / self.seeds.len() as f64
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Metrics(e.to_string())
}

/// Trains one seed, calling `on_row` after every evaluation. Returns the
/// trained learner.
pub fn train_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    mut on_row: impl FnMut(&MetricsRow) -> Result<()>,
) -> Result<Trainer> {
    cfg.validate()?;
    let overrides = cfg.overrides();
    let mut env = make_env(&cfg.env, &overrides, derive(seed, streams::ENV))?;
    let mut eval_env = make_env(&cfg.env, &overrides, derive(seed, streams::EVAL_ENV))?;
    let mut trainer = Trainer::new(
        cfg.mode(),
        env.spec(),
        cfg.trainer_config(),
        &mut stream(seed, streams::INIT),
    )?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut explore = stream(seed, streams::EXPLORE);
    let mut replay = stream(seed, streams::REPLAY);
    let mut eval_rng = stream(seed, streams::EVAL_ACT);
    let start = Instant::now();
    let (mut loss_sum, mut updates) = (0.0, 0u64);
    for e in 0..cfg.episodes {
        let stats = trainer.train_episode(env.as_mut(), &mut buffer, e, &mut explore, &mut replay)?;
        if !stats.td_loss.is_empty() {
            loss_sum += stats.mean_td_loss();
            updates += 1;
        }
        let done = e + 1;
        if done % cfg.eval_interval == 0 || done == cfg.episodes {
            let mean_return = trainer.evaluate(eval_env.as_mut(), cfg.eval_episodes, &mut eval_rng)?;
            let row = MetricsRow {
                seed,
                episode: done,
                mean_return,
                td_loss: if updates > 0 { loss_sum / updates as f64 } else { 0.0 },
                epsilon: stats.epsilon.unwrap_or(0.0),
                wallclock_s: start.elapsed().as_secs_f64(),
            };
            on_row(&row)?;
            (loss_sum, updates) = (0.0, 0);
        }
    }
    Ok(trainer)
}

fn write_checkpoints(trainer: &Trainer, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let shared = trainer.mode().param_sharing;
    for (k, bundle) in trainer.bundles().iter().enumerate() {
        let stem = if shared { "shared".to_string() } else { format!("agent_{k}") };
        save_checkpoint(&bundle.policy, BufWriter::new(File::create(dir.join(format!("{stem}.q.ckpt")))?))?;
        if let Some(comm) = &bundle.comm {
            save_checkpoint(comm, BufWriter::new(File::create(dir.join(format!("{stem}.comm.ckpt")))?))?;
        }
    }
    Ok(())
}

fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    progress: &(dyn Fn(&MetricsRow) + Sync),
) -> Result<SeedSummary> {
    let mut writer = csv::Writer::from_path(dir.join(seed_csv_name(seed))).map_err(csv_err)?;
    let mut rows = Vec::new();
    let trainer = train_seed(cfg, seed, |row| {
        writer.serialize(row).map_err(csv_err)?;
        // flushed per row so an interrupted run leaves a parseable file
        writer.flush()?;
        progress(row);
        rows.push(row.clone());
        Ok(())
    })?;
    write_checkpoints(&trainer, &dir.join("checkpoints").join(format!("seed_{seed}")))?;
    Ok(SeedSummary {
        seed,
        final_window_mean: final_window_mean(&rows, cfg.final_window).unwrap_or(f64::NAN),
        first_positive: first_crossing(&rows, 0.0, cfg.final_window),
        rows,
    })
}

/// Writes per-seed summaries plus their mean.
pub fn write_summary(path: &Path, seeds: &[SeedSummary]) -> Result<()> {
    #[derive(Serialize)]
    struct Line {
        seed: String,
        final_window_mean: f64,
        first_positive_episode: Option<u64>,
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for s in seeds {
        w.serialize(Line {
            seed: s.seed.to_string(),
            final_window_mean: s.final_window_mean,
            first_positive_episode: s.first_positive,
        })
        .map_err(csv_err)?;
    }
    let mean = seeds.iter().map(|s| s.final_window_mean).sum::<f64>() / seeds.len().max(1) as f64;
    w.serialize(Line {
        seed: "mean".into(),
        final_window_mean: mean,
        first_positive_episode: None,
    })
    .map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Trains every seed of `cfg` under `out_root/<run name>`, one worker
/// thread per seed, and writes the config snapshot, per-seed CSVs, the
/// aggregate, a summary and final checkpoints.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_root: &Path,
    progress: &(dyn Fn(&MetricsRow) + Sync),
) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = out_root.join(cfg.run_name());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(CONFIG_SNAPSHOT), cfg.to_toml()?)?;

    let results: Vec<Result<SeedSummary>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let dir = &dir;
                scope.spawn(move || run_seed(cfg, seed, dir, progress))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Invalid("seed worker panicked".into()))))
            .collect()
    });
    let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;

    let per_seed: Vec<Vec<MetricsRow>> = seeds.iter().map(|s| s.rows.clone()).collect();
    write_aggregate(&dir.join(AGGREGATE_CSV), &aggregate(&per_seed))?;
    write_summary(&dir.join(SUMMARY_CSV), &seeds)?;
    Ok(RunSummary {
        dir,
        label: cfg.label(),
        seeds,
    })
}
