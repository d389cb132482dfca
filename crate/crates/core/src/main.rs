use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use marl_comm::expcli::{
    emit_plots, parse_config, run_experiment, ExperimentConfig, MetricsRow, Sharing, OUT_DIR_ENV,
};
use marl_comm::trainer::{verify_gradient_flow, FlowSetup, Mode};

#[derive(Parser)]
#[command(name = "marl-comm", version, about = "Independent Q-learning with learned communication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SharingArg {
    Ps,
    Nps,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration on every seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<SharingArg>,
        /// Enable learned messages.
        #[arg(long)]
        comm: bool,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        episodes: Option<u64>,
        /// Output root; falls back to $MARL_OUT_DIR, the config, then ./runs.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave each agent's own message out of its Q input.
        #[arg(long)]
        no_own_message: bool,
        /// Keep incoming messages attached to the graph.
        #[arg(long)]
        no_detach: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Plot mean return curves of finished runs and write a summary table.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Output directory; defaults to the parent of the first run.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient reachability of the message encoders under three wirings.
    Gradreport {
        #[arg(long, value_enum, default_value = "nps")]
        mode: SharingArg,
        #[arg(long)]
        comm: bool,
        #[arg(long, default_value_t = 3)]
        agents: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn out_root(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

#[allow(clippy::too_many_arguments)]
fn train(
    config: &Path,
    mode: Option<SharingArg>,
    comm: bool,
    hidden: Option<usize>,
    seeds: Option<Vec<u64>>,
    episodes: Option<u64>,
    out: Option<PathBuf>,
    no_own_message: bool,
    no_detach: bool,
    quiet: bool,
) -> Result<()> {
    let mut cfg = parse_config(config)?;
    if let Some(m) = mode {
        cfg.mode = match m {
            SharingArg::Ps => Sharing::Ps,
            SharingArg::Nps => Sharing::Nps,
        };
    }
    cfg.comm |= comm;
    cfg.no_own_message |= no_own_message;
    cfg.no_detach |= no_detach;
    if let Some(h) = hidden {
        cfg.hidden_dim = h;
    }
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if let Some(e) = episodes {
        cfg.episodes = e;
    }
    cfg.validate()?;
    let root = out_root(out, &cfg);
    let progress = move |row: &MetricsRow| {
        if !quiet {
            eprintln!(
                "seed {} episode {:>7} return {:>8.3} td_loss {:.4} eps {:.3} ({:.0}s)",
                row.seed, row.episode, row.mean_return, row.td_loss, row.epsilon, row.wallclock_s
            );
        }
    };
    let summary = run_experiment(&cfg, &root, &progress)
        .with_context(|| format!("training {}", cfg.label()))?;
    println!("{} -> {}", summary.label, summary.dir.display());
    for s in &summary.seeds {
        let first = s
            .first_positive
            .map_or_else(|| "never".to_string(), |e| e.to_string());
        println!(
            "  seed {}: final-window mean return {:.3}, first positive window at {}",
            s.seed, s.final_window_mean, first
        );
    }
    println!("  mean over seeds: {:.3}", summary.mean_final());
    Ok(())
}

fn plot(runs: &[PathBuf], out: Option<PathBuf>) -> Result<()> {
    let out = match out {
        Some(o) => o,
        None => runs[0]
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let result = emit_plots(runs, &out)?;
    println!("figure: {}", result.figure.display());
    println!("summary: {}", result.summary.display());
    for r in &result.rows {
        let first = r
            .mean_first_positive_episode
            .map_or_else(|| "never".to_string(), |e| format!("{e:.0}"));
        println!(
            "  {:<28} final {:>8.3} [{:.3}, {:.3}] over {} seeds; first positive {}",
            r.label, r.final_window_mean, r.final_window_min, r.final_window_max, r.seeds, first
        );
    }
    Ok(())
}

fn gradreport(mode: SharingArg, comm: bool, agents: usize, seed: u64) -> Result<()> {
    if !comm {
        bail!("gradreport needs --comm: without messages there are no encoders to inspect");
    }
    let mode = Mode {
        param_sharing: matches!(mode, SharingArg::Ps),
        communication: true,
    };
    let setup = FlowSetup {
        n_agents: agents,
        seed,
        ..FlowSetup::default()
    };
    let report = verify_gradient_flow(mode, &setup)?;
    print!("{report}");
    if !report.all_ok() {
        bail!("gradient flow differs from the expected pattern");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            mode,
            comm,
            hidden,
            seeds,
            episodes,
            out,
            no_own_message,
            no_detach,
            quiet,
        } => train(
            &config,
            mode,
            comm,
            hidden,
            seeds,
            episodes,
            out,
            no_own_message,
            no_detach,
            quiet,
        ),
        Command::Plot { runs, out } => plot(&runs, out),
        Command::Gradreport {
            mode,
            comm,
            agents,
            seed,
        } => gradreport(mode, comm, agents, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
