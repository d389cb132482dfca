#![cfg(feature = "cli")]

use std::fs;
use std::path::Path;
use std::process::Command;

use marl_comm::expcli::{
    aggregate, emit_plots, final_window_mean, load_run, parse_config, read_metrics, run_experiment,
    seed_csv_name, ExperimentConfig, MetricsRow, Sharing, AGGREGATE_CSV, CONFIG_SNAPSHOT, CSV_HEADER,
    SUMMARY_CSV,
};
use marl_comm::nn::{load_checkpoint, save_checkpoint, Module, QNetwork};
use marl_comm::rng::seeded;
use tempfile::tempdir;

const BIN: &str = env!("CARGO_BIN_EXE_marl-comm");

fn tiny(env: &str) -> ExperimentConfig {
    ExperimentConfig {
        env: env.into(),
        comm: true,
        hidden_dim: 8,
        msg_dim: 4,
        batch_size: 4,
        buffer_capacity: 32,
        episodes: 30,
        eval_interval: 10,
        eval_episodes: 4,
        final_window: 2,
        epsilon_horizon: 20,
        seeds: vec![0, 1],
        ..ExperimentConfig::default()
    }
}

fn quiet(_: &MetricsRow) {}

fn write_cfg(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn config_files_parse_and_reject_mistakes() {
    let dir = tempdir().unwrap();
    let cfg = parse_config(&write_cfg(
        dir.path(),
        "env = \"signal_game\"\nmode = \"ps\"\ncomm = true\nseeds = [4, 5]\nepisodes = 100\n",
    ))
    .unwrap();
    assert_eq!(cfg.mode, Sharing::Ps);
    assert_eq!(cfg.seeds, vec![4, 5]);
    assert_eq!(cfg.hidden_dim, 64);

    for bad in [
        "env = \"gridworld\"",
        "hiden_dim = 32",
        "gamma = 1.5",
        "seeds = []",
        "seeds = [1, 1]",
        "episodes = 0",
        "mode = \"ps\"\ncomm = true\nno_own_message = true",
        "env = \"predator_prey\"\ngrid = 3\nn_prey = 20",
        "name = \"../escape\"",
        "comm = ",
    ] {
        let err = parse_config(&write_cfg(dir.path(), bad)).unwrap_err();
        assert!(err.to_string().contains("config"), "{bad}: {err}");
    }
    assert!(parse_config(&dir.path().join("missing.cfg")).is_err());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = ExperimentConfig {
        grid: Some(6),
        grad_clip: Some(10.0),
        name: Some("custom".into()),
        ..tiny("predator_prey")
    };
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
}

#[test]
fn run_directory_contents_are_consistent() {
    let out = tempdir().unwrap();
    let cfg = tiny("signal_game");
    let summary = run_experiment(&cfg, out.path(), &quiet).unwrap();
    let dir = &summary.dir;
    assert_eq!(dir, &out.path().join(cfg.run_name()));

    let snapshot = fs::read_to_string(dir.join(CONFIG_SNAPSHOT)).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&snapshot).unwrap(), cfg);

    let mut per_seed = Vec::new();
    for s in &summary.seeds {
        let path = dir.join(seed_csv_name(s.seed));
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows, s.rows);
        assert_eq!(rows.iter().map(|r| r.episode).collect::<Vec<_>>(), vec![10, 20, 30]);
        assert!(rows.iter().all(|r| r.seed == s.seed && (0.0..=1.0).contains(&r.mean_return)));
        assert_eq!(s.final_window_mean, final_window_mean(&rows, 2).unwrap());
        per_seed.push(rows);
    }

    let agg = fs::read_to_string(dir.join(AGGREGATE_CSV)).unwrap();
    let recomputed = aggregate(&per_seed);
    assert_eq!(agg.lines().count(), recomputed.len() + 1);
    for (line, row) in agg.lines().skip(1).zip(&recomputed) {
        let mean: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(mean, row.mean_return);
    }
    let summary_csv = fs::read_to_string(dir.join(SUMMARY_CSV)).unwrap();
    let last = summary_csv.lines().last().unwrap();
    assert!(last.starts_with("mean,"));
    let mean: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((mean - summary.mean_final()).abs() < 1e-12);

    for seed in &cfg.seeds {
        for agent in 0..2 {
            let ckpt = dir.join(format!("checkpoints/seed_{seed}/agent_{agent}.q.ckpt"));
            assert!(ckpt.is_file(), "{}", ckpt.display());
            assert!(ckpt.with_file_name(format!("agent_{agent}.comm.ckpt")).is_file());
        }
    }
}

#[test]
fn reruns_match_except_wallclock() {
    let cfg = ExperimentConfig {
        mode: Sharing::Ps,
        ..tiny("pp_small")
    };
    let strip = |rows: &[MetricsRow]| -> Vec<MetricsRow> {
        rows.iter()
            .map(|r| MetricsRow { wallclock_s: 0.0, ..r.clone() })
            .collect()
    };
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let ra = run_experiment(&cfg, a.path(), &quiet).unwrap();
    let rb = run_experiment(&cfg, b.path(), &quiet).unwrap();
    for (x, y) in ra.seeds.iter().zip(&rb.seeds) {
        assert_eq!(strip(&x.rows), strip(&y.rows));
    }
    assert_ne!(strip(&ra.seeds[0].rows), strip(&ra.seeds[1].rows));
    let ckpt = "checkpoints/seed_1/shared.comm.ckpt";
    assert_eq!(
        fs::read(ra.dir.join(ckpt)).unwrap(),
        fs::read(rb.dir.join(ckpt)).unwrap()
    );
}

#[test]
fn checkpoints_restore_bit_exactly() {
    let net = QNetwork::new(5, 7, 3, &mut seeded(3)).unwrap();
    let mut bytes = Vec::new();
    save_checkpoint(&net, &mut bytes).unwrap();
    let mut restored = QNetwork::new(5, 7, 3, &mut seeded(4)).unwrap();
    load_checkpoint(&mut restored, bytes.as_slice()).unwrap();
    for (p, q) in net.params().iter().zip(restored.params()) {
        let bits = |t: &marl_comm::autodiff::Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(p), bits(q));
    }
}

#[test]
fn metrics_with_a_wrong_header_are_rejected() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("seed_0.csv");
    fs::write(&path, "seed,episode,return\n0,10,1.0\n").unwrap();
    assert!(read_metrics(&path).is_err());
}

#[test]
fn plots_summarize_several_runs() {
    let out = tempdir().unwrap();
    let with = run_experiment(&tiny("signal_game"), out.path(), &quiet).unwrap();
    let without = run_experiment(
        &ExperimentConfig { comm: false, ..tiny("signal_game") },
        out.path(),
        &quiet,
    )
    .unwrap();
    let plots = emit_plots(&[with.dir.clone(), without.dir.clone()], &out.path().join("fig")).unwrap();
    let svg = fs::read_to_string(&plots.figure).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains(&with.label) && svg.contains(&without.label));
    assert_eq!(plots.rows.len(), 2);
    assert!((plots.rows[0].final_window_mean - with.mean_final()).abs() < 1e-12);
    let loaded = load_run(&with.dir).unwrap();
    assert_eq!(loaded.per_seed.len(), 2);
    assert_eq!(loaded.label, with.label);
    assert!(emit_plots(&[out.path().join("nothing")], out.path()).is_err());
}

#[test]
fn binary_trains_plots_and_reports() {
    let dir = tempdir().unwrap();
    let cfg_path = write_cfg(
        dir.path(),
        "env = \"signal_game\"\nhidden_dim = 8\nmsg_dim = 4\nbatch_size = 4\nepisodes = 20\neval_interval = 10\neval_episodes = 2\nfinal_window = 1\n",
    );
    let env_out = dir.path().join("from_env");
    let run = Command::new(BIN)
        .args(["train", "--config"])
        .arg(&cfg_path)
        .args(["--mode", "nps", "--comm", "--seeds", "3,4", "--episodes", "10", "--quiet"])
        .env("MARL_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let run_dir = env_out.join("signal_game-nps-comm-h8");
    assert!(run_dir.join("seed_3.csv").is_file() && run_dir.join("seed_4.csv").is_file());
    assert_eq!(read_metrics(&run_dir.join("seed_4.csv")).unwrap().len(), 1);

    let flag_out = dir.path().join("from_flag");
    let run = Command::new(BIN)
        .args(["train", "--config"])
        .arg(&cfg_path)
        .args(["--hidden", "6", "--seeds", "0", "--quiet", "--out"])
        .arg(&flag_out)
        .env("MARL_OUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(run.status.success());
    assert!(flag_out.join("signal_game-nps-iql-h6/seed_0.csv").is_file());

    let plot = Command::new(BIN).args(["plot", "--runs"]).arg(&run_dir).output().unwrap();
    assert!(plot.status.success(), "{}", String::from_utf8_lossy(&plot.stderr));
    assert!(env_out.join("returns.svg").is_file() && env_out.join("summary.csv").is_file());

    let report = Command::new(BIN).args(["gradreport", "--mode", "nps", "--comm"]).output().unwrap();
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("proposed") && text.contains("attached"));

    for args in [
        vec!["train", "--config", "/nonexistent.cfg"],
        vec!["gradreport", "--mode", "nps"],
        vec!["gradreport", "--mode", "ps", "--comm"],
        vec!["plot", "--runs", "/nonexistent"],
        vec!["bogus"],
    ] {
        let out = Command::new(BIN).args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty(), "{args:?} should explain itself");
    }
    let bad = Command::new(BIN)
        .args(["train", "--config"])
        .arg(&cfg_path)
        .args(["--mode", "ps", "--comm", "--no-own-message"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn shipped_presets_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, env, episodes) in [
        ("signal_game.cfg", "signal_game", 20_000),
        ("pp_small.cfg", "pp_small", 50_000),
        ("pp_full.cfg", "predator_prey", 200_000),
    ] {
        let cfg = parse_config(&dir.join(file)).unwrap();
        assert_eq!((cfg.env.as_str(), cfg.episodes), (env, episodes), "{file}");
    }
}
