use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::{env_spec, EnvOverrides, ENV_NAMES};
use crate::nn::RmsPropConfig;
use crate::trainer::{EpsilonSchedule, Mode, TrainerConfig, Wiring};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sharing {
    Ps,
    #[default]
    Nps,
}

/// One experiment: a single configuration trained on several seeds.
///
/// Files are flat TOML. Every key is optional; missing keys take the
/// defaults below and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    pub grid: Option<usize>,
    pub n_agents: Option<usize>,
    pub n_prey: Option<usize>,
    pub max_steps: Option<usize>,
    pub vision: Option<usize>,

    pub mode: Sharing,
    pub comm: bool,
    pub hidden_dim: usize,
    pub msg_dim: usize,

    pub lr: f64,
    pub rms_rho: f64,
    pub rms_eps: f64,
    pub gamma: f64,
    pub grad_clip: Option<f64>,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub target_interval: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_horizon: u64,

    pub episodes: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Number of trailing evaluation points averaged for summaries.
    pub final_window: usize,
    pub seeds: Vec<u64>,
    pub out_dir: Option<String>,
    /// Run directory name; derived from the configuration when unset.
    pub name: Option<String>,

    /// Leave the agent's own message out of its Q input.
    pub no_own_message: bool,
    /// Keep incoming messages attached to the graph.
    pub no_detach: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let eps = EpsilonSchedule::default();
        let opt = RmsPropConfig::default();
        ExperimentConfig {
            env: "pp_small".into(),
            grid: None,
            n_agents: None,
            n_prey: None,
            max_steps: None,
            vision: None,
            mode: Sharing::Nps,
            comm: false,
            hidden_dim: 64,
            msg_dim: 64,
            lr: opt.lr,
            rms_rho: opt.rho,
            rms_eps: opt.eps,
            gamma: 0.99,
            grad_clip: None,
            buffer_capacity: 5000,
            batch_size: 32,
            target_interval: 200,
            epsilon_start: eps.start,
            epsilon_end: eps.end,
            epsilon_horizon: eps.horizon,
            episodes: 50_000,
            eval_interval: 200,
            eval_episodes: 32,
            final_window: 10,
            seeds: vec![0, 1, 2],
            out_dir: None,
            name: None,
            no_own_message: false,
            no_detach: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn mode(&self) -> Mode {
        Mode {
            param_sharing: self.mode == Sharing::Ps,
            communication: self.comm,
        }
    }

    pub fn overrides(&self) -> EnvOverrides {
        EnvOverrides {
            grid: self.grid,
            n_agents: self.n_agents,
            n_prey: self.n_prey,
            max_steps: self.max_steps,
            vision: self.vision,
        }
    }

    pub fn wiring(&self) -> Wiring {
        let mut w = Wiring::default_for(self.mode());
        if self.no_own_message {
            w.own_message = false;
        }
        if self.no_detach {
            w.detach_incoming = false;
        }
        w
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            hidden_dim: self.hidden_dim,
            msg_dim: self.msg_dim,
            gamma: self.gamma,
            optimizer: RmsPropConfig {
                lr: self.lr,
                rho: self.rms_rho,
                eps: self.rms_eps,
            },
            grad_clip: self.grad_clip,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            target_interval: self.target_interval,
            epsilon: EpsilonSchedule {
                start: self.epsilon_start,
                end: self.epsilon_end,
                horizon: self.epsilon_horizon,
            },
            wiring: Some(self.wiring()),
        }
    }

    /// Display label, e.g. `NPS+IQL+COMM h64`.
    pub fn label(&self) -> String {
        let mut label = format!("{} h{}", self.mode().label(), self.hidden_dim);
        if self.comm && self.no_own_message {
            label.push_str(" no-own-msg");
        }
        if self.comm && self.no_detach {
            label.push_str(" no-detach");
        }
        label
    }

    /// Directory name for this configuration, e.g. `pp_small-nps-comm-h64`.
    pub fn run_name(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        let sharing = match self.mode {
            Sharing::Ps => "ps",
            Sharing::Nps => "nps",
        };
        let mut name = format!(
            "{}-{}-{}-h{}",
            self.env,
            sharing,
            if self.comm { "comm" } else { "iql" },
            self.hidden_dim
        );
        if self.comm && self.no_own_message {
            name.push_str("-no-own-msg");
        }
        if self.comm && self.no_detach {
            name.push_str("-no-detach");
        }
        name
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !ENV_NAMES.contains(&self.env.as_str()) {
            return bad(format!("unknown env {:?}; expected one of {ENV_NAMES:?}", self.env));
        }
        for (key, v) in [
            ("hidden_dim", self.hidden_dim as u64),
            ("msg_dim", self.msg_dim as u64),
            ("buffer_capacity", self.buffer_capacity as u64),
            ("batch_size", self.batch_size as u64),
            ("target_interval", self.target_interval),
            ("epsilon_horizon", self.epsilon_horizon),
            ("episodes", self.episodes),
            ("eval_interval", self.eval_interval),
            ("eval_episodes", self.eval_episodes as u64),
            ("final_window", self.final_window as u64),
        ] {
            if v == 0 {
                return bad(format!("{key} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if (self.no_own_message || self.no_detach) && !(self.comm && self.mode == Sharing::Nps) {
            return bad("no_own_message and no_detach apply to nps with comm only".into());
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return bad(format!("invalid run name {name:?}"));
            }
        }
        env_spec(&self.env, &self.overrides()).map_err(|e| Error::Config(e.to_string()))?;
        self.trainer_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.lr, 5e-4);
        assert_eq!(cfg.gamma, 0.99);
        assert_eq!(cfg.buffer_capacity, 5000);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.target_interval, 200);
        assert_eq!(cfg.msg_dim, 64);
    }

    #[test]
    fn rejects_bad_values_and_keys() {
        assert!(ExperimentConfig::from_toml("gamma = 1.2").is_err());
        assert!(ExperimentConfig::from_toml("gamma = 1.0").is_err());
        assert!(ExperimentConfig::from_toml("hidden = 64").is_err());
        assert!(ExperimentConfig::from_toml("hidden_dim = \"big\"").is_err());
        assert!(ExperimentConfig::from_toml("env = \"atari\"").is_err());
        assert!(ExperimentConfig::from_toml("seeds = []").is_err());
        assert!(ExperimentConfig::from_toml("no_detach = true").is_err());
    }

    #[test]
    fn accepts_capacity_sweep_and_overrides() {
        let cfg = ExperimentConfig::from_toml("hidden_dim = 128\ngrid = 6\nmax_steps = 30").unwrap();
        assert_eq!(cfg.hidden_dim, 128);
        assert_eq!(cfg.overrides().grid, Some(6));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.comm = true;
        cfg.mode = Sharing::Ps;
        cfg.grad_clip = Some(10.0);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn ablation_flags_shape_the_wiring() {
        let cfg = ExperimentConfig::from_toml("comm = true\nno_own_message = true").unwrap();
        assert_eq!(cfg.wiring(), Wiring::INCOMING_ONLY);
        let cfg = ExperimentConfig::from_toml("comm = true\nno_detach = true").unwrap();
        assert_eq!(cfg.wiring(), Wiring::ATTACHED);
        let cfg = ExperimentConfig::from_toml("comm = true\nmode = \"ps\"").unwrap();
        assert_eq!(cfg.wiring(), Wiring::SHARED);
    }
}
