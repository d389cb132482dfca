//! Cooperative environments with a shared team reward.
//!
//! - `predator_prey`: N predators hunt randomly moving prey on a grid; a
//!   capture needs two adjacent predators choosing `catch` in the same step,
//!   and a lone catch attempt is punished.
//! - `pp_small`: the same game on a 5×5 grid with 2 predators and 1 prey.
//! - `signal_game`: a one-step game where only agent 0 sees the goal bit and
//!   only agent 1's action is rewarded.
//! - `two_state`: a single-agent two-state chain with a known optimal Q.

mod predator_prey;
mod signal_game;
mod two_state;

pub use predator_prey::{Action, PredatorPrey, PredatorPreyConfig, PredatorPreySnapshot};
pub use signal_game::SignalGame;
pub use two_state::TwoStateChain;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub max_steps: usize,
    pub reward_notes: &'static str,
}

/// Counters reported by an environment step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub captures: usize,
    pub solo_attempts: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Vec<Vec<f64>>,
    /// Team reward, identical for every agent.
    pub reward: f64,
    /// The episode is over (terminal state or step cap).
    pub done: bool,
    /// The episode reached a true terminal state; `false` when it only hit
    /// the step cap.
    pub terminated: bool,
    pub info: StepInfo,
}

impl StepResult {
    /// Per-agent view of the shared reward.
    pub fn agent_rewards(&self) -> Vec<f64> {
        vec![self.reward; self.obs.len()]
    }
}

pub trait Env {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self) -> Vec<Vec<f64>>;
    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;
}

/// Keyed overrides applied on top of a named environment's defaults.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "cli", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvOverrides {
    pub grid: Option<usize>,
    pub n_agents: Option<usize>,
    pub n_prey: Option<usize>,
    pub max_steps: Option<usize>,
    pub vision: Option<usize>,
}

pub const ENV_NAMES: [&str; 4] = ["predator_prey", "pp_small", "signal_game", "two_state"];

/// Predator-prey configuration for a named preset with overrides applied.
pub fn predator_prey_config(name: &str, o: &EnvOverrides) -> Result<PredatorPreyConfig> {
    let mut cfg = match name {
        "predator_prey" => PredatorPreyConfig::default(),
        "pp_small" => PredatorPreyConfig::small(),
        other => return Err(Error::Env(format!("{other} is not a predator-prey preset"))),
    };
    if let Some(v) = o.grid {
        cfg.grid = v;
    }
    if let Some(v) = o.n_agents {
        cfg.n_predators = v;
    }
    if let Some(v) = o.n_prey {
        cfg.n_prey = v;
    }
    if let Some(v) = o.max_steps {
        cfg.max_steps = v;
    }
    if let Some(v) = o.vision {
        cfg.vision = v;
    }
    Ok(cfg)
}

pub fn make_env(name: &str, overrides: &EnvOverrides, seed: u64) -> Result<Box<dyn Env + Send>> {
    match name {
        "predator_prey" | "pp_small" => Ok(Box::new(PredatorPrey::new(
            predator_prey_config(name, overrides)?,
            seed,
        )?)),
        "signal_game" => {
            if overrides.n_agents.is_some_and(|n| n != 2) {
                return Err(Error::Env("signal_game is defined for 2 agents".into()));
            }
            Ok(Box::new(SignalGame::new(seed)))
        }
        "two_state" => Ok(Box::new(TwoStateChain::new(
            overrides.max_steps.unwrap_or(TwoStateChain::DEFAULT_MAX_STEPS),
            seed,
        ))),
        other => Err(Error::Env(format!(
            "unknown environment {other:?}; expected one of {ENV_NAMES:?}"
        ))),
    }
}

/// Spec of a named environment without keeping an instance around.
pub fn env_spec(name: &str, overrides: &EnvOverrides) -> Result<EnvSpec> {
    Ok(make_env(name, overrides, 0)?.spec())
}

fn check_actions(actions: &[usize], n_agents: usize, n_actions: usize) -> Result<()> {
    if actions.len() != n_agents {
        return Err(Error::Env(format!(
            "expected {n_agents} actions, got {}",
            actions.len()
        )));
    }
    if let Some((i, a)) = actions.iter().enumerate().find(|(_, &a)| a >= n_actions) {
        return Err(Error::Env(format!(
            "agent {i}: action {a} out of range 0..{n_actions}"
        )));
    }
    Ok(())
}
