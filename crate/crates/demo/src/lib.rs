//! WebAssembly bindings for the static page in `www/`.
//!
//! Everything here is a thin wrapper: the page asks for a gradient-flow
//! report, steps a predator-prey episode by hand, or trains two SignalGame
//! learners side by side in small chunks so the UI stays responsive.

use marl_comm::envs::{Env, PredatorPrey, PredatorPreyConfig, SignalGame};
use marl_comm::replay::ReplayBuffer;
use marl_comm::rng::{derive, stream, streams, Rng};
use marl_comm::trainer::{
    verify_gradient_flow, EpsilonSchedule, FlowSetup, GradientFlowReport, Mode, Trainer, TrainerConfig,
};
use rand::Rng as _;
use wasm_bindgen::prelude::*;

fn js_err(e: marl_comm::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Encoder gradient norms of every agent loss under three message wirings.
#[wasm_bindgen]
pub struct GradReport {
    report: GradientFlowReport,
}

#[wasm_bindgen]
impl GradReport {
    #[wasm_bindgen(constructor)]
    pub fn new(n_agents: usize, seed: u64) -> Result<GradReport, JsError> {
        let setup = FlowSetup {
            n_agents,
            seed,
            ..FlowSetup::default()
        };
        let report = verify_gradient_flow(Mode::NPS_IQL_COMM, &setup).map_err(js_err)?;
        Ok(GradReport { report })
    }

    pub fn n_agents(&self) -> usize {
        self.report.n_agents
    }

    pub fn n_wirings(&self) -> usize {
        self.report.wirings.len()
    }

    pub fn name(&self, k: usize) -> String {
        self.report.wirings.get(k).map_or_else(String::new, |w| w.name.to_string())
    }

    pub fn expected(&self, k: usize) -> String {
        self.report.wirings.get(k).map_or_else(String::new, |w| w.expected.to_string())
    }

    pub fn ok(&self, k: usize) -> bool {
        self.report.wirings.get(k).is_some_and(|w| w.ok)
    }

    /// Row-major `[loss i][encoder j]` gradient norms.
    pub fn matrix(&self, k: usize) -> Vec<f64> {
        self.report
            .wirings
            .get(k)
            .map(|w| w.comm_grad.concat())
            .unwrap_or_default()
    }

    /// Optimizer steps each encoder took for one batch.
    pub fn encoder_updates(&self, k: usize) -> Vec<u32> {
        self.report
            .wirings
            .get(k)
            .map(|w| w.comm_updates.iter().map(|&u| u as u32).collect())
            .unwrap_or_default()
    }

    pub fn text(&self) -> String {
        self.report.to_string()
    }
}

/// A predator-prey episode driven from the page.
#[wasm_bindgen]
pub struct PursuitStepper {
    env: PredatorPrey,
    policy_rng: Rng,
    total: f64,
    done: bool,
    last_reward: f64,
}

#[wasm_bindgen]
impl PursuitStepper {
    /// `small` selects the 5×5 two-predator variant.
    #[wasm_bindgen(constructor)]
    pub fn new(small: bool, seed: u64) -> Result<PursuitStepper, JsError> {
        let cfg = if small {
            PredatorPreyConfig::small()
        } else {
            PredatorPreyConfig::default()
        };
        let mut env = PredatorPrey::new(cfg, seed).map_err(js_err)?;
        env.reset();
        Ok(PursuitStepper {
            env,
            policy_rng: stream(seed, streams::EXPLORE),
            total: 0.0,
            done: false,
            last_reward: 0.0,
        })
    }

    pub fn reset(&mut self) {
        self.env.reset();
        self.total = 0.0;
        self.done = false;
        self.last_reward = 0.0;
    }

    /// Applies one joint action. Actions: 0 up, 1 down, 2 left, 3 right,
    /// 4 stay, 5 catch.
    pub fn step(&mut self, actions: &[u32]) -> Result<f64, JsError> {
        if self.done {
            return Err(JsError::new("episode is over; reset first"));
        }
        let actions: Vec<usize> = actions.iter().map(|&a| a as usize).collect();
        let step = self.env.step(&actions).map_err(js_err)?;
        self.total += step.reward;
        self.done = step.done;
        self.last_reward = step.reward;
        Ok(step.reward)
    }

    /// One step with uniformly random actions.
    pub fn step_random(&mut self) -> Result<f64, JsError> {
        let spec = self.env.spec();
        let actions: Vec<u32> = (0..spec.n_agents)
            .map(|_| rand_action(&mut self.policy_rng, spec.n_actions))
            .collect();
        self.step(&actions)
    }

    pub fn grid(&self) -> usize {
        self.env.config().grid
    }

    pub fn n_predators(&self) -> usize {
        self.env.config().n_predators
    }

    /// Flattened `(row, col)` of every predator.
    pub fn predators(&self) -> Vec<u32> {
        flatten(&self.env.snapshot().predators)
    }

    /// Flattened `(row, col)` of every prey still on the board.
    pub fn prey(&self) -> Vec<u32> {
        let snap = self.env.snapshot();
        let alive: Vec<(usize, usize)> = snap
            .prey
            .iter()
            .zip(&snap.prey_alive)
            .filter(|(_, &a)| a)
            .map(|(p, _)| *p)
            .collect();
        flatten(&alive)
    }

    pub fn steps(&self) -> usize {
        self.env.snapshot().steps
    }

    pub fn total_return(&self) -> f64 {
        self.total
    }

    pub fn last_reward(&self) -> f64 {
        self.last_reward
    }

    pub fn done(&self) -> bool {
        self.done
    }
}

fn rand_action(rng: &mut Rng, n: usize) -> u32 {
    rng.gen_range(0..n as u32)
}

fn flatten(cells: &[(usize, usize)]) -> Vec<u32> {
    cells.iter().flat_map(|&(r, c)| [r as u32, c as u32]).collect()
}

/// Independent learners on the signal game, with or without messages.
#[wasm_bindgen]
pub struct SignalTrainer {
    trainer: Trainer,
    env: SignalGame,
    eval_env: SignalGame,
    buffer: ReplayBuffer,
    explore: Rng,
    replay: Rng,
    eval_rng: Rng,
    episode: u64,
}

#[wasm_bindgen]
impl SignalTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(comm: bool, seed: u64) -> Result<SignalTrainer, JsError> {
        let env = SignalGame::new(derive(seed, streams::ENV));
        let mode = Mode {
            param_sharing: false,
            communication: comm,
        };
        let cfg = TrainerConfig {
            hidden_dim: 32,
            msg_dim: 32,
            epsilon: EpsilonSchedule {
                horizon: 1500,
                ..EpsilonSchedule::default()
            },
            ..TrainerConfig::default()
        };
        let buffer = ReplayBuffer::new(cfg.buffer_capacity).map_err(js_err)?;
        let trainer =
            Trainer::new(mode, env.spec(), cfg, &mut stream(seed, streams::INIT)).map_err(js_err)?;
        Ok(SignalTrainer {
            trainer,
            env,
            eval_env: SignalGame::new(derive(seed, streams::EVAL_ENV)),
            buffer,
            explore: stream(seed, streams::EXPLORE),
            replay: stream(seed, streams::REPLAY),
            eval_rng: stream(seed, streams::EVAL_ACT),
            episode: 0,
        })
    }

    /// Trains `episodes` more episodes and returns their mean return.
    pub fn train(&mut self, episodes: u32) -> Result<f64, JsError> {
        let mut sum = 0.0;
        for _ in 0..episodes {
            let stats = self
                .trainer
                .train_episode(
                    &mut self.env,
                    &mut self.buffer,
                    self.episode,
                    &mut self.explore,
                    &mut self.replay,
                )
                .map_err(js_err)?;
            sum += stats.episode_return.unwrap_or(0.0);
            self.episode += 1;
        }
        Ok(sum / episodes.max(1) as f64)
    }

    /// Mean greedy return over `episodes` evaluation episodes.
    pub fn evaluate(&mut self, episodes: usize) -> Result<f64, JsError> {
        self.trainer
            .evaluate(&mut self.eval_env, episodes, &mut self.eval_rng)
            .map_err(js_err)
    }

    pub fn episodes(&self) -> u64 {
        self.episode
    }

    pub fn epsilon(&self) -> f64 {
        self.trainer.config().epsilon.at(self.episode)
    }
}
