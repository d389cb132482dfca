use rand::Rng as _;

use super::{check_actions, Env, EnvSpec, StepInfo, StepResult};
use crate::rng::{seeded, Rng};
use crate::Result;

/// Single-agent two-state chain with deterministic dynamics.
///
/// | state | action | reward | next        |
/// |-------|--------|--------|-------------|
/// | 0     | 0      | 0      | 0           |
/// | 0     | 1      | 0      | 1           |
/// | 1     | 0      | 0.5    | terminal    |
/// | 1     | 1      | 0      | 0           |
///
/// Episodes start in a uniformly drawn state and are cut off after
/// `max_steps` without terminating.
pub struct TwoStateChain {
    state: usize,
    steps: usize,
    max_steps: usize,
    rng: Rng,
}

impl TwoStateChain {
    pub const DEFAULT_MAX_STEPS: usize = 10;

    /// `(reward, next state)`; `None` marks termination.
    pub const fn transition(state: usize, action: usize) -> (f64, Option<usize>) {
        match (state, action) {
            (0, 0) => (0.0, Some(0)),
            (0, _) => (0.0, Some(1)),
            (_, 0) => (0.5, None),
            _ => (0.0, Some(0)),
        }
    }

    pub fn new(max_steps: usize, seed: u64) -> Self {
        TwoStateChain {
            state: 0,
            steps: 0,
            max_steps: max_steps.max(1),
            rng: seeded(seed),
        }
    }

    pub fn observe_state(state: usize) -> Vec<f64> {
        let mut o = vec![0.0; 2];
        o[state] = 1.0;
        o
    }

    pub fn set_state(&mut self, state: usize) -> Vec<Vec<f64>> {
        self.state = state.min(1);
        self.steps = 0;
        vec![Self::observe_state(self.state)]
    }
}

impl Env for TwoStateChain {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            n_agents: 1,
            obs_dim: 2,
            n_actions: 2,
            max_steps: self.max_steps,
            reward_notes: "0.5 for leaving through state 1, otherwise 0",
        }
    }

    fn reset(&mut self) -> Vec<Vec<f64>> {
        let s = self.rng.gen_range(0..2);
        self.set_state(s)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(actions, 1, 2)?;
        let (reward, next) = Self::transition(self.state, actions[0]);
        self.steps += 1;
        let terminated = next.is_none();
        if let Some(n) = next {
            self.state = n;
        }
        Ok(StepResult {
            obs: vec![Self::observe_state(self.state)],
            reward,
            done: terminated || self.steps >= self.max_steps,
            terminated,
            info: StepInfo::default(),
        })
    }
}
