use rand::Rng as _;

use super::{check_actions, Env, EnvSpec, StepInfo, StepResult};
use crate::rng::{seeded, Rng};
use crate::Result;

/// One-step signalling game.
///
/// A uniform goal bit is shown to agent 0 only; agent 1 sees a constant.
/// The team earns 1 when agent 1's action equals the goal bit. Without a
/// channel from agent 0 to agent 1 no policy beats an expected reward of
/// 0.5.
pub struct SignalGame {
    goal: usize,
    rng: Rng,
}

impl SignalGame {
    pub const OBS_DIM: usize = 3;

    pub fn new(seed: u64) -> Self {
        SignalGame {
            goal: 0,
            rng: seeded(seed),
        }
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    /// Forces the goal bit of the current episode.
    pub fn set_goal(&mut self, goal: usize) -> Vec<Vec<f64>> {
        self.goal = goal.min(1);
        self.observe()
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        let mut speaker = vec![1.0, 0.0, 0.0];
        speaker[1 + self.goal] = 1.0;
        vec![speaker, vec![0.0; Self::OBS_DIM]]
    }
}

impl Env for SignalGame {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            n_agents: 2,
            obs_dim: Self::OBS_DIM,
            n_actions: 2,
            max_steps: 1,
            reward_notes: "+1 iff agent 1 names agent 0's goal bit",
        }
    }

    fn reset(&mut self) -> Vec<Vec<f64>> {
        self.goal = self.rng.gen_range(0..2);
        self.observe()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(actions, 2, 2)?;
        let reward = if actions[1] == self.goal { 1.0 } else { 0.0 };
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: true,
            terminated: true,
            info: StepInfo::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_follows_listener() {
        let mut env = SignalGame::new(0);
        env.set_goal(1);
        assert_eq!(env.step(&[0, 1]).unwrap().reward, 1.0);
        env.set_goal(0);
        let r = env.step(&[0, 1]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(r.done && r.terminated);
    }

    #[test]
    fn only_speaker_sees_goal() {
        let mut env = SignalGame::new(0);
        let a = env.set_goal(0);
        let b = env.set_goal(1);
        assert_ne!(a[0], b[0]);
        assert_eq!(a[1], b[1]);
    }

    #[test]
    fn invalid_action_rejected() {
        let mut env = SignalGame::new(0);
        env.reset();
        assert!(env.step(&[0, 2]).is_err());
        assert!(env.step(&[0]).is_err());
    }
}
