use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{check_actions, Env, EnvSpec, StepInfo, StepResult};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Stay = 4,
    Catch = 5,
}

impl Action {
    pub const COUNT: usize = 6;

    pub fn from_index(i: usize) -> Option<Action> {
        use Action::*;
        [Up, Down, Left, Right, Stay, Catch].get(i).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay | Action::Catch => (0, 0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredatorPreyConfig {
    pub grid: usize,
    pub n_predators: usize,
    pub n_prey: usize,
    pub max_steps: usize,
    /// Side of the square egocentric window (odd).
    pub vision: usize,
    /// Per-agent reward for each captured prey (scaled by N).
    pub capture_reward: f64,
    /// Per-agent penalty paid every step (scaled by N).
    pub step_penalty: f64,
    /// Per-agent penalty for each lone catch attempt (scaled by N).
    pub solo_penalty: f64,
}

impl Default for PredatorPreyConfig {
    fn default() -> Self {
        PredatorPreyConfig {
            grid: 7,
            n_predators: 4,
            n_prey: 2,
            max_steps: 100,
            vision: 5,
            capture_reward: 5.0,
            step_penalty: 0.1,
            solo_penalty: 0.75,
        }
    }
}

impl PredatorPreyConfig {
    /// 5×5 grid, 2 predators, 1 prey, same reward constants.
    pub fn small() -> Self {
        PredatorPreyConfig {
            grid: 5,
            n_predators: 2,
            n_prey: 1,
            max_steps: 25,
            ..Self::default()
        }
    }

    /// Own position (2) plus a predator and a prey channel over the window.
    pub fn obs_dim(&self) -> usize {
        2 + 2 * self.vision * self.vision
    }

    fn validate(&self) -> Result<()> {
        if self.n_predators == 0 || self.n_prey == 0 || self.grid == 0 || self.max_steps == 0 {
            return Err(Error::Env(format!("degenerate predator-prey config {self:?}")));
        }
        if self.vision.is_multiple_of(2) {
            return Err(Error::Env(format!("vision must be odd, got {}", self.vision)));
        }
        if self.n_predators + self.n_prey > self.grid * self.grid {
            return Err(Error::Env(format!(
                "{} predators and {} prey do not fit on a {}x{} grid",
                self.n_predators, self.n_prey, self.grid, self.grid
            )));
        }
        Ok(())
    }
}

/// Positions are `(row, col)`; row 0 is the top edge.
#[derive(Clone, Debug, PartialEq)]
pub struct PredatorPreySnapshot {
    pub predators: Vec<(usize, usize)>,
    pub prey: Vec<(usize, usize)>,
    pub prey_alive: Vec<bool>,
    pub steps: usize,
}

/// Punished predator-prey grid world.
///
/// Transition order within a step:
/// 1. predators with a move action move in index order; moves off the grid
///    or onto an occupied cell become `stay`;
/// 2. every alive prey with two or more 4-adjacent predators choosing
///    `catch` is captured; a prey with exactly one such predator counts one
///    lone attempt;
/// 3. surviving prey move uniformly among staying and their free neighbours.
///
/// Team reward per step: `N·(capture·captures - solo·attempts - step)`.
pub struct PredatorPrey {
    cfg: PredatorPreyConfig,
    predators: Vec<(usize, usize)>,
    prey: Vec<(usize, usize)>,
    alive: Vec<bool>,
    steps: usize,
    rng: Rng,
}

impl PredatorPrey {
    pub fn new(cfg: PredatorPreyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut env = PredatorPrey {
            predators: Vec::new(),
            prey: Vec::new(),
            alive: Vec::new(),
            steps: 0,
            rng: seeded(seed),
            cfg,
        };
        env.place();
        Ok(env)
    }

    pub fn config(&self) -> &PredatorPreyConfig {
        &self.cfg
    }

    pub fn snapshot(&self) -> PredatorPreySnapshot {
        PredatorPreySnapshot {
            predators: self.predators.clone(),
            prey: self.prey.clone(),
            prey_alive: self.alive.clone(),
            steps: self.steps,
        }
    }

    /// Puts the world into an explicit state (positions must be valid and
    /// distinct).
    pub fn restore(&mut self, snap: &PredatorPreySnapshot) -> Result<Vec<Vec<f64>>> {
        let g = self.cfg.grid;
        if snap.predators.len() != self.cfg.n_predators
            || snap.prey.len() != self.cfg.n_prey
            || snap.prey_alive.len() != self.cfg.n_prey
        {
            return Err(Error::Env("snapshot does not match the configuration".into()));
        }
        let mut cells: Vec<(usize, usize)> = snap.predators.clone();
        cells.extend(
            snap.prey
                .iter()
                .zip(&snap.prey_alive)
                .filter(|(_, &a)| a)
                .map(|(p, _)| *p),
        );
        if cells.iter().any(|&(r, c)| r >= g || c >= g) {
            return Err(Error::Env("snapshot position out of bounds".into()));
        }
        let mut sorted = cells.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != cells.len() {
            return Err(Error::Env("snapshot places two entities on one cell".into()));
        }
        self.predators = snap.predators.clone();
        self.prey = snap.prey.clone();
        self.alive = snap.prey_alive.clone();
        self.steps = snap.steps;
        Ok(self.observe())
    }

    fn place(&mut self) {
        let g = self.cfg.grid;
        let mut cells: Vec<(usize, usize)> = (0..g * g).map(|i| (i / g, i % g)).collect();
        cells.shuffle(&mut self.rng);
        let n = self.cfg.n_predators;
        self.predators = cells[..n].to_vec();
        self.prey = cells[n..n + self.cfg.n_prey].to_vec();
        self.alive = vec![true; self.cfg.n_prey];
        self.steps = 0;
    }

    fn occupied(&self, cell: (usize, usize)) -> bool {
        self.predators.contains(&cell)
            || self
                .prey
                .iter()
                .zip(&self.alive)
                .any(|(p, &a)| a && *p == cell)
    }

    fn offset(&self, (r, c): (usize, usize), (dr, dc): (isize, isize)) -> Option<(usize, usize)> {
        let g = self.cfg.grid as isize;
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        (0..g)
            .contains(&nr)
            .then_some(())
            .filter(|_| (0..g).contains(&nc))
            .map(|_| (nr as usize, nc as usize))
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        let g = self.cfg.grid;
        let v = self.cfg.vision;
        let radius = (v / 2) as isize;
        let norm = if g > 1 { (g - 1) as f64 } else { 1.0 };
        (0..self.predators.len())
            .map(|i| {
                let me = self.predators[i];
                let mut obs = Vec::with_capacity(self.cfg.obs_dim());
                obs.push(me.0 as f64 / norm);
                obs.push(me.1 as f64 / norm);
                let mut pred = vec![0.0; v * v];
                let mut prey = vec![0.0; v * v];
                for dr in -radius..=radius {
                    for dc in -radius..=radius {
                        let k = ((dr + radius) as usize) * v + (dc + radius) as usize;
                        match self.offset(me, (dr, dc)) {
                            None => {
                                pred[k] = -1.0;
                                prey[k] = -1.0;
                            }
                            Some(cell) => {
                                if cell != me && self.predators.contains(&cell) {
                                    pred[k] = 1.0;
                                }
                                if self
                                    .prey
                                    .iter()
                                    .zip(&self.alive)
                                    .any(|(p, &a)| a && *p == cell)
                                {
                                    prey[k] = 1.0;
                                }
                            }
                        }
                    }
                }
                obs.extend(pred);
                obs.extend(prey);
                obs
            })
            .collect()
    }

    fn adjacent(a: (usize, usize), b: (usize, usize)) -> bool {
        a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1
    }
}

impl Env for PredatorPrey {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            n_agents: self.cfg.n_predators,
            obs_dim: self.cfg.obs_dim(),
            n_actions: Action::COUNT,
            max_steps: self.cfg.max_steps,
            reward_notes: "N·(5 per capture − 0.75 per lone catch − 0.1 per step)",
        }
    }

    fn reset(&mut self) -> Vec<Vec<f64>> {
        self.place();
        self.observe()
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(actions, self.cfg.n_predators, Action::COUNT)?;
        if self.alive.iter().all(|a| !a) || self.steps >= self.cfg.max_steps {
            return Err(Error::Env("step called on a finished episode".into()));
        }
        let acts: Vec<Action> = actions
            .iter()
            .map(|&a| Action::from_index(a).expect("checked"))
            .collect();

        for (i, act) in acts.iter().enumerate() {
            if let Some(target) = self.offset(self.predators[i], act.delta()) {
                if target != self.predators[i] && !self.occupied(target) {
                    self.predators[i] = target;
                }
            }
        }

        let mut info = StepInfo::default();
        for p in 0..self.prey.len() {
            if !self.alive[p] {
                continue;
            }
            let catchers = self
                .predators
                .iter()
                .zip(&acts)
                .filter(|(pos, a)| **a == Action::Catch && Self::adjacent(**pos, self.prey[p]))
                .count();
            match catchers {
                0 => {}
                1 => info.solo_attempts += 1,
                _ => {
                    self.alive[p] = false;
                    info.captures += 1;
                }
            }
        }

        const MOVES: [(isize, isize); 5] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];
        for p in 0..self.prey.len() {
            if !self.alive[p] {
                continue;
            }
            let here = self.prey[p];
            let options: Vec<(usize, usize)> = MOVES
                .iter()
                .filter_map(|&d| self.offset(here, d))
                .filter(|&cell| cell == here || !self.occupied(cell))
                .collect();
            self.prey[p] = options[self.rng.gen_range(0..options.len())];
        }

        self.steps += 1;
        let n = self.cfg.n_predators as f64;
        let reward = n
            * (self.cfg.capture_reward * info.captures as f64
                - self.cfg.solo_penalty * info.solo_attempts as f64
                - self.cfg.step_penalty);
        let terminated = self.alive.iter().all(|a| !a);
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: terminated || self.steps >= self.cfg.max_steps,
            terminated,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_with(predators: &[(usize, usize)], prey: &[(usize, usize)]) -> PredatorPrey {
        let cfg = PredatorPreyConfig {
            n_predators: predators.len(),
            n_prey: prey.len(),
            ..PredatorPreyConfig::default()
        };
        let mut env = PredatorPrey::new(cfg, 0).unwrap();
        env.restore(&PredatorPreySnapshot {
            predators: predators.to_vec(),
            prey: prey.to_vec(),
            prey_alive: vec![true; prey.len()],
            steps: 0,
        })
        .unwrap();
        env
    }

    const S: usize = Action::Stay as usize;
    const C: usize = Action::Catch as usize;

    #[test]
    fn step_penalty_only() {
        let mut env = env_with(&[(0, 0), (0, 6), (6, 0), (6, 6)], &[(3, 3), (3, 5)]);
        let r = env.step(&[S, S, S, S]).unwrap();
        assert!((r.reward - -0.4).abs() < 1e-12);
    }

    #[test]
    fn cooperative_capture() {
        let mut env = env_with(&[(2, 3), (4, 3), (0, 0), (6, 6)], &[(3, 3), (0, 6)]);
        let r = env.step(&[C, C, S, S]).unwrap();
        assert!((r.reward - 19.6).abs() < 1e-12);
        assert_eq!(r.info.captures, 1);
        assert!(!r.done);
    }

    #[test]
    fn lone_attempt_is_punished() {
        let mut env = env_with(&[(2, 3), (0, 0), (6, 0), (6, 6)], &[(3, 3), (0, 6)]);
        let r = env.step(&[C, S, S, S]).unwrap();
        assert!((r.reward - -3.4).abs() < 1e-12);
        assert_eq!(r.info.solo_attempts, 1);
    }

    #[test]
    fn double_capture_ends_episode() {
        let mut env = env_with(&[(2, 1), (4, 1), (2, 5), (4, 5)], &[(3, 1), (3, 5)]);
        let r = env.step(&[C, C, C, C]).unwrap();
        assert!((r.reward - 39.6).abs() < 1e-12);
        assert!(r.done && r.terminated);
        assert!(env.step(&[S, S, S, S]).is_err());
    }

    #[test]
    fn blocked_moves_become_stay() {
        let mut env = env_with(&[(0, 0), (0, 1), (6, 0), (6, 6)], &[(3, 3), (5, 5)]);
        // up off the grid, left onto predator 0
        env.step(&[Action::Up as usize, Action::Left as usize, S, S])
            .unwrap();
        let snap = env.snapshot();
        assert_eq!(snap.predators[0], (0, 0));
        assert_eq!(snap.predators[1], (0, 1));
    }

    #[test]
    fn observation_layout() {
        let env = env_with(&[(0, 0), (0, 1), (6, 0), (6, 6)], &[(1, 0), (5, 5)]);
        let obs = env.observe();
        let cfg = env.config();
        assert_eq!(obs[0].len(), cfg.obs_dim());
        assert_eq!(&obs[0][..2], &[0.0, 0.0]);
        let v = cfg.vision;
        let center = (v / 2) * v + v / 2;
        // predator 1 is to the right, prey 0 below
        assert_eq!(obs[0][2 + center + 1], 1.0);
        assert_eq!(obs[0][2 + v * v + center + v], 1.0);
        // cells above the top edge are marked out of grid
        assert_eq!(obs[0][2], -1.0);
        assert_eq!(obs[0][2 + v * v], -1.0);
    }

    #[test]
    fn too_small_grid_rejected() {
        let cfg = PredatorPreyConfig {
            grid: 2,
            ..PredatorPreyConfig::default()
        };
        assert!(PredatorPrey::new(cfg, 0).is_err());
    }
}
