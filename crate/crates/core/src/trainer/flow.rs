//! Gradient-flow diagnostics for independent learners with messages.
//!
//! For each wiring a fresh NPS+IQL+COMM trainer is built on a synthetic
//! batch; every agent's loss is differentiated on its own tape and the norm
//! of its gradient with respect to every encoder is recorded. One update is
//! then applied and the optimizer step counts are read back.

use std::fmt;

use rand::Rng;

use super::{grads_norm, grads_reached, Mode, Trainer, TrainerConfig, Wiring};
use crate::envs::EnvSpec;
use crate::replay::{Episode, EpisodeBatch};
use crate::rng::{seeded, stream, streams};
use crate::{Error, Result};

/// Size of the synthetic problem.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSetup {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden_dim: usize,
    pub msg_dim: usize,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for FlowSetup {
    fn default() -> Self {
        FlowSetup {
            n_agents: 3,
            obs_dim: 6,
            n_actions: 4,
            hidden_dim: 16,
            msg_dim: 8,
            batch: 4,
            steps: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WiringReport {
    pub name: &'static str,
    pub wiring: Wiring,
    /// `comm_grad[i][j] = ‖∇ L_i‖` over agent j's encoder.
    pub comm_grad: Vec<Vec<f64>>,
    /// `comm_reached[i][j]`: agent j's encoder is on the graph of `L_i`.
    pub comm_reached: Vec<Vec<bool>>,
    /// `policy_grad[i][j] = ‖∇ L_i‖` over agent j's Q-network.
    pub policy_grad: Vec<Vec<f64>>,
    /// Optimizer steps per encoder after one batch.
    pub comm_updates: Vec<u64>,
    /// Optimizer steps per Q-network after one batch.
    pub policy_updates: Vec<u64>,
    pub expected: &'static str,
    pub ok: bool,
}

impl WiringReport {
    /// Number of losses that reach each encoder.
    pub fn contributions(&self) -> Vec<usize> {
        let n = self.comm_reached.len();
        (0..n)
            .map(|j| (0..n).filter(|&i| self.comm_reached[i][j]).count())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientFlowReport {
    pub n_agents: usize,
    pub wirings: Vec<WiringReport>,
}

impl GradientFlowReport {
    pub fn all_ok(&self) -> bool {
        self.wirings.iter().all(|w| w.ok)
    }

    pub fn get(&self, name: &str) -> Option<&WiringReport> {
        self.wirings.iter().find(|w| w.name == name)
    }
}

impl fmt::Display for GradientFlowReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.n_agents;
        for w in &self.wirings {
            writeln!(
                f,
                "{} (own message: {}, detach incoming: {}) [{}]",
                w.name,
                w.wiring.own_message,
                w.wiring.detach_incoming,
                if w.ok { "ok" } else { "UNEXPECTED" }
            )?;
            writeln!(f, "  expected: {}", w.expected)?;
            write!(f, "  |grad L_i wrt encoder j|")?;
            for j in 0..n {
                write!(f, " {:>10}", format!("mu_{j}"))?;
            }
            writeln!(f)?;
            for i in 0..n {
                write!(f, "  {:<23}", format!("L_{i}"))?;
                for j in 0..n {
                    write!(f, " {:>10.3e}", w.comm_grad[i][j])?;
                }
                writeln!(f)?;
            }
            writeln!(f, "  encoder updates per batch: {:?}", w.comm_updates)?;
            writeln!(f, "  q-network updates per batch: {:?}", w.policy_updates)?;
        }
        Ok(())
    }
}

fn synthetic_batch(setup: &FlowSetup) -> Result<EpisodeBatch> {
    let mut rng = stream(setup.seed, streams::ENV);
    let (n, d) = (setup.n_agents, setup.obs_dim);
    let obs = |rng: &mut crate::rng::Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    let episodes: Vec<Episode> = (0..setup.batch)
        .map(|b| {
            // varying lengths so padding is exercised
            let len = setup.steps.saturating_sub(b % 2).max(1);
            let mut e = Episode::new(obs(&mut rng));
            for t in 0..len {
                let actions = (0..n).map(|_| rng.gen_range(0..setup.n_actions)).collect();
                let reward = rng.gen_range(-1.0..1.0);
                let next = obs(&mut rng);
                e.record(actions, reward, t + 1 == len && b % 3 == 0, next);
            }
            e
        })
        .collect();
    let refs: Vec<&Episode> = episodes.iter().collect();
    EpisodeBatch::from_episodes(&refs)
}

fn expectation(name: &str) -> &'static str {
    match name {
        "proposed" => "each encoder reached only by its owner's loss; one update each",
        "incoming-only" => "no loss reaches any encoder; encoders never update",
        _ => "every loss reaches every encoder; N updates per encoder",
    }
}

fn check(name: &str, r: &WiringReport, n: usize) -> bool {
    let policy_diag = (0..n).all(|i| {
        (0..n).all(|j| (r.policy_grad[i][j] > 0.0) == (i == j)) && r.policy_updates[i] == 1
    });
    let comm = match name {
        "proposed" => (0..n).all(|i| {
            (0..n).all(|j| r.comm_reached[i][j] == (i == j) && (r.comm_grad[i][j] > 0.0) == (i == j))
        }) && r.comm_updates.iter().all(|&u| u == 1),
        "incoming-only" => {
            r.comm_grad.iter().flatten().all(|&g| g == 0.0)
                && r.comm_updates.iter().all(|&u| u == 0)
        }
        _ => {
            r.comm_grad.iter().flatten().all(|&g| g > 0.0)
                && r.comm_updates.iter().all(|&u| u == n as u64)
        }
    };
    policy_diag && comm
}

/// Gradient reachability for the proposed wiring and the two broken
/// alternatives. Only independent learners with messages are covered;
/// under parameter sharing all agents train one set of networks.
pub fn verify_gradient_flow(mode: Mode, setup: &FlowSetup) -> Result<GradientFlowReport> {
    if mode != Mode::NPS_IQL_COMM {
        return Err(Error::Invalid(format!(
            "gradient-flow report covers NPS+IQL+COMM only, got {}",
            mode.label()
        )));
    }
    if setup.n_agents < 2 {
        return Err(Error::Invalid("gradient-flow report needs at least two agents".into()));
    }
    let spec = EnvSpec {
        n_agents: setup.n_agents,
        obs_dim: setup.obs_dim,
        n_actions: setup.n_actions,
        max_steps: setup.steps,
        reward_notes: "synthetic",
    };
    let batch = synthetic_batch(setup)?;
    let n = setup.n_agents;
    let cases = [
        ("proposed", Wiring::PROPOSED),
        ("incoming-only", Wiring::INCOMING_ONLY),
        ("attached", Wiring::ATTACHED),
    ];
    let mut wirings = Vec::with_capacity(cases.len());
    for (name, wiring) in cases {
        let cfg = TrainerConfig {
            hidden_dim: setup.hidden_dim,
            msg_dim: setup.msg_dim,
            batch_size: setup.batch,
            buffer_capacity: setup.batch.max(1),
            wiring: Some(wiring),
            ..TrainerConfig::default()
        };
        let mut trainer = Trainer::new(mode, spec.clone(), cfg, &mut seeded(setup.seed))?;
        let mut comm_grad = vec![vec![0.0; n]; n];
        let mut comm_reached = vec![vec![false; n]; n];
        let mut policy_grad = vec![vec![0.0; n]; n];
        for i in 0..n {
            let y = trainer.td_targets(&batch, i)?;
            let g = trainer.agent_loss_grads(&batch, i, y)?;
            for j in 0..n {
                comm_grad[i][j] = grads_norm(&g.comm[j]);
                comm_reached[i][j] = grads_reached(&g.comm[j]);
                policy_grad[i][j] = grads_norm(&g.policy[j]);
            }
        }
        trainer.train_batch(&batch)?;
        let first_count = |counts: &[u64]| counts.first().copied().unwrap_or(0);
        let comm_updates = trainer
            .bundles()
            .iter()
            .map(|b| b.comm_opt.as_ref().map_or(0, |o| first_count(o.update_counts())))
            .collect();
        let policy_updates = trainer
            .bundles()
            .iter()
            .map(|b| first_count(b.policy_opt.update_counts()))
            .collect();
        let mut report = WiringReport {
            name,
            wiring,
            comm_grad,
            comm_reached,
            policy_grad,
            comm_updates,
            policy_updates,
            expected: expectation(name),
            ok: false,
        };
        report.ok = check(name, &report, n);
        wirings.push(report);
    }
    Ok(GradientFlowReport { n_agents: n, wirings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_setup_behaves_as_expected() {
        let report = verify_gradient_flow(Mode::NPS_IQL_COMM, &FlowSetup::default()).unwrap();
        assert!(report.all_ok(), "{report}");
        assert_eq!(report.get("attached").unwrap().contributions(), vec![3, 3, 3]);
        assert_eq!(report.get("proposed").unwrap().contributions(), vec![1, 1, 1]);
        assert_eq!(report.get("incoming-only").unwrap().contributions(), vec![0, 0, 0]);
    }

    #[test]
    fn shared_modes_are_rejected() {
        assert!(verify_gradient_flow(Mode::PS_IQL_COMM, &FlowSetup::default()).is_err());
        assert!(verify_gradient_flow(Mode::NPS_IQL, &FlowSetup::default()).is_err());
    }
}
