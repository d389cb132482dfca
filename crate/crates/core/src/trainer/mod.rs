//! Independent deep Q-learning in four configurations.
//!
//! | mode          | networks                         | messages in the Q input        |
//! |---------------|----------------------------------|--------------------------------|
//! | PS+IQL        | one shared Q-network + agent ID  | none                           |
//! | NPS+IQL       | one Q-network per agent          | none                           |
//! | PS+IQL+COMM   | shared Q-network and encoder     | incoming, attached             |
//! | NPS+IQL+COMM  | per-agent Q-network and encoder  | incoming detached, own attached|
//!
//! Under NPS+IQL+COMM each agent trains on its own tape. All messages are
//! regenerated from the stored observations, incoming messages are detached,
//! and the agent's own message is fed back into its own Q-network. That last
//! edge is the only path from agent i's TD loss to its encoder parameters, so
//! every Q-network and every encoder gets exactly one update per batch, and
//! nothing of agent j ever appears on agent i's tape.
//!
//! [`Wiring`] exposes the two broken alternatives for diagnosis: without the
//! own message the encoders receive no gradient at all, and without detach
//! every encoder collects gradient from all N losses.

mod flow;
mod schedule;

pub use flow::{verify_gradient_flow, FlowSetup, GradientFlowReport, WiringReport};
pub use schedule::EpsilonSchedule;

use rand::Rng;

use crate::autodiff::{Grads, Tape, Var};
use crate::envs::{Env, EnvSpec};
use crate::nn::{
    clip_grad_norm, sync_target, CommNetwork, CommVars, QNetVars, Module, QNetwork, RmsProp,
    RmsPropConfig,
};
use crate::replay::{Episode, EpisodeBatch, ReplayBuffer};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Mode {
    pub param_sharing: bool,
    pub communication: bool,
}

impl Mode {
    pub const PS_IQL: Mode = Mode {
        param_sharing: true,
        communication: false,
    };
    pub const NPS_IQL: Mode = Mode {
        param_sharing: false,
        communication: false,
    };
    pub const PS_IQL_COMM: Mode = Mode {
        param_sharing: true,
        communication: true,
    };
    pub const NPS_IQL_COMM: Mode = Mode {
        param_sharing: false,
        communication: true,
    };
    pub const ALL: [Mode; 4] = [
        Mode::PS_IQL,
        Mode::NPS_IQL,
        Mode::PS_IQL_COMM,
        Mode::NPS_IQL_COMM,
    ];

    pub fn label(&self) -> &'static str {
        match (self.param_sharing, self.communication) {
            (true, false) => "PS+IQL",
            (false, false) => "NPS+IQL",
            (true, true) => "PS+IQL+COMM",
            (false, true) => "NPS+IQL+COMM",
        }
    }
}

/// How messages enter each agent's Q input during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Wiring {
    /// Append the agent's own message after the incoming ones.
    pub own_message: bool,
    /// Cut incoming messages from the graph before they enter the Q input.
    pub detach_incoming: bool,
}

impl Wiring {
    /// Detached incoming messages plus the attached own message.
    pub const PROPOSED: Wiring = Wiring {
        own_message: true,
        detach_incoming: true,
    };
    /// Incoming messages only: independent encoders never see a gradient.
    pub const INCOMING_ONLY: Wiring = Wiring {
        own_message: false,
        detach_incoming: true,
    };
    /// Own message plus attached incoming messages: every encoder collects
    /// gradient from every agent's loss.
    pub const ATTACHED: Wiring = Wiring {
        own_message: true,
        detach_incoming: false,
    };
    /// Shared-parameter communication: incoming messages, attached.
    pub const SHARED: Wiring = Wiring {
        own_message: false,
        detach_incoming: false,
    };

    pub fn default_for(mode: Mode) -> Wiring {
        if mode.param_sharing {
            Wiring::SHARED
        } else {
            Wiring::PROPOSED
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub hidden_dim: usize,
    pub msg_dim: usize,
    pub gamma: f64,
    pub optimizer: RmsPropConfig,
    /// Joint gradient-norm bound per update; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_interval: u64,
    pub epsilon: EpsilonSchedule,
    /// `None` picks [`Wiring::default_for`] the mode.
    pub wiring: Option<Wiring>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            hidden_dim: 64,
            msg_dim: 64,
            gamma: 0.99,
            optimizer: RmsPropConfig::default(),
            grad_clip: None,
            batch_size: 32,
            buffer_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            target_interval: 200,
            epsilon: EpsilonSchedule::default(),
            wiring: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.hidden_dim == 0 || self.msg_dim == 0 {
            return bad("hidden_dim and msg_dim must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.optimizer.lr > 0.0) || !(0.0..1.0).contains(&self.optimizer.rho) || !(self.optimizer.eps > 0.0) {
            return bad("optimizer needs lr > 0, rho in [0, 1) and eps > 0");
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return bad("grad_clip must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch_size must be positive and fit in the buffer");
        }
        if self.target_interval == 0 {
            return bad("target_interval must be positive");
        }
        self.epsilon.validate()
    }
}

/// Parameters of one learner (or of the single shared learner under PS).
#[derive(Clone, Debug)]
pub struct AgentBundle {
    pub policy: QNetwork,
    pub policy_target: QNetwork,
    pub comm: Option<CommNetwork>,
    pub comm_target: Option<CommNetwork>,
    pub policy_opt: RmsProp,
    pub comm_opt: Option<RmsProp>,
}

impl AgentBundle {
    fn new<R: Rng + ?Sized>(
        input_width: usize,
        spec: &EnvSpec,
        cfg: &TrainerConfig,
        communication: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let policy = QNetwork::new(input_width, cfg.hidden_dim, spec.n_actions, rng)?;
        let comm = if communication {
            Some(CommNetwork::new(spec.obs_dim, cfg.msg_dim, rng)?)
        } else {
            None
        };
        Ok(AgentBundle {
            policy_target: policy.frozen_copy(),
            policy_opt: RmsProp::for_module(&policy, cfg.optimizer),
            comm_target: comm.as_ref().map(CommNetwork::frozen_copy),
            comm_opt: comm.as_ref().map(|c| RmsProp::for_module(c, cfg.optimizer)),
            policy,
            comm,
        })
    }

    fn sync_targets(&mut self) -> Result<()> {
        sync_target(&self.policy, &mut self.policy_target)?;
        if let (Some(live), Some(target)) = (&self.comm, &mut self.comm_target) {
            sync_target(live, target)?;
        }
        Ok(())
    }
}

/// Statistics of one `train_batch` call, indexed by agent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStats {
    pub td_loss: Vec<f64>,
    /// ‖∇θ L‖ of the Q-network serving each agent.
    pub policy_grad_norm: Vec<f64>,
    /// Norm of the total gradient applied to each agent's encoder.
    pub comm_grad_norm: Vec<f64>,
    /// Optimizer steps taken on each agent's encoder in this batch.
    pub comm_updates: Vec<u32>,
    /// Return of the episode collected before this update, when known.
    pub episode_return: Option<f64>,
    pub epsilon: Option<f64>,
}

impl TrainStats {
    pub fn mean_td_loss(&self) -> f64 {
        if self.td_loss.is_empty() {
            return 0.0;
        }
        self.td_loss.iter().sum::<f64>() / self.td_loss.len() as f64
    }
}

/// Result of [`Trainer::act`].
#[derive(Clone, Debug, PartialEq)]
pub struct ActOutput {
    pub actions: Vec<usize>,
    /// Empty without communication.
    pub messages: Vec<Vec<f64>>,
    pub hidden: Vec<Vec<f64>>,
    pub q_values: Vec<Vec<f64>>,
}

/// Gradients of one loss with respect to every network of every bundle.
/// `None` marks tensors the loss does not reach.
#[derive(Clone, Debug, Default)]
pub(crate) struct LossGrads {
    pub loss: f64,
    pub policy: Vec<Vec<Option<Vec<f64>>>>,
    pub comm: Vec<Vec<Option<Vec<f64>>>>,
}

pub(crate) fn grads_norm(g: &[Option<Vec<f64>>]) -> f64 {
    g.iter()
        .flatten()
        .flat_map(|v| v.iter())
        .fold(0.0, |acc, x| acc + x * x)
        .sqrt()
}

pub(crate) fn grads_reached(g: &[Option<Vec<f64>>]) -> bool {
    g.iter().any(Option::is_some)
}

fn collect(vars: &[Var<'_>], grads: &Grads) -> Vec<Option<Vec<f64>>> {
    vars.iter().map(|v| grads.get(*v).map(<[f64]>::to_vec)).collect()
}

fn add_into<M: Module>(module: &mut M, grads: &[Option<Vec<f64>>]) -> Result<bool> {
    let mut any = false;
    for (p, g) in module.params_mut().into_iter().zip(grads) {
        if let Some(g) = g {
            p.accumulate_grad(g)?;
            any = true;
        }
    }
    Ok(any)
}

pub struct Trainer {
    mode: Mode,
    wiring: Wiring,
    cfg: TrainerConfig,
    spec: EnvSpec,
    input_width: usize,
    bundles: Vec<AgentBundle>,
    batches_trained: u64,
}

impl Trainer {
    pub fn new<R: Rng + ?Sized>(mode: Mode, spec: EnvSpec, cfg: TrainerConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if spec.n_agents == 0 || spec.obs_dim == 0 || spec.n_actions < 2 {
            return Err(Error::Invalid(format!("unusable environment spec {spec:?}")));
        }
        let wiring = cfg.wiring.unwrap_or_else(|| Wiring::default_for(mode));
        let input_width = Self::input_width_for(mode, wiring, &spec, cfg.msg_dim);
        let n_bundles = if mode.param_sharing { 1 } else { spec.n_agents };
        let bundles = (0..n_bundles)
            .map(|_| AgentBundle::new(input_width, &spec, &cfg, mode.communication, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trainer {
            mode,
            wiring,
            cfg,
            spec,
            input_width,
            bundles,
            batches_trained: 0,
        })
    }

    /// `obs_dim + [N one-hot ID under PS] + [(N-1) incoming + own] · msg_dim`.
    pub fn input_width_for(mode: Mode, wiring: Wiring, spec: &EnvSpec, msg_dim: usize) -> usize {
        let mut w = spec.obs_dim;
        if mode.param_sharing {
            w += spec.n_agents;
        }
        if mode.communication {
            let slots = spec.n_agents - 1 + usize::from(wiring.own_message);
            w += slots * msg_dim;
        }
        w
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn wiring(&self) -> Wiring {
        self.wiring
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn n_agents(&self) -> usize {
        self.spec.n_agents
    }

    pub fn bundles(&self) -> &[AgentBundle] {
        &self.bundles
    }

    pub fn bundles_mut(&mut self) -> &mut [AgentBundle] {
        &mut self.bundles
    }

    /// Index of the bundle acting for `agent`.
    pub fn bundle_index(&self, agent: usize) -> usize {
        if self.mode.param_sharing {
            0
        } else {
            agent
        }
    }

    pub fn bundle(&self, agent: usize) -> &AgentBundle {
        &self.bundles[self.bundle_index(agent)]
    }

    pub fn batches_trained(&self) -> u64 {
        self.batches_trained
    }

    pub fn initial_hidden(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.cfg.hidden_dim]; self.spec.n_agents]
    }

    /// Q input of `agent` for `rows` time-major rows:
    /// `[obs | ID (PS) | incoming messages in agent order | own message]`.
    fn assemble<'t>(
        &self,
        tape: &'t Tape,
        agent: usize,
        obs: Var<'t>,
        messages: &[Option<Var<'t>>],
        rows: usize,
    ) -> Result<Var<'t>> {
        let n = self.spec.n_agents;
        let mut parts = vec![obs];
        if self.mode.param_sharing {
            let mut id = vec![0.0; rows * n];
            for r in 0..rows {
                id[r * n + agent] = 1.0;
            }
            parts.push(tape.constant(id, &[rows, n])?);
        }
        if self.mode.communication {
            for (j, m) in messages.iter().enumerate() {
                if j != agent {
                    parts.push(m.ok_or_else(|| Error::Invalid(format!("missing message {j}")))?);
                }
            }
            if self.wiring.own_message {
                parts.push(
                    messages[agent].ok_or_else(|| Error::Invalid("missing own message".into()))?,
                );
            }
        }
        tape.concat(&parts, 1)
    }

    fn check_obs(&self, obs: &[Vec<f64>]) -> Result<()> {
        if obs.len() != self.spec.n_agents || obs.iter().any(|o| o.len() != self.spec.obs_dim) {
            return Err(Error::shape(
                "act",
                format!(
                    "expected {} observations of width {}",
                    self.spec.n_agents, self.spec.obs_dim
                ),
            ));
        }
        Ok(())
    }

    /// One decentralised decision step.
    ///
    /// With communication every agent first encodes its observation; the
    /// messages are then available to all teammates in the same step. Greedy
    /// with probability `1 - epsilon`, uniform otherwise. Nothing is recorded
    /// for differentiation.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[Vec<f64>],
        hidden: &[Vec<f64>],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<ActOutput> {
        let tape = Tape::inference();
        let actors = self.bind_actors(&tape);
        self.act_bound(&tape, &actors, obs, hidden, epsilon, rng)
    }

    fn bind_actors<'t>(&self, tape: &'t Tape) -> Actors<'t> {
        Actors {
            policy: self.bundles.iter().map(|b| b.policy.bind(tape)).collect(),
            comm: self
                .bundles
                .iter()
                .map(|b| b.comm.as_ref().map(|c| c.bind(tape)))
                .collect(),
        }
    }

    fn act_bound<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        actors: &Actors<'t>,
        obs: &[Vec<f64>],
        hidden: &[Vec<f64>],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<ActOutput> {
        self.check_obs(obs)?;
        let n = self.spec.n_agents;
        let h_dim = self.cfg.hidden_dim;
        if hidden.len() != n || hidden.iter().any(|h| h.len() != h_dim) {
            return Err(Error::shape("act", format!("expected {n} hidden states of width {h_dim}")));
        }
        let obs_vars: Vec<Var<'_>> = obs
            .iter()
            .map(|o| tape.constant(o.clone(), &[1, o.len()]))
            .collect::<Result<_>>()?;
        let mut messages: Vec<Option<Var<'_>>> = vec![None; n];
        if self.mode.communication {
            for j in 0..n {
                let comm = actors.comm[self.bundle_index(j)]
                    .as_ref()
                    .expect("comm mode has encoders");
                messages[j] = Some(comm.forward(obs_vars[j])?);
            }
        }
        let mut out = ActOutput {
            actions: Vec::with_capacity(n),
            messages: messages.iter().flatten().map(|m| m.to_vec()).collect(),
            hidden: Vec::with_capacity(n),
            q_values: Vec::with_capacity(n),
        };
        for i in 0..n {
            let input = self.assemble(tape, i, obs_vars[i], &messages, 1)?;
            let h = tape.constant(hidden[i].clone(), &[1, h_dim])?;
            let (q, h1) = actors.policy[self.bundle_index(i)].forward(input, h)?;
            let q = q.to_vec();
            let greedy = argmax(&q);
            let action = if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
                rng.gen_range(0..self.spec.n_actions)
            } else {
                greedy
            };
            out.actions.push(action);
            out.hidden.push(h1.to_vec());
            out.q_values.push(q);
        }
        Ok(out)
    }

    /// Rolls out one episode with ε-greedy actions.
    pub fn rollout<R: Rng + ?Sized>(&self, env: &mut dyn Env, epsilon: f64, rng: &mut R) -> Result<Episode> {
        let mut obs = env.reset();
        let mut hidden = self.initial_hidden();
        let mut episode = Episode::new(obs.clone());
        // parameters are bound once per episode, not once per step
        let tape = Tape::inference();
        let actors = self.bind_actors(&tape);
        loop {
            let step = self.act_bound(&tape, &actors, &obs, &hidden, epsilon, rng)?;
            let result = env.step(&step.actions)?;
            episode.record(step.actions, result.reward, result.terminated, result.obs.clone());
            obs = result.obs;
            hidden = step.hidden;
            if result.done {
                return Ok(episode);
            }
        }
    }

    /// Rolls out one episode, stores it, and returns its undiscounted return.
    pub fn run_episode<R: Rng + ?Sized>(
        &self,
        env: &mut dyn Env,
        buffer: &mut ReplayBuffer,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let episode = self.rollout(env, epsilon, rng)?;
        let ret = episode.total_return();
        buffer.push(episode)?;
        Ok(ret)
    }

    /// Mean greedy return over `episodes` fresh episodes.
    pub fn evaluate<R: Rng + ?Sized>(&self, env: &mut dyn Env, episodes: usize, rng: &mut R) -> Result<f64> {
        if episodes == 0 {
            return Err(Error::Invalid("evaluation needs at least one episode".into()));
        }
        let mut total = 0.0;
        for _ in 0..episodes {
            total += self.rollout(env, 0.0, rng)?.total_return();
        }
        Ok(total / episodes as f64)
    }

    /// Q-values of `agent` along a sequence of joint observations, starting
    /// from a zero hidden state.
    pub fn q_values(&self, agent: usize, joint_obs: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
        let mut hidden = self.initial_hidden();
        let mut out = Vec::with_capacity(joint_obs.len());
        let tape = Tape::inference();
        let actors = self.bind_actors(&tape);
        let mut unused = crate::rng::seeded(0);
        for obs in joint_obs {
            let step = self.act_bound(&tape, &actors, obs, &hidden, 0.0, &mut unused)?;
            out.push(step.q_values[agent].clone());
            hidden = step.hidden;
        }
        Ok(out)
    }

    /// TD targets `y = r + γ·(1 - terminal)·max_a' Q⁻(next)` for `agent`,
    /// `[max_len · batch]`, from the target Q-network and target encoders.
    fn td_targets(&self, batch: &EpisodeBatch, agent: usize) -> Result<Vec<f64>> {
        let (b, t_len, d) = (batch.batch, batch.max_len, batch.obs_dim);
        let rows = (t_len + 1) * b;
        let tape = Tape::inference();
        let obs: Vec<Var<'_>> = batch
            .obs
            .iter()
            .map(|o| tape.constant(o.clone(), &[rows, d]))
            .collect::<Result<_>>()?;
        let mut messages: Vec<Option<Var<'_>>> = vec![None; self.spec.n_agents];
        if self.mode.communication {
            for (j, m) in messages.iter_mut().enumerate() {
                let enc = self.bundle(j).comm_target.as_ref().expect("comm mode");
                *m = Some(enc.bind(&tape).forward(obs[j])?);
            }
        }
        let input = self.assemble(&tape, agent, obs[agent], &messages, rows)?;
        let (q_next, _) = self
            .bundle(agent)
            .policy_target
            .bind(&tape)
            .unroll(input, b)?;
        let (best, _) = q_next.max_with_index(1)?;
        let best = best.value();
        let gamma = self.cfg.gamma;
        Ok((0..t_len * b)
            .map(|k| {
                let bootstrap = (1.0 - batch.terminated[k]) * best[k + b];
                batch.rewards[k] + gamma * bootstrap
            })
            .collect())
    }

    /// `Σ mask·(y - Q(a))² / Σ mask` on `tape`.
    fn td_loss<'t>(
        &self,
        tape: &'t Tape,
        q: Var<'t>,
        actions: &[usize],
        targets: Vec<f64>,
        batch: &EpisodeBatch,
    ) -> Result<Var<'t>> {
        let n = targets.len();
        let chosen = q.gather(actions, 1)?;
        let y = tape.constant(targets, &[n])?;
        let mask = tape.constant(batch.mask.clone(), &[n])?;
        let td = y.sub(chosen)?;
        let count = batch.mask.iter().sum::<f64>().max(1.0);
        Ok(td.mul_elem(td)?.mul_elem(mask)?.sum().scale(1.0 / count))
    }

    fn empty_grads(&self) -> LossGrads {
        LossGrads {
            loss: 0.0,
            policy: self
                .bundles
                .iter()
                .map(|b| vec![None; b.policy.params().len()])
                .collect(),
            comm: self
                .bundles
                .iter()
                .map(|b| vec![None; b.comm.as_ref().map_or(0, |c| c.params().len())])
                .collect(),
        }
    }

    /// Agent `agent`'s TD loss on its own tape (independent learners) and
    /// the resulting gradients for every network it reaches.
    pub(crate) fn agent_loss_grads(
        &self,
        batch: &EpisodeBatch,
        agent: usize,
        targets: Vec<f64>,
    ) -> Result<LossGrads> {
        let wiring = self.wiring;
        let (b, t_len, d) = (batch.batch, batch.max_len, batch.obs_dim);
        let rows = t_len * b;
        let n = self.spec.n_agents;
        let tape = Tape::new();
        let policy = self.bundles[agent].policy.bind(&tape);
        let obs: Vec<Var<'_>> = batch
            .obs
            .iter()
            .map(|o| tape.constant(o[..rows * d].to_vec(), &[rows, d]))
            .collect::<Result<_>>()?;

        let mut comm_vars = vec![None; n];
        let mut messages: Vec<Option<Var<'_>>> = vec![None; n];
        if self.mode.communication {
            for j in 0..n {
                if j == agent && !wiring.own_message {
                    continue;
                }
                let vars = self.bundles[j].comm.as_ref().expect("comm mode").bind(&tape);
                let m = vars.forward(obs[j])?;
                messages[j] = Some(if j != agent && wiring.detach_incoming {
                    m.detach()
                } else {
                    m
                });
                comm_vars[j] = Some(vars);
            }
        }

        let input = self.assemble(&tape, agent, obs[agent], &messages, rows)?;
        let (q, _) = policy.unroll(input, b)?;
        let loss = self.td_loss(&tape, q, &batch.actions[agent], targets, batch)?;
        let grads = tape.backward(loss)?;

        let mut out = self.empty_grads();
        out.loss = loss.item();
        out.policy[agent] = collect(&policy.all(), &grads);
        for (j, vars) in comm_vars.iter().enumerate() {
            if let Some(vars) = vars {
                out.comm[j] = collect(&vars.all(), &grads);
            }
        }
        Ok(out)
    }

    /// Joint loss of all agents on one tape with the shared networks; also
    /// returns each agent's own loss value.
    fn shared_loss_grads(&self, batch: &EpisodeBatch, targets: Vec<Vec<f64>>) -> Result<(LossGrads, Vec<f64>)> {
        let (b, t_len, d) = (batch.batch, batch.max_len, batch.obs_dim);
        let rows = t_len * b;
        let n = self.spec.n_agents;
        let tape = Tape::new();
        let bundle = &self.bundles[0];
        let policy = bundle.policy.bind(&tape);
        let obs: Vec<Var<'_>> = batch
            .obs
            .iter()
            .map(|o| tape.constant(o[..rows * d].to_vec(), &[rows, d]))
            .collect::<Result<_>>()?;
        let comm = bundle.comm.as_ref().map(|c| c.bind(&tape));
        let mut messages: Vec<Option<Var<'_>>> = vec![None; n];
        if let Some(vars) = &comm {
            for j in 0..n {
                messages[j] = Some(vars.forward(obs[j])?);
            }
        }
        let mut losses = Vec::with_capacity(n);
        let mut total: Option<Var<'_>> = None;
        for (i, y) in targets.into_iter().enumerate() {
            let mut msgs = messages.clone();
            if self.wiring.detach_incoming {
                for (j, m) in msgs.iter_mut().enumerate() {
                    if j != i {
                        *m = m.map(|v| v.detach());
                    }
                }
            }
            let input = self.assemble(&tape, i, obs[i], &msgs, rows)?;
            let (q, _) = policy.unroll(input, b)?;
            let loss = self.td_loss(&tape, q, &batch.actions[i], y, batch)?;
            losses.push(loss.item());
            total = Some(match total {
                None => loss,
                Some(acc) => acc.add(loss)?,
            });
        }
        let total = total.expect("at least one agent").scale(1.0 / n as f64);
        let grads = tape.backward(total)?;
        let mut out = self.empty_grads();
        out.loss = total.item();
        out.policy[0] = collect(&policy.all(), &grads);
        if let Some(vars) = &comm {
            out.comm[0] = collect(&vars.all(), &grads);
        }
        Ok((out, losses))
    }

    fn clip_and_step(&mut self, bundle: usize, policy: bool, comm: bool) -> Result<()> {
        let clip = self.cfg.grad_clip;
        let b = &mut self.bundles[bundle];
        if let Some(max) = clip {
            let mut params: Vec<&mut crate::autodiff::Tensor> = Vec::new();
            if policy {
                params.extend(b.policy.params_mut());
            }
            if comm {
                if let Some(c) = b.comm.as_mut() {
                    params.extend(c.params_mut());
                }
            }
            clip_grad_norm(params, max);
        }
        if policy {
            b.policy_opt.step_module(&mut b.policy)?;
            b.policy.clear_grads();
        }
        if comm {
            if let (Some(c), Some(opt)) = (b.comm.as_mut(), b.comm_opt.as_mut()) {
                opt.step_module(c)?;
                c.clear_grads();
            }
        }
        Ok(())
    }

    /// One learning update from a sampled batch.
    ///
    /// Independent learners: every agent computes its loss on its own tape
    /// at the current parameters, then updates are applied. With detached
    /// incoming messages each network receives one step from its owner's
    /// loss; with attached incoming messages an encoder is stepped once per
    /// loss that reaches it. Shared learners: one joint loss, one step.
    pub fn train_batch(&mut self, batch: &EpisodeBatch) -> Result<TrainStats> {
        if batch.batch == 0 || batch.max_len == 0 {
            return Err(Error::Invalid("empty batch".into()));
        }
        if batch.n_agents != self.spec.n_agents || batch.obs_dim != self.spec.obs_dim {
            return Err(Error::shape(
                "train_batch",
                format!(
                    "batch has {} agents × {} features, trainer expects {} × {}",
                    batch.n_agents, batch.obs_dim, self.spec.n_agents, self.spec.obs_dim
                ),
            ));
        }
        let n = self.spec.n_agents;
        let targets = (0..n)
            .map(|i| self.td_targets(batch, i))
            .collect::<Result<Vec<_>>>()?;
        let mut stats = TrainStats {
            td_loss: vec![0.0; n],
            policy_grad_norm: vec![0.0; n],
            comm_grad_norm: vec![0.0; n],
            comm_updates: vec![0; n],
            ..Default::default()
        };

        if self.mode.param_sharing {
            let (grads, losses) = self.shared_loss_grads(batch, targets)?;
            stats.td_loss = losses;
            let pn = grads_norm(&grads.policy[0]);
            let cn = grads_norm(&grads.comm[0]);
            let b = &mut self.bundles[0];
            add_into(&mut b.policy, &grads.policy[0])?;
            let comm_reached = match b.comm.as_mut() {
                Some(c) => add_into(c, &grads.comm[0])?,
                None => false,
            };
            self.clip_and_step(0, true, comm_reached)?;
            stats.policy_grad_norm = vec![pn; n];
            stats.comm_grad_norm = vec![cn; n];
            stats.comm_updates = vec![u32::from(comm_reached); n];
        } else {
            let per_agent = targets
                .into_iter()
                .enumerate()
                .map(|(i, y)| self.agent_loss_grads(batch, i, y))
                .collect::<Result<Vec<_>>>()?;
            let mut applied: Vec<Vec<Option<Vec<f64>>>> = vec![Vec::new(); n];
            for (i, g) in per_agent.iter().enumerate() {
                stats.td_loss[i] = g.loss;
                stats.policy_grad_norm[i] = grads_norm(&g.policy[i]);
                add_into(&mut self.bundles[i].policy, &g.policy[i])?;
                let own_comm = match self.bundles[i].comm.as_mut() {
                    Some(c) => add_into(c, &g.comm[i])?,
                    None => false,
                };
                accumulate_applied(&mut applied[i], &g.comm[i]);
                self.clip_and_step(i, true, own_comm)?;
                stats.comm_updates[i] += u32::from(own_comm);
                // Attached incoming messages: agent i's loss also pushes on
                // every other encoder it reached, as a separate step.
                for j in (0..n).filter(|&j| j != i) {
                    if !grads_reached(&g.comm[j]) {
                        continue;
                    }
                    let c = self.bundles[j].comm.as_mut().expect("reached encoder exists");
                    add_into(c, &g.comm[j])?;
                    accumulate_applied(&mut applied[j], &g.comm[j]);
                    self.clip_and_step(j, false, true)?;
                    stats.comm_updates[j] += 1;
                }
            }
            for (i, a) in applied.iter().enumerate() {
                stats.comm_grad_norm[i] = grads_norm(a);
            }
        }
        self.batches_trained += 1;
        Ok(stats)
    }

    /// Hard-copies live parameters into all targets when
    /// `episode_counter` is a positive multiple of the target interval.
    pub fn maybe_sync_targets(&mut self, episode_counter: u64) -> Result<bool> {
        if episode_counter == 0 || episode_counter % self.cfg.target_interval != 0 {
            return Ok(false);
        }
        self.sync_targets()?;
        Ok(true)
    }

    pub fn sync_targets(&mut self) -> Result<()> {
        self.bundles.iter_mut().try_for_each(AgentBundle::sync_targets)
    }

    /// Collect one ε-greedy episode, store it, and train on a batch once the
    /// buffer holds enough episodes. `episode` counts from 0.
    pub fn train_episode<R: Rng + ?Sized>(
        &mut self,
        env: &mut dyn Env,
        buffer: &mut ReplayBuffer,
        episode: u64,
        explore_rng: &mut R,
        replay_rng: &mut R,
    ) -> Result<TrainStats> {
        let epsilon = self.cfg.epsilon.at(episode);
        let ret = self.run_episode(env, buffer, epsilon, explore_rng)?;
        let mut stats = if buffer.len() >= self.cfg.batch_size {
            let batch = buffer.sample(self.cfg.batch_size, replay_rng)?;
            self.train_batch(&batch)?
        } else {
            TrainStats::default()
        };
        self.maybe_sync_targets(episode + 1)?;
        stats.episode_return = Some(ret);
        stats.epsilon = Some(epsilon);
        Ok(stats)
    }
}

fn accumulate_applied(acc: &mut Vec<Option<Vec<f64>>>, g: &[Option<Vec<f64>>]) {
    if acc.is_empty() {
        acc.resize(g.len(), None);
    }
    for (a, x) in acc.iter_mut().zip(g) {
        if let Some(x) = x {
            match a {
                Some(a) => a.iter_mut().zip(x).for_each(|(p, q)| *p += q),
                None => *a = Some(x.clone()),
            }
        }
    }
}

struct Actors<'t> {
    policy: Vec<QNetVars<'t>>,
    comm: Vec<Option<CommVars<'t>>>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
