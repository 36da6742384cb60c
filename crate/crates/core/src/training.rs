//! DQN with a physics-informed loss.
//!
//! Each learning step combines three minibatches:
//!
//! * replayed transitions with targets `y = r` (terminal) or
//!   `y = r + max_a Q̂(s′, a)` from the target network (no discount), giving
//!   `L_D = mean (y − Q(s, a))²`;
//! * collocation points `(h, x)`, `h ~ U[0, τ_max]`, `x ∈ Ω_P`, giving
//!   `L_P = mean W_P²` with `W_P = ∂_s Q·f̃ + ½ Σ_k σ̃_kᵀ ∂²_s Q σ̃_k`;
//! * boundary points, half at `h = 0` inside `Ω_P` and half on the lateral
//!   boundary `Ω_B`, giving `L_B = mean (Q − l_ε)²`.
//!
//! `W_P` and `W_B` are evaluated at the greedy action, which is held fixed
//! while differentiating. The total `L_D + λ L_P + μ L_B` is minimized by one
//! optimizer step, then the target network moves by `θ̂ ← ηθ + (1 − η)θ̂`.

use std::collections::VecDeque;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{network_input, pde_directions, Environment};
use crate::qnet::{
    argmax, checkpoint_save, pde_residual_from_tape, Adjoint, InputScaling, NetworkSpec, OptimizerKind, Optimizer, QNetwork,
    QnetError, Seed, Tape,
};
use crate::rng::{domain, SeedTree, StreamRng};
use crate::sde::{step_augmented, AugmentedState, Policy, SdeError, Transition};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at episode {episode}: {report:?}")]
    NonFinite { episode: usize, report: LossReport },
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Qnet(#[from] QnetError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PdeGradMode {
    /// Differentiate the whole residual, including the Hessian term.
    #[default]
    Exact,
    /// Drop the second-order term from the parameter gradient.
    StopHessian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Number of episodes M.
    pub episodes: usize,
    pub replay_capacity: usize,
    pub batch_data: usize,
    pub batch_pde: usize,
    pub batch_boundary: usize,
    /// Weight λ of the PDE loss.
    pub lambda: f64,
    /// Weight μ of the boundary loss.
    pub mu: f64,
    /// Target smoothing η.
    pub eta: f64,
    pub learning_rate: f64,
    /// If set, the learning rate decays linearly to this value by the last episode.
    pub learning_rate_final: Option<f64>,
    pub optimizer: OptimizerKind,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which exploration decays linearly.
    pub epsilon_decay_fraction: f64,
    pub pde_grad_mode: PdeGradMode,
    /// Mollifier width ε of the boundary targets `l_ε`.
    pub boundary_epsilon: f64,
    /// Transitions stored before learning starts.
    pub learn_start: usize,
    /// Environment steps between learning steps.
    pub train_every: usize,
    pub moving_average_window: usize,
    /// Save a checkpoint every this many episodes (0 disables).
    pub checkpoint_every: usize,
    /// Record wall-clock time in the metrics (breaks byte reproducibility).
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            replay_capacity: 100_000,
            batch_data: 32,
            batch_pde: 32,
            batch_boundary: 32,
            lambda: 1e-4,
            mu: 0.1,
            eta: 0.005,
            learning_rate: 5e-4,
            learning_rate_final: None,
            optimizer: OptimizerKind::default(),
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.2,
            pde_grad_mode: PdeGradMode::Exact,
            boundary_epsilon: 0.05,
            learn_start: 1000,
            train_every: 4,
            moving_average_window: 500,
            checkpoint_every: 0,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.lambda >= 0.0 && self.mu >= 0.0) {
            return bad("lambda and mu must be non-negative");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if self.batch_data == 0 || self.batch_pde == 0 || self.batch_boundary == 0 {
            return bad("batch sizes must be >= 1");
        }
        if self.replay_capacity < self.batch_data {
            return bad("replay_capacity must hold at least one data batch");
        }
        if !(self.learning_rate > 0.0) || self.learning_rate_final.is_some_and(|l| !(l > 0.0)) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("exploration probabilities must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return bad("epsilon_decay_fraction must lie in [0, 1]");
        }
        if !(self.boundary_epsilon >= 0.0) {
            return bad("boundary_epsilon must be non-negative");
        }
        if self.train_every == 0 || self.moving_average_window == 0 {
            return bad("train_every and moving_average_window must be >= 1");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, episode: usize) -> f64 {
        match self.learning_rate_final {
            Some(end) if self.episodes > 1 => {
                let t = episode.min(self.episodes - 1) as f64 / (self.episodes - 1) as f64;
                self.learning_rate + t * (end - self.learning_rate)
            }
            _ => self.learning_rate,
        }
    }

    /// Exploration probability at `episode` (0-based).
    pub fn exploration(&self, episode: usize) -> f64 {
        let decay = self.epsilon_decay_fraction * self.episodes as f64;
        if decay <= 0.0 || episode as f64 >= decay {
            return self.epsilon_end;
        }
        let t = episode as f64 / decay;
        self.epsilon_start + t * (self.epsilon_end - self.epsilon_start)
    }
}

/// FIFO ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Distinct indices, uniformly without replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut StreamRng) -> Vec<usize> {
        index::sample(rng, self.items.len(), batch.min(self.items.len())).into_vec()
    }

    pub fn sample(&self, batch: usize, rng: &mut StreamRng) -> Vec<&Transition> {
        self.sample_indices(batch, rng).into_iter().map(|i| &self.items[i]).collect()
    }
}

/// P_D: the environment's episode start distribution.
pub fn sample_initial_state_pd(env: &dyn Environment, rng: &mut StreamRng) -> AugmentedState {
    env.sample_initial(rng)
}

/// P_P: `h ~ U[0, τ_max]`, `x` uniform on Ω_P.
pub fn sample_collocation_pp(env: &dyn Environment, rng: &mut StreamRng) -> AugmentedState {
    let u: f64 = rng.random();
    let h = u * env.tau_max();
    AugmentedState::new(h, env.domains().collocation.sample(rng))
}

/// Which half of the P_B mixture a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryBranch {
    /// `h = 0`, `x ∈ Ω_P`.
    Terminal,
    /// `h ~ U[0, τ_max]`, `x ∈ Ω_B`.
    Lateral,
}

/// P_B: an equal mixture of the terminal-time and lateral boundaries.
pub fn sample_boundary_pb(env: &dyn Environment, rng: &mut StreamRng) -> (AugmentedState, BoundaryBranch) {
    if rng.random::<bool>() {
        (AugmentedState::new(0.0, env.domains().collocation.sample(rng)), BoundaryBranch::Terminal)
    } else {
        let u: f64 = rng.random();
        (
            AugmentedState::new(u * env.tau_max(), env.domains().boundary.sample(rng)),
            BoundaryBranch::Lateral,
        )
    }
}

fn input_of(env: &dyn Environment, s: &AugmentedState) -> Vec<f64> {
    let mut v = Vec::with_capacity(1 + env.feature_dim());
    network_input(env, s, &mut v);
    v
}

/// `y_j = r_j` for terminal transitions, else `r_j + max_a Q̂(s′_j, a)`.
pub fn dqn_targets(env: &dyn Environment, batch: &[&Transition], target: &QNetwork) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                t.reward
            } else {
                let q = target.forward(&input_of(env, &t.s_next)).expect("input matches network");
                t.reward + q.into_iter().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect()
}

/// With probability `eps` a uniform action, otherwise `greedy()`.
pub fn epsilon_greedy(eps: f64, num_actions: usize, rng: &mut StreamRng, greedy: impl FnOnce() -> usize) -> usize {
    if rng.random::<f64>() < eps {
        rng.random_range(0..num_actions)
    } else {
        greedy()
    }
}

/// Acts greedily with respect to a network.
pub struct GreedyPolicy<'a> {
    pub net: &'a QNetwork,
    pub env: &'a dyn Environment,
}

impl Policy for GreedyPolicy<'_> {
    fn act(&self, s: &AugmentedState) -> usize {
        greedy(self.net, &input_of(self.env, s))
    }
}

/// `mean (y_j − Q(s_j, a_j))²`.
pub fn loss_data(env: &dyn Environment, net: &QNetwork, batch: &[&Transition], targets: &[f64]) -> f64 {
    let sum: f64 = batch
        .iter()
        .zip(targets)
        .map(|(t, y)| {
            let q = net.forward(&input_of(env, &t.s)).expect("input matches network")[t.action];
            (y - q) * (y - q)
        })
        .sum();
    sum / batch.len() as f64
}

/// `W_P` at `(s, action)`.
pub fn pde_residual_wp(env: &dyn Environment, net: &QNetwork, s: &AugmentedState, action: usize) -> f64 {
    let (drift, noise) = pde_directions(env, &s.state, action);
    net.pde_operator(&input_of(env, s), action, &drift, &noise).expect("input matches network")
}

fn greedy(net: &QNetwork, input: &[f64]) -> usize {
    argmax(&net.forward(input).expect("input matches network"))
}

/// `mean W_P²` at greedy actions.
pub fn loss_pde(env: &dyn Environment, net: &QNetwork, batch: &[AugmentedState]) -> f64 {
    let sum: f64 = batch
        .iter()
        .map(|s| {
            let a = greedy(net, &input_of(env, s));
            pde_residual_wp(env, net, s, a).powi(2)
        })
        .sum();
    sum / batch.len() as f64
}

/// `mean (Q(s, a*) − l_ε(x))²` at greedy actions.
pub fn loss_boundary(env: &dyn Environment, net: &QNetwork, batch: &[AugmentedState], epsilon: f64) -> f64 {
    let sum: f64 = batch
        .iter()
        .map(|s| {
            let input = input_of(env, s);
            let q = net.forward(&input).expect("input matches network");
            let w = q[argmax(&q)] - env.safe_set().mollifier(&s.state, epsilon);
            w * w
        })
        .sum();
    sum / batch.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossReport {
    pub l_d: f64,
    pub l_p: f64,
    pub l_b: f64,
    /// `l_d + λ l_p + μ l_b`.
    pub total: f64,
    pub mean_abs_wp: f64,
    pub mean_abs_wb: f64,
    pub mean_target: f64,
}

/// Everything a learning step needs besides the networks.
pub struct Learner {
    pub config: TrainConfig,
    optimizer: Optimizer,
    tape: Tape,
    adjoint: Adjoint,
    grad: Vec<f64>,
    input: Vec<f64>,
}

impl Learner {
    pub fn new(config: TrainConfig, num_params: usize) -> Self {
        Self {
            optimizer: Optimizer::new(config.optimizer, config.learning_rate, num_params),
            config,
            tape: Tape::new(),
            adjoint: Adjoint::default(),
            grad: vec![0.0; num_params],
            input: Vec::new(),
        }
    }

    /// Value and θ-gradient of `L_D + λ L_P + μ L_B` on the given batches.
    pub fn loss_and_gradient(
        &mut self,
        env: &dyn Environment,
        net: &QNetwork,
        target: &QNetwork,
        data: &[&Transition],
        pde: &[AugmentedState],
        boundary: &[AugmentedState],
    ) -> LossReport {
        let cfg = &self.config;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut rep = LossReport::default();

        let targets = dqn_targets(env, data, target);
        let nd = data.len() as f64;
        for (t, &y) in data.iter().zip(&targets) {
            network_input(env, &t.s, &mut self.input);
            net.record(&mut self.tape, &self.input, &[]);
            let q = self.tape.output()[t.action];
            rep.l_d += (y - q) * (y - q) / nd;
            rep.mean_target += y / nd;
            let seed = Seed {
                action: t.action,
                c0: -2.0 * (y - q) / nd,
                c1: &[],
                c2: &[],
            };
            net.backward(&self.tape, seed, &mut self.adjoint, Some(&mut self.grad), None);
        }

        if cfg.lambda > 0.0 || cfg.mu > 0.0 {
            let np = pde.len() as f64;
            let mut c1 = Vec::new();
            let mut c2 = Vec::new();
            for s in pde {
                network_input(env, s, &mut self.input);
                net.record(&mut self.tape, &self.input, &[]);
                let a = argmax(self.tape.output());
                let (drift, noise) = pde_directions(env, &s.state, a);
                let mut dirs: Vec<&[f64]> = vec![&drift];
                dirs.extend(noise.iter().map(|c| c.as_slice()));
                net.record(&mut self.tape, &self.input, &dirs);
                let w = pde_residual_from_tape(&self.tape, a);
                rep.l_p += w * w / np;
                rep.mean_abs_wp += w.abs() / np;
                if cfg.lambda > 0.0 {
                    let k = 2.0 * cfg.lambda * w / np;
                    c1.clear();
                    c1.resize(dirs.len(), 0.0);
                    c1[0] = k;
                    c2.clear();
                    c2.resize(dirs.len(), 0.0);
                    if cfg.pde_grad_mode == PdeGradMode::Exact {
                        c2[1..].iter_mut().for_each(|c| *c = 0.5 * k);
                    }
                    let seed = Seed {
                        action: a,
                        c0: 0.0,
                        c1: &c1,
                        c2: &c2,
                    };
                    net.backward(&self.tape, seed, &mut self.adjoint, Some(&mut self.grad), None);
                }
            }

            let nb = boundary.len() as f64;
            for s in boundary {
                network_input(env, s, &mut self.input);
                net.record(&mut self.tape, &self.input, &[]);
                let a = argmax(self.tape.output());
                let w = self.tape.output()[a] - env.safe_set().mollifier(&s.state, cfg.boundary_epsilon);
                rep.l_b += w * w / nb;
                rep.mean_abs_wb += w.abs() / nb;
                if cfg.mu > 0.0 {
                    let seed = Seed {
                        action: a,
                        c0: 2.0 * cfg.mu * w / nb,
                        c1: &[],
                        c2: &[],
                    };
                    net.backward(&self.tape, seed, &mut self.adjoint, Some(&mut self.grad), None);
                }
            }
        }
        rep.total = rep.l_d + cfg.lambda * rep.l_p + cfg.mu * rep.l_b;
        rep
    }

    pub fn gradient(&self) -> &[f64] {
        &self.grad
    }

    /// One optimizer step on the online network and a soft target update.
    pub fn apply(&mut self, net: &mut QNetwork, target: &mut QNetwork) {
        self.optimizer.step(&mut net.params, &self.grad);
        target.soft_update_from(net, self.config.eta);
    }
}

/// Per-episode metrics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub steps: usize,
    pub reward: f64,
    pub moving_avg: f64,
    /// `max_a Q(s_0, a)` at the episode start, before the episode's updates.
    pub q_init: f64,
    pub q_init_moving_avg: f64,
    /// Mean losses over the episode's learning steps (`None` before learning).
    pub losses: Option<LossReport>,
    pub eps_greedy: f64,
    pub wall_time: Option<f64>,
}

pub const METRICS_COLUMNS: [&str; 12] = [
    "episode",
    "steps",
    "reward",
    "moving_avg",
    "q_init",
    "q_init_moving_avg",
    "L_D",
    "L_P",
    "L_B",
    "loss",
    "eps_greedy",
    "wall_time",
];

impl EpisodeMetrics {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let l = self.losses;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.steps,
            self.reward,
            self.moving_avg,
            self.q_init,
            self.q_init_moving_avg,
            opt(l.map(|r| r.l_d)),
            opt(l.map(|r| r.l_p)),
            opt(l.map(|r| r.l_b)),
            opt(l.map(|r| r.total)),
            self.eps_greedy,
            opt(self.wall_time)
        )
    }
}

/// Receives training progress.
pub trait TrainSink {
    fn episode(&mut self, metrics: &EpisodeMetrics, net: &QNetwork) -> Result<(), TrainError>;
}

pub struct NullSink;

impl TrainSink for NullSink {
    fn episode(&mut self, _: &EpisodeMetrics, _: &QNetwork) -> Result<(), TrainError> {
        Ok(())
    }
}

/// Writes `metrics.csv` and periodic checkpoints into a run directory.
pub struct FileSink {
    metrics: BufWriter<fs::File>,
    checkpoint_dir: PathBuf,
    checkpoint_every: usize,
}

impl FileSink {
    pub fn create(run_dir: &Path, checkpoint_every: usize) -> Result<Self, TrainError> {
        fs::create_dir_all(run_dir)?;
        let checkpoint_dir = run_dir.join("checkpoints");
        if checkpoint_every > 0 {
            fs::create_dir_all(&checkpoint_dir)?;
        }
        let mut metrics = BufWriter::new(fs::File::create(run_dir.join("metrics.csv"))?);
        writeln!(metrics, "{}", METRICS_COLUMNS.join(","))?;
        Ok(Self {
            metrics,
            checkpoint_dir,
            checkpoint_every,
        })
    }

    pub fn finish(mut self) -> Result<(), TrainError> {
        self.metrics.flush()?;
        Ok(())
    }
}

impl TrainSink for FileSink {
    fn episode(&mut self, m: &EpisodeMetrics, net: &QNetwork) -> Result<(), TrainError> {
        writeln!(self.metrics, "{}", m.csv_row())?;
        if self.checkpoint_every > 0 && (m.episode + 1) % self.checkpoint_every == 0 {
            self.metrics.flush()?;
            checkpoint_save(net, &self.checkpoint_dir.join(format!("episode_{:07}.ckpt", m.episode + 1)))?;
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    pub net: QNetwork,
    pub target: QNetwork,
    pub final_moving_avg: f64,
    pub episodes: usize,
    pub transitions: usize,
    pub learn_steps: usize,
}

/// Network for `env` with inputs `[h, features]` scaled from the declared ranges.
pub fn init_network(env: &dyn Environment, hidden_layers: usize, hidden_width: usize, seeds: &SeedTree) -> Result<QNetwork, QnetError> {
    let spec = NetworkSpec {
        input_dim: 1 + env.feature_dim(),
        hidden_layers,
        hidden_width,
        output_dim: env.num_actions(),
    };
    let scaling = InputScaling::from_ranges(env.tau_max(), &env.feature_ranges());
    let mut names = vec!["h".to_string()];
    names.extend(env.feature_names());
    QNetwork::new(spec, scaling, names, &mut seeds.stream(domain::NETWORK_INIT, 0))
}

/// Runs Algorithm-1 style training from `net`.
///
/// Episode `i` draws its start and dynamics noise from stream
/// `(EPISODE, i)` and its exploration from `(EXPLORATION, i)`; replay,
/// collocation and boundary batches come from single streams consumed in
/// order. The run is a deterministic function of the seed tree.
pub fn train(
    env: &dyn Environment,
    mut net: QNetwork,
    config: &TrainConfig,
    seeds: &SeedTree,
    sink: &mut dyn TrainSink,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if net.spec.input_dim != 1 + env.feature_dim() || net.spec.output_dim != env.num_actions() {
        return Err(TrainError::Config(format!(
            "network shape {}→{} does not match environment {}→{}",
            net.spec.input_dim,
            net.spec.output_dim,
            1 + env.feature_dim(),
            env.num_actions()
        )));
    }
    let mut target = net.clone();
    let mut learner = Learner::new(config.clone(), net.num_params());
    let mut memory = ReplayMemory::new(config.replay_capacity);
    let mut replay_rng = seeds.stream(domain::REPLAY, 0);
    let mut colloc_rng = seeds.stream(domain::COLLOCATION, 0);
    let mut boundary_rng = seeds.stream(domain::BOUNDARY, 0);
    let integ = env.integrator();
    let na = env.num_actions();
    let mut window: VecDeque<(f64, f64)> = VecDeque::with_capacity(config.moving_average_window);
    let (mut sum_r, mut sum_q) = (0.0, 0.0);
    let mut env_steps = 0usize;
    let mut learn_steps = 0usize;
    let mut input = Vec::new();
    let start = Instant::now();
    let mut moving_avg = 0.0;

    for ep in 0..config.episodes {
        let mut rng = seeds.stream(domain::EPISODE, ep as u64);
        let mut explore = seeds.stream(domain::EXPLORATION, ep as u64);
        let eps = config.exploration(ep);
        learner.optimizer.learning_rate = config.learning_rate_at(ep);
        let mut s = env.sample_initial(&mut rng);
        network_input(env, &s, &mut input);
        let q_init = net.forward(&input)?.into_iter().fold(f64::NEG_INFINITY, f64::max);
        let mut reward = 0.0;
        let mut steps = 0;
        let mut loss_sum = LossReport::default();
        let mut losses_n = 0usize;

        while !s.is_absorbing(env.safe_set()) {
            let a = epsilon_greedy(eps, na, &mut explore, || {
                network_input(env, &s, &mut input);
                argmax(&net.forward(&input).expect("input matches network"))
            });
            let out = step_augmented(env.system(), env.safe_set(), &s, a, &integ, env.reward_kind(), &mut rng)?;
            reward += out.reward;
            steps += 1;
            env_steps += 1;
            memory.push(Transition {
                s: s.clone(),
                action: a,
                reward: out.reward,
                s_next: out.next.clone(),
                terminal: out.terminal,
            });

            if memory.len() >= config.learn_start.max(config.batch_data) && env_steps % config.train_every == 0 {
                let batch = memory.sample(config.batch_data, &mut replay_rng);
                let pde: Vec<AugmentedState> = (0..config.batch_pde).map(|_| sample_collocation_pp(env, &mut colloc_rng)).collect();
                let bnd: Vec<AugmentedState> =
                    (0..config.batch_boundary).map(|_| sample_boundary_pb(env, &mut boundary_rng).0).collect();
                let rep = learner.loss_and_gradient(env, &net, &target, &batch, &pde, &bnd);
                if !rep.total.is_finite() || learner.gradient().iter().any(|g| !g.is_finite()) {
                    return Err(TrainError::NonFinite { episode: ep, report: rep });
                }
                learner.apply(&mut net, &mut target);
                learn_steps += 1;
                accumulate(&mut loss_sum, &rep);
                losses_n += 1;
            }
            if out.terminal {
                break;
            }
            s = out.next;
        }

        if window.len() == config.moving_average_window {
            let (r, q) = window.pop_front().unwrap();
            sum_r -= r;
            sum_q -= q;
        }
        window.push_back((reward, q_init));
        sum_r += reward;
        sum_q += q_init;
        // Recompute periodically to keep the running sums from drifting.
        if ep % 4096 == 4095 {
            sum_r = window.iter().map(|w| w.0).sum();
            sum_q = window.iter().map(|w| w.1).sum();
        }
        moving_avg = sum_r / window.len() as f64;
        let metrics = EpisodeMetrics {
            episode: ep,
            steps,
            reward,
            moving_avg,
            q_init,
            q_init_moving_avg: sum_q / window.len() as f64,
            losses: (losses_n > 0).then(|| scale(&loss_sum, 1.0 / losses_n as f64)),
            eps_greedy: eps,
            wall_time: config.log_wall_time.then(|| start.elapsed().as_secs_f64()),
        };
        sink.episode(&metrics, &net)?;
    }
    Ok(TrainOutcome {
        net,
        target,
        final_moving_avg: moving_avg,
        episodes: config.episodes,
        transitions: env_steps,
        learn_steps,
    })
}

fn accumulate(acc: &mut LossReport, r: &LossReport) {
    acc.l_d += r.l_d;
    acc.l_p += r.l_p;
    acc.l_b += r.l_b;
    acc.total += r.total;
    acc.mean_abs_wp += r.mean_abs_wp;
    acc.mean_abs_wb += r.mean_abs_wb;
    acc.mean_target += r.mean_target;
}

fn scale(r: &LossReport, k: f64) -> LossReport {
    LossReport {
        l_d: r.l_d * k,
        l_p: r.l_p * k,
        l_b: r.l_b * k,
        total: r.total * k,
        mean_abs_wp: r.mean_abs_wp * k,
        mean_abs_wb: r.mean_abs_wb * k,
        mean_target: r.mean_target * k,
    }
}
