//! Controlled SDEs, their Euler–Maruyama discretization, and the augmented
//! episodic MDP whose undiscounted return equals the safety probability.
//!
//! An augmented state `s = (h, x)` carries the remaining horizon `h` next to
//! the system state `x`. A state is absorbing when `h < 0` or `x` has left the
//! safe set. The reward `1[h ∈ [0, Δt)]` (optionally weighted by the mollifier
//! `l_ε(x)`) is paid exactly once, on the last control step before the horizon
//! runs out, so the expected return of an episode is the probability that the
//! sampled path stayed safe at every control instant.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{domain, SeedTree, StreamRng};

/// Slack used when comparing remaining horizons against the control grid.
/// Horizons are produced by repeated subtraction of `Δt` and drift by a few ulps.
pub const HORIZON_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("integration diverged: non-finite state {state:?}")]
    IntegrationDiverged { state: Vec<f64> },
    #[error("attempted to step an absorbing state (h = {horizon}, state = {state:?})")]
    AbsorbingStep { horizon: f64, state: Vec<f64> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `dX = f(X, u) dt + σ(X, u) dW` over a finite action set.
pub trait SdeSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Writes `f(x, u_action)` into `out` (length `state_dim`).
    fn drift(&self, x: &[f64], action: usize, out: &mut [f64]);
    /// Writes `σ(x, u_action)` row-major (`state_dim × noise_dim`) into `out`.
    fn diffusion(&self, x: &[f64], action: usize, out: &mut [f64]);
    /// Projection applied after every integration substep (e.g. speed floors).
    fn project(&self, _x: &mut [f64]) {}
}

/// Safe set `C` described through a signed distance (positive inside).
pub trait SafeSet: Send + Sync {
    fn contains(&self, x: &[f64]) -> bool;
    fn signed_distance(&self, x: &[f64]) -> f64;

    /// `l_ε(x) = max(1 - dist(x, C_ε)/ε, 0)`; the indicator of `C` when `ε = 0`.
    ///
    /// The default is exact for sets whose shrunk set `C_ε` is the
    /// `signed_distance ≥ ε` superlevel set with `dist(x, C_ε) = ε - sd(x)`
    /// (slabs, intervals). Other shapes override it.
    fn mollifier(&self, x: &[f64], epsilon: f64) -> f64 {
        if epsilon <= 0.0 {
            return if self.contains(x) { 1.0 } else { 0.0 };
        }
        ramp(self.signed_distance(x), epsilon)
    }
}

/// Linear ramp of a signed distance: 0 at `sd ≤ 0`, 1 at `sd ≥ ε`.
pub fn ramp(signed_distance: f64, epsilon: f64) -> f64 {
    (signed_distance / epsilon).clamp(0.0, 1.0)
}

/// `{x : |x[axis]| < half_width}` (open) or `≤` (closed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSafeSet {
    pub axis: usize,
    pub half_width: f64,
    pub closed: bool,
}

impl SafeSet for BandSafeSet {
    fn contains(&self, x: &[f64]) -> bool {
        let v = x[self.axis].abs();
        if self.closed {
            v <= self.half_width
        } else {
            v < self.half_width
        }
    }

    fn signed_distance(&self, x: &[f64]) -> f64 {
        self.half_width - x[self.axis].abs()
    }
}

/// Axis-aligned box. Open boxes exclude their faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSafeSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub closed: bool,
}

impl SafeSet for BoxSafeSet {
    fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&l, &h))| {
            if self.closed {
                v >= l && v <= h
            } else {
                v > l && v < h
            }
        })
    }

    fn signed_distance(&self, x: &[f64]) -> f64 {
        let mut inside = f64::INFINITY;
        let mut outside_sq = 0.0;
        for (&v, (&l, &h)) in x.iter().zip(self.lo.iter().zip(&self.hi)) {
            let d = (v - l).min(h - v);
            inside = inside.min(d);
            if d < 0.0 {
                outside_sq += d * d;
            }
        }
        if outside_sq > 0.0 {
            -outside_sq.sqrt()
        } else {
            inside
        }
    }

    fn mollifier(&self, x: &[f64], epsilon: f64) -> f64 {
        if epsilon <= 0.0 {
            return if self.contains(x) { 1.0 } else { 0.0 };
        }
        if !self.contains(x) {
            return 0.0;
        }
        // Euclidean distance to the box shrunk by ε.
        let dist_sq: f64 = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&l, &h))| {
                let gap = (l + epsilon - v).max(v - (h - epsilon)).max(0.0);
                gap * gap
            })
            .sum();
        (1.0 - dist_sq.sqrt() / epsilon).max(0.0)
    }
}

/// Integration settings for one control interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    /// Control interval Δt in seconds.
    pub dt: f64,
    /// Euler–Maruyama substeps per control interval; the action is held.
    pub substeps: usize,
}

impl Integrator {
    pub fn new(dt: f64, substeps: usize) -> Result<Self, SdeError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SdeError::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if substeps == 0 {
            return Err(SdeError::InvalidArgument("substeps must be >= 1".into()));
        }
        Ok(Self { dt, substeps })
    }

    /// Number of control steps `N(τ) = ⌊τ/Δt⌋` covered by a horizon.
    pub fn steps_for_horizon(&self, tau: f64) -> usize {
        ((tau + HORIZON_TOL) / self.dt).floor().max(0.0) as usize
    }
}

/// Advance `x` by one control interval with the action held constant.
///
/// Each substep of length `h = Δt / substeps` draws `noise_dim` standard
/// normals `z` from `rng` (in order) and applies `x += f h + σ √h z`.
pub fn step_euler_maruyama(
    system: &dyn SdeSystem,
    x: &[f64],
    action: usize,
    integrator: &Integrator,
    rng: &mut StreamRng,
) -> Result<Vec<f64>, SdeError> {
    let n = system.state_dim();
    let w = system.noise_dim();
    let mut state = x.to_vec();
    let mut f = vec![0.0; n];
    let mut sigma = vec![0.0; n * w];
    let mut z = vec![0.0; w];
    let h = integrator.dt / integrator.substeps as f64;
    let sqrt_h = h.sqrt();
    for _ in 0..integrator.substeps {
        system.drift(&state, action, &mut f);
        if w > 0 {
            system.diffusion(&state, action, &mut sigma);
            for zi in z.iter_mut() {
                *zi = rng.sample::<f64, _>(StandardNormal);
            }
        }
        for i in 0..n {
            let mut noise = 0.0;
            for k in 0..w {
                noise += sigma[i * w + k] * z[k];
            }
            state[i] += f[i] * h + noise * sqrt_h;
        }
        system.project(&mut state);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(SdeError::IntegrationDiverged { state });
        }
    }
    Ok(state)
}

/// `(h, x)`: remaining horizon and system state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub horizon: f64,
    pub state: Vec<f64>,
}

impl AugmentedState {
    pub fn new(horizon: f64, state: Vec<f64>) -> Self {
        Self { horizon, state }
    }

    pub fn is_absorbing(&self, safe_set: &dyn SafeSet) -> bool {
        self.horizon < -HORIZON_TOL || !safe_set.contains(&self.state)
    }

    /// `h ∈ [0, Δt)`: the only states that pay reward.
    pub fn in_goal(&self, dt: f64) -> bool {
        in_goal(self.horizon, dt)
    }
}

pub fn in_goal(horizon: f64, dt: f64) -> bool {
    horizon >= -HORIZON_TOL && horizon < dt - HORIZON_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: AugmentedState,
    pub action: usize,
    pub reward: f64,
    pub s_next: AugmentedState,
    pub terminal: bool,
}

/// Reward paid on the goal step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardKind {
    #[default]
    Binary,
    Mollified { epsilon: f64 },
}

pub fn reward_binary(s: &AugmentedState, safe_set: &dyn SafeSet, dt: f64) -> f64 {
    if s.in_goal(dt) && safe_set.contains(&s.state) {
        1.0
    } else {
        0.0
    }
}

/// `1[h ∈ [0, Δt)] · l_ε(x)`.
pub fn reward_mollified(s: &AugmentedState, safe_set: &dyn SafeSet, epsilon: f64, dt: f64) -> f64 {
    if s.in_goal(dt) {
        safe_set.mollifier(&s.state, epsilon)
    } else {
        0.0
    }
}

pub fn reward(kind: RewardKind, s: &AugmentedState, safe_set: &dyn SafeSet, dt: f64) -> f64 {
    match kind {
        RewardKind::Binary => reward_binary(s, safe_set, dt),
        RewardKind::Mollified { epsilon } => reward_mollified(s, safe_set, epsilon, dt),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: AugmentedState,
    pub reward: f64,
    pub terminal: bool,
}

/// One transition of the augmented MDP.
///
/// The reward is evaluated on `s` (which is never absorbing here), and the
/// episode terminates either when `s_next` is absorbing or when `s` was the
/// goal step; in the latter case `s_next.h < 0` so both coincide.
pub fn step_augmented(
    system: &dyn SdeSystem,
    safe_set: &dyn SafeSet,
    s: &AugmentedState,
    action: usize,
    integrator: &Integrator,
    reward_kind: RewardKind,
    rng: &mut StreamRng,
) -> Result<StepOutcome, SdeError> {
    if s.is_absorbing(safe_set) {
        return Err(SdeError::AbsorbingStep {
            horizon: s.horizon,
            state: s.state.clone(),
        });
    }
    let r = reward(reward_kind, s, safe_set, integrator.dt);
    let x_next = step_euler_maruyama(system, &s.state, action, integrator, rng)?;
    let next = AugmentedState::new(s.horizon - integrator.dt, x_next);
    let terminal = s.in_goal(integrator.dt) || next.is_absorbing(safe_set);
    Ok(StepOutcome {
        next,
        reward: r,
        terminal,
    })
}

/// Markov policy over augmented states.
pub trait Policy: Sync {
    fn act(&self, s: &AugmentedState) -> usize;
}

impl<F> Policy for F
where
    F: Fn(&AugmentedState) -> usize + Sync,
{
    fn act(&self, s: &AugmentedState) -> usize {
        self(s)
    }
}

/// A fixed action, regardless of state.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub usize);

impl Policy for ConstantPolicy {
    fn act(&self, _s: &AugmentedState) -> usize {
        self.0
    }
}

/// Monte-Carlo estimate with a normal-approximation 95% half width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub half_width_95: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_successes(successes: f64, n: usize) -> Self {
        let p = successes / n as f64;
        Self {
            estimate: p,
            half_width_95: 1.96 * (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    /// Binomial standard error.
    pub fn std_error(&self) -> f64 {
        (self.estimate * (1.0 - self.estimate) / self.n as f64).sqrt()
    }
}

/// Whether one sampled path starting at `s0` stays in `C` at every control
/// instant `k = 0..=N(h0)`.
pub fn sample_path_safe(
    system: &dyn SdeSystem,
    safe_set: &dyn SafeSet,
    policy: &dyn Policy,
    s0: &AugmentedState,
    integrator: &Integrator,
    rng: &mut StreamRng,
) -> Result<bool, SdeError> {
    if s0.horizon < -HORIZON_TOL || !safe_set.contains(&s0.state) {
        return Ok(false);
    }
    let steps = integrator.steps_for_horizon(s0.horizon);
    let mut s = s0.clone();
    for _ in 0..steps {
        let a = policy.act(&s);
        let x = step_euler_maruyama(system, &s.state, a, integrator, rng)?;
        s = AugmentedState::new(s.horizon - integrator.dt, x);
        if !safe_set.contains(&s.state) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Monte-Carlo safety probability `Ψ^π(τ, x)` from the path definition.
///
/// Rollout `i` draws from stream `(ROLLOUT, stream_offset + i)`, so results do
/// not depend on how rollouts are scheduled across threads.
pub fn mc_safety_probability(
    system: &dyn SdeSystem,
    safe_set: &dyn SafeSet,
    policy: &dyn Policy,
    s0: &AugmentedState,
    integrator: &Integrator,
    n_rollouts: usize,
    seeds: &SeedTree,
    stream_offset: u64,
) -> Result<McEstimate, SdeError> {
    if n_rollouts == 0 {
        return Err(SdeError::InvalidArgument("n_rollouts must be >= 1".into()));
    }
    let outcomes: Result<Vec<bool>, SdeError> = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.stream(domain::ROLLOUT, stream_offset + i as u64);
            sample_path_safe(system, safe_set, policy, s0, integrator, &mut rng)
        })
        .collect();
    let successes = outcomes?.into_iter().filter(|&ok| ok).count();
    Ok(McEstimate::from_successes(successes as f64, n_rollouts))
}

/// Undiscounted return of one episode of the augmented MDP.
pub fn episode_return(
    system: &dyn SdeSystem,
    safe_set: &dyn SafeSet,
    policy: &dyn Policy,
    s0: &AugmentedState,
    integrator: &Integrator,
    reward_kind: RewardKind,
    rng: &mut StreamRng,
) -> Result<f64, SdeError> {
    let mut total = 0.0;
    let mut s = s0.clone();
    while !s.is_absorbing(safe_set) {
        let a = policy.act(&s);
        let out = step_augmented(system, safe_set, &s, a, integrator, reward_kind, rng)?;
        total += out.reward;
        if out.terminal {
            break;
        }
        s = out.next;
    }
    Ok(total)
}

/// Mean episodic return over `n_episodes` independent episodes drawn from
/// stream `(EPISODE, stream_offset + i)`.
#[allow(clippy::too_many_arguments)]
pub fn mean_episode_return(
    system: &dyn SdeSystem,
    safe_set: &dyn SafeSet,
    policy: &dyn Policy,
    s0: &AugmentedState,
    integrator: &Integrator,
    reward_kind: RewardKind,
    n_episodes: usize,
    seeds: &SeedTree,
    stream_offset: u64,
) -> Result<McEstimate, SdeError> {
    if n_episodes == 0 {
        return Err(SdeError::InvalidArgument("n_episodes must be >= 1".into()));
    }
    let returns: Result<Vec<f64>, SdeError> = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.stream(domain::EPISODE, stream_offset + i as u64);
            episode_return(system, safe_set, policy, s0, integrator, reward_kind, &mut rng)
        })
        .collect();
    let total: f64 = returns?.iter().sum();
    Ok(McEstimate::from_successes(total, n_episodes))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `dX = drift dt + sigma dW` in 1D with a single action.
    struct Scalar {
        drift: f64,
        sigma: f64,
    }

    impl SdeSystem for Scalar {
        fn state_dim(&self) -> usize {
            1
        }
        fn noise_dim(&self) -> usize {
            1
        }
        fn num_actions(&self) -> usize {
            1
        }
        fn drift(&self, _x: &[f64], _a: usize, out: &mut [f64]) {
            out[0] = self.drift;
        }
        fn diffusion(&self, _x: &[f64], _a: usize, out: &mut [f64]) {
            out[0] = self.sigma;
        }
    }

    struct Exploding;

    impl SdeSystem for Exploding {
        fn state_dim(&self) -> usize {
            1
        }
        fn noise_dim(&self) -> usize {
            0
        }
        fn num_actions(&self) -> usize {
            1
        }
        fn drift(&self, x: &[f64], _a: usize, out: &mut [f64]) {
            out[0] = 1e300 * x[0].abs().max(1.0);
        }
        fn diffusion(&self, _x: &[f64], _a: usize, _out: &mut [f64]) {}
    }

    fn interval() -> BandSafeSet {
        BandSafeSet {
            axis: 0,
            half_width: 1.0,
            closed: false,
        }
    }

    fn rng() -> StreamRng {
        SeedTree::new(7).stream(domain::ROLLOUT, 0)
    }

    #[test]
    fn euler_maruyama_zero_coefficients_is_identity() {
        let sys = Scalar { drift: 0.0, sigma: 0.0 };
        let integ = Integrator::new(0.02, 1).unwrap();
        let x = step_euler_maruyama(&sys, &[0.3], 0, &integ, &mut rng()).unwrap();
        assert_eq!(x, vec![0.3]);
    }

    #[test]
    fn euler_maruyama_constant_drift() {
        let sys = Scalar { drift: 0.5, sigma: 0.0 };
        let integ = Integrator::new(0.02, 1).unwrap();
        let x = step_euler_maruyama(&sys, &[0.0], 0, &integ, &mut rng()).unwrap();
        assert!((x[0] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn euler_maruyama_noise_matches_documented_stream() {
        let sys = Scalar { drift: 0.0, sigma: 0.5 };
        let integ = Integrator::new(0.02, 1).unwrap();
        let x = step_euler_maruyama(&sys, &[0.0], 0, &integ, &mut rng()).unwrap();
        let z: f64 = rng().sample(StandardNormal);
        assert_eq!(x[0], 0.5 * 0.02f64.sqrt() * z);
    }

    #[test]
    fn divergence_is_reported() {
        let integ = Integrator::new(1.0, 4).unwrap();
        let err = step_euler_maruyama(&Exploding, &[1.0], 0, &integ, &mut rng()).unwrap_err();
        assert!(matches!(err, SdeError::IntegrationDiverged { .. }));
    }

    #[test]
    fn integrator_rejects_bad_settings() {
        assert!(Integrator::new(0.0, 1).is_err());
        assert!(Integrator::new(0.1, 0).is_err());
        assert_eq!(Integrator::new(0.02, 1).unwrap().steps_for_horizon(1.0), 50);
        assert_eq!(Integrator::new(0.3, 1).unwrap().steps_for_horizon(1.0), 3);
    }

    #[test]
    fn step_far_from_horizon_pays_nothing() {
        let sys = Scalar { drift: 0.0, sigma: 0.0 };
        let integ = Integrator::new(0.05, 1).unwrap();
        let s = AugmentedState::new(2.0, vec![0.0]);
        let out = step_augmented(&sys, &interval(), &s, 0, &integ, RewardKind::Binary, &mut rng()).unwrap();
        assert!((out.next.horizon - 1.95).abs() < 1e-15);
        assert!(!out.terminal);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn goal_step_pays_and_terminates() {
        let sys = Scalar { drift: 0.0, sigma: 0.0 };
        let integ = Integrator::new(0.05, 1).unwrap();
        let s = AugmentedState::new(0.01, vec![0.0]);
        let out = step_augmented(&sys, &interval(), &s, 0, &integ, RewardKind::Binary, &mut rng()).unwrap();
        assert_eq!(out.reward, 1.0);
        assert!(out.terminal);
        assert!(out.next.is_absorbing(&interval()));
    }

    #[test]
    fn leaving_the_safe_set_terminates_without_reward() {
        let sys = Scalar { drift: 100.0, sigma: 0.0 };
        let integ = Integrator::new(0.05, 1).unwrap();
        let s = AugmentedState::new(1.0, vec![0.0]);
        let out = step_augmented(&sys, &interval(), &s, 0, &integ, RewardKind::Binary, &mut rng()).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.terminal);
    }

    #[test]
    fn stepping_absorbing_state_is_an_error() {
        let sys = Scalar { drift: 0.0, sigma: 0.0 };
        let integ = Integrator::new(0.05, 1).unwrap();
        for s in [AugmentedState::new(-0.05, vec![0.0]), AugmentedState::new(1.0, vec![1.0])] {
            let err = step_augmented(&sys, &interval(), &s, 0, &integ, RewardKind::Binary, &mut rng()).unwrap_err();
            assert!(matches!(err, SdeError::AbsorbingStep { .. }));
        }
    }

    #[test]
    fn mollified_reward_values() {
        let set = interval();
        let eps = 0.1;
        let dt = 0.05;
        // signed distance 2ε
        assert_eq!(reward_mollified(&AugmentedState::new(0.0, vec![0.8]), &set, eps, dt), 1.0);
        // signed distance ε/2
        let mid = reward_mollified(&AugmentedState::new(0.0, vec![0.95]), &set, eps, dt);
        assert!((mid - 0.5).abs() < 1e-12);
        assert_eq!(reward_mollified(&AugmentedState::new(1.0, vec![0.0]), &set, eps, dt), 0.0);
        // ε = 0 reduces to the binary reward
        for x in [-1.2, -1.0, -0.5, 0.0, 0.999, 1.0] {
            let s = AugmentedState::new(0.0, vec![x]);
            assert_eq!(reward_mollified(&s, &set, 0.0, dt), reward_binary(&s, &set, dt));
        }
    }

    #[test]
    fn band_and_box_signed_distance() {
        let closed = BandSafeSet {
            axis: 1,
            half_width: 2.0,
            closed: true,
        };
        assert!(closed.contains(&[9.0, 2.0]));
        assert_eq!(closed.signed_distance(&[9.0, 2.0]), 0.0);
        assert!(!interval().contains(&[1.0]));
        let b = BoxSafeSet {
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
            closed: false,
        };
        assert!((b.signed_distance(&[0.5, 0.0]) - 0.5).abs() < 1e-15);
        assert!((b.signed_distance(&[2.0, 2.0]) + 2f64.sqrt()).abs() < 1e-15);
        // corner of the shrunk box: distance is Euclidean
        let l = b.mollifier(&[0.95, 0.95], 0.1);
        assert!((l - (1.0 - (0.05f64.powi(2) * 2.0).sqrt() / 0.1)).abs() < 1e-12);
        assert_eq!(b.mollifier(&[0.0, 0.0], 0.1), 1.0);
    }

    #[test]
    fn mc_deterministic_safe_and_absorbed_starts() {
        let sys = Scalar { drift: 0.0, sigma: 0.0 };
        let integ = Integrator::new(0.05, 1).unwrap();
        let seeds = SeedTree::new(1);
        let inside = AugmentedState::new(3.0, vec![0.2]);
        let est = mc_safety_probability(&sys, &interval(), &ConstantPolicy(0), &inside, &integ, 50, &seeds, 0).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.half_width_95, 0.0);
        let outside = AugmentedState::new(3.0, vec![1.5]);
        let est = mc_safety_probability(&sys, &interval(), &ConstantPolicy(0), &outside, &integ, 50, &seeds, 0).unwrap();
        assert_eq!(est.estimate, 0.0);
        assert!(mc_safety_probability(&sys, &interval(), &ConstantPolicy(0), &inside, &integ, 0, &seeds, 0).is_err());
    }

    #[test]
    fn path_definition_and_episode_return_agree_on_common_numbers() {
        let sys = Scalar { drift: 0.1, sigma: 0.7 };
        let integ = Integrator::new(0.02, 2).unwrap();
        let seeds = SeedTree::new(11);
        let s0 = AugmentedState::new(0.7, vec![0.1]);
        for i in 0..200 {
            let mut a = seeds.stream(domain::ROLLOUT, i);
            let mut b = seeds.stream(domain::ROLLOUT, i);
            let safe = sample_path_safe(&sys, &interval(), &ConstantPolicy(0), &s0, &integ, &mut a).unwrap();
            let ret = episode_return(&sys, &interval(), &ConstantPolicy(0), &s0, &integ, RewardKind::Binary, &mut b).unwrap();
            assert_eq!(if safe { 1.0 } else { 0.0 }, ret);
        }
    }
}
