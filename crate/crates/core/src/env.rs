//! Learning environments: an SDE, its safe set, the sampling regions used by
//! the learner, and the map from system state to network features.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::StreamRng;
use crate::sde::{step_augmented, AugmentedState, Integrator, Policy, RewardKind, SafeSet, SdeError, SdeSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("region is empty: {0}")]
    Empty(String),
    #[error("region dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Uniformly samplable subsets of the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Axis-aligned box `[lo, hi]`; degenerate axes (`lo == hi`) are allowed.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// The box with coordinate `axis` pinned to one of `levels`, each level
    /// equally likely (e.g. the two lane boundaries `e = ±E_max`).
    Faces {
        lo: Vec<f64>,
        hi: Vec<f64>,
        axis: usize,
        levels: Vec<f64>,
    },
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Box { lo, .. } | Region::Faces { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self) -> Result<(), RegionError> {
        let (lo, hi) = match self {
            Region::Box { lo, hi } | Region::Faces { lo, hi, .. } => (lo, hi),
        };
        if lo.len() != hi.len() {
            return Err(RegionError::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(RegionError::Empty(format!("axis {i}: [{}, {}]", lo[i], hi[i])));
        }
        if let Region::Faces { axis, levels, .. } = self {
            if levels.is_empty() {
                return Err(RegionError::Empty("no face levels".into()));
            }
            if *axis >= lo.len() {
                return Err(RegionError::Dimension {
                    expected: lo.len(),
                    got: *axis + 1,
                });
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        match self {
            Region::Box { lo, hi } => uniform_box(lo, hi, rng),
            Region::Faces { lo, hi, axis, levels } => {
                let mut x = uniform_box(lo, hi, rng);
                x[*axis] = levels[rng.random_range(0..levels.len())];
                x
            }
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        match self {
            Region::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            Region::Faces { lo, hi, axis, levels } => {
                let mut c: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
                c[*axis] = levels.iter().sum::<f64>() / levels.len() as f64;
                c
            }
        }
    }
}

fn uniform_box(lo: &[f64], hi: &[f64], rng: &mut StreamRng) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&l, &h)| {
            let u: f64 = rng.random();
            l + (h - l) * u
        })
        .collect()
}

/// Initial remaining horizon for learning episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HorizonSpec {
    Fixed { tau: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl HorizonSpec {
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            HorizonSpec::Fixed { tau } => tau,
            HorizonSpec::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
        }
    }
}

/// Ω_D (episode starts), Ω_P (PDE collocation, inside C) and Ω_B (lateral
/// boundary, on ∂C), all in system-state coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domains {
    pub initial: Region,
    pub collocation: Region,
    pub boundary: Region,
}

impl Domains {
    pub fn validate(&self) -> Result<(), RegionError> {
        self.initial.validate()?;
        self.collocation.validate()?;
        self.boundary.validate()
    }
}

/// Everything the learner, the oracles and the CLI need from a scenario.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;
    fn system(&self) -> &dyn SdeSystem;
    fn safe_set(&self) -> &dyn SafeSet;
    fn integrator(&self) -> Integrator;
    fn reward_kind(&self) -> RewardKind {
        RewardKind::Binary
    }
    /// Largest outlook horizon of interest.
    fn tau_max(&self) -> f64;
    fn initial_horizon(&self) -> HorizonSpec;
    fn domains(&self) -> &Domains;

    /// Names of the system-state coordinates.
    fn state_names(&self) -> Vec<String>;
    fn feature_dim(&self) -> usize;
    fn feature_names(&self) -> Vec<String>;
    /// Declared `(lo, hi)` per feature, used for input scaling.
    fn feature_ranges(&self) -> Vec<(f64, f64)>;
    fn features(&self, x: &[f64], out: &mut [f64]);
    /// Time derivative of the features along the drift, used by the PDE.
    fn feature_drift(&self, x: &[f64], action: usize, out: &mut [f64]);
    /// Noise columns seen by the PDE (may differ from the simulator's).
    fn pde_noise_dim(&self) -> usize;
    /// Row-major `feature_dim × pde_noise_dim`.
    fn feature_diffusion(&self, x: &[f64], action: usize, out: &mut [f64]);

    fn num_actions(&self) -> usize {
        self.system().num_actions()
    }

    fn action_label(&self, action: usize) -> String {
        format!("{action}")
    }

    /// Draw an episode start from P_D.
    fn sample_initial(&self, rng: &mut StreamRng) -> AugmentedState {
        let h = self.initial_horizon().sample(rng);
        let x = self.domains().initial.sample(rng);
        AugmentedState::new(h, x)
    }
}

/// Network input `[h, features(x)]`.
pub fn network_input(env: &dyn Environment, s: &AugmentedState, out: &mut Vec<f64>) {
    out.clear();
    out.resize(1 + env.feature_dim(), 0.0);
    out[0] = s.horizon;
    env.features(&s.state, &mut out[1..]);
}

/// Input-space directions of the augmented PDE at `(s, action)`:
/// `f̃ = [-1; f]` and the noise columns `σ̃_k = [0; σ_k]`.
pub fn pde_directions(env: &dyn Environment, x: &[f64], action: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = env.feature_dim();
    let mut drift = vec![0.0; d + 1];
    drift[0] = -1.0;
    env.feature_drift(x, action, &mut drift[1..]);
    let w = env.pde_noise_dim();
    let mut noise = Vec::with_capacity(w);
    if w > 0 {
        let mut sigma = vec![0.0; d * w];
        env.feature_diffusion(x, action, &mut sigma);
        for k in 0..w {
            let mut col = vec![0.0; d + 1];
            for i in 0..d {
                col[i + 1] = sigma[i * w + k];
            }
            noise.push(col);
        }
    }
    (drift, noise)
}

/// One recorded episode of the augmented MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Visited states, starting with `s0`; one longer than `actions`.
    pub states: Vec<AugmentedState>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Rollout {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Runs `policy` from `s0` until the episode terminates.
pub fn rollout(
    env: &dyn Environment,
    policy: &dyn Policy,
    s0: &AugmentedState,
    rng: &mut StreamRng,
) -> Result<Rollout, SdeError> {
    let integ = env.integrator();
    let mut out = Rollout {
        states: vec![s0.clone()],
        actions: Vec::new(),
        rewards: Vec::new(),
    };
    let mut s = s0.clone();
    while !s.is_absorbing(env.safe_set()) {
        let a = policy.act(&s);
        let step = step_augmented(env.system(), env.safe_set(), &s, a, &integ, env.reward_kind(), rng)?;
        out.actions.push(a);
        out.rewards.push(step.reward);
        out.states.push(step.next.clone());
        if step.terminal {
            break;
        }
        s = step.next;
    }
    Ok(out)
}
