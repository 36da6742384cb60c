//! One-dimensional controlled Brownian motion on an interval.
//!
//! `dX = u dt + σ dW`, `u ∈ {-u_max, 0, +u_max}`, safe set `(-b, b)`. It is
//! small enough for the finite-difference oracle to give ground truth.

use serde::{Deserialize, Serialize};

use crate::env::{Domains, Environment, HorizonSpec, Region, RegionError};
use crate::sde::{BandSafeSet, Integrator, RewardKind, SafeSet, SdeError, SdeSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrownianConfig {
    /// Half width `b` of the safe interval.
    pub half_width: f64,
    pub sigma: f64,
    pub u_max: f64,
    pub dt: f64,
    pub substeps: usize,
    /// Outlook horizon τ (also τ_D, the horizon of episode starts).
    pub tau: f64,
    /// Half width of Ω_D. Defaults to `0.9 b`.
    pub initial_half_width: Option<f64>,
    /// Diffusion used in the PDE residual; defaults to `sigma`.
    pub pde_sigma: Option<f64>,
}

impl Default for BrownianConfig {
    fn default() -> Self {
        Self {
            half_width: 1.0,
            sigma: 0.5,
            u_max: 0.5,
            dt: 0.02,
            substeps: 1,
            tau: 1.0,
            initial_half_width: None,
            pde_sigma: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BrownianSystem {
    pub sigma: f64,
    pub controls: [f64; 3],
}

impl SdeSystem for BrownianSystem {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn num_actions(&self) -> usize {
        3
    }
    fn drift(&self, _x: &[f64], action: usize, out: &mut [f64]) {
        out[0] = self.controls[action];
    }
    fn diffusion(&self, _x: &[f64], _action: usize, out: &mut [f64]) {
        out[0] = self.sigma;
    }
}

#[derive(Debug, Clone)]
pub struct BrownianBenchmark {
    pub config: BrownianConfig,
    system: BrownianSystem,
    safe: BandSafeSet,
    integrator: Integrator,
    domains: Domains,
    pde_sigma: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Region(#[from] RegionError),
}

pub fn make_brownian_benchmark(config: BrownianConfig) -> Result<BrownianBenchmark, BenchmarkError> {
    let b = config.half_width;
    if !(b > 0.0) || !(config.sigma >= 0.0) || !(config.u_max >= 0.0) || !(config.tau >= 0.0) {
        return Err(BenchmarkError::Config(format!(
            "need half_width > 0 and sigma, u_max, tau >= 0 (got {config:?})"
        )));
    }
    let integrator = Integrator::new(config.dt, config.substeps)?;
    let init = config.initial_half_width.unwrap_or(0.9 * b);
    if !(init >= 0.0 && init < b) {
        return Err(BenchmarkError::Config(format!("initial_half_width must lie in [0, b), got {init}")));
    }
    let domains = Domains {
        initial: Region::Box {
            lo: vec![-init],
            hi: vec![init],
        },
        collocation: Region::Box { lo: vec![-b], hi: vec![b] },
        boundary: Region::Faces {
            lo: vec![-b],
            hi: vec![b],
            axis: 0,
            levels: vec![-b, b],
        },
    };
    domains.validate()?;
    Ok(BrownianBenchmark {
        system: BrownianSystem {
            sigma: config.sigma,
            controls: [-config.u_max, 0.0, config.u_max],
        },
        safe: BandSafeSet {
            axis: 0,
            half_width: b,
            closed: false,
        },
        integrator,
        domains,
        pde_sigma: config.pde_sigma.unwrap_or(config.sigma),
        config,
    })
}

impl BrownianBenchmark {
    pub fn brownian_system(&self) -> &BrownianSystem {
        &self.system
    }

    pub fn band(&self) -> &BandSafeSet {
        &self.safe
    }
}

impl Environment for BrownianBenchmark {
    fn name(&self) -> &str {
        "brownian"
    }
    fn system(&self) -> &dyn SdeSystem {
        &self.system
    }
    fn safe_set(&self) -> &dyn SafeSet {
        &self.safe
    }
    fn integrator(&self) -> Integrator {
        self.integrator
    }
    fn reward_kind(&self) -> RewardKind {
        RewardKind::Binary
    }
    fn tau_max(&self) -> f64 {
        self.config.tau
    }
    fn initial_horizon(&self) -> HorizonSpec {
        HorizonSpec::Fixed { tau: self.config.tau }
    }
    fn domains(&self) -> &Domains {
        &self.domains
    }
    fn state_names(&self) -> Vec<String> {
        vec!["x".into()]
    }
    fn feature_dim(&self) -> usize {
        1
    }
    fn feature_names(&self) -> Vec<String> {
        vec!["x".into()]
    }
    fn feature_ranges(&self) -> Vec<(f64, f64)> {
        vec![(-self.config.half_width, self.config.half_width)]
    }
    fn features(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0];
    }
    fn feature_drift(&self, x: &[f64], action: usize, out: &mut [f64]) {
        self.system.drift(x, action, out);
    }
    fn pde_noise_dim(&self) -> usize {
        usize::from(self.pde_sigma > 0.0)
    }
    fn feature_diffusion(&self, _x: &[f64], _action: usize, out: &mut [f64]) {
        if self.pde_sigma > 0.0 {
            out[0] = self.pde_sigma;
        }
    }
    fn action_label(&self, action: usize) -> String {
        format!("u={}", self.system.controls[action])
    }
}
