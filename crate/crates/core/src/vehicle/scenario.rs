//! Driving scenarios on a single corner: lane keeping and drifting.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::model::{axle_forces, bicycle_derivatives, road_error_derivatives, ChassisState, VehicleParams};
use super::road::RoadGeometry;
use super::state::{idx, ActionGrid, VehicleState, FEATURE_DIM, FEATURE_NAMES, NUM_REFERENCE_POINTS};
use super::VehicleError;
use crate::env::{Domains, Environment, HorizonSpec, Region};
use crate::rng::StreamRng;
use crate::sde::{AugmentedState, BandSafeSet, Integrator, SafeSet, SdeSystem};

/// Sideslip is kept inside `±BETA_LIMIT` so that `tan β` stays finite.
pub const BETA_LIMIT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerConfig {
    pub entry_length: f64,
    pub radius: f64,
    pub angle_deg: f64,
    pub exit_length: f64,
}

impl CornerConfig {
    pub fn arc_start(&self) -> f64 {
        self.entry_length
    }

    pub fn arc_end(&self) -> f64 {
        self.entry_length + self.radius * self.angle_deg.to_radians()
    }
}

/// Closed ranges `[lo, hi]` per simulator coordinate (SI units, radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRanges {
    pub v_x: [f64; 2],
    pub beta: [f64; 2],
    pub r: [f64; 2],
    pub e: [f64; 2],
    pub psi: [f64; 2],
    pub s: [f64; 2],
}

impl StateRanges {
    fn lo(&self) -> Vec<f64> {
        vec![self.v_x[0], self.beta[0], self.r[0], self.e[0], self.psi[0], self.s[0]]
    }

    fn hi(&self) -> Vec<f64> {
        vec![self.v_x[1], self.beta[1], self.r[1], self.e[1], self.psi[1], self.s[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleEnvConfig {
    pub params: VehicleParams,
    pub corner: CornerConfig,
    /// Lane half width E_max (m).
    pub e_max: f64,
    pub dt: f64,
    pub substeps: usize,
    pub tau_max: f64,
    /// Remaining horizon at episode start.
    pub horizon: HorizonSpec,
    /// Arc-length lookaheads of the reference points (m).
    pub lookahead: [f64; NUM_REFERENCE_POINTS],
    /// Ω_D.
    pub spawn: StateRanges,
    /// Ω_P; Ω_B is this box with `e` pinned to `±e_max`.
    pub collocation: StateRanges,
    /// Simulator diffusion per coordinate `[v_x, β, r, e, ψ, s]`.
    pub noise: [f64; idx::DIM],
    /// Diffusion assumed by the PDE residual, same layout.
    pub pde_noise: [f64; idx::DIM],
    /// Add `-β` to the sampled heading error so that the initial velocity is
    /// tangent to the centerline (a car already sliding along the road).
    pub align_velocity: bool,
}

impl VehicleEnvConfig {
    /// Lane keeping through a 20 m radius left corner; `E_max = 1 m`,
    /// spawn speed in `[5, 15]` m/s and horizon uniform on `[0, 5]` s.
    pub fn cornering() -> Self {
        let corner = CornerConfig {
            entry_length: 60.0,
            radius: 20.0,
            angle_deg: 90.0,
            exit_length: 120.0,
        };
        let length = corner.arc_end() + corner.exit_length;
        Self {
            params: VehicleParams::default(),
            corner,
            e_max: 1.0,
            dt: 0.05,
            substeps: 5,
            tau_max: 5.0,
            horizon: HorizonSpec::Uniform { lo: 0.0, hi: 5.0 },
            lookahead: [2.0, 4.0, 6.0, 8.0, 10.0],
            spawn: StateRanges {
                v_x: [5.0, 15.0],
                beta: [0.0, 0.0],
                r: [0.0, 0.0],
                e: [-0.8, 0.8],
                psi: [-0.2, 0.2],
                s: [0.0, corner.arc_end()],
            },
            collocation: StateRanges {
                v_x: [5.0, 20.0],
                beta: [-0.2, 0.2],
                r: [-1.0, 1.0],
                e: [-1.0, 1.0],
                psi: [-0.5, 0.5],
                s: [0.0, length],
            },
            noise: [0.0, 0.0, 0.05, 0.0, 0.0, 0.0],
            pde_noise: [0.0; idx::DIM],
            align_velocity: false,
        }
    }

    /// High-speed drift corner; `E_max = 8 m`, entry at 30 m/s with
    /// `β ∈ [-25°, -20°]` and `r ∈ [50, 70]°/s`, sliding along the centerline
    /// at the start of a 40 m radius left turn. Six seconds is enough to
    /// clear the corner after the entry slide has scrubbed off speed.
    pub fn drift() -> Self {
        let corner = CornerConfig {
            entry_length: 20.0,
            radius: 40.0,
            angle_deg: 90.0,
            exit_length: 150.0,
        };
        let length = corner.arc_end() + corner.exit_length;
        Self {
            params: VehicleParams::default(),
            corner,
            e_max: 8.0,
            dt: 0.05,
            substeps: 5,
            tau_max: 6.0,
            horizon: HorizonSpec::Uniform { lo: 0.0, hi: 6.0 },
            lookahead: [2.0, 4.0, 6.0, 8.0, 10.0],
            spawn: StateRanges {
                v_x: [30.0, 30.0],
                beta: [(-25f64).to_radians(), (-20f64).to_radians()],
                r: [50f64.to_radians(), 70f64.to_radians()],
                e: [0.0, 0.0],
                psi: [0.0, 0.0],
                s: [corner.entry_length, corner.entry_length],
            },
            collocation: StateRanges {
                v_x: [15.0, 32.0],
                beta: [-0.8, 0.3],
                r: [-0.5, 1.5],
                e: [-8.0, 8.0],
                psi: [-0.4, 1.0],
                s: [0.0, length],
            },
            noise: [0.0; idx::DIM],
            pde_noise: [0.0; idx::DIM],
            align_velocity: true,
        }
    }

    pub fn road(&self) -> Result<RoadGeometry, VehicleError> {
        Ok(RoadGeometry::corner(
            self.corner.entry_length,
            self.corner.radius,
            self.corner.angle_deg.to_radians(),
            self.corner.exit_length,
            self.e_max,
        )?)
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        self.params.validate()?;
        if !(self.e_max > 0.0) {
            return Err(VehicleError::Config(format!("e_max must be positive, got {}", self.e_max)));
        }
        if !(self.tau_max >= 0.0) {
            return Err(VehicleError::Config("tau_max must be non-negative".into()));
        }
        for (name, ranges) in [("spawn", &self.spawn), ("collocation", &self.collocation)] {
            for (lo, hi) in ranges.lo().into_iter().zip(ranges.hi()) {
                if !(lo <= hi) {
                    return Err(VehicleError::Config(format!("{name} range [{lo}, {hi}] is empty")));
                }
            }
            if ranges.v_x[0] < self.params.v_min {
                return Err(VehicleError::Config(format!("{name} v_x range starts below v_min")));
            }
            if ranges.e[0] < -self.e_max || ranges.e[1] > self.e_max {
                return Err(VehicleError::Config(format!("{name} e range leaves the lane")));
            }
        }
        if self.noise.iter().chain(&self.pde_noise).any(|s| !(*s >= 0.0)) {
            return Err(VehicleError::Config("noise levels must be non-negative".into()));
        }
        match self.horizon {
            HorizonSpec::Fixed { tau } if !(0.0..=self.tau_max).contains(&tau) => {
                return Err(VehicleError::Config(format!("fixed horizon {tau} outside [0, tau_max]")));
            }
            HorizonSpec::Uniform { lo, hi } if !(0.0 <= lo && lo <= hi && hi <= self.tau_max) => {
                return Err(VehicleError::Config(format!("horizon range [{lo}, {hi}] outside [0, tau_max]")));
            }
            _ => {}
        }
        if self.lookahead.iter().any(|l| !(*l > 0.0)) {
            return Err(VehicleError::Config("lookaheads must be positive".into()));
        }
        Ok(())
    }
}

impl Default for VehicleEnvConfig {
    fn default() -> Self {
        Self::cornering()
    }
}

/// Bicycle model plus road-error dynamics on simulator state `[v_x, β, r, e, ψ, s]`.
#[derive(Debug, Clone)]
pub struct VehicleSystem {
    pub params: VehicleParams,
    pub road: RoadGeometry,
    pub actions: ActionGrid,
    noise_axes: Vec<(usize, f64)>,
}

impl VehicleSystem {
    pub fn new(params: VehicleParams, road: RoadGeometry, noise: &[f64; idx::DIM]) -> Self {
        Self {
            params,
            road,
            actions: ActionGrid,
            noise_axes: axes(noise),
        }
    }

    /// Physical steering (rad) and drive force (N) of an action.
    pub fn controls(&self, action: usize) -> (f64, f64) {
        let (steer, throttle) = self.actions.get(action);
        (self.params.steering_angle(steer), self.params.drive_force(throttle))
    }
}

fn axes(noise: &[f64; idx::DIM]) -> Vec<(usize, f64)> {
    noise.iter().enumerate().filter(|(_, s)| **s > 0.0).map(|(i, s)| (i, *s)).collect()
}

impl SdeSystem for VehicleSystem {
    fn state_dim(&self) -> usize {
        idx::DIM
    }

    fn noise_dim(&self) -> usize {
        self.noise_axes.len()
    }

    fn num_actions(&self) -> usize {
        ActionGrid::LEN
    }

    fn drift(&self, x: &[f64], action: usize, out: &mut [f64]) {
        let (delta, f_xr) = self.controls(action);
        let chassis = ChassisState {
            v_x: x[idx::VX].max(self.params.v_min),
            beta: x[idx::BETA],
            r: x[idx::R],
        };
        let forces = axle_forces(&self.params, &chassis, delta, f_xr);
        let d = bicycle_derivatives(&self.params, &chassis, delta, &forces)
            .expect("speed is floored at v_min before evaluation");
        let rho = self.road.curvature_at(x[idx::S]);
        let (psi_dot, e_dot) = road_error_derivatives(chassis.v_x, chassis.beta, chassis.r, x[idx::PSI], rho);
        let v_y = chassis.v_x * chassis.beta.tan();
        let (sp, cp) = x[idx::PSI].sin_cos();
        let s_dot = (chassis.v_x * cp - v_y * sp) / (1.0 - rho * x[idx::E]).max(0.1);
        out[idx::VX] = d[0];
        out[idx::BETA] = d[1];
        out[idx::R] = d[2];
        out[idx::E] = e_dot;
        out[idx::PSI] = psi_dot;
        out[idx::S] = s_dot;
    }

    fn diffusion(&self, _x: &[f64], _action: usize, out: &mut [f64]) {
        diagonal_columns(&self.noise_axes, out);
    }

    fn project(&self, x: &mut [f64]) {
        x[idx::VX] = x[idx::VX].max(self.params.v_min);
        x[idx::BETA] = x[idx::BETA].clamp(-BETA_LIMIT, BETA_LIMIT);
        x[idx::PSI] = (x[idx::PSI] + PI).rem_euclid(2.0 * PI) - PI;
    }
}

/// Row-major `rows × axes.len()` matrix with `σ_k` at `(axis_k, k)`.
fn diagonal_columns(axes: &[(usize, f64)], out: &mut [f64]) {
    out.fill(0.0);
    let w = axes.len();
    for (k, &(axis, sigma)) in axes.iter().enumerate() {
        out[axis * w + k] = sigma;
    }
}

#[derive(Debug, Clone)]
pub struct VehicleEnv {
    name: String,
    pub config: VehicleEnvConfig,
    system: VehicleSystem,
    safe: BandSafeSet,
    integrator: Integrator,
    domains: Domains,
    pde_axes: Vec<(usize, f64)>,
}

fn build(name: &str, config: VehicleEnvConfig) -> Result<VehicleEnv, VehicleError> {
    config.validate()?;
    let road = config.road()?;
    let integrator = Integrator::new(config.dt, config.substeps)?;
    let mut boundary_lo = config.collocation.lo();
    let mut boundary_hi = config.collocation.hi();
    boundary_lo[idx::E] = -config.e_max;
    boundary_hi[idx::E] = config.e_max;
    let domains = Domains {
        initial: Region::Box {
            lo: config.spawn.lo(),
            hi: config.spawn.hi(),
        },
        collocation: Region::Box {
            lo: config.collocation.lo(),
            hi: config.collocation.hi(),
        },
        boundary: Region::Faces {
            lo: boundary_lo,
            hi: boundary_hi,
            axis: idx::E,
            levels: vec![-config.e_max, config.e_max],
        },
    };
    domains.validate()?;
    Ok(VehicleEnv {
        name: name.into(),
        system: VehicleSystem::new(config.params.clone(), road, &config.noise),
        safe: BandSafeSet {
            axis: idx::E,
            half_width: config.e_max,
            closed: true,
        },
        integrator,
        domains,
        pde_axes: axes(&config.pde_noise),
        config,
    })
}

pub fn make_cornering_env(config: VehicleEnvConfig) -> Result<VehicleEnv, VehicleError> {
    build("cornering", config)
}

pub fn make_drift_env(config: VehicleEnvConfig) -> Result<VehicleEnv, VehicleError> {
    build("drift", config)
}

impl VehicleEnv {
    pub fn vehicle_system(&self) -> &VehicleSystem {
        &self.system
    }

    pub fn road(&self) -> &RoadGeometry {
        &self.system.road
    }

    pub fn observe(&self, x: &[f64]) -> VehicleState {
        VehicleState::observe(x, &self.system.road, &self.config.lookahead)
    }
}

impl Environment for VehicleEnv {
    fn name(&self) -> &str {
        &self.name
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

    fn tau_max(&self) -> f64 {
        self.config.tau_max
    }

    fn initial_horizon(&self) -> HorizonSpec {
        self.config.horizon
    }

    fn domains(&self) -> &Domains {
        &self.domains
    }

    fn state_names(&self) -> Vec<String> {
        ["v_x", "beta", "r", "e", "psi", "s"].iter().map(|s| s.to_string()).collect()
    }

    fn feature_dim(&self) -> usize {
        FEATURE_DIM
    }

    fn feature_names(&self) -> Vec<String> {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn feature_ranges(&self) -> Vec<(f64, f64)> {
        let c = &self.config.collocation;
        let reach = self.config.lookahead.iter().cloned().fold(0.0, f64::max);
        let mut ranges = vec![
            (c.v_x[0], c.v_x[1]),
            (c.beta[0], c.beta[1]),
            (c.r[0], c.r[1]),
            (-self.config.e_max, self.config.e_max),
            (c.psi[0], c.psi[1]),
        ];
        for _ in 0..NUM_REFERENCE_POINTS {
            ranges.push((0.0, reach));
            ranges.push((-0.5 * reach, 0.5 * reach));
        }
        ranges
    }

    fn features(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.observe(x).to_features());
    }

    /// Chassis and road-error rates; the reference-point convection is dropped.
    fn feature_drift(&self, x: &[f64], action: usize, out: &mut [f64]) {
        let mut f = [0.0; idx::DIM];
        self.system.drift(x, action, &mut f);
        out.fill(0.0);
        out[..5].copy_from_slice(&f[..5]);
    }

    fn pde_noise_dim(&self) -> usize {
        self.pde_axes.len()
    }

    fn feature_diffusion(&self, _x: &[f64], _action: usize, out: &mut [f64]) {
        // Simulator axes 0..5 coincide with the first five features.
        diagonal_columns(&self.pde_axes, out);
    }

    fn sample_initial(&self, rng: &mut StreamRng) -> AugmentedState {
        let h = self.config.horizon.sample(rng);
        let mut x = self.domains.initial.sample(rng);
        if self.config.align_velocity {
            x[idx::PSI] -= x[idx::BETA];
        }
        AugmentedState::new(h, x)
    }

    fn action_label(&self, action: usize) -> String {
        let (d, t) = self.system.actions.get(action);
        format!("steer={d},throttle={t}")
    }
}
