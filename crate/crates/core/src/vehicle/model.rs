//! Three-degree-of-freedom bicycle model in road coordinates.

use serde::{Deserialize, Serialize};

use super::tire::{fiala_lateral_force, TireParams};
use super::VehicleError;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Mass M (kg).
    pub mass: f64,
    /// CG to front axle L_f (m).
    pub l_f: f64,
    /// CG to rear axle L_r (m).
    pub l_r: f64,
    /// Yaw inertia I_z (kg m²).
    pub i_z: f64,
    pub front_tire: TireParams,
    pub rear_tire: TireParams,
    /// Steering angle at normalized steering 1 (rad).
    pub max_steer: f64,
    /// Rear drive force at full throttle (N).
    pub max_drive_force: f64,
    /// Throttle below which no drive force is produced.
    pub throttle_deadband: f64,
    /// Longitudinal speed floor (m/s).
    pub v_min: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1500.0,
            l_f: 1.2,
            l_r: 1.4,
            i_z: 2500.0,
            front_tire: TireParams {
                cornering_stiffness: 80_000.0,
                friction: 1.0,
            },
            rear_tire: TireParams {
                cornering_stiffness: 90_000.0,
                friction: 1.0,
            },
            max_steer: 35f64.to_radians(),
            max_drive_force: 4_000.0,
            throttle_deadband: 0.5,
            v_min: 0.5,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let positive = [
            ("mass", self.mass),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("i_z", self.i_z),
            ("front cornering stiffness", self.front_tire.cornering_stiffness),
            ("front friction", self.front_tire.friction),
            ("rear cornering stiffness", self.rear_tire.cornering_stiffness),
            ("rear friction", self.rear_tire.friction),
            ("max_steer", self.max_steer),
            ("max_drive_force", self.max_drive_force),
            ("v_min", self.v_min),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(VehicleError::Config(format!("{name} must be positive, got {v}")));
        }
        if !(0.0..1.0).contains(&self.throttle_deadband) {
            return Err(VehicleError::Config(format!(
                "throttle_deadband must lie in [0, 1), got {}",
                self.throttle_deadband
            )));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    /// Static normal loads `(F_zf, F_zr)`.
    pub fn normal_loads(&self) -> (f64, f64) {
        let w = self.mass * GRAVITY / self.wheelbase();
        (w * self.l_r, w * self.l_f)
    }

    /// Affine throttle map `d ↦ F_xr`, zero below the deadband and
    /// `max_drive_force` at `d = 1`.
    pub fn drive_force(&self, throttle: f64) -> f64 {
        let d = throttle.clamp(0.0, 1.0);
        self.max_drive_force * ((d - self.throttle_deadband) / (1.0 - self.throttle_deadband)).max(0.0)
    }

    pub fn steering_angle(&self, normalized: f64) -> f64 {
        normalized.clamp(-1.0, 1.0) * self.max_steer
    }
}

/// `(v_x, β, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChassisState {
    pub v_x: f64,
    pub beta: f64,
    pub r: f64,
}

/// `(F_xr, F_yf, F_yr)` in newtons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxleForces {
    pub f_xr: f64,
    pub f_yf: f64,
    pub f_yr: f64,
}

/// `(dv_x/dt, dβ/dt, dr/dt)`:
///
/// ```text
/// dv_x/dt = (F_xr - F_yf sin δ)/M + r v_x β
/// dβ/dt   = (F_yr + F_yf cos δ)/(M v_x) - r
/// dr/dt   = (L_f F_yf cos δ - L_r F_yr)/I_z
/// ```
pub fn bicycle_derivatives(
    params: &VehicleParams,
    state: &ChassisState,
    delta: f64,
    forces: &AxleForces,
) -> Result<[f64; 3], VehicleError> {
    if !(state.v_x >= params.v_min) {
        return Err(VehicleError::Singular {
            v_x: state.v_x,
            v_min: params.v_min,
        });
    }
    let m = params.mass;
    let (sd, cd) = delta.sin_cos();
    Ok([
        (forces.f_xr - forces.f_yf * sd) / m + state.r * state.v_x * state.beta,
        (forces.f_yr + forces.f_yf * cd) / (m * state.v_x) - state.r,
        (params.l_f * forces.f_yf * cd - params.l_r * forces.f_yr) / params.i_z,
    ])
}

/// Axle slip angles `(α_f, α_r)` with `v_y = v_x tan β`.
pub fn slip_angles(params: &VehicleParams, state: &ChassisState, delta: f64) -> (f64, f64) {
    let v_y = state.v_x * state.beta.tan();
    let alpha_f = (v_y + params.l_f * state.r).atan2(state.v_x) - delta;
    let alpha_r = (v_y - params.l_r * state.r).atan2(state.v_x);
    (alpha_f, alpha_r)
}

/// Tire forces for a steering angle (rad) and drive force (N).
pub fn axle_forces(params: &VehicleParams, state: &ChassisState, delta: f64, f_xr: f64) -> AxleForces {
    let (alpha_f, alpha_r) = slip_angles(params, state, delta);
    let (fz_f, fz_r) = params.normal_loads();
    AxleForces {
        f_xr,
        f_yf: fiala_lateral_force(&params.front_tire, alpha_f, fz_f),
        f_yr: fiala_lateral_force(&params.rear_tire, alpha_r, fz_r),
    }
}

/// `(dψ/dt, de/dt) = (r - v_x ρ, v_y cos ψ + v_x sin ψ)`, `v_y = v_x tan β`.
pub fn road_error_derivatives(v_x: f64, beta: f64, r: f64, psi: f64, curvature: f64) -> (f64, f64) {
    let v_y = v_x * beta.tan();
    (r - v_x * curvature, v_y * psi.cos() + v_x * psi.sin())
}
