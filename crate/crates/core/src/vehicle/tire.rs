//! Fiala brush-model lateral tire force.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TireParams {
    /// Cornering stiffness C_α of the axle (N/rad).
    pub cornering_stiffness: f64,
    /// Friction coefficient μ.
    pub friction: f64,
}

impl TireParams {
    /// Slip angle beyond which the force is saturated at `μ F_z`.
    pub fn saturation_angle(&self, normal_load: f64) -> f64 {
        (3.0 * self.friction * normal_load / self.cornering_stiffness).atan()
    }
}

/// Lateral force of an axle at slip angle `alpha` (rad) and normal load `fz` (N).
///
/// Below saturation `F = -C tanα (1 - |C tanα|/(3μF_z) + (C tanα)²/(27μ²F_z²))`,
/// above it `F = -μ F_z sgn α`.
pub fn fiala_lateral_force(tire: &TireParams, alpha: f64, fz: f64) -> f64 {
    let mu_fz = tire.friction * fz;
    if alpha.abs() >= tire.saturation_angle(fz) {
        return -mu_fz * alpha.signum();
    }
    let c_tan = tire.cornering_stiffness * alpha.tan();
    -c_tan * (1.0 - c_tan.abs() / (3.0 * mu_fz) + c_tan * c_tan / (27.0 * mu_fz * mu_fz))
}
