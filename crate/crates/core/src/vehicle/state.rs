//! Observation layout and the discrete action grid.

use serde::{Deserialize, Serialize};

use super::road::RoadGeometry;
use super::VehicleError;

/// Indices into the simulator state `[v_x, β, r, e, ψ, s]`, where `s` is the
/// arc-length position of the vehicle's projection on the centerline.
pub mod idx {
    pub const VX: usize = 0;
    pub const BETA: usize = 1;
    pub const R: usize = 2;
    pub const E: usize = 3;
    pub const PSI: usize = 4;
    pub const S: usize = 5;
    pub const DIM: usize = 6;
}

pub const NUM_REFERENCE_POINTS: usize = 5;
pub const FEATURE_DIM: usize = 5 + 2 * NUM_REFERENCE_POINTS;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "v_x", "beta", "r", "e", "psi", "ref1_x", "ref1_y", "ref2_x", "ref2_y", "ref3_x", "ref3_y", "ref4_x",
    "ref4_y", "ref5_x", "ref5_y",
];

/// Vehicle observation: chassis state, road errors, and five centerline
/// reference points in the vehicle frame (x forward, y left).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub v_x: f64,
    pub beta: f64,
    pub r: f64,
    pub e: f64,
    pub psi: f64,
    pub references: [[f64; 2]; NUM_REFERENCE_POINTS],
}

impl VehicleState {
    /// Observation of simulator state `x` on `road` with the given lookaheads.
    pub fn observe(x: &[f64], road: &RoadGeometry, lookahead: &[f64; NUM_REFERENCE_POINTS]) -> Self {
        let s = x[idx::S];
        let e = x[idx::E];
        let psi = x[idx::PSI];
        let base = road.pose_at(s);
        let px = base.x - e * base.heading.sin();
        let py = base.y + e * base.heading.cos();
        let (sh, ch) = (base.heading + psi).sin_cos();
        let mut references = [[0.0; 2]; NUM_REFERENCE_POINTS];
        for (r, &ds) in references.iter_mut().zip(lookahead) {
            let q = road.pose_at(s + ds);
            let (dx, dy) = (q.x - px, q.y - py);
            *r = [ch * dx + sh * dy, -sh * dx + ch * dy];
        }
        Self {
            v_x: x[idx::VX],
            beta: x[idx::BETA],
            r: x[idx::R],
            e,
            psi,
            references,
        }
    }

    pub fn to_features(&self) -> [f64; FEATURE_DIM] {
        let mut f = [0.0; FEATURE_DIM];
        f[..5].copy_from_slice(&[self.v_x, self.beta, self.r, self.e, self.psi]);
        for (i, p) in self.references.iter().enumerate() {
            f[5 + 2 * i] = p[0];
            f[6 + 2 * i] = p[1];
        }
        f
    }

    pub fn from_features(f: &[f64]) -> Result<Self, VehicleError> {
        if f.len() != FEATURE_DIM {
            return Err(VehicleError::Config(format!(
                "expected {FEATURE_DIM} features, got {}",
                f.len()
            )));
        }
        let mut references = [[0.0; 2]; NUM_REFERENCE_POINTS];
        for (i, r) in references.iter_mut().enumerate() {
            *r = [f[5 + 2 * i], f[6 + 2 * i]];
        }
        Ok(Self {
            v_x: f[0],
            beta: f[1],
            r: f[2],
            e: f[3],
            psi: f[4],
            references,
        })
    }
}

pub const STEERING_LEVELS: [f64; 5] = [-0.8, -0.4, 0.0, 0.4, 0.8];
pub const THROTTLE_LEVELS: [f64; 5] = [0.6, 0.7, 0.8, 0.9, 1.0];

/// 25 actions `(δ, d)`, row-major with steering outer:
/// `index = 5 * steering_index + throttle_index`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActionGrid;

impl ActionGrid {
    pub const LEN: usize = STEERING_LEVELS.len() * THROTTLE_LEVELS.len();

    /// `(normalized steering, throttle)`.
    pub fn get(&self, index: usize) -> (f64, f64) {
        (
            STEERING_LEVELS[index / THROTTLE_LEVELS.len()],
            THROTTLE_LEVELS[index % THROTTLE_LEVELS.len()],
        )
    }

    pub fn index_of(&self, steering: f64, throttle: f64) -> Option<usize> {
        let i = STEERING_LEVELS.iter().position(|&v| v == steering)?;
        let j = THROTTLE_LEVELS.iter().position(|&v| v == throttle)?;
        Some(i * THROTTLE_LEVELS.len() + j)
    }
}
