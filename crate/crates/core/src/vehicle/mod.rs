//! Desk-scale vehicle simulator: 3-DOF bicycle model with Fiala lateral
//! tires, road-coordinate errors on a straight–arc–straight corner, and the
//! lane-keeping and drifting scenarios built on it.

pub mod model;
pub mod road;
pub mod scenario;
pub mod state;
pub mod tire;

use std::io::Write;

use thiserror::Error;

pub use model::{VehicleParams, GRAVITY};
pub use road::{RoadError, RoadGeometry};
pub use scenario::{make_cornering_env, make_drift_env, VehicleEnv, VehicleEnvConfig, VehicleSystem};
pub use state::{ActionGrid, VehicleState};
pub use tire::TireParams;

use crate::env::Rollout;
use crate::sde::SdeError;

#[derive(Debug, Error)]
pub enum VehicleError {
    #[error("invalid vehicle config: {0}")]
    Config(String),
    #[error("bicycle model is singular at v_x = {v_x} (floor {v_min})")]
    Singular { v_x: f64, v_min: f64 },
    #[error(transparent)]
    Road(#[from] RoadError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

impl From<crate::env::RegionError> for VehicleError {
    fn from(e: crate::env::RegionError) -> Self {
        VehicleError::Config(e.to_string())
    }
}

/// Sideslip in the corner arc over rollouts that got past it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SideslipStats {
    /// Rollouts whose arc length reached the end of the arc.
    pub completed: usize,
    /// Arc timesteps pooled over the completed rollouts.
    pub arc_steps: usize,
    /// Share of those timesteps with `|β| ≥ beta_min`.
    pub fraction: f64,
}

pub fn corner_sideslip(env: &VehicleEnv, rollouts: &[Rollout], beta_min: f64) -> SideslipStats {
    let (a0, a1) = (env.config.corner.arc_start(), env.config.corner.arc_end());
    let (mut completed, mut steps, mut slipping) = (0, 0, 0);
    for r in rollouts {
        if !r.states.iter().any(|s| s.state[state::idx::S] >= a1) {
            continue;
        }
        completed += 1;
        for s in &r.states {
            let arc = s.state[state::idx::S];
            if (a0..=a1).contains(&arc) {
                steps += 1;
                if s.state[state::idx::BETA].abs() >= beta_min {
                    slipping += 1;
                }
            }
        }
    }
    SideslipStats {
        completed,
        arc_steps: steps,
        fraction: if steps == 0 { 0.0 } else { slipping as f64 / steps as f64 },
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 9] = ["t", "v_x", "beta", "r", "e", "psi", "delta", "throttle", "reward"];

/// One row per control step; the final state is written with empty control
/// and reward cells.
pub fn write_trajectory_csv<W: Write>(env: &VehicleEnv, rollout: &Rollout, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", TRAJECTORY_COLUMNS.join(","))?;
    let dt = env.config.dt;
    for (k, s) in rollout.states.iter().enumerate() {
        let x = &s.state;
        let t = k as f64 * dt;
        write!(w, "{t},{},{},{},{},{}", x[0], x[1], x[2], x[3], x[4])?;
        match rollout.actions.get(k) {
            Some(&a) => {
                let (delta, throttle) = ActionGrid.get(a);
                writeln!(w, ",{delta},{throttle},{}", rollout.rewards[k])?;
            }
            None => writeln!(w, ",,,")?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{rollout, Environment};
    use crate::rng::SeedTree;
    use crate::sde::{AugmentedState, ConstantPolicy};

    #[test]
    fn trajectory_csv_layout() {
        let env = make_cornering_env(VehicleEnvConfig::cornering()).unwrap();
        let s0 = AugmentedState::new(0.2, vec![10.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let a = ActionGrid.index_of(0.0, 0.8).unwrap();
        let r = rollout(&env, &ConstantPolicy(a), &s0, &mut SeedTree::new(1).stream(7, 0)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&env, &r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,v_x,beta,r,e,psi,delta,throttle,reward");
        assert_eq!(lines.len(), 1 + r.states.len());
        assert!(lines[1].starts_with("0,10,0,"));
        assert!(lines[1].ends_with(",0,0.8,0"));
        assert!(lines.last().unwrap().ends_with(",,,"));
        assert_eq!(r.total_reward(), 1.0);
        assert!(env.safe_set().contains(&r.states.last().unwrap().state));
    }
}
