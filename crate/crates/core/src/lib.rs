//! Physics-informed Q-learning of maximal safety probabilities for
//! controlled stochastic systems.
//!
//! The crate contains the SDE and augmented-MDP core ([`sde`], [`env`]), a
//! one-dimensional benchmark with known ground truth ([`benchmark`]), a
//! bicycle-model vehicle simulator ([`vehicle`]), a small MLP with exact input
//! derivatives ([`qnet`]), the training loop ([`training`]) and independent
//! verification oracles ([`oracle`]).

pub mod benchmark;
pub mod env;
pub mod oracle;
pub mod qnet;
pub mod rng;
pub mod sde;
pub mod training;
pub mod vehicle;
