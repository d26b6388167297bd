//! Lane-based highway simulation and adversarial safety-critical scenario
//! generation.
//!
//! The crate is organized around the pipeline: simulate traffic ([`sim`]),
//! size the nested safety regions ahead of the ego ([`region`]), score
//! criticality and rewards ([`criticality`]), train an adversarial attacker
//! ([`agent`]), and generate/analyze collision scenarios in batch ([`lab`]).
//! Episodes are seeded and replay bit-exactly ([`episode`]); run settings
//! come from a flat key-value file ([`config`]).

pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod criticality;
pub mod episode;
pub mod fixtures;
pub mod lab;
pub mod region;
pub mod rng;
pub mod sim;
