//! Simulation, min-entropy evaluation and randomness extraction for a
//! phase-noise quantum random number generator.
//!
//! The crate follows the data path of the device: a fitted noise model
//! ([`noise_model`]) drives a simulated front end ([`source_sim`]), whose raw
//! samples are assessed for quantum min-entropy ([`minentropy`]), hashed into
//! near-uniform bits ([`extractors`]) and checked by a statistical battery
//! ([`stat_tests`]).

pub mod bits;
pub mod extractors;
pub mod minentropy;
pub mod noise_model;
pub mod pipeline;
pub mod source_sim;
pub mod stat_tests;

pub use bits::BitString;
