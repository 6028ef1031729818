//! Experiment runner for two-armed Bernoulli bandits with missing outcomes.
//!
//! The simulation model lives in [`missbandit_core`]; this crate adds the
//! built-in scenario catalog, plan files, parallel execution, the Gittins
//! table cache, CSV output and named figure reproductions.

pub mod cache;
pub mod catalog;
pub mod output;
pub mod plan;
pub mod reproduce;

pub use missbandit_core as core;
