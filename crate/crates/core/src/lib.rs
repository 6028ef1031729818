//! Two-armed Bernoulli bandit allocation with missing-at-random outcomes.
//!
//! This crate holds the allocation machinery and nothing that touches the
//! filesystem or threads: arm state, the nine allocation rules plus fixed
//! randomization, Gittins index calibration, the single-trial engine (with
//! optional mean imputation of missing outcomes) and the aggregation of
//! replicated trials into operating characteristics.
//!
//! It is `no_std` and only needs `alloc`. The `missbandit` crate layers
//! the scenario catalog, parallel experiment plans, table caching, CSV
//! output and the command-line tool on top.
//!
//! ```
//! use missbandit_core::{
//!     run_trial, Algorithm, ImputationMode, MissingnessProfile, PolicySpec, Scenario,
//!     TrialStreams,
//! };
//!
//! let scenario = Scenario::new("S4", 0.7, 0.7, 200).unwrap();
//! let missing = MissingnessProfile::new(0.0, 0.3).unwrap();
//! let policy = PolicySpec::new(Algorithm::Ucb);
//! let mut streams = TrialStreams::new(7, 0, 0);
//! let trial = run_trial(&scenario, &missing, &policy, ImputationMode::None, None, &mut streams)
//!     .unwrap();
//! assert_eq!(trial.assignments.len(), 200);
//! ```

#![no_std]
#![warn(missing_docs)]

extern crate alloc;

pub mod gittins;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod rng;
pub mod trial;

pub use crate::gittins::{
    build_table, gittins_index, refine_index, retirement_value, sweep_chunk, sweep_pays, sweep_points,
    sweep_step, table_cells, trivial_bracket, Calibration, GittinsError, GittinsTable, SweepChunk,
};
pub use crate::metrics::{
    aggregate, aggregate_summaries, bias_identity_residual, bias_identity_residual_with,
    AggregateError, AggregateReport, ArmReport, BootstrapConfig, TrialSummary,
    DEFAULT_UNDEFINED_THRESHOLD,
};
pub use crate::model::{
    Algorithm, Arm, ArmState, CellKey, ModelError, MissingnessProfile, Outcome, PolicySpec,
    Prior, RandUcbSupport, Scenario, SupportRange, TrialResult, TuningMode,
};
pub use crate::policy::{
    perturbation_scale, perturbed_index, randucb_index, rpw_draw_and_update, select_arm, superiority_probability,
    thompson_allocation, ucb_index, Allocator, Decision, DecisionKind, Urn,
};
pub use crate::rng::TrialStreams;
pub use crate::trial::{current_success_estimate, run_trial, ImputationMode, TrialError};
