//! Single-trial engine with optional mean imputation of missing responses.

use alloc::vec::Vec;
use core::fmt;

use crate::gittins::{GittinsError, GittinsTable};
use crate::model::{
    ArmState, CellKey, MissingnessProfile, ModelError, Outcome, PolicySpec, Scenario,
    TrialResult,
};
use crate::policy::Allocator;
use crate::rng::{uniform, TrialStreams};

/// How missing responses enter the decision state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ImputationMode {
    /// Missing responses are left out.
    #[default]
    None,
    /// Impute at the observed rate, 0.5 before any observation.
    MeanDefaultHalf,
    /// Impute at the observed rate, 0.9 before any observation.
    MeanDefaultNineTenths,
    /// Impute at the observed rate once the arm has an observation;
    /// earlier missing responses stay missing.
    MeanAfterFirstObservation,
}

impl ImputationMode {
    /// All modes.
    pub const ALL: [ImputationMode; 4] = [
        ImputationMode::None,
        ImputationMode::MeanDefaultHalf,
        ImputationMode::MeanDefaultNineTenths,
        ImputationMode::MeanAfterFirstObservation,
    ];

    /// Stable identifier used in plans and CSV output.
    pub fn name(self) -> &'static str {
        match self {
            ImputationMode::None => "none",
            ImputationMode::MeanDefaultHalf => "mean_default_half",
            ImputationMode::MeanDefaultNineTenths => "mean_default_nine_tenths",
            ImputationMode::MeanAfterFirstObservation => "mean_after_first_observation",
        }
    }

    /// Inverse of [`ImputationMode::name`].
    pub fn parse(name: &str) -> Option<ImputationMode> {
        ImputationMode::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for ImputationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Errors from [`run_trial`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrialError {
    /// Invalid policy parameters.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// Gittins lookup failed mid-trial.
    #[error(transparent)]
    Gittins(#[from] GittinsError),
    /// GI and RGI need a precomputed table.
    #[error("{0} needs a Gittins table")]
    MissingTable(&'static str),
    /// The table was built for another discount.
    #[error("policy discount {policy} does not match the table's {table}")]
    DiscountMismatch {
        /// Discount in the policy.
        policy: f64,
        /// Discount of the table.
        table: f64,
    },
    /// Reachable states exceed the table.
    #[error("trial needs states with s + f up to {needed}, the table stops at {available}")]
    TableTooSmall {
        /// Largest reachable `s + f`.
        needed: u64,
        /// Largest stored `s + f`.
        available: u32,
    },
    /// Gittins lookups need integer prior pseudo-counts.
    #[error("Gittins rules need integer prior pseudo-counts")]
    NonIntegerPrior,
}

/// Success rate used to impute a missing response on this arm, or `None`
/// when no imputation happens.
///
/// The rate is `S / (S + F)` over observed responses only; before the first
/// observation it is 0.5 or 0.9 depending on the mode, and absent under
/// [`ImputationMode::MeanAfterFirstObservation`].
pub fn current_success_estimate(state: &ArmState, mode: ImputationMode) -> Option<f64> {
    match mode {
        ImputationMode::None => None,
        ImputationMode::MeanDefaultHalf => Some(state.observed_rate().unwrap_or(0.5)),
        ImputationMode::MeanDefaultNineTenths => Some(state.observed_rate().unwrap_or(0.9)),
        ImputationMode::MeanAfterFirstObservation => state.observed_rate(),
    }
}

fn check_table(policy: &PolicySpec, trial_size: u32, table: Option<&GittinsTable>) -> Result<(), TrialError> {
    if !policy.algorithm.needs_gittins() {
        return Ok(());
    }
    let table = table.ok_or(TrialError::MissingTable(policy.algorithm.name()))?;
    if table.discount() != policy.discount {
        return Err(TrialError::DiscountMismatch { policy: policy.discount, table: table.discount() });
    }
    if !policy.prior.is_integral() {
        return Err(TrialError::NonIntegerPrior);
    }
    let (s0, f0) = (policy.prior.successes as u32, policy.prior.failures as u32);
    if !table.covers(s0, f0, trial_size) {
        return Err(TrialError::TableTooSmall {
            needed: u64::from(s0) + u64::from(f0) + u64::from(trial_size),
            available: table.max_total(),
        });
    }
    Ok(())
}

/// Run one trial of `scenario.trial_size` patients.
///
/// For each patient `t = 1..=n`: the rule picks an arm from the decision
/// state; the response is missing iff `u_m < p_missing`, otherwise a
/// success iff `u_o < p` (`u_o` is drawn either way). A missing response is
/// imputed as a success iff `u_i < p_hat` when the mode supplies `p_hat`.
///
/// `n = 0` gives an empty result whose `pstar` is NaN.
pub fn run_trial(
    scenario: &Scenario,
    missingness: &MissingnessProfile,
    policy: &PolicySpec,
    mode: ImputationMode,
    table: Option<&GittinsTable>,
    streams: &mut TrialStreams,
) -> Result<TrialResult, TrialError> {
    policy.validate()?;
    let n = scenario.trial_size;
    check_table(policy, n, table)?;

    let key = CellKey {
        p_control: scenario.p_control,
        p_experimental: scenario.p_experimental,
        trial_size: n,
        policy: *policy,
        missingness: *missingness,
        mode,
    };
    let mut arms = [ArmState::new(policy.prior); 2];
    let mut assignments = Vec::with_capacity(n as usize);
    let mut outcomes = Vec::with_capacity(n as usize);
    let mut allocator = Allocator::new(*policy, table, n);

    for t in 1..=n {
        let arm = allocator.decide(&arms, t, streams)?.arm;
        let state = &mut arms[arm.index()];
        let missing = uniform(&mut streams.missingness) < missingness.for_arm(arm);
        let u = uniform(&mut streams.outcome);
        let outcome = if missing {
            Outcome::Missing
        } else if u < scenario.success_probability(arm) {
            Outcome::Success
        } else {
            Outcome::Failure
        };
        let mut feedback = outcome;
        if missing {
            if let Some(rate) = current_success_estimate(state, mode) {
                let success = uniform(&mut streams.imputation) < rate;
                state.record_imputed(success);
                feedback = if success { Outcome::Success } else { Outcome::Failure };
            }
        }
        state.record(outcome);
        allocator.observe(arm, feedback);
        assignments.push(arm);
        outcomes.push(outcome);
    }

    Ok(TrialResult { key, arms, assignments, outcomes })
}
