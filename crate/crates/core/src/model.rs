//! Shared state, configuration and result types.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::trial::ImputationMode;

/// Number of arms. The allocation rules are written for exactly two.
pub const ARM_COUNT: usize = 2;

/// Errors raised when constructing model values.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    /// A probability was outside `[0, 1]` (or NaN).
    #[error("{name} must be a probability in [0, 1], got {value}")]
    NotAProbability {
        /// Field name.
        name: &'static str,
        /// Offending value.
        value: f64,
    },
    /// A missingness probability exceeded the configured ceiling.
    #[error("{name} = {value} exceeds the missingness ceiling {limit}")]
    MissingnessTooHigh {
        /// Field name.
        name: &'static str,
        /// Offending value.
        value: f64,
        /// Ceiling in force.
        limit: f64,
    },
    /// A trial must enrol at least one patient.
    #[error("trial size must be at least 1")]
    EmptyTrial,
    /// Prior pseudo-counts must be strictly positive and finite.
    #[error("prior pseudo-counts must be positive and finite, got ({successes}, {failures})")]
    InvalidPrior {
        /// Prior successes.
        successes: f64,
        /// Prior failures.
        failures: f64,
    },
    /// A policy parameter was out of range.
    #[error("invalid policy parameter: {0}")]
    InvalidParameter(&'static str),
    /// Unknown algorithm name.
    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),
}

fn check_probability(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ModelError::NotAProbability { name, value })
    }
}

/// Arm label: control (`k = 0`) or experimental (`k = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    /// Control arm, index 0.
    Control = 0,
    /// Experimental arm, index 1.
    Experimental = 1,
}

impl Arm {
    /// Both arms in index order.
    pub const ALL: [Arm; ARM_COUNT] = [Arm::Control, Arm::Experimental];

    /// Arm from its index (0 or 1).
    pub fn from_index(index: usize) -> Option<Arm> {
        match index {
            0 => Some(Arm::Control),
            1 => Some(Arm::Experimental),
            _ => None,
        }
    }

    /// Position of the arm in per-arm arrays.
    pub fn index(self) -> usize {
        self as usize
    }

    /// The other arm.
    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Experimental,
            Arm::Experimental => Arm::Control,
        }
    }
}

/// Beta prior pseudo-counts `(s_0, f_0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prior {
    /// Prior successes.
    pub successes: f64,
    /// Prior failures.
    pub failures: f64,
}

impl Prior {
    /// The uniform Beta(1, 1) prior.
    pub const UNIFORM: Prior = Prior { successes: 1.0, failures: 1.0 };

    /// Validated prior.
    pub fn new(successes: f64, failures: f64) -> Result<Prior, ModelError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(successes) && ok(failures) {
            Ok(Prior { successes, failures })
        } else {
            Err(ModelError::InvalidPrior { successes, failures })
        }
    }

    /// Both pseudo-counts are whole numbers.
    pub fn is_integral(&self) -> bool {
        libm::trunc(self.successes) == self.successes && libm::trunc(self.failures) == self.failures
    }
}

impl Default for Prior {
    fn default() -> Self {
        Prior::UNIFORM
    }
}

/// Outcome recorded for one patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    /// Observed success.
    Success,
    /// Observed failure.
    Failure,
    /// Response never observed.
    Missing,
}

/// Beta state of one arm plus its outcome counters.
///
/// The decision state seen by the allocation rules is
/// `(s_0 + S + S_imp, f_0 + F + F_imp)`; missing responses only move `M`.
/// Imputed counts stay at zero unless the trial runs in an imputation mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmState {
    /// Prior pseudo-counts.
    pub prior: Prior,
    /// Observed successes `S`.
    pub observed_successes: u32,
    /// Observed failures `F`.
    pub observed_failures: u32,
    /// Missing responses `M`.
    pub missing: u32,
    /// Imputed successes.
    pub imputed_successes: u32,
    /// Imputed failures.
    pub imputed_failures: u32,
}

impl ArmState {
    /// Fresh arm with the given prior.
    pub fn new(prior: Prior) -> ArmState {
        ArmState {
            prior,
            observed_successes: 0,
            observed_failures: 0,
            missing: 0,
            imputed_successes: 0,
            imputed_failures: 0,
        }
    }

    /// Arm with a uniform prior and the given observed counts.
    pub fn with_counts(successes: u32, failures: u32) -> ArmState {
        ArmState {
            observed_successes: successes,
            observed_failures: failures,
            ..ArmState::new(Prior::UNIFORM)
        }
    }

    /// Patients assigned to the arm, `N = S + F + M`.
    pub fn assigned(&self) -> u32 {
        self.observed_successes + self.observed_failures + self.missing
    }

    /// Observed responses `S + F`.
    pub fn observed(&self) -> u32 {
        self.observed_successes + self.observed_failures
    }

    /// Successes feeding the decision state (observed plus imputed).
    pub fn decision_successes(&self) -> u32 {
        self.observed_successes + self.imputed_successes
    }

    /// Failures feeding the decision state (observed plus imputed).
    pub fn decision_failures(&self) -> u32 {
        self.observed_failures + self.imputed_failures
    }

    /// Beta posterior parameters `(s_0 + S + S_imp, f_0 + F + F_imp)`.
    pub fn beta_parameters(&self) -> (f64, f64) {
        (
            self.prior.successes + f64::from(self.decision_successes()),
            self.prior.failures + f64::from(self.decision_failures()),
        )
    }

    /// Posterior mean `(s_0 + S) / (s_0 + f_0 + S + F)`.
    pub fn posterior_mean(&self) -> f64 {
        let (a, b) = self.beta_parameters();
        a / (a + b)
    }

    /// Pseudo-count mass `s_0 + f_0 + S + F` behind every exploration bonus.
    pub fn effective_observation_count(&self) -> f64 {
        let (a, b) = self.beta_parameters();
        a + b
    }

    /// Observed-only success rate `S / (S + F)`, undefined without observations.
    pub fn observed_rate(&self) -> Option<f64> {
        match self.observed() {
            0 => None,
            m => Some(f64::from(self.observed_successes) / f64::from(m)),
        }
    }

    /// Record one outcome. Imputed outcomes go through [`ArmState::record_imputed`].
    pub fn record(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Success => self.observed_successes += 1,
            Outcome::Failure => self.observed_failures += 1,
            Outcome::Missing => self.missing += 1,
        }
    }

    /// Record an imputed replacement for a missing response.
    pub fn record_imputed(&mut self, success: bool) {
        if success {
            self.imputed_successes += 1;
        } else {
            self.imputed_failures += 1;
        }
    }
}

impl Default for ArmState {
    fn default() -> Self {
        ArmState::new(Prior::UNIFORM)
    }
}

/// True success probabilities and trial size.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Display label, e.g. `"S7"`.
    pub label: String,
    /// Control success probability `p_0`.
    pub p_control: f64,
    /// Experimental success probability `p_1`.
    pub p_experimental: f64,
    /// Number of patients `n`.
    pub trial_size: u32,
}

impl Scenario {
    /// Validated scenario.
    pub fn new(
        label: impl Into<String>,
        p_control: f64,
        p_experimental: f64,
        trial_size: u32,
    ) -> Result<Scenario, ModelError> {
        check_probability("p_control", p_control)?;
        check_probability("p_experimental", p_experimental)?;
        if trial_size == 0 {
            return Err(ModelError::EmptyTrial);
        }
        Ok(Scenario { label: label.into(), p_control, p_experimental, trial_size })
    }

    /// Success probability of `arm`.
    pub fn success_probability(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.p_control,
            Arm::Experimental => self.p_experimental,
        }
    }

    /// `p_0 == p_1`.
    pub fn is_null(&self) -> bool {
        self.p_control == self.p_experimental
    }
}

/// Per-arm probabilities that a response goes missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingnessProfile {
    /// Control-arm missingness `p_0^m`.
    pub p0_missing: f64,
    /// Experimental-arm missingness `p_1^m`.
    pub p1_missing: f64,
}

impl MissingnessProfile {
    /// Ceiling used by [`MissingnessProfile::new`].
    pub const DEFAULT_CEILING: f64 = 0.5;

    /// No missing data.
    pub const NONE: MissingnessProfile = MissingnessProfile { p0_missing: 0.0, p1_missing: 0.0 };

    /// Profile with both probabilities at most 0.5.
    pub fn new(p0_missing: f64, p1_missing: f64) -> Result<MissingnessProfile, ModelError> {
        MissingnessProfile::with_ceiling(p0_missing, p1_missing, Self::DEFAULT_CEILING)
    }

    /// Profile allowing missingness up to 1, for stress tests.
    pub fn stress(p0_missing: f64, p1_missing: f64) -> Result<MissingnessProfile, ModelError> {
        MissingnessProfile::with_ceiling(p0_missing, p1_missing, 1.0)
    }

    /// Profile validated against an explicit ceiling.
    pub fn with_ceiling(
        p0_missing: f64,
        p1_missing: f64,
        ceiling: f64,
    ) -> Result<MissingnessProfile, ModelError> {
        for (name, value) in [("p0_missing", p0_missing), ("p1_missing", p1_missing)] {
            check_probability(name, value)?;
            if value > ceiling {
                return Err(ModelError::MissingnessTooHigh { name, value, limit: ceiling });
            }
        }
        Ok(MissingnessProfile { p0_missing, p1_missing })
    }

    /// Missingness probability of `arm`.
    pub fn for_arm(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.p0_missing,
            Arm::Experimental => self.p1_missing,
        }
    }

    /// The profile with the arms swapped.
    pub fn mirrored(&self) -> MissingnessProfile {
        MissingnessProfile { p0_missing: self.p1_missing, p1_missing: self.p0_missing }
    }
}

impl Default for MissingnessProfile {
    fn default() -> Self {
        MissingnessProfile::NONE
    }
}

/// Allocation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Fixed (equal) randomization.
    Fr,
    /// Tuned Thompson sampling, `c = t / 2n`.
    Tts,
    /// Raw Thompson sampling, `c = 1`.
    Rts,
    /// Randomized play-the-winner urn.
    Rpw,
    /// Current belief (posterior mean, greedy).
    Cb,
    /// Gittins index.
    Gi,
    /// Upper confidence bound.
    Ucb,
    /// Randomized upper confidence bound.
    RandUcb,
    /// Randomized belief index.
    Rbi,
    /// Randomized Gittins index.
    Rgi,
}

impl Algorithm {
    /// Every rule, fixed randomization first.
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Fr,
        Algorithm::Tts,
        Algorithm::Rts,
        Algorithm::Rpw,
        Algorithm::Cb,
        Algorithm::Gi,
        Algorithm::Ucb,
        Algorithm::RandUcb,
        Algorithm::Rbi,
        Algorithm::Rgi,
    ];

    /// Short name used in files and reports.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fr => "FR",
            Algorithm::Tts => "TTS",
            Algorithm::Rts => "RTS",
            Algorithm::Rpw => "RPW",
            Algorithm::Cb => "CB",
            Algorithm::Gi => "GI",
            Algorithm::Ucb => "UCB",
            Algorithm::RandUcb => "RandUCB",
            Algorithm::Rbi => "RBI",
            Algorithm::Rgi => "RGI",
        }
    }

    /// Parse a short name (case-insensitive).
    pub fn parse(name: &str) -> Result<Algorithm, ModelError> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| ModelError::UnknownAlgorithm(String::from(name)))
    }

    /// Rules that read the Gittins table.
    pub fn needs_gittins(self) -> bool {
        matches!(self, Algorithm::Gi | Algorithm::Rgi)
    }

    /// Rules that randomize via an allocation probability.
    pub fn is_randomized(self) -> bool {
        matches!(self, Algorithm::Fr | Algorithm::Tts | Algorithm::Rts | Algorithm::Rpw)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Exponent `c` of the Thompson allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TuningMode {
    /// `c = t / (2n)` with `t` the 1-based patient index.
    TimeVarying,
    /// Constant exponent.
    Fixed(f64),
}

impl TuningMode {
    /// Exponent for patient `t` of `n`.
    pub fn exponent(self, t: u32, n: u32) -> f64 {
        match self {
            TuningMode::TimeVarying => f64::from(t) / (2.0 * f64::from(n)),
            TuningMode::Fixed(c) => c,
        }
    }
}

/// Interval `[L, U]` carrying the RandUCB support points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportRange {
    /// Constant interval.
    Fixed {
        /// Lower end `L`.
        lower: f64,
        /// Upper end `U`.
        upper: f64,
    },
    /// Degenerate interval `[beta_t, beta_t]` with `beta_t = sqrt(2 ln t)`.
    UcbBeta,
}

impl SupportRange {
    /// Interval in force when allocating patient `t`.
    pub fn bounds(self, t: u32) -> (f64, f64) {
        match self {
            SupportRange::Fixed { lower, upper } => (lower, upper),
            SupportRange::UcbBeta => {
                let beta = ucb_beta(t);
                (beta, beta)
            }
        }
    }
}

pub(crate) fn ucb_beta(t: u32) -> f64 {
    libm::sqrt(2.0 * libm::log(f64::from(t)))
}

/// Discrete RandUCB perturbation law: `points` equally spaced atoms on
/// the support range, each with equal weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandUcbSupport {
    /// Number of atoms `M`.
    pub points: u32,
    /// Support interval.
    pub range: SupportRange,
}

impl Default for RandUcbSupport {
    fn default() -> Self {
        RandUcbSupport { points: 20, range: SupportRange::Fixed { lower: 0.0, upper: 1.0 } }
    }
}

/// Which rule allocates patients, plus its tuning parameters.
///
/// Parameters are only read by the matching rule. [`PolicySpec::new`]
/// fills in the defaults for every rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    /// Allocation rule.
    pub algorithm: Algorithm,
    /// Thompson exponent (FR, TTS, RTS).
    pub tuning: TuningMode,
    /// Gittins discount factor (GI, RGI).
    pub discount: f64,
    /// RandUCB perturbation law.
    pub randucb: RandUcbSupport,
    /// Mean of the exponential perturbation (RBI, RGI).
    pub perturbation_mean: f64,
    /// Prior shared by both arms.
    pub prior: Prior,
}

impl PolicySpec {
    /// Default Gittins discount.
    pub const DEFAULT_DISCOUNT: f64 = 0.99;

    /// Rule with its default parameters.
    pub fn new(algorithm: Algorithm) -> PolicySpec {
        let tuning = match algorithm {
            Algorithm::Fr => TuningMode::Fixed(0.0),
            Algorithm::Tts => TuningMode::TimeVarying,
            _ => TuningMode::Fixed(1.0),
        };
        PolicySpec {
            algorithm,
            tuning,
            discount: Self::DEFAULT_DISCOUNT,
            randucb: RandUcbSupport::default(),
            perturbation_mean: ARM_COUNT as f64,
            prior: Prior::UNIFORM,
        }
    }

    /// Check the parameters the chosen rule actually reads.
    pub fn validate(&self) -> Result<(), ModelError> {
        Prior::new(self.prior.successes, self.prior.failures)?;
        match self.algorithm {
            Algorithm::Fr | Algorithm::Tts | Algorithm::Rts => {
                if let TuningMode::Fixed(c) = self.tuning {
                    if !(c.is_finite() && c >= 0.0) {
                        return Err(ModelError::InvalidParameter("tuning exponent must be >= 0"));
                    }
                }
            }
            Algorithm::Gi | Algorithm::Rgi => {
                if !(self.discount > 0.0 && self.discount < 1.0) {
                    return Err(ModelError::InvalidParameter("discount must lie in (0, 1)"));
                }
            }
            Algorithm::RandUcb => {
                if self.randucb.points == 0 {
                    return Err(ModelError::InvalidParameter("RandUCB needs at least one point"));
                }
                if let SupportRange::Fixed { lower, upper } = self.randucb.range {
                    if !(lower.is_finite() && upper.is_finite() && lower <= upper) {
                        return Err(ModelError::InvalidParameter("RandUCB range needs L <= U"));
                    }
                }
            }
            _ => {}
        }
        if matches!(self.algorithm, Algorithm::Rbi | Algorithm::Rgi)
            && !(self.perturbation_mean.is_finite() && self.perturbation_mean > 0.0)
        {
            return Err(ModelError::InvalidParameter("perturbation mean must be positive"));
        }
        Ok(())
    }
}

/// Identity of a simulation cell; all replications aggregated together
/// must share it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    /// Control success probability.
    pub p_control: f64,
    /// Experimental success probability.
    pub p_experimental: f64,
    /// Trial size.
    pub trial_size: u32,
    /// Policy with parameters.
    pub policy: PolicySpec,
    /// Missingness profile.
    pub missingness: MissingnessProfile,
    /// Imputation mode.
    pub mode: ImputationMode,
}

/// Everything one trial produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    /// Configuration the trial ran under.
    pub key: CellKey,
    /// Final state per arm (control, experimental).
    pub arms: [ArmState; ARM_COUNT],
    /// Arm given to each patient, in enrolment order.
    pub assignments: Vec<Arm>,
    /// Recorded outcome of each patient.
    pub outcomes: Vec<Outcome>,
}

impl TrialResult {
    /// Number of patients.
    pub fn trial_size(&self) -> usize {
        self.assignments.len()
    }

    /// Observed-only estimates `S / (S + F)` per arm.
    pub fn final_estimates(&self) -> [Option<f64>; ARM_COUNT] {
        [self.arms[0].observed_rate(), self.arms[1].observed_rate()]
    }

    /// Share of patients on the experimental arm, `N_1 / n`.
    /// NaN for an empty trial.
    pub fn pstar(&self) -> f64 {
        match self.assignments.len() {
            0 => f64::NAN,
            n => f64::from(self.arms[1].assigned()) / n as f64,
        }
    }

    /// Observed successes over both arms.
    pub fn observed_successes(&self) -> u32 {
        self.arms[0].observed_successes + self.arms[1].observed_successes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(s: u32, f: u32) -> ArmState {
        ArmState::with_counts(s, f)
    }

    #[test]
    fn posterior_mean_examples() {
        assert_eq!(state(0, 0).posterior_mean(), 0.5);
        assert!((state(3, 1).posterior_mean() - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(state(199, 0).posterior_mean(), 200.0 / 201.0);
    }

    #[test]
    fn effective_count_examples() {
        assert_eq!(state(0, 0).effective_observation_count(), 2.0);
        assert_eq!(state(3, 1).effective_observation_count(), 6.0);
        assert_eq!(state(50, 50).effective_observation_count(), 102.0);
    }

    #[test]
    fn missing_responses_do_not_move_the_posterior() {
        let mut arm = state(3, 1);
        let before = arm.posterior_mean();
        for _ in 0..5 {
            arm.record(Outcome::Missing);
        }
        assert_eq!(arm.posterior_mean(), before);
        assert_eq!(arm.assigned(), 9);
        assert_eq!(arm.observed(), 4);
    }

    #[test]
    fn imputed_outcomes_feed_decisions_but_not_observed_rate() {
        let mut arm = state(1, 1);
        arm.record(Outcome::Missing);
        arm.record_imputed(true);
        assert_eq!(arm.observed_rate(), Some(0.5));
        assert!((arm.posterior_mean() - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn scenario_validation() {
        assert!(Scenario::new("x", 0.1, 1.2, 10).is_err());
        assert_eq!(Scenario::new("x", 0.1, 0.2, 0), Err(ModelError::EmptyTrial));
        assert!(Scenario::new("x", 0.0, 1.0, 1).is_ok());
    }

    #[test]
    fn missingness_ceiling() {
        assert!(MissingnessProfile::new(0.5, 0.0).is_ok());
        assert!(matches!(
            MissingnessProfile::new(0.6, 0.0),
            Err(ModelError::MissingnessTooHigh { .. })
        ));
        assert!(MissingnessProfile::stress(1.0, 0.9).is_ok());
        assert!(MissingnessProfile::stress(1.1, 0.0).is_err());
    }

    #[test]
    fn policy_defaults() {
        assert_eq!(PolicySpec::new(Algorithm::Tts).tuning, TuningMode::TimeVarying);
        assert_eq!(PolicySpec::new(Algorithm::Rts).tuning, TuningMode::Fixed(1.0));
        assert_eq!(PolicySpec::new(Algorithm::Fr).tuning, TuningMode::Fixed(0.0));
        let gi = PolicySpec::new(Algorithm::Gi);
        assert_eq!(gi.discount, 0.99);
        assert_eq!(gi.randucb.points, 20);
        assert_eq!(gi.perturbation_mean, 2.0);
        for a in Algorithm::ALL {
            assert!(PolicySpec::new(a).validate().is_ok());
            assert_eq!(Algorithm::parse(a.name()).unwrap(), a);
        }
        assert!(Algorithm::parse("EXP3").is_err());
    }

    #[test]
    fn tts_exponent_grows_to_half() {
        assert_eq!(TuningMode::TimeVarying.exponent(100, 200), 0.25);
        assert_eq!(TuningMode::TimeVarying.exponent(200, 200), 0.5);
    }
}
