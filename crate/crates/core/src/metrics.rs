//! Operating characteristics over replicated trials.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Arm, CellKey, Scenario, TrialResult, ARM_COUNT};

/// Default ceiling on the share of replications without an estimate
/// before the bias identity is considered unusable.
pub const DEFAULT_UNDEFINED_THRESHOLD: f64 = 0.01;

/// Errors from aggregation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    /// Standard errors need at least two replications.
    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(usize),
    /// Results came from different cells.
    #[error("replication {0} was run under a different configuration")]
    MixedConfigurations(usize),
    /// Results do not belong to the scenario passed in.
    #[error("results were not produced under scenario {0:?}")]
    ScenarioMismatch(alloc::string::String),
    /// Too many replications without an estimate for this arm.
    #[error("arm {arm} has no estimate in {fraction} of replications (limit {threshold})")]
    Unusable {
        /// Arm index.
        arm: usize,
        /// Share of replications without an estimate.
        fraction: f64,
        /// Ceiling in force.
        threshold: f64,
    },
}

/// What aggregation needs from one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSummary {
    /// Share of patients on the experimental arm.
    pub pstar: f64,
    /// Observed successes over both arms.
    pub observed_successes: u32,
    /// Missing responses over both arms.
    pub missing: u32,
    /// Patients per arm.
    pub assigned: [u32; ARM_COUNT],
    /// Missing responses per arm.
    pub missing_per_arm: [u32; ARM_COUNT],
    /// Observed-only estimate per arm, if the arm has any observation.
    pub estimates: [Option<f64>; ARM_COUNT],
}

impl From<&TrialResult> for TrialSummary {
    fn from(r: &TrialResult) -> Self {
        TrialSummary {
            pstar: r.pstar(),
            observed_successes: r.observed_successes(),
            missing: r.arms[0].missing + r.arms[1].missing,
            assigned: [r.arms[0].assigned(), r.arms[1].assigned()],
            missing_per_arm: [r.arms[0].missing, r.arms[1].missing],
            estimates: r.final_estimates(),
        }
    }
}

/// Resampling setup for the standard error of the bias identity residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    /// Number of resamples.
    pub resamples: u32,
    /// Seed of the resampling stream.
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { resamples: 200, seed: 0x5eed_b007 }
    }
}

/// Per-arm statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmReport {
    /// True success probability.
    pub p_true: f64,
    /// Replications with an estimate.
    pub defined: usize,
    /// Share of replications without an estimate.
    pub undefined_fraction: f64,
    /// Mean of the estimate over defined replications (NaN if none).
    pub mean_estimate: f64,
    /// `mean_estimate - p_true`.
    pub bias: f64,
    /// Standard error of `bias`.
    pub se_bias: f64,
    /// Mean patients on the arm over defined replications.
    pub mean_assigned: f64,
    /// Unbiased sample covariance of patients and estimate.
    pub covariance: f64,
    /// `covariance / mean_assigned`.
    pub cov_over_mean_assigned: f64,
    /// Share of the arm's patients whose response went missing.
    pub missing_fraction: f64,
    /// Bootstrap standard error of the bias identity residual, if requested.
    pub residual_se: Option<f64>,
}

impl ArmReport {
    /// `cov / E[N] - (p - E[p_hat])`.
    pub fn residual(&self) -> f64 {
        self.cov_over_mean_assigned - (self.p_true - self.mean_estimate)
    }
}

/// Operating characteristics of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateReport {
    /// Configuration shared by all replications.
    pub key: CellKey,
    /// Number of replications `R`.
    pub replications: usize,
    /// Mean share of patients on the experimental arm.
    pub mean_pstar: f64,
    /// Its Monte Carlo standard error.
    pub se_pstar: f64,
    /// Mean observed successes.
    pub mean_ons: f64,
    /// Its Monte Carlo standard error.
    pub se_ons: f64,
    /// Control and experimental arm statistics.
    pub arms: [ArmReport; ARM_COUNT],
}

/// Aggregate full trial results. All must share one cell, run under
/// `scenario`.
pub fn aggregate(
    results: &[TrialResult],
    scenario: &Scenario,
    bootstrap: Option<BootstrapConfig>,
) -> Result<AggregateReport, AggregateError> {
    let first = results.first().ok_or(AggregateError::TooFewReplications(0))?;
    if first.key.p_control != scenario.p_control
        || first.key.p_experimental != scenario.p_experimental
        || first.key.trial_size != scenario.trial_size
    {
        return Err(AggregateError::ScenarioMismatch(scenario.label.clone()));
    }
    if let Some(i) = results.iter().position(|r| r.key != first.key) {
        return Err(AggregateError::MixedConfigurations(i));
    }
    let summaries: Vec<TrialSummary> = results.iter().map(TrialSummary::from).collect();
    aggregate_summaries(first.key, &summaries, bootstrap)
}

/// Aggregate per-replication summaries of the cell `key`.
pub fn aggregate_summaries(
    key: CellKey,
    summaries: &[TrialSummary],
    bootstrap: Option<BootstrapConfig>,
) -> Result<AggregateReport, AggregateError> {
    let r = summaries.len();
    if r < 2 {
        return Err(AggregateError::TooFewReplications(r));
    }
    let (mean_pstar, se_pstar) = mean_and_se(summaries.iter().map(|s| s.pstar));
    let (mean_ons, se_ons) = mean_and_se(summaries.iter().map(|s| f64::from(s.observed_successes)));
    let p = [key.p_control, key.p_experimental];
    let arms = [0, 1].map(|k| {
        let mut report = arm_report(summaries.iter(), k, p[k]);
        let assigned: u64 = summaries.iter().map(|s| u64::from(s.assigned[k])).sum();
        let missing: u64 = summaries.iter().map(|s| u64::from(s.missing_per_arm[k])).sum();
        report.missing_fraction = if assigned == 0 { f64::NAN } else { missing as f64 / assigned as f64 };
        report.residual_se = bootstrap.map(|b| bootstrap_residual_se(summaries, k, p[k], b));
        report
    });
    Ok(AggregateReport { key, replications: r, mean_pstar, se_pstar, mean_ons, se_ons, arms })
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, mean) = values.clone().fold((0usize, 0.0), |(n, m), x| (n + 1, m + (x - m) / (n + 1) as f64));
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.map(|x| (x - mean) * (x - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1) as f64 / n as f64))
}

fn arm_report<'a>(summaries: impl Iterator<Item = &'a TrialSummary> + Clone, k: usize, p_true: f64) -> ArmReport {
    let total = summaries.clone().count();
    let defined = summaries.filter_map(|s| s.estimates[k].map(|e| (f64::from(s.assigned[k]), e)));
    let m = defined.clone().count();
    let nan = f64::NAN;
    let mut report = ArmReport {
        p_true,
        defined: m,
        undefined_fraction: if total == 0 { nan } else { (total - m) as f64 / total as f64 },
        mean_estimate: nan,
        bias: nan,
        se_bias: nan,
        mean_assigned: nan,
        covariance: nan,
        cov_over_mean_assigned: nan,
        missing_fraction: nan,
        residual_se: None,
    };
    if m == 0 {
        return report;
    }
    let (mean_estimate, se) = mean_and_se(defined.clone().map(|(_, e)| e));
    let mean_assigned = defined.clone().map(|(n, _)| n).sum::<f64>() / m as f64;
    report.mean_estimate = mean_estimate;
    report.bias = mean_estimate - p_true;
    report.se_bias = se;
    report.mean_assigned = mean_assigned;
    if m >= 2 {
        let cross: f64 = defined.map(|(n, e)| (n - mean_assigned) * (e - mean_estimate)).sum();
        report.covariance = cross / (m - 1) as f64;
        report.cov_over_mean_assigned = report.covariance / mean_assigned;
    }
    report
}

fn bootstrap_residual_se(summaries: &[TrialSummary], k: usize, p_true: f64, config: BootstrapConfig) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let r = summaries.len();
    let mut draws = Vec::with_capacity(config.resamples as usize);
    let mut picks = Vec::with_capacity(r);
    for _ in 0..config.resamples {
        picks.clear();
        picks.extend((0..r).map(|_| &summaries[rng.random_range(0..r)]));
        let residual = arm_report(picks.iter().copied(), k, p_true).residual();
        if residual.is_finite() {
            draws.push(residual);
        }
    }
    mean_and_se(draws.iter().copied()).1 * libm::sqrt(draws.len() as f64)
}

/// Bias identity residual `Cov[N, p_hat] / E[N] - (p - E[p_hat])` of one
/// arm, refused when more than 1% of replications lack an estimate.
pub fn bias_identity_residual(report: &AggregateReport, arm: Arm) -> Result<f64, AggregateError> {
    bias_identity_residual_with(report, arm, DEFAULT_UNDEFINED_THRESHOLD)
}

/// [`bias_identity_residual`] with an explicit ceiling on the share of
/// replications without an estimate.
pub fn bias_identity_residual_with(
    report: &AggregateReport,
    arm: Arm,
    threshold: f64,
) -> Result<f64, AggregateError> {
    let a = &report.arms[arm.index()];
    if !(a.undefined_fraction <= threshold) || a.defined < 2 {
        return Err(AggregateError::Unusable {
            arm: arm.index(),
            fraction: a.undefined_fraction,
            threshold,
        });
    }
    Ok(a.residual())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Algorithm, MissingnessProfile, PolicySpec};
    use crate::rng::TrialStreams;
    use crate::trial::{run_trial, ImputationMode};

    fn replicate(sc: &Scenario, miss: MissingnessProfile, alg: Algorithm, reps: u64) -> Vec<TrialResult> {
        let spec = PolicySpec::new(alg);
        (0..reps)
            .map(|i| {
                let mut streams = TrialStreams::new(42, 7, i);
                run_trial(sc, &miss, &spec, ImputationMode::None, None, &mut streams).unwrap()
            })
            .collect()
    }

    #[test]
    fn hand_computed_statistics() {
        let key = replicate(&Scenario::new("x", 0.5, 0.5, 4).unwrap(), MissingnessProfile::NONE, Algorithm::Fr, 1)[0].key;
        let s = |pstar: f64, ons: u32, n0: u32, e0: Option<f64>| TrialSummary {
            pstar,
            observed_successes: ons,
            missing: 0,
            assigned: [n0, 4 - n0],
            missing_per_arm: [0, 0],
            estimates: [e0, Some(0.5)],
        };
        let sums = [s(0.5, 2, 2, Some(0.5)), s(0.75, 3, 1, Some(1.0)), s(1.0, 2, 0, None)];
        let rep = aggregate_summaries(key, &sums, None).unwrap();
        assert_eq!(rep.replications, 3);
        assert!((rep.mean_pstar - 0.75).abs() < 1e-15);
        assert!((rep.se_pstar - 0.25 / libm::sqrt(3.0)).abs() < 1e-15);
        assert!((rep.mean_ons - 7.0 / 3.0).abs() < 1e-15);
        let a0 = rep.arms[0];
        assert_eq!(a0.defined, 2);
        assert!((a0.undefined_fraction - 1.0 / 3.0).abs() < 1e-15);
        assert!((a0.mean_estimate - 0.75).abs() < 1e-15);
        assert!((a0.bias - 0.25).abs() < 1e-15);
        assert!((a0.mean_assigned - 1.5).abs() < 1e-15);
        // (2 - 1.5)(0.5 - 0.75) + (1 - 1.5)(1 - 0.75) = -0.25
        assert!((a0.covariance + 0.25).abs() < 1e-15);
        assert!((a0.cov_over_mean_assigned + 0.25 / 1.5).abs() < 1e-15);
        assert!(matches!(bias_identity_residual(&rep, Arm::Control), Err(AggregateError::Unusable { .. })));
        assert!(bias_identity_residual(&rep, Arm::Experimental).is_ok());
    }

    #[test]
    fn rejects_bad_inputs() {
        let sc = Scenario::new("x", 0.5, 0.5, 10).unwrap();
        let one = replicate(&sc, MissingnessProfile::NONE, Algorithm::Fr, 1);
        assert_eq!(aggregate(&one, &sc, None), Err(AggregateError::TooFewReplications(1)));
        let mut mixed = replicate(&sc, MissingnessProfile::NONE, Algorithm::Fr, 2);
        mixed.extend(replicate(&sc, MissingnessProfile::NONE, Algorithm::Cb, 1));
        assert_eq!(aggregate(&mixed, &sc, None), Err(AggregateError::MixedConfigurations(2)));
        let other = Scenario::new("y", 0.4, 0.5, 10).unwrap();
        assert!(matches!(aggregate(&mixed[..2], &other, None), Err(AggregateError::ScenarioMismatch(_))));
    }

    #[test]
    fn per_replication_invariants() {
        let sc = Scenario::new("x", 0.6, 0.6, 50).unwrap();
        let miss = MissingnessProfile::new(0.3, 0.1).unwrap();
        for r in replicate(&sc, miss, Algorithm::Ucb, 50) {
            let s = TrialSummary::from(&r);
            let share0 = f64::from(s.assigned[0]) / 50.0;
            assert_eq!(share0 + s.pstar, 1.0);
            assert!(s.observed_successes <= 50 - s.missing);
        }
    }

    #[test]
    fn fixed_randomization_identity_holds() {
        let sc = Scenario::new("S4", 0.7, 0.7, 200).unwrap();
        let results = replicate(&sc, MissingnessProfile::NONE, Algorithm::Fr, 2000);
        let rep = aggregate(&results, &sc, Some(BootstrapConfig::default())).unwrap();
        assert!((rep.mean_pstar - 0.5).abs() < 3.0 * rep.se_pstar);
        for arm in Arm::ALL {
            let a = rep.arms[arm.index()];
            let residual = bias_identity_residual(&rep, arm).unwrap();
            assert!(residual.abs() <= 3.0 * a.residual_se.unwrap(), "{residual} {:?}", a.residual_se);
            assert!(a.bias.abs() <= 3.0 * a.se_bias);
        }
    }
}
