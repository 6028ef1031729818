//! Experiment plans: a grid of scenarios, missingness profiles, policies
//! and imputation modes, each cell replicated `R` times.
//!
//! Plan files are TOML:
//!
//! ```toml
//! name = "null-suite"
//! seed = 20240101
//! replications = 10000       # per cell, default 10000
//! tts_replications = 1000    # TTS cells, default 1000
//! scenarios = ["S1", "S2"]   # built-in labels
//! missingness = ["sixteen"]  # grid36, equal, control_only, experimental_only, sixteen
//! policies = ["all"]         # or names: FR TTS RTS RPW CB GI UCB RandUCB RBI RGI
//! modes = ["none", "mean_default_half"]
//!
//! [[custom_scenarios]]
//! label = "mine"
//! p_control = 0.2
//! p_experimental = 0.4
//! trial_size = 100
//!
//! [[custom_profiles]]
//! p0_missing = 0.1
//! p1_missing = 0.3
//! ```
//!
//! Every list may be empty; a plan without scenarios or profiles has no
//! cells. Replication `r` of a cell draws from
//! `TrialStreams::new(seed, cell_id, r)`, where the cell id hashes the
//! cell's configuration (not its position), so results do not depend on
//! plan layout, execution order or thread count.

use std::hash::Hasher;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Deserialize;

use missbandit_core::{
    aggregate_summaries, run_trial, AggregateError, AggregateReport, Algorithm, BootstrapConfig, CellKey,
    GittinsTable, ImputationMode, MissingnessProfile, ModelError, PolicySpec, Scenario,
    TrialError, TrialStreams, TrialSummary,
};

use crate::catalog::{self, CatalogError, ProfileSet};

/// Default replications per cell.
pub const DEFAULT_REPLICATIONS: u64 = 10_000;
/// Default replications for TTS cells.
pub const DEFAULT_TTS_REPLICATIONS: u64 = 1_000;

/// Errors building a plan.
#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    /// TOML syntax or schema error (the message carries line and column).
    #[error("plan file: {0}")]
    Parse(#[from] toml::de::Error),
    /// Unknown scenario or profile set.
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    /// Invalid value in a scenario, profile or policy.
    #[error("{field}: {source}")]
    Model {
        /// Where the value came from.
        field: String,
        /// What was wrong with it.
        source: ModelError,
    },
    /// Unknown imputation mode.
    #[error("modes: unknown imputation mode {0:?}")]
    UnknownMode(String),
    /// Replication count must be positive.
    #[error("{0} must be at least 1")]
    ZeroReplications(&'static str),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    #[serde(default)]
    name: String,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_replications")]
    replications: u64,
    #[serde(default = "default_tts_replications")]
    tts_replications: u64,
    #[serde(default)]
    scenarios: Vec<String>,
    #[serde(default)]
    custom_scenarios: Vec<ScenarioEntry>,
    #[serde(default)]
    missingness: Vec<String>,
    #[serde(default)]
    custom_profiles: Vec<ProfileEntry>,
    #[serde(default)]
    policies: Vec<String>,
    #[serde(default = "default_modes")]
    modes: Vec<String>,
}

fn default_seed() -> u64 {
    1
}

fn default_replications() -> u64 {
    DEFAULT_REPLICATIONS
}

fn default_tts_replications() -> u64 {
    DEFAULT_TTS_REPLICATIONS
}

fn default_modes() -> Vec<String> {
    vec!["none".to_string()]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioEntry {
    label: String,
    p_control: f64,
    p_experimental: f64,
    trial_size: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileEntry {
    p0_missing: f64,
    p1_missing: f64,
}

/// A full factorial simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    /// Free-form name.
    pub name: String,
    /// Scenarios, in output order.
    pub scenarios: Vec<Scenario>,
    /// Missingness profiles, in output order.
    pub profiles: Vec<MissingnessProfile>,
    /// Policies, in output order.
    pub policies: Vec<PolicySpec>,
    /// Imputation modes, in output order.
    pub modes: Vec<ImputationMode>,
    /// Replications per cell.
    pub replications: u64,
    /// Replications per TTS cell.
    pub tts_replications: u64,
    /// Master seed.
    pub seed: u64,
}

impl ExperimentPlan {
    /// Plan with default replication counts and seed 1.
    pub fn new(
        name: impl Into<String>,
        scenarios: Vec<Scenario>,
        profiles: Vec<MissingnessProfile>,
        policies: Vec<PolicySpec>,
        modes: Vec<ImputationMode>,
    ) -> ExperimentPlan {
        ExperimentPlan {
            name: name.into(),
            scenarios,
            profiles,
            policies,
            modes,
            replications: DEFAULT_REPLICATIONS,
            tts_replications: DEFAULT_TTS_REPLICATIONS,
            seed: default_seed(),
        }
    }

    /// Parse a TOML plan.
    pub fn from_toml_str(text: &str) -> Result<ExperimentPlan, PlanError> {
        let file: PlanFile = toml::from_str(text)?;
        if file.replications == 0 {
            return Err(PlanError::ZeroReplications("replications"));
        }
        if file.tts_replications == 0 {
            return Err(PlanError::ZeroReplications("tts_replications"));
        }
        let mut scenarios = Vec::new();
        for label in &file.scenarios {
            scenarios.push(catalog::lookup(label)?);
        }
        for (i, s) in file.custom_scenarios.iter().enumerate() {
            let scenario = Scenario::new(s.label.clone(), s.p_control, s.p_experimental, s.trial_size)
                .map_err(|source| PlanError::Model { field: format!("custom_scenarios[{i}]"), source })?;
            scenarios.push(scenario);
        }
        let mut profiles = Vec::new();
        for name in &file.missingness {
            for p in ProfileSet::parse(name)?.profiles() {
                if !profiles.contains(&p) {
                    profiles.push(p);
                }
            }
        }
        for (i, p) in file.custom_profiles.iter().enumerate() {
            let profile = MissingnessProfile::new(p.p0_missing, p.p1_missing)
                .map_err(|source| PlanError::Model { field: format!("custom_profiles[{i}]"), source })?;
            profiles.push(profile);
        }
        let mut policies = Vec::new();
        for name in &file.policies {
            if name.eq_ignore_ascii_case("all") {
                policies.extend(Algorithm::ALL.into_iter().map(PolicySpec::new));
            } else {
                let algorithm = Algorithm::parse(name)
                    .map_err(|source| PlanError::Model { field: "policies".into(), source })?;
                policies.push(PolicySpec::new(algorithm));
            }
        }
        let mut modes = Vec::new();
        for name in &file.modes {
            modes.push(ImputationMode::parse(name).ok_or_else(|| PlanError::UnknownMode(name.clone()))?);
        }
        Ok(ExperimentPlan {
            name: file.name,
            scenarios,
            profiles,
            policies,
            modes,
            replications: file.replications,
            tts_replications: file.tts_replications,
            seed: file.seed,
        })
    }

    /// Multiply every replication count by `factor` (rounded, at least 2).
    pub fn scaled(mut self, factor: f64) -> ExperimentPlan {
        let scale = |r: u64| ((r as f64 * factor).round() as u64).max(2);
        self.replications = scale(self.replications);
        self.tts_replications = scale(self.tts_replications);
        self
    }

    /// Replications for cells of `policy`.
    pub fn replications_for(&self, policy: &PolicySpec) -> u64 {
        if policy.algorithm == Algorithm::Tts {
            self.tts_replications
        } else {
            self.replications
        }
    }

    /// Cells in output order: scenario, then profile, policy, mode.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for scenario in &self.scenarios {
            for profile in &self.profiles {
                for policy in &self.policies {
                    for &mode in &self.modes {
                        cells.push(Cell {
                            scenario: scenario.clone(),
                            missingness: *profile,
                            policy: *policy,
                            mode,
                            replications: self.replications_for(policy),
                        });
                    }
                }
            }
        }
        cells
    }

    /// True if any policy reads a Gittins table.
    pub fn needs_gittins(&self) -> bool {
        self.policies.iter().any(|p| p.algorithm.needs_gittins())
    }

    /// Largest `s + f` a Gittins rule can reach in this plan.
    pub fn max_reachable_total(&self) -> u64 {
        let n = self.scenarios.iter().map(|s| u64::from(s.trial_size)).max().unwrap_or(0);
        let prior = self
            .policies
            .iter()
            .filter(|p| p.algorithm.needs_gittins())
            .map(|p| p.prior.successes + p.prior.failures)
            .fold(0.0, f64::max);
        n + prior.ceil() as u64
    }
}

/// One configuration of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Scenario.
    pub scenario: Scenario,
    /// Missingness profile.
    pub missingness: MissingnessProfile,
    /// Policy.
    pub policy: PolicySpec,
    /// Imputation mode.
    pub mode: ImputationMode,
    /// Replications to run.
    pub replications: u64,
}

impl Cell {
    /// Configuration shared by the cell's trials.
    pub fn key(&self) -> CellKey {
        CellKey {
            p_control: self.scenario.p_control,
            p_experimental: self.scenario.p_experimental,
            trial_size: self.scenario.trial_size,
            policy: self.policy,
            missingness: self.missingness,
            mode: self.mode,
        }
    }

    /// Stable id: FNV-1a of the canonical configuration text.
    pub fn id(&self) -> u64 {
        let mut hasher = fnv::FnvHasher::default();
        hasher.write(self.canonical().as_bytes());
        hasher.finish()
    }

    fn canonical(&self) -> String {
        let k = self.key();
        format!(
            "p0={:?};p1={:?};n={};policy={:?};miss={:?},{:?};mode={}",
            k.p_control,
            k.p_experimental,
            k.trial_size,
            k.policy,
            k.missingness.p0_missing,
            k.missingness.p1_missing,
            k.mode
        )
    }
}

/// Why a cell produced no report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CellError {
    /// A trial failed.
    #[error("replication {replication}: {source}")]
    Trial {
        /// Failing replication.
        replication: u64,
        /// Cause.
        source: TrialError,
    },
    /// Aggregation failed.
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

/// Report (or failure) of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    /// The cell.
    pub cell: Cell,
    /// Master seed it ran under.
    pub seed: u64,
    /// Its report.
    pub report: Result<AggregateReport, CellError>,
}

/// Run every replication of one cell and aggregate them in replication
/// order.
pub fn run_cell(cell: &Cell, seed: u64, table: Option<&GittinsTable>) -> Result<AggregateReport, CellError> {
    run_cell_with(cell, seed, table, None)
}

/// [`run_cell`] with bootstrap standard errors for the bias identity
/// residual.
pub fn run_cell_with(
    cell: &Cell,
    seed: u64,
    table: Option<&GittinsTable>,
    bootstrap: Option<BootstrapConfig>,
) -> Result<AggregateReport, CellError> {
    let id = cell.id();
    let summaries = (0..cell.replications)
        .into_par_iter()
        .map(|r| {
            let mut streams = TrialStreams::new(seed, id, r);
            run_trial(&cell.scenario, &cell.missingness, &cell.policy, cell.mode, table, &mut streams)
                .map(|t| TrialSummary::from(&t))
                .map_err(|source| CellError::Trial { replication: r, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate_summaries(cell.key(), &summaries, bootstrap)?)
}

/// Progress of a running plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    /// Cells finished.
    pub cells_done: usize,
    /// Cells in the plan.
    pub cells_total: usize,
    /// Trials finished.
    pub trials_done: u64,
    /// Trials in the plan.
    pub trials_total: u64,
}

/// Run all cells on the rayon pool in scope. Failed cells are recorded,
/// never fatal. `progress` is called after each finished cell.
pub fn run_plan(
    plan: &ExperimentPlan,
    table: Option<&GittinsTable>,
    progress: Option<&(dyn Fn(Progress) + Sync)>,
) -> Vec<CellOutcome> {
    let cells = plan.cells();
    let cells_total = cells.len();
    let trials_total: u64 = cells.iter().map(|c| c.replications).sum();
    let cells_done = AtomicUsize::new(0);
    let trials_done = AtomicU64::new(0);
    cells
        .into_par_iter()
        .map(|cell| {
            let report = run_cell(&cell, plan.seed, table);
            let done = cells_done.fetch_add(1, Ordering::Relaxed) + 1;
            let trials = trials_done.fetch_add(cell.replications, Ordering::Relaxed) + cell.replications;
            if let Some(report_progress) = progress {
                report_progress(Progress {
                    cells_done: done,
                    cells_total,
                    trials_done: trials,
                    trials_total,
                });
            }
            CellOutcome { cell, seed: plan.seed, report }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_schema() {
        let plan = ExperimentPlan::from_toml_str(
            r#"
            name = "x"
            seed = 9
            replications = 50
            tts_replications = 5
            scenarios = ["S1", "s7"]
            missingness = ["equal", "control_only"]
            policies = ["TTS", "cb"]
            modes = ["none", "mean_default_half"]
            [[custom_scenarios]]
            label = "mine"
            p_control = 0.2
            p_experimental = 0.4
            trial_size = 10
            [[custom_profiles]]
            p0_missing = 0.1
            p1_missing = 0.3
            "#,
        )
        .unwrap();
        assert_eq!(plan.scenarios.len(), 3);
        // equal and control_only share (0, 0)
        assert_eq!(plan.profiles.len(), 12);
        assert_eq!(plan.cells().len(), 3 * 12 * 2 * 2);
        assert_eq!(plan.cells()[0].replications, 5);
        assert_eq!(plan.cells()[2].replications, 50);
    }

    #[test]
    fn reports_errors_with_location() {
        let err = ExperimentPlan::from_toml_str("seed = \"x\"\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        let err = ExperimentPlan::from_toml_str("sed = 3\n").unwrap_err();
        assert!(err.to_string().contains("sed"), "{err}");
        assert!(matches!(
            ExperimentPlan::from_toml_str("scenarios = [\"S13\"]"),
            Err(PlanError::Catalog(CatalogError::UnknownScenario(_)))
        ));
        assert!(matches!(ExperimentPlan::from_toml_str("modes = [\"mean\"]"), Err(PlanError::UnknownMode(_))));
        assert!(ExperimentPlan::from_toml_str("policies = [\"XYZ\"]").is_err());
        assert!(ExperimentPlan::from_toml_str("replications = 0").is_err());
    }

    #[test]
    fn empty_plan_has_no_cells() {
        assert!(ExperimentPlan::from_toml_str("").unwrap().cells().is_empty());
    }

    #[test]
    fn scaling() {
        let plan = ExperimentPlan::from_toml_str("").unwrap().scaled(0.1);
        assert_eq!((plan.replications, plan.tts_replications), (1000, 100));
        let plan = ExperimentPlan::from_toml_str("").unwrap().scaled(1e-9);
        assert_eq!((plan.replications, plan.tts_replications), (2, 2));
    }

    #[test]
    fn cell_ids_follow_configuration() {
        let plan = ExperimentPlan::from_toml_str("scenarios=[\"S1\",\"S2\"]\nmissingness=[\"equal\"]\npolicies=[\"all\"]").unwrap();
        let cells = plan.cells();
        let mut ids: Vec<u64> = cells.iter().map(Cell::id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), cells.len());
        let mut relabelled = cells[3].clone();
        relabelled.scenario.label = "other".into();
        assert_eq!(relabelled.id(), cells[3].id());
    }

    #[test]
    fn gittins_reach() {
        let plan = ExperimentPlan::from_toml_str("scenarios=[\"S6\",\"S1\"]\npolicies=[\"GI\"]").unwrap();
        assert!(plan.needs_gittins());
        assert_eq!(plan.max_reachable_total(), 528);
    }
}
