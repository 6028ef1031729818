//! Named figure reproductions.
//!
//! Each figure id expands to an [`ExperimentPlan`]. Running it produces a
//! CSV and a JSON manifest naming the plotted metric, the axes and the
//! series, so any plotting tool can draw the figure.

use serde::Serialize;

use missbandit_core::{Algorithm, ImputationMode, PolicySpec, Scenario};

use crate::catalog::{self, ProfileSet};
use crate::plan::ExperimentPlan;

/// Every figure id, in display order.
pub const FIGURE_IDS: [&str; 15] = [
    "fig2", "s3", "s4", "fig3", "fig4", "fig5", "fig6", "s6", "s7", "s8", "s9", "s10", "s11", "s12", "s13",
];

/// Unknown figure id.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown figure {id:?}; valid ids: {}", FIGURE_IDS.join(", "))]
pub struct UnknownFigure {
    /// The id given.
    pub id: String,
}

/// Plot description written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    /// Figure id.
    pub id: String,
    /// Caption.
    pub title: String,
    /// CSV file name, relative to the manifest.
    pub csv: String,
    /// Plot layout.
    pub layout: Layout,
    /// CSV columns holding the plotted values.
    pub y: Vec<String>,
    /// Standard error columns, parallel to `y`.
    pub y_se: Vec<String>,
    /// CSV column that splits panels.
    pub facets: Vec<String>,
    /// Keys whose combinations form the line series. `profile_family` is
    /// not a column: it follows from which missingness columns are nonzero.
    pub series: Vec<String>,
    /// Values of `profile_family`, in legend order.
    pub profile_families: Vec<String>,
    /// Replications per cell (TTS excluded).
    pub replications: u64,
    /// Replications per TTS cell.
    pub tts_replications: u64,
    /// Master seed.
    pub seed: u64,
    /// Replication scale factor applied.
    pub scale: f64,
    /// Number of cells (CSV rows).
    pub cells: usize,
}

/// How the figure is drawn.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Heat map over the 6 by 6 missingness grid.
    Grid {
        /// Horizontal axis column.
        x: String,
        /// Vertical axis column.
        y: String,
    },
    /// Lines against a missingness probability.
    Lines {
        /// Horizontal axis: the nonzero missingness probability of the
        /// profile (equal to both columns for the equal family).
        x: String,
    },
}

/// A figure ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    /// The plan behind it.
    pub plan: ExperimentPlan,
    /// Its manifest.
    pub manifest: Manifest,
}

enum Metric {
    Allocation,
    Successes,
    Bias,
}

impl Metric {
    fn columns(&self) -> (Vec<String>, Vec<String>) {
        let v = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match self {
            Metric::Allocation => (v(&["mean_pstar"]), v(&["se_pstar"])),
            Metric::Successes => (v(&["mean_ons"]), v(&["se_ons"])),
            Metric::Bias => (v(&["bias_arm0", "bias_arm1"]), v(&["se_bias_arm0", "se_bias_arm1"])),
        }
    }
}

fn all_policies() -> Vec<PolicySpec> {
    Algorithm::ALL.into_iter().map(PolicySpec::new).collect()
}

fn null_scenarios() -> Vec<Scenario> {
    catalog::builtin_scenarios().into_iter().filter(Scenario::is_null).collect()
}

fn alternative_scenarios() -> Vec<Scenario> {
    catalog::builtin_scenarios().into_iter().filter(|s| !s.is_null()).collect()
}

/// Figure `id` with replications scaled by `scale` and master `seed`.
pub fn figure(id: &str, scale: f64, seed: u64) -> Result<Figure, UnknownFigure> {
    let id = id.to_ascii_lowercase();
    let grid_plan = |p0: f64, p1: f64, title: &str| {
        let scenario = Scenario::new(format!("p0={p0},p1={p1}"), p0, p1, 200).expect("grid scenario");
        let policies = [Algorithm::Tts, Algorithm::Cb, Algorithm::Ucb].into_iter().map(PolicySpec::new).collect();
        (
            ExperimentPlan::new(id.clone(), vec![scenario], ProfileSet::Grid36.profiles(), policies, vec![ImputationMode::None]),
            Metric::Allocation,
            title.to_string(),
            true,
        )
    };
    let lines_plan = |scenarios: Vec<Scenario>, modes: Vec<ImputationMode>, metric: Metric, title: &str| {
        (
            ExperimentPlan::new(id.clone(), scenarios, ProfileSet::Sixteen.profiles(), all_policies(), modes),
            metric,
            title.to_string(),
            false,
        )
    };
    use ImputationMode::{MeanAfterFirstObservation as After, MeanDefaultHalf as Half, MeanDefaultNineTenths as Ninety, None as Plain};
    let (plan, metric, title, grid) = match id.as_str() {
        "fig2" => grid_plan(0.9, 0.9, "Mean allocation to the experimental arm over the missingness grid, p0 = p1 = 0.9"),
        "s3" => grid_plan(0.7, 0.7, "Mean allocation to the experimental arm over the missingness grid, p0 = p1 = 0.7"),
        "s4" => grid_plan(0.7, 0.9, "Mean allocation to the experimental arm over the missingness grid, p0 = 0.7, p1 = 0.9"),
        "fig3" => lines_plan(null_scenarios(), vec![Plain], Metric::Allocation, "Mean allocation under the null"),
        "fig4" => lines_plan(alternative_scenarios(), vec![Plain], Metric::Allocation, "Mean allocation under the alternative"),
        "fig5" => lines_plan(null_scenarios(), vec![Plain, Half], Metric::Allocation, "Mean imputation from 0.5 under the null"),
        "fig6" => lines_plan(alternative_scenarios(), vec![Plain, Half], Metric::Allocation, "Mean imputation from 0.5 under the alternative"),
        "s6" => lines_plan(null_scenarios(), vec![Plain], Metric::Successes, "Observed successes under the null"),
        "s7" => lines_plan(alternative_scenarios(), vec![Plain], Metric::Successes, "Observed successes under the alternative"),
        "s8" => lines_plan(null_scenarios(), vec![Plain, Ninety], Metric::Allocation, "Mean imputation from 0.9 under the null"),
        "s9" => lines_plan(alternative_scenarios(), vec![Plain, Ninety], Metric::Allocation, "Mean imputation from 0.9 under the alternative"),
        "s10" => lines_plan(null_scenarios(), vec![Plain, After], Metric::Allocation, "Imputation after the first observation under the null"),
        "s11" => lines_plan(alternative_scenarios(), vec![Plain, After], Metric::Allocation, "Imputation after the first observation under the alternative"),
        "s12" => lines_plan(null_scenarios(), vec![Plain], Metric::Bias, "Estimator bias under the null"),
        "s13" => lines_plan(alternative_scenarios(), vec![Plain], Metric::Bias, "Estimator bias under the alternative"),
        _ => return Err(UnknownFigure { id }),
    };
    let mut plan = plan.scaled(scale);
    plan.seed = seed;
    let (y, y_se) = metric.columns();
    let strings = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let (layout, facets, series, profile_families) = if grid {
        (
            Layout::Grid { x: "p1_missing".into(), y: "p0_missing".into() },
            strings(&["algorithm"]),
            Vec::new(),
            Vec::new(),
        )
    } else {
        (
            Layout::Lines { x: "max(p0_missing, p1_missing)".into() },
            strings(&["scenario", "algorithm"]),
            strings(&["profile_family", "imputation_mode"]),
            strings(&["equal", "control_only", "experimental_only"]),
        )
    };
    let manifest = Manifest {
        id: id.clone(),
        title,
        csv: format!("{id}.csv"),
        layout,
        y,
        y_se,
        facets,
        series,
        profile_families,
        replications: plan.replications,
        tts_replications: plan.tts_replications,
        seed,
        scale,
        cells: plan.cells().len(),
    };
    Ok(Figure { plan, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_id_resolves() {
        for id in FIGURE_IDS {
            let fig = figure(id, 1.0, 7).unwrap();
            assert_eq!(fig.manifest.cells, fig.plan.cells().len(), "{id}");
            assert_eq!(fig.manifest.csv, format!("{id}.csv"));
        }
    }

    #[test]
    fn unknown_id_lists_valid_ones() {
        let err = figure("fig7", 1.0, 1).unwrap_err();
        let msg = err.to_string();
        for id in FIGURE_IDS {
            assert!(msg.contains(id), "{msg}");
        }
    }

    #[test]
    fn grid_figures_have_36_cells_per_policy() {
        let fig = figure("fig2", 1.0, 1).unwrap();
        assert_eq!(fig.plan.cells().len(), 36 * 3);
        let s = &fig.plan.scenarios[0];
        assert_eq!((s.p_control, s.p_experimental, s.trial_size), (0.9, 0.9, 200));
    }

    #[test]
    fn fig3_scaled_by_a_tenth() {
        let fig = figure("fig3", 0.1, 1).unwrap();
        assert_eq!(fig.plan.scenarios.len(), 5);
        assert_eq!(fig.plan.profiles.len(), 16);
        assert_eq!(fig.plan.policies.len(), 10);
        assert_eq!(fig.plan.cells().len(), 800);
        assert_eq!(fig.plan.replications, 1000);
        assert_eq!(fig.plan.tts_replications, 100);
    }

    #[test]
    fn imputation_figures_pair_modes() {
        let fig5 = figure("fig5", 1.0, 1).unwrap();
        assert_eq!(fig5.plan.modes, vec![ImputationMode::None, ImputationMode::MeanDefaultHalf]);
        let fig3 = figure("fig3", 1.0, 1).unwrap();
        assert_eq!(fig5.plan.scenarios, fig3.plan.scenarios);
        assert_eq!(fig5.plan.profiles, fig3.plan.profiles);
        let s8 = figure("s8", 1.0, 1).unwrap();
        assert_eq!(s8.plan.modes, vec![ImputationMode::None, ImputationMode::MeanDefaultNineTenths]);
        assert_eq!(s8.plan.scenarios, fig3.plan.scenarios);
        let s11 = figure("s11", 1.0, 1).unwrap();
        assert_eq!(s11.plan.modes[1], ImputationMode::MeanAfterFirstObservation);
        assert_eq!(s11.plan.scenarios.len(), 7);
    }

    #[test]
    fn manifest_serializes() {
        let fig = figure("S12", 0.5, 3).unwrap();
        let json = serde_json::to_value(&fig.manifest).unwrap();
        assert_eq!(json["id"], "s12");
        assert_eq!(json["layout"]["kind"], "lines");
        assert_eq!(json["y"][1], "bias_arm1");
    }
}
