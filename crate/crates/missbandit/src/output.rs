//! CSV output, one row per plan cell.
//!
//! Numbers are written with six significant digits in the style of C's
//! `%g`: fixed notation for decimal exponents in `[-4, 6)`, scientific
//! otherwise, trailing zeros dropped. Missing or non-finite values are
//! written as `NA`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use missbandit_core::AggregateReport;

use crate::plan::{Cell, CellOutcome};

/// Token for values that are undefined or belong to a failed cell.
pub const NA: &str = "NA";

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRow {
    /// Scenario label.
    pub scenario: String,
    /// Control success probability.
    pub p0: String,
    /// Experimental success probability.
    pub p1: String,
    /// Trial size.
    pub n: u32,
    /// Algorithm name.
    pub algorithm: String,
    /// Control missingness.
    pub p0_missing: String,
    /// Experimental missingness.
    pub p1_missing: String,
    /// Imputation mode.
    pub imputation_mode: String,
    /// Replications.
    pub replications: u64,
    /// Master seed.
    pub seed: u64,
    /// Mean share on the experimental arm.
    pub mean_pstar: String,
    /// Its standard error.
    pub se_pstar: String,
    /// Mean observed successes.
    pub mean_ons: String,
    /// Its standard error.
    pub se_ons: String,
    /// Control bias.
    pub bias_arm0: String,
    /// Experimental bias.
    pub bias_arm1: String,
    /// Control bias standard error.
    pub se_bias_arm0: String,
    /// Experimental bias standard error.
    pub se_bias_arm1: String,
    /// Control `Cov[N, p_hat] / E[N]`.
    #[serde(rename = "cov_over_EN_arm0")]
    pub cov_over_en_arm0: String,
    /// Experimental `Cov[N, p_hat] / E[N]`.
    #[serde(rename = "cov_over_EN_arm1")]
    pub cov_over_en_arm1: String,
    /// Control share of replications without an estimate.
    pub undefined_fraction_arm0: String,
    /// Experimental share of replications without an estimate.
    pub undefined_fraction_arm1: String,
}

/// `%g`-style rendering with six significant digits; `NA` if not finite.
pub fn format_g6(x: f64) -> String {
    if !x.is_finite() {
        return NA.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // The exponent after rounding to six digits decides the notation.
    let sci = format!("{x:.5e}");
    let (mantissa, exponent) = sci.split_once('e').expect("scientific notation");
    let exponent: i32 = exponent.parse().expect("exponent");
    if (-4..6).contains(&exponent) {
        let decimals = (5 - exponent) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exponent < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exponent.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parse a value written by [`format_g6`]; `NA` gives NaN.
pub fn parse_g6(s: &str) -> Result<f64, std::num::ParseFloatError> {
    if s == NA {
        Ok(f64::NAN)
    } else {
        s.parse()
    }
}

impl OutputRow {
    /// Row for a cell; metric fields are `NA` when the cell failed.
    pub fn new(cell: &Cell, seed: u64, report: Option<&AggregateReport>) -> OutputRow {
        let metric = |f: fn(&AggregateReport) -> f64| report.map_or_else(|| NA.to_string(), |r| format_g6(f(r)));
        OutputRow {
            scenario: cell.scenario.label.clone(),
            p0: format_g6(cell.scenario.p_control),
            p1: format_g6(cell.scenario.p_experimental),
            n: cell.scenario.trial_size,
            algorithm: cell.policy.algorithm.name().to_string(),
            p0_missing: format_g6(cell.missingness.p0_missing),
            p1_missing: format_g6(cell.missingness.p1_missing),
            imputation_mode: cell.mode.name().to_string(),
            replications: cell.replications,
            seed,
            mean_pstar: metric(|r| r.mean_pstar),
            se_pstar: metric(|r| r.se_pstar),
            mean_ons: metric(|r| r.mean_ons),
            se_ons: metric(|r| r.se_ons),
            bias_arm0: metric(|r| r.arms[0].bias),
            bias_arm1: metric(|r| r.arms[1].bias),
            se_bias_arm0: metric(|r| r.arms[0].se_bias),
            se_bias_arm1: metric(|r| r.arms[1].se_bias),
            cov_over_en_arm0: metric(|r| r.arms[0].cov_over_mean_assigned),
            cov_over_en_arm1: metric(|r| r.arms[1].cov_over_mean_assigned),
            undefined_fraction_arm0: metric(|r| r.arms[0].undefined_fraction),
            undefined_fraction_arm1: metric(|r| r.arms[1].undefined_fraction),
        }
    }
}

/// Rows for a finished plan, in plan order.
pub fn rows(outcomes: &[CellOutcome]) -> Vec<OutputRow> {
    outcomes.iter().map(|o| OutputRow::new(&o.cell, o.seed, o.report.as_ref().ok())).collect()
}

/// Write rows (header included, even with no rows) as CSV.
pub fn write_rows<W: Write>(rows: &[OutputRow], out: W) -> Result<(), csv::Error> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(HEADER)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Column names, in order.
pub const HEADER: [&str; 22] = [
    "scenario",
    "p0",
    "p1",
    "n",
    "algorithm",
    "p0_missing",
    "p1_missing",
    "imputation_mode",
    "replications",
    "seed",
    "mean_pstar",
    "se_pstar",
    "mean_ons",
    "se_ons",
    "bias_arm0",
    "bias_arm1",
    "se_bias_arm0",
    "se_bias_arm1",
    "cov_over_EN_arm0",
    "cov_over_EN_arm1",
    "undefined_fraction_arm0",
    "undefined_fraction_arm1",
];

/// Write rows to `path` through a temporary file in the same directory,
/// so a failure never leaves a partial file behind.
pub fn write_csv_file(rows: &[OutputRow], path: &Path) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    write_rows(rows, &mut tmp).map_err(std::io::Error::other)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Read rows written by [`write_rows`].
pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<OutputRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g6_matches_printf() {
        let cases = [
            (0.0, "0"),
            (0.5, "0.5"),
            (1.0, "1"),
            (0.63, "0.63"),
            (1.0 / 3.0, "0.333333"),
            (2.0 / 3.0, "0.666667"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (999999.5, "1e+06"),
            (0.0001, "0.0001"),
            (0.00001234567, "1.23457e-05"),
            (-0.0123, "-0.0123"),
            (-2.5e-7, "-2.5e-07"),
            (f64::NAN, "NA"),
            (f64::INFINITY, "NA"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g6(x), want, "{x}");
        }
    }

    #[test]
    fn g6_reparses_to_itself() {
        for x in [0.1234567, 5e-9, 178.25, -0.000045678, 0.5 + 1e-12] {
            let s = format_g6(x);
            assert_eq!(format_g6(parse_g6(&s).unwrap()), s);
        }
        assert!(parse_g6(NA).unwrap().is_nan());
    }

    #[test]
    fn header_matches_struct() {
        let mut buf = Vec::new();
        write_rows(&[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.trim_end(), HEADER.join(","));
    }
}
