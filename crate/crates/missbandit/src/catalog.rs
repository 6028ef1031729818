//! Built-in scenarios and missingness profile sets.

use missbandit_core::{MissingnessProfile, Scenario};

/// Missingness probabilities used by every built-in profile set.
pub const MISSINGNESS_VALUES: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

const TABLE: [(&str, f64, f64, u32); 12] = [
    ("S1", 0.1, 0.1, 200),
    ("S2", 0.3, 0.3, 200),
    ("S3", 0.5, 0.5, 200),
    ("S4", 0.7, 0.7, 200),
    ("S5", 0.9, 0.9, 200),
    ("S6", 0.1, 0.2, 526),
    ("S7", 0.1, 0.3, 162),
    ("S8", 0.1, 0.4, 82),
    ("S9", 0.4, 0.6, 254),
    ("S10", 0.6, 0.9, 82),
    ("S11", 0.7, 0.9, 162),
    ("S12", 0.8, 0.9, 526),
];

/// Errors from catalog lookups.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    /// No built-in scenario has this label.
    #[error("unknown scenario {0:?} (built-in: S1 to S12)")]
    UnknownScenario(String),
    /// No built-in profile set has this name.
    #[error("unknown missingness set {0:?} (known: grid36, equal, control_only, experimental_only, sixteen)")]
    UnknownProfileSet(String),
}

/// The twelve built-in scenarios: S1 to S5 under the null, S6 to S12 under
/// the alternative.
pub fn builtin_scenarios() -> Vec<Scenario> {
    TABLE
        .iter()
        .map(|&(label, p0, p1, n)| Scenario::new(label, p0, p1, n).expect("built-in scenario"))
        .collect()
}

/// Built-in scenario by label (case-insensitive).
pub fn lookup(label: &str) -> Result<Scenario, CatalogError> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.label.eq_ignore_ascii_case(label))
        .ok_or_else(|| CatalogError::UnknownScenario(label.to_string()))
}

/// Named families of missingness profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSet {
    /// All 36 pairs over [`MISSINGNESS_VALUES`].
    Grid36,
    /// `p0_missing = p1_missing`.
    Equal,
    /// Missingness in the control arm only.
    ControlOnly,
    /// Missingness in the experimental arm only.
    ExperimentalOnly,
    /// Union of the three one-dimensional sets, `(0, 0)` once: 16 profiles.
    Sixteen,
}

impl ProfileSet {
    /// All sets.
    pub const ALL: [ProfileSet; 5] = [
        ProfileSet::Grid36,
        ProfileSet::Equal,
        ProfileSet::ControlOnly,
        ProfileSet::ExperimentalOnly,
        ProfileSet::Sixteen,
    ];

    /// Name used in plan files.
    pub fn name(self) -> &'static str {
        match self {
            ProfileSet::Grid36 => "grid36",
            ProfileSet::Equal => "equal",
            ProfileSet::ControlOnly => "control_only",
            ProfileSet::ExperimentalOnly => "experimental_only",
            ProfileSet::Sixteen => "sixteen",
        }
    }

    /// Set by name.
    pub fn parse(name: &str) -> Result<ProfileSet, CatalogError> {
        ProfileSet::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| CatalogError::UnknownProfileSet(name.to_string()))
    }

    /// Profiles of the set, in plotting order.
    pub fn profiles(self) -> Vec<MissingnessProfile> {
        let v = MISSINGNESS_VALUES;
        let pair = |a: f64, b: f64| MissingnessProfile::new(a, b).expect("built-in profile");
        match self {
            ProfileSet::Grid36 => v.iter().flat_map(|&a| v.iter().map(move |&b| (a, b))).map(|(a, b)| pair(a, b)).collect(),
            ProfileSet::Equal => v.iter().map(|&a| pair(a, a)).collect(),
            ProfileSet::ControlOnly => v.iter().map(|&a| pair(a, 0.0)).collect(),
            ProfileSet::ExperimentalOnly => v.iter().map(|&b| pair(0.0, b)).collect(),
            ProfileSet::Sixteen => {
                let mut all = ProfileSet::Equal.profiles();
                all.extend(ProfileSet::ControlOnly.profiles().into_iter().skip(1));
                all.extend(ProfileSet::ExperimentalOnly.profiles().into_iter().skip(1));
                all
            }
        }
    }
}

/// Which of the three one-dimensional families a profile belongs to.
pub fn profile_family(profile: &MissingnessProfile) -> &'static str {
    match (profile.p0_missing, profile.p1_missing) {
        (a, b) if a == b => "equal",
        (_, 0.0) => "control_only",
        (0.0, _) => "experimental_only",
        _ => "mixed",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let s7 = lookup("S7").unwrap();
        assert_eq!((s7.p_control, s7.p_experimental, s7.trial_size), (0.1, 0.3, 162));
        let s10 = lookup("s10").unwrap();
        assert_eq!((s10.p_control, s10.p_experimental, s10.trial_size), (0.6, 0.9, 82));
        assert_eq!(lookup("S13"), Err(CatalogError::UnknownScenario("S13".into())));
        assert_eq!(builtin_scenarios().len(), 12);
        assert!(builtin_scenarios()[..5].iter().all(|s| s.is_null()));
        assert!(builtin_scenarios()[5..].iter().all(|s| !s.is_null()));
    }

    #[test]
    fn profile_counts() {
        assert_eq!(ProfileSet::Grid36.profiles().len(), 36);
        for set in [ProfileSet::Equal, ProfileSet::ControlOnly, ProfileSet::ExperimentalOnly] {
            assert_eq!(set.profiles().len(), 6);
        }
        let sixteen = ProfileSet::Sixteen.profiles();
        assert_eq!(sixteen.len(), 16);
        for (i, a) in sixteen.iter().enumerate() {
            assert!(sixteen[i + 1..].iter().all(|b| a != b));
        }
    }

    #[test]
    fn families() {
        let p = |a, b| MissingnessProfile::new(a, b).unwrap();
        assert_eq!(profile_family(&p(0.2, 0.2)), "equal");
        assert_eq!(profile_family(&p(0.2, 0.0)), "control_only");
        assert_eq!(profile_family(&p(0.0, 0.3)), "experimental_only");
        assert_eq!(profile_family(&p(0.1, 0.3)), "mixed");
    }
}
