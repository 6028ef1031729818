use missbandit_core::{build_table, gittins_index, Calibration, GittinsTable};
use std::sync::OnceLock;

fn calibration() -> Calibration {
    Calibration::with_discount(0.99).unwrap()
}

fn table() -> &'static GittinsTable {
    static TABLE: OnceLock<GittinsTable> = OnceLock::new();
    TABLE.get_or_init(|| build_table(&calibration(), 60).unwrap())
}

#[test]
fn doubling_the_horizon_moves_indices_less_than_tol() {
    let short = calibration();
    let long = Calibration::new(0.99, 2 * short.horizon, short.tol).unwrap();
    for (s, f) in [(1, 1), (2, 5), (10, 3), (1, 40), (30, 30)] {
        let a = gittins_index(s, f, &short).unwrap();
        let b = gittins_index(s, f, &long).unwrap();
        assert!((a - b).abs() <= short.tol, "({s},{f}): {a} vs {b}");
    }
}

#[test]
fn indices_exceed_the_mean_and_stay_below_one() {
    for (s, f, g) in table().iter() {
        let mean = f64::from(s) / f64::from(s + f);
        assert!(g > mean && g < 1.0, "({s},{f}): {g}");
    }
}

#[test]
fn indices_rise_with_successes_and_fall_with_failures() {
    let t = table();
    let top = t.max_total();
    for s in 1..top {
        for f in 1..top - s {
            let g = t.lookup(s, f).unwrap();
            if s + f < top {
                assert!(t.lookup(s + 1, f).unwrap() > g, "({s},{f}) vs ({},{f})", s + 1);
                assert!(t.lookup(s, f + 1).unwrap() < g, "({s},{f}) vs ({s},{})", f + 1);
            }
        }
    }
}

#[test]
fn table_matches_direct_bisection() {
    let c = calibration();
    let t = table();
    // a spread of states, including the table edge
    let states = [(1, 1), (1, 60), (60, 1), (2, 3), (7, 19), (25, 25), (33, 8), (13, 47), (40, 21)];
    for (s, f) in states {
        let direct = gittins_index(s, f, &c).unwrap();
        let stored = t.lookup(s, f).unwrap();
        assert!((direct - stored).abs() <= c.tol, "({s},{f}): {direct} vs {stored}");
    }
}

#[test]
fn uniform_prior_index() {
    assert!((table().lookup(1, 1).unwrap() - 0.8699).abs() < 5e-4);
}
