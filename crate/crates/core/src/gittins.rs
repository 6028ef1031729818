//! Gittins indices for Beta-Bernoulli arms under geometric discounting.
//!
//! The index of state `(s, f)` is the retirement rate `lambda` at which a
//! decision maker is indifferent between pulling the arm once more (and
//! continuing optimally) and retiring for the lump sum `lambda / (1 - d)`.
//!
//! Both routes below solve the same optimal stopping problem by backward
//! induction over posterior states, truncated after `horizon` pulls. At the
//! truncation depth the arm is frozen at its posterior mean, so the terminal
//! value is `max(lambda, mu) / (1 - d)`. Rewards are capped at 1, which
//! bounds the truncation error of any value by `d^horizon / (1 - d)`;
//! [`Calibration::new`] refuses horizons where that bound exceeds the
//! bisection tolerance.
//!
//! * [`gittins_index`] calibrates one state by bisection on
//!   `[s / (s + f), 1]`.
//! * [`build_table`] fills every state with `s + f <= max_state + 2` at
//!   once. It sweeps `lambda` upward over a grid, running one backward
//!   induction over the whole state triangle per grid point, and records for
//!   every state the last grid point at which continuing still wins along
//!   with the continuation advantage and its derivative in `lambda`. The
//!   advantage is convex and decreasing in `lambda` and reaches zero at the
//!   index, so Newton steps from the grid points on either side bound the
//!   index from below and the chord through them bounds it from above.
//!   States whose bracket is still wider than the tolerance are finished by
//!   Newton steps on their own backward induction.
//!
//! The sweep splits into independent chunks of grid points
//! ([`sweep_chunk`], merged with [`SweepChunk::merge`]) and refinement is
//! per state ([`refine_index`]), so callers with threads can spread both.

use alloc::vec;
use alloc::vec::Vec;

/// Errors from index calibration and table lookups.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GittinsError {
    /// Discount outside `(0, 1)`.
    #[error("discount must lie in (0, 1), got {0}")]
    InvalidDiscount(f64),
    /// Tolerance not strictly positive.
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    /// Horizon too short for the requested tolerance.
    #[error("horizon {horizon} leaves a truncation bound of {bound:e}, above tolerance {tol:e}")]
    HorizonTooShort {
        /// Horizon requested.
        horizon: u32,
        /// `d^horizon / (1 - d)`.
        bound: f64,
        /// Tolerance requested.
        tol: f64,
    },
    /// Posterior state with a zero pseudo-count.
    #[error("state ({s}, {f}) needs s >= 1 and f >= 1")]
    InvalidState {
        /// Successes.
        s: u32,
        /// Failures.
        f: u32,
    },
    /// Retirement rate outside `[0, 1]`.
    #[error("retirement rate must lie in [0, 1], got {0}")]
    InvalidRate(f64),
    /// Merged sweep chunks did not cover every grid point.
    #[error("sweep chunks do not cover [0, 1]")]
    IncompleteSweep,
    /// Bisection bracket did not straddle the indifference point.
    #[error("bisection failed to bracket the index of ({s}, {f})")]
    NoBracket {
        /// Successes.
        s: u32,
        /// Failures.
        f: u32,
    },
    /// Table lookup outside the precomputed triangle.
    #[error("state ({s}, {f}) is outside the table (s + f <= {limit})")]
    OutOfRange {
        /// Successes.
        s: u32,
        /// Failures.
        f: u32,
        /// Largest `s + f` stored.
        limit: u32,
    },
    /// Stored values do not match the table shape.
    #[error("table for max_state {max_state} needs {expected} values, got {actual}")]
    ShapeMismatch {
        /// Declared bound.
        max_state: u32,
        /// Cells required.
        expected: usize,
        /// Cells supplied.
        actual: usize,
    },
}

/// Discount, truncation horizon and tolerance of a calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Discount factor `d`.
    pub discount: f64,
    /// Pulls looked ahead before truncation.
    pub horizon: u32,
    /// Bisection tolerance on the index.
    pub tol: f64,
}

impl Calibration {
    /// Horizon used for `d = 0.99` (and any discount it suffices for).
    pub const DEFAULT_HORIZON: u32 = 2000;
    /// Default index tolerance.
    pub const DEFAULT_TOL: f64 = 1e-5;

    /// Validated calibration.
    pub fn new(discount: f64, horizon: u32, tol: f64) -> Result<Calibration, GittinsError> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(GittinsError::InvalidDiscount(discount));
        }
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(GittinsError::InvalidTolerance(tol));
        }
        let calibration = Calibration { discount, horizon, tol };
        let bound = calibration.truncation_bound();
        if horizon == 0 || bound > tol {
            return Err(GittinsError::HorizonTooShort { horizon, bound, tol });
        }
        Ok(calibration)
    }

    /// Calibration with the default horizon, lengthened if the discount
    /// needs it.
    pub fn with_tolerance(discount: f64, tol: f64) -> Result<Calibration, GittinsError> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(GittinsError::InvalidDiscount(discount));
        }
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(GittinsError::InvalidTolerance(tol));
        }
        let needed = libm::ceil(libm::log(tol * (1.0 - discount)) / libm::log(discount));
        let horizon = if needed > f64::from(Self::DEFAULT_HORIZON) {
            needed as u32 + 1
        } else {
            Self::DEFAULT_HORIZON
        };
        Calibration::new(discount, horizon, tol)
    }

    /// Default tolerance and horizon for `discount`.
    pub fn with_discount(discount: f64) -> Result<Calibration, GittinsError> {
        Calibration::with_tolerance(discount, Self::DEFAULT_TOL)
    }

    /// Upper bound `d^horizon / (1 - d)` on the truncation error of a value.
    pub fn truncation_bound(&self) -> f64 {
        libm::pow(self.discount, f64::from(self.horizon)) / (1.0 - self.discount)
    }

    /// Bisection steps needed to shrink `[0, 1]` below `tol`.
    pub fn max_bisection_steps(&self) -> u32 {
        libm::ceil(libm::log2(1.0 / self.tol)).max(0.0) as u32
    }
}

const SWEEP_STEP: f64 = 1.25e-4;

fn check_state(s: u32, f: u32) -> Result<(), GittinsError> {
    if s == 0 || f == 0 {
        Err(GittinsError::InvalidState { s, f })
    } else {
        Ok(())
    }
}

/// One backward-induction step over a row of posterior states.
///
/// `prev` holds the values one pull deeper (`cells + 1` entries: index `a`
/// is reached by a failure, `a + 1` by a success); `counts[a] * inv` is the
/// posterior mean of cell `a`.
#[inline]
fn step_values(next: &mut [f64], prev: &[f64], counts: &[f64], inv: f64, d: f64, retire: f64) {
    let cells = next.len();
    let (fail, succ) = (&prev[..cells], &prev[1..=cells]);
    let counts = &counts[..cells];
    for a in 0..cells {
        let mu = counts[a] * inv;
        let cont = mu + d * (fail[a] + mu * (succ[a] - fail[a]));
        next[a] = cont.max(retire);
    }
}

/// [`step_values`] that also carries the derivative of each value in the
/// retirement rate.
#[inline]
#[allow(clippy::too_many_arguments)]
fn step_values_and_slopes(
    next: &mut [f64],
    next_slopes: &mut [f64],
    prev: &[f64],
    prev_slopes: &[f64],
    counts: &[f64],
    inv: f64,
    d: f64,
    retire: f64,
    retire_weight: f64,
) {
    let cells = next.len();
    let (fail, succ) = (&prev[..cells], &prev[1..=cells]);
    let (fail_s, succ_s) = (&prev_slopes[..cells], &prev_slopes[1..=cells]);
    let (counts, next_slopes) = (&counts[..cells], &mut next_slopes[..cells]);
    for a in 0..cells {
        let mu = counts[a] * inv;
        let cont = mu + d * (fail[a] + mu * (succ[a] - fail[a]));
        let cont_slope = d * (fail_s[a] + mu * (succ_s[a] - fail_s[a]));
        next[a] = cont.max(retire);
        next_slopes[a] = if cont > retire { cont_slope } else { retire_weight };
    }
}

/// Value at the root and the continuation advantage there.
fn continuation_advantage(s: u32, f: u32, lambda: f64, calibration: &Calibration) -> (f64, f64) {
    let d = calibration.discount;
    let horizon = calibration.horizon as usize;
    let retire = lambda / (1.0 - d);
    let first = f64::from(s) + f64::from(f);

    // counts[a]: successes s + a after a successful pulls
    let counts: Vec<f64> = (0..=horizon).map(|a| f64::from(s) + a as f64).collect();
    let inv = 1.0 / (first + horizon as f64);
    let mut values: Vec<f64> = counts.iter().map(|&k| (k * inv).max(lambda) / (1.0 - d)).collect();
    let mut next = vec![0.0; horizon + 1];
    for depth in (1..horizon).rev() {
        let inv = 1.0 / (first + depth as f64);
        step_values(&mut next[..=depth], &values, &counts, inv, d, retire);
        core::mem::swap(&mut values, &mut next);
    }
    let mu = counts[0] / first;
    let cont = mu + d * (values[0] + mu * (values[1] - values[0]));
    (cont.max(retire), cont - retire)
}

/// Value of the optimal stopping problem "keep pulling the Beta(s, f)
/// arm or retire for `lambda / (1 - d)`", truncated after
/// `calibration.horizon` pulls.
pub fn retirement_value(
    s: u32,
    f: u32,
    lambda: f64,
    calibration: &Calibration,
) -> Result<f64, GittinsError> {
    check_state(s, f)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(GittinsError::InvalidRate(lambda));
    }
    Ok(continuation_advantage(s, f, lambda, calibration).0)
}

/// Gittins index of `(s, f)` by bisection on the retirement rate.
///
/// The result is the midpoint of a bracket narrower than `tol` around the
/// indifference point of the truncated problem.
pub fn gittins_index(s: u32, f: u32, calibration: &Calibration) -> Result<f64, GittinsError> {
    check_state(s, f)?;
    let mut lo = f64::from(s) / f64::from(s + f);
    let mut hi = 1.0;
    // Continuing at lambda = mean is never worse than retiring; at 1 it
    // never beats it. Slack covers rounding in the two sums.
    let slack = 1e-12 / (1.0 - calibration.discount);
    if continuation_advantage(s, f, lo, calibration).1 < -slack
        || continuation_advantage(s, f, hi, calibration).1 > slack
    {
        return Err(GittinsError::NoBracket { s, f });
    }
    while hi - lo > calibration.tol {
        let mid = 0.5 * (lo + hi);
        if continuation_advantage(s, f, mid, calibration).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn triangle_len(top: u32) -> usize {
    // rows m = 2..=top hold m - 1 cells each
    let top = top as usize;
    if top < 2 {
        0
    } else {
        (top - 1) * top / 2
    }
}

fn row_offset(m: u32) -> usize {
    let m = m as usize;
    (m - 2) * (m - 1) / 2
}

/// Dense table of Gittins indices for every `(s, f)` with `s, f >= 1` and
/// `s + f <= max_state + 2`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GittinsTable {
    calibration: Calibration,
    max_state: u32,
    values: Vec<f64>,
}

impl GittinsTable {
    /// Table from precomputed values in row order: `s + f = 2, 3, ...`,
    /// and `s = 1, 2, ...` within a row.
    pub fn from_values(
        calibration: Calibration,
        max_state: u32,
        values: Vec<f64>,
    ) -> Result<GittinsTable, GittinsError> {
        let expected = triangle_len(max_state + 2);
        if values.len() != expected {
            return Err(GittinsError::ShapeMismatch {
                max_state,
                expected,
                actual: values.len(),
            });
        }
        Ok(GittinsTable { calibration, max_state, values })
    }

    /// Calibration the table was built with.
    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    /// Discount factor.
    pub fn discount(&self) -> f64 {
        self.calibration.discount
    }

    /// Bound `B`; states with `s + f <= B + 2` are stored.
    pub fn max_state(&self) -> u32 {
        self.max_state
    }

    /// Largest `s + f` stored.
    pub fn max_total(&self) -> u32 {
        self.max_state + 2
    }

    /// Number of stored states.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when no state is stored.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of `(s, f)`.
    pub fn lookup(&self, s: u32, f: u32) -> Result<f64, GittinsError> {
        check_state(s, f)?;
        let total = s.checked_add(f).filter(|&m| m <= self.max_total());
        match total {
            Some(m) => Ok(self.values[row_offset(m) + (s - 1) as usize]),
            None => Err(GittinsError::OutOfRange { s, f, limit: self.max_total() }),
        }
    }

    /// True if every state reachable from `prior` within `trial_size`
    /// observations is stored.
    pub fn covers(&self, prior_successes: u32, prior_failures: u32, trial_size: u32) -> bool {
        prior_successes >= 1
            && prior_failures >= 1
            && u64::from(prior_successes) + u64::from(prior_failures) + u64::from(trial_size)
                <= u64::from(self.max_total())
    }

    /// `(s, f, index)` triples in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (2..=self.max_total())
            .flat_map(|m| (1..m).map(move |s| (s, m - s)))
            .zip(self.values.iter().copied())
            .map(|((s, f), g)| (s, f, g))
    }

    /// Raw values in storage order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Build the index table for all states with `s + f <= max_state + 2`.
///
/// Every stored state sees at least `calibration.horizon` pulls before
/// truncation, and every stored index lies within `calibration.tol` of the
/// indifference point of its truncated problem.
pub fn build_table(calibration: &Calibration, max_state: u32) -> Result<GittinsTable, GittinsError> {
    let brackets = if sweep_pays(max_state) {
        let points = sweep_points(sweep_step());
        sweep_chunk(calibration, max_state, 0..points).brackets()?
    } else {
        table_cells(max_state).map(|(s, f)| trivial_bracket(s, f)).collect()
    };
    let values = table_cells(max_state)
        .zip(brackets)
        .map(|((s, f), (lo, hi))| refine_index(s, f, lo, hi, calibration))
        .collect();
    GittinsTable::from_values(*calibration, max_state, values)
}

/// True if sweeping the rate grid is cheaper than refining every state of
/// the table from [`trivial_bracket`]. A sweep costs about as much as a
/// dozen refinements of each of 500 states.
pub fn sweep_pays(max_state: u32) -> bool {
    triangle_len(max_state + 2) * 16 >= sweep_points(sweep_step()) as usize
}

/// `[s / (s + f), 1]`, which holds every index.
pub fn trivial_bracket(s: u32, f: u32) -> (f64, f64) {
    (f64::from(s) / f64::from(s + f), 1.0)
}

/// `(s, f)` pairs of a table in storage order.
pub fn table_cells(max_state: u32) -> impl Iterator<Item = (u32, u32)> {
    (2..=max_state + 2).flat_map(|m| (1..m).map(move |s| (s, m - s)))
}

/// Number of grid points `lambda = i * step`, `i = 0, 1, ...`, needed to
/// reach 1.
pub fn sweep_points(step: f64) -> u32 {
    libm::ceil(1.0 / step) as u32 + 1
}

/// Grid spacing of the sweep.
pub fn sweep_step() -> f64 {
    SWEEP_STEP
}

/// Continuation advantage `g` and its slope `g'` in `lambda` at one grid
/// point.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Probe {
    rate: f64,
    advantage: f64,
    slope: f64,
}

/// Per-state probes from a run of consecutive grid points.
///
/// For every stored state it keeps the last grid point where continuing
/// strictly beats retiring and the first where it does not.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepChunk {
    last_above: Vec<Option<Probe>>,
    first_below: Vec<Option<Probe>>,
}

impl SweepChunk {
    /// Combine with the chunk covering the grid points just above this one.
    pub fn merge(self, higher: SweepChunk) -> SweepChunk {
        let last_above = self
            .last_above
            .into_iter()
            .zip(higher.last_above)
            .map(|(low, high)| high.or(low))
            .collect();
        let first_below = self
            .first_below
            .into_iter()
            .zip(higher.first_below)
            .map(|(low, high)| low.or(high))
            .collect();
        SweepChunk { last_above, first_below }
    }

    /// Bracket `[lo, hi]` around every stored index, in storage order.
    ///
    /// `g(lambda) = continuation - lambda / (1 - d)` is convex and
    /// decreasing, so with `g(a) > 0 >= g(b)` the tangents at `a` and `b`
    /// cross zero at or below the index and the chord crosses at or above it.
    /// Fails if the merged chunks did not cover `[0, 1]`.
    pub fn brackets(&self) -> Result<Vec<(f64, f64)>, GittinsError> {
        self.last_above
            .iter()
            .zip(&self.first_below)
            .map(|(above, below)| match (above, below) {
                (Some(above), Some(below)) => Ok(bracket(above, below)),
                _ => Err(GittinsError::IncompleteSweep),
            })
            .collect()
    }
}

/// Sweep the grid points `lambda = i * sweep_step()` for `i` in `points`
/// (clamped to 1) over every state of a table bounded by `max_state`.
pub fn sweep_chunk(
    calibration: &Calibration,
    max_state: u32,
    points: core::ops::Range<u32>,
) -> SweepChunk {
    let d = calibration.discount;
    let step = sweep_step();
    let retire_weight = 1.0 / (1.0 - d);
    let top = max_state + 2;
    let deepest = top + calibration.horizon;
    let stored = triangle_len(top);

    let mut last_above = vec![None; stored];
    let mut first_below = vec![None; stored];

    let width = deepest as usize;
    let (mut values, mut next_values) = (vec![0.0; width], vec![0.0; width]);
    let (mut slopes, mut next_slopes) = (vec![0.0; width], vec![0.0; width]);
    // counts[a] = a + 1 successes in a row
    let counts: Vec<f64> = (1..=width).map(|k| k as f64).collect();

    for i in points {
        let lambda = (f64::from(i) * step).min(1.0);
        let retire = lambda * retire_weight;

        let inv = 1.0 / f64::from(deepest);
        for a in 0..(deepest - 1) as usize {
            let mu = counts[a] * inv;
            let keep = mu > lambda;
            values[a] = if keep { mu * retire_weight } else { retire };
            slopes[a] = if keep { 0.0 } else { retire_weight };
        }

        for m in (2..deepest).rev() {
            let inv = 1.0 / f64::from(m);
            let cells = (m - 1) as usize;
            if m <= top {
                let base = row_offset(m);
                for a in 0..cells {
                    let mu = counts[a] * inv;
                    let cont = mu + d * (values[a] + mu * (values[a + 1] - values[a]));
                    let cont_slope = d * (slopes[a] + mu * (slopes[a + 1] - slopes[a]));
                    let probe = Probe {
                        rate: lambda,
                        advantage: cont - retire,
                        slope: cont_slope - retire_weight,
                    };
                    let cell = base + a;
                    if probe.advantage > 0.0 {
                        last_above[cell] = Some(probe);
                    } else if first_below[cell].is_none() {
                        first_below[cell] = Some(probe);
                    }
                }
            }
            step_values_and_slopes(
                &mut next_values[..cells],
                &mut next_slopes,
                &values,
                &slopes,
                &counts,
                inv,
                d,
                retire,
                retire_weight,
            );
            core::mem::swap(&mut values, &mut next_values);
            core::mem::swap(&mut slopes, &mut next_slopes);
        }
    }

    SweepChunk { last_above, first_below }
}

fn bracket(above: &Probe, below: &Probe) -> (f64, f64) {
    let (a, b) = (above.rate, below.rate);
    let mut lo = a;
    if above.slope < 0.0 {
        lo = lo.max(a - above.advantage / above.slope);
    }
    if below.slope < 0.0 {
        lo = lo.max(b - below.advantage / below.slope);
    }
    let chord = a + above.advantage * (b - a) / (above.advantage - below.advantage);
    let hi = chord.min(b);
    if lo > hi {
        // the two bounds cross only through rounding
        let mid = 0.5 * (lo + hi);
        (mid, mid)
    } else {
        (lo, hi)
    }
}

/// Advantage and its slope in `lambda` at the root of a single-state
/// induction.
fn advantage_with_slope(s: u32, f: u32, lambda: f64, calibration: &Calibration) -> (f64, f64) {
    let d = calibration.discount;
    let horizon = calibration.horizon as usize;
    let retire_weight = 1.0 / (1.0 - d);
    let retire = lambda * retire_weight;
    let first = f64::from(s) + f64::from(f);

    let counts: Vec<f64> = (0..=horizon).map(|a| f64::from(s) + a as f64).collect();
    let inv = 1.0 / (first + horizon as f64);
    let mut values = Vec::with_capacity(horizon + 1);
    let mut slopes = Vec::with_capacity(horizon + 1);
    for &k in &counts {
        let mu = k * inv;
        values.push(mu.max(lambda) * retire_weight);
        slopes.push(if mu > lambda { 0.0 } else { retire_weight });
    }
    let (mut next, mut next_slopes) = (vec![0.0; horizon + 1], vec![0.0; horizon + 1]);
    for depth in (1..horizon).rev() {
        let inv = 1.0 / (first + depth as f64);
        step_values_and_slopes(
            &mut next[..=depth],
            &mut next_slopes,
            &values,
            &slopes,
            &counts,
            inv,
            d,
            retire,
            retire_weight,
        );
        core::mem::swap(&mut values, &mut next);
        core::mem::swap(&mut slopes, &mut next_slopes);
    }
    let mu = counts[0] / first;
    let cont = mu + d * (values[0] + mu * (values[1] - values[0]));
    let cont_slope = d * (slopes[0] + mu * (slopes[1] - slopes[0]));
    (cont - retire, cont_slope - retire_weight)
}

/// Index of `(s, f)` given a bracket `[lo, hi]` that contains it.
///
/// Narrow brackets return their midpoint. Otherwise the lower end is pushed
/// up by Newton steps (each a lower bound, by convexity) and a probe half a
/// tolerance above it either closes the bracket or restarts the step.
pub fn refine_index(s: u32, f: u32, mut lo: f64, mut hi: f64, calibration: &Calibration) -> f64 {
    let tol = calibration.tol;
    while hi - lo > tol {
        let probe = (lo + 0.5 * tol).min(hi);
        let (g, slope) = advantage_with_slope(s, f, probe, calibration);
        if g <= 0.0 {
            hi = probe;
        } else if slope < 0.0 {
            lo = probe.max(probe - g / slope);
        } else {
            lo = probe;
        }
    }
    0.5 * (lo + hi)
}
