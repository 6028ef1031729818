//! Allocation rules: Thompson-type randomization, the play-the-winner urn
//! and the index rules.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::gittins::{GittinsError, GittinsTable};
use crate::model::{ucb_beta, Algorithm, Arm, ArmState, Outcome, PolicySpec, RandUcbSupport, ARM_COUNT};
use crate::rng::{uniform, TrialStreams};

/// Posterior probability that the experimental arm has the larger success
/// probability, `P(p_1 > p_0)` under independent Beta posteriors.
///
/// Exact finite sum when any Beta parameter is an integer, otherwise
/// quadrature of `f_1(x) I_x(a_0, b_0)`.
pub fn superiority_probability(control: &ArmState, experimental: &ArmState) -> f64 {
    let (a0, b0) = control.beta_parameters();
    let (a1, b1) = experimental.beta_parameters();
    beta_exceeds(a1, b1, a0, b0)
}

/// `P(X > Y)` for `X ~ Beta(a, b)` and `Y ~ Beta(c, d)`.
fn beta_exceeds(a: f64, b: f64, c: f64, d: f64) -> f64 {
    if (a, b) == (c, d) {
        return 0.5;
    }
    // Four equivalent sums, one per integer parameter; take the shortest.
    // Reflecting x -> 1 - x swaps the roles of the two shape parameters.
    let candidates = [
        (a, (a, b, c, d), false),
        (c, (c, d, a, b), true),
        (d, (d, c, b, a), false),
        (b, (b, a, d, c), true),
    ];
    let best = candidates
        .iter()
        .filter(|(k, _, _)| is_small_integer(*k))
        .min_by(|x, y| x.0.total_cmp(&y.0));
    let p = match best {
        Some(&(_, (wa, wb, la, lb), complement)) => {
            let p = exceeds_by_sum(wa, wb, la, lb);
            if complement {
                1.0 - p
            } else {
                p
            }
        }
        None => exceeds_by_quadrature(a, b, c, d),
    };
    p.clamp(0.0, 1.0)
}

fn is_small_integer(x: f64) -> bool {
    (1.0..=1e7).contains(&x) && libm::floor(x) == x
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// `P(X > Y)`, `X ~ Beta(a, b)` with integer `a`, `Y ~ Beta(c, d)`:
/// `sum_{i < a} B(c + i, b + d) / ((b + i) B(1 + i, b) B(c, d))`.
fn exceeds_by_sum(a: f64, b: f64, c: f64, d: f64) -> f64 {
    const RESCALE: f64 = 1e280;
    let ln_first = ln_beta(c, b + d) - ln_beta(c, d);
    let (mut term, mut sum, mut ln_scale) = (1.0f64, 0.0f64, 0.0f64);
    let count = a as u64;
    for i in 0..count {
        sum += term;
        let i = i as f64;
        term *= (c + i) * (b + i) / ((c + i + b + d) * (i + 1.0));
        if term > RESCALE {
            term /= RESCALE;
            sum /= RESCALE;
            ln_scale += libm::log(RESCALE);
        }
    }
    libm::exp(libm::log(sum) + ln_first + ln_scale)
}

/// Regularized incomplete beta `I_x(a, b)` from `ln x` and `ln(1 - x)`.
fn incomplete_beta(a: f64, b: f64, x: f64, ln_x: f64, ln_1mx: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = libm::exp(a * ln_x + b * ln_1mx - ln_beta(a, b));
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Tanh-sinh quadrature of `int_0^1 f_X(x) I_x(c, d) dx`.
fn exceeds_by_quadrature(a: f64, b: f64, c: f64, d: f64) -> f64 {
    const H: f64 = 1.0 / 64.0;
    const LIMIT: f64 = 4.5;
    let half_pi = core::f64::consts::FRAC_PI_2;
    let ln_norm = ln_beta(a, b);
    let mut sum = 0.0;
    let steps = (LIMIT / H) as i32;
    for k in -steps..=steps {
        let t = f64::from(k) * H;
        let u = half_pi * libm::sinh(t);
        // x = 1 / (1 + e^{-2u}) and 1 - x = 1 / (1 + e^{2u}), both to full
        // relative precision; dx/dt = pi cosh(t) x (1 - x).
        let ln_x = -libm::log1p(libm::exp(-2.0 * u));
        let ln_1mx = -libm::log1p(libm::exp(2.0 * u));
        let x = libm::exp(ln_x);
        let weight = core::f64::consts::PI * libm::cosh(t);
        let density_times_jacobian = libm::exp(a * ln_x + b * ln_1mx - ln_norm);
        if density_times_jacobian == 0.0 {
            continue;
        }
        sum += weight * density_times_jacobian * incomplete_beta(c, d, x, ln_x, ln_1mx);
    }
    sum * H
}

/// Thompson allocation probability of the experimental arm,
/// `q^c / (q^c + (1 - q)^c)` with `0^0 = 1`.
pub fn thompson_allocation(q: f64, c: f64) -> f64 {
    let up = libm::pow(q, c);
    let down = libm::pow(1.0 - q, c);
    up / (up + down)
}

/// Randomized play-the-winner urn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Urn {
    /// Balls per arm (control, experimental).
    pub balls: [u64; ARM_COUNT],
}

impl Default for Urn {
    fn default() -> Self {
        Urn::new()
    }
}

impl Urn {
    /// One ball per arm.
    pub fn new() -> Urn {
        Urn { balls: [1; ARM_COUNT] }
    }

    /// Draw probabilities per arm.
    pub fn probabilities(&self) -> [f64; ARM_COUNT] {
        let total = (self.balls[0] + self.balls[1]) as f64;
        [self.balls[0] as f64 / total, self.balls[1] as f64 / total]
    }

    /// A success adds a ball of the same arm, a failure one of the other
    /// arm, a missing response nothing.
    pub fn update(&mut self, arm: Arm, outcome: Outcome) {
        match outcome {
            Outcome::Success => self.balls[arm.index()] += 1,
            Outcome::Failure => self.balls[arm.other().index()] += 1,
            Outcome::Missing => {}
        }
    }
}

/// Apply the feedback from the previous patient, then draw (with
/// replacement) the arm of the next one.
pub fn rpw_draw_and_update(urn: &mut Urn, feedback: Option<(Arm, Outcome)>, rng: &mut ChaCha8Rng) -> Arm {
    if let Some((arm, outcome)) = feedback {
        urn.update(arm, outcome);
    }
    let pi = urn.probabilities();
    select_arm(DecisionKind::Randomized, pi, rng).arm
}

/// UCB index `mu + sqrt(2 ln t) / sqrt(s_0 + f_0 + S + F)`.
pub fn ucb_index(state: &ArmState, t: u32) -> f64 {
    state.posterior_mean() + ucb_beta(t) * exploration_width(state)
}

fn exploration_width(state: &ArmState) -> f64 {
    1.0 / libm::sqrt(state.effective_observation_count())
}

/// RandUCB index `mu + Z / sqrt(s_0 + f_0 + S + F)` with `Z` drawn
/// uniformly from the support points in force at patient `t`.
///
/// A single support point consumes no randomness.
pub fn randucb_index(state: &ArmState, t: u32, support: &RandUcbSupport, rng: &mut ChaCha8Rng) -> f64 {
    let (lower, upper) = support.range.bounds(t);
    let z = if support.points <= 1 {
        lower
    } else {
        let j = rng.random_range(0..support.points);
        lower + (upper - lower) * f64::from(j) / f64::from(support.points - 1)
    };
    state.posterior_mean() + z * exploration_width(state)
}

/// Scale `K / (s_0 + f_0 + S + F)` of the RBI and RGI perturbation.
pub fn perturbation_scale(state: &ArmState) -> f64 {
    ARM_COUNT as f64 / state.effective_observation_count()
}

/// `base + Z * K / (s_0 + f_0 + S + F)` with `Z` exponential of the given
/// mean.
pub fn perturbed_index(base: f64, state: &ArmState, mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    let z = match Exp::new(1.0 / mean) {
        Ok(law) => law.sample(rng),
        Err(_) => 0.0,
    };
    base + z * perturbation_scale(state)
}

/// How a decision was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    /// Arm drawn from allocation probabilities.
    Randomized,
    /// Arm with the larger index, ties broken at random.
    Indexed,
}

/// One allocation together with the values behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// How the arm was chosen.
    pub kind: DecisionKind,
    /// Chosen arm.
    pub arm: Arm,
    /// Allocation probabilities or index values per arm.
    pub values: [f64; ARM_COUNT],
}

/// Pick an arm from probabilities (experimental iff `u < pi_1`) or from
/// indices (argmax; a fair coin on exact ties). Draws come from `rng`
/// only when needed.
pub fn select_arm(kind: DecisionKind, values: [f64; ARM_COUNT], rng: &mut ChaCha8Rng) -> Decision {
    let arm = match kind {
        DecisionKind::Randomized => {
            if uniform(rng) < values[1] {
                Arm::Experimental
            } else {
                Arm::Control
            }
        }
        DecisionKind::Indexed => {
            if values[1] > values[0] {
                Arm::Experimental
            } else if values[0] > values[1] {
                Arm::Control
            } else if uniform(rng) < 0.5 {
                Arm::Experimental
            } else {
                Arm::Control
            }
        }
    };
    Decision { kind, arm, values }
}

/// Stateful allocator for one trial: the rule, its urn and the Gittins
/// table it reads.
#[derive(Debug, Clone)]
pub struct Allocator<'a> {
    spec: PolicySpec,
    table: Option<&'a GittinsTable>,
    urn: Urn,
    trial_size: u32,
}

impl<'a> Allocator<'a> {
    /// Allocator for a trial of `trial_size` patients.
    pub fn new(spec: PolicySpec, table: Option<&'a GittinsTable>, trial_size: u32) -> Allocator<'a> {
        Allocator { spec, table, urn: Urn::new(), trial_size }
    }

    /// Current urn (only moves under RPW).
    pub fn urn(&self) -> &Urn {
        &self.urn
    }

    /// Allocate patient `t` (1-based) given the current arm states.
    pub fn decide(
        &mut self,
        arms: &[ArmState; ARM_COUNT],
        t: u32,
        streams: &mut TrialStreams,
    ) -> Result<Decision, GittinsError> {
        let spec = &self.spec;
        let decision = match spec.algorithm {
            Algorithm::Fr | Algorithm::Tts | Algorithm::Rts => {
                let c = spec.tuning.exponent(t, self.trial_size);
                let pi1 = if c == 0.0 {
                    0.5
                } else {
                    thompson_allocation(superiority_probability(&arms[0], &arms[1]), c)
                };
                select_arm(DecisionKind::Randomized, [1.0 - pi1, pi1], &mut streams.allocation)
            }
            Algorithm::Rpw => {
                select_arm(DecisionKind::Randomized, self.urn.probabilities(), &mut streams.allocation)
            }
            Algorithm::Cb => {
                let values = arms.map(|a| a.posterior_mean());
                select_arm(DecisionKind::Indexed, values, &mut streams.allocation)
            }
            Algorithm::Gi => {
                let values = [self.gittins(&arms[0])?, self.gittins(&arms[1])?];
                select_arm(DecisionKind::Indexed, values, &mut streams.allocation)
            }
            Algorithm::Ucb => {
                let values = arms.map(|a| ucb_index(&a, t));
                select_arm(DecisionKind::Indexed, values, &mut streams.allocation)
            }
            Algorithm::RandUcb => {
                let rng = &mut streams.perturbation;
                let values = [
                    randucb_index(&arms[0], t, &spec.randucb, rng),
                    randucb_index(&arms[1], t, &spec.randucb, rng),
                ];
                select_arm(DecisionKind::Indexed, values, &mut streams.allocation)
            }
            Algorithm::Rbi => {
                let rng = &mut streams.perturbation;
                let mean = spec.perturbation_mean;
                let values = [
                    perturbed_index(arms[0].posterior_mean(), &arms[0], mean, rng),
                    perturbed_index(arms[1].posterior_mean(), &arms[1], mean, rng),
                ];
                select_arm(DecisionKind::Indexed, values, &mut streams.allocation)
            }
            Algorithm::Rgi => {
                let base = [self.gittins(&arms[0])?, self.gittins(&arms[1])?];
                let rng = &mut streams.perturbation;
                let mean = spec.perturbation_mean;
                let values = [
                    perturbed_index(base[0], &arms[0], mean, rng),
                    perturbed_index(base[1], &arms[1], mean, rng),
                ];
                select_arm(DecisionKind::Indexed, values, &mut streams.allocation)
            }
        };
        Ok(decision)
    }

    /// Feed back the outcome that entered the decision state for `arm`:
    /// observed, imputed, or `Missing` when nothing did.
    pub fn observe(&mut self, arm: Arm, outcome: Outcome) {
        if self.spec.algorithm == Algorithm::Rpw {
            self.urn.update(arm, outcome);
        }
    }

    fn gittins(&self, state: &ArmState) -> Result<f64, GittinsError> {
        let (a, b) = state.beta_parameters();
        let (s, f) = (a as u32, b as u32);
        match self.table {
            Some(table) => table.lookup(s, f),
            None => Err(GittinsError::OutOfRange { s, f, limit: 0 }),
        }
    }
}
