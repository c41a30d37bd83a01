//! Closed-form delay, run-length, and reallocation expressions.
//!
//! Everything here is a pure function of its arguments. Delays are measured
//! in slots; conversion to milliseconds happens at the edges via
//! [`DelaySlots::to_ms`] and [`slots_from_ms`].

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{domain, Result};

/// Split of the random-access preambles into contention-based and
/// contention-free pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreambleSplit {
    p_total: u32,
    p_c: u32,
    p_f: u32,
}

impl PreambleSplit {
    pub fn new(p_c: u32, p_f: u32) -> Result<Self> {
        if p_c == 0 {
            return Err(domain("at least one contention-based preamble is required"));
        }
        Ok(PreambleSplit {
            p_total: p_c + p_f,
            p_c,
            p_f,
        })
    }

    pub fn p_total(&self) -> u32 {
        self.p_total
    }

    pub fn p_c(&self) -> u32 {
        self.p_c
    }

    pub fn p_f(&self) -> u32 {
        self.p_f
    }
}

/// An expected delay in slots. Infinity is a legitimate value: a contention
/// pool of one preamble shared by two or more devices never succeeds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DelaySlots(f64);

impl DelaySlots {
    pub const INFINITE: DelaySlots = DelaySlots(f64::INFINITY);

    pub fn new(value: f64) -> Self {
        debug_assert!(value >= 0.0, "negative delay {value}");
        DelaySlots(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn to_ms(self, slot_ms: f64) -> f64 {
        self.0 * slot_ms
    }

    pub fn min(self, other: DelaySlots) -> DelaySlots {
        if self.0 <= other.0 {
            self
        } else {
            other
        }
    }
}

impl fmt::Display for DelaySlots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Converts a delay in milliseconds to slots.
pub fn slots_from_ms(ms: f64, slot_ms: f64) -> DelaySlots {
    DelaySlots::new(ms / slot_ms)
}

/// Run-length statistics for the revert mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    alpha: u32,
    p_success: f64,
}

impl RunStats {
    pub fn new(alpha: u32, p_success: f64) -> Result<Self> {
        if alpha == 0 {
            return Err(domain("run length must be at least 1"));
        }
        if !(p_success > 0.0 && p_success < 1.0) {
            return Err(domain(format!(
                "favored-observation probability {p_success} must lie strictly inside (0, 1)"
            )));
        }
        Ok(RunStats { alpha, p_success })
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn p_success(&self) -> f64 {
        self.p_success
    }
}

/// Minimum feasible period of periodic traffic: `ceil(n / p_f)`.
pub fn min_period(n: u64, p_f: u32) -> Result<u64> {
    if p_f == 0 {
        return Err(domain("no contention-free preambles to schedule"));
    }
    if n == 0 {
        return Err(domain("device count must be positive"));
    }
    Ok(n.div_ceil(p_f as u64))
}

fn sole_user_prob(p_c: u32, competitors: f64) -> f64 {
    let p_c = p_c as f64;
    ((p_c - 1.0) / p_c).powf(competitors)
}

/// Probability that a periodic transmitter is the sole user of its
/// contention preamble when `n_p` devices contend on average.
pub fn periodic_success_prob(p_c: u32, n_p: f64) -> Result<f64> {
    if p_c == 0 || n_p < 1.0 {
        return Err(domain("need p_c >= 1 and N_p >= 1"));
    }
    Ok(sole_user_prob(p_c, n_p - 1.0))
}

/// Probability that one of `n_a` critical devices is alone on its drawn
/// contention preamble.
pub fn critical_success_prob(p_c: u32, n_a: u32) -> Result<f64> {
    if p_c == 0 || n_a == 0 {
        return Err(domain("need p_c >= 1 and N_a >= 1"));
    }
    if n_a == 1 {
        return Ok(1.0);
    }
    Ok(sole_user_prob(p_c, (n_a - 1) as f64))
}

/// Expected slots until the first contention success (geometric mean).
pub fn contention_delay(p_c: u32, n_a: u32) -> Result<DelaySlots> {
    let p = critical_success_prob(p_c, n_a)?;
    if p == 0.0 {
        Ok(DelaySlots::INFINITE)
    } else {
        Ok(DelaySlots::new(1.0 / p))
    }
}

/// Expected wait for the scheduled contention-free opportunity.
pub fn contention_free_delay(t_min: u64) -> Result<DelaySlots> {
    if t_min == 0 {
        return Err(domain("period must be at least one slot"));
    }
    Ok(DelaySlots::new((t_min - 1) as f64 / 2.0))
}

/// Expected critical delay once `beta` contention-free preambles have moved
/// into the contention pool: the smaller of the two access routes.
pub fn post_learning_delay(
    split: PreambleSplit,
    beta: u32,
    n: u64,
    n_a: u32,
) -> Result<DelaySlots> {
    if beta > split.p_f() {
        return Err(domain(format!(
            "beta = {beta} exceeds the {} contention-free preambles",
            split.p_f()
        )));
    }
    let contention = contention_delay(split.p_c() + beta, n_a)?;
    let remaining = split.p_f() - beta;
    let scheduled = if remaining == 0 {
        DelaySlots::INFINITE
    } else {
        contention_free_delay(min_period(n, remaining)?)?
    };
    Ok(contention.min(scheduled))
}

/// Number of contention-free preambles to reallocate so the contention
/// delay for `n_a` critical devices drops to `d_th`.
///
/// The closed form is evaluated first, clamped at zero, and nudged by at most
/// a step either way to absorb floating-point error at exact boundaries.
pub fn reallocation_count(p_c: u32, n_a: u32, d_th: DelaySlots) -> Result<u32> {
    if d_th.value() <= 1.0 || d_th.value().is_nan() {
        return Err(domain(format!(
            "delay threshold {} slots is infeasible; it must exceed one slot",
            d_th
        )));
    }
    if n_a < 2 {
        return Err(domain("reallocation needs at least two critical devices"));
    }
    if p_c == 0 {
        return Err(domain("need p_c >= 1"));
    }
    let root = d_th.value().powf(1.0 / (n_a - 1) as f64);
    let raw = (root * (p_c as f64 - 1.0) - p_c as f64) / (1.0 - root);
    let mut beta = if raw.is_finite() {
        raw.ceil().max(0.0)
    } else {
        0.0
    } as u32;

    let meets = |b: u32| -> bool {
        contention_delay(p_c + b, n_a)
            .map(|d| d <= d_th)
            .unwrap_or(false)
    };
    if beta > 0 && meets(beta - 1) {
        beta -= 1;
    } else if !meets(beta) {
        beta += 1;
    }
    Ok(beta)
}

/// Probability that a run of `alpha` consecutive unfavored observations has
/// occurred within the first `n_e` observations, when each observation is
/// favored with probability `p`.
pub fn run_probability(n_e: u32, stats: RunStats) -> f64 {
    run_probability_curve(n_e, stats)[n_e as usize]
}

/// The same cumulative probability for every observation count in `0..=n_max`.
pub fn run_probability_curve(n_max: u32, stats: RunStats) -> Vec<f64> {
    let alpha = stats.alpha() as usize;
    let p = stats.p_success();
    let q_alpha = (1.0 - p).powi(stats.alpha() as i32);
    let n_max = n_max as usize;

    let mut curve = vec![0.0; n_max + 1];
    // Differencing the closed recursion gives nonnegative increments, which
    // avoids cancellation between large terms for long horizons.
    for n in alpha..=n_max {
        curve[n] = if n == alpha {
            q_alpha
        } else {
            let before = curve[n - alpha - 1];
            curve[n - 1] + p * q_alpha * (1.0 - before)
        };
        curve[n] = curve[n].min(1.0);
    }
    curve
}

/// Expected number of observations until `alpha` consecutive unfavored ones,
/// when each observation is favored with probability `p`.
pub fn expected_return_time(stats: RunStats) -> f64 {
    let p = stats.p_success();
    let q = 1.0 - p;
    let alpha = stats.alpha() as i32;
    let weighted: f64 = (0..alpha).map(|j| q.powi(j) * (j + 1) as f64).sum();
    (p * weighted + alpha as f64 * q.powi(alpha)) / q.powi(alpha)
}

/// Sigmoid revert probability, high before the pivot `a` and vanishing after.
pub fn revert_probability(n_e: f64, a: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0 && scale <= 0.5) {
        return Err(domain(format!("revert scale {scale} must lie in (0, 0.5]")));
    }
    let shift = n_e - a;
    Ok(scale * (1.0 - shift / (1.0 + shift.abs())))
}

/// Default revert pivot: the first observation count at which a wrong
/// favored state has almost surely produced an unfavored run while a correct
/// one almost surely has not.
///
/// Falls back to the first count where the wrong-state curve alone crosses
/// its threshold when the two curves never separate that cleanly.
pub fn default_revert_pivot(alpha: u32, p_wrong: RunStats, p_right: RunStats) -> u32 {
    const HIGH: f64 = 0.9;
    const LOW: f64 = 0.1;
    const HORIZON: u32 = 10_000;
    debug_assert_eq!(p_wrong.alpha(), alpha);
    let wrong = run_probability_curve(HORIZON, p_wrong);
    let right = run_probability_curve(HORIZON, p_right);
    (alpha..=HORIZON)
        .find(|&n| wrong[n as usize] >= HIGH && right[n as usize] <= LOW)
        .or_else(|| (alpha..=HORIZON).find(|&n| wrong[n as usize] >= HIGH))
        .unwrap_or(alpha)
}

/// Memory-extended detection radius.
pub fn effective_detection_radius(r_d: f64, m: u32, r_c: f64) -> Result<f64> {
    if m < 2 {
        return Err(domain("memory must hold at least two bits"));
    }
    if r_d <= 0.0 || r_c <= 0.0 {
        return Err(domain("radii must be positive"));
    }
    Ok(r_d + (m - 2) as f64 * r_c)
}

/// Expected number of scheduled periodic transmitters in a slot that have
/// learned correctly after `t` slots of propagation.
pub fn learned_count(t: u64, r_c: f64, r_d_eff: f64, p_f: u32, area: f64) -> Result<f64> {
    if area <= 0.0 {
        return Err(domain("area must be positive"));
    }
    let r_t = (t as f64 * r_c).min(r_d_eff);
    let p_f = p_f as f64;
    Ok((p_f * PI * r_t * r_t / area).clamp(0.0, p_f))
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn ln_permutations(n: u32, k: u32) -> Option<f64> {
    (k <= n).then(|| ln_factorial(n) - ln_factorial(n - k))
}

fn ln_combinations(n: u32, k: u32) -> Option<f64> {
    (k <= n).then(|| ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k))
}

fn check_realloc_args(n_t: u32, p_f: u32, beta: u32) -> Result<()> {
    if beta > p_f {
        return Err(domain(format!("beta = {beta} exceeds p_f = {p_f}")));
    }
    if n_t > p_f {
        return Err(domain(format!("n_t = {n_t} exceeds p_f = {p_f}")));
    }
    Ok(())
}

/// Probability that exactly `b` of the first `beta` reallocation-order
/// preambles are held by learned transmitters, with `n_t` of the `p_f`
/// scheduled transmitters learned. Evaluated in log space from the
/// permutation form.
pub fn realloc_pmf(n_t: u32, p_f: u32, beta: u32, b: u32) -> Result<f64> {
    check_realloc_args(n_t, p_f, beta)?;
    if b > beta {
        return Err(domain(format!("b = {b} exceeds beta = {beta}")));
    }
    let terms = (
        ln_permutations(n_t, b),
        ln_permutations(p_f - n_t, beta - b),
        ln_combinations(beta, b),
    );
    match terms {
        (Some(lp1), Some(lp2), Some(lc)) => {
            let norm = ln_factorial(p_f - beta) - ln_factorial(p_f);
            Ok((norm + lp1 + lp2 + lc).exp())
        }
        _ => Ok(0.0),
    }
}

/// Expected number of actually freed preambles.
pub fn expected_realloc(n_t: u32, p_f: u32, beta: u32) -> Result<f64> {
    check_realloc_args(n_t, p_f, beta)?;
    (0..=beta).try_fold(0.0, |acc, b| {
        Ok(acc + b as f64 * realloc_pmf(n_t, p_f, beta, b)?)
    })
}

/// Lowest achievable expected contention delay with `e_beta_t` preambles
/// freed on average. Uses the `N_a - 1` competitor exponent of the
/// contention delay.
pub fn lowest_expected_delay(p_c: u32, e_beta_t: f64, n_a: u32) -> Result<DelaySlots> {
    let pool = p_c as f64 + e_beta_t;
    if pool <= 1.0 || n_a == 0 {
        return Err(domain("need p_c + E[beta_t] > 1 and N_a >= 1"));
    }
    Ok(DelaySlots::new((pool / (pool - 1.0)).powi(n_a as i32 - 1)))
}

impl From<DelaySlots> for f64 {
    fn from(d: DelaySlots) -> f64 {
        d.0
    }
}
