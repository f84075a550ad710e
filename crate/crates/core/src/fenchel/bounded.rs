//! Grid search for the boundedness certificate of a link `u = f'` on `[0, 1]`.
//!
//! `u` is `(R, gamma)`-bounded when, for every `eps > 0`, there are
//! `r0 <= r1` in `[0, 1]` with
//!
//! * `max(-u(r0), u(r1)) <= R (1/eps)^gamma`,
//! * `(1 - r1)(u(r) - u(r1)) <= eps` for all `r >= r1`,
//! * `r0 (u(r0) - u(r)) <= eps` for all `r <= r0`.
//!
//! The definition is existential, so the search is sound but incomplete: a
//! returned certificate is a genuine witness on the probes, while a failure
//! only says that no candidate on the grid worked.

use serde::Serialize;

use super::{FenchelPair, DEFAULT_CLAMP_MARGIN};

/// Number of candidates per endpoint; the search covers their product.
const CANDIDATES_PER_SIDE: usize = 100;
const MIN_DECADE: f64 = 0.3;
const MAX_DECADE: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundednessWitness {
    pub epsilon: f64,
    pub r0: f64,
    pub r1: f64,
    pub magnitude: f64,
    pub upper_tail: f64,
    pub lower_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessCert {
    #[serde(rename = "R")]
    pub r: f64,
    pub gamma: f64,
    pub epsilon_grid: Vec<f64>,
    pub witnesses: Vec<BoundednessWitness>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedInequality {
    /// The link is not defined on all of `(0, 1)`.
    Range,
    /// `max(-u(r0), u(r1)) <= R (1/eps)^gamma`.
    Magnitude,
    /// `(1 - r1)(u(r) - u(r1)) <= eps` for `r >= r1`.
    UpperTail,
    /// `r0 (u(r0) - u(r)) <= eps` for `r <= r0`.
    LowerTail,
}

impl FailedInequality {
    pub fn describe(&self) -> &'static str {
        match self {
            FailedInequality::Range => "link undefined on (0,1)",
            FailedInequality::Magnitude => "max(-u(r0), u(r1)) <= R (1/eps)^gamma",
            FailedInequality::UpperTail => "(1-r1)(u(r)-u(r1)) <= eps for r >= r1",
            FailedInequality::LowerTail => "r0 (u(r0)-u(r)) <= eps for r <= r0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessFailure {
    pub epsilon: f64,
    pub inequality: FailedInequality,
    pub message: String,
}

impl std::fmt::Display for BoundednessFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "at eps = {}: no candidate satisfies {} ({})", self.epsilon, self.inequality.describe(), self.message)
    }
}

fn candidates_near_one() -> Vec<f64> {
    let mut out = vec![1.0];
    let steps = CANDIDATES_PER_SIDE - 1;
    for i in 0..steps {
        let k = MIN_DECADE + (MAX_DECADE - MIN_DECADE) * i as f64 / (steps - 1) as f64;
        out.push(1.0 - 10f64.powf(-k));
    }
    out
}

fn candidates_near_zero() -> Vec<f64> {
    let mut out = vec![0.0];
    let steps = CANDIDATES_PER_SIDE - 1;
    for i in 0..steps {
        let k = MIN_DECADE + (MAX_DECADE - MIN_DECADE) * i as f64 / (steps - 1) as f64;
        out.push(10f64.powf(-k));
    }
    out
}

/// Search for witnesses of `(R, gamma)`-boundedness of the link of `pair` at
/// each probe `eps`. Endpoints where the link diverges are evaluated at the
/// default clamp margin, which is also where the tail suprema are taken.
pub fn check_bounded_link(pair: &FenchelPair, r: f64, gamma: f64, probes: &[f64]) -> Result<BoundednessCert, BoundednessFailure> {
    let range = pair.range();
    let first_probe = probes.first().copied().unwrap_or(f64::NAN);
    if range.lo > 0.0 || range.hi < 1.0 || (range.lo == 0.0 && range.hi == 0.0) {
        return Err(BoundednessFailure {
            epsilon: first_probe,
            inequality: FailedInequality::Range,
            message: format!("activation range [{}, {}] does not cover (0, 1)", range.lo, range.hi),
        });
    }
    let u = |x: f64| pair.link_clamped(x, DEFAULT_CLAMP_MARGIN);
    let eval_all = |xs: Vec<f64>| -> Result<Vec<(f64, f64)>, BoundednessFailure> {
        xs.into_iter()
            .map(|x| {
                u(x).map(|v| (x, v)).map_err(|e| BoundednessFailure {
                    epsilon: first_probe,
                    inequality: FailedInequality::Range,
                    message: e.to_string(),
                })
            })
            .collect()
    };
    let ones = eval_all(candidates_near_one())?;
    let zeros = eval_all(candidates_near_zero())?;
    // u is non-decreasing, so the tail suprema sit at the extreme candidates.
    let u_top = ones[0].1;
    let u_bottom = zeros[0].1;

    let mut witnesses = Vec::with_capacity(probes.len());
    for &eps in probes {
        let fail = |inequality, message: String| BoundednessFailure { epsilon: eps, inequality, message };
        if !(eps > 0.0) {
            return Err(fail(FailedInequality::Magnitude, format!("probe must be positive, got {eps}")));
        }
        let bound = r * (1.0 / eps).powf(gamma);
        let upper: Vec<(f64, f64)> = ones.iter().copied().filter(|&(_, v)| v <= bound).collect();
        let lower: Vec<(f64, f64)> = zeros.iter().copied().filter(|&(_, v)| -v <= bound).collect();
        if upper.is_empty() || lower.is_empty() {
            return Err(fail(FailedInequality::Magnitude, format!("bound {bound} exceeded by every candidate")));
        }
        let upper_ok: Vec<(f64, f64, f64)> = upper
            .iter()
            .map(|&(x, v)| (x, v, (1.0 - x) * (u_top - v)))
            .filter(|&(_, _, tail)| tail <= eps)
            .collect();
        if upper_ok.is_empty() {
            let best = upper.iter().map(|&(x, v)| (1.0 - x) * (u_top - v)).fold(f64::INFINITY, f64::min);
            return Err(fail(FailedInequality::UpperTail, format!("smallest upper tail {best}")));
        }
        let lower_ok: Vec<(f64, f64, f64)> = lower
            .iter()
            .map(|&(x, v)| (x, v, x * (v - u_bottom)))
            .filter(|&(_, _, tail)| tail <= eps)
            .collect();
        if lower_ok.is_empty() {
            let best = lower.iter().map(|&(x, v)| x * (v - u_bottom)).fold(f64::INFINITY, f64::min);
            return Err(fail(FailedInequality::LowerTail, format!("smallest lower tail {best}")));
        }
        // Widest admissible pair: largest r1 and smallest r0.
        let (r1, u1, tail1) = upper_ok.iter().copied().fold(upper_ok[0], |a, b| if b.0 > a.0 { b } else { a });
        let (r0, u0, tail0) = lower_ok.iter().copied().fold(lower_ok[0], |a, b| if b.0 < a.0 { b } else { a });
        if r0 > r1 {
            return Err(fail(FailedInequality::Magnitude, format!("no admissible pair with r0 <= r1 (r0 = {r0}, r1 = {r1})")));
        }
        witnesses.push(BoundednessWitness {
            epsilon: eps,
            r0,
            r1,
            magnitude: (-u0).max(u1),
            upper_tail: tail1,
            lower_tail: tail0,
        });
    }
    Ok(BoundednessCert { r, gamma, epsilon_grid: probes.to_vec(), witnesses })
}
