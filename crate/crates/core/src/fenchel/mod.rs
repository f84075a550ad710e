//! Fenchel–Legendre pairs built from monotone activations.
//!
//! For an activation `g'` with integral `g`, the link `f'` is the (pseudo-)inverse
//! of `g'` and `f(r) = r f'(r) - g(f'(r))` is the convex conjugate of `g`. The
//! matching loss is `l_g(y, t) = g(t) - y t` and the Bregman divergence of `f`
//! is `B_f(y, p) = f(y) - f(p) - (y - p) f'(p)`.

mod activation;
mod bounded;

pub use activation::{Activation, ActivationKind, ValueRange};
pub use bounded::{check_bounded_link, BoundednessCert, BoundednessFailure, BoundednessWitness, FailedInequality};

pub(crate) use activation::sigmoid;

use std::f64::consts::LN_2;

use thiserror::Error;

/// Default absolute tolerance on `|g'(f'(r)) - r|`.
pub const DEFAULT_INVERSION_TOLERANCE: f64 = 1e-10;
/// Default margin used to pull values away from a divergent boundary of the link.
pub const DEFAULT_CLAMP_MARGIN: f64 = 1e-12;
/// The expanding bracket for link inversion stops at `±2^MAX_BRACKET_EXPONENT`.
pub const MAX_BRACKET_EXPONENT: i32 = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FenchelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("value {value} is outside the activation range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("value {value} lies on a boundary where the link diverges; use clamped evaluation")]
    Boundary { value: f64 },
    #[error("link inversion did not converge for {value}: {reason}")]
    NoConvergence { value: f64, reason: String },
    #[error("unknown activation tag `{0}`")]
    UnknownTag(String),
    #[error("activation `{0}` is not bi-Lipschitz")]
    NotBiLipschitz(String),
}

#[inline]
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// An activation together with its integral, link and conjugate.
#[derive(Clone, Debug)]
pub struct FenchelPair {
    activation: Activation,
    inversion_tolerance: f64,
}

impl FenchelPair {
    pub fn new(activation: Activation) -> Self {
        FenchelPair { activation, inversion_tolerance: DEFAULT_INVERSION_TOLERANCE }
    }

    pub fn sigmoid() -> Self {
        Self::new(Activation::sigmoid())
    }

    pub fn from_tag(tag: &str) -> Result<Self, FenchelError> {
        Activation::from_tag(tag).map(Self::new)
    }

    pub fn with_inversion_tolerance(mut self, tolerance: f64) -> Self {
        self.inversion_tolerance = tolerance;
        self
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn tag(&self) -> String {
        self.activation.tag()
    }

    pub fn inversion_tolerance(&self) -> f64 {
        self.inversion_tolerance
    }

    pub fn range(&self) -> ValueRange {
        self.activation.range()
    }

    fn is_sigmoid(&self) -> bool {
        matches!(self.activation.kind(), ActivationKind::Sigmoid)
    }

    /// `g'(t)`.
    #[inline]
    pub fn activation_value(&self, t: f64) -> f64 {
        self.activation.eval(t)
    }

    /// `g(t) = ∫_0^t g'`.
    #[inline]
    pub fn g(&self, t: f64) -> f64 {
        self.activation.integral(t)
    }

    fn check_in_range(&self, r: f64) -> Result<(), FenchelError> {
        if !r.is_finite() {
            return Err(FenchelError::InvalidInput(format!("value must be finite, got {r}")));
        }
        let range = self.range();
        if range.contains(r) {
            Ok(())
        } else {
            Err(FenchelError::OutOfRange { value: r, lo: range.lo, hi: range.hi })
        }
    }

    /// `f'(r)`: closed form for built-in activations, bisection otherwise.
    /// On flat segments returns the preimage point closest to zero.
    pub fn link(&self, r: f64) -> Result<f64, FenchelError> {
        self.check_in_range(r)?;
        match self.activation.closed_form_link(r) {
            Some(t) => Ok(t),
            None => self.bisect_link(r),
        }
    }

    /// `f'(r)` by monotone bisection, regardless of whether a closed form exists.
    pub fn link_by_bisection(&self, r: f64) -> Result<f64, FenchelError> {
        self.check_in_range(r)?;
        self.bisect_link(r)
    }

    /// `f'(r)` after clamping `r` into the range, `margin` away from any
    /// endpoint that is not attained.
    pub fn link_clamped(&self, r: f64, margin: f64) -> Result<f64, FenchelError> {
        if !r.is_finite() {
            return Err(FenchelError::InvalidInput(format!("value must be finite, got {r}")));
        }
        self.link(self.range().clamp(r, margin))
    }

    fn bisect_link(&self, p: f64) -> Result<f64, FenchelError> {
        let act = &self.activation;
        let at_zero = act.eval(0.0);
        if at_zero == p {
            return Ok(0.0);
        }
        let (mut lo, mut hi);
        if at_zero < p {
            // Invariant: g'(lo) < p <= g'(hi); answer is the leftmost t with g'(t) >= p.
            lo = 0.0;
            hi = f64::NAN;
            for k in 0..=MAX_BRACKET_EXPONENT {
                let t = (2.0f64).powi(k);
                if act.eval(t) >= p {
                    hi = t;
                    break;
                }
                lo = t;
            }
        } else {
            // Invariant: g'(lo) <= p < g'(hi); answer is the rightmost t with g'(t) <= p.
            hi = 0.0;
            lo = f64::NAN;
            for k in 0..=MAX_BRACKET_EXPONENT {
                let t = -(2.0f64).powi(k);
                if act.eval(t) <= p {
                    lo = t;
                    break;
                }
                hi = t;
            }
        }
        if lo.is_nan() || hi.is_nan() {
            return Err(FenchelError::NoConvergence {
                value: p,
                reason: format!("bracket exceeded ±2^{MAX_BRACKET_EXPONENT}"),
            });
        }
        let rising = at_zero < p;
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = act.eval(mid);
            let go_left = if rising { v >= p } else { v > p };
            if go_left {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let t = if rising { hi } else { lo };
        let residual = (act.eval(t) - p).abs();
        if residual > self.inversion_tolerance {
            return Err(FenchelError::NoConvergence {
                value: p,
                reason: format!("residual {residual:e} exceeds tolerance {:e}", self.inversion_tolerance),
            });
        }
        Ok(t)
    }

    /// `f(r) = r f'(r) - g(f'(r))`. The sigmoid pair uses the closed form
    /// `r ln r + (1 - r) ln(1 - r) + ln 2`, which extends continuously to `{0, 1}`.
    pub fn conjugate(&self, r: f64) -> Result<f64, FenchelError> {
        if self.is_sigmoid() {
            if !(0.0..=1.0).contains(&r) {
                return Err(FenchelError::OutOfRange { value: r, lo: 0.0, hi: 1.0 });
            }
            return Ok(xlogx(r) + xlogx(1.0 - r) + LN_2);
        }
        let t = self.link(r)?;
        Ok(r * t - self.g(t))
    }

    /// `l_g(y, t) = g(t) - y t`.
    pub fn matching_loss(&self, y: f64, t: f64) -> Result<f64, FenchelError> {
        if !t.is_finite() {
            return Err(FenchelError::InvalidInput(format!("score must be finite, got {t}")));
        }
        if !(0.0..=1.0).contains(&y) {
            return Err(FenchelError::InvalidInput(format!("label must lie in [0, 1], got {y}")));
        }
        Ok(self.loss(y, t))
    }

    /// Unchecked matching loss for hot loops on validated data.
    #[inline]
    pub fn loss(&self, y: f64, t: f64) -> f64 {
        self.g(t) - y * t
    }

    /// Derivative of `l_g(y, .)` at `t`, namely `g'(t) - y`.
    #[inline]
    pub fn loss_gradient(&self, y: f64, t: f64) -> f64 {
        self.activation.eval(t) - y
    }

    /// `min_t l_g(y, t) = l_g(y, f'(y)) = -f(y)`.
    pub fn optimal_matching_loss(&self, y: f64) -> Result<f64, FenchelError> {
        self.conjugate(y).map(|f| -f)
    }

    fn divergent_endpoint(&self, r: f64) -> bool {
        let range = self.range();
        (r == range.lo && !range.lo_attained) || (r == range.hi && !range.hi_attained)
    }

    /// `B_f(y, p)`. Errors with [`FenchelError::Boundary`] when `p` sits on an
    /// endpoint where the link diverges.
    pub fn bregman(&self, y: f64, p: f64) -> Result<f64, FenchelError> {
        for (name, v) in [("y", y), ("p", p)] {
            if !v.is_finite() {
                return Err(FenchelError::InvalidInput(format!("{name} must be finite, got {v}")));
            }
        }
        if self.divergent_endpoint(p) {
            return Err(FenchelError::Boundary { value: p });
        }
        if self.is_sigmoid() {
            self.check_in_range(p)?;
            if !(0.0..=1.0).contains(&y) {
                return Err(FenchelError::OutOfRange { value: y, lo: 0.0, hi: 1.0 });
            }
            return Ok(kl_bernoulli(y, p));
        }
        if self.divergent_endpoint(y) {
            return Err(FenchelError::Boundary { value: y });
        }
        let tp = self.link(p)?;
        let fy = self.conjugate(y)?;
        let fp = p * tp - self.g(tp);
        Ok(fy - fp - (y - p) * tp)
    }

    /// `B_f(y, p)` with both arguments clamped `margin` away from divergent endpoints.
    pub fn bregman_clamped(&self, y: f64, p: f64, margin: f64) -> Result<f64, FenchelError> {
        let range = self.range();
        let p = range.clamp(p, margin);
        let y = if self.is_sigmoid() { y } else { range.clamp(y, margin) };
        self.bregman(y, p)
    }
}

/// `KL(Ber(y) || Ber(p)) = y ln(y/p) + (1-y) ln((1-y)/(1-p))`.
pub fn kl_bernoulli(y: f64, p: f64) -> f64 {
    let a = if y == 0.0 { 0.0 } else { y * (y / p).ln() };
    let b = if y == 1.0 { 0.0 } else { (1.0 - y) * ((1.0 - y) / (1.0 - p)).ln() };
    a + b
}

/// Binary cross-entropy `-y ln p - (1-y) ln(1-p)`.
pub fn cross_entropy(y: f64, p: f64) -> f64 {
    let a = if y == 0.0 { 0.0 } else { -y * p.ln() };
    let b = if y == 1.0 { 0.0 } else { -(1.0 - y) * (1.0 - p).ln() };
    a + b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matching_loss_examples() {
        let sig = FenchelPair::sigmoid();
        assert_eq!(sig.matching_loss(0.7, 0.0).unwrap(), 0.0);
        let id = FenchelPair::new(Activation::identity());
        assert_eq!(id.matching_loss(0.0, 2.0).unwrap(), 2.0);
        let t = sig.link(0.5).unwrap();
        assert_eq!(t, 0.0);
        let ce_minus = (1.0 + (-t).exp()).ln() - LN_2;
        assert!(close(sig.matching_loss(1.0, t).unwrap(), ce_minus, 1e-15));
        assert!(sig.matching_loss(1.5, 0.0).is_err());
        assert!(sig.matching_loss(0.5, f64::NAN).is_err());
    }

    #[test]
    fn matching_loss_is_shifted_cross_entropy_for_sigmoid() {
        let sig = FenchelPair::sigmoid();
        for &y in &[0.0, 0.2, 0.5, 1.0] {
            for &t in &[-5.0, -0.3, 0.0, 1.1, 7.0] {
                let p = sigmoid(t);
                let ce = cross_entropy(y, p);
                assert!(close(sig.loss(y, t), ce - LN_2, 1e-12));
            }
        }
    }

    #[test]
    fn bregman_examples() {
        let sig = FenchelPair::sigmoid();
        assert_eq!(sig.bregman(0.3, 0.3).unwrap(), 0.0);
        let expected = 0.5 * LN_2 + 0.5 * (2.0f64 / 3.0).ln();
        assert!(close(sig.bregman(0.5, 0.25).unwrap(), expected, 1e-15));
        assert!(close(expected, 0.14384, 1e-5));
        let id = FenchelPair::new(Activation::identity());
        assert!(close(id.bregman(1.0, 0.0).unwrap(), 0.5, 1e-15));
        assert!(matches!(sig.bregman(0.5, 0.0), Err(FenchelError::Boundary { .. })));
        assert!(matches!(sig.bregman(0.5, 1.0), Err(FenchelError::Boundary { .. })));
        assert!(sig.bregman_clamped(0.5, 0.0, DEFAULT_CLAMP_MARGIN).unwrap().is_finite());
    }

    #[test]
    fn clamped_optimal_loss_at_the_boundary_is_minus_ln2() {
        let sig = FenchelPair::sigmoid();
        assert!(close(sig.optimal_matching_loss(0.0).unwrap(), -LN_2, 1e-15));
        assert!(close(sig.optimal_matching_loss(1.0).unwrap(), -LN_2, 1e-15));
        let t = sig.link_clamped(1.0, DEFAULT_CLAMP_MARGIN).unwrap();
        assert!(close(sig.loss(1.0, t), -LN_2, 1e-10));
    }

    #[test]
    fn link_examples() {
        let sig = FenchelPair::sigmoid();
        assert_eq!(sig.link(0.5).unwrap(), 0.0);
        assert!(close(sig.link(0.75).unwrap(), 3.0f64.ln(), 1e-15));
        assert!(close(sig.link_by_bisection(0.75).unwrap(), 3.0f64.ln(), 1e-12));
        assert!(matches!(sig.link(1.0), Err(FenchelError::OutOfRange { .. })));
        assert!(matches!(sig.link(-0.1), Err(FenchelError::OutOfRange { .. })));

        let leaky = FenchelPair::new(Activation::leaky_relu_shifted(0.1, 0.5).unwrap());
        let t = leaky.link_by_bisection(0.2).unwrap();
        assert!((leaky.activation_value(t) - 0.2).abs() <= DEFAULT_INVERSION_TOLERANCE);
        assert!(close(t, -3.0, 1e-9));
        assert!(close(leaky.link(0.2).unwrap(), -3.0, 1e-12));
    }

    #[test]
    fn flat_segments_invert_to_the_point_nearest_zero() {
        let relu = FenchelPair::new(Activation::relu());
        assert_eq!(relu.link_by_bisection(0.0).unwrap(), 0.0);
        let ramp = FenchelPair::new(Activation::ramp());
        assert!(close(ramp.link_by_bisection(1.0).unwrap(), 1.0, 1e-15));
        assert_eq!(ramp.link(1.0).unwrap(), 1.0);
        let shifted_flat = FenchelPair::new(Activation::piecewise_linear(vec![(1.0, 0.0), (2.0, 1.0)]).unwrap());
        // Preimage of 0 is (-inf, 1]; the point nearest zero is 0 itself.
        assert_eq!(shifted_flat.link_by_bisection(0.0).unwrap(), 0.0);
        assert_eq!(shifted_flat.link(0.0).unwrap(), 0.0);
        let right_flat = FenchelPair::new(Activation::piecewise_linear(vec![(-2.0, 0.0), (-1.0, 1.0)]).unwrap());
        assert!(close(right_flat.link_by_bisection(1.0).unwrap(), 0.0, 1e-15));
        assert!(close(right_flat.link_by_bisection(0.0).unwrap(), -2.0, 1e-15));
    }

    #[test]
    fn bisection_reports_an_exhausted_bracket() {
        // Strictly below 1 everywhere on the bracket but nominally reaching it.
        let act = Activation::custom(
            "slow",
            |t: f64| 1.0 - 1.0 / (2.0 + t.max(0.0).ln_1p()),
            0.0,
            0.5,
            ValueRange { lo: 0.5, hi: 1.0, lo_attained: true, hi_attained: false },
        )
        .unwrap();
        let pair = FenchelPair::new(act);
        assert!(matches!(pair.link(0.999), Err(FenchelError::NoConvergence { .. })));
    }

    #[test]
    fn conjugate_satisfies_the_defining_identity() {
        for pair in [
            FenchelPair::sigmoid(),
            FenchelPair::new(Activation::identity()),
            FenchelPair::new(Activation::leaky_relu(0.1).unwrap()),
            FenchelPair::new(Activation::ramp().perturb_bilipschitz(0.05).unwrap()),
        ] {
            for &r in &[0.1, 0.35, 0.5, 0.8, 0.95] {
                let t = pair.link(r).unwrap();
                let lhs = pair.conjugate(r).unwrap();
                let rhs = r * t - pair.g(t);
                assert!(close(lhs, rhs, 1e-10), "{}: {lhs} vs {rhs}", pair.tag());
            }
        }
    }
}
