//! Monotone Lipschitz activations and their closed-form integrals.
//!
//! An [`Activation`] is the map `t -> g'(t)` together with its declared
//! Lipschitz envelope `[alpha, beta]` and a description of its range. The
//! built-in kinds all have closed-form integrals and links; [`ActivationKind::Custom`]
//! falls back to adaptive Simpson quadrature and bisection.

use std::f64::consts::LN_2;
use std::fmt;
use std::sync::Arc;

use super::FenchelError;

/// Absolute tolerance for the adaptive Simpson rule used on custom activations.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;
const QUADRATURE_MAX_DEPTH: u32 = 40;

/// Range of an activation, as an interval of extended reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
    pub lo_attained: bool,
    pub hi_attained: bool,
}

impl ValueRange {
    pub const REALS: ValueRange = ValueRange {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        lo_attained: false,
        hi_attained: false,
    };

    pub fn open(lo: f64, hi: f64) -> Self {
        ValueRange { lo, hi, lo_attained: false, hi_attained: false }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        ValueRange { lo, hi, lo_attained: true, hi_attained: true }
    }

    pub fn contains(&self, r: f64) -> bool {
        let above = if self.lo_attained { r >= self.lo } else { r > self.lo };
        let below = if self.hi_attained { r <= self.hi } else { r < self.hi };
        above && below
    }

    pub fn contains_interior(&self, r: f64) -> bool {
        r > self.lo && r < self.hi
    }

    /// Clamp `r` into the range, keeping `margin` away from endpoints that are
    /// not attained.
    pub fn clamp(&self, r: f64, margin: f64) -> f64 {
        let lo = if self.lo_attained { self.lo } else { self.lo + margin };
        let hi = if self.hi_attained { self.hi } else { self.hi - margin };
        r.max(lo).min(hi)
    }
}

/// Shape of an activation.
#[derive(Clone)]
pub enum ActivationKind {
    /// `1 / (1 + e^{-t})`.
    Sigmoid,
    /// `max(0, t)`.
    Relu,
    /// `offset + t` for `t >= 0`, `offset + slope * t` otherwise.
    LeakyRelu { slope: f64, offset: f64 },
    /// `offset + scale * t`.
    Identity { scale: f64, offset: f64 },
    /// `clip(t, 0, 1)`.
    Ramp,
    /// Linear interpolation through `(t, value)` knots, flat outside them.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    /// `base(t) + slope * t`.
    Perturbed { base: Box<Activation>, slope: f64 },
    Custom { name: String, eval: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
            ActivationKind::Sigmoid => write!(f, "Sigmoid"),
            ActivationKind::Relu => write!(f, "Relu"),
            ActivationKind::LeakyRelu { slope, offset } => {
                f.debug_struct("LeakyRelu").field("slope", slope).field("offset", offset).finish()
            }
            ActivationKind::Identity { scale, offset } => {
                f.debug_struct("Identity").field("scale", scale).field("offset", offset).finish()
            }
            ActivationKind::Ramp => write!(f, "Ramp"),
            ActivationKind::PiecewiseLinear { knots } => {
                f.debug_struct("PiecewiseLinear").field("knots", knots).finish()
            }
            ActivationKind::Perturbed { base, slope } => {
                f.debug_struct("Perturbed").field("base", base).field("slope", slope).finish()
            }
        }
    }
}

/// A non-decreasing Lipschitz activation `g'` with declared constants.
#[derive(Clone, Debug)]
pub struct Activation {
    kind: ActivationKind,
    lipschitz_upper: f64,
    lipschitz_lower: f64,
    range: ValueRange,
    /// Set when the declared constants were overridden by the caller.
    declared_override: bool,
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
#[inline]
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

fn check_finite(name: &str, v: f64) -> Result<(), FenchelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(FenchelError::InvalidInput(format!("{name} must be finite, got {v}")))
    }
}

impl Activation {
    pub fn sigmoid() -> Self {
        Activation {
            kind: ActivationKind::Sigmoid,
            lipschitz_upper: 0.25,
            lipschitz_lower: 0.0,
            range: ValueRange::open(0.0, 1.0),
            declared_override: false,
        }
    }

    pub fn relu() -> Self {
        Activation {
            kind: ActivationKind::Relu,
            lipschitz_upper: 1.0,
            lipschitz_lower: 0.0,
            range: ValueRange { lo: 0.0, hi: f64::INFINITY, lo_attained: true, hi_attained: false },
            declared_override: false,
        }
    }

    pub fn leaky_relu(slope: f64) -> Result<Self, FenchelError> {
        Self::leaky_relu_shifted(slope, 0.0)
    }

    pub fn leaky_relu_shifted(slope: f64, offset: f64) -> Result<Self, FenchelError> {
        check_finite("slope", slope)?;
        check_finite("offset", offset)?;
        if slope < 0.0 {
            return Err(FenchelError::InvalidInput(format!("leaky_relu slope must be >= 0, got {slope}")));
        }
        let range = if slope > 0.0 {
            ValueRange::REALS
        } else {
            ValueRange { lo: offset, hi: f64::INFINITY, lo_attained: true, hi_attained: false }
        };
        Ok(Activation {
            kind: ActivationKind::LeakyRelu { slope, offset },
            lipschitz_upper: slope.max(1.0),
            lipschitz_lower: slope.min(1.0),
            range,
            declared_override: false,
        })
    }

    pub fn identity() -> Self {
        Self::affine(1.0, 0.0).expect("unit identity is valid")
    }

    /// `offset + scale * t`; `scale` must be positive.
    pub fn affine(scale: f64, offset: f64) -> Result<Self, FenchelError> {
        check_finite("scale", scale)?;
        check_finite("offset", offset)?;
        if scale <= 0.0 {
            return Err(FenchelError::InvalidInput(format!("identity scale must be > 0, got {scale}")));
        }
        Ok(Activation {
            kind: ActivationKind::Identity { scale, offset },
            lipschitz_upper: scale,
            lipschitz_lower: scale,
            range: ValueRange::REALS,
            declared_override: false,
        })
    }

    pub fn ramp() -> Self {
        Activation {
            kind: ActivationKind::Ramp,
            lipschitz_upper: 1.0,
            lipschitz_lower: 0.0,
            range: ValueRange::closed(0.0, 1.0),
            declared_override: false,
        }
    }

    /// Interpolating activation through knots sorted by `t` with
    /// non-decreasing values; constant beyond the first and last knot.
    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self, FenchelError> {
        if knots.is_empty() {
            return Err(FenchelError::InvalidInput("piecewise_linear needs at least one knot".into()));
        }
        let mut beta: f64 = 0.0;
        for (t, v) in &knots {
            check_finite("knot", *t)?;
            check_finite("knot value", *v)?;
        }
        for pair in knots.windows(2) {
            let (t0, v0) = pair[0];
            let (t1, v1) = pair[1];
            if t1 <= t0 {
                return Err(FenchelError::InvalidInput("piecewise_linear knots must be strictly increasing in t".into()));
            }
            if v1 < v0 {
                return Err(FenchelError::InvalidInput("piecewise_linear values must be non-decreasing".into()));
            }
            beta = beta.max((v1 - v0) / (t1 - t0));
        }
        let lo = knots[0].1;
        let hi = knots[knots.len() - 1].1;
        Ok(Activation {
            kind: ActivationKind::PiecewiseLinear { knots },
            lipschitz_upper: beta,
            lipschitz_lower: 0.0,
            range: ValueRange::closed(lo, hi),
            declared_override: false,
        })
    }

    /// User-supplied activation. The caller is responsible for monotonicity
    /// and for the declared constants and range.
    pub fn custom<F>(name: &str, eval: F, lipschitz_lower: f64, lipschitz_upper: f64, range: ValueRange) -> Result<Self, FenchelError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz_upper > 0.0) || lipschitz_lower < 0.0 || lipschitz_lower > lipschitz_upper {
            return Err(FenchelError::InvalidInput(format!(
                "invalid Lipschitz envelope [{lipschitz_lower}, {lipschitz_upper}]"
            )));
        }
        Ok(Activation {
            kind: ActivationKind::Custom { name: name.to_string(), eval: Arc::new(eval) },
            lipschitz_upper,
            lipschitz_lower,
            range,
            declared_override: false,
        })
    }

    /// `t -> self(t) + slope * t`, which is `[alpha + slope, beta + slope]` bi-Lipschitz.
    pub fn perturb_bilipschitz(&self, slope: f64) -> Result<Self, FenchelError> {
        check_finite("slope", slope)?;
        if slope <= 0.0 {
            return Err(FenchelError::InvalidInput(format!("perturbation slope must be > 0, got {slope}")));
        }
        Ok(Activation {
            kind: ActivationKind::Perturbed { base: Box::new(self.clone()), slope },
            lipschitz_upper: self.lipschitz_upper + slope,
            lipschitz_lower: self.lipschitz_lower + slope,
            range: ValueRange::REALS,
            declared_override: false,
        })
    }

    /// Replace the declared Lipschitz envelope without touching the function.
    /// Used to inject faulty constants into the distortion suites.
    pub fn with_declared_bounds(mut self, lipschitz_lower: f64, lipschitz_upper: f64) -> Self {
        self.lipschitz_lower = lipschitz_lower;
        self.lipschitz_upper = lipschitz_upper;
        self.declared_override = true;
        self
    }

    pub fn kind(&self) -> &ActivationKind {
        &self.kind
    }

    pub fn lipschitz_upper(&self) -> f64 {
        self.lipschitz_upper
    }

    pub fn lipschitz_lower(&self) -> f64 {
        self.lipschitz_lower
    }

    pub fn is_bilipschitz(&self) -> bool {
        self.lipschitz_lower > 0.0
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    /// `g'(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            ActivationKind::Sigmoid => sigmoid(t),
            ActivationKind::Relu => t.max(0.0),
            ActivationKind::LeakyRelu { slope, offset } => {
                if t >= 0.0 {
                    offset + t
                } else {
                    offset + slope * t
                }
            }
            ActivationKind::Identity { scale, offset } => offset + scale * t,
            ActivationKind::Ramp => t.clamp(0.0, 1.0),
            ActivationKind::PiecewiseLinear { knots } => piecewise_value(knots, t),
            ActivationKind::Perturbed { base, slope } => base.eval(t) + slope * t,
            ActivationKind::Custom { eval, .. } => eval(t),
        }
    }

    /// `g(t) = ∫_0^t g'`.
    pub fn integral(&self, t: f64) -> f64 {
        match &self.kind {
            ActivationKind::Sigmoid => softplus(t) - LN_2,
            ActivationKind::Relu => {
                if t > 0.0 {
                    0.5 * t * t
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu { slope, offset } => {
                let quad = if t >= 0.0 { 0.5 * t * t } else { 0.5 * slope * t * t };
                offset * t + quad
            }
            ActivationKind::Identity { scale, offset } => offset * t + 0.5 * scale * t * t,
            ActivationKind::Ramp => {
                if t <= 0.0 {
                    0.0
                } else if t < 1.0 {
                    0.5 * t * t
                } else {
                    0.5 + (t - 1.0)
                }
            }
            ActivationKind::PiecewiseLinear { knots } => piecewise_integral(knots, t),
            ActivationKind::Perturbed { base, slope } => base.integral(t) + 0.5 * slope * t * t,
            ActivationKind::Custom { eval, .. } => adaptive_simpson(&**eval, 0.0, t, QUADRATURE_TOLERANCE),
        }
    }

    /// Closed-form link for the built-in kinds: the point of the preimage
    /// `{t : g'(t) = r}` closest to zero. `None` means bisection is required.
    pub(crate) fn closed_form_link(&self, r: f64) -> Option<f64> {
        match &self.kind {
            ActivationKind::Sigmoid => Some(logit(r)),
            ActivationKind::Relu | ActivationKind::Ramp => Some(r),
            ActivationKind::LeakyRelu { slope, offset } => {
                let q = r - offset;
                if q >= 0.0 {
                    Some(q)
                } else if *slope > 0.0 {
                    Some(q / slope)
                } else {
                    Some(0.0)
                }
            }
            ActivationKind::Identity { scale, offset } => Some((r - offset) / scale),
            ActivationKind::PiecewiseLinear { knots } => Some(piecewise_preimage(knots, r)),
            ActivationKind::Perturbed { .. } | ActivationKind::Custom { .. } => None,
        }
    }

    /// Canonical tag, parseable by [`Activation::from_tag`] for all
    /// non-custom kinds.
    pub fn tag(&self) -> String {
        let inner = match &self.kind {
            ActivationKind::Sigmoid => "sigmoid".to_string(),
            ActivationKind::Relu => "relu".to_string(),
            ActivationKind::LeakyRelu { slope, offset } => {
                if *offset == 0.0 {
                    format!("leaky_relu(slope={slope})")
                } else {
                    format!("leaky_relu(slope={slope},offset={offset})")
                }
            }
            ActivationKind::Identity { scale, offset } => {
                if *scale == 1.0 && *offset == 0.0 {
                    "identity".to_string()
                } else {
                    format!("identity(scale={scale},offset={offset})")
                }
            }
            ActivationKind::Ramp => "ramp".to_string(),
            ActivationKind::PiecewiseLinear { knots } => {
                let body: Vec<String> = knots.iter().map(|(t, v)| format!("{t}:{v}")).collect();
                format!("piecewise_linear({})", body.join(";"))
            }
            ActivationKind::Perturbed { base, slope } => format!("perturb({},{slope})", base.tag()),
            ActivationKind::Custom { name, .. } => format!("custom({name})"),
        };
        if self.declared_override {
            format!("declare({inner},{},{})", self.lipschitz_lower, self.lipschitz_upper)
        } else {
            inner
        }
    }

    /// Parse a tag such as `sigmoid`, `leaky_relu(slope=0.1,offset=0.5)`,
    /// `perturb(ramp,0.05)` or `declare(identity,1,0.5)`.
    pub fn from_tag(tag: &str) -> Result<Self, FenchelError> {
        let tag = tag.trim();
        let unknown = || FenchelError::UnknownTag(tag.to_string());
        let (name, args) = match tag.find('(') {
            Some(open) => {
                if !tag.ends_with(')') {
                    return Err(unknown());
                }
                (tag[..open].trim(), Some(&tag[open + 1..tag.len() - 1]))
            }
            None => (tag, None),
        };
        let num = |s: &str| -> Result<f64, FenchelError> { s.trim().parse::<f64>().map_err(|_| unknown()) };
        match (name, args) {
            ("sigmoid", None) => Ok(Self::sigmoid()),
            ("relu", None) => Ok(Self::relu()),
            ("ramp" | "identity_clamped", None) => Ok(Self::ramp()),
            ("identity", None) => Ok(Self::identity()),
            ("identity", Some(a)) => {
                let kv = parse_kv(a).ok_or_else(unknown)?;
                let mut scale = 1.0;
                let mut offset = 0.0;
                for (k, v) in kv {
                    match k {
                        "scale" => scale = num(v)?,
                        "offset" => offset = num(v)?,
                        _ => return Err(unknown()),
                    }
                }
                Self::affine(scale, offset)
            }
            ("leaky_relu", Some(a)) => {
                // Accept both `leaky_relu(0.1)` and the keyed form.
                if !a.contains('=') {
                    return Self::leaky_relu(num(a)?);
                }
                let kv = parse_kv(a).ok_or_else(unknown)?;
                let mut slope = None;
                let mut offset = 0.0;
                for (k, v) in kv {
                    match k {
                        "slope" => slope = Some(num(v)?),
                        "offset" => offset = num(v)?,
                        _ => return Err(unknown()),
                    }
                }
                Self::leaky_relu_shifted(slope.ok_or_else(unknown)?, offset)
            }
            ("piecewise_linear", Some(a)) => {
                let mut knots = Vec::new();
                for item in a.split(';') {
                    let (t, v) = item.split_once(':').ok_or_else(unknown)?;
                    knots.push((num(t)?, num(v)?));
                }
                Self::piecewise_linear(knots)
            }
            ("perturb", Some(a)) => {
                let (base, rest) = split_last_args(a, 1).ok_or_else(unknown)?;
                Self::from_tag(base)?.perturb_bilipschitz(num(rest[0])?)
            }
            ("declare", Some(a)) => {
                let (base, rest) = split_last_args(a, 2).ok_or_else(unknown)?;
                Ok(Self::from_tag(base)?.with_declared_bounds(num(rest[0])?, num(rest[1])?))
            }
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

fn parse_kv(args: &str) -> Option<Vec<(&str, &str)>> {
    args.split(',')
        .map(|item| item.split_once('=').map(|(k, v)| (k.trim(), v.trim())))
        .collect()
}

/// Split `inner,a,b` into `inner` and the trailing `count` scalar arguments.
/// `inner` may itself contain parentheses and commas.
fn split_last_args(args: &str, count: usize) -> Option<(&str, Vec<&str>)> {
    let mut end = args.len();
    let mut tail = Vec::with_capacity(count);
    for _ in 0..count {
        let comma = args[..end].rfind(',')?;
        tail.push(args[comma + 1..end].trim());
        end = comma;
    }
    tail.reverse();
    let head = args[..end].trim();
    if head.is_empty() {
        None
    } else {
        Some((head, tail))
    }
}

fn piecewise_value(knots: &[(f64, f64)], t: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if t <= first.0 {
        return first.1;
    }
    if t >= last.0 {
        return last.1;
    }
    // knots.len() >= 2 here.
    let idx = knots.partition_point(|k| k.0 <= t);
    let (t0, v0) = knots[idx - 1];
    let (t1, v1) = knots[idx];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// Exact integral of the interpolant from 0 to `t`.
fn piecewise_integral(knots: &[(f64, f64)], t: f64) -> f64 {
    let (a, b, sign) = if t >= 0.0 { (0.0, t, 1.0) } else { (t, 0.0, -1.0) };
    let mut cuts = vec![a];
    cuts.extend(knots.iter().map(|k| k.0).filter(|&k| k > a && k < b));
    cuts.push(b);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (u, v) = (w[0], w[1]);
        total += 0.5 * (v - u) * (piecewise_value(knots, u) + piecewise_value(knots, v));
    }
    sign * total
}

/// Point of `{t : value(t) = r}` closest to zero, for `r` in the closed range.
fn piecewise_preimage(knots: &[(f64, f64)], r: f64) -> f64 {
    // Left end of the preimage: inf{t : value(t) >= r}.
    let left = if r <= knots[0].1 {
        f64::NEG_INFINITY
    } else {
        let mut out = knots[knots.len() - 1].0;
        for w in knots.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            if v1 >= r {
                out = t0 + (r - v0) / (v1 - v0) * (t1 - t0);
                break;
            }
        }
        out
    };
    // Right end: sup{t : value(t) <= r}.
    let right = if r >= knots[knots.len() - 1].1 {
        f64::INFINITY
    } else {
        let mut out = knots[0].0;
        for w in knots.windows(2).rev() {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            if v0 <= r {
                out = t1 - (v1 - r) / (v1 - v0) * (t1 - t0);
                break;
            }
        }
        out
    };
    // On strictly increasing pieces both ends describe one point and may
    // differ by rounding; the left end is taken then.
    if right <= left {
        return left;
    }
    0.0_f64.clamp(left, right)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, QUADRATURE_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn builtins() -> Vec<Activation> {
        vec![
            Activation::sigmoid(),
            Activation::relu(),
            Activation::leaky_relu(0.1).unwrap(),
            Activation::leaky_relu_shifted(0.1, 0.5).unwrap(),
            Activation::identity(),
            Activation::affine(2.0, -0.3).unwrap(),
            Activation::ramp(),
            Activation::piecewise_linear(vec![(-1.0, 0.0), (0.0, 0.25), (2.0, 1.0)]).unwrap(),
            Activation::ramp().perturb_bilipschitz(0.05).unwrap(),
        ]
    }

    #[test]
    fn built_ins_are_monotone_and_within_their_envelope() {
        let ts = grid(-8.0, 8.0, 801);
        for act in builtins() {
            let beta = act.lipschitz_upper();
            let alpha = act.lipschitz_lower();
            for w in ts.windows(2) {
                let (a, b) = (act.eval(w[0]), act.eval(w[1]));
                assert!(b >= a, "{} not monotone at {}", act.tag(), w[0]);
                let q = (b - a) / (w[1] - w[0]);
                assert!(q <= beta + 1e-9, "{}: slope {q} > {beta}", act.tag());
                assert!(q >= alpha - 1e-9, "{}: slope {q} < {alpha}", act.tag());
            }
        }
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        for act in builtins() {
            let f = |t: f64| act.eval(t);
            for &t in &[-3.5, -1.0, -0.2, 0.0, 0.3, 1.0, 1.7, 4.0] {
                let exact = act.integral(t);
                let quad = adaptive_simpson(&f, 0.0, t, 1e-12);
                assert!((exact - quad).abs() < 1e-8, "{} at {t}: {exact} vs {quad}", act.tag());
            }
        }
    }

    #[test]
    fn custom_activation_uses_quadrature() {
        let act = Activation::custom("tanh01", |t| 0.5 * (1.0 + t.tanh()), 0.0, 0.5, ValueRange::open(0.0, 1.0)).unwrap();
        // ∫_0^t (1 + tanh τ)/2 dτ = t/2 + ln(cosh t)/2
        for &t in &[-2.0f64, 0.5, 3.0] {
            let expected = 0.5 * t + 0.5 * t.cosh().ln();
            assert!((act.integral(t) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn tags_round_trip() {
        let mut all = builtins();
        all.push(Activation::relu().perturb_bilipschitz(0.1).unwrap().with_declared_bounds(0.1, 0.5));
        for act in all {
            let back = Activation::from_tag(&act.tag()).unwrap();
            assert_eq!(back.tag(), act.tag());
            for &t in &[-2.0, -0.1, 0.0, 0.7, 3.0] {
                assert_eq!(back.eval(t), act.eval(t));
            }
        }
        assert!(Activation::from_tag("leaky_relu(0.1)").is_ok());
    }

    #[test]
    fn unknown_tag_names_the_tag() {
        let err = Activation::from_tag("swish").unwrap_err();
        assert!(err.to_string().contains("swish"));
        assert!(Activation::from_tag("identity(scale=0)").is_err());
        assert!(Activation::from_tag("perturb(sigmoid)").is_err());
    }

    #[test]
    fn piecewise_preimage_prefers_point_nearest_zero() {
        let knots = vec![(-1.0, 0.0), (1.0, 0.5), (2.0, 0.5), (3.0, 1.0)];
        assert_eq!(piecewise_preimage(&knots, 0.5), 1.0);
        assert_eq!(piecewise_preimage(&knots, 0.0), -1.0);
        assert!((piecewise_preimage(&knots, 0.25) - 0.0).abs() < 1e-15);
        assert_eq!(piecewise_preimage(&knots, 1.0), 3.0);
    }

    #[test]
    fn perturbing_relu_gives_leaky_slopes() {
        let act = Activation::relu().perturb_bilipschitz(0.1).unwrap();
        assert_eq!(act.lipschitz_lower(), 0.1);
        assert!((act.lipschitz_upper() - 1.1).abs() < 1e-15);
        assert!((act.eval(-2.0) + 0.2).abs() < 1e-15);
        assert!((act.eval(2.0) - 2.2).abs() < 1e-15);
        let id = Activation::identity().perturb_bilipschitz(0.25).unwrap();
        for &t in &[-3.0, 0.5, 4.0] {
            assert!((id.eval(t) - 1.25 * t).abs() < 1e-15);
        }
        assert!(Activation::relu().perturb_bilipschitz(0.0).is_err());
    }
}
