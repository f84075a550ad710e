use proptest::prelude::*;
use simlearn::fenchel::{
    cross_entropy, kl_bernoulli, Activation, FenchelError, FenchelPair, DEFAULT_INVERSION_TOLERANCE,
};

fn builtin_pairs() -> Vec<FenchelPair> {
    [
        "sigmoid",
        "identity",
        "identity(scale=1,offset=0.5)",
        "leaky_relu(0.1)",
        "leaky_relu(slope=0.1,offset=0.5)",
        "relu",
        "ramp",
        "perturb(relu,0.1)",
        "perturb(ramp,0.05)",
        "perturb(sigmoid,0.01)",
        "piecewise_linear(-1:0;0:0.2;2:1)",
    ]
    .iter()
    .map(|t| FenchelPair::from_tag(t).unwrap())
    .collect()
}

fn bilipschitz_pairs() -> Vec<FenchelPair> {
    builtin_pairs().into_iter().filter(|p| p.activation().is_bilipschitz()).collect()
}

/// Independent link for the shifted leaky ReLU `0.5 + t` / `0.5 + 0.1 t`.
fn shifted_leaky_link(r: f64) -> f64 {
    if r >= 0.5 {
        r - 0.5
    } else {
        (r - 0.5) / 0.1
    }
}

/// `B_f(y, p) = int_p^y (f'(s) - f'(p)) ds` by composite Simpson on a fine grid.
fn bregman_by_quadrature(link: impl Fn(f64) -> f64, y: f64, p: f64) -> f64 {
    let n = 2000;
    let h = (y - p) / n as f64;
    let fp = link(p);
    let h_at = |s: f64| link(s) - fp;
    let mut acc = h_at(p) + h_at(y);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * h_at(p + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn matching_loss_examples() {
    let sig = FenchelPair::sigmoid();
    assert_eq!(sig.matching_loss(0.7, 0.0).unwrap(), 0.0);
    let id = FenchelPair::from_tag("identity").unwrap();
    assert!((id.matching_loss(0.0, 2.0).unwrap() - 2.0).abs() < 1e-15);
    // ln(1 + e^{-t}) + (1 - y) t - ln 2 at y = 1, t = 0.
    let oracle = (1.0f64 + (-0.0f64).exp()).ln() - std::f64::consts::LN_2;
    assert!((sig.matching_loss(1.0, sig.link(0.5).unwrap()).unwrap() - oracle).abs() < 1e-15);
}

#[test]
fn matching_loss_rejects_bad_input() {
    let sig = FenchelPair::sigmoid();
    assert!(matches!(sig.matching_loss(1.5, 0.0), Err(FenchelError::InvalidInput(_))));
    assert!(matches!(sig.matching_loss(0.5, f64::NAN), Err(FenchelError::InvalidInput(_))));
    assert!(matches!(sig.matching_loss(0.5, f64::INFINITY), Err(FenchelError::InvalidInput(_))));
}

#[test]
fn bregman_examples() {
    let sig = FenchelPair::sigmoid();
    assert!(sig.bregman(0.3, 0.3).unwrap().abs() < 1e-15);
    let id = FenchelPair::from_tag("identity").unwrap();
    assert!((id.bregman(1.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
    let oracle = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
    assert!((sig.bregman(0.5, 0.25).unwrap() - oracle).abs() < 1e-12);
    assert!((oracle - 0.14384).abs() < 1e-5);
}

#[test]
fn bregman_at_divergent_boundary_needs_a_clamp() {
    let sig = FenchelPair::sigmoid();
    assert!(matches!(sig.bregman(0.5, 0.0), Err(FenchelError::Boundary { .. })));
    assert!(matches!(sig.bregman(0.5, 1.0), Err(FenchelError::Boundary { .. })));
    let clamped = sig.bregman_clamped(0.5, 0.0, 1e-12).unwrap();
    assert!(clamped.is_finite() && clamped > 0.0);
}

#[test]
fn sigmoid_optimal_loss_at_binary_labels_is_minus_ln2() {
    let sig = FenchelPair::sigmoid();
    for y in [0.0, 1.0] {
        assert!((sig.optimal_matching_loss(y).unwrap() + std::f64::consts::LN_2).abs() < 1e-12);
    }
}

#[test]
fn link_examples() {
    let sig = FenchelPair::sigmoid();
    assert_eq!(sig.link(0.5).unwrap(), 0.0);
    assert!((sig.link(0.75).unwrap() - 3f64.ln()).abs() < 1e-12);
    let leaky = FenchelPair::from_tag("leaky_relu(slope=0.1,offset=0.5)").unwrap();
    let t = leaky.link_by_bisection(0.2).unwrap();
    assert!((leaky.activation_value(t) - 0.2).abs() <= DEFAULT_INVERSION_TOLERANCE);
    assert!((t - shifted_leaky_link(0.2)).abs() < 1e-8);
}

#[test]
fn link_outside_range_is_an_error() {
    let sig = FenchelPair::sigmoid();
    assert!(matches!(sig.link(1.2), Err(FenchelError::OutOfRange { .. })));
    let ramp = FenchelPair::from_tag("ramp").unwrap();
    assert!(matches!(ramp.link(-0.1), Err(FenchelError::OutOfRange { .. })));
}

#[test]
fn flat_segments_invert_to_the_minimal_magnitude_preimage() {
    let relu = FenchelPair::from_tag("relu").unwrap();
    assert_eq!(relu.link_by_bisection(0.0).unwrap(), 0.0);
    let ramp = FenchelPair::from_tag("ramp").unwrap();
    assert!((ramp.link_by_bisection(1.0).unwrap() - 1.0).abs() < 1e-9);
    let pw = FenchelPair::from_tag("piecewise_linear(-1:0;1:0.5;2:0.5;3:1)").unwrap();
    assert!((pw.link_by_bisection(0.5).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn perturbation_examples() {
    let relu = Activation::relu().perturb_bilipschitz(0.1).unwrap();
    assert!((relu.lipschitz_lower() - 0.1).abs() < 1e-15 && (relu.lipschitz_upper() - 1.1).abs() < 1e-15);
    let id = Activation::identity().perturb_bilipschitz(0.25).unwrap();
    for t in [-3.0, -0.5, 0.0, 2.0] {
        assert!((id.eval(t) - 1.25 * t).abs() < 1e-15);
    }
    assert!(Activation::relu().perturb_bilipschitz(0.0).is_err());
    assert!(Activation::relu().perturb_bilipschitz(-1.0).is_err());
}

#[test]
fn perturbed_sigmoid_slopes_on_a_grid() {
    let phi = Activation::sigmoid().perturb_bilipschitz(0.01).unwrap();
    let grid: Vec<f64> = (0..=2000).map(|i| -10.0 + i as f64 * 0.01).collect();
    for w in grid.windows(2) {
        let q = (phi.eval(w[1]) - phi.eval(w[0])) / (w[1] - w[0]);
        assert!(q >= 0.01 - 1e-9 && q <= 1.01 + 1e-9, "slope {q} at {}", w[0]);
    }
}

#[test]
fn lemma_identity_and_bilipschitz_sandwich_on_interior_grid() {
    for pair in bilipschitz_pairs() {
        let a = pair.activation();
        let (alpha, beta) = (a.lipschitz_lower(), a.lipschitz_upper());
        for i in 1..=100 {
            for j in 1..=100 {
                let y = i as f64 / 101.0;
                let p = j as f64 / 101.0;
                let b = pair.bregman(y, p).unwrap();
                let via_loss = pair.loss(y, pair.link(p).unwrap()) - pair.loss(y, pair.link(y).unwrap());
                assert!((via_loss - b).abs() <= 10.0 * pair.inversion_tolerance(), "{} y={y} p={p}", pair.tag());
                let sq = (y - p) * (y - p);
                assert!(b >= sq / (2.0 * beta) - 1e-9, "{} lower y={y} p={p}", pair.tag());
                assert!(b <= sq / (2.0 * alpha) + 1e-9, "{} upper y={y} p={p}", pair.tag());
            }
        }
    }
}

#[test]
fn shifted_leaky_bregman_matches_quadrature() {
    let pair = FenchelPair::from_tag("leaky_relu(slope=0.1,offset=0.5)").unwrap();
    for (y, p) in [(0.1, 0.9), (0.45, 0.55), (0.8, 0.2), (0.3, 0.35)] {
        let oracle = bregman_by_quadrature(shifted_leaky_link, y, p);
        assert!((pair.bregman(y, p).unwrap() - oracle).abs() < 1e-6, "y={y} p={p}");
    }
}

#[test]
fn kl_and_cross_entropy_sandwiches_on_grid() {
    for i in 1..=100 {
        for j in 1..=100 {
            let y = i as f64 / 101.0;
            let p = j as f64 / 101.0;
            let kl = kl_bernoulli(y, p);
            let sq = (y - p) * (y - p);
            assert!(kl >= 0.5 * sq - 1e-9);
            assert!(kl <= 2.0 * sq / p.min(1.0 - p) + 1e-9);
        }
    }
    for j in 1..=100 {
        let p = j as f64 / 101.0;
        for y in [0.0, 1.0] {
            let ce = cross_entropy(y, p);
            let oracle = if y == 1.0 { -p.ln() } else { -(1.0 - p).ln() };
            assert!((ce - oracle).abs() < 1e-12);
            let abs = (y - p).abs();
            assert!(ce >= abs - 1e-9);
            assert!(ce <= 2.0 * abs * (1.0 / (p * (1.0 - p))).ln() + 1e-9);
        }
    }
}

#[test]
fn identity_pair_has_quadratic_conjugate() {
    let id = FenchelPair::from_tag("identity").unwrap();
    for r in [-2.0, -0.3, 0.0, 0.7, 4.0] {
        assert!((id.conjugate(r).unwrap() - r * r / 2.0).abs() < 1e-12);
    }
    let sig = FenchelPair::sigmoid();
    for r in [0.01f64, 0.3, 0.5, 0.99] {
        let negentropy = r * r.ln() + (1.0 - r) * (1.0 - r).ln() + std::f64::consts::LN_2;
        assert!((sig.conjugate(r).unwrap() - negentropy).abs() < 1e-12);
    }
}

#[test]
fn custom_activation_uses_quadrature_and_bisection() {
    use simlearn::fenchel::ValueRange;
    let act = Activation::custom("atan", |t: f64| 0.5 + t.atan() / std::f64::consts::PI, 0.0, 1.0 / std::f64::consts::PI, ValueRange::open(0.0, 1.0))
        .unwrap();
    let pair = FenchelPair::new(act);
    // int_0^t (1/2 + atan(s)/pi) ds = t/2 + (t atan t - ln(1+t^2)/2)/pi.
    for t in [-3.0f64, -0.5, 0.0, 1.0, 2.5] {
        let oracle = t / 2.0 + (t * t.atan() - 0.5 * (1.0 + t * t).ln()) / std::f64::consts::PI;
        assert!((pair.g(t) - oracle).abs() < 1e-8, "t={t}");
    }
    for r in [0.1f64, 0.5, 0.8] {
        let oracle = (std::f64::consts::PI * (r - 0.5)).tan();
        assert!((pair.link(r).unwrap() - oracle).abs() < 1e-7);
    }
}

#[test]
fn duality_on_a_thousand_point_interior_grid() {
    for pair in builtin_pairs() {
        let range = pair.range();
        let (lo, hi) = if range.lo.is_finite() && range.hi.is_finite() { (range.lo, range.hi) } else { (0.0, 1.0) };
        for k in 1..=1000 {
            let r = lo + (hi - lo) * k as f64 / 1001.0;
            let t = pair.link(r).unwrap();
            assert!((pair.activation_value(t) - r).abs() <= 1e-8, "{} r={r}", pair.tag());
        }
    }
}

fn pair_strategy() -> impl Strategy<Value = FenchelPair> {
    let pairs = builtin_pairs();
    (0..pairs.len()).prop_map(move |i| pairs[i].clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn activations_are_monotone_and_lipschitz(pair in pair_strategy(), a in -20.0f64..20.0, b in -20.0f64..20.0) {
        let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
        let act = pair.activation();
        let diff = act.eval(t2) - act.eval(t1);
        prop_assert!(diff >= -1e-15);
        prop_assert!(diff <= act.lipschitz_upper() * (t2 - t1) + 1e-12);
        if act.lipschitz_lower() > 0.0 {
            prop_assert!(diff >= act.lipschitz_lower() * (t2 - t1) - 1e-12);
        }
    }

    #[test]
    fn link_inverts_activation(pair in pair_strategy(), t in -8.0f64..8.0) {
        let act = pair.activation();
        prop_assume!(act.lipschitz_lower() > 0.0);
        let r = act.eval(t);
        let back = pair.link(r).unwrap();
        prop_assert!((back - t).abs() <= pair.inversion_tolerance() / act.lipschitz_lower() + 1e-12);
    }

    #[test]
    fn matching_loss_is_midpoint_convex(pair in pair_strategy(), y in 0.0f64..=1.0, a in -15.0f64..15.0, b in -15.0f64..15.0) {
        let mid = pair.loss(y, 0.5 * (a + b));
        let avg = 0.5 * (pair.loss(y, a) + pair.loss(y, b));
        prop_assert!(mid <= avg + 1e-9 * (1.0 + avg.abs()));
    }

    #[test]
    fn loss_gradient_is_the_residual(pair in pair_strategy(), y in 0.0f64..=1.0, t in -6.0f64..6.0) {
        // Central differences away from kinks of piecewise-linear activations.
        let h = 1e-6;
        let fd = (pair.loss(y, t + h) - pair.loss(y, t - h)) / (2.0 * h);
        let g = pair.loss_gradient(y, t);
        let kink_near = [-1.0, 0.0, 1.0, 2.0].iter().any(|k| (t - k).abs() < 1e-4);
        prop_assume!(!kink_near);
        prop_assert!((fd - g).abs() < 1e-5, "fd={} g={}", fd, g);
    }

    #[test]
    fn bregman_is_nonnegative_and_zero_on_diagonal(y in 0.001f64..0.999, p in 0.001f64..0.999) {
        for pair in bilipschitz_pairs() {
            let b = pair.bregman(y, p).unwrap();
            prop_assert!(b >= -1e-12);
            prop_assert!(pair.bregman(y, y).unwrap().abs() < 1e-12);
        }
        let kl = FenchelPair::sigmoid().bregman(y, p).unwrap();
        prop_assert!((kl - kl_bernoulli(y, p)).abs() < 1e-12);
    }

    #[test]
    fn perturbation_slopes_are_bounded(slope in 0.001f64..1.0, a in -10.0f64..10.0, gap in 0.001f64..5.0) {
        for base in [Activation::relu(), Activation::ramp(), Activation::sigmoid()] {
            let phi = base.perturb_bilipschitz(slope).unwrap();
            let q = (phi.eval(a + gap) - phi.eval(a)) / gap;
            prop_assert!(q >= slope - 1e-9 && q <= base.lipschitz_upper() + slope + 1e-9);
            prop_assert!((phi.lipschitz_lower() - slope).abs() < 1e-15);
        }
    }

    #[test]
    fn tags_round_trip(pair in pair_strategy()) {
        let again = FenchelPair::from_tag(&pair.tag()).unwrap();
        prop_assert_eq!(again.tag(), pair.tag());
        for t in [-2.0, 0.3, 1.7] {
            prop_assert_eq!(again.activation_value(t), pair.activation_value(t));
        }
    }
}

#[test]
fn unknown_tags_are_rejected() {
    for tag in ["softmax", "leaky_relu(slope=)", "perturb(relu)", "identity(bias=1)", "sigmoid("] {
        assert!(matches!(FenchelPair::from_tag(tag), Err(FenchelError::UnknownTag(_))), "{tag}");
    }
}
