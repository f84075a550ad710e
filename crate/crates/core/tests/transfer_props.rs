use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simlearn::fenchel::{Activation, FenchelPair};
use simlearn::learners::*;
use simlearn::linalg::dot;
use simlearn::synth::*;
use simlearn::transfer::*;

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Standard normal upper tail by Simpson's rule on `[z, z + 40]`.
fn normal_upper_tail(z: f64) -> f64 {
    let n = 200_000;
    let h = 40.0 / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(z) + pdf(z + 40.0);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(z + i as f64 * h);
    }
    acc * h / 3.0
}

fn binary_constant(p: f64, n: usize, seed: u64) -> Dataset {
    let feats = sample_marginal(&MarginalSpec::gaussian(2), n, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 }).collect();
    Dataset::from_parts(feats, labels, LabelSpace::Binary, seed).unwrap()
}

#[test]
fn perfect_predictor_has_zero_error() {
    let model = LabelModel::new(vec![1.0, -0.5], Activation::sigmoid(), LabelSpace::Interval);
    let ds = generate_dataset(&MarginalSpec::gaussian(2), &model, 1000, 3).unwrap();
    let pred = GlmPredictor::new(model.planted_w.clone(), Activation::sigmoid());
    let r = evaluate(&pred, &ds, &[FenchelPair::sigmoid()]).unwrap();
    assert_eq!(r.err2, 0.0);
    assert_eq!(r.err1, 0.0);
    assert_eq!(r.n_eval, 1000);
    assert_eq!(r.seed, 3);
    assert!(r.matching_losses.contains_key("sigmoid"));
}

#[test]
fn constant_half_on_fair_coins() {
    let ds = binary_constant(0.5, 100_000, 7);
    let r = evaluate(&ConstantPredictor { value: 0.5 }, &ds, &[]).unwrap();
    assert!((r.err2 - 0.25).abs() <= 0.0025);
    assert!((r.err1 - 0.5).abs() <= 0.005);
    assert!(r.jensen_holds());
}

#[test]
fn empty_dataset_is_an_error() {
    let feats = Features::new(0, 2, vec![]);
    let ds = Dataset { features: feats, labels: vec![], meta: binary_constant(0.5, 1, 1).meta };
    assert!(matches!(evaluate(&ConstantPredictor { value: 0.5 }, &ds, &[]), Err(TransferError::Empty)));
}

#[test]
fn disagreement_examples() {
    let zeros = {
        let feats = sample_marginal(&MarginalSpec::gaussian(2), 100, 1).unwrap();
        Dataset::from_parts(feats, vec![0.0; 100], LabelSpace::Binary, 1).unwrap()
    };
    let d = pconcept_disagreement(&vec![0.0; 100], &zeros, 10_000, 2).unwrap();
    assert_eq!(d.estimate, 0.0);

    let coins = binary_constant(0.5, 10_000, 3);
    let d = pconcept_disagreement(&vec![0.5; 10_000], &coins, 100_000, 4).unwrap();
    assert!((d.estimate - 0.5).abs() <= 3.0 * d.standard_error.max(0.5 / (1e5f64).sqrt()));

    let model = LabelModel::new(vec![1.5, -1.0], Activation::sigmoid(), LabelSpace::Binary);
    let ds = generate_dataset(&MarginalSpec::gaussian(2), &model, 20_000, 5).unwrap();
    let preds = GlmPredictor::new(model.planted_w.clone(), Activation::sigmoid()).predict_all(&ds.features);
    let err1 = preds.iter().zip(&ds.labels).map(|(p, y)| (p - y).abs()).sum::<f64>() / ds.len() as f64;
    let resamples = 100_000;
    let d = pconcept_disagreement(&preds, &ds, resamples, 6).unwrap();
    assert!((d.estimate - err1).abs() <= 3.0 * (err1 / resamples as f64).sqrt(), "d={} err1={err1}", d.estimate);
}

#[test]
fn disagreement_needs_binary_labels() {
    let model = LabelModel::new(vec![1.0], Activation::sigmoid(), LabelSpace::Interval);
    let ds = generate_dataset(&MarginalSpec::gaussian(1), &model, 10, 1).unwrap();
    assert!(matches!(pconcept_disagreement(&vec![0.5; 10], &ds, 10, 1), Err(TransferError::Inapplicable(_))));
}

#[test]
fn gaussian_tail_formula_matches_quadrature() {
    for (s, r) in [(1.0f64, 2.0), (0.7, 1.0), (1.3, 3.0), (0.5, 0.0)] {
        // E[e^{|Z|} 1{|Z|>r}] = 2 int_r^inf e^z phi(z/s)/s dz = 2 e^{s^2/2} Phi_bar((r - s^2) / s).
        let oracle = 2.0 * (0.5 * s * s).exp() * normal_upper_tail((r - s * s) / s);
        assert!((gaussian_exp_tail(s, r) - oracle).abs() < 1e-9, "s={s} r={r}");
    }
}

#[test]
fn gaussian_tail_spot_check_against_monte_carlo() {
    let w = vec![0.6, 0.8, 0.0];
    let x = sample_marginal(&MarginalSpec::gaussian(3), 100_000, 41).unwrap();
    let scores = x.scores(&w);
    let (mean, se) = exp_tail_moment(&scores, 2.0);
    let analytic = gaussian_exp_tail(1.0, 2.0);
    assert!((mean - analytic).abs() <= 3.0 * se, "mc={mean} se={se} analytic={analytic}");
}

#[test]
fn comparator_set_draws_inside_the_ball() {
    let set = ComparatorSet::new(2.0).with_random(4, 1000, 5);
    assert_eq!(set.len(), 1000);
    assert!(set.candidates.iter().all(|w| simlearn::linalg::norm(w) <= 2.0 + 1e-12));
    let again = ComparatorSet::new(2.0).with_random(4, 1000, 5);
    assert_eq!(set, again);
}

fn bilipschitz_instance(tag: &str, level: f64, seed: u64) -> (Dataset, FenchelPair) {
    let pair = FenchelPair::from_tag(tag).unwrap();
    let model = LabelModel::new(vec![0.3, -0.2, 0.1], pair.activation().clone(), LabelSpace::Interval)
        .with_corruption(Corruption::BoundedNoise { level });
    (generate_dataset(&MarginalSpec::uniform_ball(3), &model, 3000, seed).unwrap(), pair)
}

#[test]
fn bilipschitz_transfer_uses_the_stated_constants() {
    let (ds, pair) = bilipschitz_instance("perturb(relu,0.1)", 0.2, 1);
    let comps = ComparatorSet::new(1.0).with_candidate(ds.meta.model.as_ref().unwrap().planted_w.clone());
    let preds = vec![0.5; ds.len()];
    let check = check_bilipschitz_transfer(&preds, &ds, &pair, &comps, 1e-6).unwrap();
    assert!((check.rhs - (11.0 * check.opt_hat + 2.2 * check.eps_hat)).abs() < 1e-12);
    assert!(check.pass);
    let ramp = FenchelPair::from_tag("ramp").unwrap();
    assert!(check_bilipschitz_transfer(&preds, &ds, &ramp, &comps, 1e-6).is_err());
}

#[test]
fn realizable_transfer_reduces_to_the_premise_gap() {
    let (ds, pair) = bilipschitz_instance("identity(scale=1,offset=0.5)", 0.0, 2);
    let w = ds.meta.model.as_ref().unwrap().planted_w.clone();
    let comps = ComparatorSet::new(1.0).with_candidate(w.clone()).with_random(3, 200, 1);
    let pred = train_omnipredictor(&ds, &OmniConfig::new(1.0, 0.02, 0.02, ds.meta.marginal.unwrap().lambda())).unwrap();
    let check = check_bilipschitz_transfer(&pred.predict_all(&ds.features), &ds, &pair, &comps, 1e-6).unwrap();
    assert_eq!(check.opt_hat, 0.0);
    assert!(check.lhs <= 2.0 * check.eps_hat + 1e-6);
}

#[test]
fn general_activation_examples() {
    let spec = MarginalSpec::gaussian(3);
    let w = vec![0.4, 0.3, 0.0];
    let b = 1.0;
    let lambda = spec.lambda();
    let g = FenchelPair::from_tag("ramp").unwrap();
    let clean = LabelModel::new(w.clone(), Activation::ramp(), LabelSpace::Interval);
    let ds = generate_dataset(&spec, &clean, 20_000, 3).unwrap();
    let comps = ComparatorSet::new(b).with_candidate(w.clone());
    let preds = vec![0.4; ds.len()];
    for (slope, cap) in [(0.05, 0.05f64.powi(2) * lambda * b * b), (1e-6, 1e-12 * lambda * b * b)] {
        let phi = FenchelPair::new(Activation::ramp().perturb_bilipschitz(slope).unwrap());
        let check = check_general_activation_transfer(&preds, &ds, &g, &phi, &comps, 1e-6).unwrap();
        assert!(check.details["approximation_term"] <= cap, "slope={slope}");
        assert!(check.pass);
    }
    let noisy = clean.with_corruption(Corruption::BoundedNoise { level: 0.3 });
    let ds = generate_dataset(&spec, &noisy, 20_000, 4).unwrap();
    let opt = ds.meta.certified_opt_upper_bound.unwrap();
    let slope = opt.sqrt() / (b * lambda.sqrt());
    let phi = FenchelPair::new(Activation::ramp().perturb_bilipschitz(slope).unwrap());
    let check = check_general_activation_transfer(&preds, &ds, &g, &phi, &comps, 1e-6).unwrap();
    assert!(check.details["approximation_term"] <= check.opt_hat, "{check:?}");
    assert!(check.pass);
}

#[test]
fn general_activation_check_needs_a_planted_model() {
    let ds = binary_constant(0.5, 100, 1);
    let mut stripped = ds.clone();
    stripped.meta.model = None;
    let g = FenchelPair::from_tag("ramp").unwrap();
    let phi = FenchelPair::from_tag("perturb(ramp,0.1)").unwrap();
    let comps = ComparatorSet::new(1.0).with_candidate(vec![0.0, 0.0]);
    assert!(matches!(
        check_general_activation_transfer(&vec![0.5; 100], &stripped, &g, &phi, &comps, 1e-6),
        Err(TransferError::Inapplicable(_))
    ));
}

#[test]
fn sim_bound_examples() {
    let ds = binary_constant(0.5, 100, 1);
    let zero = check_sim_bound(&vec![0.5; 100], &ds, 0.0, 2.0, 1.0, 0.02, 1e-6);
    assert_eq!(zero.scaled_term, 0.0);
    assert!(!zero.pass || zero.lhs <= 0.02);
    let mut c = check_sim_bound(&vec![0.5; 100], &ds, 0.04, 2.0, 1.0, 0.02, 1e-6);
    assert!((c.scaled_term - 0.4).abs() < 1e-15);
    c.apply_constant(3.0);
    assert!((c.rhs - (0.4 * 3.0 + 0.02)).abs() < 1e-15);
}

#[test]
fn sim_bound_survives_rescaling_with_the_same_constant() {
    let spec = MarginalSpec::gaussian(3);
    let model = LabelModel::new(vec![0.8, -0.6, 0.0], Activation::sigmoid(), LabelSpace::Interval)
        .with_corruption(Corruption::BoundedNoise { level: 0.2 });
    let ds = generate_dataset(&spec, &model, 20_000, 11).unwrap();
    let half = ds.rescale_features(0.5);
    let run = |d: &Dataset, b: f64| {
        let lambda = d.meta.marginal.unwrap().lambda();
        let pred = train_omnipredictor(d, &OmniConfig::new(b, 0.02, 0.02, lambda)).unwrap();
        check_sim_bound(&pred.predict_all(&d.features), d, d.meta.certified_opt_upper_bound.unwrap(), b, lambda, 0.02, 1e-6)
    };
    let mut checks = vec![run(&ds, 1.0), run(&half, 2.0)];
    // B sqrt(lambda) is invariant under the rescaling.
    assert!((checks[0].scaled_term - checks[1].scaled_term).abs() < 1e-12);
    let c = calibrate_constant(&mut checks[..1]);
    checks[1].apply_constant(c * 1.5);
    assert!(checks[1].pass, "{:?}", checks[1]);
}

#[test]
fn logistic_squared_displayed_factor() {
    let f = logistic_squared_factor(0.01, 1.0);
    assert_eq!(f, (1.0f64 + (100.0f64).ln().sqrt()).exp());
}

#[test]
fn realizable_logistic_squared_is_degenerate() {
    let spec = MarginalSpec::gaussian(2).with_scale(std::f64::consts::FRAC_1_SQRT_2);
    let model = LabelModel::new(vec![0.6, -0.3], Activation::sigmoid(), LabelSpace::Interval);
    let ds = generate_dataset(&spec, &model, 5000, 2).unwrap();
    let comps = ComparatorSet::new(1.0).with_candidate(model.planted_w.clone());
    let pred = train_logistic(&ds, &DescentConfig::new(1.0, 1.0, 500, 1e-14)).unwrap();
    let check = check_logistic_squared(&pred.predict_all(&ds.features), &ds, 1.0, &comps, 1e-6).unwrap();
    assert!(check.degenerate);
    assert_eq!(check.details["opt_used"], DEGENERATE_OPT_FLOOR);
    assert!(check.lhs <= 2.0 * check.eps_hat.max(0.0) + check.details["chain_rhs"]);
    assert!(check.details["chain_slack"] >= -1e-12);
}

#[test]
fn logistic_absolute_needs_binary_labels() {
    let model = LabelModel::new(vec![0.6], Activation::sigmoid(), LabelSpace::Interval);
    let ds = generate_dataset(&MarginalSpec::laplace(1), &model, 50, 2).unwrap();
    let comps = ComparatorSet::new(1.0).with_candidate(vec![0.6]);
    assert!(check_logistic_absolute(&vec![0.5; 50], &ds, 1.0, &comps, 1e-6).is_err());
}

#[test]
fn logistic_absolute_formula() {
    let model = LabelModel::new(vec![1.5, 1.0], Activation::sigmoid(), LabelSpace::Binary);
    let ds = generate_dataset(&MarginalSpec::laplace(2), &model, 5000, 5).unwrap();
    let comps = ComparatorSet::new(2.0).with_candidate(model.planted_w.clone());
    let preds = GlmPredictor::new(model.planted_w.clone(), Activation::sigmoid()).predict_all(&ds.features);
    let check = check_logistic_absolute(&preds, &ds, 2.0, &comps, 1e-6).unwrap();
    let opt = check.opt_hat;
    assert!((check.scaled_term - 2.0 * opt * (1.0 / opt).ln()).abs() < 1e-15);
    assert!(check.details["chain_slack"] >= -1e-12);
    assert!(check.pass);
}

#[test]
fn logistic_bound_is_tighter_for_small_opt() {
    for i in 0..60 {
        for j in 0..60 {
            let opt = 10f64.powf(-4.0 - 8.0 * i as f64 / 59.0);
            let b = 0.05 + 0.95 * j as f64 / 59.0;
            assert!(logistic_bound_is_tighter(opt, b, 1.0), "opt={opt} B={b}");
        }
    }
}

#[test]
fn logistic_bound_is_not_tighter_at_one_percent_with_unit_norm() {
    // At equal constants the crossover for B = 1 sits near opt = 5.7e-4.
    assert!(!logistic_bound_is_tighter(0.01, 1.0, 1.0));
    assert!(!logistic_bound_is_tighter(1e-3, 1.0, 1.0));
    assert!(logistic_bound_is_tighter(5e-4, 1.0, 1.0));
}

#[test]
fn check_results_serialize_with_fixed_keys() {
    let ds = binary_constant(0.5, 100, 1);
    let check = check_sim_bound(&vec![0.5; 100], &ds, 0.04, 2.0, 1.0, 0.02, 1e-6);
    let a = serde_json::to_string(&check).unwrap();
    let b = serde_json::to_string(&check.clone()).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("{\"theorem\":\"sim_bound\",\"lhs\":"));
    let report = evaluate(&ConstantPredictor { value: 0.5 }, &ds, &[FenchelPair::sigmoid(), FenchelPair::from_tag("ramp").unwrap()]).unwrap();
    let text = serde_json::to_string(&report).unwrap();
    assert!(text.find("\"ramp\"").unwrap() < text.find("\"sigmoid\"").unwrap());
}

fn random_dataset(seed: u64, n: usize, level: f64, tag: &str) -> Dataset {
    let act = Activation::from_tag(tag).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
    let model = LabelModel::new(w, act, LabelSpace::Interval).with_corruption(Corruption::BoundedNoise { level });
    generate_dataset(&MarginalSpec::gaussian(3), &model, n, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jensen_holds_for_any_predictions(preds in prop::collection::vec(0.0f64..=1.0, 1..200), seed in any::<u64>()) {
        let ds = binary_constant(0.4, preds.len(), seed);
        let r = evaluate_predictions(&preds, &ds, &[]).unwrap();
        prop_assert!(r.jensen_holds());
        prop_assert!((0.0..=1.0).contains(&r.err2) && (0.0..=1.0).contains(&r.err1));
    }

    #[test]
    fn bilipschitz_transfer_holds_exactly_on_the_sample(
        seed in any::<u64>(),
        level in 0.0f64..0.3,
        tag in prop::sample::select(vec!["identity(scale=1,offset=0.5)", "leaky_relu(slope=0.1,offset=0.5)", "perturb(ramp,0.2)", "perturb(sigmoid,0.3)"]),
        pw in prop::collection::vec(-1.0f64..1.0, 3),
        c in 0.0f64..1.0,
    ) {
        let ds = random_dataset(seed, 300, level, tag);
        let pair = FenchelPair::from_tag(tag).unwrap();
        let comps = ComparatorSet::new(2.0).with_candidate(ds.meta.model.as_ref().unwrap().planted_w.clone()).with_random(3, 20, seed);
        // Any predictor in (0, 1) satisfies the bound with its own measured gap.
        let preds: Vec<f64> = ds.features.rows().map(|x| (c + 0.5 * dot(&pw, x)).clamp(0.01, 0.99)).collect();
        let check = check_bilipschitz_transfer(&preds, &ds, &pair, &comps, 1e-6).unwrap();
        prop_assert!(check.pass, "{:?}", check);
    }

    #[test]
    fn general_activation_transfer_holds_exactly_on_the_sample(
        seed in any::<u64>(),
        level in 0.0f64..0.3,
        slope in 0.01f64..0.5,
        c in 0.05f64..0.95,
    ) {
        let ds = random_dataset(seed, 300, level, "ramp");
        let g = FenchelPair::from_tag("ramp").unwrap();
        let phi = FenchelPair::new(Activation::ramp().perturb_bilipschitz(slope).unwrap());
        let comps = ComparatorSet::new(2.0).with_candidate(ds.meta.model.as_ref().unwrap().planted_w.clone());
        let check = check_general_activation_transfer(&vec![c; ds.len()], &ds, &g, &phi, &comps, 1e-6).unwrap();
        prop_assert!(check.pass, "{:?}", check);
    }

    #[test]
    fn logistic_chains_hold_exactly_on_the_sample(seed in any::<u64>(), level in 0.0f64..0.4, c in 0.05f64..0.95) {
        let spec = MarginalSpec::gaussian(2).with_scale(std::f64::consts::FRAC_1_SQRT_2);
        let w = vec![0.7, -0.5];
        let model = LabelModel::new(w.clone(), Activation::sigmoid(), LabelSpace::Interval)
            .with_corruption(Corruption::BoundedNoise { level });
        let ds = generate_dataset(&spec, &model, 300, seed).unwrap();
        let comps = ComparatorSet::new(1.0).with_candidate(w.clone());
        let preds = vec![c; ds.len()];
        let sq = check_logistic_squared(&preds, &ds, 1.0, &comps, 1e-6).unwrap();
        prop_assert!(sq.details["chain_slack"] >= -1e-12, "{:?}", sq);
        let bin = ds.binarize_labels(seed);
        let mut bin = bin;
        bin.meta.model = Some(model.clone());
        let ab = check_logistic_absolute(&preds, &bin, 1.0, &comps, 1e-6).unwrap();
        prop_assert!(ab.details["chain_slack"] >= -1e-12, "{:?}", ab);
        let q: Vec<f64> = ds.features.rows().map(|x| sigmoid(dot(&w, x))).collect();
        let planted_err1 = q.iter().zip(&bin.labels).map(|(p, y)| (p - y).abs()).sum::<f64>() / q.len() as f64;
        prop_assert!((ab.opt_hat - planted_err1).abs() < 1e-12);
    }

    #[test]
    fn calibrated_constant_makes_every_scaled_check_pass(lhs in prop::collection::vec((0.0f64..1.0, 0.001f64..1.0, 0.0f64..0.1), 1..10)) {
        let ds = binary_constant(0.5, 10, 1);
        let mut checks: Vec<BoundCheck> = lhs.iter().map(|&(l, opt, eps)| {
            let preds: Vec<f64> = ds.labels.iter().map(|y| (y - l.sqrt()).abs()).collect();
            check_sim_bound(&preds, &ds, opt, 1.0, 1.0, eps, 1e-12)
        }).collect();
        let c = calibrate_constant(&mut checks);
        prop_assert!(checks.iter().all(|k| k.pass));
        prop_assert!(checks.iter().any(|k| k.required_constant == Some(c)));
    }
}
