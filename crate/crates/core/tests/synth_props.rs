use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simlearn::fenchel::{Activation, FenchelPair};
use simlearn::linalg::{dot, norm};
use simlearn::synth::*;

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let n = norm(&v);
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn marginals() -> Vec<MarginalSpec> {
    vec![
        MarginalSpec::gaussian(5),
        MarginalSpec::gaussian(4).with_scale(std::f64::consts::FRAC_1_SQRT_2),
        MarginalSpec::uniform_ball(3),
        MarginalSpec::laplace(2),
        MarginalSpec::laplace(4).with_scale(0.8),
        MarginalSpec::student_t(3, 5.0),
    ]
}

#[test]
fn second_moments_along_random_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for spec in marginals() {
        let x = sample_marginal(&spec, 100_000, 3).unwrap();
        for _ in 0..20 {
            let v = random_unit(spec.dim, &mut rng);
            let m2 = x.rows().map(|r| dot(&v, r).powi(2)).sum::<f64>() / x.n as f64;
            assert!(m2 <= 1.5 * spec.lambda(), "{} m2={m2} lambda={}", spec.describe(), spec.lambda());
        }
    }
}

#[test]
fn standard_gaussian_directional_moment_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = sample_marginal(&MarginalSpec::gaussian(5), 100_000, 1).unwrap();
    for _ in 0..5 {
        let v = random_unit(5, &mut rng);
        let m2 = x.rows().map(|r| dot(&v, r).powi(2)).sum::<f64>() / x.n as f64;
        assert!((0.97..=1.03).contains(&m2), "m2={m2}");
    }
}

#[test]
fn concentrated_marginals_respect_their_tail_claims() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for spec in marginals() {
        let Some((lc, gamma)) = spec.concentration() else { continue };
        let x = sample_marginal(&spec, 100_000, 4).unwrap();
        for _ in 0..5 {
            let v = random_unit(spec.dim, &mut rng);
            let s: Vec<f64> = x.rows().map(|r| dot(&v, r).abs()).collect();
            for r in [1.0f64, 2.0, 3.0] {
                let tail = s.iter().filter(|&&a| a >= r).count() as f64 / s.len() as f64;
                assert!(tail <= 2.0 * lc * (-r.powf(gamma)).exp(), "{} r={r} tail={tail}", spec.describe());
            }
        }
    }
}

#[test]
fn laplace_tail_at_three_is_below_two_e_minus_three() {
    let x = sample_marginal(&MarginalSpec::laplace(2), 100_000, 8).unwrap();
    let v = [std::f64::consts::FRAC_1_SQRT_2; 2];
    let tail = x.rows().filter(|r| dot(&v, r).abs() >= 3.0).count() as f64 / x.n as f64;
    assert!(tail < 2.0 * (-3.0f64).exp(), "tail={tail}");
}

#[test]
fn uniform_ball_support() {
    let spec = MarginalSpec::uniform_ball(3);
    let x = sample_marginal(&spec, 20_000, 2).unwrap();
    assert!(x.rows().all(|r| norm(r) <= 1.0 + 1e-12));
}

#[test]
fn unknown_marginal_name_is_a_config_error() {
    assert!(matches!(MarginalKind::from_name("cauchy", None), Err(DatasetError::Config(_))));
    assert!(matches!(MarginalKind::from_name("student_t", None), Err(DatasetError::Config(_))));
}

#[test]
fn realizable_interval_labels_are_the_planted_means() {
    let model = LabelModel::new(vec![1.0, -0.5, 0.25], Activation::sigmoid(), LabelSpace::Interval);
    let ds = generate_dataset(&MarginalSpec::gaussian(3), &model, 1000, 9).unwrap();
    assert_eq!(ds.meta.certified_opt_upper_bound, Some(0.0));
    for (x, y) in ds.features.rows().zip(&ds.labels) {
        let s: f64 = dot(&model.planted_w, x);
        assert!((*y - 1.0 / (1.0 + (-s).exp())).abs() < 1e-15);
    }
}

#[test]
fn flip_region_mass_matches_request() {
    let spec = MarginalSpec::gaussian(4);
    let w = vec![1.0, 0.5, 0.0, -0.5];
    let flip = Corruption::flip_upper_tail(&spec, &w, 0.05, 21).unwrap();
    let model = LabelModel::new(w, Activation::sigmoid(), LabelSpace::Binary).with_corruption(flip);
    let ds = generate_dataset(&spec, &model, 100_000, 22).unwrap();
    let mass = ds.meta.corrupted_count as f64 / ds.len() as f64;
    assert!((mass - 0.05).abs() <= 0.01, "mass={mass}");
}

#[test]
fn binary_planted_error_is_bernoulli_variance() {
    let spec = MarginalSpec::gaussian(3);
    let model = LabelModel::new(vec![1.0, 0.5, -0.5], Activation::sigmoid(), LabelSpace::Binary);
    let ds = generate_dataset(&spec, &model, 100_000, 13).unwrap();
    let variance = ds
        .features
        .rows()
        .map(|x| {
            let p = 1.0 / (1.0 + (-dot(&model.planted_w, x)).exp());
            p * (1.0 - p)
        })
        .sum::<f64>()
        / ds.len() as f64;
    let err = ds.meta.certified_opt_upper_bound.unwrap();
    assert!((err - variance).abs() <= 0.02 * variance, "err={err} variance={variance}");
}

#[test]
fn bounded_noise_moves_interval_labels_by_the_level() {
    let model = LabelModel::new(vec![0.2, 0.2], Activation::sigmoid(), LabelSpace::Interval)
        .with_corruption(Corruption::BoundedNoise { level: 0.1 });
    let ds = generate_dataset(&MarginalSpec::uniform_ball(2), &model, 5000, 4).unwrap();
    let opt = ds.meta.certified_opt_upper_bound.unwrap();
    // Means stay in [0.4, 0.6], so no clipping happens and opt equals level^2.
    assert!((opt - 0.01).abs() < 1e-12, "opt={opt}");
}

#[test]
fn certified_bound_equals_planted_error() {
    let spec = MarginalSpec::laplace(3);
    let act = Activation::from_tag("leaky_relu(slope=0.1,offset=0.5)").unwrap();
    let model = LabelModel::new(vec![0.3, -0.2, 0.1], act.clone(), LabelSpace::Interval)
        .with_corruption(Corruption::BoundedNoise { level: 0.2 });
    let ds = generate_dataset(&spec, &model, 4000, 5).unwrap();
    let planted = planted_squared_error(&ds, &act, &model.planted_w);
    assert!(planted <= ds.meta.certified_opt_upper_bound.unwrap() + 1e-12);
}

#[test]
fn disallowed_out_of_range_means_are_errors() {
    let model = LabelModel::new(vec![3.0], Activation::identity(), LabelSpace::Interval).with_clip(false);
    assert!(matches!(generate_dataset(&MarginalSpec::gaussian(1), &model, 100, 1), Err(DatasetError::MeanRange { .. })));
}

#[test]
fn file_round_trip_is_bit_exact() {
    let model = LabelModel::new(vec![0.7, -1.1, 0.3], Activation::sigmoid(), LabelSpace::Interval);
    let ds = generate_dataset(&MarginalSpec::gaussian(3), &model, 10, 17).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    ds.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back.to_canonical_string(), ds.to_canonical_string());
    assert_eq!(back.labels, ds.labels);
    assert_eq!(back.features.data, ds.features.data);
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("#simlearn v1 n=10 d=3 labels=interval seed=17"));
}

#[test]
fn truncated_and_out_of_range_files_are_rejected() {
    let good = "#simlearn v1 n=2 d=1 labels=interval seed=0\n0.5 0.25\n1.0 0.75\n";
    assert!(Dataset::parse(good).is_ok());
    assert!(matches!(
        Dataset::parse("#simlearn v1 n=3 d=1 labels=interval seed=0\n0.5 0.25\n"),
        Err(DatasetError::Truncated { .. })
    ));
    assert!(matches!(
        Dataset::parse("#simlearn v1 n=1 d=1 labels=interval seed=0\n0.5 1.5\n"),
        Err(DatasetError::LabelRange { .. })
    ));
    assert!(matches!(
        Dataset::parse("#simlearn v1 n=1 d=1 labels=binary seed=0\n0.5 0.5\n"),
        Err(DatasetError::LabelRange { .. })
    ));
    assert!(matches!(Dataset::parse("#other\n"), Err(DatasetError::MalformedHeader(_))));
    assert!(matches!(
        Dataset::parse("#simlearn v1 n=1 d=2 labels=interval seed=0\n0.5 0.5\n"),
        Err(DatasetError::DimensionMismatch { .. })
    ));
    assert!(matches!(
        Dataset::parse("#simlearn v1 n=1 d=1 labels=interval seed=0\nNaN 0.5\n"),
        Err(DatasetError::NonFinite { .. })
    ));
}

#[test]
fn binary_reduction_preserves_matching_loss_on_average() {
    // Average the matching loss of a fixed score over many Bernoulli(y) draws.
    let model = LabelModel::new(vec![0.8, -0.4], Activation::sigmoid(), LabelSpace::Interval);
    let ds = generate_dataset(&MarginalSpec::gaussian(2), &model, 200, 31).unwrap();
    let c = [0.3, 0.6];
    let scores = ds.features.scores(&c);
    for pair in [FenchelPair::sigmoid(), FenchelPair::from_tag("identity").unwrap()] {
        let interval = scores.iter().zip(&ds.labels).map(|(&s, &y)| pair.loss(y, s)).sum::<f64>() / ds.len() as f64;
        let resamples = 500;
        let mut total = 0.0;
        for r in 0..resamples {
            let b = ds.binarize_labels(1000 + r);
            total += scores.iter().zip(&b.labels).map(|(&s, &y)| pair.loss(y, s)).sum::<f64>() / ds.len() as f64;
        }
        let avg = total / resamples as f64;
        assert!((avg - interval).abs() <= 0.01 * interval.abs().max(0.1), "{} avg={avg} interval={interval}", pair.tag());
    }
}

#[test]
fn rescaled_data_keeps_labels_and_planted_scores() {
    let model = LabelModel::new(vec![1.0, 0.5], Activation::ramp(), LabelSpace::Interval);
    let ds = generate_dataset(&MarginalSpec::gaussian(2), &model, 500, 3).unwrap();
    let half = ds.rescale_features(0.5);
    let w2 = &half.meta.model.as_ref().unwrap().planted_w;
    assert_eq!(w2, &vec![2.0, 1.0]);
    assert_eq!(half.labels, ds.labels);
    assert_eq!(half.meta.marginal.unwrap().lambda(), 0.25);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generation_is_reproducible(seed in any::<u64>(), n in 1usize..50, kind in 0usize..4) {
        let spec = marginals()[kind];
        let w: Vec<f64> = (0..spec.dim).map(|j| 0.3 * (j as f64 - 1.0)).collect();
        let model = LabelModel::new(w, Activation::sigmoid(), LabelSpace::Binary)
            .with_corruption(Corruption::BoundedNoise { level: 0.1 });
        let a = generate_dataset(&spec, &model, n, seed).unwrap();
        let b = generate_dataset(&spec, &model, n, seed).unwrap();
        prop_assert_eq!(a.to_canonical_string(), b.to_canonical_string());
        prop_assert!(a.labels.iter().all(|&y| y == 0.0 || y == 1.0));
    }

    #[test]
    fn canonical_text_round_trips(seed in any::<u64>(), n in 1usize..30) {
        let model = LabelModel::new(vec![0.4, -0.9], Activation::sigmoid(), LabelSpace::Interval);
        let ds = generate_dataset(&MarginalSpec::laplace(2), &model, n, seed).unwrap();
        let text = ds.to_canonical_string();
        let back = Dataset::parse(&text).unwrap();
        prop_assert_eq!(back.to_canonical_string(), text);
        prop_assert_eq!(back.features.data, ds.features.data);
    }

    #[test]
    fn certified_bound_upper_bounds_planted_error(seed in any::<u64>(), level in 0.0f64..0.4) {
        let act = Activation::ramp();
        let model = LabelModel::new(vec![0.5, 0.5, 0.0], act.clone(), LabelSpace::Interval)
            .with_corruption(Corruption::BoundedNoise { level });
        let ds = generate_dataset(&MarginalSpec::gaussian(3), &model, 200, seed).unwrap();
        let planted = planted_squared_error(&ds, &act, &model.planted_w);
        prop_assert!(planted <= ds.meta.certified_opt_upper_bound.unwrap() + 1e-12);
        prop_assert!(ds.labels.iter().all(|y| (0.0..=1.0).contains(y)));
    }
}
