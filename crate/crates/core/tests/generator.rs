use gensynth_core::generator::{init_generator, sigmoid};
use gensynth_core::metrics::{MetricConfig, RequirementSpec};
use gensynth_core::{LayerKind, NetworkGraph, Seed, TensorShape};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mlp(widths: &[usize]) -> NetworkGraph {
    let mut layers = vec![("in".to_string(), LayerKind::Input)];
    for (i, &w) in widths[1..].iter().enumerate() {
        layers.push((format!("fc{}", i + 1), LayerKind::Dense { units: w }));
        if i + 2 < widths.len() {
            layers.push((format!("relu{}", i + 1), LayerKind::ReLU));
        }
    }
    layers.push(("out".into(), LayerKind::Output));
    NetworkGraph::chain(TensorShape::flat(widths[0]), layers).unwrap()
}

#[test]
fn expected_params_matches_monte_carlo_over_masks() {
    let gen = init_generator(
        mlp(&[2, 4, 3, 2]),
        RequirementSpec::accuracy_at_least(0.5),
        MetricConfig::default(),
        0.0,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    const DRAWS: usize = 200_000;
    let (mut w43, mut b3, mut total) = (0.0, 0.0, 0.0);
    for _ in 0..DRAWS {
        let k4 = (0..4).filter(|_| rng.random_bool(0.5)).count() as f64;
        let k3 = (0..3).filter(|_| rng.random_bool(0.5)).count() as f64;
        w43 += k4 * k3;
        b3 += k3;
        total += 2.0 * k4 + k4 + k4 * k3 + k3 + k3 * 2.0 + 2.0;
    }
    let n = DRAWS as f64;
    let within = |mc: f64, exact: f64| (mc / exact - 1.0).abs() <= 0.02;
    assert!(within(w43 / n, 3.0), "weights {}", w43 / n);
    assert!(within(b3 / n, 1.5), "biases {}", b3 / n);
    // 2*2+2 + 3 + 1.5 + 1.5*2+2
    assert_eq!(gen.expected_params(), 15.5);
    assert!(
        within(total / n, gen.expected_params()),
        "{} vs {}",
        total / n,
        gen.expected_params()
    );
}

#[test]
fn sampler_keeps_units_at_sigmoid_rate() {
    let gen = init_generator(
        mlp(&[2, 64, 2]),
        RequirementSpec::accuracy_at_least(0.5),
        MetricConfig::default(),
        1.0,
    )
    .unwrap();
    const DRAWS: u64 = 20_000;
    let kept: usize = (0..DRAWS)
        .map(|s| gen.mask(Seed(s)).iter().filter(|&&k| k).count())
        .sum();
    let rate = kept as f64 / (DRAWS * 64) as f64;
    assert!((rate - sigmoid(1.0)).abs() < 0.005, "{rate}");
}

#[test]
fn saturated_generators() {
    let proto = mlp(&[2, 8, 5, 3]);
    let req = RequirementSpec::accuracy_at_least(0.5);
    let high = init_generator(proto.clone(), req, MetricConfig::default(), 50.0).unwrap();
    let low = init_generator(proto.clone(), req, MetricConfig::default(), -50.0).unwrap();
    for s in 0..20 {
        assert_eq!(high.sample(Seed(s)), proto);
        let g = low.sample(Seed(s));
        let widths: Vec<usize> = g.vertices().iter().filter_map(|v| v.kind.width()).collect();
        assert_eq!(widths, vec![1, 1, 3]);
    }
    assert!((high.expected_params() / proto.params() as f64 - 1.0).abs() < 1e-6);
}
