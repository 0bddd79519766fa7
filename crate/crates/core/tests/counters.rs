use gensynth_core::selfcheck::random_chain;
use gensynth_core::{count_macs, count_params, LayerKind, NetworkGraph, TensorShape};
use proptest::prelude::*;

/// Output positions of a sliding window, found by scanning start offsets in
/// padded coordinates.
fn scan_positions(extent: usize, kernel: usize, stride: usize, padding: usize) -> Vec<i64> {
    let (lo, hi) = (-(padding as i64), (extent + padding) as i64);
    (lo..)
        .step_by(stride)
        .take_while(|&start| start + kernel as i64 <= hi)
        .collect()
}

/// Counts weights one by one and multiplications of a naive forward loop
/// nest (padded taps included).
fn brute_force(g: &NetworkGraph) -> (u64, u64) {
    let (mut params, mut macs) = (0u64, 0u64);
    let mut dims = g.input_shape().dims().to_vec();
    for v in g.vertices() {
        match v.kind {
            LayerKind::Dense { units } => {
                let fan_in: usize = dims.iter().product();
                for _ in 0..units {
                    params += 1;
                    for _ in 0..fan_in {
                        params += 1;
                        macs += 1;
                    }
                }
                dims = vec![units];
            }
            LayerKind::Conv2D {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let ys = scan_positions(dims[1], kernel, stride, padding);
                let xs = scan_positions(dims[2], kernel, stride, padding);
                for _ in 0..out_channels {
                    params += 1 + (dims[0] * kernel * kernel) as u64;
                    for _ in &ys {
                        for _ in &xs {
                            for _ in 0..dims[0] {
                                for _ in 0..kernel {
                                    for _ in 0..kernel {
                                        macs += 1;
                                    }
                                }
                            }
                        }
                    }
                }
                dims = vec![out_channels, ys.len(), xs.len()];
            }
            LayerKind::MaxPool2D { kernel, stride } => {
                dims = vec![
                    dims[0],
                    scan_positions(dims[1], kernel, stride, 0).len(),
                    scan_positions(dims[2], kernel, stride, 0).len(),
                ];
            }
            LayerKind::GlobalAvgPool => dims.truncate(1),
            LayerKind::Flatten => dims = vec![dims.iter().product()],
            _ => {}
        }
    }
    (params, macs)
}

#[derive(Debug, Clone)]
struct ConvSpec {
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    relu: bool,
    pool_stride: Option<usize>,
}

fn conv_spec() -> impl Strategy<Value = ConvSpec> {
    (
        1..=5usize,
        1..=4usize,
        1..=3usize,
        0..=2usize,
        any::<bool>(),
        prop::option::of(1..=2usize),
    )
        .prop_map(
            |(out_channels, kernel, stride, padding, relu, pool_stride)| ConvSpec {
                out_channels,
                kernel,
                stride,
                padding,
                relu,
                pool_stride,
            },
        )
}

/// Builds a chain, dropping conv/pool stages whose window no longer fits.
fn build(
    (c, h, w): (usize, usize, usize),
    convs: &[ConvSpec],
    gap: bool,
    dense: &[usize],
    softmax: bool,
) -> NetworkGraph {
    let mut layers = vec![("in".to_string(), LayerKind::Input)];
    let mut add = |kind: LayerKind| {
        let id = format!("v{}", layers.len());
        layers.push((id, kind));
    };
    let (mut hh, mut ww) = (h, w);
    for s in convs {
        if s.kernel > hh.min(ww) + 2 * s.padding {
            continue;
        }
        add(LayerKind::Conv2D {
            out_channels: s.out_channels,
            kernel: s.kernel,
            stride: s.stride,
            padding: s.padding,
        });
        hh = scan_positions(hh, s.kernel, s.stride, s.padding).len();
        ww = scan_positions(ww, s.kernel, s.stride, s.padding).len();
        if s.relu {
            add(LayerKind::ReLU);
        }
        if let Some(ps) = s.pool_stride {
            if hh >= 2 && ww >= 2 {
                add(LayerKind::MaxPool2D {
                    kernel: 2,
                    stride: ps,
                });
                hh = scan_positions(hh, 2, ps, 0).len();
                ww = scan_positions(ww, 2, ps, 0).len();
            }
        }
    }
    add(if gap {
        LayerKind::GlobalAvgPool
    } else {
        LayerKind::Flatten
    });
    for &units in dense {
        add(LayerKind::Dense { units });
        add(LayerKind::ReLU);
    }
    add(LayerKind::Dense { units: 3 });
    if softmax {
        add(LayerKind::Softmax);
    }
    add(LayerKind::Output);
    NetworkGraph::chain(TensorShape::image(c, h, w), layers).unwrap()
}

fn graph() -> impl Strategy<Value = NetworkGraph> {
    (
        (1..=3usize, 2..=12usize, 2..=12usize),
        prop::collection::vec(conv_spec(), 0..=3),
        any::<bool>(),
        prop::collection::vec(1..=9usize, 0..=2),
        any::<bool>(),
    )
        .prop_map(|(input, convs, gap, dense, softmax)| build(input, &convs, gap, &dense, softmax))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn counters_match_brute_force(g in graph()) {
        let (p, m) = brute_force(&g);
        prop_assert_eq!(count_params(&g), p);
        prop_assert_eq!(count_macs(&g, g.input_shape()).unwrap(), m);
        prop_assert_eq!(g.macs(), m);
    }

    #[test]
    fn retention_never_increases_counts(g in graph(), bits in prop::collection::vec(any::<bool>(), 64)) {
        let n = g.total_prunable_units();
        let mut mask: Vec<bool> = (0..n).map(|u| bits[u % bits.len()]).collect();
        // One unit per layer is always kept.
        let mut offset = 0;
        for v in g.vertices() {
            if v.prunable_units > 0 {
                mask[offset] = true;
                offset += v.prunable_units;
            }
        }
        let pruned = g.apply_retention(&mask).unwrap();
        prop_assert!(pruned.params() <= g.params());
        prop_assert!(pruned.macs() <= g.macs());
        let (p, m) = brute_force(&pruned);
        prop_assert_eq!((pruned.params(), pruned.macs()), (p, m));
    }
}

#[test]
fn selfcheck_graphs_match_brute_force() {
    for seed in 0..64 {
        let g = random_chain(seed);
        assert_eq!(brute_force(&g), (count_params(&g), g.macs()), "seed {seed}");
    }
}

#[test]
fn conv_three_to_eight_on_eight_by_eight() {
    let g = NetworkGraph::chain(
        TensorShape::image(3, 8, 8),
        vec![
            ("in".into(), LayerKind::Input),
            (
                "c".into(),
                LayerKind::Conv2D {
                    out_channels: 8,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
            ),
            ("gap".into(), LayerKind::GlobalAvgPool),
            ("fc".into(), LayerKind::Dense { units: 2 }),
            ("out".into(), LayerKind::Output),
        ],
    )
    .unwrap();
    let (p, m) = brute_force(&g);
    assert_eq!(p, 3 * 9 * 8 + 8 + 8 * 2 + 2);
    assert_eq!(m, 13824 + 16);
}
