//! Built-in oracles backing the `check` command.

use std::fmt;

use rand::Rng;

use crate::metrics::{information_density, netscore, MetricConfig};
use crate::netgraph::{count_macs, count_params, LayerKind, NetworkGraph, TensorShape};
use crate::rng;
use crate::trainer::{grad_check, init_weights};

pub const COUNTER_GRAPHS: u64 = 64;
pub const METRIC_TRIPLES: u64 = 100;

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    /// Count Dense biases as MACs, to prove the counter oracle notices.
    pub perturb_macs: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for OracleOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

/// A random valid chain mixing Conv2D, pooling and Dense layers.
pub fn random_chain(seed: u64) -> NetworkGraph {
    let mut r = rng::chacha(rng::derive_seed(&[0x5e1f, seed]));
    let mut layers: Vec<(String, LayerKind)> = vec![("in".into(), LayerKind::Input)];
    let push = |layers: &mut Vec<(String, LayerKind)>, kind: LayerKind| {
        let id = format!("{}{}", kind.op_name().to_lowercase(), layers.len());
        layers.push((id, kind));
    };
    let input = if r.random_bool(0.25) {
        TensorShape::flat(r.random_range(1..=8))
    } else {
        let c = r.random_range(1..=3);
        let (mut h, mut w) = (r.random_range(3..=10), r.random_range(3..=10));
        let input = TensorShape::image(c, h, w);
        for _ in 0..r.random_range(1..=3) {
            let padding = r.random_range(0..=1);
            let kernel = r.random_range(1..=3).min(h.min(w) + 2 * padding);
            let stride = r.random_range(1..=2);
            let out_channels = r.random_range(1..=6);
            push(
                &mut layers,
                LayerKind::Conv2D {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
            );
            h = (h + 2 * padding - kernel) / stride + 1;
            w = (w + 2 * padding - kernel) / stride + 1;
            if r.random_bool(0.6) {
                push(&mut layers, LayerKind::ReLU);
            }
            if h >= 2 && w >= 2 && r.random_bool(0.4) {
                let stride = r.random_range(1..=2);
                push(&mut layers, LayerKind::MaxPool2D { kernel: 2, stride });
                h = (h - 2) / stride + 1;
                w = (w - 2) / stride + 1;
            }
        }
        let head = if r.random_bool(0.5) {
            LayerKind::Flatten
        } else {
            LayerKind::GlobalAvgPool
        };
        push(&mut layers, head);
        input
    };
    for _ in 0..r.random_range(0..=2) {
        push(
            &mut layers,
            LayerKind::Dense {
                units: r.random_range(1..=8),
            },
        );
        if r.random_bool(0.5) {
            push(&mut layers, LayerKind::ReLU);
        }
    }
    push(
        &mut layers,
        LayerKind::Dense {
            units: r.random_range(2..=5),
        },
    );
    if r.random_bool(0.5) {
        push(&mut layers, LayerKind::Softmax);
    }
    push(&mut layers, LayerKind::Output);
    NetworkGraph::chain(input, layers).expect("generator only emits valid chains")
}

fn windows(extent: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    let mut count = 0;
    let mut start = 0;
    while start + kernel <= extent + 2 * padding {
        count += 1;
        start += stride;
    }
    count
}

/// Walk every weight and every multiplication of a naive loop nest.
/// Returns `(params, macs)`.
pub fn enumerate_counts(g: &NetworkGraph) -> (u64, u64) {
    let (mut params, mut macs) = (0u64, 0u64);
    let mut dims = g.input_shape().dims().to_vec();
    for v in g.vertices() {
        match v.kind {
            LayerKind::Dense { units } => {
                let fan_in: usize = dims.iter().product();
                for _o in 0..units {
                    for _i in 0..fan_in {
                        params += 1;
                        macs += 1;
                    }
                    params += 1;
                }
                dims = vec![units];
            }
            LayerKind::Conv2D {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (c, h, w) = (dims[0], dims[1], dims[2]);
                let (oh, ow) = (
                    windows(h, kernel, stride, padding),
                    windows(w, kernel, stride, padding),
                );
                for _co in 0..out_channels {
                    for _ci in 0..c {
                        for _kk in 0..kernel * kernel {
                            params += 1;
                        }
                    }
                    params += 1;
                    for _y in 0..oh {
                        for _x in 0..ow {
                            for _ci in 0..c {
                                for _ky in 0..kernel {
                                    for _kx in 0..kernel {
                                        macs += 1;
                                    }
                                }
                            }
                        }
                    }
                }
                dims = vec![out_channels, oh, ow];
            }
            LayerKind::MaxPool2D { kernel, stride } => {
                dims = vec![
                    dims[0],
                    windows(dims[1], kernel, stride, 0),
                    windows(dims[2], kernel, stride, 0),
                ];
            }
            LayerKind::GlobalAvgPool => dims = vec![dims[0]],
            LayerKind::Flatten => dims = vec![dims.iter().product()],
            _ => {}
        }
    }
    (params, macs)
}

fn macs_under_test(g: &NetworkGraph, opts: CheckOptions) -> u64 {
    let macs = count_macs(g, g.input_shape()).expect("valid graph");
    if !opts.perturb_macs {
        return macs;
    }
    let biases: u64 = g
        .vertices()
        .iter()
        .filter_map(|v| match v.kind {
            LayerKind::Dense { units } => Some(units as u64),
            _ => None,
        })
        .sum();
    macs + biases
}

pub fn check_counters(opts: CheckOptions) -> OracleOutcome {
    let mut mismatches = Vec::new();
    for seed in 0..COUNTER_GRAPHS {
        let g = random_chain(seed);
        let (p, m) = enumerate_counts(&g);
        let (cp, cm) = (count_params(&g), macs_under_test(&g, opts));
        if (p, m) != (cp, cm) {
            mismatches.push(format!(
                "graph {seed}: counted ({cp}, {cm}) vs enumerated ({p}, {m})"
            ));
        }
    }
    OracleOutcome {
        name: "counters",
        passed: mismatches.is_empty(),
        detail: match mismatches.first() {
            None => format!("{COUNTER_GRAPHS} random graphs match the loop-nest enumeration"),
            Some(first) => format!("{} mismatches; first {first}", mismatches.len()),
        },
    }
}

/// A small graph containing every vertex kind.
pub fn every_kind_graph() -> NetworkGraph {
    NetworkGraph::chain(
        TensorShape::image(2, 6, 6),
        vec![
            ("in".into(), LayerKind::Input),
            (
                "conv1".into(),
                LayerKind::Conv2D {
                    out_channels: 4,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
            ),
            ("relu1".into(), LayerKind::ReLU),
            (
                "pool".into(),
                LayerKind::MaxPool2D {
                    kernel: 2,
                    stride: 2,
                },
            ),
            (
                "conv2".into(),
                LayerKind::Conv2D {
                    out_channels: 3,
                    kernel: 2,
                    stride: 1,
                    padding: 0,
                },
            ),
            ("gap".into(), LayerKind::GlobalAvgPool),
            ("fc1".into(), LayerKind::Dense { units: 5 }),
            ("relu2".into(), LayerKind::ReLU),
            ("flat".into(), LayerKind::Flatten),
            ("fc2".into(), LayerKind::Dense { units: 3 }),
            ("softmax".into(), LayerKind::Softmax),
            ("out".into(), LayerKind::Output),
        ],
    )
    .expect("static graph")
}

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub fn check_gradients() -> OracleOutcome {
    let g = every_kind_graph();
    let w = init_weights(&g, 5);
    let mut r = rng::chacha(7);
    let x: Vec<f64> = (0..4 * g.input_shape().numel())
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    let outcome = grad_check(&g, &w, &x, &[0, 1, 2, 1], GRAD_EPS, 17);
    match outcome {
        Ok(rep) => OracleOutcome {
            name: "gradient",
            passed: rep.max_rel_error < GRAD_TOL,
            detail: format!(
                "max relative error {:.3e} over {} coordinates (eps {GRAD_EPS:e}, tol {GRAD_TOL:e})",
                rep.max_rel_error, rep.coordinates
            ),
        },
        Err(e) => OracleOutcome { name: "gradient", passed: false, detail: e.to_string() },
    }
}

pub const METRIC_REL_TOL: f64 = 1e-9;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn check_metrics() -> OracleOutcome {
    let cfg = MetricConfig::default();
    let mut r = rng::chacha(11);
    let mut worst: f64 = 0.0;
    for _ in 0..METRIC_TRIPLES {
        let acc: f64 = r.random_range(0.01..=1.0);
        let params: u64 = r.random_range(1..=100_000_000);
        let macs: u64 = r.random_range(1..=10_000_000_000);
        let (a, p, m) = (acc * 100.0, params as f64 / 1e6, macs as f64 / 1e6);
        let omega = 20.0 * (a.powf(2.0) / (p.powf(0.5) * m.powf(0.5))).log10();
        let density = acc * 100.0 * 1e6 / params as f64;
        worst = worst
            .max(rel_err(
                netscore(acc, params, macs, &cfg).expect("defined"),
                omega,
            ))
            .max(rel_err(
                information_density(acc, params, &cfg).expect("defined"),
                density,
            ));
    }
    let unit = netscore(1.0, 1_000_000, 1_000_000, &cfg).expect("defined");
    OracleOutcome {
        name: "netscore",
        passed: worst <= METRIC_REL_TOL && unit == 80.0,
        detail: format!(
            "{METRIC_TRIPLES} triples, worst relative error {worst:.3e}; unit case {unit}"
        ),
    }
}

pub fn run_checks(opts: CheckOptions) -> Vec<OracleOutcome> {
    vec![check_counters(opts), check_gradients(), check_metrics()]
}
