//! Fixtures shared by the benchmarks in `benches/`.

use gensynth_core::dataset::{split, synth_blobs};
use gensynth_core::{LabeledDataset, LayerKind, NetworkGraph, TensorShape};

/// Dense chain `widths[0] -> ... -> widths[last]` with ReLU between layers
/// and a softmax head.
pub fn mlp(widths: &[usize]) -> NetworkGraph {
    let mut layers = vec![("in".to_string(), LayerKind::Input)];
    for (i, &w) in widths[1..].iter().enumerate() {
        layers.push((format!("fc{}", i + 1), LayerKind::Dense { units: w }));
        if i + 2 < widths.len() {
            layers.push((format!("relu{}", i + 1), LayerKind::ReLU));
        }
    }
    layers.push(("softmax".into(), LayerKind::Softmax));
    layers.push(("out".into(), LayerKind::Output));
    NetworkGraph::chain(TensorShape::flat(widths[0]), layers).expect("valid widths")
}

pub fn small_cnn() -> NetworkGraph {
    NetworkGraph::chain(
        TensorShape::image(3, 16, 16),
        vec![
            ("in".into(), LayerKind::Input),
            (
                "conv1".into(),
                LayerKind::Conv2D {
                    out_channels: 8,
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
                    out_channels: 16,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
            ),
            ("relu2".into(), LayerKind::ReLU),
            ("gap".into(), LayerKind::GlobalAvgPool),
            ("fc".into(), LayerKind::Dense { units: 4 }),
            ("softmax".into(), LayerKind::Softmax),
            ("out".into(), LayerKind::Output),
        ],
    )
    .expect("static graph")
}

/// The desk-scale dataset: 4 blobs of 250, 80/20 split.
pub fn desk_blobs() -> LabeledDataset {
    split(
        &synth_blobs(4, 250, 0.15, 11).expect("valid"),
        [0.8, 0.2, 0.0],
        1,
    )
    .expect("valid")
}
