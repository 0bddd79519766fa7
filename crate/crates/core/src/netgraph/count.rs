//! Parameter and multiply-accumulate counters.
//!
//! Biases count as parameters but not as MACs; activations, pooling and
//! softmax cost nothing.

use super::{infer_shapes, GraphError, LayerKind, NetworkGraph, TensorShape};

pub fn layer_params(kind: &LayerKind, input: &TensorShape) -> u64 {
    match *kind {
        LayerKind::Dense { units } => {
            let (i, o) = (input.numel() as u64, units as u64);
            i * o + o
        }
        LayerKind::Conv2D {
            out_channels,
            kernel,
            ..
        } => {
            let (c_in, k, c_out) = (input.units() as u64, kernel as u64, out_channels as u64);
            c_in * k * k * c_out + c_out
        }
        _ => 0,
    }
}

pub fn layer_macs(kind: &LayerKind, input: &TensorShape, output: &TensorShape) -> u64 {
    match *kind {
        LayerKind::Dense { units } => input.numel() as u64 * units as u64,
        LayerKind::Conv2D {
            out_channels,
            kernel,
            ..
        } => {
            let (c_in, k) = (input.units() as u64, kernel as u64);
            c_in * k * k * out_channels as u64 * output.spatial() as u64
        }
        _ => 0,
    }
}

pub fn count_params(g: &NetworkGraph) -> u64 {
    g.vertices()
        .iter()
        .enumerate()
        .map(|(i, v)| layer_params(&v.kind, g.input_of(i)))
        .sum()
}

/// Per-sample MACs with the graph fed `input_shape`.
pub fn count_macs(g: &NetworkGraph, input_shape: &TensorShape) -> Result<u64, GraphError> {
    let map = infer_shapes(g, input_shape)?;
    let shapes: Vec<TensorShape> = g.vertices().iter().map(|v| map[&v.id].clone()).collect();
    Ok(macs_chain(g, input_shape, &shapes))
}

pub(crate) fn macs_from_shapes(g: &NetworkGraph, shapes: &[TensorShape]) -> u64 {
    macs_chain(g, g.input_shape(), shapes)
}

fn macs_chain(g: &NetworkGraph, input_shape: &TensorShape, shapes: &[TensorShape]) -> u64 {
    let mut prev = input_shape;
    let mut total = 0;
    for (v, out) in g.vertices().iter().zip(shapes) {
        total += layer_macs(&v.kind, prev, out);
        prev = out;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    #[test]
    fn dense_four_to_three() {
        let k = LayerKind::Dense { units: 3 };
        let (i, o) = (TensorShape::flat(4), TensorShape::flat(3));
        assert_eq!(layer_params(&k, &i), 15);
        assert_eq!(layer_macs(&k, &i, &o), 12);
    }

    #[test]
    fn conv_three_to_eight() {
        let k = LayerKind::Conv2D {
            out_channels: 8,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        let i = TensorShape::image(3, 8, 8);
        let o = TensorShape::image(8, 8, 8);
        assert_eq!(layer_params(&k, &i), 224);
        // Frozen from the loop-nest enumeration in tests/counters.rs.
        assert_eq!(layer_macs(&k, &i, &o), 13_824);
    }

    #[test]
    fn parameter_free_graph() {
        let g = NetworkGraph::chain(
            TensorShape::flat(4),
            vec![
                ("in".into(), LayerKind::Input),
                ("r".into(), LayerKind::ReLU),
                ("s".into(), LayerKind::Softmax),
                ("out".into(), LayerKind::Output),
            ],
        )
        .unwrap();
        assert_eq!(count_params(&g), 0);
        let g = NetworkGraph::chain(
            TensorShape::image(1, 3, 3),
            vec![
                ("in".into(), LayerKind::Input),
                ("f".into(), LayerKind::Flatten),
                ("out".into(), LayerKind::Output),
            ],
        )
        .unwrap();
        assert_eq!(count_macs(&g, g.input_shape()).unwrap(), 0);
    }

    #[test]
    fn prototype_mlp_counts() {
        let g = mlp(&[2, 64, 64, 64, 4]);
        assert_eq!(g.params(), 8772);
        assert_eq!(g.macs(), 8576);
        assert_eq!(count_macs(&g, g.input_shape()).unwrap(), 8576);
    }
}
