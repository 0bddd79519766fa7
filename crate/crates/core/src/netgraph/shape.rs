use std::collections::BTreeMap;

use super::{GraphError, LayerKind, NetworkGraph, TensorShape, Vertex};

/// Output shape of every vertex, keyed by vertex id.
pub type ShapeMap = BTreeMap<String, TensorShape>;

/// Infer per-vertex output shapes for `g` fed with `input_shape`.
pub fn infer_shapes(g: &NetworkGraph, input_shape: &TensorShape) -> Result<ShapeMap, GraphError> {
    let shapes = infer_ordered(g.vertices(), input_shape)?;
    Ok(g.vertices()
        .iter()
        .zip(shapes)
        .map(|(v, s)| (v.id.clone(), s))
        .collect())
}

/// Shapes aligned with a chain of vertices in topological order.
pub(crate) fn infer_ordered(
    vertices: &[Vertex],
    input_shape: &TensorShape,
) -> Result<Vec<TensorShape>, GraphError> {
    let mut shapes = Vec::with_capacity(vertices.len());
    let mut current = input_shape.clone();
    for v in vertices {
        current = infer_one(v, &current)?;
        shapes.push(current.clone());
    }
    Ok(shapes)
}

fn require_rank(v: &Vertex, s: &TensorShape, rank: usize) -> Result<(), GraphError> {
    if s.rank() != rank {
        return Err(GraphError::RankMismatch {
            vertex: v.id.clone(),
            expected: rank,
            found: s.clone(),
        });
    }
    Ok(())
}

/// `floor((extent + 2*padding - kernel) / stride) + 1`, or `None` if not positive.
pub(crate) fn window_extent(
    extent: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = extent + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn infer_one(v: &Vertex, input: &TensorShape) -> Result<TensorShape, GraphError> {
    match v.kind {
        LayerKind::Input | LayerKind::ReLU | LayerKind::Output => Ok(input.clone()),
        LayerKind::Dense { units } => {
            require_rank(v, input, 1)?;
            Ok(TensorShape::flat(units))
        }
        LayerKind::Softmax => {
            require_rank(v, input, 1)?;
            Ok(input.clone())
        }
        LayerKind::Flatten => Ok(TensorShape::flat(input.numel())),
        LayerKind::GlobalAvgPool => {
            require_rank(v, input, 3)?;
            Ok(TensorShape::flat(input.units()))
        }
        LayerKind::Conv2D {
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            require_rank(v, input, 3)?;
            let d = input.dims();
            let h = window_extent(d[1], kernel, stride, padding);
            let w = window_extent(d[2], kernel, stride, padding);
            match (h, w) {
                (Some(h), Some(w)) => Ok(TensorShape::image(out_channels, h, w)),
                _ => Err(GraphError::ZeroExtent(v.id.clone())),
            }
        }
        LayerKind::MaxPool2D { kernel, stride } => {
            require_rank(v, input, 3)?;
            let d = input.dims();
            let h = window_extent(d[1], kernel, stride, 0);
            let w = window_extent(d[2], kernel, stride, 0);
            match (h, w) {
                (Some(h), Some(w)) => Ok(TensorShape::image(d[0], h, w)),
                _ => Err(GraphError::ZeroExtent(v.id.clone())),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(input: TensorShape, kinds: Vec<LayerKind>) -> Result<NetworkGraph, GraphError> {
        let mut layers = vec![("in".to_string(), LayerKind::Input)];
        layers.extend(
            kinds
                .into_iter()
                .enumerate()
                .map(|(i, k)| (format!("v{i}"), k)),
        );
        layers.push(("out".into(), LayerKind::Output));
        NetworkGraph::chain(input, layers)
    }

    #[test]
    fn same_padding_conv_keeps_spatial_dims() {
        let g = chain(
            TensorShape::image(3, 8, 8),
            vec![LayerKind::Conv2D {
                out_channels: 8,
                kernel: 3,
                stride: 1,
                padding: 1,
            }],
        )
        .unwrap();
        let shapes = infer_shapes(&g, g.input_shape()).unwrap();
        assert_eq!(shapes["v0"], TensorShape::image(8, 8, 8));
    }

    #[test]
    fn maxpool_halves() {
        let g = chain(
            TensorShape::image(8, 8, 8),
            vec![LayerKind::MaxPool2D {
                kernel: 2,
                stride: 2,
            }],
        )
        .unwrap();
        assert_eq!(g.shapes()[1], TensorShape::image(8, 4, 4));
    }

    #[test]
    fn strided_conv_uses_floor() {
        let g = chain(
            TensorShape::image(1, 7, 7),
            vec![LayerKind::Conv2D {
                out_channels: 2,
                kernel: 3,
                stride: 2,
                padding: 0,
            }],
        )
        .unwrap();
        assert_eq!(g.shapes()[1], TensorShape::image(2, 3, 3));
    }

    #[test]
    fn dense_on_image_is_rank_mismatch() {
        let err = chain(
            TensorShape::image(3, 8, 8),
            vec![LayerKind::Dense { units: 3 }],
        )
        .unwrap_err();
        assert!(
            matches!(err, GraphError::RankMismatch { expected: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn conv_on_flat_is_rank_mismatch() {
        let err = chain(
            TensorShape::flat(10),
            vec![LayerKind::Conv2D {
                out_channels: 2,
                kernel: 1,
                stride: 1,
                padding: 0,
            }],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::RankMismatch { expected: 3, .. }));
    }

    #[test]
    fn oversized_kernel_is_zero_extent() {
        let err = chain(
            TensorShape::image(1, 2, 2),
            vec![LayerKind::MaxPool2D {
                kernel: 3,
                stride: 1,
            }],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::ZeroExtent("v0".into()));
    }

    #[test]
    fn explicit_input_shape_overrides_graph_shape() {
        let g = chain(
            TensorShape::image(3, 8, 8),
            vec![LayerKind::GlobalAvgPool, LayerKind::Dense { units: 2 }],
        )
        .unwrap();
        let shapes = infer_shapes(&g, &TensorShape::image(3, 16, 16)).unwrap();
        assert_eq!(shapes["v0"], TensorShape::flat(3));
        assert!(infer_shapes(&g, &TensorShape::flat(3)).is_err());
    }
}
