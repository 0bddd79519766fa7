//! Network graphs: typed layer vertices joined by directed edges.
//!
//! A [`NetworkGraph`] is validated on construction and immutable afterwards.
//! Vertices are stored in canonical topological order (ties broken by id),
//! which is the order used everywhere a per-vertex or per-unit index is
//! needed.

mod count;
mod doc;
mod shape;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use count::{count_macs, count_params, layer_macs, layer_params};
pub use doc::{parse_network, serialize, NetworkDoc, VertexDoc, DOC_VERSION};
pub use shape::{infer_shapes, ShapeMap};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("duplicate vertex id '{0}'")]
    DuplicateId(String),
    #[error("cycle detected through vertex '{0}'")]
    Cycle(String),
    #[error("edge ({src}, {dst}) references unknown vertex '{missing}'")]
    DanglingEdge {
        src: String,
        dst: String,
        missing: String,
    },
    #[error("vertex '{0}' has more than one input; merge vertices are not supported")]
    Merge(String),
    #[error("vertex '{vertex}' expects a rank-{expected} input, got shape {found}")]
    RankMismatch {
        vertex: String,
        expected: usize,
        found: TensorShape,
    },
    #[error("vertex '{0}' produces a non-positive spatial extent")]
    ZeroExtent(String),
    #[error("invalid tensor shape {0:?}: extents must be >= 1 and rank 1 or 3")]
    BadShape(Vec<usize>),
    #[error("retention mask has {found} entries, graph has {expected} prunable units")]
    MaskLength { expected: usize, found: usize },
    #[error("retention mask keeps zero units of vertex '{0}'")]
    EmptyLayer(String),
}

/// Tensor extents for a single sample: `(features)` or `(channels, height, width)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TensorShape(Vec<usize>);

impl TensorShape {
    pub fn new(dims: Vec<usize>) -> Result<Self, GraphError> {
        if !(dims.len() == 1 || dims.len() == 3) || dims.contains(&0) {
            return Err(GraphError::BadShape(dims));
        }
        Ok(Self(dims))
    }

    pub fn flat(features: usize) -> Self {
        Self::new(vec![features]).expect("features >= 1")
    }

    pub fn image(channels: usize, height: usize, width: usize) -> Self {
        Self::new(vec![channels, height, width]).expect("extents >= 1")
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Size of the unit axis: features for flat tensors, channels for images.
    pub fn units(&self) -> usize {
        self.0[0]
    }

    /// Spatial positions per unit (1 for flat tensors).
    pub fn spatial(&self) -> usize {
        self.0[1..].iter().product()
    }
}

impl TryFrom<Vec<usize>> for TensorShape {
    type Error = GraphError;
    fn try_from(dims: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(dims)
    }
}

impl From<TensorShape> for Vec<usize> {
    fn from(s: TensorShape) -> Self {
        s.0
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Input,
    Dense {
        units: usize,
    },
    Conv2D {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ReLU,
    MaxPool2D {
        kernel: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Flatten,
    Softmax,
    Output,
}

impl LayerKind {
    pub fn op_name(&self) -> &'static str {
        match self {
            LayerKind::Input => "Input",
            LayerKind::Dense { .. } => "Dense",
            LayerKind::Conv2D { .. } => "Conv2D",
            LayerKind::ReLU => "ReLU",
            LayerKind::MaxPool2D { .. } => "MaxPool2D",
            LayerKind::GlobalAvgPool => "GlobalAvgPool",
            LayerKind::Flatten => "Flatten",
            LayerKind::Softmax => "Softmax",
            LayerKind::Output => "Output",
        }
    }

    /// Dense and Conv2D carry weights.
    pub fn is_trainable(&self) -> bool {
        matches!(self, LayerKind::Dense { .. } | LayerKind::Conv2D { .. })
    }

    /// Width of the layer's unit axis, for trainable kinds.
    pub fn width(&self) -> Option<usize> {
        match *self {
            LayerKind::Dense { units } => Some(units),
            LayerKind::Conv2D { out_channels, .. } => Some(out_channels),
            _ => None,
        }
    }

    fn with_width(self, width: usize) -> Self {
        match self {
            LayerKind::Dense { .. } => LayerKind::Dense { units: width },
            LayerKind::Conv2D {
                kernel,
                stride,
                padding,
                ..
            } => LayerKind::Conv2D {
                out_channels: width,
                kernel,
                stride,
                padding,
            },
            other => other,
        }
    }

    /// Kinds that keep the identity of each unit of their input.
    pub fn preserves_units(&self) -> bool {
        matches!(
            self,
            LayerKind::ReLU | LayerKind::MaxPool2D { .. } | LayerKind::GlobalAvgPool
        )
    }

    fn check_attrs(&self, id: &str) -> Result<(), GraphError> {
        let bad = match *self {
            LayerKind::Dense { units } => units == 0,
            LayerKind::Conv2D {
                out_channels,
                kernel,
                stride,
                ..
            } => out_channels == 0 || kernel == 0 || stride == 0,
            LayerKind::MaxPool2D { kernel, stride } => kernel == 0 || stride == 0,
            _ => false,
        };
        if bad {
            return Err(GraphError::Schema(format!(
                "vertex '{id}': {} attributes must be >= 1",
                self.op_name()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub id: String,
    pub kind: LayerKind,
    /// Units the generator may drop. Zero for non-trainable kinds and for the
    /// classifier head, whose width is fixed by the label space.
    pub prunable_units: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkGraph {
    input_shape: TensorShape,
    vertices: Vec<Vertex>,
    edges: Vec<(String, String)>,
    shapes: Vec<TensorShape>,
}

impl NetworkGraph {
    /// Build and validate a graph from unordered vertices and edges.
    pub fn new(
        input_shape: TensorShape,
        vertices: Vec<(String, LayerKind)>,
        edges: Vec<(String, String)>,
    ) -> Result<Self, GraphError> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, (id, kind)) in vertices.iter().enumerate() {
            if index.insert(id.as_str(), i).is_some() {
                return Err(GraphError::DuplicateId(id.clone()));
            }
            kind.check_attrs(id)?;
        }

        let mut seen_edges = BTreeSet::new();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
        for (src, dst) in &edges {
            let lookup = |name: &String| {
                index
                    .get(name.as_str())
                    .copied()
                    .ok_or_else(|| GraphError::DanglingEdge {
                        src: src.clone(),
                        dst: dst.clone(),
                        missing: name.clone(),
                    })
            };
            let (s, d) = (lookup(src)?, lookup(dst)?);
            if s == d {
                return Err(GraphError::Cycle(src.clone()));
            }
            if !seen_edges.insert((s, d)) {
                return Err(GraphError::Schema(format!("duplicate edge ({src}, {dst})")));
            }
            succ[s].push(d);
            preds[d].push(s);
        }

        // Kahn's algorithm; among ready vertices the smallest id goes first.
        let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut ready: BTreeMap<&str, usize> = vertices
            .iter()
            .enumerate()
            .filter(|(i, _)| indeg[*i] == 0)
            .map(|(i, (id, _))| (id.as_str(), i))
            .collect();
        let mut order = Vec::with_capacity(vertices.len());
        while let Some((_, i)) = ready.pop_first() {
            order.push(i);
            for &j in &succ[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(vertices[j].0.as_str(), j);
                }
            }
        }
        if order.len() != vertices.len() {
            let stuck = vertices
                .iter()
                .enumerate()
                .filter(|(i, _)| indeg[*i] > 0)
                .map(|(_, (id, _))| id.clone())
                .min()
                .expect("unsorted vertices remain");
            return Err(GraphError::Cycle(stuck));
        }

        let count = |pred: fn(&LayerKind) -> bool| vertices.iter().filter(|(_, k)| pred(k)).count();
        let inputs = count(|k| matches!(k, LayerKind::Input));
        let outputs = count(|k| matches!(k, LayerKind::Output));
        if inputs != 1 {
            return Err(GraphError::Schema(format!(
                "expected exactly one Input vertex, found {inputs}"
            )));
        }
        if outputs != 1 {
            return Err(GraphError::Schema(format!(
                "expected exactly one Output vertex, found {outputs}"
            )));
        }
        for (i, (id, kind)) in vertices.iter().enumerate() {
            let is_input = matches!(kind, LayerKind::Input);
            let is_output = matches!(kind, LayerKind::Output);
            if is_input && !preds[i].is_empty() {
                return Err(GraphError::Schema(format!(
                    "Input vertex '{id}' has incoming edges"
                )));
            }
            if is_output && !succ[i].is_empty() {
                return Err(GraphError::Schema(format!(
                    "Output vertex '{id}' has outgoing edges"
                )));
            }
            if !is_input && preds[i].is_empty() {
                return Err(GraphError::Schema(format!(
                    "vertex '{id}' has no incoming edge"
                )));
            }
            if !is_output && succ[i].is_empty() {
                return Err(GraphError::Schema(format!(
                    "vertex '{id}' has no outgoing edge"
                )));
            }
            if preds[i].len() > 1 {
                return Err(GraphError::Merge(id.clone()));
            }
        }

        // Re-index into canonical order.
        let mut position = vec![0usize; vertices.len()];
        for (pos, &i) in order.iter().enumerate() {
            position[i] = pos;
        }
        let mut sorted_edges: Vec<(usize, usize)> = seen_edges
            .into_iter()
            .map(|(s, d)| (position[s], position[d]))
            .collect();
        sorted_edges.sort_unstable();

        let head = order
            .iter()
            .rev()
            .copied()
            .find(|&i| vertices[i].1.is_trainable());
        let ordered: Vec<Vertex> = order
            .iter()
            .map(|&i| {
                let (id, kind) = &vertices[i];
                let prunable_units = match kind.width() {
                    Some(w) if Some(i) != head => w,
                    _ => 0,
                };
                Vertex {
                    id: id.clone(),
                    kind: *kind,
                    prunable_units,
                }
            })
            .collect();
        let edges: Vec<(String, String)> = sorted_edges
            .iter()
            .map(|&(s, d)| (ordered[s].id.clone(), ordered[d].id.clone()))
            .collect();

        let shapes = shape::infer_ordered(&ordered, &input_shape)?;
        Ok(Self {
            input_shape,
            vertices: ordered,
            edges,
            shapes,
        })
    }

    /// Convenience constructor for a linear chain `ids[0] -> ids[1] -> ...`.
    pub fn chain(
        input_shape: TensorShape,
        layers: Vec<(String, LayerKind)>,
    ) -> Result<Self, GraphError> {
        let edges = layers
            .windows(2)
            .map(|w| (w[0].0.clone(), w[1].0.clone()))
            .collect();
        Self::new(input_shape, layers, edges)
    }

    pub fn input_shape(&self) -> &TensorShape {
        &self.input_shape
    }

    /// Vertices in canonical topological order.
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    /// Output shape of each vertex, aligned with [`Self::vertices`].
    pub fn shapes(&self) -> &[TensorShape] {
        &self.shapes
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    /// Shape feeding vertex `i` (the input shape for the Input vertex).
    pub fn input_of(&self, i: usize) -> &TensorShape {
        if i == 0 {
            &self.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    pub fn total_prunable_units(&self) -> usize {
        self.vertices.iter().map(|v| v.prunable_units).sum()
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().map(TensorShape::numel).unwrap_or(0)
    }

    pub fn params(&self) -> u64 {
        count_params(self)
    }

    pub fn macs(&self) -> u64 {
        count::macs_from_shapes(self, &self.shapes)
    }

    /// Reduce Dense/Conv2D widths to the units kept by `mask`.
    ///
    /// The mask is indexed in canonical (vertex order, unit index) order over
    /// prunable units only.
    pub fn apply_retention(&self, mask: &[bool]) -> Result<NetworkGraph, GraphError> {
        let expected = self.total_prunable_units();
        if mask.len() != expected {
            return Err(GraphError::MaskLength {
                expected,
                found: mask.len(),
            });
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            let kind = if v.prunable_units > 0 {
                let kept = mask[offset..offset + v.prunable_units]
                    .iter()
                    .filter(|&&k| k)
                    .count();
                offset += v.prunable_units;
                if kept == 0 {
                    return Err(GraphError::EmptyLayer(v.id.clone()));
                }
                v.kind.with_width(kept)
            } else {
                v.kind
            };
            layers.push((v.id.clone(), kind));
        }
        NetworkGraph::new(self.input_shape.clone(), layers, self.edges.clone())
    }
}
