//! JSON network-description documents.
//!
//! ```json
//! {"version":1,"input_shape":[2],"vertices":[{"id":"in","op":"Input","attrs":{}},...],"edges":[["in","fc1"],...]}
//! ```
//!
//! The canonical form is compact UTF-8 with keys in the order above, vertices
//! in canonical topological order and attribute keys sorted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{GraphError, LayerKind, NetworkGraph, TensorShape};

pub const DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub version: u32,
    pub input_shape: Vec<usize>,
    pub vertices: Vec<VertexDoc>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexDoc {
    pub id: String,
    pub op: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, Value>,
}

pub fn parse_network(text: &str) -> Result<NetworkGraph, GraphError> {
    let doc: NetworkDoc =
        serde_json::from_str(text).map_err(|e| GraphError::Schema(e.to_string()))?;
    NetworkGraph::from_doc(&doc)
}

/// Canonical text form of `g`.
pub fn serialize(g: &NetworkGraph) -> String {
    serde_json::to_string(&g.to_doc()).expect("network documents always serialize")
}

struct Attrs<'a> {
    id: &'a str,
    map: &'a BTreeMap<String, Value>,
    used: usize,
}

impl<'a> Attrs<'a> {
    fn get(&mut self, key: &str, default: Option<usize>) -> Result<usize, GraphError> {
        match self.map.get(key) {
            Some(v) => {
                self.used += 1;
                v.as_u64().map(|n| n as usize).ok_or_else(|| {
                    GraphError::Schema(format!(
                        "vertex '{}': attribute '{key}' must be a nonnegative integer",
                        self.id
                    ))
                })
            }
            None => default.ok_or_else(|| {
                GraphError::Schema(format!("vertex '{}': missing attribute '{key}'", self.id))
            }),
        }
    }

    fn finish(self) -> Result<(), GraphError> {
        if self.used != self.map.len() {
            let known = ["units", "out_channels", "kernel", "stride", "padding"];
            let extra = self
                .map
                .keys()
                .find(|k| !known.contains(&k.as_str()))
                .cloned()
                .unwrap_or_else(|| "?".into());
            return Err(GraphError::Schema(format!(
                "vertex '{}': unexpected attribute '{extra}'",
                self.id
            )));
        }
        Ok(())
    }
}

fn kind_from_doc(v: &VertexDoc) -> Result<LayerKind, GraphError> {
    let mut a = Attrs {
        id: &v.id,
        map: &v.attrs,
        used: 0,
    };
    let kind = match v.op.as_str() {
        "Input" => LayerKind::Input,
        "Dense" => LayerKind::Dense {
            units: a.get("units", None)?,
        },
        "Conv2D" => LayerKind::Conv2D {
            out_channels: a.get("out_channels", None)?,
            kernel: a.get("kernel", None)?,
            stride: a.get("stride", Some(1))?,
            padding: a.get("padding", Some(0))?,
        },
        "ReLU" => LayerKind::ReLU,
        "MaxPool2D" => {
            let kernel = a.get("kernel", None)?;
            LayerKind::MaxPool2D {
                kernel,
                stride: a.get("stride", Some(kernel))?,
            }
        }
        "GlobalAvgPool" => LayerKind::GlobalAvgPool,
        "Flatten" => LayerKind::Flatten,
        "Softmax" => LayerKind::Softmax,
        "Output" => LayerKind::Output,
        other => {
            return Err(GraphError::Schema(format!(
                "vertex '{}': unknown op '{other}'",
                v.id
            )))
        }
    };
    a.finish()?;
    Ok(kind)
}

fn attrs_of(kind: &LayerKind) -> BTreeMap<String, Value> {
    let pairs: Vec<(&str, usize)> = match *kind {
        LayerKind::Dense { units } => vec![("units", units)],
        LayerKind::Conv2D {
            out_channels,
            kernel,
            stride,
            padding,
        } => vec![
            ("out_channels", out_channels),
            ("kernel", kernel),
            ("stride", stride),
            ("padding", padding),
        ],
        LayerKind::MaxPool2D { kernel, stride } => vec![("kernel", kernel), ("stride", stride)],
        _ => vec![],
    };
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::from(v)))
        .collect()
}

impl NetworkGraph {
    pub fn from_doc(doc: &NetworkDoc) -> Result<Self, GraphError> {
        if doc.version != DOC_VERSION {
            return Err(GraphError::Schema(format!(
                "unsupported document version {} (expected {DOC_VERSION})",
                doc.version
            )));
        }
        let input_shape = TensorShape::new(doc.input_shape.clone())?;
        let vertices = doc
            .vertices
            .iter()
            .map(|v| Ok((v.id.clone(), kind_from_doc(v)?)))
            .collect::<Result<Vec<_>, GraphError>>()?;
        NetworkGraph::new(input_shape, vertices, doc.edges.clone())
    }

    pub fn to_doc(&self) -> NetworkDoc {
        NetworkDoc {
            version: DOC_VERSION,
            input_shape: self.input_shape().dims().to_vec(),
            vertices: self
                .vertices()
                .iter()
                .map(|v| VertexDoc {
                    id: v.id.clone(),
                    op: v.kind.op_name().to_string(),
                    attrs: attrs_of(&v.kind),
                })
                .collect(),
            edges: self.edges().to_vec(),
        }
    }
}
