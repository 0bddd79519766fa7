//! Generative synthesis of efficient feedforward networks.
//!
//! A [`Generator`] maps 64-bit seeds to concrete networks carved out of a
//! prototype; the [`inquisitor`] probes the networks it produces and proposes
//! parameter changes that push the generator toward smaller networks that
//! still meet an operational requirement. [`synthesis`] runs the loop.

pub mod dataset;
pub mod generator;
pub mod inquisitor;
pub mod metrics;
pub mod netgraph;
pub mod rng;
pub mod selfcheck;
pub mod synthesis;
pub mod trainer;

pub use dataset::{LabeledDataset, Split};
pub use generator::{Generator, GeneratorCheckpoint, GeneratorParams, ParamDelta, Seed};
pub use inquisitor::{InquisitorConfig, InquisitorParams, SaliencyMap};
pub use metrics::{MetricConfig, RequirementSpec, Scorecard};
pub use netgraph::{
    count_macs, count_params, infer_shapes, parse_network, serialize, GraphError, LayerKind,
    NetworkGraph, TensorShape, Vertex,
};
pub use synthesis::{CycleRecord, FamilySummary, SynthesisConfig, SynthesisState};
pub use trainer::{EvalResult, TrainConfig, WeightStore};
