//! Seeded network generator.
//!
//! The generator holds one retention logit per prunable unit of a prototype
//! network. For a seed `s`, unit `u` is kept iff `sigmoid(logit_u)` exceeds a
//! counter-based uniform draw keyed by `(s, u)`; a layer that would end up
//! empty keeps its highest-logit unit instead.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{MetricConfig, RequirementSpec};
use crate::netgraph::{serialize, GraphError, LayerKind, NetworkDoc, NetworkGraph};
use crate::rng;

/// Logits are clamped to `[-LOGIT_CLAMP, LOGIT_CLAMP]`.
pub const LOGIT_CLAMP: f64 = 50.0;
pub const DEFAULT_INIT_LOGIT: f64 = 2.0;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("generator is bound to prototype {expected}, got {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("expected {expected} entries aligned to prototype units, got {found}")]
    Alignment { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub retention_logits: Vec<f64>,
    pub prototype_digest: String,
}

/// Per-unit logit increments aligned with [`GeneratorParams::retention_logits`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamDelta(pub Vec<f64>);

impl ParamDelta {
    pub fn zeros(len: usize) -> Self {
        ParamDelta(vec![0.0; len])
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|d| d.abs()).sum()
    }
}

/// A contiguous block of prototype units belonging to one prunable vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSpan {
    pub vertex: usize,
    pub id: String,
    pub offset: usize,
    pub len: usize,
}

/// A sampled network together with the retention mask that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub graph: NetworkGraph,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    prototype: NetworkGraph,
    params: GeneratorParams,
    metric_cfg: MetricConfig,
    req: RequirementSpec,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// SHA-256 of the canonical serialization, hex encoded.
pub fn prototype_digest(g: &NetworkGraph) -> String {
    hex::encode(Sha256::digest(serialize(g).as_bytes()))
}

pub fn unit_spans(g: &NetworkGraph) -> Vec<UnitSpan> {
    let mut offset = 0;
    g.vertices()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.prunable_units > 0)
        .map(|(i, v)| {
            let span = UnitSpan {
                vertex: i,
                id: v.id.clone(),
                offset,
                len: v.prunable_units,
            };
            offset += v.prunable_units;
            span
        })
        .collect()
}

pub fn init_generator(
    prototype: NetworkGraph,
    req: RequirementSpec,
    metric_cfg: MetricConfig,
    init_logit: f64,
) -> Result<Generator, GeneratorError> {
    if !init_logit.is_finite() {
        return Err(GeneratorError::NonFinite("init_logit"));
    }
    let logit = init_logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    let params = GeneratorParams {
        retention_logits: vec![logit; prototype.total_prunable_units()],
        prototype_digest: prototype_digest(&prototype),
    };
    Generator::from_parts(prototype, params, metric_cfg, req)
}

impl Generator {
    /// Assemble a generator, checking that `params` are bound to `prototype`.
    pub fn from_parts(
        prototype: NetworkGraph,
        params: GeneratorParams,
        metric_cfg: MetricConfig,
        req: RequirementSpec,
    ) -> Result<Self, GeneratorError> {
        let digest = prototype_digest(&prototype);
        if params.prototype_digest != digest {
            return Err(GeneratorError::DigestMismatch {
                expected: params.prototype_digest,
                found: digest,
            });
        }
        let expected = prototype.total_prunable_units();
        if params.retention_logits.len() != expected {
            return Err(GeneratorError::Alignment {
                expected,
                found: params.retention_logits.len(),
            });
        }
        if params.retention_logits.iter().any(|l| !l.is_finite()) {
            return Err(GeneratorError::NonFinite("retention_logits"));
        }
        Ok(Self {
            prototype,
            params,
            metric_cfg,
            req,
        })
    }

    pub fn prototype(&self) -> &NetworkGraph {
        &self.prototype
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    pub fn logits(&self) -> &[f64] {
        &self.params.retention_logits
    }

    pub fn metric_cfg(&self) -> &MetricConfig {
        &self.metric_cfg
    }

    pub fn requirement(&self) -> &RequirementSpec {
        &self.req
    }

    pub fn num_units(&self) -> usize {
        self.params.retention_logits.len()
    }

    pub fn spans(&self) -> Vec<UnitSpan> {
        unit_spans(&self.prototype)
    }

    pub fn keep_probabilities(&self) -> Vec<f64> {
        self.logits().iter().map(|&l| sigmoid(l)).collect()
    }

    /// Retention mask for `seed`, with the one-unit-per-layer floor applied.
    pub fn mask(&self, seed: Seed) -> Vec<bool> {
        let logits = self.logits();
        let mut mask: Vec<bool> = logits
            .iter()
            .enumerate()
            .map(|(u, &l)| sigmoid(l) > rng::counter_uniform(seed.0, u as u64))
            .collect();
        for span in self.spans() {
            let range = span.offset..span.offset + span.len;
            if !mask[range.clone()].iter().any(|&k| k) {
                let mut best = span.offset;
                for u in range {
                    if logits[u] > logits[best] {
                        best = u;
                    }
                }
                mask[best] = true;
            }
        }
        mask
    }

    pub fn sample_with_mask(&self, seed: Seed) -> Sampled {
        let mask = self.mask(seed);
        let graph = self
            .prototype
            .apply_retention(&mask)
            .expect("floor rule keeps every layer non-empty");
        Sampled { graph, mask }
    }

    pub fn sample(&self, seed: Seed) -> NetworkGraph {
        self.sample_with_mask(seed).graph
    }

    /// New generator with `logits + delta`, clamped to `±LOGIT_CLAMP`.
    pub fn apply_delta(&self, delta: &ParamDelta) -> Result<Generator, GeneratorError> {
        if delta.0.len() != self.num_units() {
            return Err(GeneratorError::Alignment {
                expected: self.num_units(),
                found: delta.0.len(),
            });
        }
        if delta.0.iter().any(|d| !d.is_finite()) {
            return Err(GeneratorError::NonFinite("delta"));
        }
        let mut next = self.clone();
        for (l, d) in next.params.retention_logits.iter_mut().zip(&delta.0) {
            *l = (*l + d).clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
        }
        Ok(next)
    }

    /// Expected parameter count with units kept independently with
    /// probability `sigmoid(logit)`. Uses the product of expected widths and
    /// ignores the one-unit floor.
    pub fn expected_params(&self) -> f64 {
        let probs = self.keep_probabilities();
        let g = &self.prototype;
        let mut offset = 0;
        // Expected size of the unit axis (features or channels) flowing in.
        let mut width = g.input_shape().units() as f64;
        let mut total = 0.0;
        for (i, v) in g.vertices().iter().enumerate() {
            let input = g.input_of(i);
            let out_width = if v.prunable_units > 0 {
                let w: f64 = probs[offset..offset + v.prunable_units].iter().sum();
                offset += v.prunable_units;
                Some(w)
            } else {
                v.kind.width().map(|w| w as f64)
            };
            match v.kind {
                LayerKind::Dense { .. } => {
                    let out = out_width.expect("dense width");
                    total += width * out + out;
                    width = out;
                }
                LayerKind::Conv2D { kernel, .. } => {
                    let out = out_width.expect("conv width");
                    total += width * (kernel * kernel) as f64 * out + out;
                    width = out;
                }
                LayerKind::Flatten => width *= input.spatial() as f64,
                _ => {}
            }
        }
        total
    }

    pub fn to_checkpoint(&self, provenance: Provenance) -> GeneratorCheckpoint {
        GeneratorCheckpoint {
            version: CHECKPOINT_VERSION,
            prototype: self.prototype.to_doc(),
            prototype_digest: self.params.prototype_digest.clone(),
            retention_logits: self.params.retention_logits.clone(),
            metric_cfg: self.metric_cfg,
            req: self.req,
            provenance,
        }
    }

    pub fn from_checkpoint(ckpt: &GeneratorCheckpoint) -> Result<Self, GeneratorError> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(GeneratorError::Version(ckpt.version));
        }
        let prototype = NetworkGraph::from_doc(&ckpt.prototype)?;
        Generator::from_parts(
            prototype,
            GeneratorParams {
                retention_logits: ckpt.retention_logits.clone(),
                prototype_digest: ckpt.prototype_digest.clone(),
            },
            ckpt.metric_cfg,
            ckpt.req,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub cycle: u64,
    pub master_seed: u64,
}

/// Persisted form of a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorCheckpoint {
    pub version: u32,
    pub prototype: NetworkDoc,
    pub prototype_digest: String,
    pub retention_logits: Vec<f64>,
    pub metric_cfg: MetricConfig,
    pub req: RequirementSpec,
    pub provenance: Provenance,
}

impl GeneratorCheckpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoints always serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeneratorError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Generator, Provenance), GeneratorError> {
        let text = fs::read_to_string(path)?;
        let ckpt: GeneratorCheckpoint =
            serde_json::from_str(&text).map_err(|e| GeneratorError::Corrupt(e.to_string()))?;
        Ok((Generator::from_checkpoint(&ckpt)?, ckpt.provenance))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::fixtures::{mlp, small_cnn};

    fn make(widths: &[usize], logit: f64) -> Generator {
        init_generator(
            mlp(widths),
            RequirementSpec::accuracy_at_least(0.9),
            MetricConfig::default(),
            logit,
        )
        .unwrap()
    }

    #[test]
    fn logits_align_with_prototype_units() {
        let g = make(&[2, 64, 64, 64, 4], DEFAULT_INIT_LOGIT);
        assert_eq!(g.num_units(), 192);
        assert!(g.logits().iter().all(|&l| l == 2.0));
        assert!((sigmoid(2.0) - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn saturated_high_returns_prototype() {
        let g = make(&[2, 64, 64, 64, 4], 50.0);
        for s in 0..20 {
            assert_eq!(&g.sample(Seed(s)), g.prototype());
        }
    }

    #[test]
    fn saturated_low_keeps_one_unit_per_layer() {
        let g = make(&[2, 64, 64, 64, 4], -50.0);
        for s in 0..20 {
            let n = g.sample(Seed(s));
            for v in n.vertices().iter().filter(|v| v.prunable_units > 0) {
                assert_eq!(v.kind.width(), Some(1));
            }
        }
    }

    #[test]
    fn floor_keeps_highest_logit() {
        let g = make(&[2, 4, 3], -50.0);
        let mut delta = ParamDelta::zeros(4);
        delta.0[2] = 10.0;
        let g = g.apply_delta(&delta).unwrap();
        assert_eq!(g.mask(Seed(1)), vec![false, false, true, false]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = make(&[2, 32, 32, 4], 0.0);
        let a = g.sample(Seed(7));
        assert_eq!(serialize(&a), serialize(&g.sample(Seed(7))));
        let distinct: std::collections::BTreeSet<String> =
            (0..10).map(|s| serialize(&g.sample(Seed(s)))).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn apply_delta_rules() {
        let g = make(&[2, 4, 3], 1.5);
        let same = g.apply_delta(&ParamDelta::zeros(4)).unwrap();
        assert_eq!(
            same.logits()
                .iter()
                .map(|l| l.to_bits())
                .collect::<Vec<_>>(),
            g.logits().iter().map(|l| l.to_bits()).collect::<Vec<_>>()
        );
        let up = g
            .apply_delta(&ParamDelta(vec![100.0, -100.0, 0.5, 0.0]))
            .unwrap();
        assert_eq!(up.logits(), &[50.0, -50.0, 2.0, 1.5]);
        assert!(matches!(
            g.apply_delta(&ParamDelta::zeros(3)),
            Err(GeneratorError::Alignment {
                expected: 4,
                found: 3
            })
        ));
    }

    #[test]
    fn expected_params_saturates_to_prototype() {
        for proto in [mlp(&[2, 64, 64, 64, 4]), small_cnn()] {
            let g = init_generator(
                proto.clone(),
                RequirementSpec::accuracy_at_least(0.5),
                MetricConfig::default(),
                50.0,
            )
            .unwrap();
            let exp = g.expected_params();
            let actual = proto.params() as f64;
            assert!((exp - actual).abs() <= 1e-6 * actual, "{exp} vs {actual}");
        }
    }

    #[test]
    fn expected_params_monotone_in_logits() {
        let g = make(&[2, 8, 6, 3], 0.0);
        let base = g.expected_params();
        for u in 0..g.num_units() {
            let mut d = ParamDelta::zeros(g.num_units());
            d.0[u] = 0.7;
            assert!(g.apply_delta(&d).unwrap().expected_params() >= base);
        }
    }

    #[test]
    fn digest_binding_is_checked() {
        let g = make(&[2, 4, 3], 2.0);
        let mut params = g.params().clone();
        params.prototype_digest = "00".repeat(32);
        let err = Generator::from_parts(
            g.prototype().clone(),
            params,
            MetricConfig::default(),
            RequirementSpec::accuracy_at_least(0.9),
        )
        .unwrap_err();
        assert!(matches!(err, GeneratorError::DigestMismatch { .. }));
    }

    #[test]
    fn checkpoint_round_trip() {
        let g = make(&[2, 16, 8, 4], 0.3)
            .apply_delta(&ParamDelta(
                (0..24).map(|i| i as f64 * 0.013 - 0.1).collect(),
            ))
            .unwrap();
        let ckpt = g.to_checkpoint(Provenance {
            cycle: 5,
            master_seed: 1,
        });
        let text = ckpt.to_json();
        let back: GeneratorCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(Generator::from_checkpoint(&back).unwrap(), g);

        let mut tampered = back.clone();
        tampered.prototype.vertices[1]
            .attrs
            .insert("units".into(), 17.into());
        assert!(matches!(
            Generator::from_checkpoint(&tampered),
            Err(GeneratorError::DigestMismatch { .. })
        ));
    }
}
