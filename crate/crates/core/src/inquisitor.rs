//! Probing generated networks and turning their responses into generator
//! parameter changes.
//!
//! A unit's saliency is the Shannon entropy of its activation histogram,
//! normalized by `ln(bins)`, times the RMS of its activation. Units whose
//! running saliency falls below the `percentile` quantile of the observed units
//! receive negative logit increments proportional to their shortfall; after a
//! requirement violation the pruning pressure is halved per consecutive
//! violation and every observed unit receives a restoring increment.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{apportion, LabeledDataset, Split};
use crate::generator::{Generator, ParamDelta};
use crate::metrics::Scorecard;
use crate::netgraph::NetworkGraph;
use crate::rng::{self, stream};
use crate::trainer::{forward, TrainError, WeightStore};

#[derive(Debug, Error)]
pub enum InquisitorError {
    #[error("stimulus size must be >= 1")]
    EmptyStimulus,
    #[error("requested {requested} stimuli but the train split has {available} samples")]
    StimulusTooLarge { requested: usize, available: usize },
    #[error("probe selection references unknown vertex '{0}'")]
    UnknownVertex(String),
    #[error("expected {expected} entries aligned to prototype units, got {found}")]
    Alignment { expected: usize, found: usize },
    #[error("invalid inquisitor configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InquisitorConfig {
    pub prune_step: f64,
    pub restore_step: f64,
    pub percentile: f64,
    pub bins: usize,
    pub ema_decay: f64,
}

impl Default for InquisitorConfig {
    fn default() -> Self {
        Self {
            prune_step: 0.5,
            restore_step: 0.3,
            percentile: 0.3,
            bins: 16,
            ema_decay: 0.5,
        }
    }
}

impl InquisitorConfig {
    pub fn validate(&self) -> Result<(), InquisitorError> {
        let bad = |m: &str| Err(InquisitorError::Config(m.into()));
        if !(self.prune_step > 0.0 && self.prune_step.is_finite()) {
            return bad("prune_step must be > 0");
        }
        if !(self.restore_step > 0.0 && self.restore_step.is_finite()) {
            return bad("restore_step must be > 0");
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return bad("percentile must lie in (0, 1)");
        }
        if self.bins < 2 {
            return bad("bins must be >= 2");
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad("ema_decay must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Hyperparameters plus the running state carried between cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InquisitorParams {
    pub config: InquisitorConfig,
    /// Running saliency per prototype unit; `None` until first observed.
    pub ema_saliency: Vec<Option<f64>>,
    pub violation_streak: u32,
}

impl InquisitorParams {
    pub fn new(config: InquisitorConfig, gen: &Generator) -> Self {
        Self {
            config,
            ema_saliency: vec![None; gen.num_units()],
            violation_streak: 0,
        }
    }

    /// Fold one cycle's observation into the running state.
    pub fn update(&self, sal: &SaliencyMap, card: &Scorecard) -> Self {
        let mut next = self.clone();
        let decay = self.config.ema_decay;
        for (ema, s) in next.ema_saliency.iter_mut().zip(&sal.scores) {
            if let Some(s) = *s {
                *ema = Some(match *ema {
                    Some(prev) => decay * prev + (1.0 - decay) * s,
                    None => s,
                });
            }
        }
        if card.satisfies {
            next.violation_streak = 0;
        } else {
            next.violation_streak += 1;
        }
        next
    }

    /// Multiplier on the pruning step: halved once per consecutive violation.
    pub fn prune_scale(&self) -> f64 {
        0.5f64.powi(self.violation_streak as i32)
    }

    pub fn propose_delta(
        &self,
        gen: &Generator,
        sal: &SaliencyMap,
    ) -> Result<ParamDelta, InquisitorError> {
        let n = gen.num_units();
        for len in [sal.scores.len(), self.ema_saliency.len()] {
            if len != n {
                return Err(InquisitorError::Alignment {
                    expected: n,
                    found: len,
                });
            }
        }
        let observed: Vec<usize> = (0..n).filter(|&u| sal.scores[u].is_some()).collect();
        let mut delta = ParamDelta::zeros(n);
        if observed.is_empty() {
            return Ok(delta);
        }
        let values: Vec<f64> = observed
            .iter()
            .map(|&u| self.ema_saliency[u].expect("observed units have a running saliency"))
            .collect();
        let threshold = quantile(&values, self.config.percentile);
        let step = self.config.prune_step * self.prune_scale();
        let restore = if self.violation_streak > 0 {
            self.config.restore_step
        } else {
            0.0
        };
        for (&u, &s) in observed.iter().zip(&values) {
            let mut d = 0.0;
            if s < threshold {
                d -= step * (threshold - s) / threshold.max(1e-12);
            }
            delta.0[u] = d + restore;
        }
        Ok(delta)
    }

    /// Delta used when a candidate could not be probed (training diverged):
    /// only the restoring increment, on every unit the candidate kept.
    pub fn restore_delta(&self, mask: &[bool]) -> ParamDelta {
        let r = if self.violation_streak > 0 {
            self.config.restore_step
        } else {
            0.0
        };
        ParamDelta(mask.iter().map(|&k| if k { r } else { 0.0 }).collect())
    }
}

/// Linear-interpolation quantile (`q` in `[0, 1]`) of a non-empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusSet {
    /// Dataset indices, ascending.
    pub indices: Vec<usize>,
    pub inputs: Vec<f64>,
}

impl StimulusSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Class-stratified draw of `n` train samples.
pub fn build_stimulus(
    ds: &LabeledDataset,
    n: usize,
    seed: u64,
) -> Result<StimulusSet, InquisitorError> {
    if n == 0 {
        return Err(InquisitorError::EmptyStimulus);
    }
    let train = ds.indices(Split::Train);
    if n > train.len() {
        return Err(InquisitorError::StimulusTooLarge {
            requested: n,
            available: train.len(),
        });
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for &i in &train {
        by_class[ds.labels()[i]].push(i);
    }
    let fractions: Vec<f64> = by_class
        .iter()
        .map(|c| c.len() as f64 / train.len() as f64)
        .collect();
    let counts = apportion(n, &fractions);
    let mut rng = rng::chacha(rng::derive_seed(&[stream::STIMULUS, seed]));
    let mut indices = Vec::with_capacity(n);
    for (mut members, count) in by_class.into_iter().zip(counts) {
        members.shuffle(&mut rng);
        indices.extend(members.into_iter().take(count));
    }
    indices.sort_unstable();
    let mut inputs = Vec::with_capacity(n * ds.shape().numel());
    for &i in &indices {
        inputs.extend_from_slice(ds.sample(i));
    }
    Ok(StimulusSet { indices, inputs })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSelection {
    pub vertex_ids: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl ProbeSelection {
    /// Select `ids`; the edge subset defaults to every edge touching them.
    pub fn new(g: &NetworkGraph, ids: Vec<String>) -> Result<Self, InquisitorError> {
        if let Some(bad) = ids.iter().find(|id| g.vertex_index(id).is_none()) {
            return Err(InquisitorError::UnknownVertex(bad.clone()));
        }
        let edges = g
            .edges()
            .iter()
            .filter(|(s, d)| ids.contains(s) || ids.contains(d))
            .cloned()
            .collect();
        Ok(Self {
            vertex_ids: ids,
            edges,
        })
    }

    pub fn all(g: &NetworkGraph) -> Self {
        Self::new(g, g.vertices().iter().map(|v| v.id.clone()).collect()).expect("ids from graph")
    }

    /// Keep each vertex iff a hash of its id falls below `fraction`.
    pub fn sampled(g: &NetworkGraph, fraction: f64) -> Self {
        let ids = g
            .vertices()
            .iter()
            .filter(|v| fraction >= 1.0 || id_hash_unit(&v.id) < fraction)
            .map(|v| v.id.clone())
            .collect();
        Self::new(g, ids).expect("ids from graph")
    }

    pub fn empty() -> Self {
        Self {
            vertex_ids: Vec::new(),
            edges: Vec::new(),
        }
    }
}

fn id_hash_unit(id: &str) -> f64 {
    let h = Sha256::digest(id.as_bytes());
    let word = u64::from_be_bytes(h[..8].try_into().expect("8 bytes"));
    (word >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitResponse {
    pub mean: f64,
    pub rms: f64,
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexResponse {
    pub vertex_id: String,
    pub units: Vec<UnitResponse>,
}

/// Per-unit response statistics of the selected vertices. Image-shaped
/// activations are averaged over spatial positions first, so every unit
/// contributes one value per stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub samples: usize,
    pub bins: usize,
    pub vertices: Vec<VertexResponse>,
}

impl ResponseRecord {
    pub fn get(&self, id: &str) -> Option<&VertexResponse> {
        self.vertices.iter().find(|v| v.vertex_id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

fn unit_response(values: &[f64], bins: usize) -> UnitResponse {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut histogram = vec![0u64; bins];
    if hi > lo {
        for &v in values {
            let b = ((v - lo) / (hi - lo) * bins as f64) as usize;
            histogram[b.min(bins - 1)] += 1;
        }
    } else {
        histogram[0] = values.len() as u64;
    }
    UnitResponse {
        mean,
        rms,
        histogram,
    }
}

pub fn probe(
    g: &NetworkGraph,
    w: &WeightStore,
    stimuli: &StimulusSet,
    sel: &ProbeSelection,
    bins: usize,
) -> Result<ResponseRecord, InquisitorError> {
    let mut positions = Vec::with_capacity(sel.vertex_ids.len());
    for id in &sel.vertex_ids {
        positions.push(
            g.vertex_index(id)
                .ok_or_else(|| InquisitorError::UnknownVertex(id.clone()))?,
        );
    }
    positions.sort_unstable();
    positions.dedup();
    let n = stimuli.len();
    if positions.is_empty() || n == 0 {
        return Ok(ResponseRecord {
            samples: n,
            bins,
            vertices: Vec::new(),
        });
    }
    let pass = forward(g, w, &stimuli.inputs)?;
    let vertices = positions
        .into_iter()
        .map(|i| {
            let shape = &g.shapes()[i];
            let (units, spatial, numel) = (shape.units(), shape.spatial(), shape.numel());
            let act = &pass.activations[i];
            let units = (0..units)
                .map(|u| {
                    let values: Vec<f64> = (0..n)
                        .map(|b| {
                            let start = b * numel + u * spatial;
                            act[start..start + spatial].iter().sum::<f64>() / spatial as f64
                        })
                        .collect();
                    unit_response(&values, bins)
                })
                .collect();
            VertexResponse {
                vertex_id: g.vertices()[i].id.clone(),
                units,
            }
        })
        .collect();
    Ok(ResponseRecord {
        samples: n,
        bins,
        vertices,
    })
}

/// Normalized Shannon entropy of a histogram over `bins` bins, in `[0, 1]`.
pub fn normalized_entropy(histogram: &[u64], bins: usize) -> f64 {
    let total: u64 = histogram.iter().sum();
    if total == 0 || bins < 2 {
        return 0.0;
    }
    let h: f64 = histogram
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h / (bins as f64).ln()
}

/// Per-vertex, per-unit saliency of a response record.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSaliency {
    pub vertices: Vec<(String, Vec<f64>)>,
}

pub fn saliency(record: &ResponseRecord) -> ResponseSaliency {
    ResponseSaliency {
        vertices: record
            .vertices
            .iter()
            .map(|v| {
                let scores = v
                    .units
                    .iter()
                    .map(|u| normalized_entropy(&u.histogram, record.bins) * u.rms)
                    .collect();
                (v.vertex_id.clone(), scores)
            })
            .collect(),
    }
}

/// Saliency aligned to prototype units; `None` marks units not observed.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub scores: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaliencySummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub observed: usize,
}

impl SaliencyMap {
    pub fn unobserved(units: usize) -> Self {
        Self {
            scores: vec![None; units],
        }
    }

    /// Map per-vertex scores of a sampled network back onto prototype units.
    ///
    /// Each prunable vertex is observed through the last selected vertex in
    /// the run of unit-preserving vertices (ReLU, pooling) that follows it.
    pub fn from_sampled(
        sal: &ResponseSaliency,
        sampled: &NetworkGraph,
        gen: &Generator,
        mask: &[bool],
    ) -> Result<Self, InquisitorError> {
        if mask.len() != gen.num_units() {
            return Err(InquisitorError::Alignment {
                expected: gen.num_units(),
                found: mask.len(),
            });
        }
        let mut scores = vec![None; gen.num_units()];
        let lookup = |id: &str| sal.vertices.iter().find(|(v, _)| v == id).map(|(_, s)| s);
        for span in gen.spans() {
            let Some(i) = sampled.vertex_index(&span.id) else {
                continue;
            };
            let verts = sampled.vertices();
            let mut observer = lookup(&span.id);
            let mut j = i + 1;
            while j < verts.len() && verts[j].kind.preserves_units() {
                if let Some(s) = lookup(&verts[j].id) {
                    observer = Some(s);
                }
                j += 1;
            }
            let Some(unit_scores) = observer else {
                continue;
            };
            let kept = (span.offset..span.offset + span.len).filter(|&u| mask[u]);
            for (k, u) in kept.enumerate() {
                scores[u] = unit_scores.get(k).copied();
            }
        }
        Ok(Self { scores })
    }

    pub fn summary(&self) -> Option<SaliencySummary> {
        let values: Vec<f64> = self.scores.iter().flatten().copied().collect();
        if values.is_empty() {
            return None;
        }
        Some(SaliencySummary {
            min: quantile(&values, 0.0),
            median: quantile(&values, 0.5),
            max: quantile(&values, 1.0),
            observed: values.len(),
        })
    }
}
