//! The generate → train/score → probe → update loop and its persisted state.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{LabeledDataset, Split};
use crate::generator::{
    init_generator, Generator, GeneratorCheckpoint, GeneratorError, Provenance, Seed,
    DEFAULT_INIT_LOGIT,
};
use crate::inquisitor::{
    build_stimulus, probe, saliency, InquisitorConfig, InquisitorError, InquisitorParams,
    ProbeSelection, SaliencyMap, SaliencySummary,
};
use crate::metrics::{score, MetricConfig, MetricError, RequirementSpec, Scorecard};
use crate::netgraph::{serialize, NetworkGraph};
use crate::rng::{self, stream};
use crate::trainer::{evaluate, fit, TrainConfig, TrainError};

pub const STATE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("invalid synthesis configuration: {0}")]
    Config(String),
    #[error("seed list is empty")]
    NoSeeds,
    #[error("{0} split is empty")]
    EmptySplit(Split),
    #[error("dataset fingerprint {found} does not match the state's {expected}")]
    DatasetMismatch { expected: String, found: String },
    #[error("unsupported state version {0}")]
    Version(u32),
    #[error("state digest mismatch: recorded {recorded}, computed {computed}")]
    Digest { recorded: String, computed: String },
    #[error("corrupt state document: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Inquisitor(#[from] InquisitorError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub cycles: u64,
    pub train: TrainConfig,
    pub inquisitor: InquisitorConfig,
    pub stimuli_n: usize,
    pub probe_fraction: f64,
    pub validation_seeds: usize,
    pub checkpoint_interval: u64,
    pub satisfaction_floor: f64,
    pub master_seed: u64,
    pub init_logit: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            cycles: 30,
            train: TrainConfig::default(),
            inquisitor: InquisitorConfig::default(),
            stimuli_n: 64,
            probe_fraction: 1.0,
            validation_seeds: 10,
            checkpoint_interval: 5,
            satisfaction_floor: 0.9,
            master_seed: 1,
            init_logit: DEFAULT_INIT_LOGIT,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |m: &str| Err(SynthesisError::Config(m.into()));
        self.train.validate()?;
        self.inquisitor.validate()?;
        if self.stimuli_n == 0 {
            return bad("stimuli_n must be >= 1");
        }
        if !(self.probe_fraction > 0.0 && self.probe_fraction <= 1.0) {
            return bad("probe_fraction must lie in (0, 1]");
        }
        if self.validation_seeds == 0 {
            return bad("validation_seeds must be >= 1");
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint_interval must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.satisfaction_floor) {
            return bad("satisfaction_floor must lie in [0, 1]");
        }
        if !self.init_logit.is_finite() {
            return bad("init_logit must be finite");
        }
        Ok(())
    }

    pub fn candidate_seed(&self, cycle: u64) -> Seed {
        Seed(rng::derive_seed(&[
            self.master_seed,
            stream::CANDIDATE_SEED,
            cycle,
        ]))
    }

    pub fn validation_seed_list(&self) -> Vec<Seed> {
        (0..self.validation_seeds as u64)
            .map(|i| {
                Seed(rng::derive_seed(&[
                    self.master_seed,
                    stream::VALIDATION_SEED,
                    i,
                ]))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub seed: Seed,
    pub scorecard: Scorecard,
    pub diverged: bool,
    pub saliency: Option<SaliencySummary>,
    pub delta_l1: f64,
    /// Expected parameter count of the generator after this cycle's update.
    pub expected_params: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub seed: Seed,
    pub scorecard: Scorecard,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub members: Vec<FamilyMember>,
    pub satisfied: usize,
    pub satisfaction_rate: f64,
    /// Statistics over satisfying members; `None` when there are none.
    pub mean_params: Option<f64>,
    pub median_params: Option<f64>,
    pub mean_netscore: Option<f64>,
    pub median_netscore: Option<f64>,
    /// Median params over every member.
    pub family_median_params: f64,
    pub distinct_graphs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEval {
    pub cycle: u64,
    pub summary: FamilySummary,
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCheckpoint {
    pub cycle: u64,
    pub generator: GeneratorCheckpoint,
    pub summary: FamilySummary,
}

impl BestCheckpoint {
    pub fn mean_netscore(&self) -> f64 {
        self.summary
            .mean_netscore
            .expect("best always has a defined mean NetScore")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub scheme: String,
    pub master_seed: u64,
    /// Index of the next cycle to execute; cycles are numbered from 1.
    pub next_cycle: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisState {
    pub config: SynthesisConfig,
    pub dataset_fingerprint: String,
    pub generator: Generator,
    pub inquisitor: InquisitorParams,
    pub records: Vec<CycleRecord>,
    pub checkpoints: Vec<CheckpointEval>,
    pub best: Option<BestCheckpoint>,
    pub lineage: Lineage,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateBody {
    config: SynthesisConfig,
    dataset_fingerprint: String,
    generator: GeneratorCheckpoint,
    inquisitor: InquisitorParams,
    records: Vec<CycleRecord>,
    checkpoints: Vec<CheckpointEval>,
    best: Option<BestCheckpoint>,
    lineage: Lineage,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    version: u32,
    digest: String,
    state: StateBody,
}

/// Execution knobs that do not affect results.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

pub fn generate_family(gen: &Generator, seeds: &[Seed]) -> Vec<NetworkGraph> {
    seeds.iter().map(|&s| gen.sample(s)).collect()
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn diverged_card(g: &NetworkGraph) -> Scorecard {
    Scorecard {
        accuracy: 0.0,
        params: g.params(),
        macs: g.macs(),
        info_density: 0.0,
        netscore: None,
        satisfies: false,
    }
}

fn is_divergence(e: &TrainError) -> bool {
    matches!(e, TrainError::Diverged { .. } | TrainError::NonFinite(_))
}

/// Train and score one network. Divergence yields `Ok(None)`.
fn evaluate_network(
    g: &NetworkGraph,
    ds: &LabeledDataset,
    train: &TrainConfig,
    metric_cfg: &MetricConfig,
    req: &RequirementSpec,
) -> Result<Option<(crate::trainer::WeightStore, Scorecard)>, SynthesisError> {
    let w = match fit(g, ds, train) {
        Ok((w, _)) => w,
        Err(e) if is_divergence(&e) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let eval = match evaluate(g, &w, ds, req.eval_split) {
        Ok(r) => r,
        Err(e) if is_divergence(&e) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let card = score(g, &eval, metric_cfg, req)?;
    Ok(Some((w, card)))
}

/// Sample, train and score one network per seed. Each member trains with a
/// seed derived from `train.seed` and its own generator seed.
pub fn validate_generator(
    gen: &Generator,
    ds: &LabeledDataset,
    seeds: &[Seed],
    train: &TrainConfig,
    opts: RunOptions,
) -> Result<FamilySummary, SynthesisError> {
    if seeds.is_empty() {
        return Err(SynthesisError::NoSeeds);
    }
    let graphs = generate_family(gen, seeds);
    let eval_one = |(seed, g): (&Seed, &NetworkGraph)| -> Result<FamilyMember, SynthesisError> {
        let cfg = TrainConfig {
            seed: rng::derive_seed(&[train.seed, stream::VALIDATION_TRAIN, seed.0]),
            ..train.clone()
        };
        Ok(
            match evaluate_network(g, ds, &cfg, gen.metric_cfg(), gen.requirement())? {
                Some((_, scorecard)) => FamilyMember {
                    seed: *seed,
                    scorecard,
                    diverged: false,
                },
                None => FamilyMember {
                    seed: *seed,
                    scorecard: diverged_card(g),
                    diverged: true,
                },
            },
        )
    };
    let members: Vec<FamilyMember> = if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| SynthesisError::Config(e.to_string()))?;
        pool.install(|| {
            seeds
                .par_iter()
                .zip(graphs.par_iter())
                .map(eval_one)
                .collect::<Result<_, _>>()
        })?
    } else {
        seeds
            .iter()
            .zip(&graphs)
            .map(eval_one)
            .collect::<Result<_, _>>()?
    };
    let ok: Vec<&Scorecard> = members
        .iter()
        .map(|m| &m.scorecard)
        .filter(|c| c.satisfies)
        .collect();
    let mut params: Vec<f64> = ok.iter().map(|c| c.params as f64).collect();
    let mut scores: Vec<f64> = ok.iter().filter_map(|c| c.netscore).collect();
    let mut all_params: Vec<f64> = members.iter().map(|m| m.scorecard.params as f64).collect();
    let distinct: BTreeSet<String> = graphs.iter().map(serialize).collect();
    Ok(FamilySummary {
        satisfied: ok.len(),
        satisfaction_rate: ok.len() as f64 / members.len() as f64,
        mean_params: mean(&params),
        median_params: median(&mut params),
        mean_netscore: mean(&scores),
        median_netscore: median(&mut scores),
        family_median_params: median(&mut all_params).expect("non-empty family"),
        distinct_graphs: distinct.len(),
        members,
    })
}

impl SynthesisState {
    /// Build the initial generator and validate it as cycle 0.
    pub fn start(
        prototype: NetworkGraph,
        ds: &LabeledDataset,
        req: RequirementSpec,
        metric_cfg: MetricConfig,
        cfg: SynthesisConfig,
        opts: RunOptions,
    ) -> Result<Self, SynthesisError> {
        cfg.validate()?;
        req.validate()?;
        metric_cfg.validate()?;
        for split in [Split::Train, req.eval_split] {
            if ds.count(split) == 0 {
                return Err(SynthesisError::EmptySplit(split));
            }
        }
        if cfg.stimuli_n > ds.count(Split::Train) {
            return Err(InquisitorError::StimulusTooLarge {
                requested: cfg.stimuli_n,
                available: ds.count(Split::Train),
            }
            .into());
        }
        let generator = init_generator(prototype, req, metric_cfg, cfg.init_logit)?;
        let inquisitor = InquisitorParams::new(cfg.inquisitor, &generator);
        let mut state = Self {
            dataset_fingerprint: ds.fingerprint(),
            inquisitor,
            records: Vec::new(),
            checkpoints: Vec::new(),
            best: None,
            lineage: Lineage {
                scheme: rng::SCHEME.into(),
                master_seed: cfg.master_seed,
                next_cycle: 1,
            },
            generator,
            config: cfg,
        };
        state.checkpoint(ds, 0, opts)?;
        Ok(state)
    }

    pub fn executed_cycles(&self) -> u64 {
        self.lineage.next_cycle - 1
    }

    pub fn is_complete(&self) -> bool {
        self.executed_cycles() >= self.config.cycles
    }

    fn validation_train_cfg(&self) -> TrainConfig {
        TrainConfig {
            seed: self.config.master_seed,
            ..self.config.train.clone()
        }
    }

    fn checkpoint(
        &mut self,
        ds: &LabeledDataset,
        cycle: u64,
        opts: RunOptions,
    ) -> Result<(), SynthesisError> {
        let seeds = self.config.validation_seed_list();
        let summary = validate_generator(
            &self.generator,
            ds,
            &seeds,
            &self.validation_train_cfg(),
            opts,
        )?;
        let replaced = summary.satisfaction_rate >= self.config.satisfaction_floor
            && match (summary.mean_netscore, &self.best) {
                (None, _) => false,
                (Some(_), None) => true,
                (Some(s), Some(b)) => s > b.mean_netscore(),
            };
        if replaced {
            let new = summary.mean_netscore.expect("checked above");
            if let Some(b) = &self.best {
                assert!(new >= b.mean_netscore(), "best NetScore must not decrease");
            }
            self.best = Some(BestCheckpoint {
                cycle,
                generator: self.generator.to_checkpoint(Provenance {
                    cycle,
                    master_seed: self.config.master_seed,
                }),
                summary: summary.clone(),
            });
        }
        self.checkpoints.push(CheckpointEval {
            cycle,
            summary,
            replaced,
        });
        Ok(())
    }

    /// Execute one cycle.
    pub fn step(
        &mut self,
        ds: &LabeledDataset,
        opts: RunOptions,
    ) -> Result<&CycleRecord, SynthesisError> {
        self.check_dataset(ds)?;
        let k = self.lineage.next_cycle;
        let cfg = &self.config;
        let seed = cfg.candidate_seed(k);
        let sampled = self.generator.sample_with_mask(seed);
        let g = &sampled.graph;
        let train = TrainConfig {
            seed: rng::derive_seed(&[cfg.master_seed, stream::CANDIDATE_TRAIN, k, seed.0]),
            ..cfg.train.clone()
        };
        let evaluated = evaluate_network(
            g,
            ds,
            &train,
            self.generator.metric_cfg(),
            self.generator.requirement(),
        )?;
        let (scorecard, diverged, summary, next_inq, delta) = match evaluated {
            Some((w, card)) => {
                let stimuli =
                    build_stimulus(ds, cfg.stimuli_n, rng::derive_seed(&[cfg.master_seed, k]))?;
                let sel = ProbeSelection::sampled(g, cfg.probe_fraction);
                let record = probe(g, &w, &stimuli, &sel, cfg.inquisitor.bins)?;
                let map = SaliencyMap::from_sampled(
                    &saliency(&record),
                    g,
                    &self.generator,
                    &sampled.mask,
                )?;
                let next = self.inquisitor.update(&map, &card);
                let delta = next.propose_delta(&self.generator, &map)?;
                (card, false, map.summary(), next, delta)
            }
            None => {
                let card = diverged_card(g);
                let next = self
                    .inquisitor
                    .update(&SaliencyMap::unobserved(self.generator.num_units()), &card);
                let delta = next.restore_delta(&sampled.mask);
                (card, true, None, next, delta)
            }
        };
        self.generator = self.generator.apply_delta(&delta)?;
        self.inquisitor = next_inq;
        self.records.push(CycleRecord {
            cycle: k,
            seed,
            scorecard,
            diverged,
            saliency: summary,
            delta_l1: delta.l1_norm(),
            expected_params: self.generator.expected_params(),
        });
        self.lineage.next_cycle = k + 1;
        if k.is_multiple_of(self.config.checkpoint_interval) {
            self.checkpoint(ds, k, opts)?;
        }
        Ok(self.records.last().expect("just pushed"))
    }

    /// Run cycles until `until` cycles have executed (capped at the budget).
    pub fn advance(
        &mut self,
        ds: &LabeledDataset,
        until: u64,
        opts: RunOptions,
        mut on_cycle: impl FnMut(&CycleRecord),
    ) -> Result<(), SynthesisError> {
        let until = until.min(self.config.cycles);
        while self.executed_cycles() < until {
            let rec = self.step(ds, opts)?;
            on_cycle(rec);
        }
        Ok(())
    }

    fn check_dataset(&self, ds: &LabeledDataset) -> Result<(), SynthesisError> {
        let found = ds.fingerprint();
        if found != self.dataset_fingerprint {
            return Err(SynthesisError::DatasetMismatch {
                expected: self.dataset_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    fn body(&self) -> StateBody {
        StateBody {
            config: self.config.clone(),
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            generator: self.generator.to_checkpoint(Provenance {
                cycle: self.executed_cycles(),
                master_seed: self.config.master_seed,
            }),
            inquisitor: self.inquisitor.clone(),
            records: self.records.clone(),
            checkpoints: self.checkpoints.clone(),
            best: self.best.clone(),
            lineage: self.lineage.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let body = serde_json::to_string(&self.body()).expect("state always serializes");
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        format!("{{\"version\":{STATE_VERSION},\"digest\":\"{digest}\",\"state\":{body}}}")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthesisError> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| SynthesisError::Corrupt(e.to_string()))?;
        if header.version != STATE_VERSION {
            return Err(SynthesisError::Version(header.version));
        }
        let doc: StateDoc =
            serde_json::from_str(text).map_err(|e| SynthesisError::Corrupt(e.to_string()))?;
        let body = serde_json::to_string(&doc.state).expect("state always serializes");
        let computed = hex::encode(Sha256::digest(body.as_bytes()));
        if computed != doc.digest {
            return Err(SynthesisError::Digest {
                recorded: doc.digest,
                computed,
            });
        }
        let s = doc.state;
        let generator = Generator::from_checkpoint(&s.generator)?;
        if s.inquisitor.ema_saliency.len() != generator.num_units() {
            return Err(SynthesisError::Corrupt(
                "inquisitor state misaligned with generator".into(),
            ));
        }
        if s.records.len() as u64 + 1 != s.lineage.next_cycle {
            return Err(SynthesisError::Corrupt(
                "record count disagrees with lineage".into(),
            ));
        }
        s.config.validate()?;
        Ok(Self {
            config: s.config,
            dataset_fingerprint: s.dataset_fingerprint,
            generator,
            inquisitor: s.inquisitor,
            records: s.records,
            checkpoints: s.checkpoints,
            best: s.best,
            lineage: s.lineage,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SynthesisError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthesisError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn report_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_COLUMNS).expect("in-memory write");
        for r in &self.records {
            let c = &r.scorecard;
            w.write_record([
                r.cycle.to_string(),
                r.seed.0.to_string(),
                c.accuracy.to_string(),
                c.params.to_string(),
                c.macs.to_string(),
                c.info_density.to_string(),
                c.netscore
                    .map_or_else(|| "undefined".to_string(), |v| v.to_string()),
                u8::from(c.satisfies).to_string(),
                r.delta_l1.to_string(),
                r.expected_params.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    pub fn summary(&self) -> RunSummary {
        let proto = self.generator.prototype();
        RunSummary {
            cycles_executed: self.executed_cycles(),
            cycles_budget: self.config.cycles,
            master_seed: self.config.master_seed,
            prototype_params: proto.params(),
            prototype_macs: proto.macs(),
            satisfied_cycles: self
                .records
                .iter()
                .filter(|r| r.scorecard.satisfies)
                .count(),
            diverged_cycles: self.records.iter().filter(|r| r.diverged).count(),
            final_expected_params: self.generator.expected_params(),
            checkpoints: self
                .checkpoints
                .iter()
                .map(|c| CheckpointLine {
                    cycle: c.cycle,
                    satisfaction_rate: c.summary.satisfaction_rate,
                    mean_netscore: c.summary.mean_netscore,
                    family_median_params: c.summary.family_median_params,
                    distinct_graphs: c.summary.distinct_graphs,
                    replaced: c.replaced,
                })
                .collect(),
            best: self.best.as_ref().map(|b| BestLine {
                cycle: b.cycle,
                satisfaction_rate: b.summary.satisfaction_rate,
                mean_netscore: b.mean_netscore(),
                median_params: b.summary.median_params,
                family_median_params: b.summary.family_median_params,
                mean_info_density: mean(
                    &b.summary
                        .members
                        .iter()
                        .filter(|m| m.scorecard.satisfies)
                        .map(|m| m.scorecard.info_density)
                        .collect::<Vec<_>>(),
                ),
                params_ratio: b.summary.family_median_params / proto.params() as f64,
            }),
            last_saliency: self.records.iter().rev().find_map(|r| r.saliency),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 10] = [
    "cycle",
    "seed",
    "accuracy",
    "params",
    "macs",
    "info_density",
    "netscore",
    "satisfies",
    "delta_l1",
    "expected_params",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLine {
    pub cycle: u64,
    pub satisfaction_rate: f64,
    pub mean_netscore: Option<f64>,
    pub family_median_params: f64,
    pub distinct_graphs: usize,
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestLine {
    pub cycle: u64,
    pub satisfaction_rate: f64,
    pub mean_netscore: f64,
    pub median_params: Option<f64>,
    pub family_median_params: f64,
    pub mean_info_density: Option<f64>,
    pub params_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub cycles_executed: u64,
    pub cycles_budget: u64,
    pub master_seed: u64,
    pub prototype_params: u64,
    pub prototype_macs: u64,
    pub satisfied_cycles: usize,
    pub diverged_cycles: usize,
    pub final_expected_params: f64,
    pub checkpoints: Vec<CheckpointLine>,
    pub best: Option<BestLine>,
    pub last_saliency: Option<SaliencySummary>,
}

/// Start a run and execute its whole cycle budget.
pub fn run(
    prototype: NetworkGraph,
    ds: &LabeledDataset,
    req: RequirementSpec,
    metric_cfg: MetricConfig,
    cfg: SynthesisConfig,
) -> Result<SynthesisState, SynthesisError> {
    let opts = RunOptions::default();
    let mut state = SynthesisState::start(prototype, ds, req, metric_cfg, cfg, opts)?;
    let total = state.config.cycles;
    state.advance(ds, total, opts, |_| {})?;
    Ok(state)
}
