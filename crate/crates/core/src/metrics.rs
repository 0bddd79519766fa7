//! Efficiency metrics and the operational-requirement indicator.
//!
//! NetScore is `20 * log10(a^kappa / (p^beta * m^gamma))` where `a` is accuracy in
//! percent and `p`, `m` are parameter and MAC counts divided by their units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Split;
use crate::netgraph::NetworkGraph;
use crate::trainer::EvalResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("parameter count must be >= 1")]
    ZeroParams,
    #[error("MAC count must be >= 1")]
    ZeroMacs,
    #[error("NetScore is undefined at zero accuracy")]
    UndefinedNetScore,
    #[error("invalid metric configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub kappa: f64,
    pub beta: f64,
    pub gamma: f64,
    pub param_unit: f64,
    pub mac_unit: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            kappa: 2.0,
            beta: 0.5,
            gamma: 0.5,
            param_unit: 1e6,
            mac_unit: 1e6,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        let fields = [
            ("kappa", self.kappa),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("param_unit", self.param_unit),
            ("mac_unit", self.mac_unit),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MetricError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementSpec {
    pub min_accuracy: f64,
    #[serde(default = "default_eval_split")]
    pub eval_split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_params: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_macs: Option<u64>,
}

fn default_eval_split() -> Split {
    Split::Val
}

impl RequirementSpec {
    pub fn accuracy_at_least(min_accuracy: f64) -> Self {
        Self {
            min_accuracy,
            eval_split: Split::Val,
            max_params: None,
            max_macs: None,
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if !(0.0..=1.0).contains(&self.min_accuracy) {
            return Err(MetricError::Config(format!(
                "min_accuracy must lie in [0, 1], got {}",
                self.min_accuracy
            )));
        }
        if self.eval_split == Split::Train {
            return Err(MetricError::Config(
                "eval_split must be 'val' or 'test'".into(),
            ));
        }
        if self.max_params == Some(0) || self.max_macs == Some(0) {
            return Err(MetricError::Config("caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub accuracy: f64,
    pub params: u64,
    pub macs: u64,
    pub info_density: f64,
    /// `None` when undefined (zero accuracy or zero MACs).
    pub netscore: Option<f64>,
    pub satisfies: bool,
}

/// Accuracy in percent per `param_unit` parameters.
pub fn information_density(
    accuracy: f64,
    params: u64,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    if params == 0 {
        return Err(MetricError::ZeroParams);
    }
    Ok(accuracy * 100.0 / (params as f64 / cfg.param_unit))
}

pub fn netscore(
    accuracy: f64,
    params: u64,
    macs: u64,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    if params == 0 {
        return Err(MetricError::ZeroParams);
    }
    if macs == 0 {
        return Err(MetricError::ZeroMacs);
    }
    if accuracy <= 0.0 {
        return Err(MetricError::UndefinedNetScore);
    }
    let a = accuracy * 100.0;
    let p = params as f64 / cfg.param_unit;
    let m = macs as f64 / cfg.mac_unit;
    Ok(20.0 * (cfg.kappa * a.log10() - cfg.beta * p.log10() - cfg.gamma * m.log10()))
}

/// 1 iff every threshold in `req` holds; all comparisons are inclusive.
pub fn indicator(accuracy: f64, params: u64, macs: u64, req: &RequirementSpec) -> bool {
    accuracy >= req.min_accuracy
        && req.max_params.is_none_or(|cap| params <= cap)
        && req.max_macs.is_none_or(|cap| macs <= cap)
}

pub fn score(
    g: &NetworkGraph,
    eval: &EvalResult,
    cfg: &MetricConfig,
    req: &RequirementSpec,
) -> Result<Scorecard, MetricError> {
    let params = g.params();
    let macs = g.macs();
    let info_density = information_density(eval.accuracy, params, cfg)?;
    let netscore = match netscore(eval.accuracy, params, macs, cfg) {
        Ok(v) => Some(v),
        Err(MetricError::UndefinedNetScore | MetricError::ZeroMacs) => None,
        Err(e) => return Err(e),
    };
    let satisfies = eval.accuracy > 0.0 && indicator(eval.accuracy, params, macs, req);
    Ok(Scorecard {
        accuracy: eval.accuracy,
        params,
        macs,
        info_density,
        netscore,
        satisfies,
    })
}
