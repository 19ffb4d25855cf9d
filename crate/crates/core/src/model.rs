use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSeries, FeatureVector, Form, FEATURE_COUNT};

/// Width of the pooled representation: masked mean and max per feature.
pub const POOLED_DIM: usize = 2 * FEATURE_COUNT;

/// Knobs of the training protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Focal-loss focusing exponent; 0 recovers weighted cross-entropy.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Per-class loss weights; None derives inverse class frequency
    /// normalized to mean 1.
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_early_stop_patience")]
    pub early_stop_patience: usize,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_plateau_factor")]
    pub plateau_factor: f64,
    #[serde(default = "default_plateau_patience")]
    pub plateau_patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
}

fn default_gamma() -> f64 {
    2.0
}
fn default_max_epochs() -> usize {
    200
}
fn default_early_stop_patience() -> usize {
    10
}
fn default_clip_norm() -> f64 {
    1.0
}
fn default_lr() -> f64 {
    0.5
}
fn default_plateau_factor() -> f64 {
    0.5
}
fn default_plateau_patience() -> usize {
    5
}
fn default_runs() -> usize {
    15
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gamma: default_gamma(),
            alpha: None,
            max_epochs: default_max_epochs(),
            early_stop_patience: default_early_stop_patience(),
            clip_norm: default_clip_norm(),
            lr: default_lr(),
            plateau_factor: default_plateau_factor(),
            plateau_patience: default_plateau_patience(),
            seed: 0,
            runs: default_runs(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::Config("gamma must be >= 0".into()));
        }
        if let Some(alpha) = &self.alpha {
            if alpha.iter().any(|a| *a <= 0.0) {
                return Err(Error::Config("alpha weights must be strictly positive".into()));
            }
        }
        if self.early_stop_patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "early_stop_patience ({}) must be < max_epochs ({})",
                self.early_stop_patience, self.max_epochs
            )));
        }
        if self.clip_norm <= 0.0 || self.lr <= 0.0 {
            return Err(Error::Config("clip_norm and lr must be positive".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config("plateau_factor must be in (0,1)".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Reference,
    Plugin,
}

/// A trained sequence classifier: masked mean+max pooling over the 13
/// features, then an affine map to K class logits and a softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    /// Class names in logit order; index 0 is "graduated" for forecasters
    /// and ASFI for routers.
    pub classes: Vec<String>,
    pub config: ModelConfig,
    /// K rows of POOLED_DIM weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Per-epoch training loss of the retained run.
    pub training_trace: Vec<f64>,
}

/// Pool a variable-length sequence into [means | maxes] per feature. The
/// mask selects which months participate; None means all. A fully masked
/// sequence pools to zeros.
pub fn pooled_stats(months: &[FeatureVector], mask: Option<&[bool]>) -> [f64; POOLED_DIM] {
    let mut out = [0.0; POOLED_DIM];
    let mut count = 0usize;
    let mut maxes = [f64::NEG_INFINITY; FEATURE_COUNT];
    for (t, v) in months.iter().enumerate() {
        if let Some(m) = mask {
            if !m.get(t).copied().unwrap_or(false) {
                continue;
            }
        }
        count += 1;
        for i in 0..FEATURE_COUNT {
            out[i] += v.values[i];
            if v.values[i] > maxes[i] {
                maxes[i] = v.values[i];
            }
        }
    }
    if count == 0 {
        return [0.0; POOLED_DIM];
    }
    for i in 0..FEATURE_COUNT {
        out[i] /= count as f64;
        out[FEATURE_COUNT + i] = maxes[i];
    }
    out
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

impl TrainedModel {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let k = self.classes.len();
        if k < 2 || self.weights.len() != k || self.bias.len() != k {
            return Err(Error::Checkpoint(format!(
                "parameter shape mismatch: {} classes, {} weight rows, {} biases",
                k,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self.weights.iter().any(|row| row.len() != POOLED_DIM) {
            return Err(Error::FeatureCountMismatch {
                expected: POOLED_DIM,
                got: self.weights.iter().map(Vec::len).find(|l| *l != POOLED_DIM).unwrap_or(0),
            });
        }
        let finite = self.weights.iter().flatten().chain(self.bias.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn logits_from_pooled(&self, x: &[f64; POOLED_DIM]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x.iter()).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }

    /// Class probabilities for a (possibly masked) month sequence.
    pub fn class_probs_masked(&self, months: &[FeatureVector], mask: Option<&[bool]>) -> Vec<f64> {
        let x = pooled_stats(months, mask);
        softmax(&self.logits_from_pooled(&x))
    }

    pub fn class_probs(&self, series: &FeatureSeries) -> Result<Vec<f64>> {
        check_predictable(series)?;
        Ok(self.class_probs_masked(&series.months, None))
    }
}

fn check_predictable(series: &FeatureSeries) -> Result<()> {
    if series.is_empty() {
        return Err(Error::EmptyProject);
    }
    if series.form() == Form::Raw {
        return Err(Error::RawFormInput);
    }
    Ok(())
}

/// Probability of graduation (class 0) for a normalized series.
pub fn predict(model: &TrainedModel, series: &FeatureSeries) -> Result<f64> {
    Ok(model.class_probs(series)?[0])
}

/// Forecast at every month t using only months 0..=t.
pub fn monthly_forecast_series(model: &TrainedModel, series: &FeatureSeries) -> Result<Vec<f64>> {
    check_predictable(series)?;
    Ok((0..series.len())
        .map(|t| model.class_probs_masked(&series.months[..=t], None)[0])
        .collect())
}

/// Focal loss of one sample: −α_t (1−p)^γ ln p, with p floored at 1e-12.
pub fn focal_loss(p: f64, alpha_t: f64, gamma: f64) -> f64 {
    let p = p.max(1e-12);
    -alpha_t * (1.0 - p).powf(gamma) * p.ln()
}

/// Mean focal loss over a batch of true-class probabilities.
pub fn batch_focal_loss(probs_true: &[f64], alphas_true: &[f64], gamma: f64) -> f64 {
    assert_eq!(probs_true.len(), alphas_true.len());
    if probs_true.is_empty() {
        return 0.0;
    }
    let sum: f64 = probs_true
        .iter()
        .zip(alphas_true)
        .map(|(p, a)| focal_loss(*p, *a, gamma))
        .sum();
    sum / probs_true.len() as f64
}

/// d(focal loss)/d(logit j) for one sample = g · (p_j − [j == true]),
/// where g = α_t [(1−p_t)^γ − γ p_t (1−p_t)^{γ−1} ln p_t].
///
/// With γ = 0 this collapses to the weighted cross-entropy gradient
/// α_t (p_j − δ_tj). Probabilities are clamped to [1e-12, 1−1e-12] so the
/// (γ−1) power stays finite near p_t = 1.
pub fn focal_logit_gradient(probs: &[f64], true_class: usize, alpha_t: f64, gamma: f64) -> Vec<f64> {
    let pt = probs[true_class].clamp(1e-12, 1.0 - 1e-12);
    let g = if gamma == 0.0 {
        alpha_t
    } else {
        let q = 1.0 - pt;
        alpha_t * (q.powf(gamma) - gamma * pt * q.powf(gamma - 1.0) * pt.ln())
    };
    probs
        .iter()
        .enumerate()
        .map(|(j, pj)| g * (pj - if j == true_class { 1.0 } else { 0.0 }))
        .collect()
}

const CHECKPOINT_FORMAT: &str = "sustain-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

/// Serialize a checkpoint: versioned, self-describing JSON.
pub fn checkpoint_to_json(model: &TrainedModel) -> Result<String> {
    model.validate()?;
    let doc = CheckpointDoc {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn checkpoint_from_json(text: &str) -> Result<TrainedModel> {
    let doc: CheckpointDoc =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if doc.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", doc.format)));
    }
    if doc.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {} (tool reads {})",
            doc.version, CHECKPOINT_VERSION
        )));
    }
    doc.model.validate()?;
    Ok(doc.model)
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let text = checkpoint_to_json(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_json(&text)
}
