use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::features::{FeatureSeries, Form, Label};
use crate::model::{
    batch_focal_loss, focal_logit_gradient, pooled_stats, softmax, ModelConfig, ModelKind,
    TrainedModel, POOLED_DIM,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub f1: f64,
    pub epochs_run: usize,
    pub trace: Vec<f64>,
}

/// Everything the training protocol did: one record per restart, the
/// resolved class weights, and which run the returned model came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub classes: Vec<String>,
    pub alpha: Vec<f64>,
    pub class_counts: Vec<u64>,
    pub runs: Vec<RunRecord>,
    pub retained: usize,
}

/// Inverse-class-frequency weights, normalized to mean 1 over the classes
/// that actually occur. Absent classes get weight 1; they contribute no
/// loss terms.
pub fn derive_alpha(counts: &[u64]) -> Vec<f64> {
    let inv: Vec<f64> = counts
        .iter()
        .map(|c| if *c == 0 { 0.0 } else { 1.0 / *c as f64 })
        .collect();
    let present = inv.iter().filter(|x| **x > 0.0).count();
    let sum: f64 = inv.iter().sum();
    if present == 0 || sum == 0.0 {
        return vec![1.0; counts.len()];
    }
    inv.iter()
        .map(|x| if *x == 0.0 { 1.0 } else { present as f64 * x / sum })
        .collect()
}

/// Index of the run whose F1 is the rank-(n−1)/2 element after sorting by
/// (F1, run index) — the retained "median run".
pub fn median_run_index(f1s: &[f64]) -> usize {
    assert!(!f1s.is_empty());
    let mut order: Vec<usize> = (0..f1s.len()).collect();
    order.sort_by(|a, b| {
        f1s[*a]
            .partial_cmp(&f1s[*b])
            .expect("scores must be comparable")
            .then(a.cmp(b))
    });
    order[(f1s.len() - 1) / 2]
}

fn clip_global_norm(gw: &mut [Vec<f64>], gb: &mut [f64], cap: f64) -> f64 {
    let sq: f64 = gw
        .iter()
        .flatten()
        .chain(gb.iter())
        .map(|g| g * g)
        .sum();
    let norm = sq.sqrt();
    if norm > cap {
        let scale = cap / norm;
        for row in gw.iter_mut() {
            for g in row.iter_mut() {
                *g *= scale;
            }
        }
        for g in gb.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

const IMPROVEMENT_EPSILON: f64 = 1e-6;

struct GdOutcome {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    trace: Vec<f64>,
}

fn gradient_descent(
    xs: &[[f64; POOLED_DIM]],
    ys: &[usize],
    k: usize,
    alpha: &[f64],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<GdOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..POOLED_DIM).map(|_| rng.gen_range(-0.05..0.05)).collect())
        .collect();
    let mut bias: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.05..0.05)).collect();

    let n = xs.len() as f64;
    let mut lr = cfg.lr;
    let mut trace = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut best = (weights.clone(), bias.clone());
    let mut stop_best = f64::INFINITY;
    let mut stop_counter = 0usize;
    let mut plateau_best = f64::INFINITY;
    let mut plateau_counter = 0usize;

    for _epoch in 0..cfg.max_epochs {
        let mut gw = vec![vec![0.0; POOLED_DIM]; k];
        let mut gb = vec![0.0; k];
        let mut probs_true = Vec::with_capacity(xs.len());
        let mut alphas_true = Vec::with_capacity(xs.len());
        for (x, y) in xs.iter().zip(ys) {
            let logits: Vec<f64> = weights
                .iter()
                .zip(&bias)
                .map(|(row, b)| row.iter().zip(x.iter()).map(|(w, xi)| w * xi).sum::<f64>() + b)
                .collect();
            let probs = softmax(&logits);
            probs_true.push(probs[*y]);
            alphas_true.push(alpha[*y]);
            let gz = focal_logit_gradient(&probs, *y, alpha[*y], cfg.gamma);
            for c in 0..k {
                for d in 0..POOLED_DIM {
                    gw[c][d] += gz[c] * x[d];
                }
                gb[c] += gz[c];
            }
        }
        let loss = batch_focal_loss(&probs_true, &alphas_true, cfg.gamma);
        if !loss.is_finite() {
            return Err(Error::Invalid("training loss became non-finite".into()));
        }
        trace.push(loss);

        if loss < best_loss {
            best_loss = loss;
            best = (weights.clone(), bias.clone());
        }
        if loss < stop_best - IMPROVEMENT_EPSILON {
            stop_best = loss;
            stop_counter = 0;
        } else {
            stop_counter += 1;
            if stop_counter >= cfg.early_stop_patience {
                break;
            }
        }
        if loss < plateau_best - IMPROVEMENT_EPSILON {
            plateau_best = loss;
            plateau_counter = 0;
        } else {
            plateau_counter += 1;
            if plateau_counter >= cfg.plateau_patience {
                lr *= cfg.plateau_factor;
                plateau_counter = 0;
            }
        }

        for (c, row) in gw.iter_mut().enumerate() {
            for g in row.iter_mut() {
                *g /= n;
            }
            gb[c] /= n;
        }
        clip_global_norm(&mut gw, &mut gb, cfg.clip_norm);
        for c in 0..k {
            for d in 0..POOLED_DIM {
                weights[c][d] -= lr * gw[c][d];
            }
            bias[c] -= lr * gb[c];
        }
    }

    let (weights, bias) = best;
    Ok(GdOutcome { weights, bias, trace })
}

/// Shared multi-class training core: pooled inputs, focal loss, full-batch
/// gradient descent with norm clipping and a plateau schedule, repeated
/// over `cfg.runs` seeded restarts; the median-F1 run is retained.
pub fn train_multiclass(
    xs: &[[f64; POOLED_DIM]],
    ys: &[usize],
    class_names: &[String],
    cfg: &ModelConfig,
) -> Result<(TrainedModel, TrainingSummary)> {
    cfg.validate()?;
    let k = class_names.len();
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    let mut counts = vec![0u64; k];
    for y in ys {
        if *y >= k {
            return Err(Error::Invalid(format!("class index {y} out of range")));
        }
        counts[*y] += 1;
    }
    let alpha = match &cfg.alpha {
        Some(a) => {
            if a.len() != k {
                return Err(Error::Config(format!(
                    "alpha has {} weights for {} classes",
                    a.len(),
                    k
                )));
            }
            a.clone()
        }
        None => derive_alpha(&counts),
    };

    let mut seed_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let run_seeds: Vec<u64> = (0..cfg.runs).map(|_| seed_rng.gen()).collect();

    let mut records = Vec::with_capacity(cfg.runs);
    let mut outcomes = Vec::with_capacity(cfg.runs);
    for (run_index, seed) in run_seeds.iter().enumerate() {
        let out = gradient_descent(xs, ys, k, &alpha, cfg, *seed)?;
        let preds: Vec<usize> = xs
            .iter()
            .map(|x| {
                let logits: Vec<f64> = out
                    .weights
                    .iter()
                    .zip(&out.bias)
                    .map(|(row, b)| {
                        row.iter().zip(x.iter()).map(|(w, xi)| w * xi).sum::<f64>() + b
                    })
                    .collect();
                argmax(&logits)
            })
            .collect();
        let f1 = evaluate(&preds, ys, class_names)?.f1;
        records.push(RunRecord {
            run_index,
            seed: *seed,
            f1,
            epochs_run: out.trace.len(),
            trace: out.trace.clone(),
        });
        outcomes.push(out);
    }

    let retained = median_run_index(&records.iter().map(|r| r.f1).collect::<Vec<f64>>());
    let chosen = &outcomes[retained];
    let model = TrainedModel {
        kind: ModelKind::Reference,
        classes: class_names.to_vec(),
        config: cfg.clone(),
        weights: chosen.weights.clone(),
        bias: chosen.bias.clone(),
        training_trace: chosen.trace.clone(),
    };
    model.validate()?;
    let summary = TrainingSummary {
        classes: class_names.to_vec(),
        alpha,
        class_counts: counts,
        runs: records,
        retained,
    };
    Ok((model, summary))
}

/// First index of the largest value; ties keep the earlier class.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

pub const FORECAST_CLASSES: [&str; 2] = ["graduated", "retired"];

fn forecast_class_names() -> Vec<String> {
    FORECAST_CLASSES.iter().map(|s| s.to_string()).collect()
}

/// Pool every series and map labels to class indices, rejecting raw-form,
/// empty, or unlabeled input.
pub fn prepare_labeled(dataset: &[FeatureSeries]) -> Result<(Vec<[f64; POOLED_DIM]>, Vec<usize>)> {
    let mut xs = Vec::with_capacity(dataset.len());
    let mut ys = Vec::with_capacity(dataset.len());
    for s in dataset {
        if s.is_empty() {
            return Err(Error::EmptyProject);
        }
        if s.form() == Form::Raw {
            return Err(Error::RawFormInput);
        }
        let label = s
            .label
            .ok_or_else(|| Error::Invalid(format!("project {} has no outcome label", s.project_id)))?;
        xs.push(pooled_stats(&s.months, None));
        ys.push(match label {
            Label::Graduated => 0,
            Label::Retired => 1,
        });
    }
    Ok((xs, ys))
}

/// Train the two-class sustainability forecaster.
pub fn train(dataset: &[FeatureSeries], cfg: &ModelConfig) -> Result<(TrainedModel, TrainingSummary)> {
    let (xs, ys) = prepare_labeled(dataset)?;
    let classes = forecast_class_names();
    let distinct: std::collections::BTreeSet<usize> = ys.iter().copied().collect();
    if distinct.len() < 2 {
        let only = ys.first().map(|y| classes[*y].clone()).unwrap_or_default();
        return Err(Error::DegenerateLabels(format!(
            "every project is labeled {only}; two classes are required"
        )));
    }
    train_multiclass(&xs, &ys, &classes, cfg)
}
