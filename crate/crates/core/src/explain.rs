use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{format_significant, FeatureSeries, FeatureVector, Form, FEATURE_COUNT, FEATURE_NAMES};
use crate::model::{pooled_stats, ModelKind, TrainedModel, POOLED_DIM};

/// How many column shuffles the black-box attribution averages over.
pub const PERMUTATION_ROUNDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionBasis {
    /// Exact decomposition of the graduated logit against a baseline.
    ExactLinear,
    /// Expected drop in graduated probability when one feature's monthly
    /// column is shuffled.
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub basis: AttributionBasis,
    /// Signed score per feature name; positive pushes toward graduation.
    pub values: BTreeMap<String, f64>,
}

fn all_zero_baseline(len: usize) -> Vec<FeatureVector> {
    vec![FeatureVector::zero(Form::Normalized); len]
}

fn check_series(series: &FeatureSeries) -> Result<()> {
    if series.is_empty() {
        return Err(Error::EmptyProject);
    }
    if series.form() == Form::Raw {
        return Err(Error::RawFormInput);
    }
    Ok(())
}

/// Per-feature contribution of `series` to the model's graduated output.
///
/// Reference models decompose exactly: each feature's share of the
/// graduated logit through its two pooled statistics, relative to the
/// baseline (all-zero by default). Anything else is treated as a black
/// box and scored by permutation.
pub fn attribute(
    model: &TrainedModel,
    series: &FeatureSeries,
    baseline: Option<&FeatureSeries>,
) -> Result<Attribution> {
    check_series(series)?;
    model.validate()?;
    match model.kind {
        ModelKind::Reference => exact_linear(model, series, baseline),
        ModelKind::Plugin => {
            let seed = model.config.seed;
            permutation_attribution(
                |months| model.class_probs_masked(months, None)[0],
                series,
                seed,
            )
        }
    }
}

fn exact_linear(
    model: &TrainedModel,
    series: &FeatureSeries,
    baseline: Option<&FeatureSeries>,
) -> Result<Attribution> {
    if model.weights[0].len() != POOLED_DIM {
        return Err(Error::FeatureCountMismatch {
            expected: POOLED_DIM,
            got: model.weights[0].len(),
        });
    }
    let x = pooled_stats(&series.months, None);
    let b = match baseline {
        Some(s) => {
            check_series(s)?;
            pooled_stats(&s.months, None)
        }
        None => pooled_stats(&all_zero_baseline(series.len()), None),
    };
    let w = &model.weights[0];
    let mut values = BTreeMap::new();
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        let mean_part = w[i] * (x[i] - b[i]);
        let max_part = w[FEATURE_COUNT + i] * (x[FEATURE_COUNT + i] - b[FEATURE_COUNT + i]);
        values.insert(name.to_string(), mean_part + max_part);
    }
    Ok(Attribution {
        basis: AttributionBasis::ExactLinear,
        values,
    })
}

/// Black-box attribution: for each feature, shuffle its column across
/// months and record the drop in graduated probability, averaged over
/// `PERMUTATION_ROUNDS` seeded shuffles.
pub fn permutation_attribution<F>(
    predict_graduated: F,
    series: &FeatureSeries,
    seed: u64,
) -> Result<Attribution>
where
    F: Fn(&[FeatureVector]) -> f64,
{
    check_series(series)?;
    let p0 = predict_graduated(&series.months);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = BTreeMap::new();
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        let mut total = 0.0;
        for _ in 0..PERMUTATION_ROUNDS {
            let mut column: Vec<f64> = series.months.iter().map(|m| m.values[i]).collect();
            column.shuffle(&mut rng);
            let mut shuffled = series.months.clone();
            for (m, v) in shuffled.iter_mut().zip(&column) {
                m.values[i] = *v;
            }
            total += p0 - predict_graduated(&shuffled);
        }
        values.insert(name.to_string(), total / PERMUTATION_ROUNDS as f64);
    }
    Ok(Attribution {
        basis: AttributionBasis::Permutation,
        values,
    })
}

/// Difference of graduated logits between a series and its baseline; the
/// exact-linear scores sum to this.
pub fn graduated_logit_gap(
    model: &TrainedModel,
    series: &FeatureSeries,
    baseline: Option<&FeatureSeries>,
) -> Result<f64> {
    check_series(series)?;
    let x = pooled_stats(&series.months, None);
    let b = match baseline {
        Some(s) => pooled_stats(&s.months, None),
        None => pooled_stats(&all_zero_baseline(series.len()), None),
    };
    let zx = model.logits_from_pooled(&x)[0];
    let zb = model.logits_from_pooled(&b)[0];
    Ok(zx - zb)
}

/// Rescale so positive scores sum to +100 and negative scores to −100.
/// Zeros stay zero; a side with no mass is left untouched, which also
/// makes the map idempotent.
pub fn normalize_attributions(values: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let pos: f64 = values.values().filter(|v| **v > 0.0).sum();
    let neg: f64 = values.values().filter(|v| **v < 0.0).map(|v| -v).sum();
    values
        .iter()
        .map(|(k, v)| {
            let scaled = if *v > 0.0 && pos > 0.0 {
                100.0 * v / pos
            } else if *v < 0.0 && neg > 0.0 {
                100.0 * v / neg
            } else {
                0.0
            };
            (k.clone(), scaled)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub scope: String,
    pub basis: AttributionBasis,
    /// Number of projects aggregated (1 for a single-project report).
    pub population: usize,
    /// Normalized scores: positives sum to +100, negatives to −100.
    pub values: BTreeMap<String, f64>,
}

/// Corpus-level view: raw per-project scores are averaged feature-wise
/// first and normalized once at the end. The conventional population is
/// the graduated projects, so an empty input is an error.
pub fn aggregate_global(per_project: &[Attribution], scope: &str) -> Result<AttributionReport> {
    if per_project.is_empty() {
        return Err(Error::NoGraduatedProjects);
    }
    let basis = per_project[0].basis;
    if per_project.iter().any(|a| a.basis != basis) {
        return Err(Error::Invalid("cannot aggregate across attribution bases".into()));
    }
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for a in per_project {
        for (k, v) in &a.values {
            *sums.entry(k.clone()).or_insert(0.0) += v;
        }
    }
    let n = per_project.len() as f64;
    let means: BTreeMap<String, f64> = sums.into_iter().map(|(k, v)| (k, v / n)).collect();
    Ok(AttributionReport {
        scope: scope.into(),
        basis,
        population: per_project.len(),
        values: normalize_attributions(&means),
    })
}

pub fn single_report(attribution: &Attribution, scope: &str) -> AttributionReport {
    AttributionReport {
        scope: scope.into(),
        basis: attribution.basis,
        population: 1,
        values: normalize_attributions(&attribution.values),
    }
}

pub fn write_attribution_csv(reports: &[AttributionReport]) -> String {
    let mut out = String::from("scope,feature,value,basis\n");
    for r in reports {
        let basis = match r.basis {
            AttributionBasis::ExactLinear => "exact_linear",
            AttributionBasis::Permutation => "permutation",
        };
        for (feature, value) in &r.values {
            let _ = writeln!(out, "{},{},{},{}", r.scope, feature, format_significant(*value, 10), basis);
        }
    }
    out
}
