use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Classification quality on one prediction set: a confusion matrix plus
/// per-class and support-weighted precision/recall/F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    /// confusion[t][p] counts samples of true class t predicted as p.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassScores>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Score discrete predictions against labels. Classes index into
/// `class_names`; undefined ratios (empty denominators) score 0.
/// The summary row weights each class by its true support.
pub fn evaluate(predictions: &[usize], labels: &[usize], class_names: &[String]) -> Result<EvalReport> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Invalid("nothing to evaluate".into()));
    }
    let k = class_names.len();
    if let Some(bad) = predictions.iter().chain(labels).find(|c| **c >= k) {
        return Err(Error::Invalid(format!("class index {bad} out of range for {k} classes")));
    }

    let mut confusion = vec![vec![0u64; k]; k];
    for (p, t) in predictions.iter().zip(labels) {
        confusion[*t][*p] += 1;
    }

    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = (0..k).map(|t| confusion[t][c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassScores {
            class: class_names[c].clone(),
            precision,
            recall,
            f1,
            support,
        });
    }

    let total: u64 = labels.len() as u64;
    let weighted = |f: fn(&ClassScores) -> f64| {
        per_class
            .iter()
            .map(|s| f(s) * s.support as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(EvalReport {
        classes: class_names.to_vec(),
        confusion,
        precision: weighted(|s| s.precision),
        recall: weighted(|s| s.recall),
        f1: weighted(|s| s.f1),
        support: total,
        per_class,
    })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// CSV with one row per class plus a support-weighted summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for s in &self.per_class {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.class,
                fmt(s.precision),
                fmt(s.recall),
                fmt(s.f1),
                s.support
            );
        }
        let _ = writeln!(
            out,
            "weighted,{},{},{},{}",
            fmt(self.precision),
            fmt(self.recall),
            fmt(self.f1),
            self.support
        );
        out
    }

    /// Aligned text table for terminals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for s in &self.per_class {
            let _ = writeln!(
                out,
                "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                s.class, s.precision, s.recall, s.f1, s.support
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            "weighted", self.precision, self.recall, self.f1, self.support
        );
        out
    }
}

fn fmt(x: f64) -> String {
    crate::features::format_significant(x, 10)
}

/// One cross-validation split: indices into the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded stratified k-fold assignment. Indices are grouped by class,
/// each group is shuffled with the seed, then dealt round-robin so fold
/// class proportions stay within one sample of the dataset's. Returns the
/// folds plus warnings for classes with fewer members than folds.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<(Vec<Fold>, Vec<String>)> {
    if k < 2 {
        return Err(Error::BadFoldCount(k));
    }
    if labels.len() < k {
        return Err(Error::Invalid(format!(
            "{} samples cannot fill {} folds",
            labels.len(),
            k
        )));
    }
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, l) in labels.iter().enumerate() {
        by_class[*l].push(i);
    }

    let mut warnings = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            warnings.push(format!(
                "class {class} has {} members, fewer than {k} folds; some folds lack it",
                members.len()
            ));
        }
        members.shuffle(&mut rng);
        for (i, idx) in members.into_iter().enumerate() {
            assignment[i % k].push(idx);
        }
    }

    let folds = (0..k)
        .map(|f| {
            let mut test = assignment[f].clone();
            test.sort_unstable();
            let mut train: Vec<usize> = assignment
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            train.sort_unstable();
            Fold { train, test }
        })
        .collect();
    Ok((folds, warnings))
}

/// Median by sorted rank (n−1)/2 — the lower middle for even counts, so
/// the result is always an observed score.
pub fn median_score(scores: &[f64]) -> f64 {
    assert!(!scores.is_empty());
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores must be comparable"));
    sorted[(sorted.len() - 1) / 2]
}
