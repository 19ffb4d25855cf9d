use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{format_significant, FeatureSeries, Foundation, Label, FEATURE_COUNT, FEATURE_NAMES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundationCount {
    pub foundation: String,
    pub graduated: u64,
    pub retired: u64,
    pub unlabeled: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    /// Lower-middle rank, so always an observed length.
    pub median: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub projects: usize,
    pub per_foundation: Vec<FoundationCount>,
    pub lengths: LengthStats,
}

pub fn summarize_corpus(corpus: &[FeatureSeries]) -> Result<CorpusSummary> {
    if corpus.is_empty() {
        return Err(Error::Invalid("empty corpus".into()));
    }
    let mut rows: Vec<FoundationCount> = Foundation::ALL
        .iter()
        .map(|f| FoundationCount {
            foundation: f.to_string(),
            graduated: 0,
            retired: 0,
            unlabeled: 0,
            total: 0,
        })
        .collect();
    rows.push(FoundationCount {
        foundation: "unassigned".into(),
        graduated: 0,
        retired: 0,
        unlabeled: 0,
        total: 0,
    });
    for s in corpus {
        let row = match s.foundation {
            Some(f) => &mut rows[Foundation::ALL.iter().position(|x| *x == f).unwrap()],
            None => rows.last_mut().unwrap(),
        };
        match s.label {
            Some(Label::Graduated) => row.graduated += 1,
            Some(Label::Retired) => row.retired += 1,
            None => row.unlabeled += 1,
        }
        row.total += 1;
    }

    let mut lengths: Vec<usize> = corpus.iter().map(FeatureSeries::len).collect();
    lengths.sort_unstable();
    let mean = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
    Ok(CorpusSummary {
        projects: corpus.len(),
        per_foundation: rows,
        lengths: LengthStats {
            min: lengths[0],
            max: *lengths.last().unwrap(),
            mean,
            median: lengths[(lengths.len() - 1) / 2],
        },
    })
}

pub fn write_summary_csv(summary: &CorpusSummary) -> String {
    let mut out = String::from("foundation,graduated,retired,unlabeled,total\n");
    for r in &summary.per_foundation {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.foundation, r.graduated, r.retired, r.unlabeled, r.total
        );
    }
    let _ = writeln!(
        out,
        "all,{},{},{},{}",
        summary.per_foundation.iter().map(|r| r.graduated).sum::<u64>(),
        summary.per_foundation.iter().map(|r| r.retired).sum::<u64>(),
        summary.per_foundation.iter().map(|r| r.unlabeled).sum::<u64>(),
        summary.projects
    );
    out
}

/// Pairwise Pearson correlation over every project-month row. A constant
/// feature correlates 0 with everything; the diagonal is 1 by definition.
pub fn correlation_matrix(corpus: &[FeatureSeries]) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<&[f64; FEATURE_COUNT]> = corpus
        .iter()
        .flat_map(|s| s.months.iter().map(|m| &m.values))
        .collect();
    if rows.len() < 2 {
        return Err(Error::Invalid(
            "correlation needs at least two project-months".into(),
        ));
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; FEATURE_COUNT];
    for r in &rows {
        for (i, v) in r.iter().enumerate() {
            mean[i] += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut cov = vec![vec![0.0; FEATURE_COUNT]; FEATURE_COUNT];
    for r in &rows {
        for i in 0..FEATURE_COUNT {
            let di = r[i] - mean[i];
            for j in i..FEATURE_COUNT {
                cov[i][j] += di * (r[j] - mean[j]);
            }
        }
    }
    let sd: Vec<f64> = (0..FEATURE_COUNT).map(|i| (cov[i][i] / n).sqrt()).collect();
    let mut corr = vec![vec![0.0; FEATURE_COUNT]; FEATURE_COUNT];
    for i in 0..FEATURE_COUNT {
        corr[i][i] = 1.0;
        for j in (i + 1)..FEATURE_COUNT {
            let r = if sd[i] == 0.0 || sd[j] == 0.0 {
                0.0
            } else {
                (cov[i][j] / n) / (sd[i] * sd[j])
            };
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }
    Ok(corr)
}

pub fn write_correlation_csv(corr: &[Vec<f64>]) -> String {
    let mut out = String::from("feature");
    for name in FEATURE_NAMES {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        let _ = write!(out, "{name}");
        for v in &corr[i] {
            let _ = write!(out, ",{}", format_significant(*v, 10));
        }
        out.push('\n');
    }
    out
}
