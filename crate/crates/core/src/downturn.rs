use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{format_significant, FeatureSeries, FEATURE_NAMES};

/// Default number of months on each side of the inflection.
pub const DEFAULT_WINDOW: usize = 6;

/// Month index with the steepest single-month forecast drop; earliest
/// wins ties. A forecast that never falls has no inflection.
pub fn detect_inflection(forecast: &[f64]) -> Result<usize> {
    if forecast.len() < 2 {
        return Err(Error::NoInflection);
    }
    let mut best_t = 0usize;
    let mut best_drop = f64::NEG_INFINITY;
    for t in 1..forecast.len() {
        let drop = forecast[t - 1] - forecast[t];
        if drop > best_drop {
            best_drop = drop;
            best_t = t;
        }
    }
    if best_drop <= 0.0 {
        return Err(Error::NoInflection);
    }
    Ok(best_t)
}

/// Month ranges flanking an inflection: up to `w` months strictly before
/// it and up to `w + 1` months from it onward, clipped to the series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownturnWindow {
    pub inflection: usize,
    pub w: usize,
    /// Half-open [start, inflection).
    pub pre: (usize, usize),
    /// Inclusive [inflection, end].
    pub post: (usize, usize),
}

pub fn make_window(series_len: usize, inflection: usize, w: usize) -> Result<DownturnWindow> {
    if w == 0 {
        return Err(Error::Invalid("window must cover at least one month".into()));
    }
    if inflection == 0 {
        return Err(Error::Invalid(
            "inflection at the first month leaves no pre window".into(),
        ));
    }
    if inflection >= series_len {
        return Err(Error::EmptyPostWindow);
    }
    let pre_start = inflection.saturating_sub(w);
    let post_end = (inflection + w).min(series_len - 1);
    Ok(DownturnWindow {
        inflection,
        w,
        pre: (pre_start, inflection),
        post: (inflection, post_end),
    })
}

/// Signed deviation per feature: the post-window value farthest from the
/// pre-window mean, sign preserved, earliest month on ties. None marks a
/// feature that is identically zero on both sides.
pub fn downturn_deviations(
    series: &FeatureSeries,
    window: &DownturnWindow,
) -> Result<BTreeMap<String, Option<f64>>> {
    let (pre_start, pre_end) = window.pre;
    let (post_start, post_end) = window.post;
    if pre_end <= pre_start {
        return Err(Error::Invalid("empty pre window".into()));
    }
    if post_end >= series.len() {
        return Err(Error::EmptyPostWindow);
    }

    let mut out = BTreeMap::new();
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        let pre: Vec<f64> = (pre_start..pre_end)
            .map(|t| series.months[t].values[i])
            .collect();
        let post: Vec<f64> = (post_start..=post_end)
            .map(|t| series.months[t].values[i])
            .collect();
        if pre.iter().all(|v| *v == 0.0) && post.iter().all(|v| *v == 0.0) {
            out.insert(name.to_string(), None);
            continue;
        }
        let baseline = pre.iter().sum::<f64>() / pre.len() as f64;
        let mut best = 0.0f64;
        for v in &post {
            let d = v - baseline;
            if d.abs() > best.abs() {
                best = d;
            }
        }
        out.insert(name.to_string(), Some(best));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownturnEntry {
    pub project_id: String,
    pub inflection: usize,
    pub deviations: BTreeMap<String, Option<f64>>,
}

/// Analyze one project: inflection from its monthly forecasts, then
/// feature deviations around it.
pub fn analyze_project(
    series: &FeatureSeries,
    forecast: &[f64],
    w: usize,
) -> Result<DownturnEntry> {
    if forecast.len() != series.len() {
        return Err(Error::LengthMismatch {
            left: forecast.len(),
            right: series.len(),
        });
    }
    let inflection = detect_inflection(forecast)?;
    let window = make_window(series.len(), inflection, w)?;
    Ok(DownturnEntry {
        project_id: series.project_id.clone(),
        inflection,
        deviations: downturn_deviations(series, &window)?,
    })
}

/// CSV matrix: one row per feature, one column per project, N/A for
/// features that were flat zero around the inflection.
pub fn write_downturn_csv(entries: &[DownturnEntry]) -> String {
    let mut out = String::from("feature");
    for e in entries {
        let _ = write!(out, ",{}", e.project_id);
    }
    out.push('\n');
    let _ = write!(out, "inflection_month");
    for e in entries {
        let _ = write!(out, ",{}", e.inflection);
    }
    out.push('\n');
    for name in FEATURE_NAMES {
        let _ = write!(out, "{name}");
        for e in entries {
            match e.deviations.get(name).copied().flatten() {
                Some(v) => {
                    let _ = write!(out, ",{}", format_significant(v, 10));
                }
                None => out.push_str(",N/A"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureVector, Form, FEATURE_COUNT};

    fn series_from_rows(rows: &[[f64; FEATURE_COUNT]]) -> FeatureSeries {
        FeatureSeries {
            project_id: "p".into(),
            months: rows
                .iter()
                .map(|values| FeatureVector {
                    values: *values,
                    form: Form::Normalized,
                })
                .collect(),
            label: None,
            foundation: None,
        }
    }

    #[test]
    fn steepest_drop_wins_and_ties_go_earliest() {
        assert_eq!(detect_inflection(&[0.9, 0.8, 0.4, 0.45, 0.3]).unwrap(), 2);
        // Equal drops of 0.2 at t=1 and t=3.
        assert_eq!(detect_inflection(&[0.9, 0.7, 0.7, 0.5]).unwrap(), 1);
    }

    #[test]
    fn flat_or_rising_forecasts_have_no_inflection() {
        assert!(matches!(
            detect_inflection(&[0.5, 0.5, 0.5]),
            Err(Error::NoInflection)
        ));
        assert!(matches!(
            detect_inflection(&[0.2, 0.4, 0.9]),
            Err(Error::NoInflection)
        ));
        assert!(matches!(detect_inflection(&[0.7]), Err(Error::NoInflection)));
    }

    #[test]
    fn windows_clip_to_series_bounds() {
        let w = make_window(24, 10, 6).unwrap();
        assert_eq!(w.pre, (4, 10));
        assert_eq!(w.post, (10, 16));
        // Early inflection: pre clips to the start.
        let w = make_window(24, 2, 6).unwrap();
        assert_eq!(w.pre, (0, 2));
        assert_eq!(w.post, (2, 8));
        // Late inflection: post clips to the last month.
        let w = make_window(12, 10, 6).unwrap();
        assert_eq!(w.post, (10, 11));
        assert!(matches!(make_window(12, 12, 6), Err(Error::EmptyPostWindow)));
        assert!(make_window(12, 0, 6).is_err());
    }

    #[test]
    fn deviation_is_signed_max_distance_from_pre_mean() {
        // Feature 0: pre [2, 4] mean 3; post [5, 1, 3.5] → diffs +2, −2, +0.5.
        // |+2| == |−2|: the earlier post month wins, so +2.
        let mut rows = [[0.0; FEATURE_COUNT]; 5];
        rows[0][0] = 2.0;
        rows[1][0] = 4.0;
        rows[2][0] = 5.0;
        rows[3][0] = 1.0;
        rows[4][0] = 3.5;
        // Feature 1 collapses after the inflection.
        rows[0][1] = 0.8;
        rows[1][1] = 0.6;
        rows[2][1] = 0.1;
        rows[3][1] = 0.2;
        rows[4][1] = 0.3;
        let s = series_from_rows(&rows);
        let window = make_window(5, 2, 6).unwrap();
        let d = downturn_deviations(&s, &window).unwrap();
        assert_eq!(d[FEATURE_NAMES[0]], Some(2.0));
        assert!((d[FEATURE_NAMES[1]].unwrap() - (0.1 - 0.7)).abs() < 1e-12);
        // Features untouched on both sides are N/A, not 0.
        assert_eq!(d[FEATURE_NAMES[5]], None);
    }

    #[test]
    fn analyze_ties_forecast_to_series_and_reports() {
        let mut rows = [[0.1; FEATURE_COUNT]; 5];
        rows[3][2] = 0.9;
        let s = series_from_rows(&rows);
        let entry = analyze_project(&s, &[0.9, 0.8, 0.4, 0.45, 0.3], 6).unwrap();
        assert_eq!(entry.inflection, 2);
        assert!(entry.deviations[FEATURE_NAMES[2]].unwrap() > 0.0);

        assert!(matches!(
            analyze_project(&s, &[0.9, 0.1], 6),
            Err(Error::LengthMismatch { .. })
        ));
        let flat = [0.5; 5];
        assert!(matches!(
            analyze_project(&s, &flat, 6),
            Err(Error::NoInflection)
        ));
    }

    #[test]
    fn csv_is_feature_rows_by_project_columns() {
        let mut rows = [[0.2; FEATURE_COUNT]; 5];
        rows[4][0] = 0.9;
        let a = analyze_project(&series_from_rows(&rows), &[0.9, 0.8, 0.4, 0.45, 0.3], 6).unwrap();
        let mut b = a.clone();
        b.project_id = "q".into();
        b.deviations.insert(FEATURE_NAMES[1].to_string(), None);
        let csv = write_downturn_csv(&[a, b]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "feature,p,q");
        assert_eq!(lines[1], "inflection_month,2,2");
        assert_eq!(lines.len(), 2 + FEATURE_COUNT);
        let clustering_row = lines
            .iter()
            .find(|l| l.starts_with("s_avg_clustering_coef,"))
            .unwrap();
        assert!(clustering_row.ends_with(",N/A"));
    }
}
