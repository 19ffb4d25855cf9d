use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::networks::MonthlyNetworks;

pub const FEATURE_COUNT: usize = 13;

/// Canonical feature order for vectors, CSV columns, and model inputs.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "s_num_nodes",
    "s_avg_clustering_coef",
    "s_graph_density",
    "s_num_component",
    "s_weighted_mean_degree",
    "s_net_overlap",
    "st_num_dev",
    "t_graph_density",
    "t_net_overlap",
    "t_num_dev_nodes",
    "t_num_dev_per_file",
    "t_num_file_nodes",
    "t_num_file_per_dev",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Raw,
    Normalized,
}

impl std::fmt::Display for Form {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Form::Raw => "raw",
            Form::Normalized => "normalized",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Graduated,
    Retired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Foundation {
    ASFI,
    EFI,
    OFI,
    GH,
}

impl Foundation {
    pub const ALL: [Foundation; 4] = [
        Foundation::ASFI,
        Foundation::EFI,
        Foundation::OFI,
        Foundation::GH,
    ];
}

impl std::fmt::Display for Foundation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Foundation::ASFI => "ASFI",
            Foundation::EFI => "EFI",
            Foundation::OFI => "OFI",
            Foundation::GH => "GH",
        })
    }
}

impl std::str::FromStr for Foundation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ASFI" => Ok(Foundation::ASFI),
            "EFI" => Ok(Foundation::EFI),
            "OFI" => Ok(Foundation::OFI),
            "GH" => Ok(Foundation::GH),
            other => Err(format!("unknown foundation {other:?}")),
        }
    }
}

/// One month's 13 features, in FEATURE_NAMES order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    pub form: Form,
}

impl FeatureVector {
    pub fn zero(form: Form) -> Self {
        FeatureVector {
            values: [0.0; FEATURE_COUNT],
            form,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSeries {
    pub project_id: String,
    pub months: Vec<FeatureVector>,
    pub label: Option<Label>,
    pub foundation: Option<Foundation>,
}

impl FeatureSeries {
    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    pub fn form(&self) -> Form {
        self.months.first().map(|v| v.form).unwrap_or(Form::Raw)
    }
}

/// Compute the 13 raw features for one month; `previous` feeds the two
/// overlap features and is absent at the project's first month.
pub fn compute_features(
    current: &MonthlyNetworks,
    previous: Option<&MonthlyNetworks>,
) -> FeatureVector {
    let social = &current.social;
    let tech = &current.tech;

    let s_n = social.nodes.len() as f64;
    let undirected = undirected_projection(social);

    let s_num_nodes = s_n;
    let s_avg_clustering_coef = average_clustering(&undirected);
    let s_graph_density = if social.nodes.len() >= 2 {
        social.edges.len() as f64 / (s_n * (s_n - 1.0))
    } else {
        0.0
    };
    let s_num_component = component_count(&undirected) as f64;
    let total_weight: u64 = social.edges.values().sum();
    let s_weighted_mean_degree = if social.nodes.is_empty() {
        0.0
    } else {
        2.0 * total_weight as f64 / s_n
    };
    let s_net_overlap = previous
        .map(|p| social.nodes.intersection(&p.social.nodes).count() as f64)
        .unwrap_or(0.0);

    let st_num_dev = social.nodes.intersection(&tech.dev_nodes).count() as f64;

    let t_n = tech.dev_nodes.len() as f64;
    let t_graph_density = if tech.dev_nodes.len() >= 2 {
        2.0 * tech.coedit_edges.len() as f64 / (t_n * (t_n - 1.0))
    } else {
        0.0
    };
    let t_net_overlap = previous
        .map(|p| tech.dev_nodes.intersection(&p.tech.dev_nodes).count() as f64)
        .unwrap_or(0.0);
    let t_num_dev_nodes = t_n;
    let t_num_file_nodes = tech.file_nodes.len() as f64;
    let edits = tech.edit_edges.len() as f64;
    let t_num_dev_per_file = if tech.file_nodes.is_empty() {
        0.0
    } else {
        edits / t_num_file_nodes
    };
    let t_num_file_per_dev = if tech.dev_nodes.is_empty() {
        0.0
    } else {
        edits / t_n
    };

    FeatureVector {
        values: [
            s_num_nodes,
            s_avg_clustering_coef,
            s_graph_density,
            s_num_component,
            s_weighted_mean_degree,
            s_net_overlap,
            st_num_dev,
            t_graph_density,
            t_net_overlap,
            t_num_dev_nodes,
            t_num_dev_per_file,
            t_num_file_nodes,
            t_num_file_per_dev,
        ],
        form: Form::Raw,
    }
}

/// Undirected unweighted projection of the social graph as adjacency sets.
fn undirected_projection(
    social: &crate::networks::SocialGraph,
) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = social
        .nodes
        .iter()
        .map(|n| (n.as_str(), BTreeSet::new()))
        .collect();
    for (src, dst) in social.edges.keys() {
        adj.get_mut(src.as_str()).unwrap().insert(dst);
        adj.get_mut(dst.as_str()).unwrap().insert(src);
    }
    adj
}

/// Mean local clustering coefficient; nodes of degree < 2 contribute 0.
fn average_clustering(adj: &BTreeMap<&str, BTreeSet<&str>>) -> f64 {
    if adj.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for neighbors in adj.values() {
        let k = neighbors.len();
        if k < 2 {
            continue;
        }
        let mut links = 0usize;
        let ns: Vec<&&str> = neighbors.iter().collect();
        for i in 0..ns.len() {
            for j in i + 1..ns.len() {
                if adj[*ns[i]].contains(*ns[j]) {
                    links += 1;
                }
            }
        }
        sum += 2.0 * links as f64 / (k * (k - 1)) as f64;
    }
    sum / adj.len() as f64
}

/// Weakly connected component count of the projection.
fn component_count(adj: &BTreeMap<&str, BTreeSet<&str>>) -> usize {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut components = 0;
    for &start in adj.keys() {
        if seen.contains(start) {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            if !seen.insert(v) {
                continue;
            }
            for &w in &adj[v] {
                if !seen.contains(w) {
                    stack.push(w);
                }
            }
        }
    }
    components
}

/// Scale-normalize one month: every feature except the two developer counts
/// (s_num_nodes, t_num_dev_nodes) is divided by d = |D_p^(t)|; a month with
/// no active developers normalizes to all zeros.
pub fn normalize_features(v: &FeatureVector, d: usize) -> FeatureVector {
    debug_assert_eq!(v.form, Form::Raw);
    let mut out = FeatureVector::zero(Form::Normalized);
    if d == 0 {
        return out;
    }
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        out.values[i] = if *name == "s_num_nodes" || *name == "t_num_dev_nodes" {
            v.values[i]
        } else {
            v.values[i] / d as f64
        };
    }
    out
}

pub fn assemble_series(
    project_id: &str,
    vectors: Vec<FeatureVector>,
    label: Option<Label>,
    foundation: Option<Foundation>,
) -> Result<FeatureSeries> {
    if vectors.is_empty() {
        return Err(Error::EmptyProject);
    }
    let form = vectors[0].form;
    if vectors.iter().any(|v| v.form != form) {
        return Err(Error::MixedForms(project_id.to_string()));
    }
    Ok(FeatureSeries {
        project_id: project_id.to_string(),
        months: vectors,
        label,
        foundation,
    })
}

/// Render with at most `digits` significant digits, trailing zeros trimmed,
/// never in scientific notation. Used everywhere floats reach a report.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let neg = mantissa.starts_with('-');
    let digit_run: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();

    let point = 1 + exp;
    let mut s = String::new();
    if point <= 0 {
        s.push_str("0.");
        for _ in 0..(-point) {
            s.push('0');
        }
        s.push_str(&digit_run);
    } else if point as usize >= digit_run.len() {
        s.push_str(&digit_run);
        for _ in 0..(point as usize - digit_run.len()) {
            s.push('0');
        }
    } else {
        s.push_str(&digit_run[..point as usize]);
        s.push('.');
        s.push_str(&digit_run[point as usize..]);
    }
    if s.contains('.') {
        s = s.trim_end_matches('0').trim_end_matches('.').to_string();
    }
    if neg {
        format!("-{s}")
    } else {
        s
    }
}

/// Feature CSV: one row per (project, month), 13 named columns plus form,
/// label, foundation; values at 10 significant digits.
pub fn write_feature_csv<W: Write>(series: &[FeatureSeries], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["project_id".to_string(), "month_index".to_string()];
    header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    header.extend(["form".into(), "label".into(), "foundation".into()]);
    out.write_record(&header)?;

    for s in series {
        for (t, v) in s.months.iter().enumerate() {
            let mut row = vec![s.project_id.clone(), t.to_string()];
            row.extend(v.values.iter().map(|x| format_significant(*x, 10)));
            row.push(v.form.to_string());
            row.push(match s.label {
                Some(Label::Graduated) => "graduated".into(),
                Some(Label::Retired) => "retired".into(),
                None => String::new(),
            });
            row.push(s.foundation.map(|f| f.to_string()).unwrap_or_default());
            out.write_record(&row)?;
        }
    }
    out.flush().map_err(Error::Stream)?;
    Ok(())
}

/// Read a feature CSV back into per-project series, preserving row order
/// within each project.
pub fn read_feature_csv<R: Read>(r: R) -> Result<Vec<FeatureSeries>> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers()?.clone();
    let idx = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Invalid(format!("feature csv missing column {name}")))
    };
    let project_col = idx("project_id")?;
    let form_col = idx("form")?;
    let label_col = idx("label")?;
    let foundation_col = idx("foundation")?;
    let feature_cols: Vec<usize> = FEATURE_NAMES
        .iter()
        .map(|n| idx(n))
        .collect::<Result<_>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut by_project: BTreeMap<String, FeatureSeries> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let project = field(project_col).to_string();
        let mut values = [0.0; FEATURE_COUNT];
        for (k, &c) in feature_cols.iter().enumerate() {
            values[k] = field(c)
                .parse()
                .map_err(|_| Error::Invalid(format!("bad float {:?} in feature csv", field(c))))?;
        }
        let form = match field(form_col) {
            "raw" => Form::Raw,
            "normalized" => Form::Normalized,
            other => return Err(Error::Invalid(format!("bad form {other:?}"))),
        };
        let label = match field(label_col) {
            "" => None,
            "graduated" => Some(Label::Graduated),
            "retired" => Some(Label::Retired),
            other => return Err(Error::Invalid(format!("bad label {other:?}"))),
        };
        let foundation = match field(foundation_col) {
            "" => None,
            other => Some(other.parse().map_err(Error::Invalid)?),
        };
        if !by_project.contains_key(&project) {
            order.push(project.clone());
        }
        let entry = by_project.entry(project.clone()).or_insert(FeatureSeries {
            project_id: project,
            months: Vec::new(),
            label,
            foundation,
        });
        entry.months.push(FeatureVector { values, form });
    }
    Ok(order.into_iter().map(|p| by_project.remove(&p).unwrap()).collect())
}
