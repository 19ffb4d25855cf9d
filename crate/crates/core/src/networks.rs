use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::identity::{BotLabel, BotLabelKind, IdentityMap};
use crate::month::{months_in_window, YearMonth};
use crate::reply::ReplyEdge;
use crate::trace::{EventKind, TraceEvent};

/// Directed weighted graph of who replied to whom within one month.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocialGraph {
    pub nodes: BTreeSet<String>,
    /// (origin, responder) → reply count.
    pub edges: BTreeMap<(String, String), u64>,
}

/// One month's developer–file activity: the bipartite edit edges plus their
/// one-mode co-edit projection onto developers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TechGraph {
    pub dev_nodes: BTreeSet<String>,
    pub file_nodes: BTreeSet<String>,
    pub edit_edges: BTreeSet<(String, String)>,
    /// Undirected (a, b) with a < b → number of distinct files both edited.
    pub coedit_edges: BTreeMap<(String, String), u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonthlyNetworks {
    pub project_id: String,
    /// 0-based month offset from the window start.
    pub month_index: usize,
    pub month: YearMonth,
    pub social: SocialGraph,
    pub tech: TechGraph,
    /// D_p^(t): developers active in either network this month.
    pub active_union: BTreeSet<String>,
}

/// Build one MonthlyNetworks per calendar month of the half-open window,
/// empty months included, so downstream series have a dense time axis.
///
/// Commit authors and reply endpoints are mapped to canonical identities;
/// anything labeled bot is dropped along with its incident edges. Events and
/// reply edges outside the window are ignored.
pub fn build_monthly_networks(
    project_id: &str,
    log: &[TraceEvent],
    reply_edges: &[ReplyEdge],
    ids: &IdentityMap,
    bot_labels: &[BotLabel],
    window: (DateTime<Utc>, DateTime<Utc>),
) -> Vec<MonthlyNetworks> {
    let months = months_in_window(window.0, window.1);
    if months.is_empty() {
        return Vec::new();
    }
    let index_of: BTreeMap<YearMonth, usize> =
        months.iter().enumerate().map(|(i, &m)| (m, i)).collect();

    let bots: BTreeSet<&str> = bot_labels
        .iter()
        .filter(|l| l.label == BotLabelKind::Bot)
        .map(|l| l.author_raw.as_str())
        .collect();

    let mut nets: Vec<MonthlyNetworks> = months
        .iter()
        .enumerate()
        .map(|(i, &m)| MonthlyNetworks {
            project_id: project_id.to_string(),
            month_index: i,
            month: m,
            social: SocialGraph::default(),
            tech: TechGraph::default(),
            active_union: BTreeSet::new(),
        })
        .collect();

    // Per-month (file → developers) for the co-edit projection.
    let mut file_devs: Vec<BTreeMap<&str, BTreeSet<String>>> = vec![BTreeMap::new(); nets.len()];

    for ev in log {
        if ev.timestamp < window.0 || ev.timestamp >= window.1 {
            continue;
        }
        if bots.contains(ev.author_raw.as_str()) {
            continue;
        }
        let Some(&idx) = index_of.get(&YearMonth::of(ev.timestamp)) else {
            continue;
        };
        let who = ids.canonical(&ev.author_raw).to_string();
        if bots.contains(who.as_str()) {
            continue;
        }
        match ev.kind {
            EventKind::ThreadMessage => {
                nets[idx].social.nodes.insert(who);
            }
            EventKind::CommitFileTouch => {
                let file = ev.file_path.as_deref().unwrap();
                let tech = &mut nets[idx].tech;
                tech.dev_nodes.insert(who.clone());
                tech.file_nodes.insert(file.to_string());
                tech.edit_edges.insert((who.clone(), file.to_string()));
                file_devs[idx].entry(file).or_default().insert(who);
            }
        }
    }

    for edge in reply_edges {
        let Some(&idx) = index_of.get(&edge.month) else {
            continue;
        };
        if edge.origin == edge.responder
            || edge.weight == 0
            || bots.contains(edge.origin.as_str())
            || bots.contains(edge.responder.as_str())
        {
            continue;
        }
        let social = &mut nets[idx].social;
        social.nodes.insert(edge.origin.clone());
        social.nodes.insert(edge.responder.clone());
        *social
            .edges
            .entry((edge.origin.clone(), edge.responder.clone()))
            .or_insert(0) += edge.weight;
    }

    for (idx, devs_by_file) in file_devs.into_iter().enumerate() {
        let coedit = &mut nets[idx].tech.coedit_edges;
        for devs in devs_by_file.values() {
            let devs: Vec<&String> = devs.iter().collect();
            for i in 0..devs.len() {
                for j in i + 1..devs.len() {
                    *coedit
                        .entry((devs[i].clone(), devs[j].clone()))
                        .or_insert(0) += 1;
                }
            }
        }
    }

    for net in &mut nets {
        net.active_union = net
            .social
            .nodes
            .union(&net.tech.dev_nodes)
            .cloned()
            .collect();
    }
    nets
}

/// Write the edge-list exports: one tab-separated file per (project, month,
/// graph kind) with a `src dst weight` header. Edit edges carry weight 1.
pub fn write_graph_exports(nets: &[MonthlyNetworks], dir: &Path) -> Result<()> {
    for net in nets {
        let base = format!("{}_{}", net.project_id, net.month);
        let mut social = String::from("src\tdst\tweight\n");
        for ((src, dst), w) in &net.social.edges {
            social.push_str(&format!("{src}\t{dst}\t{w}\n"));
        }
        let mut edit = String::from("src\tdst\tweight\n");
        for (dev, file) in &net.tech.edit_edges {
            edit.push_str(&format!("{dev}\t{file}\t1\n"));
        }
        let mut coedit = String::from("src\tdst\tweight\n");
        for ((a, b), w) in &net.tech.coedit_edges {
            coedit.push_str(&format!("{a}\t{b}\t{w}\n"));
        }
        for (kind, body) in [("social", social), ("edit", edit), ("coedit", coedit)] {
            let path = dir.join(format!("{base}_{kind}.tsv"));
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
