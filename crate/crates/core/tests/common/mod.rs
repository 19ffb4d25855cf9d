#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::collections::VecDeque;
use std::path::Path;
use std::process::{Command, Output};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sustain_core::features::FEATURE_COUNT;
use sustain_core::month::YearMonth;
use sustain_core::networks::{MonthlyNetworks, SocialGraph, TechGraph};

/// Brute-force evaluation of the 13 monthly features, computed over index
/// matrices instead of name maps so it shares no code with the production
/// path. Definitions:
///   - social density counts directed edges over n(n-1)
///   - clustering averages 2L/k(k-1) over all nodes, degree < 2 scoring 0,
///     on the undirected projection
///   - components are weak (direction-blind)
///   - weighted mean degree is the per-node mean of incident in+out weight
///   - overlaps count nodes active in both this month and the previous one
///   - technical density counts co-edit pairs over the dev-pair count
///   - per-file / per-dev rates divide the edit-edge count
pub fn oracle_features(cur: &MonthlyNetworks, prev: Option<&MonthlyNetworks>) -> [f64; FEATURE_COUNT] {
    let s_nodes: Vec<&String> = cur.social.nodes.iter().collect();
    let ns = s_nodes.len();
    let sidx: BTreeMap<&str, usize> = s_nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut directed = vec![vec![false; ns]; ns];
    let mut weight = vec![vec![0.0f64; ns]; ns];
    for ((a, b), w) in &cur.social.edges {
        let (i, j) = (sidx[a.as_str()], sidx[b.as_str()]);
        directed[i][j] = true;
        weight[i][j] += *w as f64;
    }
    let mut undirected = vec![vec![false; ns]; ns];
    for i in 0..ns {
        for j in 0..ns {
            if directed[i][j] {
                undirected[i][j] = true;
                undirected[j][i] = true;
            }
        }
    }

    let s_num_nodes = ns as f64;

    let mut clustering_sum = 0.0;
    for v in 0..ns {
        let neighbors: Vec<usize> = (0..ns).filter(|&u| undirected[v][u]).collect();
        let k = neighbors.len();
        if k < 2 {
            continue;
        }
        let mut closed = 0usize;
        for a in 0..k {
            for b in a + 1..k {
                if undirected[neighbors[a]][neighbors[b]] {
                    closed += 1;
                }
            }
        }
        clustering_sum += 2.0 * closed as f64 / (k * (k - 1)) as f64;
    }
    let s_avg_clustering_coef = if ns == 0 { 0.0 } else { clustering_sum / ns as f64 };

    let directed_count: usize = directed.iter().flatten().filter(|x| **x).count();
    let s_graph_density = if ns >= 2 {
        directed_count as f64 / (ns * (ns - 1)) as f64
    } else {
        0.0
    };

    let mut seen = vec![false; ns];
    let mut components = 0usize;
    for start in 0..ns {
        if seen[start] {
            continue;
        }
        components += 1;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for u in 0..ns {
                if undirected[v][u] && !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    let s_num_component = components as f64;

    let s_weighted_mean_degree = if ns == 0 {
        0.0
    } else {
        let per_node: f64 = (0..ns)
            .map(|v| (0..ns).map(|u| weight[v][u] + weight[u][v]).sum::<f64>())
            .sum();
        per_node / ns as f64
    };

    let overlap = |a: &BTreeSet<String>, b: Option<&BTreeSet<String>>| -> f64 {
        match b {
            Some(b) => a.iter().filter(|x| b.contains(*x)).count() as f64,
            None => 0.0,
        }
    };
    let s_net_overlap = overlap(&cur.social.nodes, prev.map(|p| &p.social.nodes));

    let st_num_dev = cur
        .social
        .nodes
        .iter()
        .filter(|n| cur.tech.dev_nodes.contains(*n))
        .count() as f64;

    let d_nodes: Vec<&String> = cur.tech.dev_nodes.iter().collect();
    let nd = d_nodes.len();
    let didx: BTreeMap<&str, usize> = d_nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut co = vec![vec![false; nd]; nd];
    for (a, b) in cur.tech.coedit_edges.keys() {
        let (i, j) = (didx[a.as_str()], didx[b.as_str()]);
        co[i][j] = true;
        co[j][i] = true;
    }
    let co_count: usize = co.iter().flatten().filter(|x| **x).count();
    let t_graph_density = if nd >= 2 {
        co_count as f64 / (nd * (nd - 1)) as f64
    } else {
        0.0
    };

    let t_net_overlap = overlap(&cur.tech.dev_nodes, prev.map(|p| &p.tech.dev_nodes));
    let t_num_dev_nodes = nd as f64;
    let t_num_file_nodes = cur.tech.file_nodes.len() as f64;
    let edits = cur.tech.edit_edges.len() as f64;
    let t_num_dev_per_file = if cur.tech.file_nodes.is_empty() {
        0.0
    } else {
        edits / t_num_file_nodes
    };
    let t_num_file_per_dev = if nd == 0 { 0.0 } else { edits / t_num_dev_nodes };

    [
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
    ]
}

/// One random month drawn from shared dev/file pools: at most 8 devs,
/// 8 files, and 20 edges per graph, isolated social nodes included.
pub fn random_month(rng: &mut ChaCha8Rng, index: usize) -> MonthlyNetworks {
    let dev_pool: Vec<String> = (0..8).map(|i| format!("d{i}")).collect();
    let file_pool: Vec<String> = (0..8).map(|i| format!("f{i}")).collect();

    let mut social = SocialGraph::default();
    let n_social = rng.gen_range(0..=8usize);
    while social.nodes.len() < n_social {
        social.nodes.insert(dev_pool[rng.gen_range(0..8)].clone());
    }
    if social.nodes.len() >= 2 {
        let members: Vec<&String> = social.nodes.iter().collect();
        for _ in 0..rng.gen_range(0..=20usize) {
            let a = members[rng.gen_range(0..members.len())];
            let b = members[rng.gen_range(0..members.len())];
            if a != b {
                *social.edges.entry((a.clone(), b.clone())).or_insert(0) += rng.gen_range(1..=5u64);
            }
        }
    }

    let mut tech = TechGraph::default();
    for _ in 0..rng.gen_range(0..=20usize) {
        let dev = dev_pool[rng.gen_range(0..8)].clone();
        let file = file_pool[rng.gen_range(0..8)].clone();
        tech.dev_nodes.insert(dev.clone());
        tech.file_nodes.insert(file.clone());
        tech.edit_edges.insert((dev, file));
    }
    let devs: Vec<&String> = tech.dev_nodes.iter().collect();
    for i in 0..devs.len() {
        for j in i + 1..devs.len() {
            let shared = tech
                .file_nodes
                .iter()
                .filter(|f| {
                    tech.edit_edges.contains(&(devs[i].clone(), (*f).clone()))
                        && tech.edit_edges.contains(&(devs[j].clone(), (*f).clone()))
                })
                .count() as u64;
            if shared > 0 {
                tech.coedit_edges.insert((devs[i].clone(), devs[j].clone()), shared);
            }
        }
    }

    let active_union = social.nodes.union(&tech.dev_nodes).cloned().collect();
    MonthlyNetworks {
        project_id: "rand".into(),
        month_index: index,
        month: YearMonth::new(2020, 1 + (index as u32 % 12)),
        social,
        tech,
        active_union,
    }
}

/// Run the pipeline binary with the given arguments and working inputs.
pub fn sustain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sustain"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn fixture_path(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}
