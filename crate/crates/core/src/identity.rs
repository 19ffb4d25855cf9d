use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TraceEvent;

/// Lexicon driving bot-account classification.
#[derive(Debug, Clone, Deserialize)]
pub struct BotLexicon {
    #[serde(default)]
    pub generic_terms: BTreeSet<String>,
    #[serde(default)]
    pub known_bots: BTreeSet<String>,
    #[serde(default = "default_activity_threshold")]
    pub activity_threshold: f64,
}

fn default_activity_threshold() -> f64 {
    0.05
}

impl BotLexicon {
    pub fn new<G, K>(generic_terms: G, known_bots: K, activity_threshold: f64) -> Result<Self>
    where
        G: IntoIterator<Item = String>,
        K: IntoIterator<Item = String>,
    {
        let lex = BotLexicon {
            generic_terms: generic_terms.into_iter().map(|s| s.to_lowercase()).collect(),
            known_bots: known_bots.into_iter().map(|s| s.to_lowercase()).collect(),
            activity_threshold,
        };
        lex.validate()?;
        Ok(lex)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lex: BotLexicon =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        lex.generic_terms = lex.generic_terms.iter().map(|s| s.to_lowercase()).collect();
        lex.known_bots = lex.known_bots.iter().map(|s| s.to_lowercase()).collect();
        lex.validate()?;
        Ok(lex)
    }

    fn validate(&self) -> Result<()> {
        if !(self.activity_threshold > 0.0 && self.activity_threshold < 1.0) {
            return Err(Error::Config(format!(
                "activity_threshold must be in (0,1), got {}",
                self.activity_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotLabelKind {
    Bot,
    Human,
    NeedsReview,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotLabel {
    pub author_raw: String,
    pub label: BotLabelKind,
    /// Identifiers of the rules that fired for this author.
    pub evidence: Vec<String>,
}

/// Label every distinct author in the log.
///
/// A name containing a generic bot term becomes a candidate. A candidate is a
/// bot only when it both shares a substring of length ≥ 4 with a known bot
/// name and contributes less than the activity threshold of the project's
/// events; candidates failing either check are queued for review. Everyone
/// else is human.
pub fn classify_bots(log: &[TraceEvent], lex: &BotLexicon) -> Vec<BotLabel> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for ev in log {
        *counts.entry(ev.author_raw.as_str()).or_insert(0) += 1;
    }
    let total = log.len() as f64;

    let mut labels = Vec::with_capacity(counts.len());
    for (author, count) in counts {
        let lowered = author.to_lowercase();
        let generic_hit = lex.generic_terms.iter().find(|t| lowered.contains(*t));
        let Some(term) = generic_hit else {
            labels.push(BotLabel {
                author_raw: author.to_string(),
                label: BotLabelKind::Human,
                evidence: Vec::new(),
            });
            continue;
        };

        let mut evidence = vec![format!("generic_term:{term}")];
        let known_hit = lex
            .known_bots
            .iter()
            .find(|b| shares_long_substring(&lowered, b));
        if let Some(bot) = known_hit {
            evidence.push(format!("known_bot:{bot}"));
        }
        let low_activity = (count as f64) / total < lex.activity_threshold;
        if low_activity {
            evidence.push("low_activity".into());
        }

        let label = if known_hit.is_some() && low_activity {
            BotLabelKind::Bot
        } else {
            BotLabelKind::NeedsReview
        };
        labels.push(BotLabel {
            author_raw: author.to_string(),
            label,
            evidence,
        });
    }
    labels
}

/// True when the two lowercased names share any common substring of length
/// at least 4.
fn shares_long_substring(name: &str, other: &str) -> bool {
    let chars: Vec<char> = name.chars().collect();
    if chars.len() < 4 {
        return false;
    }
    chars.windows(4).any(|w| {
        let needle: String = w.iter().collect();
        other.contains(&needle)
    })
}

/// Bot-label report: CSV with author, label, and the rules that fired.
pub fn write_bot_report<W: Write>(labels: &[BotLabel], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["author_raw", "label", "evidence"])?;
    for l in labels {
        let kind = match l.label {
            BotLabelKind::Bot => "bot",
            BotLabelKind::Human => "human",
            BotLabelKind::NeedsReview => "needs_review",
        };
        out.write_record([l.author_raw.as_str(), kind, &l.evidence.join(";")])?;
    }
    out.flush().map_err(Error::Stream)?;
    Ok(())
}

/// Normalize a raw author string for similarity comparison: bracketed
/// segments dropped, email domains cut, separators collapsed to spaces,
/// punctuation and symbols removed, lowercased.
pub fn preprocess_name(raw: &str) -> String {
    let mut stripped = String::with_capacity(raw.len());
    let mut closer: Option<char> = None;
    for ch in raw.chars() {
        match closer {
            Some(c) => {
                if ch == c {
                    closer = None;
                }
            }
            None => match ch {
                '(' => closer = Some(')'),
                '[' => closer = Some(']'),
                '<' => closer = Some('>'),
                '{' => closer = Some('}'),
                _ => stripped.push(ch),
            },
        }
    }

    let mut cleaned = String::with_capacity(stripped.len());
    for token in stripped.split_whitespace() {
        let local = token.split('@').next().unwrap_or("");
        if !cleaned.is_empty() {
            cleaned.push(' ');
        }
        cleaned.push_str(local);
    }

    let mut out = String::with_capacity(cleaned.len());
    for ch in cleaned.chars() {
        if matches!(ch, '.' | '_' | '-') {
            out.push(' ');
        } else if ch.is_alphanumeric() || ch == ' ' {
            out.extend(ch.to_lowercase());
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Jaro–Winkler similarity with the standard prefix bonus (scale 0.1,
/// prefix capped at 4). Two empty strings score 0.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }

    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }

    let a_seq = a.iter().zip(&a_matched).filter(|(_, &m)| m).map(|(c, _)| *c);
    let b_seq: Vec<char> = b
        .iter()
        .zip(&b_matched)
        .filter(|(_, &m)| m)
        .map(|(c, _)| *c)
        .collect();
    let mismatched = a_seq.zip(&b_seq).filter(|(x, y)| x != *y).count();
    let transpositions = mismatched as f64 / 2.0;

    let m = matches as f64;
    let jaro = (m / a.len() as f64 + m / b.len() as f64 + (m - transpositions) / m) / 3.0;
    let prefix = a
        .iter()
        .zip(&b)
        .take(4)
        .take_while(|(x, y)| x == y)
        .count();
    jaro + prefix as f64 * 0.1 * (1.0 - jaro)
}

/// Knobs for alias clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityConfig {
    #[serde(default = "default_similarity_threshold")]
    pub similarity_threshold: f64,
    #[serde(default = "default_refinement_min_avg")]
    pub refinement_min_avg_similarity: f64,
    #[serde(default = "default_max_cluster_size")]
    pub max_cluster_size: usize,
}

fn default_similarity_threshold() -> f64 {
    0.85
}
fn default_refinement_min_avg() -> f64 {
    0.75
}
fn default_max_cluster_size() -> usize {
    8
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            similarity_threshold: default_similarity_threshold(),
            refinement_min_avg_similarity: default_refinement_min_avg(),
            max_cluster_size: default_max_cluster_size(),
        }
    }
}

impl IdentityConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.refinement_min_avg_similarity > 0.0
            && self.refinement_min_avg_similarity <= self.similarity_threshold
            && self.similarity_threshold < 1.0
            && self.max_cluster_size >= 1;
        if !ok {
            return Err(Error::Config(format!(
                "identity config requires 0 < refinement ({}) <= threshold ({}) < 1 and max_cluster_size >= 1",
                self.refinement_min_avg_similarity, self.similarity_threshold
            )));
        }
        Ok(())
    }
}

/// Reject pairs whose only common ground is an identical name segment while
/// the rest of the names score below 0.5 — shared first or last names alone
/// must not merge otherwise dissimilar people.
fn segment_validation_passes(a: &str, b: &str) -> bool {
    let seg_a: Vec<&str> = a.split_whitespace().collect();
    let mut remaining_b: Vec<Option<&str>> = b.split_whitespace().map(Some).collect();
    let mut rem_a: Vec<&str> = Vec::new();
    let mut shared = false;
    for s in seg_a {
        if let Some(slot) = remaining_b.iter_mut().find(|x| **x == Some(s)) {
            *slot = None;
            shared = true;
        } else {
            rem_a.push(s);
        }
    }
    if !shared {
        return true;
    }
    let rem_b: Vec<&str> = remaining_b.into_iter().flatten().collect();
    if rem_a.is_empty() && rem_b.is_empty() {
        return true;
    }
    jaro_winkler(&rem_a.join(" "), &rem_b.join(" ")) >= 0.5
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Cluster preprocessed names of one project into alias groups.
///
/// Pairs at or above the similarity threshold that pass segment validation
/// are unioned; the clustering is the transitive closure of accepted pairs.
/// Refinement then drops members whose mean similarity to the rest of their
/// cluster is below the floor, and dissolves oversized clusters entirely.
/// Output is independent of input order.
pub fn resolve_aliases(names: &[String], cfg: &IdentityConfig) -> Vec<Vec<String>> {
    let mut names: Vec<String> = names.to_vec();
    names.sort();
    names.dedup();
    let n = names.len();

    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let sim = jaro_winkler(&names[i], &names[j]);
            if sim >= cfg.similarity_threshold && segment_validation_passes(&names[i], &names[j]) {
                uf.union(i, j);
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }

    let mut clusters: Vec<Vec<String>> = Vec::new();
    for (_, members) in groups {
        if members.len() == 1 {
            clusters.push(vec![names[members[0]].clone()]);
            continue;
        }

        // Mean similarity of each member to the rest, decided before any
        // removal takes effect.
        let mut kept = Vec::new();
        for &i in &members {
            let mut sum = 0.0;
            for &j in &members {
                if i != j {
                    sum += jaro_winkler(&names[i], &names[j]);
                }
            }
            let mean = sum / (members.len() - 1) as f64;
            if mean < cfg.refinement_min_avg_similarity {
                clusters.push(vec![names[i].clone()]);
            } else {
                kept.push(i);
            }
        }

        if kept.len() > cfg.max_cluster_size {
            for i in kept {
                clusters.push(vec![names[i].clone()]);
            }
        } else if !kept.is_empty() {
            clusters.push(kept.iter().map(|&i| names[i].clone()).collect());
        }
    }

    clusters.sort();
    clusters
}

/// One raw author form inside an alias cluster.
#[derive(Debug, Clone)]
pub struct ClusterMember {
    pub raw: String,
    pub count: u64,
    /// (event sequence, email) observations attributed to this raw form.
    pub emails: Vec<(u64, String)>,
}

/// Pick the cluster's canonical display name and representative email.
///
/// Names are ranked: exactly-two-part names first, then capitalized forms,
/// then longer strings, with ascending lexicographic order as the final
/// tie-break. The email is the most frequent observation, earliest-seen on
/// ties.
pub fn canonical_name(cluster: &[ClusterMember]) -> (String, Option<String>) {
    assert!(!cluster.is_empty(), "canonical_name on empty cluster");

    let mut best: Option<&ClusterMember> = None;
    let mut best_key: Option<(bool, bool, usize)> = None;
    for member in cluster {
        let parts: Vec<&str> = member.raw.split_whitespace().collect();
        let two_part = parts.len() == 2;
        let capitalized = !parts.is_empty()
            && parts.iter().all(|p| {
                p.chars()
                    .next()
                    .map(|c| c.is_uppercase())
                    .unwrap_or(false)
            });
        let key = (two_part, capitalized, member.raw.chars().count());
        let better = match (&best, &best_key) {
            (None, _) => true,
            (Some(b), Some(bk)) => key > *bk || (key == *bk && member.raw < b.raw),
            _ => unreachable!(),
        };
        if better {
            best = Some(member);
            best_key = Some(key);
        }
    }
    let canonical = best.unwrap().raw.clone();

    let mut observations: Vec<(u64, &str)> = cluster
        .iter()
        .flat_map(|m| m.emails.iter().map(|(seq, e)| (*seq, e.as_str())))
        .collect();
    observations.sort();
    let mut tally: BTreeMap<&str, (u64, u64)> = BTreeMap::new(); // email -> (count, first seq)
    for (seq, email) in observations {
        let entry = tally.entry(email).or_insert((0, seq));
        entry.0 += 1;
    }
    let email = tally
        .into_iter()
        .max_by(|(_, (ca, fa)), (_, (cb, fb))| ca.cmp(cb).then(fb.cmp(fa)))
        .map(|(e, _)| e.to_string());

    (canonical, email)
}

/// Per-project mapping from every observed raw author string to its
/// canonical identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityMap {
    pub project_id: String,
    #[serde(rename = "aliases")]
    pub alias_to_canonical: BTreeMap<String, String>,
    #[serde(rename = "emails")]
    pub canonical_email: BTreeMap<String, String>,
}

impl IdentityMap {
    pub fn canonical<'a>(&'a self, raw: &'a str) -> &'a str {
        self.alias_to_canonical
            .get(raw)
            .map(String::as_str)
            .unwrap_or(raw)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Extract an email-shaped token from a raw author string.
fn extract_email(raw: &str) -> Option<String> {
    for token in raw.split_whitespace() {
        let token = token.trim_matches(|c: char| "<>()[]{}\",;:".contains(c));
        if let Some(at) = token.find('@') {
            let (local, domain) = token.split_at(at);
            if !local.is_empty() && domain.len() > 1 && !domain[1..].contains('@') {
                return Some(token.to_lowercase());
            }
        }
    }
    None
}

/// Run the full de-aliasing pipeline over one project's events.
///
/// Bot-labeled authors are excluded from clustering and map to themselves so
/// the mapping stays total; review-queued authors cluster like humans.
pub fn build_identity_map(
    project_id: &str,
    log: &[TraceEvent],
    bot_labels: &[BotLabel],
    cfg: &IdentityConfig,
) -> Result<IdentityMap> {
    cfg.validate()?;
    let bots: BTreeSet<&str> = bot_labels
        .iter()
        .filter(|l| l.label == BotLabelKind::Bot)
        .map(|l| l.author_raw.as_str())
        .collect();

    // Raw forms grouped under their preprocessed name, with email
    // observations in event order.
    let mut by_pre: BTreeMap<String, BTreeMap<String, ClusterMember>> = BTreeMap::new();
    for (seq, ev) in log.iter().enumerate() {
        if bots.contains(ev.author_raw.as_str()) {
            continue;
        }
        let pre = preprocess_name(&ev.author_raw);
        let member = by_pre
            .entry(pre)
            .or_default()
            .entry(ev.author_raw.clone())
            .or_insert_with(|| ClusterMember {
                raw: ev.author_raw.clone(),
                count: 0,
                emails: Vec::new(),
            });
        member.count += 1;
        if ev.kind == crate::trace::EventKind::CommitFileTouch {
            if let Some(email) = extract_email(&ev.author_raw) {
                member.emails.push((seq as u64, email));
            }
        }
    }

    let names: Vec<String> = by_pre.keys().cloned().collect();
    let clusters = resolve_aliases(&names, cfg);

    let mut map = IdentityMap {
        project_id: project_id.to_string(),
        alias_to_canonical: BTreeMap::new(),
        canonical_email: BTreeMap::new(),
    };
    for cluster in clusters {
        let members: Vec<ClusterMember> = cluster
            .iter()
            .flat_map(|pre| by_pre[pre].values().cloned())
            .collect();
        let (canonical, email) = canonical_name(&members);
        for m in &members {
            map.alias_to_canonical.insert(m.raw.clone(), canonical.clone());
        }
        if let Some(email) = email {
            map.canonical_email.insert(canonical.clone(), email);
        }
    }
    for bot in bots {
        map.alias_to_canonical.insert(bot.to_string(), bot.to_string());
    }
    Ok(map)
}
