use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::identity::{BotLabel, BotLabelKind, IdentityMap};
use crate::month::YearMonth;
use crate::trace::{EventKind, TraceEvent};

/// A directed reply interaction aggregated within one month: `responder`
/// answered `origin` `weight` times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyEdge {
    pub project_id: String,
    pub month: YearMonth,
    pub origin: String,
    pub responder: String,
    pub weight: u64,
}

/// Walk-back rule on one thread's author sequence: message i replies to the
/// nearest earlier message by a different author. Returns (origin index,
/// responder index) pairs.
fn walk_back_pairs<S: AsRef<str>>(authors: &[S]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 1..authors.len() {
        let me = authors[i].as_ref();
        if let Some(j) = (0..i).rev().find(|&j| authors[j].as_ref() != me) {
            pairs.push((j, i));
        }
    }
    pairs
}

/// Infer (origin, responder) interactions for one thread of canonical,
/// bot-filtered authors ordered by (timestamp, message_ordinal).
pub fn infer_reply_edges(authors: &[String]) -> Vec<(String, String)> {
    walk_back_pairs(authors)
        .into_iter()
        .map(|(j, i)| (authors[j].clone(), authors[i].clone()))
        .collect()
}

/// Run reply inference over every thread in the log and aggregate the
/// interactions into monthly weighted edges. A reply lands in the month of
/// the responding message. Bot-authored messages are removed before the
/// walk-back so bots neither send nor receive replies.
pub fn aggregate_reply_edges(
    project_id: &str,
    log: &[TraceEvent],
    ids: &IdentityMap,
    bot_labels: &[BotLabel],
) -> Vec<ReplyEdge> {
    let bots: BTreeSet<&str> = bot_labels
        .iter()
        .filter(|l| l.label == BotLabelKind::Bot)
        .map(|l| l.author_raw.as_str())
        .collect();

    // (author, month) per message, grouped by thread, in (timestamp,
    // ordinal) order. The log is already time-sorted; ordinal breaks ties.
    let mut threads: BTreeMap<&str, Vec<(u64, String, YearMonth)>> = BTreeMap::new();
    for ev in log {
        if ev.kind != EventKind::ThreadMessage || bots.contains(ev.author_raw.as_str()) {
            continue;
        }
        threads.entry(ev.thread_id.as_deref().unwrap()).or_default().push((
            ev.message_ordinal.unwrap(),
            ids.canonical(&ev.author_raw).to_string(),
            YearMonth::of(ev.timestamp),
        ));
    }

    let mut weights: BTreeMap<(YearMonth, String, String), u64> = BTreeMap::new();
    for posts in threads.values_mut() {
        posts.sort_by_key(|(ordinal, _, _)| *ordinal);
        let authors: Vec<&str> = posts.iter().map(|(_, a, _)| a.as_str()).collect();
        for (j, i) in walk_back_pairs(&authors) {
            let key = (posts[i].2, authors[j].to_string(), authors[i].to_string());
            *weights.entry(key).or_insert(0) += 1;
        }
    }

    weights
        .into_iter()
        .map(|((month, origin, responder), weight)| ReplyEdge {
            project_id: project_id.to_string(),
            month,
            origin,
            responder,
            weight,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceEvent;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn authors(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn responder_replies_to_previous_distinct_author() {
        let edges = infer_reply_edges(&authors(&["u1", "u2", "u1"]));
        assert_eq!(
            edges,
            vec![
                ("u1".to_string(), "u2".to_string()),
                ("u2".to_string(), "u1".to_string())
            ]
        );
    }

    #[test]
    fn self_replies_are_skipped_entirely() {
        assert!(infer_reply_edges(&authors(&["u1", "u1"])).is_empty());
        assert!(infer_reply_edges(&authors(&["u1"])).is_empty());
        assert!(infer_reply_edges(&[]).is_empty());
    }

    #[test]
    fn consecutive_self_posts_walk_back_to_distinct_author() {
        let edges = infer_reply_edges(&authors(&["u1", "u1", "u2"]));
        assert_eq!(edges, vec![("u1".to_string(), "u2".to_string())]);
    }

    proptest! {
        #[test]
        fn never_self_edges_and_at_most_n_minus_one(
            seq in proptest::collection::vec(0..5u8, 0..40)
        ) {
            let names: Vec<String> = seq.iter().map(|i| format!("u{i}")).collect();
            let edges = infer_reply_edges(&names);
            prop_assert!(edges.len() <= names.len().saturating_sub(1));
            for (origin, responder) in edges {
                prop_assert_ne!(origin, responder);
            }
        }
    }

    fn message(author: &str, thread: &str, ordinal: u64, day: u32, month: u32) -> TraceEvent {
        TraceEvent {
            project_id: "p".into(),
            kind: EventKind::ThreadMessage,
            timestamp: chrono::Utc
                .with_ymd_and_hms(2020, month, day, 12, 0, 0)
                .unwrap(),
            author_raw: author.into(),
            file_path: None,
            thread_id: Some(thread.into()),
            message_ordinal: Some(ordinal),
        }
    }

    fn identity_for(names: &[&str]) -> IdentityMap {
        IdentityMap {
            project_id: "p".into(),
            alias_to_canonical: names.iter().map(|n| (n.to_string(), n.to_string())).collect(),
            canonical_email: BTreeMap::new(),
        }
    }

    #[test]
    fn aggregation_counts_replies_per_month_pair() {
        let log = vec![
            message("a", "t1", 0, 1, 1),
            message("b", "t1", 1, 2, 1),
            message("a", "t1", 2, 3, 1),
            message("b", "t1", 3, 4, 2), // next month: a→b again
            message("b", "t2", 0, 5, 1),
            message("a", "t2", 1, 6, 1),
        ];
        let ids = identity_for(&["a", "b"]);
        let edges = aggregate_reply_edges("p", &log, &ids, &[]);
        let jan = YearMonth::new(2020, 1);
        let feb = YearMonth::new(2020, 2);
        assert_eq!(
            edges,
            vec![
                ReplyEdge {
                    project_id: "p".into(),
                    month: jan,
                    origin: "a".into(),
                    responder: "b".into(),
                    weight: 1
                },
                ReplyEdge {
                    project_id: "p".into(),
                    month: jan,
                    origin: "b".into(),
                    responder: "a".into(),
                    weight: 2
                },
                ReplyEdge {
                    project_id: "p".into(),
                    month: feb,
                    origin: "a".into(),
                    responder: "b".into(),
                    weight: 1
                },
            ]
        );
    }

    #[test]
    fn bot_messages_never_touch_reply_edges() {
        let log = vec![
            message("a", "t", 0, 1, 1),
            message("helper-bot", "t", 1, 2, 1),
            message("b", "t", 2, 3, 1),
        ];
        let ids = identity_for(&["a", "b", "helper-bot"]);
        let bots = vec![BotLabel {
            author_raw: "helper-bot".into(),
            label: BotLabelKind::Bot,
            evidence: vec!["generic_term:bot".into()],
        }];
        let edges = aggregate_reply_edges("p", &log, &ids, &bots);
        // With the bot removed, b replies directly to a.
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].origin, "a");
        assert_eq!(edges[0].responder, "b");
    }

    #[test]
    fn aliases_collapse_before_inference() {
        // "a" and "a jr" are the same person; their exchange is self-talk.
        let log = vec![
            message("a", "t", 0, 1, 1),
            message("a jr", "t", 1, 2, 1),
            message("b", "t", 2, 3, 1),
        ];
        let mut ids = identity_for(&["a", "b"]);
        ids.alias_to_canonical.insert("a jr".into(), "a".into());
        let edges = aggregate_reply_edges("p", &log, &ids, &[]);
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].origin, "a");
        assert_eq!(edges[0].responder, "b");
        assert_eq!(edges[0].weight, 1);
    }
}
