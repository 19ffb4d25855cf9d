mod common;

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::Path;

use common::{fixture_path, sustain};
use sustain_core::config::RunConfig;
use sustain_core::features::{compute_features, normalize_features, read_feature_csv, Label};
use sustain_core::identity::{build_identity_map, classify_bots, BotLexicon};
use sustain_core::manifest::read_stage_manifest;
use sustain_core::model::load_checkpoint;
use sustain_core::networks::build_monthly_networks;
use sustain_core::reply::aggregate_reply_edges;
use sustain_core::router::load_bundle;
use sustain_core::synth::four_cluster_corpus;
use sustain_core::trace::parse_trace_events;

fn run_ok(args: &[&str]) -> String {
    let out = sustain(args);
    assert!(
        out.status.success(),
        "sustain {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn full_pipeline_matches_golden_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.display().to_string();
    let cfg = fixture_path("sustain.toml");

    for stage in ["ingest", "identities", "networks", "features"] {
        run_ok(&["--config", &cfg, "--out", &out_s, stage]);
    }

    let produced = read(&out.join("features.csv"));
    let golden = read(Path::new(&fixture_path("golden_features.csv")));
    assert_eq!(produced, golden, "features.csv drifted from the golden copy");

    // Stage provenance: every manifest records the run seed and hashes its
    // inputs; networks lists three inputs (events + two identity artifacts).
    let m = read_stage_manifest(&out.join("networks.manifest.json")).unwrap();
    assert_eq!(m.stage, "networks");
    assert_eq!(m.seed, 42);
    assert_eq!(m.inputs.len(), 3);
    assert!(m.inputs.iter().all(|r| r.sha256.len() == 64));

    // A rerun into the same directory must reproduce every artifact
    // byte for byte, manifests included.
    let mut before: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for entry in walk(&out) {
        before.insert(entry.clone(), std::fs::read(&entry).unwrap());
    }
    for stage in ["ingest", "identities", "networks", "features"] {
        run_ok(&["--config", &cfg, "--out", &out_s, stage]);
    }
    for (path, bytes) in &before {
        assert_eq!(
            &std::fs::read(path).unwrap(),
            bytes,
            "{path} changed across identical reruns"
        );
    }

    // The rejects report names each malformed fixture line exactly once.
    let rejects = read(&out.join("rejects.jsonl"));
    assert_eq!(rejects.lines().count(), 4);
    assert!(rejects.contains("commit_file_touch requires file_path"));
    assert!(rejects.contains("duplicate message_ordinal"));

    // Filtered events: no markdown touches survive, bots do survive ingest
    // (exclusion happens at the network layer, not the trace layer).
    let events = read(&out.join("events.jsonl"));
    assert!(!events.contains("docs/guide.md"));
    assert!(events.contains("apottery-bot"));
}

fn walk(dir: &Path) -> Vec<String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            files.extend(walk(&path));
        } else {
            files.push(path.display().to_string());
        }
    }
    files
}

#[test]
fn feature_rows_match_independent_oracle_on_fixture_corpus() {
    // Rebuild each project's monthly graphs through the library, then check
    // every CSV row the pipeline wrote against the brute-force oracle.
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.display().to_string();
    let cfg_path = fixture_path("sustain.toml");
    for stage in ["ingest", "identities", "networks", "features"] {
        run_ok(&["--config", &cfg_path, "--out", &out_s, stage]);
    }

    let cfg = RunConfig::from_file(Path::new(&cfg_path)).unwrap();
    let base = Path::new(&cfg_path).parent().unwrap();
    let file = std::fs::File::open(base.join("traces.jsonl")).unwrap();
    let outcome = parse_trace_events(BufReader::new(file)).unwrap();
    let ext = sustain_core::trace::ExtensionList::from_file(&base.join("extensions.txt")).unwrap();
    let lex = BotLexicon::from_file(&base.join("bots.toml")).unwrap();
    let kept = sustain_core::trace::filter_source_files(outcome.events, &ext);

    let mut by_project: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for e in kept {
        by_project.entry(e.project_id.clone()).or_default().push(e);
    }

    let window = cfg.window.map(|w| (w.start, w.end)).unwrap();
    let raw_csv = read_feature_csv(std::fs::File::open(out.join("features_raw.csv")).unwrap()).unwrap();
    let norm_csv = read_feature_csv(std::fs::File::open(out.join("features.csv")).unwrap()).unwrap();

    let mut rows_checked = 0;
    for (pid, events) in &by_project {
        let bots = classify_bots(events, &lex);
        let ids = build_identity_map(pid, events, &bots, &cfg.identity).unwrap();
        let replies = aggregate_reply_edges(pid, events, &ids, &bots);
        let nets = build_monthly_networks(pid, events, &replies, &ids, &bots, window);
        assert_eq!(nets.len(), 24);

        let raw_series = raw_csv.iter().find(|s| &s.project_id == pid).unwrap();
        let norm_series = norm_csv.iter().find(|s| &s.project_id == pid).unwrap();
        for (t, net) in nets.iter().enumerate() {
            let prev = if t == 0 { None } else { Some(&nets[t - 1]) };
            let expected = common::oracle_features(net, prev);
            for (i, want) in expected.iter().enumerate() {
                let got = raw_series.months[t].values[i];
                assert!(
                    (got - want).abs() < 1e-9,
                    "{pid} month {t} feature {i}: csv {got} vs oracle {want}"
                );
            }
            // CSV re-read loses at most the 10-significant-digit rounding.
            let lib_norm = normalize_features(&compute_features(net, prev), net.active_union.len());
            for i in 0..13 {
                let got = norm_series.months[t].values[i];
                let want = lib_norm.values[i];
                let tol = 1e-8 * want.abs().max(1.0);
                assert!(
                    (got - want).abs() < tol,
                    "{pid} month {t} normalized feature {i}: {got} vs {want}"
                );
            }
            rows_checked += 1;
        }
    }
    assert_eq!(rows_checked, 72);
}

#[test]
fn model_stages_run_from_trained_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.display().to_string();
    let cfg = fixture_path("sustain.toml");
    for stage in ["ingest", "identities", "networks", "features", "train"] {
        run_ok(&["--config", &cfg, "--out", &out_s, stage]);
    }

    let model = load_checkpoint(&out.join("model.json")).unwrap();
    assert_eq!(model.classes, vec!["graduated", "retired"]);

    let model_arg = out.join("model.json").display().to_string();
    let stdout = run_ok(&["--config", &cfg, "--out", &out_s, "evaluate", "--model", &model_arg]);
    assert!(stdout.contains("weighted"));
    assert!(out.join("eval.csv").exists());

    run_ok(&["--config", &cfg, "--out", &out_s, "explain"]);
    let attribution = read(&out.join("attribution.csv"));
    assert!(attribution.starts_with("scope,feature,value,basis\n"));
    assert_eq!(attribution.lines().count(), 14);
    assert!(attribution.contains("exact_linear"));

    run_ok(&["--config", &cfg, "--out", &out_s, "downturn"]);
    let downturn = read(&out.join("downturn.csv"));
    assert!(downturn.starts_with("feature,"));
    assert!(out.join("forecasts.csv").exists());

    run_ok(&["--config", &cfg, "--out", &out_s, "report"]);
    let summary = read(&out.join("corpus_summary.csv"));
    assert!(summary.contains("ASFI,1"));
    assert!(summary.contains("unassigned,0"));
}

#[test]
fn stages_refuse_to_run_before_their_inputs_exist() {
    let tmp = tempfile::tempdir().unwrap();
    let out_s = tmp.path().join("out").display().to_string();
    let cfg = fixture_path("sustain.toml");

    let res = sustain(&["--config", &cfg, "--out", &out_s, "features"]);
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("missing upstream artifact for stage ingest"), "{stderr}");
    assert!(stderr.contains("run `sustain ingest` first"), "{stderr}");

    let res = sustain(&["--config", "/nonexistent/sustain.toml", "ingest"]);
    assert_eq!(res.status.code(), Some(2), "unreadable config is an i/o failure");

    let res = sustain(&["--config", &cfg, "--out", &out_s, "explain"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn route_trains_bundle_on_synthetic_corpus_and_reports_decisions() {
    // The routing stage needs several foundations with both outcomes, so it
    // runs on a synthetic feature file rather than the three-project fixture.
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    std::fs::create_dir_all(&out).unwrap();

    let corpus = four_cluster_corpus(12, 12, 7);
    let file = std::fs::File::create(out.join("features.csv")).unwrap();
    sustain_core::features::write_feature_csv(&corpus, file).unwrap();

    let cfg_path = tmp.path().join("route.toml");
    std::fs::write(
        &cfg_path,
        r#"
trace_file = "unused.jsonl"
extensions_file = "unused.txt"
bot_lexicon = "unused.toml"

[model]
seed = 9
runs = 3
max_epochs = 80
"#,
    )
    .unwrap();

    let out_s = out.display().to_string();
    let cfg_s = cfg_path.display().to_string();
    let stdout = run_ok(&["--config", &cfg_s, "--out", &out_s, "route"]);
    assert!(stdout.contains("routing (holdout)"), "{stdout}");

    let bundle = load_bundle(&out.join("bundle.json")).unwrap();
    assert_eq!(bundle.forecasters.len(), 4);
    assert!(!bundle.split_manifest.is_empty());

    // Holdout isolation is re-checkable from the saved bundle alone.
    let report = sustain_core::router::verify_no_leakage(&bundle);
    assert!(report.is_clean());

    let decisions = read(&out.join("route_decisions.csv"));
    assert_eq!(
        decisions.lines().count() as usize,
        1 + bundle.split_manifest.len(),
        "one decision row per held-out project"
    );

    // Every held-out row must carry a label the corpus actually holds.
    let eval: serde_json::Value =
        serde_json::from_str(&read(&out.join("bundle_eval.json"))).unwrap();
    assert!(eval.get("routing").is_some());
    assert!(eval.get("as_routed").is_some());
}

#[test]
fn seed_override_changes_training_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.display().to_string();
    let cfg = fixture_path("sustain.toml");
    for stage in ["ingest", "identities", "networks", "features", "train"] {
        run_ok(&["--config", &cfg, "--out", &out_s, stage]);
    }
    let base_model = read(&out.join("model.json"));

    run_ok(&["--config", &cfg, "--out", &out_s, "--seed", "1234", "train"]);
    let m = read_stage_manifest(&out.join("train.manifest.json")).unwrap();
    assert_eq!(m.seed, 1234);
    assert_ne!(
        read(&out.join("model.json")),
        base_model,
        "a different seed must produce a different checkpoint"
    );

    run_ok(&["--config", &cfg, "--out", &out_s, "--seed", "42", "train"]);
    assert_eq!(
        read(&out.join("model.json")),
        base_model,
        "restoring the seed must restore the checkpoint bytes"
    );
}

#[test]
fn unlabeled_projects_flow_through_without_entering_training() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.display().to_string();
    let cfg = fixture_path("sustain.toml");
    for stage in ["ingest", "identities", "networks", "features"] {
        run_ok(&["--config", &cfg, "--out", &out_s, stage]);
    }

    let corpus = read_feature_csv(std::fs::File::open(out.join("features.csv")).unwrap()).unwrap();
    let gearhut = corpus.iter().find(|s| s.project_id == "gearhut").unwrap();
    assert_eq!(gearhut.label, None);
    assert_eq!(gearhut.foundation.map(|f| f.to_string()), Some("GH".into()));
    assert_eq!(
        corpus.iter().filter(|s| s.label == Some(Label::Graduated)).count(),
        1
    );

    let stdout = run_ok(&["--config", &cfg, "--out", &out_s, "train"]);
    assert!(stdout.contains("skipping 1 unlabeled"), "{stdout}");
    assert!(stdout.contains("on 2 projects"), "{stdout}");
}
