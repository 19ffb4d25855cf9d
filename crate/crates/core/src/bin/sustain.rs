use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, Duration, Utc};
use clap::{Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sustain_core::config::{read_labels_csv, RunConfig};
use sustain_core::downturn::{analyze_project, write_downturn_csv, DownturnEntry};
use sustain_core::error::{Error, Result};
use sustain_core::eval::{evaluate, median_score, stratified_kfold};
use sustain_core::explain::{aggregate_global, attribute, single_report, write_attribution_csv};
use sustain_core::features::{
    assemble_series, compute_features, format_significant, normalize_features, read_feature_csv,
    write_feature_csv, FeatureSeries, Label,
};
use sustain_core::identity::{build_identity_map, classify_bots, BotLabel, BotLabelKind, BotLexicon, IdentityMap};
use sustain_core::manifest::{file_digest, StageManifest};
use sustain_core::model::{load_checkpoint, monthly_forecast_series, save_checkpoint};
use sustain_core::networks::{build_monthly_networks, write_graph_exports, MonthlyNetworks};
use sustain_core::reply::aggregate_reply_edges;
use sustain_core::report::{correlation_matrix, summarize_corpus, write_correlation_csv, write_summary_csv};
use sustain_core::router::{evaluate_bundle, save_bundle, train_bundle, verify_no_leakage};
use sustain_core::trace::{filter_source_files, parse_trace_events, write_rejects_report, ExtensionList, TraceEvent};
use sustain_core::train::train;

/// Sociotechnical network analytics and sustainability forecasting for
/// open-source project traces.
#[derive(Parser)]
#[command(name = "sustain", version, about)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "sustain.toml")]
    config: PathBuf,
    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and order raw trace events; report rejected lines.
    Ingest,
    /// Label bots and build per-project identity maps.
    Identities,
    /// Export monthly social and technical graphs as edge lists.
    Networks,
    /// Compute raw and normalized monthly feature series.
    Features,
    /// Train the sustainability forecaster on labeled series.
    Train,
    /// Score a checkpoint, or cross-validate the training protocol.
    Evaluate {
        /// Checkpoint to score; without it, run seeded k-fold validation.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the foundation router and per-foundation forecasters, bundle
    /// them, and evaluate end to end on the held-out split.
    Route,
    /// Attribute forecasts to features, per project or corpus-wide.
    Explain {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Project to explain; default aggregates graduated projects.
        #[arg(long)]
        project: Option<String>,
    },
    /// Locate forecast downturns and the feature shifts around them.
    Downturn {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Summarize the corpus: composition, series lengths, collinearity.
    Report,
}

struct Ctx {
    cfg: RunConfig,
    base: PathBuf,
    out: PathBuf,
    seed: u64,
    config_digest: String,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let cfg_path = &cli.config;
        let mut cfg = RunConfig::from_file(cfg_path)?;
        let config_digest = file_digest(cfg_path)?;
        let base = cfg_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        if let Some(seed) = cli.seed {
            cfg.model.seed = seed;
        }
        let seed = cfg.model.seed;
        let out = match &cli.out {
            Some(o) => o.clone(),
            None => cfg.resolve(&base, &cfg.out_dir.clone()),
        };
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Ctx {
            cfg,
            base,
            out,
            seed,
            config_digest,
        })
    }

    fn input(&self, p: &Path) -> PathBuf {
        self.cfg.resolve(&self.base, p)
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest(&self, stage: &str) -> StageManifest {
        StageManifest::new(stage, self.seed, &self.config_digest)
    }

    /// An output of an earlier stage, or a pointed error naming it.
    fn stage_input(&self, name: &str, produced_by: &str) -> Result<PathBuf> {
        let path = self.artifact(name);
        if !path.exists() {
            return Err(Error::MissingStage {
                stage: produced_by.into(),
                path,
            });
        }
        Ok(path)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn group_by_project(events: Vec<TraceEvent>) -> BTreeMap<String, Vec<TraceEvent>> {
    let mut out: BTreeMap<String, Vec<TraceEvent>> = BTreeMap::new();
    for e in events {
        out.entry(e.project_id.clone()).or_default().push(e);
    }
    out
}

fn load_events(ctx: &Ctx) -> Result<(PathBuf, BTreeMap<String, Vec<TraceEvent>>)> {
    let path = ctx.stage_input("events.jsonl", "ingest")?;
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let outcome = parse_trace_events(BufReader::new(file))?;
    if let Some(r) = outcome.rejects.first() {
        return Err(Error::Invalid(format!(
            "validated event stream contains a bad line {}: {}",
            r.line, r.error
        )));
    }
    Ok((path, group_by_project(outcome.events)))
}

fn load_identities(ctx: &Ctx) -> Result<(PathBuf, BTreeMap<String, IdentityMap>)> {
    let path = ctx.stage_input("identity_maps.json", "identities")?;
    Ok((path.clone(), read_json(&path)?))
}

fn load_bot_labels(ctx: &Ctx) -> Result<(PathBuf, BTreeMap<String, Vec<BotLabel>>)> {
    let path = ctx.stage_input("bot_labels.json", "identities")?;
    Ok((path.clone(), read_json(&path)?))
}

fn project_window(ctx: &Ctx, events: &[TraceEvent]) -> (DateTime<Utc>, DateTime<Utc>) {
    if let Some(w) = &ctx.cfg.window {
        return (w.start, w.end);
    }
    let first = events.iter().map(|e| e.timestamp).min().expect("nonempty");
    let last = events.iter().map(|e| e.timestamp).max().expect("nonempty");
    (first, last + Duration::seconds(1))
}

fn project_networks(
    ctx: &Ctx,
    project_id: &str,
    events: &[TraceEvent],
    ids: &IdentityMap,
    bots: &[BotLabel],
) -> Vec<MonthlyNetworks> {
    let reply_edges = aggregate_reply_edges(project_id, events, ids, bots);
    build_monthly_networks(
        project_id,
        events,
        &reply_edges,
        ids,
        bots,
        project_window(ctx, events),
    )
}

fn require_map<'a, T>(
    maps: &'a BTreeMap<String, T>,
    project_id: &str,
    artifact: &str,
    produced_by: &str,
) -> Result<&'a T> {
    maps.get(project_id).ok_or_else(|| Error::Invalid(format!(
        "project {project_id} is absent from {artifact}; rerun the {produced_by} stage on the current trace file"
    )))
}

fn cmd_ingest(ctx: &Ctx) -> Result<()> {
    let trace_path = ctx.input(&ctx.cfg.trace_file);
    let ext_path = ctx.input(&ctx.cfg.extensions_file);
    let extensions = ExtensionList::from_file(&ext_path)?;
    let file = std::fs::File::open(&trace_path).map_err(|e| Error::io(&trace_path, e))?;
    let outcome = parse_trace_events(BufReader::new(file))?;
    let kept = filter_source_files(outcome.events, &extensions);

    let events_path = ctx.artifact("events.jsonl");
    let mut body = String::new();
    for e in &kept {
        body.push_str(&serde_json::to_string(e)?);
        body.push('\n');
    }
    write_text(&events_path, &body)?;

    let rejects_path = ctx.artifact("rejects.jsonl");
    let mut rejects = Vec::new();
    write_rejects_report(&outcome.rejects, &mut rejects)?;
    std::fs::write(&rejects_path, rejects).map_err(|e| Error::io(&rejects_path, e))?;

    let mut m = ctx.manifest("ingest");
    m.record_input(&trace_path)?;
    m.record_input(&ext_path)?;
    m.record_output(&events_path);
    m.record_output(&rejects_path);
    m.write(&ctx.out)?;

    let projects = group_by_project(kept);
    println!(
        "ingest: {} events across {} projects kept, {} lines rejected",
        projects.values().map(Vec::len).sum::<usize>(),
        projects.len(),
        outcome.rejects.len()
    );
    Ok(())
}

fn cmd_identities(ctx: &Ctx) -> Result<()> {
    let (events_path, by_project) = load_events(ctx)?;
    let lexicon_path = ctx.input(&ctx.cfg.bot_lexicon);
    let lexicon = BotLexicon::from_file(&lexicon_path)?;

    let mut identity_maps = BTreeMap::new();
    let mut bot_labels = BTreeMap::new();
    let mut report = String::from("project_id,author_raw,label,evidence\n");
    let mut review = String::from("project_id,author_raw,evidence\n");
    for (pid, events) in &by_project {
        let labels = classify_bots(events, &lexicon);
        let map = build_identity_map(pid, events, &labels, &ctx.cfg.identity)?;
        for l in &labels {
            let kind = match l.label {
                BotLabelKind::Bot => "bot",
                BotLabelKind::Human => "human",
                BotLabelKind::NeedsReview => "needs_review",
            };
            report.push_str(&format!(
                "{pid},{},{kind},{}\n",
                l.author_raw,
                l.evidence.join(";")
            ));
            if l.label == BotLabelKind::NeedsReview {
                review.push_str(&format!("{pid},{},{}\n", l.author_raw, l.evidence.join(";")));
            }
        }
        identity_maps.insert(pid.clone(), map);
        bot_labels.insert(pid.clone(), labels);
    }

    let maps_path = ctx.artifact("identity_maps.json");
    write_json(&maps_path, &identity_maps)?;
    let labels_path = ctx.artifact("bot_labels.json");
    write_json(&labels_path, &bot_labels)?;
    let report_path = ctx.artifact("bot_report.csv");
    write_text(&report_path, &report)?;
    let review_path = ctx.artifact("review_queue.csv");
    write_text(&review_path, &review)?;

    let mut m = ctx.manifest("identities");
    m.record_input(&events_path)?;
    m.record_input(&lexicon_path)?;
    for p in [&maps_path, &labels_path, &report_path, &review_path] {
        m.record_output(p);
    }
    m.write(&ctx.out)?;

    let bots: usize = bot_labels
        .values()
        .flatten()
        .filter(|l| l.label == BotLabelKind::Bot)
        .count();
    let queued: usize = bot_labels
        .values()
        .flatten()
        .filter(|l| l.label == BotLabelKind::NeedsReview)
        .count();
    println!(
        "identities: {} projects mapped, {bots} bots excluded, {queued} authors queued for review",
        identity_maps.len()
    );
    Ok(())
}

fn cmd_networks(ctx: &Ctx) -> Result<()> {
    let (events_path, by_project) = load_events(ctx)?;
    let (maps_path, identity_maps) = load_identities(ctx)?;
    let (labels_path, bot_labels) = load_bot_labels(ctx)?;

    let graph_dir = ctx.artifact("graphs");
    std::fs::create_dir_all(&graph_dir).map_err(|e| Error::io(&graph_dir, e))?;
    let mut months = 0usize;
    for (pid, events) in &by_project {
        let ids = require_map(&identity_maps, pid, "identity_maps.json", "identities")?;
        let bots = require_map(&bot_labels, pid, "bot_labels.json", "identities")?;
        let nets = project_networks(ctx, pid, events, ids, bots);
        months += nets.len();
        write_graph_exports(&nets, &graph_dir)?;
    }

    let mut m = ctx.manifest("networks");
    m.record_input(&events_path)?;
    m.record_input(&maps_path)?;
    m.record_input(&labels_path)?;
    m.record_output(&graph_dir);
    m.write(&ctx.out)?;
    println!(
        "networks: {} project-months exported to {}",
        months,
        graph_dir.display()
    );
    Ok(())
}

fn cmd_features(ctx: &Ctx) -> Result<()> {
    let (events_path, by_project) = load_events(ctx)?;
    let (maps_path, identity_maps) = load_identities(ctx)?;
    let (labels_path, bot_labels) = load_bot_labels(ctx)?;
    let outcome_labels = match &ctx.cfg.labels_file {
        Some(p) => {
            let path = ctx.input(p);
            let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            Some((path, read_labels_csv(file)?))
        }
        None => None,
    };

    let mut raw_corpus = Vec::new();
    let mut normalized_corpus = Vec::new();
    for (pid, events) in &by_project {
        let ids = require_map(&identity_maps, pid, "identity_maps.json", "identities")?;
        let bots = require_map(&bot_labels, pid, "bot_labels.json", "identities")?;
        let nets = project_networks(ctx, pid, events, ids, bots);
        if nets.is_empty() {
            return Err(Error::Invalid(format!(
                "project {pid} has no months inside the configured window"
            )));
        }
        let mut raw = Vec::with_capacity(nets.len());
        let mut normalized = Vec::with_capacity(nets.len());
        for (i, net) in nets.iter().enumerate() {
            let previous = if i == 0 { None } else { Some(&nets[i - 1]) };
            let v = compute_features(net, previous);
            normalized.push(normalize_features(&v, net.active_union.len()));
            raw.push(v);
        }
        let (label, foundation) = outcome_labels
            .as_ref()
            .and_then(|(_, m)| m.get(pid).copied())
            .unwrap_or((None, None));
        raw_corpus.push(assemble_series(pid, raw, label, foundation)?);
        normalized_corpus.push(assemble_series(pid, normalized, label, foundation)?);
    }

    let raw_path = ctx.artifact("features_raw.csv");
    let mut buf = Vec::new();
    write_feature_csv(&raw_corpus, &mut buf)?;
    std::fs::write(&raw_path, &buf).map_err(|e| Error::io(&raw_path, e))?;
    let norm_path = ctx.artifact("features.csv");
    let mut buf = Vec::new();
    write_feature_csv(&normalized_corpus, &mut buf)?;
    std::fs::write(&norm_path, &buf).map_err(|e| Error::io(&norm_path, e))?;

    let mut m = ctx.manifest("features");
    m.record_input(&events_path)?;
    m.record_input(&maps_path)?;
    m.record_input(&labels_path)?;
    if let Some((path, _)) = &outcome_labels {
        m.record_input(path)?;
    }
    m.record_output(&raw_path);
    m.record_output(&norm_path);
    m.write(&ctx.out)?;
    println!(
        "features: {} projects, {} project-months ({} and {})",
        normalized_corpus.len(),
        normalized_corpus.iter().map(FeatureSeries::len).sum::<usize>(),
        raw_path.display(),
        norm_path.display()
    );
    Ok(())
}

fn load_feature_corpus(ctx: &Ctx) -> Result<(PathBuf, Vec<FeatureSeries>)> {
    let path = ctx.stage_input("features.csv", "features")?;
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path, read_feature_csv(file)?))
}

fn labeled_subset(corpus: &[FeatureSeries]) -> Vec<FeatureSeries> {
    corpus.iter().filter(|s| s.label.is_some()).cloned().collect()
}

fn cmd_train(ctx: &Ctx) -> Result<()> {
    let (features_path, corpus) = load_feature_corpus(ctx)?;
    let labeled = labeled_subset(&corpus);
    if labeled.len() < corpus.len() {
        println!(
            "train: skipping {} unlabeled projects",
            corpus.len() - labeled.len()
        );
    }
    let mut cfg = ctx.cfg.model.clone();
    cfg.seed = ctx.seed;
    let (model, summary) = train(&labeled, &cfg)?;

    let model_path = ctx.artifact("model.json");
    save_checkpoint(&model, &model_path)?;
    let summary_path = ctx.artifact("training_summary.json");
    write_json(&summary_path, &summary)?;

    let mut m = ctx.manifest("train");
    m.record_input(&features_path)?;
    m.record_output(&model_path);
    m.record_output(&summary_path);
    m.write(&ctx.out)?;

    let retained = &summary.runs[summary.retained];
    println!(
        "train: {} runs on {} projects; retained run {} (training F1 {}, {} epochs)",
        summary.runs.len(),
        labeled.len(),
        retained.run_index,
        format_significant(retained.f1, 4),
        retained.epochs_run
    );
    Ok(())
}

fn predicted_class(model: &sustain_core::model::TrainedModel, s: &FeatureSeries) -> Result<usize> {
    Ok(usize::from(sustain_core::model::predict(model, s)? < 0.5))
}

fn label_index(s: &FeatureSeries) -> Result<usize> {
    match s.label {
        Some(Label::Graduated) => Ok(0),
        Some(Label::Retired) => Ok(1),
        None => Err(Error::Invalid(format!(
            "project {} has no outcome label",
            s.project_id
        ))),
    }
}

fn cmd_evaluate(ctx: &Ctx, model_path: Option<&Path>) -> Result<()> {
    let (features_path, corpus) = load_feature_corpus(ctx)?;
    let labeled = labeled_subset(&corpus);
    if labeled.is_empty() {
        return Err(Error::Invalid("no labeled projects to evaluate".into()));
    }
    let classes: Vec<String> = sustain_core::train::FORECAST_CLASSES
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut m = ctx.manifest("evaluate");
    m.record_input(&features_path)?;

    match model_path {
        Some(p) => {
            let model = load_checkpoint(p)?;
            m.record_input(p)?;
            let mut preds = Vec::new();
            let mut labels = Vec::new();
            for s in &labeled {
                preds.push(predicted_class(&model, s)?);
                labels.push(label_index(s)?);
            }
            let report = evaluate(&preds, &labels, &classes)?;
            let csv_path = ctx.artifact("eval.csv");
            write_text(&csv_path, &report.to_csv())?;
            let table_path = ctx.artifact("eval.txt");
            write_text(&table_path, &report.render_table())?;
            m.record_output(&csv_path);
            m.record_output(&table_path);
            m.write(&ctx.out)?;
            print!("{}", report.render_table());
        }
        None => {
            let k = ctx.cfg.evaluate.folds;
            let labels: Vec<usize> = labeled
                .iter()
                .map(label_index)
                .collect::<Result<Vec<usize>>>()?;
            let (folds, warnings) = stratified_kfold(&labels, k, ctx.seed)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            let mut cfg = ctx.cfg.model.clone();
            cfg.seed = ctx.seed;
            let mut scores = Vec::with_capacity(k);
            let mut csv = String::from("fold,f1,test_projects\n");
            for (i, fold) in folds.iter().enumerate() {
                let train_set: Vec<FeatureSeries> =
                    fold.train.iter().map(|j| labeled[*j].clone()).collect();
                let (model, _) = train(&train_set, &cfg)?;
                let mut preds = Vec::new();
                let mut truth = Vec::new();
                for j in &fold.test {
                    preds.push(predicted_class(&model, &labeled[*j])?);
                    truth.push(labels[*j]);
                }
                let f1 = evaluate(&preds, &truth, &classes)?.f1;
                csv.push_str(&format!(
                    "{i},{},{}\n",
                    format_significant(f1, 10),
                    fold.test.len()
                ));
                scores.push(f1);
            }
            let median = median_score(&scores);
            csv.push_str(&format!("median,{},\n", format_significant(median, 10)));
            let csv_path = ctx.artifact("eval_kfold.csv");
            write_text(&csv_path, &csv)?;
            m.record_output(&csv_path);
            m.write(&ctx.out)?;
            println!(
                "evaluate: {k}-fold cross-validation median F1 {}",
                format_significant(median, 4)
            );
        }
    }
    Ok(())
}

fn cmd_route(ctx: &Ctx) -> Result<()> {
    let (features_path, corpus) = load_feature_corpus(ctx)?;
    let eligible: Vec<FeatureSeries> = corpus
        .iter()
        .filter(|s| s.label.is_some() && s.foundation.is_some())
        .cloned()
        .collect();
    if eligible.is_empty() {
        return Err(Error::Invalid(
            "routing needs projects with both a label and a foundation".into(),
        ));
    }

    // Seeded holdout: a share of each foundation's projects, at least one
    // where the foundation can spare it.
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut holdout_ids = BTreeSet::new();
    for foundation in sustain_core::features::Foundation::ALL {
        let mut members: Vec<&FeatureSeries> = eligible
            .iter()
            .filter(|s| s.foundation == Some(foundation))
            .collect();
        if members.len() < 2 {
            continue;
        }
        members.sort_by(|a, b| a.project_id.cmp(&b.project_id));
        members.shuffle(&mut rng);
        let take = ((members.len() as f64 * ctx.cfg.route.holdout_share).floor() as usize)
            .clamp(1, members.len() - 1);
        for s in members.into_iter().take(take) {
            holdout_ids.insert(s.project_id.clone());
        }
    }

    let training: Vec<FeatureSeries> = eligible
        .iter()
        .filter(|s| !holdout_ids.contains(&s.project_id))
        .cloned()
        .collect();
    let holdout: Vec<FeatureSeries> = eligible
        .iter()
        .filter(|s| holdout_ids.contains(&s.project_id))
        .cloned()
        .collect();

    let mut cfg = ctx.cfg.model.clone();
    cfg.seed = ctx.seed;
    let (bundle, summaries) = train_bundle(&training, &holdout_ids, &cfg)?;

    let leakage = verify_no_leakage(&bundle);
    let leakage_path = ctx.artifact("leakage_report.json");
    write_json(&leakage_path, &leakage)?;
    for w in &leakage.warnings {
        eprintln!("warning: {w}");
    }
    if !leakage.is_clean() {
        return Err(Error::Invalid(format!(
            "{} training/holdout leaks recorded in {}",
            leakage.violations.len(),
            leakage_path.display()
        )));
    }

    let bundle_path = ctx.artifact("bundle.json");
    save_bundle(&bundle, &bundle_path)?;
    let summaries_path = ctx.artifact("route_training_summaries.json");
    write_json(&summaries_path, &summaries)?;

    let mut decisions = String::from("project_id,foundation,routed_foundation,p_graduate,label\n");
    for s in &holdout {
        let (routed, p) = bundle.route_and_predict(s)?;
        decisions.push_str(&format!(
            "{},{},{routed},{},{}\n",
            s.project_id,
            s.foundation.expect("eligible"),
            format_significant(p, 10),
            match s.label.expect("eligible") {
                Label::Graduated => "graduated",
                Label::Retired => "retired",
            }
        ));
    }
    let decisions_path = ctx.artifact("route_decisions.csv");
    write_text(&decisions_path, &decisions)?;

    let eval = evaluate_bundle(&bundle, &holdout)?;
    let eval_path = ctx.artifact("bundle_eval.json");
    write_json(&eval_path, &eval)?;
    let mut table = String::new();
    table.push_str("== routing (holdout) ==\n");
    table.push_str(&eval.routing.render_table());
    table.push_str("\n== sustainability, as routed (mistakes included) ==\n");
    table.push_str(&eval.as_routed.render_table());
    match &eval.correctly_routed_only {
        Some(r) => {
            table.push_str("\n== sustainability, correctly routed projects only ==\n");
            table.push_str(&r.render_table());
        }
        None => table.push_str("\n(no correctly routed projects)\n"),
    }
    let table_path = ctx.artifact("bundle_eval.txt");
    write_text(&table_path, &table)?;

    let mut m = ctx.manifest("route");
    m.record_input(&features_path)?;
    for p in [&bundle_path, &summaries_path, &leakage_path, &decisions_path, &eval_path, &table_path] {
        m.record_output(p);
    }
    m.write(&ctx.out)?;
    print!("{table}");
    println!(
        "route: {} trained, {} held out; bundle at {}",
        training.len(),
        holdout.len(),
        bundle_path.display()
    );
    Ok(())
}

fn resolve_model(ctx: &Ctx, flag: Option<&Path>) -> Result<PathBuf> {
    match flag {
        Some(p) => Ok(p.to_path_buf()),
        None => ctx.stage_input("model.json", "train"),
    }
}

fn cmd_explain(ctx: &Ctx, model_flag: Option<&Path>, project: Option<&str>) -> Result<()> {
    let (features_path, corpus) = load_feature_corpus(ctx)?;
    let model_path = resolve_model(ctx, model_flag)?;
    let model = load_checkpoint(&model_path)?;

    let reports = match project {
        Some(pid) => {
            let series = corpus
                .iter()
                .find(|s| s.project_id == pid)
                .ok_or_else(|| Error::Invalid(format!("project {pid} not in features.csv")))?;
            vec![single_report(&attribute(&model, series, None)?, pid)]
        }
        None => {
            let graduated: Vec<&FeatureSeries> = corpus
                .iter()
                .filter(|s| s.label == Some(Label::Graduated))
                .collect();
            let mut per_project = Vec::with_capacity(graduated.len());
            for s in &graduated {
                per_project.push(attribute(&model, s, None)?);
            }
            vec![aggregate_global(&per_project, "graduated")?]
        }
    };

    let csv_path = ctx.artifact("attribution.csv");
    write_text(&csv_path, &write_attribution_csv(&reports))?;

    let mut m = ctx.manifest("explain");
    m.record_input(&features_path)?;
    m.record_input(&model_path)?;
    m.record_output(&csv_path);
    m.write(&ctx.out)?;
    let scope = &reports[0].scope;
    let mut top: Vec<(&String, f64)> = reports[0].values.iter().map(|(k, v)| (k, *v)).collect();
    top.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    println!(
        "explain: scope {scope}, strongest push toward graduation: {} ({})",
        top[0].0,
        format_significant(top[0].1, 4)
    );
    Ok(())
}

fn cmd_downturn(ctx: &Ctx, model_flag: Option<&Path>) -> Result<()> {
    let (features_path, corpus) = load_feature_corpus(ctx)?;
    let model_path = resolve_model(ctx, model_flag)?;
    let model = load_checkpoint(&model_path)?;

    let mut forecasts = String::from("project_id,month_index,p_graduate\n");
    let mut entries: Vec<DownturnEntry> = Vec::new();
    let mut skipped = String::from("project_id,reason\n");
    for s in &corpus {
        let f = monthly_forecast_series(&model, s)?;
        for (t, p) in f.iter().enumerate() {
            forecasts.push_str(&format!(
                "{},{t},{}\n",
                s.project_id,
                format_significant(*p, 10)
            ));
        }
        match analyze_project(s, &f, ctx.cfg.downturn.window) {
            Ok(entry) => entries.push(entry),
            Err(Error::NoInflection) => {
                skipped.push_str(&format!("{},no forecast drop\n", s.project_id));
            }
            Err(e @ (Error::EmptyPostWindow | Error::Invalid(_))) => {
                skipped.push_str(&format!("{},{e}\n", s.project_id));
            }
            Err(e) => return Err(e),
        }
    }

    let forecasts_path = ctx.artifact("forecasts.csv");
    write_text(&forecasts_path, &forecasts)?;
    let downturn_path = ctx.artifact("downturn.csv");
    write_text(&downturn_path, &write_downturn_csv(&entries))?;
    let skipped_path = ctx.artifact("downturn_skipped.csv");
    write_text(&skipped_path, &skipped)?;

    let mut m = ctx.manifest("downturn");
    m.record_input(&features_path)?;
    m.record_input(&model_path)?;
    for p in [&forecasts_path, &downturn_path, &skipped_path] {
        m.record_output(p);
    }
    m.write(&ctx.out)?;
    println!(
        "downturn: {} projects with an inflection, {} without",
        entries.len(),
        corpus.len() - entries.len()
    );
    Ok(())
}

fn cmd_report(ctx: &Ctx) -> Result<()> {
    let (features_path, corpus) = load_feature_corpus(ctx)?;
    let summary = summarize_corpus(&corpus)?;
    let corr = correlation_matrix(&corpus)?;

    let summary_json = ctx.artifact("corpus_summary.json");
    write_json(&summary_json, &summary)?;
    let summary_csv = ctx.artifact("corpus_summary.csv");
    write_text(&summary_csv, &write_summary_csv(&summary))?;
    let corr_csv = ctx.artifact("feature_correlation.csv");
    write_text(&corr_csv, &write_correlation_csv(&corr))?;

    let mut m = ctx.manifest("report");
    m.record_input(&features_path)?;
    for p in [&summary_json, &summary_csv, &corr_csv] {
        m.record_output(p);
    }
    m.write(&ctx.out)?;
    println!(
        "report: {} projects, months {}..{} (median {}), outputs in {}",
        summary.projects,
        summary.lengths.min,
        summary.lengths.max,
        summary.lengths.median,
        ctx.out.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx::new(cli)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&ctx),
        Command::Identities => cmd_identities(&ctx),
        Command::Networks => cmd_networks(&ctx),
        Command::Features => cmd_features(&ctx),
        Command::Train => cmd_train(&ctx),
        Command::Evaluate { model } => cmd_evaluate(&ctx, model.as_deref()),
        Command::Route => cmd_route(&ctx),
        Command::Explain { model, project } => {
            cmd_explain(&ctx, model.as_deref(), project.as_deref())
        }
        Command::Downturn { model } => cmd_downturn(&ctx, model.as_deref()),
        Command::Report => cmd_report(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut stderr = std::io::stderr();
            let _ = writeln!(stderr, "error: {e}");
            if let Error::MissingStage { stage, .. } = &e {
                let _ = writeln!(stderr, "hint: run `sustain {stage}` first");
            }
            match e {
                Error::Io { .. } | Error::Stream(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
