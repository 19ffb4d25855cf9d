use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::features::{FeatureSeries, Foundation, Label};
use crate::manifest::sha256_hex;
use crate::model::{predict, ModelConfig, TrainedModel};
use crate::train::{argmax, train_multiclass, TrainingSummary};

pub fn foundation_class_names() -> Vec<String> {
    Foundation::ALL.iter().map(|f| f.to_string()).collect()
}

/// Train the four-class foundation router. Every series must carry a
/// foundation; at least two distinct foundations are required.
pub fn train_router(
    dataset: &[FeatureSeries],
    cfg: &ModelConfig,
) -> Result<(TrainedModel, TrainingSummary)> {
    let (xs, _) = prepare_labeled_foundations(dataset)?;
    let ys: Vec<usize> = dataset
        .iter()
        .map(|s| {
            let f = s.foundation.expect("checked above");
            Foundation::ALL.iter().position(|x| *x == f).unwrap()
        })
        .collect();
    let distinct: BTreeSet<usize> = ys.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::DegenerateLabels(
            "every project belongs to one foundation; routing needs at least two".into(),
        ));
    }
    train_multiclass(&xs, &ys, &foundation_class_names(), cfg)
}

fn prepare_labeled_foundations(
    dataset: &[FeatureSeries],
) -> Result<(Vec<[f64; crate::model::POOLED_DIM]>, Vec<Foundation>)> {
    let mut xs = Vec::with_capacity(dataset.len());
    let mut fs = Vec::with_capacity(dataset.len());
    for s in dataset {
        if s.is_empty() {
            return Err(Error::EmptyProject);
        }
        if s.form() == crate::features::Form::Raw {
            return Err(Error::RawFormInput);
        }
        let f = s.foundation.ok_or_else(|| {
            Error::Invalid(format!("project {} has no foundation", s.project_id))
        })?;
        xs.push(crate::model::pooled_stats(&s.months, None));
        fs.push(f);
    }
    Ok((xs, fs))
}

fn check_router(model: &TrainedModel) -> Result<()> {
    if model.classes != foundation_class_names() {
        return Err(Error::Invalid(format!(
            "not a foundation router: classes are {:?}",
            model.classes
        )));
    }
    Ok(())
}

fn check_forecaster(model: &TrainedModel) -> Result<()> {
    if model.classes != crate::train::FORECAST_CLASSES {
        return Err(Error::Invalid(format!(
            "not a sustainability forecaster: classes are {:?}",
            model.classes
        )));
    }
    Ok(())
}

/// Pick a foundation for one series. Ties go to the earlier foundation in
/// the fixed ASFI, EFI, OFI, GH order.
pub fn route(router: &TrainedModel, series: &FeatureSeries) -> Result<Foundation> {
    check_router(router)?;
    let probs = router.class_probs(series)?;
    Ok(Foundation::ALL[argmax(&probs)])
}

/// A router plus one forecaster per foundation, with the project splits
/// they were trained and held out on.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineBundle {
    pub router: TrainedModel,
    pub forecasters: BTreeMap<Foundation, TrainedModel>,
    /// Held-out project ids; end-to-end evaluation may touch only these.
    pub split_manifest: BTreeSet<String>,
    /// Member name ("router", "forecaster:ASFI", …) to its training
    /// project ids.
    pub training_manifests: BTreeMap<String, Vec<String>>,
}

pub fn member_name(foundation: Option<Foundation>) -> String {
    match foundation {
        None => "router".into(),
        Some(f) => format!("forecaster:{f}"),
    }
}

impl PipelineBundle {
    pub fn validate(&self) -> Result<()> {
        check_router(&self.router)?;
        self.router.validate()?;
        for (f, m) in &self.forecasters {
            check_forecaster(m).map_err(|_| {
                Error::Invalid(format!("bundle member for {f} is not a forecaster"))
            })?;
            m.validate()?;
        }
        Ok(())
    }

    /// Route a series, then forecast with the chosen foundation's model.
    /// The forecast reflects the routing decision even when it is wrong;
    /// a missing forecaster for the routed foundation is an error.
    pub fn route_and_predict(&self, series: &FeatureSeries) -> Result<(Foundation, f64)> {
        let foundation = route(&self.router, series)?;
        let model = self
            .forecasters
            .get(&foundation)
            .ok_or_else(|| Error::MissingForecaster(foundation.to_string()))?;
        Ok((foundation, predict(model, series)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageViolation {
    pub member: String,
    pub project_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub violations: Vec<LeakageViolation>,
    pub warnings: Vec<String>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check that no held-out project appears in any member's training set.
/// An empty holdout passes vacuously and is flagged as such.
pub fn verify_no_leakage(bundle: &PipelineBundle) -> LeakageReport {
    let mut violations = Vec::new();
    for (member, ids) in &bundle.training_manifests {
        for id in ids {
            if bundle.split_manifest.contains(id) {
                violations.push(LeakageViolation {
                    member: member.clone(),
                    project_id: id.clone(),
                });
            }
        }
    }
    let mut warnings = Vec::new();
    if bundle.split_manifest.is_empty() {
        warnings.push("split manifest is empty: evaluation would be vacuous".into());
    }
    LeakageReport { violations, warnings }
}

/// End-to-end quality of a bundle on held-out projects, reported from two
/// vantage points: `as_routed` scores forecasts exactly as the pipeline
/// produced them (routing mistakes included), while `correctly_routed_only`
/// conditions on the router having been right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEvaluation {
    pub routing: EvalReport,
    pub as_routed: EvalReport,
    pub correctly_routed_only: Option<EvalReport>,
}

pub fn evaluate_bundle(
    bundle: &PipelineBundle,
    holdout: &[FeatureSeries],
) -> Result<BundleEvaluation> {
    bundle.validate()?;
    if holdout.is_empty() {
        return Err(Error::Invalid("empty holdout".into()));
    }
    for s in holdout {
        if !bundle.split_manifest.contains(&s.project_id) {
            return Err(Error::Invalid(format!(
                "project {} is not in the bundle's split manifest",
                s.project_id
            )));
        }
    }

    let mut routed = Vec::with_capacity(holdout.len());
    let mut true_foundation = Vec::with_capacity(holdout.len());
    let mut predicted_label = Vec::with_capacity(holdout.len());
    let mut true_label = Vec::with_capacity(holdout.len());
    for s in holdout {
        let f = s
            .foundation
            .ok_or_else(|| Error::Invalid(format!("project {} has no foundation", s.project_id)))?;
        let label = s
            .label
            .ok_or_else(|| Error::Invalid(format!("project {} has no outcome label", s.project_id)))?;
        let (chosen, p) = bundle.route_and_predict(s)?;
        routed.push(Foundation::ALL.iter().position(|x| *x == chosen).unwrap());
        true_foundation.push(Foundation::ALL.iter().position(|x| *x == f).unwrap());
        predicted_label.push(usize::from(p < 0.5));
        true_label.push(match label {
            Label::Graduated => 0,
            Label::Retired => 1,
        });
    }

    let routing = evaluate(&routed, &true_foundation, &foundation_class_names())?;
    let forecast_classes: Vec<String> = crate::train::FORECAST_CLASSES
        .iter()
        .map(|s| s.to_string())
        .collect();
    let as_routed = evaluate(&predicted_label, &true_label, &forecast_classes)?;

    let correct: Vec<usize> = (0..holdout.len())
        .filter(|i| routed[*i] == true_foundation[*i])
        .collect();
    let correctly_routed_only = if correct.is_empty() {
        None
    } else {
        let p: Vec<usize> = correct.iter().map(|i| predicted_label[*i]).collect();
        let t: Vec<usize> = correct.iter().map(|i| true_label[*i]).collect();
        Some(evaluate(&p, &t, &forecast_classes)?)
    };

    Ok(BundleEvaluation {
        routing,
        as_routed,
        correctly_routed_only,
    })
}

const BUNDLE_FORMAT: &str = "sustain-bundle";
const BUNDLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BundleDoc {
    format: String,
    version: u32,
    router: TrainedModel,
    forecasters: BTreeMap<String, TrainedModel>,
    split_manifest: Vec<String>,
    training_manifests: BTreeMap<String, Vec<String>>,
    /// sha256 of each member's checkpoint JSON, keyed by member name.
    member_digests: BTreeMap<String, String>,
    /// sha256 of each member's training manifest.
    training_digests: BTreeMap<String, String>,
    split_digest: String,
}

fn model_digest(model: &TrainedModel) -> Result<String> {
    Ok(sha256_hex(crate::model::checkpoint_to_json(model)?.as_bytes()))
}

fn ids_digest(ids: &[String]) -> String {
    sha256_hex(serde_json::to_string(ids).expect("string list serializes").as_bytes())
}

pub fn bundle_to_json(bundle: &PipelineBundle) -> Result<String> {
    bundle.validate()?;
    let mut member_digests = BTreeMap::new();
    member_digests.insert(member_name(None), model_digest(&bundle.router)?);
    let mut forecasters = BTreeMap::new();
    for (f, m) in &bundle.forecasters {
        member_digests.insert(member_name(Some(*f)), model_digest(m)?);
        forecasters.insert(f.to_string(), m.clone());
    }
    let training_digests = bundle
        .training_manifests
        .iter()
        .map(|(k, v)| (k.clone(), ids_digest(v)))
        .collect();
    let split: Vec<String> = bundle.split_manifest.iter().cloned().collect();
    let split_digest = ids_digest(&split);
    let doc = BundleDoc {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        router: bundle.router.clone(),
        forecasters,
        split_manifest: split,
        training_manifests: bundle.training_manifests.clone(),
        member_digests,
        training_digests,
        split_digest,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn bundle_from_json(text: &str) -> Result<PipelineBundle> {
    let doc: BundleDoc =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if doc.format != BUNDLE_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", doc.format)));
    }
    if doc.version != BUNDLE_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported bundle version {} (tool reads {})",
            doc.version, BUNDLE_VERSION
        )));
    }
    if ids_digest(&doc.split_manifest) != doc.split_digest {
        return Err(Error::Checkpoint("split manifest digest mismatch".into()));
    }
    let mut forecasters = BTreeMap::new();
    for (name, model) in doc.forecasters {
        let f: Foundation = name
            .parse()
            .map_err(|_| Error::Checkpoint(format!("unknown foundation {name:?}")))?;
        forecasters.insert(f, model);
    }
    let bundle = PipelineBundle {
        router: doc.router,
        forecasters,
        split_manifest: doc.split_manifest.into_iter().collect(),
        training_manifests: doc.training_manifests,
    };
    bundle.validate()?;

    let mut expect = BTreeMap::new();
    expect.insert(member_name(None), model_digest(&bundle.router)?);
    for (f, m) in &bundle.forecasters {
        expect.insert(member_name(Some(*f)), model_digest(m)?);
    }
    if expect != doc.member_digests {
        return Err(Error::Checkpoint("member digest mismatch".into()));
    }
    let expect_training: BTreeMap<String, String> = bundle
        .training_manifests
        .iter()
        .map(|(k, v)| (k.clone(), ids_digest(v)))
        .collect();
    if expect_training != doc.training_digests {
        return Err(Error::Checkpoint("training manifest digest mismatch".into()));
    }
    Ok(bundle)
}

pub fn save_bundle(bundle: &PipelineBundle, path: &Path) -> Result<()> {
    std::fs::write(path, bundle_to_json(bundle)?).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<PipelineBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    bundle_from_json(&text)
}

/// Train a full pipeline: the router on all training projects, one
/// forecaster per foundation that has both outcomes represented, with the
/// holdout ids recorded as the split manifest.
pub fn train_bundle(
    training: &[FeatureSeries],
    holdout_ids: &BTreeSet<String>,
    cfg: &ModelConfig,
) -> Result<(PipelineBundle, BTreeMap<String, TrainingSummary>)> {
    let (router, router_summary) = train_router(training, cfg)?;
    let mut summaries = BTreeMap::new();
    let mut training_manifests = BTreeMap::new();
    training_manifests.insert(
        member_name(None),
        training.iter().map(|s| s.project_id.clone()).collect::<Vec<String>>(),
    );
    summaries.insert(member_name(None), router_summary);

    let mut forecasters = BTreeMap::new();
    for foundation in Foundation::ALL {
        let members: Vec<FeatureSeries> = training
            .iter()
            .filter(|s| s.foundation == Some(foundation))
            .cloned()
            .collect();
        if members.is_empty() {
            continue;
        }
        let (model, summary) = crate::train::train(&members, cfg)?;
        training_manifests.insert(
            member_name(Some(foundation)),
            members.iter().map(|s| s.project_id.clone()).collect(),
        );
        summaries.insert(member_name(Some(foundation)), summary);
        forecasters.insert(foundation, model);
    }

    let bundle = PipelineBundle {
        router,
        forecasters,
        split_manifest: holdout_ids.clone(),
        training_manifests,
    };
    bundle.validate()?;
    Ok((bundle, summaries))
}
