use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Foundation, Label};
use crate::identity::IdentityConfig;
use crate::model::ModelConfig;

/// One TOML file drives every pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub trace_file: PathBuf,
    pub extensions_file: PathBuf,
    pub bot_lexicon: PathBuf,
    /// Optional CSV of project outcome labels and foundations.
    #[serde(default)]
    pub labels_file: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Observation window applied to every project; when absent, each
    /// project's window spans its own first to last event.
    #[serde(default)]
    pub window: Option<Window>,
    #[serde(default)]
    pub identity: IdentityConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub route: RouteConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub downturn: DownturnConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteConfig {
    /// Share of each foundation's projects held out of training.
    #[serde(default = "default_holdout_share")]
    pub holdout_share: f64,
}

fn default_holdout_share() -> f64 {
    0.25
}

impl Default for RouteConfig {
    fn default() -> Self {
        RouteConfig {
            holdout_share: default_holdout_share(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_folds() -> usize {
    5
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            folds: default_folds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownturnConfig {
    /// Months on each side of the inflection.
    #[serde(default = "default_downturn_window")]
    pub window: usize,
}

fn default_downturn_window() -> usize {
    crate::downturn::DEFAULT_WINDOW
}

impl Default for DownturnConfig {
    fn default() -> Self {
        DownturnConfig {
            window: default_downturn_window(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.identity.validate()?;
        self.model.validate()?;
        if let Some(w) = &self.window {
            if w.start >= w.end {
                return Err(Error::Config("window start must precede end".into()));
            }
        }
        if !(self.route.holdout_share > 0.0 && self.route.holdout_share < 1.0) {
            return Err(Error::Config("holdout_share must be in (0,1)".into()));
        }
        if self.evaluate.folds < 2 {
            return Err(Error::BadFoldCount(self.evaluate.folds));
        }
        if self.downturn.window == 0 {
            return Err(Error::Config("downturn window must be >= 1".into()));
        }
        Ok(())
    }

    /// Resolve a path relative to the config file's directory.
    pub fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }
}

/// Outcome and foundation assignments, one CSV row per project:
/// project_id,label,foundation with blank cells allowed.
pub fn read_labels_csv<R: Read>(r: R) -> Result<BTreeMap<String, (Option<Label>, Option<Foundation>)>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let project_id = record
            .get(0)
            .ok_or_else(|| Error::Invalid("labels row missing project_id".into()))?
            .trim()
            .to_string();
        if project_id.is_empty() {
            continue;
        }
        let label = match record.get(1).map(str::trim) {
            None | Some("") => None,
            Some("graduated") => Some(Label::Graduated),
            Some("retired") => Some(Label::Retired),
            Some(other) => {
                return Err(Error::Invalid(format!(
                    "unknown label {other:?} for project {project_id}"
                )))
            }
        };
        let foundation = match record.get(2).map(str::trim) {
            None | Some("") => None,
            Some(name) => Some(name.parse::<Foundation>().map_err(|_| {
                Error::Invalid(format!("unknown foundation {name:?} for project {project_id}"))
            })?),
        };
        if out.insert(project_id.clone(), (label, foundation)).is_some() {
            return Err(Error::Invalid(format!(
                "duplicate labels row for project {project_id}"
            )));
        }
    }
    Ok(out)
}
