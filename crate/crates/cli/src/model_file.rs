//! Model JSON files and the index written by `fit`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reshare_core::fitting::Bounds;
use reshare_core::measures::{diffusion_measures, MarkLaw};
use reshare_core::{DiffusionMeasures, FittedModel, KernelParams, ModelType, SeismicConfig};

use crate::error::{CliError, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.json";

fn schema_version() -> u32 {
    MODEL_SCHEMA_VERSION
}

/// A fitted (or hand-written) model. Only `model_type` and `params` (or
/// `seismic` for SEISMIC) are required when reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub model_type: ModelType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<KernelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seismic: Option<SeismicConfig>,
    #[serde(default)]
    pub converged: bool,
    #[serde(default)]
    pub nll: Option<f64>,
    #[serde(default)]
    pub pg_norm: Option<f64>,
    #[serde(default)]
    pub n_restarts_used: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub n_cascades: usize,
    #[serde(default)]
    pub n_events: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measures: Option<DiffusionMeasures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measures_error: Option<String>,
    #[serde(default)]
    pub observation_time: Vec<f64>,
    /// Training marks, used for the empirical `E[m^β]`.
    #[serde(default)]
    pub training_marks: Vec<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl ModelFile {
    pub fn from_fit(group: &str, model: &FittedModel, n_events: usize, law: MarkLaw) -> Self {
        let (measures, measures_error) = match diffusion_measures(model, law) {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            group: Some(group.to_string()),
            model_type: model.family,
            params: Some(model.params),
            seismic: None,
            converged: model.converged,
            nll: finite(model.nll),
            pg_norm: finite(model.pg_norm),
            n_restarts_used: model.n_restarts_used,
            seed: Some(model.seed),
            n_cascades: model.observation_time.len(),
            n_events,
            bounds: Some(model.bounds),
            measures,
            measures_error,
            observation_time: model.observation_time.clone(),
            training_marks: model.training_marks.clone(),
        }
    }

    /// SEISMIC preset carrying only its configuration.
    pub fn seismic(config: SeismicConfig) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            group: None,
            model_type: ModelType::Seismic,
            params: None,
            seismic: Some(config),
            converged: false,
            nll: None,
            pg_norm: None,
            n_restarts_used: 0,
            seed: None,
            n_cascades: 0,
            n_events: 0,
            bounds: None,
            measures: None,
            measures_error: None,
            observation_time: Vec::new(),
            training_marks: Vec::new(),
        }
    }

    /// The parametric model; fails for SEISMIC or missing parameters.
    pub fn to_fitted(&self) -> Result<FittedModel> {
        if self.model_type == ModelType::Seismic {
            return Err(CliError::Usage(String::from("SEISMIC has no parametric kernel")));
        }
        let params = self
            .params
            .ok_or_else(|| CliError::Format(format!("{} model without `params`", self.model_type)))?;
        let mut model = FittedModel::from_params(self.model_type, params, self.training_marks.clone())?;
        model.nll = self.nll.unwrap_or(f64::NAN);
        model.pg_norm = self.pg_norm.unwrap_or(f64::NAN);
        model.converged = self.converged;
        model.n_restarts_used = self.n_restarts_used;
        model.seed = self.seed.unwrap_or(0);
        model.observation_time = self.observation_time.clone();
        if let Some(b) = self.bounds {
            model.bounds = b;
        }
        Ok(model)
    }

    pub fn seismic_config(&self) -> SeismicConfig {
        self.seismic.unwrap_or_default()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| CliError::from_json(path, e))?;
        if m.schema_version > MODEL_SCHEMA_VERSION {
            return Err(CliError::Format(format!(
                "{}: model schema {} is newer than supported {}",
                path.display(),
                m.schema_version,
                MODEL_SCHEMA_VERSION
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::write_json(path, self)
    }
}

/// One group in the `fit` index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub group: String,
    /// Model file relative to the index; absent when the fit failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub n_cascades: usize,
    pub n_events: usize,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIndex {
    pub schema_version: u32,
    pub model_type: ModelType,
    pub grouped: bool,
    pub groups: Vec<IndexEntry>,
}

impl ModelIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::from_json(path, e))
    }
}

/// Models keyed by group, read from a model file or a `fit` output
/// directory (or its index).
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub models: Vec<(String, ModelFile)>,
    /// Files read, index first.
    pub files: Vec<PathBuf>,
}

impl ModelSet {
    pub fn load(path: &Path) -> Result<Self> {
        let index_path: Option<PathBuf> = if path.is_dir() {
            Some(path.join(INDEX_FILE))
        } else if path.file_name().is_some_and(|n| n == INDEX_FILE) {
            Some(path.to_path_buf())
        } else {
            None
        };
        let Some(index_path) = index_path else {
            let m = ModelFile::load(path)?;
            let group = m.group.clone().unwrap_or_default();
            return Ok(Self {
                models: vec![(group, m)],
                files: vec![path.to_path_buf()],
            });
        };
        let index = ModelIndex::load(&index_path)?;
        let dir = index_path.parent().unwrap_or(Path::new("."));
        let mut models = Vec::new();
        let mut files = vec![index_path.clone()];
        for entry in &index.groups {
            if let Some(file) = &entry.file {
                let path = dir.join(file);
                models.push((entry.group.clone(), ModelFile::load(&path)?));
                files.push(path);
            }
        }
        if models.is_empty() {
            return Err(CliError::Format(format!("{}: no fitted models", index_path.display())));
        }
        Ok(Self { models, files })
    }

    /// The model for `group`; a set holding a single model serves every
    /// group.
    pub fn for_group(&self, group: &str) -> Option<&ModelFile> {
        if self.models.len() == 1 {
            return Some(&self.models[0].1);
        }
        self.models.iter().find(|(g, _)| g == group).map(|(_, m)| m)
    }
}
