//! Run configuration: a TOML file, or a previously written results document
//! whose embedded config reruns the exact same experiment.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use mvocc_core::error::{Error, Result};
use mvocc_core::evaluation::{resolved_grid_spec, GridSpec, KernelFamily, RESULTS_FORMAT};
use mvocc_core::models::MethodKind;
use mvocc_core::subspace::DecisionStrategy;

pub const DEFAULT_LABEL_COLUMN: &str = "label";
pub const DEFAULT_OUTER_FOLDS: usize = 5;
pub const DEFAULT_INNER_FOLDS: usize = 10;
pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: String,
    pub target: String,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    pub data: DataConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// One CSV per modality, aligned by subject id.
    pub views: Vec<PathBuf>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Per-view z-scoring over the whole dataset before any protocol runs.
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            outer_folds: DEFAULT_OUTER_FOLDS,
            inner_folds: DEFAULT_INNER_FOLDS,
            seed: 0,
        }
    }
}

/// Grid axis overrides; an unset axis means the built-in values for every
/// axis the method uses.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_index: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ds: Option<Vec<DecisionStrategy>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

fn default_kernel() -> String {
    "linear".to_string()
}

fn default_label_column() -> String {
    DEFAULT_LABEL_COLUMN.to_string()
}

impl From<GridConfig> for GridSpec {
    fn from(g: GridConfig) -> GridSpec {
        GridSpec {
            eta: g.eta,
            beta: g.beta,
            c: g.c,
            sigma: g.sigma,
            d: g.d,
            reg_index: g.reg_index,
            ds: g.ds,
        }
    }
}

impl From<GridSpec> for GridConfig {
    fn from(g: GridSpec) -> GridConfig {
        GridConfig {
            eta: g.eta,
            beta: g.beta,
            c: g.c,
            sigma: g.sigma,
            d: g.d,
            reg_index: g.reg_index,
            ds: g.ds,
        }
    }
}

/// Reads a config from either format. A TOML run file is taken as-is; a
/// results document contributes the config it embedded when it was written.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("'{}' is not valid JSON: {e}", path.display()))
        })?;
        if doc.get("format").and_then(|f| f.as_str()) != Some(RESULTS_FORMAT) {
            return Err(Error::Config(format!(
                "'{}' is JSON but not a results document; pass a TOML run config or a \
                 results.json written by `mvocc cv`",
                path.display()
            )));
        }
        let embedded = doc.get("config").cloned().ok_or_else(|| {
            Error::Config(format!("'{}' has no embedded config", path.display()))
        })?;
        serde_json::from_value(embedded).map_err(|e| {
            Error::Config(format!("embedded config in '{}' is invalid: {e}", path.display()))
        })
    } else {
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse '{}': {e}", path.display())))
    }
}

/// A config validated and made location independent: method and kernel parsed,
/// view paths absolute, grid axes filled in. `config` is the embeddable form.
pub struct ResolvedRun {
    pub config: RunConfig,
    pub method: MethodKind,
    pub family: KernelFamily,
    pub grid: GridSpec,
}

pub fn resolve(mut config: RunConfig, base_dir: &Path, seed_override: Option<u64>) -> Result<ResolvedRun> {
    let method = MethodKind::from_str(&config.method)?;
    let family = KernelFamily::parse(&config.kernel)?;
    if let Some(seed) = seed_override {
        config.cv.seed = seed;
    }
    if config.data.views.is_empty() {
        return Err(Error::Config("config lists no input views".into()));
    }
    if config.cv.outer_folds < 2 {
        return Err(Error::Config(format!(
            "outer_folds must be >= 2, got {}",
            config.cv.outer_folds
        )));
    }
    if config.cv.inner_folds < 2 {
        return Err(Error::Config(format!(
            "inner_folds must be >= 2, got {}",
            config.cv.inner_folds
        )));
    }
    if method.is_multi_modal() && config.data.views.len() < 2 {
        return Err(Error::Config(format!(
            "method {} requires >= 2 views, got {}",
            method.id(),
            config.data.views.len()
        )));
    }
    for path in &mut config.data.views {
        if path.is_relative() {
            *path = base_dir.join(&*path);
        }
        if !path.exists() {
            return Err(Error::Config(format!(
                "input file '{}' does not exist",
                path.display()
            )));
        }
        // stored absolute so a results document reruns from anywhere
        *path = fs::canonicalize(&*path).map_err(|e| {
            Error::Config(format!("cannot resolve input path '{}': {e}", path.display()))
        })?;
    }
    let grid = resolved_grid_spec(method, family, &config.grid.clone().into())?;
    config.grid = grid.clone().into();
    Ok(ResolvedRun {
        config,
        method,
        family,
        grid,
    })
}
