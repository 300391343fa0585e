use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{BudgetSection, CostSection, GridSection, SolveMode};
use crate::calibrate::CalibrationReport;
use crate::epi::{EpiState, TsirParams};
use crate::error::{Error, Result};
use crate::param_augment::ParamGrid;
use crate::sia::Policy;

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_FORMAT: &str = "epiplan-model";
pub const POLICY_FORMAT: &str = "epiplan-policy";
pub const PARAMS_FORMAT: &str = "epiplan-params";

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Data(format!(
            "expected a {expected} file, found {format}"
        )));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "{expected} version {version} is not supported"
        )));
    }
    Ok(())
}

pub fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse(&text, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Fitted or hand-written TSIR parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub format: String,
    pub version: u32,
    pub params: TsirParams,
    pub calibration: Option<CalibrationReport>,
}

impl ParamsFile {
    pub fn new(params: TsirParams, calibration: Option<CalibrationReport>) -> Self {
        Self {
            format: PARAMS_FORMAT.into(),
            version: FORMAT_VERSION,
            params,
            calibration,
        }
    }

    pub fn check(&self) -> Result<()> {
        check_header(&self.format, self.version, PARAMS_FORMAT)?;
        self.params.validate()
    }
}

/// Everything needed to rebuild the planning model deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub params: TsirParams,
    pub grid: GridSection,
    pub intervention_coverage: Vec<f64>,
    pub survey_coverage: Vec<f64>,
    pub obs_bins: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub survey_level: usize,
    pub survey_augmented: bool,
    pub costs: CostSection,
    pub discount: f64,
    pub param_grid: Option<ParamGrid>,
    pub param_prior: Option<Vec<f64>>,
    pub state_budget: usize,
    pub budget: Option<BudgetSection>,
    pub initial: EpiState,
}

/// Model description plus the dimensions it builds to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub n_states: usize,
    pub n_cells: usize,
    pub action_labels: Vec<String>,
    pub n_observations: Vec<usize>,
    pub initial_cell: usize,
    pub max_row_sum_error: f64,
    pub spec: ModelSpec,
}

impl ModelFile {
    pub fn check(&self) -> Result<()> {
        check_header(&self.format, self.version, MODEL_FORMAT)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format: String,
    pub version: u32,
    pub mode: SolveMode,
    pub n_states: usize,
    pub action_labels: Vec<String>,
    pub horizon: usize,
    pub stationary: bool,
    pub discount: f64,
    /// Optimal expected cost from the initial belief.
    pub initial_value: f64,
    pub policy: Policy,
}

impl PolicyFile {
    pub fn check(&self) -> Result<()> {
        check_header(&self.format, self.version, POLICY_FORMAT)
    }
}
