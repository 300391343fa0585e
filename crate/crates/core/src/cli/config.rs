use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dp::{BackupMode, PruneMethod, SolveSettings};
use crate::epi::TsirParams;
use crate::error::{Error, Result};
use crate::param_augment::ParamKind;

/// Run configuration, read from a TOML file. Relative paths are resolved
/// against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub model: ModelSection,
    pub grid: GridSection,
    pub interventions: InterventionSection,
    pub survey: SurveySection,
    pub costs: CostSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub params: Option<ParamSection>,
    pub initial: InitialSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub budget: Option<BudgetSection>,
    #[serde(default)]
    pub calibration: Option<CalibrationSection>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Either a parameter file written by `calibrate`, an explicit seasonal
/// profile, or a cosine profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub params_file: Option<PathBuf>,
    pub population: Option<f64>,
    pub beta_seasonal: Option<Vec<f64>>,
    pub beta_mean: Option<f64>,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub alpha_mix: f64,
    pub birth_schedule: Option<Vec<f64>>,
    pub births: Option<f64>,
    #[serde(default)]
    pub noise_sd: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub s_bins: usize,
    pub i_bins: usize,
    #[serde(default = "default_quadrature")]
    pub n_quadrature: usize,
}

fn default_quadrature() -> usize {
    32
}

fn default_obs_bins() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionSection {
    /// Coverage per intervention level; level 0 must be 0.
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveySection {
    pub coverage: Vec<f64>,
    #[serde(default = "default_obs_bins")]
    pub obs_bins: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Survey level used every step when surveys are not a decision.
    #[serde(default)]
    pub level: usize,
    /// Make the survey level a decision alongside the intervention.
    #[serde(default)]
    pub augmented: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub c_i: f64,
    pub c_v: f64,
    #[serde(default)]
    pub c_o: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    Mdp,
    PomdpExact,
    PomdpReduced,
}

impl SolveMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveMode::Mdp => "mdp",
            SolveMode::PomdpExact => "pomdp-exact",
            SolveMode::PomdpReduced => "pomdp-reduced",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefSample {
    /// Quasi-random points on the whole simplex.
    Simplex,
    /// Beliefs reached by random walks from the initial belief.
    Reachable,
    /// `Simplex` for small models, `Reachable` otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub mode: SolveMode,
    pub horizon: usize,
    pub discount: f64,
    pub tolerance: f64,
    pub infinite_horizon: bool,
    pub witness_count: usize,
    pub prune_grid: usize,
    pub prune: PruneMethod,
    pub beliefs: BeliefSample,
    /// Walk length between restarts when sampling reachable beliefs.
    pub belief_depth: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolveSettings::default();
        Self {
            mode: SolveMode::PomdpExact,
            horizon: 12,
            discount: 0.97,
            tolerance: d.tolerance,
            infinite_horizon: false,
            witness_count: d.witness_count,
            prune_grid: d.prune_grid,
            prune: d.prune,
            beliefs: BeliefSample::Auto,
            belief_depth: 12,
        }
    }
}

impl SolverSection {
    pub fn settings(&self) -> SolveSettings {
        SolveSettings {
            horizon: self.horizon,
            discount: self.discount,
            tolerance: self.tolerance,
            backup: match self.mode {
                SolveMode::PomdpReduced => BackupMode::Reduced,
                _ => BackupMode::Exact,
            },
            witness_count: self.witness_count,
            prune_grid: self.prune_grid,
            prune: self.prune,
            infinite_horizon: self.infinite_horizon,
            ..SolveSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamAxisSection {
    pub kind: ParamKind,
    pub support: Vec<f64>,
    #[serde(default)]
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSection {
    pub axes: Vec<ParamAxisSection>,
    /// Prior over the product grid; uniform when absent.
    pub prior: Option<Vec<f64>>,
    pub state_budget: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub s: f64,
    pub i: f64,
    #[serde(default)]
    pub tau: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub reps: usize,
    /// Defaults to the policy horizon.
    pub horizon: Option<usize>,
    /// Compare against every single-campaign open-loop schedule and the idle one.
    pub open_loop_baselines: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            reps: 1000,
            horizon: None,
            open_loop_baselines: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub total: f64,
    pub coverage: f64,
    pub horizon: usize,
    #[serde(default)]
    pub burn_in: usize,
    /// Defaults to the solver discount.
    pub discount: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    /// Campaigns the closed-loop planner may run over the horizon.
    pub units: usize,
    /// Charged when a campaign is chosen with no units left.
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub series: PathBuf,
    pub population: Option<f64>,
    pub fixed_alpha_mix: Option<f64>,
    #[serde(default = "yes")]
    pub refine: bool,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        if let Some(p) = self.model.params_file.as_mut() {
            fix(p);
        }
        if let Some(c) = self.calibration.as_mut() {
            fix(&mut c.series);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.interventions.coverage.first() != Some(&0.0) {
            return Err(Error::Config(
                "intervention level 0 must have coverage 0".into(),
            ));
        }
        if !self.survey.augmented && self.survey.level >= self.survey.coverage.len() {
            return Err(Error::Config(format!(
                "survey level {} is not configured",
                self.survey.level
            )));
        }
        if self.simulate.reps == 0 {
            return Err(Error::Config("simulate.reps must be >= 1".into()));
        }
        if self.budget.is_some() && self.solver.mode == SolveMode::Mdp {
            return Err(Error::Config(
                "campaign budgets need a POMDP solve mode".into(),
            ));
        }
        self.solver.settings().validate()
    }

    /// Model parameters named by the config, without touching calibration.
    pub fn params(&self) -> Result<TsirParams> {
        let m = &self.model;
        if let Some(path) = &m.params_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            let file: super::files::ParamsFile = super::files::parse(&text, path)?;
            file.check()?;
            return Ok(file.params);
        }
        let population = m
            .population
            .ok_or_else(|| Error::Config("model.population is required".into()))?;
        let birth_schedule = match (&m.birth_schedule, m.births) {
            (Some(b), None) => b.clone(),
            (None, Some(b)) => vec![b; crate::epi::SEASON_LENGTH],
            _ => {
                return Err(Error::Config(
                    "give exactly one of model.birth_schedule and model.births".into(),
                ))
            }
        };
        let beta = match (&m.beta_seasonal, m.beta_mean) {
            (Some(b), None) => b.clone(),
            (None, Some(mean)) => {
                TsirParams::seasonal_cosine(
                    mean,
                    m.amplitude,
                    m.alpha_mix,
                    0.0,
                    m.noise_sd,
                    population,
                )?
                .beta_seasonal
            }
            _ => {
                return Err(Error::Config(
                    "give exactly one of model.beta_seasonal and model.beta_mean".into(),
                ))
            }
        };
        TsirParams::new(beta, m.alpha_mix, birth_schedule, m.noise_sd, population)
    }
}
