use crate::belief::Belief;
use crate::dp::{reachable_beliefs, PomdpModel, SolveSettings};
use crate::epi::{
    build_grid, build_transition, intervention_actions, EpiState, StateGrid, TransitionModel,
};
use crate::error::{Error, Result};
use crate::obs::{build_observation, ObservationModel, SurveyDesign, TestCharacteristics};
use crate::param_augment::{augment_with_params, ParamAxis, ParamGrid, DEFAULT_STATE_BUDGET};
use crate::sia::with_campaign_budget;
use crate::voi::{base_cost_table, build_augmented, AugmentedSpace, CostModel};

use super::config::{BeliefSample, RunConfig};
use super::files::{ModelFile, ModelSpec, FORMAT_VERSION, MODEL_FORMAT};

impl ModelSpec {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let params = cfg.params()?;
        let param_grid = match &cfg.params {
            Some(p) => Some(ParamGrid::new(
                p.axes
                    .iter()
                    .map(|a| ParamAxis {
                        kind: a.kind,
                        support: a.support.clone(),
                        variance: a.variance,
                    })
                    .collect(),
            )?),
            None => None,
        };
        let init = &cfg.initial;
        let initial = EpiState::new(init.s, init.i, init.tau)?;
        initial.validate(params.population)?;
        Ok(Self {
            params,
            grid: cfg.grid,
            intervention_coverage: cfg.interventions.coverage.clone(),
            survey_coverage: cfg.survey.coverage.clone(),
            obs_bins: cfg.survey.obs_bins,
            sensitivity: cfg.survey.sensitivity,
            specificity: cfg.survey.specificity,
            survey_level: cfg.survey.level,
            survey_augmented: cfg.survey.augmented,
            costs: cfg.costs,
            discount: cfg.solver.discount,
            param_grid,
            param_prior: cfg.params.as_ref().and_then(|p| p.prior.clone()),
            state_budget: cfg
                .params
                .as_ref()
                .and_then(|p| p.state_budget)
                .unwrap_or(DEFAULT_STATE_BUDGET),
            budget: cfg.budget,
            initial,
        })
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        CostModel::new(
            self.costs.c_i,
            self.costs.c_v,
            self.costs.c_o,
            self.discount,
        )
    }
}

/// The base cell model: grid, dynamics over cells and the survey channel.
pub struct BaseModel {
    pub grid: StateGrid,
    pub transition: TransitionModel,
    pub observation: ObservationModel,
    pub design: SurveyDesign,
    pub b0: Belief,
}

pub fn build_base(spec: &ModelSpec) -> Result<BaseModel> {
    let grid = build_grid(&spec.params, spec.grid.s_bins, spec.grid.i_bins)?;
    let actions = intervention_actions(&spec.intervention_coverage)?;
    let transition = build_transition(&grid, &spec.params, &actions, spec.grid.n_quadrature)?;
    let design = SurveyDesign::new(
        spec.survey_coverage.clone(),
        spec.obs_bins,
        spec.params.population,
    )?;
    let q = TestCharacteristics::new(spec.sensitivity, spec.specificity)?;
    let observation = build_observation(&grid, &design, &q)?;
    let b0 = Belief::point_mass(grid.n_cells(), grid.cell_of(&spec.initial));
    Ok(BaseModel {
        grid,
        transition,
        observation,
        design,
        b0,
    })
}

/// The planning model with every configured layer, outermost last:
/// parameter points, then survey state, then remaining budget. Each layer
/// places its copies in outer blocks, so `state % n_cells` is the cell.
pub struct Planning {
    pub spec: ModelSpec,
    pub base: BaseModel,
    /// Dynamics over cells and parameter points.
    pub transition: TransitionModel,
    pub observation: ObservationModel,
    pub incidence: Vec<f64>,
    /// Belief over cells and parameter points.
    pub b0_inner: Belief,
    pub augmented: Option<AugmentedSpace>,
    pub model: PomdpModel,
    pub b0: Belief,
    pub n_points: usize,
    pub n_survey_states: usize,
    pub budget_levels: usize,
}

pub fn build_planning(spec: &ModelSpec) -> Result<Planning> {
    let base = build_base(spec)?;
    let cm = spec.cost_model()?;
    let cell_incidence = base.grid.incidence();

    let (transition, observation, incidence, b0_inner, n_points) = match &spec.param_grid {
        Some(pg) => {
            let actions = intervention_actions(&spec.intervention_coverage)?;
            let aug = augment_with_params(
                &base.grid,
                &spec.params,
                &actions,
                spec.grid.n_quadrature,
                pg,
                spec.state_budget,
            )?;
            let prior = match &spec.param_prior {
                Some(p) => p.clone(),
                None => vec![1.0 / pg.n_points() as f64; pg.n_points()],
            };
            let b0 = aug.lift_belief(&base.b0, &prior)?;
            (
                aug.transition.clone(),
                aug.lift_observation(&base.observation)?,
                aug.lift_values(&cell_incidence),
                b0,
                pg.n_points(),
            )
        }
        None => (
            base.transition.clone(),
            base.observation.clone(),
            cell_incidence,
            base.b0.clone(),
            1,
        ),
    };

    let (augmented, mut model, mut b0, n_survey_states) = if spec.survey_augmented {
        let space = build_augmented(&transition, &observation, &base.design, &incidence, &cm)?;
        let b0 = space.lift_belief(&b0_inner, 0)?;
        let model = space.model.clone();
        let n = space.n_survey;
        (Some(space), model, b0, n)
    } else {
        let cost = base_cost_table(
            &transition,
            &incidence,
            &base.design,
            spec.survey_level,
            &cm,
        )?;
        let model = PomdpModel::from_parts(&transition, &observation, spec.survey_level, &cost)?;
        (None, model, b0_inner.clone(), 1)
    };

    let mut budget_levels = 1;
    if let Some(bs) = &spec.budget {
        let units: Vec<usize> = model
            .actions()
            .iter()
            .map(|a| usize::from(a.intervention > 0))
            .collect();
        let fallback: Vec<usize> = model
            .actions()
            .iter()
            .map(|a| {
                model
                    .actions()
                    .iter()
                    .position(|f| f.intervention == 0 && f.survey == a.survey)
                    .expect("every survey level has an idle action")
            })
            .collect();
        let budgeted = with_campaign_budget(&model, &units, &fallback, bs.units, bs.penalty)?;
        b0 = budgeted.lift_belief(&b0)?;
        budget_levels = bs.units + 1;
        model = budgeted.model;
    }

    Ok(Planning {
        spec: spec.clone(),
        base,
        transition,
        observation,
        incidence,
        b0_inner,
        augmented,
        model,
        b0,
        n_points,
        n_survey_states,
        budget_levels,
    })
}

impl Planning {
    pub fn n_cells(&self) -> usize {
        self.base.grid.n_cells()
    }

    /// Per-cell values repeated over every outer layer.
    pub fn lift_cell_values(&self, values: &[f64]) -> Vec<f64> {
        values.repeat(self.model.n_states() / self.n_cells())
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.model
            .actions()
            .iter()
            .map(|a| {
                a.transition
                    .max_row_sum_error()
                    .max(a.observation.max_row_sum_error())
            })
            .fold(0.0, f64::max)
    }

    pub fn model_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: FORMAT_VERSION,
            n_states: self.model.n_states(),
            n_cells: self.n_cells(),
            action_labels: self
                .model
                .actions()
                .iter()
                .map(|a| a.label.clone())
                .collect(),
            n_observations: self
                .model
                .actions()
                .iter()
                .map(|a| a.n_observations())
                .collect(),
            initial_cell: self.base.grid.cell_of(&self.spec.initial),
            max_row_sum_error: self.max_row_sum_error(),
            spec: self.spec.clone(),
        }
    }

    /// Rebuilds from a model file and checks the result against its header.
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        file.check()?;
        let p = build_planning(&file.spec)?;
        let rebuilt = p.model_file();
        if rebuilt.n_states != file.n_states
            || rebuilt.action_labels != file.action_labels
            || rebuilt.n_observations != file.n_observations
        {
            return Err(Error::Data(
                "model file dimensions do not match its description".into(),
            ));
        }
        Ok(p)
    }

    /// Index of the action with the given intervention level that surveys
    /// like the base model (level 0 when surveys are a decision).
    pub fn action_for(&self, intervention: usize) -> Option<usize> {
        let survey = if self.spec.survey_augmented {
            0
        } else {
            self.spec.survey_level
        };
        self.model
            .actions()
            .iter()
            .position(|a| a.intervention == intervention && a.survey == survey)
    }
}

/// Beliefs used as pruning grid and witnesses.
pub fn sample_beliefs(
    model: &PomdpModel,
    b0: &Belief,
    settings: &SolveSettings,
    how: BeliefSample,
    depth: usize,
    seed: u64,
) -> Result<Option<Vec<Belief>>> {
    let reachable = match how {
        BeliefSample::Simplex => false,
        BeliefSample::Reachable => true,
        BeliefSample::Auto => model.n_states() > settings.exact_prune_max_states,
    };
    if !reachable {
        return Ok(None);
    }
    let count = settings.prune_grid.max(settings.witness_count).max(1);
    let mut beliefs = reachable_beliefs(model, b0, count, depth, seed)?;
    // vertices keep every state covered by some belief
    if model.n_states() <= count {
        beliefs.extend((0..model.n_states()).map(|s| Belief::point_mass(model.n_states(), s)));
    }
    Ok(Some(beliefs))
}
