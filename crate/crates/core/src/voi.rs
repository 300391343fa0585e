//! Joint vaccination and survey planning.
//!
//! The planning state is `(cell, s_o)` where `s_o` is the survey level chosen
//! at the previous step, and actions are pairs `(a_s, a_o)`. Stage cost is
//!
//! ```text
//! c_i * max(I(s') - I(s), 0) + c_v * a_s + c_o * n(a_o)
//! ```
//!
//! with `n(a_o)` the number of people tested. The solver sees its
//! expectation over `s'`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::dp::{
    solve_pomdp, solve_pomdp_with_beliefs, ActionModel, CostTable, PomdpModel, SolveSettings,
};
use crate::epi::TransitionModel;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::obs::{ObservationModel, SurveyDesign};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Cost per new case.
    pub c_i: f64,
    /// Cost per intervention level.
    pub c_v: f64,
    /// Cost per person tested.
    pub c_o: f64,
    pub discount: f64,
}

impl CostModel {
    pub fn new(c_i: f64, c_v: f64, c_o: f64, discount: f64) -> Result<Self> {
        let cm = Self {
            c_i,
            c_v,
            c_o,
            discount,
        };
        cm.validate()?;
        Ok(cm)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c_i", self.c_i), ("c_v", self.c_v), ("c_o", self.c_o)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Parameter(format!(
                "discount must lie in (0, 1], got {}",
                self.discount
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AugmentedAction {
    pub a_s: usize,
    pub a_o: usize,
}

/// Cost of one realized transition from incidence `i_from` to `i_to`.
pub fn stage_cost(
    i_from: f64,
    i_to: f64,
    action: AugmentedAction,
    tested: u64,
    cm: &CostModel,
) -> f64 {
    cm.c_i * (i_to - i_from).max(0.0) + cm.c_v * action.a_s as f64 + cm.c_o * tested as f64
}

/// `l(s) = sum_s' T[s,s'] * stage_cost(s, s')` for every source state.
pub fn expected_stage_cost(
    transition: &CsrMatrix,
    incidence: &[f64],
    action: AugmentedAction,
    tested: u64,
    cm: &CostModel,
) -> Vec<f64> {
    (0..transition.n_rows())
        .map(|s| {
            let (cols, probs) = transition.row(s);
            cols.iter()
                .zip(probs)
                .map(|(&c, &p)| p * stage_cost(incidence[s], incidence[c], action, tested, cm))
                .sum()
        })
        .collect()
}

/// Expected stage costs of the base model where every step surveys at
/// `survey_level`.
pub fn base_cost_table(
    transition: &TransitionModel,
    incidence: &[f64],
    design: &SurveyDesign,
    survey_level: usize,
    cm: &CostModel,
) -> Result<CostTable> {
    cm.validate()?;
    if incidence.len() != transition.n_states() {
        return Err(Error::Contract(
            "incidence length differs from state count".into(),
        ));
    }
    if survey_level >= design.n_levels() {
        return Err(Error::Index(format!("survey level {survey_level}")));
    }
    let tested = design.sample_size(survey_level);
    Ok(CostTable(
        transition
            .actions
            .iter()
            .zip(&transition.matrices)
            .map(|(ia, t)| {
                let a = AugmentedAction {
                    a_s: ia.level,
                    a_o: survey_level,
                };
                expected_stage_cost(t, incidence, a, tested, cm)
            })
            .collect(),
    ))
}

/// Product model over `(cell, s_o)`, flat index `s_o * n_base + cell`.
#[derive(Debug, Clone)]
pub struct AugmentedSpace {
    pub n_base: usize,
    pub n_survey: usize,
    pub actions: Vec<AugmentedAction>,
    pub model: PomdpModel,
}

impl AugmentedSpace {
    pub fn n_states(&self) -> usize {
        self.n_base * self.n_survey
    }

    pub fn index(&self, cell: usize, s_o: usize) -> usize {
        s_o * self.n_base + cell
    }

    /// `(cell, s_o)` of a flat index.
    pub fn split(&self, index: usize) -> (usize, usize) {
        (index % self.n_base, index / self.n_base)
    }

    pub fn action_index(&self, action: AugmentedAction) -> Option<usize> {
        self.actions.iter().position(|a| *a == action)
    }

    /// Base belief placed in the `s_o` block.
    pub fn lift_belief(&self, base: &Belief, s_o: usize) -> Result<Belief> {
        if base.len() != self.n_base || s_o >= self.n_survey {
            return Err(Error::Contract(
                "belief or survey level does not fit the augmented space".into(),
            ));
        }
        let mut w = vec![0.0; self.n_states()];
        w[s_o * self.n_base..(s_o + 1) * self.n_base].copy_from_slice(base.weights());
        Belief::new(w)
    }

    /// Marginal over base cells.
    pub fn base_marginal(&self, belief: &Belief) -> Result<Belief> {
        if belief.len() != self.n_states() {
            return Err(Error::Contract(
                "belief dimension differs from augmented space".into(),
            ));
        }
        let w = belief.weights();
        let marg = (0..self.n_base)
            .map(|c| (0..self.n_survey).map(|o| w[o * self.n_base + c]).sum())
            .collect();
        Belief::from_weights(marg)
    }

    /// The same model with surveys disabled (`a_o = 0` only).
    pub fn restricted(&self) -> Result<PomdpModel> {
        let keep: Vec<usize> = (0..self.actions.len())
            .filter(|&k| self.actions[k].a_o == 0)
            .collect();
        self.model.with_actions(&keep)
    }
}

/// Joint `(a_s, a_o)` model over every intervention and survey level.
pub fn build_augmented(
    transition: &TransitionModel,
    observation: &ObservationModel,
    design: &SurveyDesign,
    incidence: &[f64],
    cm: &CostModel,
) -> Result<AugmentedSpace> {
    cm.validate()?;
    let n_base = transition.n_states();
    let n_survey = observation.n_levels();
    if design.n_levels() != n_survey {
        return Err(Error::Contract(format!(
            "survey design has {} levels, observation model {}",
            design.n_levels(),
            n_survey
        )));
    }
    if incidence.len() != n_base {
        return Err(Error::Contract(
            "incidence length differs from state count".into(),
        ));
    }
    if observation.levels.iter().any(|o| o.n_rows() != n_base) {
        return Err(Error::Contract(
            "observation rows differ from state count".into(),
        ));
    }

    let mut joint = Vec::new();
    let mut actions = Vec::new();
    for (ia, t) in transition.actions.iter().zip(&transition.matrices) {
        for a_o in 0..n_survey {
            let action = AugmentedAction { a_s: ia.level, a_o };
            let tested = design.sample_size(a_o);
            let base_cost = expected_stage_cost(t, incidence, action, tested, cm);
            let lifted = lift_transition(t, n_survey, a_o)?;
            let obs = observation.levels[a_o].tile_rows(n_survey);
            joint.push(ActionModel {
                label: format!("v{}s{}", ia.level, a_o),
                intervention: ia.level,
                survey: a_o,
                transition: Arc::new(lifted),
                observation: Arc::new(obs),
                cost: base_cost.repeat(n_survey),
            });
            actions.push(action);
        }
    }
    let model = PomdpModel::new(n_base * n_survey, joint, None)?;
    Ok(AugmentedSpace {
        n_base,
        n_survey,
        actions,
        model,
    })
}

/// `(s, s_o) -> (s', a_o)` with probability `T[s, s']` for every `s_o`.
fn lift_transition(t: &CsrMatrix, n_survey: usize, a_o: usize) -> Result<CsrMatrix> {
    let n = t.n_rows();
    let offset = a_o * n;
    let block: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|s| {
            let (cols, probs) = t.row(s);
            cols.iter()
                .zip(probs)
                .map(|(&c, &p)| (c + offset, p))
                .collect()
        })
        .collect();
    let rows = (0..n_survey).flat_map(|_| block.iter().cloned()).collect();
    CsrMatrix::from_rows(n * n_survey, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoiReport {
    /// Optimal expected cost with surveys available.
    pub full: f64,
    /// Optimal expected cost when `a_o = 0` at every stage.
    pub restricted: f64,
    /// `restricted - full`.
    pub value: f64,
}

/// Solves the augmented model with and without surveys from `b0` (a base
/// belief, placed in the no-survey block).
pub fn value_of_information(
    space: &AugmentedSpace,
    settings: &SolveSettings,
    b0: &Belief,
) -> Result<VoiReport> {
    let lifted = space.lift_belief(b0, 0)?;
    let full = solve_pomdp(&space.model, settings)?.value(0, &lifted);
    let restricted = solve_pomdp(&space.restricted()?, settings)?.value(0, &lifted);
    Ok(VoiReport {
        full,
        restricted,
        value: restricted - full,
    })
}

/// Like [`value_of_information`] with caller-supplied augmented beliefs for
/// pruning and witnesses, for spaces too large for a simplex grid.
pub fn value_of_information_with_beliefs(
    space: &AugmentedSpace,
    settings: &SolveSettings,
    b0: &Belief,
    beliefs: &[Belief],
) -> Result<VoiReport> {
    let lifted = space.lift_belief(b0, 0)?;
    let full = solve_pomdp_with_beliefs(&space.model, settings, beliefs)?.value(0, &lifted);
    let restricted =
        solve_pomdp_with_beliefs(&space.restricted()?, settings, beliefs)?.value(0, &lifted);
    Ok(VoiReport {
        full,
        restricted,
        value: restricted - full,
    })
}
