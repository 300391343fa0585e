use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::epi::TransitionModel;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix};
use crate::obs::ObservationModel;

/// Row tolerance accepted for stochastic matrices.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Expected stage cost `l(s, a)`, indexed `[action][state]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable(pub Vec<Vec<f64>>);

impl CostTable {
    pub fn n_actions(&self) -> usize {
        self.0.len()
    }

    pub fn action(&self, a: usize) -> &[f64] {
        &self.0[a]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CostTable(
            self.0
                .iter()
                .map(|row| row.iter().map(|c| c * factor).collect())
                .collect(),
        )
    }
}

/// One action of a discrete POMDP: its dynamics, the observation channel
/// applied to the successor state, and expected stage cost per source state.
#[derive(Debug, Clone)]
pub struct ActionModel {
    pub label: String,
    pub intervention: usize,
    pub survey: usize,
    pub transition: Arc<CsrMatrix>,
    pub observation: Arc<DenseMatrix>,
    pub cost: Vec<f64>,
}

impl ActionModel {
    pub fn n_observations(&self) -> usize {
        self.observation.n_cols()
    }
}

/// Finite POMDP with cost minimization.
#[derive(Debug, Clone)]
pub struct PomdpModel {
    n_states: usize,
    actions: Vec<ActionModel>,
    terminal: Option<Vec<f64>>,
}

impl PomdpModel {
    pub fn new(
        n_states: usize,
        actions: Vec<ActionModel>,
        terminal: Option<Vec<f64>>,
    ) -> Result<Self> {
        if n_states == 0 || actions.is_empty() {
            return Err(Error::Contract(
                "model needs at least one state and one action".into(),
            ));
        }
        for (a, act) in actions.iter().enumerate() {
            let t = &act.transition;
            if t.n_rows() != n_states || t.n_cols() != n_states {
                return Err(Error::Contract(format!(
                    "action {a}: transition is not {n_states}x{n_states}"
                )));
            }
            if t.max_row_sum_error() > STOCHASTIC_TOLERANCE || t.min_value() < 0.0 {
                return Err(Error::Contract(format!(
                    "action {a}: transition rows are not stochastic"
                )));
            }
            let o = &act.observation;
            if o.n_rows() != n_states || o.n_cols() == 0 {
                return Err(Error::Contract(format!(
                    "action {a}: observation matrix has wrong shape"
                )));
            }
            if o.max_row_sum_error() > STOCHASTIC_TOLERANCE || o.min_value() < 0.0 {
                return Err(Error::Contract(format!(
                    "action {a}: observation rows are not stochastic"
                )));
            }
            if act.cost.len() != n_states || act.cost.iter().any(|c| !c.is_finite()) {
                return Err(Error::Contract(format!("action {a}: cost row invalid")));
            }
        }
        if let Some(v) = &terminal {
            if v.len() != n_states || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Contract("terminal values invalid".into()));
            }
        }
        Ok(Self {
            n_states,
            actions,
            terminal,
        })
    }

    /// Base POMDP over grid cells with every action surveying at `survey_level`.
    pub fn from_parts(
        transition: &TransitionModel,
        observation: &ObservationModel,
        survey_level: usize,
        cost: &CostTable,
    ) -> Result<Self> {
        if cost.n_actions() != transition.n_actions() {
            return Err(Error::Contract(format!(
                "{} cost rows for {} actions",
                cost.n_actions(),
                transition.n_actions()
            )));
        }
        let obs = observation
            .levels
            .get(survey_level)
            .cloned()
            .ok_or_else(|| Error::Index(format!("survey level {survey_level}")))?;
        let actions = transition
            .actions
            .iter()
            .zip(&transition.matrices)
            .zip(&cost.0)
            .map(|((ia, t), c)| ActionModel {
                label: format!("v{}", ia.level),
                intervention: ia.level,
                survey: survey_level,
                transition: Arc::clone(t),
                observation: Arc::clone(&obs),
                cost: c.clone(),
            })
            .collect();
        Self::new(transition.n_states(), actions, None)
    }

    /// Builds a model from dense toy matrices, `transitions[a][s][s']`,
    /// `observations[a][s'][o]`, `costs[a][s]`.
    pub fn from_dense(
        transitions: &[Vec<Vec<f64>>],
        observations: &[Vec<Vec<f64>>],
        costs: &[Vec<f64>],
    ) -> Result<Self> {
        if transitions.len() != observations.len() || transitions.len() != costs.len() {
            return Err(Error::Contract(
                "action counts differ between tables".into(),
            ));
        }
        let n = costs.first().map_or(0, Vec::len);
        let actions = (0..transitions.len())
            .map(|a| {
                Ok(ActionModel {
                    label: format!("a{a}"),
                    intervention: a,
                    survey: 0,
                    transition: Arc::new(CsrMatrix::from_dense(n, &transitions[a])?),
                    observation: Arc::new(DenseMatrix::from_rows(&observations[a])?),
                    cost: costs[a].clone(),
                })
            })
            .collect::<Result<_>>()?;
        Self::new(n, actions, None)
    }

    pub fn with_terminal(mut self, terminal: Vec<f64>) -> Result<Self> {
        self.terminal = Some(terminal);
        Self::new(self.n_states, self.actions, self.terminal)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[ActionModel] {
        &self.actions
    }

    pub fn action(&self, a: usize) -> &ActionModel {
        &self.actions[a]
    }

    /// Terminal value per state, zero unless set.
    pub fn terminal_values(&self) -> Vec<f64> {
        self.terminal
            .clone()
            .unwrap_or_else(|| vec![0.0; self.n_states])
    }

    pub fn cost_table(&self) -> CostTable {
        CostTable(self.actions.iter().map(|a| a.cost.clone()).collect())
    }

    /// Same model with every stage cost multiplied by `factor`.
    pub fn with_scaled_costs(&self, factor: f64) -> Self {
        let mut m = self.clone();
        for a in &mut m.actions {
            a.cost.iter_mut().for_each(|c| *c *= factor);
        }
        if let Some(t) = &mut m.terminal {
            t.iter_mut().for_each(|c| *c *= factor);
        }
        m
    }

    /// Same model restricted to the listed actions.
    pub fn with_actions(&self, keep: &[usize]) -> Result<Self> {
        let actions = keep
            .iter()
            .map(|&a| {
                self.actions
                    .get(a)
                    .cloned()
                    .ok_or_else(|| Error::Index(format!("action {a}")))
            })
            .collect::<Result<_>>()?;
        Self::new(self.n_states, actions, self.terminal.clone())
    }

    /// Fully observed view for MDP solvers.
    pub fn mdp(&self) -> MdpModel {
        MdpModel {
            transitions: self
                .actions
                .iter()
                .map(|a| Arc::clone(&a.transition))
                .collect(),
            cost: self.cost_table(),
            terminal: self.terminal.clone(),
        }
    }
}

/// Fully observed finite MDP.
#[derive(Debug, Clone)]
pub struct MdpModel {
    pub transitions: Vec<Arc<CsrMatrix>>,
    pub cost: CostTable,
    pub terminal: Option<Vec<f64>>,
}

impl MdpModel {
    pub fn new(transition: &TransitionModel, cost: CostTable) -> Result<Self> {
        let m = Self {
            transitions: transition.matrices.clone(),
            cost,
            terminal: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_states(&self) -> usize {
        self.transitions[0].n_rows()
    }

    pub fn n_actions(&self) -> usize {
        self.transitions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.transitions.is_empty() || self.cost.n_actions() != self.transitions.len() {
            return Err(Error::Contract("MDP needs one cost row per action".into()));
        }
        let n = self.n_states();
        for (a, t) in self.transitions.iter().enumerate() {
            if t.n_rows() != n || t.n_cols() != n {
                return Err(Error::Contract(format!(
                    "action {a}: transition is not {n}x{n}"
                )));
            }
            if self.cost.action(a).len() != n || self.cost.action(a).iter().any(|c| !c.is_finite())
            {
                return Err(Error::Contract(format!("action {a}: cost row invalid")));
            }
        }
        if let Some(v) = &self.terminal {
            if v.len() != n {
                return Err(Error::Contract("terminal values have wrong length".into()));
            }
        }
        Ok(())
    }
}
