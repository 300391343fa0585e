//! Dense beliefs and the discrete Bayes filter.

use serde::{Deserialize, Serialize};

use crate::epi::TransitionModel;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix};
use crate::obs::ObservationModel;

/// Accumulated rounding allowed before renormalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Contract("belief over an empty state space".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Contract(
                "belief weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Contract(format!("belief sums to {total}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Normalizes nonnegative weights with a positive total.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Contract(format!(
                "cannot normalize weights with total {total}"
            )));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(weights)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, state: usize) -> Self {
        let mut w = vec![0.0; n];
        w[state] = 1.0;
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.0
    }

    /// Prediction step `b'(s') = sum_s T[s, s'] b(s)` for an explicit matrix.
    pub fn predict_with(&self, transition: &CsrMatrix) -> Result<Belief> {
        if transition.n_rows() != self.len() {
            return Err(Error::Contract(format!(
                "belief has {} states, transition has {} rows",
                self.len(),
                transition.n_rows()
            )));
        }
        renormalized(transition.tmul_vec(&self.0))
    }

    pub fn predict(&self, action: usize, transition: &TransitionModel) -> Result<Belief> {
        self.predict_with(transition.matrix(action)?)
    }

    /// Bayes update on observation `obs` for an explicit observation matrix.
    pub fn update_with(&self, obs: usize, observation: &DenseMatrix) -> Result<Belief> {
        check_obs_dims(self, obs, observation)?;
        if observation.n_cols() == 1 && (0..self.len()).all(|s| observation.get(s, 0) == 1.0) {
            // sure observation carries no information
            return Ok(self.clone());
        }
        let mut post: Vec<f64> = self
            .0
            .iter()
            .enumerate()
            .map(|(s, b)| observation.get(s, obs) * b)
            .collect();
        let norm: f64 = post.iter().sum();
        if !(norm > 0.0) {
            return Err(Error::ImpossibleObservation {
                observation: obs,
                probability: norm,
            });
        }
        post.iter_mut().for_each(|w| *w /= norm);
        Ok(Belief(post))
    }

    pub fn update(
        &self,
        obs: usize,
        level: usize,
        observation: &ObservationModel,
    ) -> Result<Belief> {
        self.update_with(obs, observation.level(level)?)
    }

    /// `m(o) = sum_s' O[s', o] b(s')` for an explicit observation matrix.
    pub fn obs_marginal_with(&self, observation: &DenseMatrix) -> Result<Vec<f64>> {
        check_obs_dims(self, 0, observation)?;
        let mut m = vec![0.0; observation.n_cols()];
        for (s, &b) in self.0.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (mo, &o) in m.iter_mut().zip(observation.row(s)) {
                *mo += o * b;
            }
        }
        Ok(m)
    }

    pub fn obs_marginal(&self, level: usize, observation: &ObservationModel) -> Result<Vec<f64>> {
        self.obs_marginal_with(observation.level(level)?)
    }
}

fn check_obs_dims(b: &Belief, obs: usize, observation: &DenseMatrix) -> Result<()> {
    if observation.n_rows() != b.len() {
        return Err(Error::Contract(format!(
            "belief has {} states, observation matrix has {} rows",
            b.len(),
            observation.n_rows()
        )));
    }
    if obs >= observation.n_cols() {
        return Err(Error::Index(format!(
            "observation {obs} of {}",
            observation.n_cols()
        )));
    }
    Ok(())
}

fn renormalized(mut w: Vec<f64>) -> Result<Belief> {
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Contract(format!(
            "predicted belief sums to {total}; transition rows are not stochastic"
        )));
    }
    w.iter_mut().for_each(|x| *x /= total);
    Ok(Belief(w))
}
