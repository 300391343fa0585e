use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::dynamics::{tsir_step, TsirParams};
use super::grid::StateGrid;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// An intervention level and the fraction of susceptibles it vaccinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionAction {
    pub level: usize,
    pub coverage: f64,
}

/// Builds the action list from a coverage table indexed by level.
pub fn intervention_actions(coverage: &[f64]) -> Result<Vec<InterventionAction>> {
    if coverage.first() != Some(&0.0) {
        return Err(Error::Config(
            "intervention level 0 must have coverage 0".into(),
        ));
    }
    if coverage.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::Config(
            "intervention coverage must lie in [0, 1]".into(),
        ));
    }
    if coverage.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config(
            "intervention coverage must be nondecreasing in level".into(),
        ));
    }
    Ok(coverage
        .iter()
        .enumerate()
        .map(|(level, &coverage)| InterventionAction { level, coverage })
        .collect())
}

/// Per-action row-stochastic matrices over grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub actions: Vec<InterventionAction>,
    pub matrices: Vec<Arc<CsrMatrix>>,
}

impl TransitionModel {
    pub fn new(actions: Vec<InterventionAction>, matrices: Vec<CsrMatrix>) -> Result<Self> {
        if actions.len() != matrices.len() || matrices.is_empty() {
            return Err(Error::Contract(format!(
                "{} actions but {} matrices",
                actions.len(),
                matrices.len()
            )));
        }
        let n = matrices[0].n_rows();
        for m in &matrices {
            if m.n_rows() != n || m.n_cols() != n {
                return Err(Error::Contract(
                    "transition matrices must be square and equal-sized".into(),
                ));
            }
        }
        Ok(Self {
            actions,
            matrices: matrices.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.matrices[0].n_rows()
    }

    pub fn n_actions(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrix(&self, action: usize) -> Result<&CsrMatrix> {
        self.matrices
            .get(action)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::Index(format!("action {action} of {}", self.matrices.len())))
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.matrices
            .iter()
            .map(|m| m.max_row_sum_error())
            .fold(0.0, f64::max)
    }
}

/// Equal-weight quantile draws of the multiplicative noise, lognormal with
/// median 1 and log-scale `noise_sd`.
pub fn noise_quadrature(noise_sd: f64, n_quadrature: usize) -> Vec<f64> {
    if noise_sd == 0.0 {
        return vec![1.0; n_quadrature];
    }
    let std_normal = Normal::standard();
    (1..=n_quadrature)
        .map(|j| {
            let u = (j as f64 - 0.5) / n_quadrature as f64;
            (noise_sd * std_normal.inverse_cdf(u)).exp()
        })
        .collect()
}

/// Propagates each cell's representative point through one TSIR step at every
/// quadrature draw and bins the results.
pub fn build_transition(
    grid: &StateGrid,
    params: &TsirParams,
    actions: &[InterventionAction],
    n_quadrature: usize,
) -> Result<TransitionModel> {
    if n_quadrature == 0 {
        return Err(Error::Config("n_quadrature must be >= 1".into()));
    }
    if actions.is_empty() {
        return Err(Error::Config(
            "at least one intervention action is required".into(),
        ));
    }
    params.validate()?;
    if grid.population() != params.population {
        return Err(Error::Config(
            "grid population differs from model population".into(),
        ));
    }
    let draws = noise_quadrature(params.noise_sd, n_quadrature);
    let weight = 1.0 / n_quadrature as f64;
    let n = grid.n_cells();

    let mut matrices = Vec::with_capacity(actions.len());
    for action in actions {
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|cell| {
                let src = grid.representative(cell);
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(draws.len());
                for &eps in &draws {
                    let dst = tsir_step(&src, action.coverage, params, eps)?;
                    row.push((grid.cell_of(&dst), weight));
                }
                Ok(normalize_row(row))
            })
            .collect::<Result<_>>()?;
        matrices.push(CsrMatrix::from_rows(n, rows)?);
    }
    TransitionModel::new(actions.to_vec(), matrices)
}

fn normalize_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|&(c, _)| c);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (c, w) in row {
        match merged.last_mut() {
            Some((lc, lw)) if *lc == c => *lw += w,
            _ => merged.push((c, w)),
        }
    }
    let total: f64 = merged.iter().map(|(_, w)| w).sum();
    merged.iter_mut().for_each(|(_, w)| *w /= total);
    merged
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(noise_sd: f64) -> TsirParams {
        TsirParams::seasonal_cosine(2.0e-4, 0.3, 0.97, 40.0, noise_sd, 10_000.0).unwrap()
    }

    #[test]
    fn deterministic_noise_gives_point_masses() {
        let p = params(0.0);
        let g = StateGrid::new(p.population, 6, 6).unwrap();
        let acts = intervention_actions(&[0.0, 0.5]).unwrap();
        let t = build_transition(&g, &p, &acts, 8).unwrap();
        for m in &t.matrices {
            for r in 0..m.n_rows() {
                let (cols, vals) = m.row(r);
                assert_eq!(cols.len(), 1);
                assert_eq!(vals[0], 1.0);
            }
        }
    }

    #[test]
    fn rows_are_stochastic() {
        let p = params(0.3);
        let g = StateGrid::new(p.population, 8, 10).unwrap();
        let acts = intervention_actions(&[0.0, 0.3, 0.9]).unwrap();
        let t = build_transition(&g, &p, &acts, 32).unwrap();
        assert!(t.max_row_sum_error() <= 1e-9);
        assert!(t.matrices.iter().all(|m| m.min_value() >= 0.0));
    }

    #[test]
    fn zero_quadrature_rejected() {
        let p = params(0.3);
        let g = StateGrid::new(p.population, 3, 3).unwrap();
        let acts = intervention_actions(&[0.0]).unwrap();
        assert!(build_transition(&g, &p, &acts, 0).is_err());
    }

    #[test]
    fn action_table_validation() {
        assert!(intervention_actions(&[0.1, 0.5]).is_err());
        assert!(intervention_actions(&[0.0, 0.5, 0.4]).is_err());
        assert!(intervention_actions(&[0.0, 1.2]).is_err());
        assert_eq!(intervention_actions(&[0.0, 0.5]).unwrap()[1].coverage, 0.5);
    }

    #[test]
    fn quadrature_median_is_one() {
        let d = noise_quadrature(0.4, 5);
        assert!((d[2] - 1.0).abs() < 1e-15);
        assert!(d.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn build_is_deterministic() {
        let p = params(0.25);
        let g = StateGrid::new(p.population, 5, 7).unwrap();
        let acts = intervention_actions(&[0.0, 0.4]).unwrap();
        let a = build_transition(&g, &p, &acts, 16).unwrap();
        let b = build_transition(&g, &p, &acts, 16).unwrap();
        assert_eq!(a, b);
    }
}
