//! Unknown model parameters appended to the planning state.
//!
//! Each unknown parameter lives on a sorted discrete support and follows a
//! Gaussian random walk `p' = p + theta`, `theta ~ N(0, variance)`, binned
//! onto the support by nearest point. The augmented index is
//! `point * n_base + cell`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::belief::Belief;
use crate::epi::{build_transition, InterventionAction, StateGrid, TransitionModel, TsirParams};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix};
use crate::obs::ObservationModel;

/// Default cap on augmented state count.
pub const DEFAULT_STATE_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Factor applied to every seasonal transmission rate.
    BetaMultiplier,
    AlphaMix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamAxis {
    pub kind: ParamKind,
    pub support: Vec<f64>,
    /// Random-walk variance per step.
    pub variance: f64,
}

/// Product grid over one or more unknown parameters. The first axis varies
/// slowest in the flat point index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub axes: Vec<ParamAxis>,
}

impl ParamGrid {
    pub fn new(axes: Vec<ParamAxis>) -> Result<Self> {
        let g = Self { axes };
        g.validate()?;
        Ok(g)
    }

    pub fn single(kind: ParamKind, support: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(vec![ParamAxis {
            kind,
            support,
            variance,
        }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Config(
                "parameter grid needs at least one axis".into(),
            ));
        }
        for (k, ax) in self.axes.iter().enumerate() {
            if ax.support.is_empty() || ax.support.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!(
                    "parameter axis {k}: support empty or non-finite"
                )));
            }
            if ax.support.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!(
                    "parameter axis {k}: support must be strictly increasing"
                )));
            }
            if !(ax.variance >= 0.0 && ax.variance.is_finite()) {
                return Err(Error::Config(format!(
                    "parameter axis {k}: variance must be >= 0"
                )));
            }
            if self.axes[..k].iter().any(|other| other.kind == ax.kind) {
                return Err(Error::Config(format!("parameter axis {k}: kind repeated")));
            }
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(|a| a.support.len()).product()
    }

    /// Support index on every axis of flat point `index`.
    pub fn coords(&self, index: usize) -> Vec<usize> {
        let mut rest = index;
        let mut out = vec![0; self.axes.len()];
        for (k, ax) in self.axes.iter().enumerate().rev() {
            out[k] = rest % ax.support.len();
            rest /= ax.support.len();
        }
        out
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        self.coords(index)
            .iter()
            .zip(&self.axes)
            .map(|(&c, ax)| ax.support[c])
            .collect()
    }

    /// Base parameters with the values of point `index` substituted.
    pub fn apply(&self, base: &TsirParams, index: usize) -> Result<TsirParams> {
        let mut p = base.clone();
        for (ax, v) in self.axes.iter().zip(self.point(index)) {
            p = match ax.kind {
                ParamKind::BetaMultiplier => p.with_beta_multiplier(v)?,
                ParamKind::AlphaMix => TsirParams { alpha_mix: v, ..p },
            };
        }
        p.validate()?;
        Ok(p)
    }

    /// Transition matrix of the joint parameter random walk.
    pub fn walk_matrix(&self) -> DenseMatrix {
        let per_axis: Vec<DenseMatrix> = self
            .axes
            .iter()
            .map(|ax| random_walk_matrix(&ax.support, ax.variance))
            .collect();
        let n = self.n_points();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let ci = self.coords(i);
            for j in 0..n {
                let cj = self.coords(j);
                out.row_mut(i)[j] = per_axis
                    .iter()
                    .zip(ci.iter().zip(&cj))
                    .map(|(m, (&a, &b))| m.get(a, b))
                    .product();
            }
        }
        out
    }
}

/// One-step law of `x + N(0, variance)` binned to the nearest support point;
/// mass beyond the outer midpoints goes to the end points.
pub fn random_walk_matrix(support: &[f64], variance: f64) -> DenseMatrix {
    let n = support.len();
    let mut m = DenseMatrix::zeros(n, n);
    if variance == 0.0 {
        for i in 0..n {
            m.row_mut(i)[i] = 1.0;
        }
        return m;
    }
    let mids: Vec<f64> = support.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    for (i, &x) in support.iter().enumerate() {
        let law = Normal::new(x, variance.sqrt()).expect("positive variance");
        let row = m.row_mut(i);
        for j in 0..n {
            let upper = if j + 1 < n { law.cdf(mids[j]) } else { 1.0 };
            let lower = if j > 0 { law.cdf(mids[j - 1]) } else { 0.0 };
            row[j] = (upper - lower).max(0.0);
        }
    }
    m
}

/// Transition model over `(point, cell)` plus the grid it was built from.
#[derive(Debug, Clone)]
pub struct ParamAugmented {
    pub params: ParamGrid,
    pub n_base: usize,
    pub transition: TransitionModel,
}

impl ParamAugmented {
    pub fn n_states(&self) -> usize {
        self.n_base * self.params.n_points()
    }

    pub fn index(&self, point: usize, cell: usize) -> usize {
        point * self.n_base + cell
    }

    /// Observation rows depend only on the cell.
    pub fn lift_observation(&self, observation: &ObservationModel) -> Result<ObservationModel> {
        if observation.levels.iter().any(|o| o.n_rows() != self.n_base) {
            return Err(Error::Contract(
                "observation rows differ from base state count".into(),
            ));
        }
        let copies = self.params.n_points();
        Ok(ObservationModel {
            levels: observation
                .levels
                .iter()
                .map(|o| Arc::new(o.tile_rows(copies)))
                .collect(),
        })
    }

    /// Per-state values repeated over parameter points.
    pub fn lift_values(&self, values: &[f64]) -> Vec<f64> {
        values.repeat(self.params.n_points())
    }

    /// Base belief with an independent prior over parameter points.
    pub fn lift_belief(&self, base: &Belief, prior: &[f64]) -> Result<Belief> {
        if base.len() != self.n_base || prior.len() != self.params.n_points() {
            return Err(Error::Contract(
                "belief or prior does not fit the augmented space".into(),
            ));
        }
        let w = prior
            .iter()
            .flat_map(|&p| base.weights().iter().map(move |&b| p * b))
            .collect();
        Belief::from_weights(w)
    }

    pub fn base_marginal(&self, belief: &Belief) -> Result<Belief> {
        if belief.len() != self.n_states() {
            return Err(Error::Contract(
                "belief dimension differs from augmented space".into(),
            ));
        }
        let w = belief.weights();
        Belief::from_weights(
            (0..self.n_base)
                .map(|c| {
                    (0..self.params.n_points())
                        .map(|p| w[p * self.n_base + c])
                        .sum()
                })
                .collect(),
        )
    }
}

/// Builds `T[(i, s), (j, s')] = T^(p_i)[s, s'] * P[i, j]` for every action,
/// where `T^(p_i)` is the base model built with parameter point `i`.
pub fn augment_with_params(
    grid: &StateGrid,
    params: &TsirParams,
    actions: &[InterventionAction],
    n_quadrature: usize,
    pg: &ParamGrid,
    state_budget: usize,
) -> Result<ParamAugmented> {
    pg.validate()?;
    let n_base = grid.n_cells();
    let n_points = pg.n_points();
    let total = n_base
        .checked_mul(n_points)
        .filter(|&t| t <= state_budget)
        .ok_or_else(|| {
            Error::Config(format!(
                "parameter-augmented space of {n_base} x {n_points} states exceeds the budget of {state_budget}"
            ))
        })?;
    let blocks: Vec<TransitionModel> = (0..n_points)
        .map(|p| build_transition(grid, &pg.apply(params, p)?, actions, n_quadrature))
        .collect::<Result<_>>()?;
    let walk = pg.walk_matrix();
    let matrices = (0..actions.len())
        .map(|a| {
            let rows = (0..n_points)
                .flat_map(|i| {
                    let block = &blocks[i].matrices[a];
                    let walk_row = walk.row(i);
                    (0..n_base).map(move |s| {
                        let (cols, probs) = block.row(s);
                        walk_row
                            .iter()
                            .enumerate()
                            .filter(|(_, &w)| w > 0.0)
                            .flat_map(|(j, &w)| {
                                cols.iter()
                                    .zip(probs)
                                    .map(move |(&c, &p)| (j * n_base + c, w * p))
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            CsrMatrix::from_rows(total, rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamAugmented {
        params: pg.clone(),
        n_base,
        transition: TransitionModel::new(actions.to_vec(), matrices)?,
    })
}

/// Marginal belief over parameter points.
pub fn param_posterior(belief: &Belief, pg: &ParamGrid) -> Result<Vec<f64>> {
    let n_points = pg.n_points();
    if !belief.len().is_multiple_of(n_points) || belief.is_empty() {
        return Err(Error::Contract(format!(
            "belief of {} states does not split into {n_points} parameter blocks",
            belief.len()
        )));
    }
    let n_base = belief.len() / n_points;
    Ok(belief
        .weights()
        .chunks(n_base)
        .map(|block| block.iter().sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epi::{build_grid, intervention_actions};
    use crate::obs::{build_observation, SurveyDesign, TestCharacteristics};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> TsirParams {
        TsirParams::seasonal_cosine(2e-4, 0.3, 0.97, 60.0, 0.2, 5000.0).unwrap()
    }

    /// Composite Simpson integral of the N(x, var) density over `[a, b]`.
    fn simpson_mass(x: f64, var: f64, a: f64, b: f64) -> f64 {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let pdf = |t: f64| {
            (-(t - x).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        };
        let mut sum = pdf(a) + pdf(b);
        for k in 1..n {
            let t = a + k as f64 * h;
            sum += if k % 2 == 1 { 4.0 } else { 2.0 } * pdf(t);
        }
        sum * h / 3.0
    }

    #[test]
    fn walk_matches_integrated_density() {
        let support = [0.8, 1.0, 1.3];
        let var = 0.02;
        let m = random_walk_matrix(&support, var);
        let far = 40.0 * var.sqrt();
        let cuts = [support[0] - far, 0.9, 1.15, support[2] + far];
        for (i, &x) in support.iter().enumerate() {
            for j in 0..3 {
                let want = simpson_mass(x, var, cuts[j], cuts[j + 1]);
                assert!(
                    (m.get(i, j) - want).abs() < 1e-9,
                    "({i},{j}) {} vs {want}",
                    m.get(i, j)
                );
            }
        }
        assert!(m.max_row_sum_error() < 1e-12);
    }

    #[test]
    fn frozen_walk_is_block_diagonal() {
        let p = params();
        let grid = build_grid(&p, 4, 4).unwrap();
        let acts = intervention_actions(&[0.0, 0.5]).unwrap();
        let pg = ParamGrid::single(ParamKind::BetaMultiplier, vec![0.8, 1.2], 0.0).unwrap();
        let aug = augment_with_params(&grid, &p, &acts, 8, &pg, DEFAULT_STATE_BUDGET).unwrap();
        let n = grid.n_cells();
        for (k, mult) in [0.8, 1.2].into_iter().enumerate() {
            let fixed =
                build_transition(&grid, &p.with_beta_multiplier(mult).unwrap(), &acts, 8).unwrap();
            for a in 0..acts.len() {
                let t = &aug.transition.matrices[a];
                for s in 0..n {
                    let (cols, probs) = t.row(k * n + s);
                    let (fc, fp) = fixed.matrices[a].row(s);
                    let shifted: Vec<usize> = fc.iter().map(|c| c + k * n).collect();
                    assert_eq!(cols, shifted.as_slice());
                    assert_eq!(probs, fp);
                }
            }
        }
    }

    #[test]
    fn single_point_is_base_model() {
        let p = params();
        let grid = build_grid(&p, 3, 3).unwrap();
        let acts = intervention_actions(&[0.0, 0.3]).unwrap();
        let pg = ParamGrid::single(ParamKind::BetaMultiplier, vec![1.0], 0.5).unwrap();
        let aug = augment_with_params(&grid, &p, &acts, 8, &pg, DEFAULT_STATE_BUDGET).unwrap();
        let base = build_transition(&grid, &p, &acts, 8).unwrap();
        assert_eq!(aug.transition.matrices, base.matrices);
    }

    #[test]
    fn parameter_marginal_follows_walk() {
        let p = params();
        let grid = build_grid(&p, 3, 3).unwrap();
        let acts = intervention_actions(&[0.0]).unwrap();
        let pg = ParamGrid::single(ParamKind::BetaMultiplier, vec![0.8, 1.0, 1.3], 0.02).unwrap();
        let aug = augment_with_params(&grid, &p, &acts, 8, &pg, DEFAULT_STATE_BUDGET).unwrap();
        let walk = random_walk_matrix(&[0.8, 1.0, 1.3], 0.02);
        let n = grid.n_cells();
        assert!(aug.transition.max_row_sum_error() < 1e-9);
        let t = &aug.transition.matrices[0];
        for i in 0..3 {
            for s in 0..n {
                for j in 0..3 {
                    let m: f64 = (0..n).map(|c| t.get(i * n + s, j * n + c)).sum();
                    assert!((m - walk.get(i, j)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn budget_enforced() {
        let p = params();
        let grid = build_grid(&p, 3, 3).unwrap();
        let acts = intervention_actions(&[0.0]).unwrap();
        let pg = ParamGrid::single(ParamKind::BetaMultiplier, vec![0.9, 1.1], 0.0).unwrap();
        assert!(matches!(
            augment_with_params(&grid, &p, &acts, 4, &pg, grid.n_cells()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn grid_validation_and_product_indexing() {
        assert!(ParamGrid::single(ParamKind::AlphaMix, vec![], 0.0).is_err());
        assert!(ParamGrid::single(ParamKind::AlphaMix, vec![0.9, 0.9], 0.0).is_err());
        assert!(ParamGrid::single(ParamKind::AlphaMix, vec![0.9], -1.0).is_err());
        let pg = ParamGrid::new(vec![
            ParamAxis {
                kind: ParamKind::BetaMultiplier,
                support: vec![0.5, 1.0, 2.0],
                variance: 0.01,
            },
            ParamAxis {
                kind: ParamKind::AlphaMix,
                support: vec![0.9, 1.0],
                variance: 0.0,
            },
        ])
        .unwrap();
        assert_eq!(pg.n_points(), 6);
        assert_eq!(pg.point(3), vec![1.0, 1.0]);
        let applied = pg.apply(&params(), 5).unwrap();
        assert_eq!(applied.alpha_mix, 1.0);
        assert!((applied.beta_seasonal[0] - 2.0 * params().beta_seasonal[0]).abs() < 1e-18);
        let w = pg.walk_matrix();
        assert!(w.max_row_sum_error() < 1e-12);
        // frozen second axis: no mass moves between alpha values
        assert_eq!(w.get(0, 1), 0.0);
    }

    #[test]
    fn posterior_marginals() {
        let pg = ParamGrid::single(ParamKind::BetaMultiplier, vec![0.8, 1.0, 1.2], 0.0).unwrap();
        let post = param_posterior(&Belief::uniform(12), &pg).unwrap();
        assert!(post.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let mut w = vec![0.0; 12];
        w[5] = 0.3;
        w[7] = 0.7;
        assert_eq!(
            param_posterior(&Belief::new(w).unwrap(), &pg).unwrap(),
            vec![0.0, 1.0, 0.0]
        );
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = Belief::from_weights((0..12).map(|_| rng.random::<f64>()).collect()).unwrap();
        let post = param_posterior(&b, &pg).unwrap();
        for (k, p) in post.iter().enumerate() {
            let want: f64 = (0..4).map(|c| b.weights()[k * 4 + c]).sum();
            assert!((p - want).abs() < 1e-15);
        }
        assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(param_posterior(&Belief::uniform(7), &pg).is_err());
    }

    #[test]
    fn uninformative_survey_leaves_parameter_marginal() {
        let p = params();
        let grid = build_grid(&p, 4, 4).unwrap();
        let acts = intervention_actions(&[0.0]).unwrap();
        let pg = ParamGrid::single(ParamKind::BetaMultiplier, vec![0.7, 1.3], 0.01).unwrap();
        let aug = augment_with_params(&grid, &p, &acts, 8, &pg, DEFAULT_STATE_BUDGET).unwrap();
        let design = SurveyDesign::new(vec![0.0, 0.05], 5, p.population).unwrap();
        let q = TestCharacteristics::uninformative(0.6).unwrap();
        let om = aug
            .lift_observation(&build_observation(&grid, &design, &q).unwrap())
            .unwrap();
        let b0 = aug
            .lift_belief(&Belief::uniform(grid.n_cells()), &[0.5, 0.5])
            .unwrap();
        let pred = b0.predict(0, &aug.transition).unwrap();
        let marg = pred.obs_marginal(1, &om).unwrap();
        for (o, &prob) in marg.iter().enumerate() {
            if prob <= 0.0 {
                continue;
            }
            let post = pred.update(o, 1, &om).unwrap();
            let a = param_posterior(&post, &pg).unwrap();
            let b = param_posterior(&pred, &pg).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
