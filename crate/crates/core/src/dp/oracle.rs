//! Brute-force belief-tree evaluation, for checking the vector solvers on
//! small problems.

use super::model::PomdpModel;
use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Largest number of tree leaves [`evaluate_exact_tree`] will expand.
pub const TREE_LEAF_LIMIT: u128 = 10_000_000;

/// `V_0(b0)` for a `horizon`-stage problem by enumerating every action and
/// observation sequence.
pub fn evaluate_exact_tree(
    b0: &Belief,
    model: &PomdpModel,
    horizon: usize,
    discount: f64,
) -> Result<f64> {
    if b0.len() != model.n_states() {
        return Err(Error::Contract(
            "belief dimension differs from model".into(),
        ));
    }
    let branching: u128 = model
        .actions()
        .iter()
        .map(|a| a.n_observations() as u128)
        .sum();
    let leaves = (0..horizon).try_fold(1u128, |acc, _| acc.checked_mul(branching));
    match leaves {
        Some(l) if l <= TREE_LEAF_LIMIT => {}
        other => {
            return Err(Error::TreeTooLarge {
                leaves: other.unwrap_or(u128::MAX),
                limit: TREE_LEAF_LIMIT,
            })
        }
    }
    let terminal = model.terminal_values();
    value(b0, model, horizon, discount, &terminal)
}

fn value(
    b: &Belief,
    model: &PomdpModel,
    remaining: usize,
    discount: f64,
    terminal: &[f64],
) -> Result<f64> {
    if remaining == 0 {
        return Ok(dot(terminal, b.weights()));
    }
    let mut best = f64::INFINITY;
    for act in model.actions() {
        let mut q = dot(&act.cost, b.weights());
        let pred = b.predict_with(&act.transition)?;
        let marg = pred.obs_marginal_with(&act.observation)?;
        for (o, &p) in marg.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let post = pred.update_with(o, &act.observation)?;
            q += discount * p * value(&post, model, remaining - 1, discount, terminal)?;
        }
        best = best.min(q);
    }
    Ok(best)
}
