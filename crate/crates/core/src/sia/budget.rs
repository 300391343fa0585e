use std::sync::Arc;

use crate::belief::Belief;
use crate::dp::{ActionModel, PomdpModel};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// A model whose state also counts remaining campaign units, index
/// `remaining * n_base + cell`.
#[derive(Debug, Clone)]
pub struct BudgetedModel {
    pub n_base: usize,
    pub units: usize,
    pub model: PomdpModel,
}

impl BudgetedModel {
    /// Base belief with the full budget remaining.
    pub fn lift_belief(&self, base: &Belief) -> Result<Belief> {
        if base.len() != self.n_base {
            return Err(Error::Contract(
                "belief dimension differs from base model".into(),
            ));
        }
        let mut w = vec![0.0; self.n_base * (self.units + 1)];
        w[self.units * self.n_base..].copy_from_slice(base.weights());
        Belief::new(w)
    }

    pub fn split(&self, index: usize) -> (usize, usize) {
        (index % self.n_base, index / self.n_base)
    }

    /// Per-state values repeated over budget levels.
    pub fn lift_values(&self, values: &[f64]) -> Vec<f64> {
        values.repeat(self.units + 1)
    }
}

/// Appends a remaining-budget counter. Action `a` spends `cost_units[a]`
/// units; when fewer remain it behaves like `fallback[a]` and is charged
/// `penalty` on top.
pub fn with_campaign_budget(
    base: &PomdpModel,
    cost_units: &[usize],
    fallback: &[usize],
    units: usize,
    penalty: f64,
) -> Result<BudgetedModel> {
    let n_actions = base.n_actions();
    if cost_units.len() != n_actions || fallback.len() != n_actions {
        return Err(Error::Config(
            "budget tables need one entry per action".into(),
        ));
    }
    if fallback
        .iter()
        .any(|&f| f >= n_actions || cost_units[f] != 0)
    {
        return Err(Error::Config(
            "fallback actions must exist and spend no budget".into(),
        ));
    }
    if !(penalty >= 0.0 && penalty.is_finite()) {
        return Err(Error::Config(
            "budget penalty must be finite and >= 0".into(),
        ));
    }
    let n = base.n_states();
    let levels = units + 1;
    let mut actions = Vec::with_capacity(n_actions);
    for (a, act) in base.actions().iter().enumerate() {
        let mut rows = Vec::with_capacity(n * levels);
        let mut cost = Vec::with_capacity(n * levels);
        for r in 0..levels {
            let (effective, next_r, extra) = if cost_units[a] <= r {
                (a, r - cost_units[a], 0.0)
            } else {
                (fallback[a], r, penalty)
            };
            let t = &base.action(effective).transition;
            for s in 0..n {
                let (cols, probs) = t.row(s);
                rows.push(
                    cols.iter()
                        .zip(probs)
                        .map(|(&c, &p)| (next_r * n + c, p))
                        .collect(),
                );
                cost.push(base.action(effective).cost[s] + extra);
            }
        }
        actions.push(ActionModel {
            label: act.label.clone(),
            intervention: act.intervention,
            survey: act.survey,
            transition: Arc::new(CsrMatrix::from_rows(n * levels, rows)?),
            observation: Arc::new(act.observation.tile_rows(levels)),
            cost,
        });
    }
    let terminal = base.terminal_values().repeat(levels);
    let model = PomdpModel::new(n * levels, actions, Some(terminal))?;
    Ok(BudgetedModel {
        n_base: n,
        units,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{solve_pomdp, SolveSettings};

    fn base() -> PomdpModel {
        PomdpModel::from_dense(
            &[
                vec![vec![0.5, 0.5], vec![0.2, 0.8]],
                vec![vec![1.0, 0.0], vec![0.9, 0.1]],
            ],
            &[vec![vec![1.0], vec![1.0]], vec![vec![1.0], vec![1.0]]],
            &[vec![0.0, 10.0], vec![1.0, 11.0]],
        )
        .unwrap()
    }

    #[test]
    fn budget_counter_is_consistent() {
        let m = with_campaign_budget(&base(), &[0, 1], &[0, 0], 2, 100.0).unwrap();
        assert_eq!(m.model.n_states(), 6);
        let t = &m.model.action(1).transition;
        // with two units left a campaign moves to level 1
        let (cols, _) = t.row(2 * 2);
        assert!(cols.iter().all(|&c| m.split(c).1 == 1));
        // with none left it acts like the idle action and pays the penalty
        assert_eq!(m.model.action(1).cost[0], 100.0);
        assert_eq!(t.row(0), base().action(0).transition.row(0));
    }

    #[test]
    fn budget_never_helps() {
        let b = base();
        let s = SolveSettings::finite(5, 0.95);
        let free = solve_pomdp(&b, &s).unwrap();
        let mut last = f64::INFINITY;
        for units in 0..=5 {
            let m = with_campaign_budget(&b, &[0, 1], &[0, 0], units, 1e6).unwrap();
            let p = solve_pomdp(&m.model, &s).unwrap();
            let b0 = Belief::uniform(2);
            let v = p.value(0, &m.lift_belief(&b0).unwrap());
            assert!(v >= free.value(0, &b0) - 1e-9);
            assert!(v <= last + 1e-9);
            last = v;
        }
        assert!((last - free.value(0, &Belief::uniform(2))).abs() < 1e-9);
    }
}
