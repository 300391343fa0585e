use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::MdpModel;
use super::settings::SolveSettings;
use crate::error::{Error, Result};

/// Largest state count accepted by the dense policy-evaluation solve.
pub const POLICY_EVALUATION_MAX_STATES: usize = 5000;

/// Values and greedy actions. Finite-horizon solutions hold one entry per
/// decision stage `0..K`; stationary solutions hold a single entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSolution {
    pub values: Vec<Vec<f64>>,
    pub policy: Vec<Vec<usize>>,
    pub stationary: bool,
    pub iterations: usize,
}

impl MdpSolution {
    /// Action at decision stage `t` (stationary solutions ignore `t`).
    pub fn action(&self, t: usize, state: usize) -> usize {
        let k = if self.stationary { 0 } else { t };
        self.policy[k][state]
    }
}

/// `min_a [l(s,a) + discount * (T_a v)(s)]` with lowest-index tie-breaking.
fn bellman(model: &MdpModel, next: &[f64], discount: f64) -> (Vec<f64>, Vec<usize>) {
    let n = model.n_states();
    let mut best = vec![f64::INFINITY; n];
    let mut arg = vec![0usize; n];
    for (a, t) in model.transitions.iter().enumerate() {
        let expect = t.mul_vec(next);
        let cost = model.cost.action(a);
        for s in 0..n {
            let q = cost[s] + discount * expect[s];
            if q < best[s] {
                best[s] = q;
                arg[s] = a;
            }
        }
    }
    (best, arg)
}

pub fn mdp_value_iteration(model: &MdpModel, settings: &SolveSettings) -> Result<MdpSolution> {
    settings.validate()?;
    model.validate()?;
    let terminal = model
        .terminal
        .clone()
        .unwrap_or_else(|| vec![0.0; model.n_states()]);
    if settings.infinite_horizon {
        let mut v = terminal;
        for it in 1..=settings.max_iterations {
            let (next, policy) = bellman(model, &v, settings.discount);
            let residual = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            if residual < settings.tolerance {
                return Ok(MdpSolution {
                    values: vec![v],
                    policy: vec![policy],
                    stationary: true,
                    iterations: it,
                });
            }
            if it == settings.max_iterations {
                return Err(Error::NotConverged {
                    iterations: it,
                    residual,
                });
            }
        }
        unreachable!("max_iterations >= 1")
    } else {
        let k = settings.horizon;
        let mut values = vec![Vec::new(); k];
        let mut policy = vec![Vec::new(); k];
        let mut next = terminal;
        for stage in (0..k).rev() {
            let (v, p) = bellman(model, &next, settings.discount);
            next = v.clone();
            values[stage] = v;
            policy[stage] = p;
        }
        Ok(MdpSolution {
            values,
            policy,
            stationary: false,
            iterations: k,
        })
    }
}

fn q_value(model: &MdpModel, s: usize, a: usize, values: &[f64], discount: f64) -> f64 {
    let (cols, probs) = model.transitions[a].row(s);
    let expect: f64 = cols.iter().zip(probs).map(|(&c, &p)| p * values[c]).sum();
    model.cost.action(a)[s] + discount * expect
}

/// Solves `(I - discount * T_pi) v = l_pi` densely.
fn evaluate_policy(model: &MdpModel, policy: &[usize], discount: f64) -> Result<Vec<f64>> {
    let n = model.n_states();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        let act = policy[s];
        let (cols, vals) = model.transitions[act].row(s);
        for (&c, &p) in cols.iter().zip(vals) {
            a[(s, c)] -= discount * p;
        }
        rhs[s] = model.cost.action(act)[s];
    }
    let v = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("policy evaluation system is singular".into()))?;
    Ok(v.iter().copied().collect())
}

/// Howard policy iteration for the stationary discounted problem.
pub fn mdp_policy_iteration(model: &MdpModel, settings: &SolveSettings) -> Result<MdpSolution> {
    settings.validate()?;
    model.validate()?;
    if settings.discount >= 1.0 {
        return Err(Error::Config("policy iteration needs discount < 1".into()));
    }
    let n = model.n_states();
    if n > POLICY_EVALUATION_MAX_STATES {
        return Err(Error::Solver(format!(
            "policy evaluation limited to {POLICY_EVALUATION_MAX_STATES} states, model has {n}"
        )));
    }
    let zero = vec![0.0; n];
    let (_, mut policy) = bellman(model, &zero, settings.discount);
    let mut values = evaluate_policy(model, &policy, settings.discount)?;
    for it in 1..=settings.max_iterations {
        let (q_best, greedy) = bellman(model, &values, settings.discount);
        let mut changed = false;
        let mut next_policy = policy.clone();
        for s in 0..n {
            // switch only on a strict improvement to avoid cycling between ties
            let current = q_value(model, s, policy[s], &values, settings.discount);
            let slack = 1e-12 * current.abs().max(1.0);
            if q_best[s] < current - slack {
                next_policy[s] = greedy[s];
                changed = true;
            }
        }
        if !changed {
            return Ok(MdpSolution {
                values: vec![values],
                policy: vec![policy],
                stationary: true,
                iterations: it,
            });
        }
        let next_values = evaluate_policy(model, &next_policy, settings.discount)?;
        // policy improvement theorem: values never increase
        for (s, (new, old)) in next_values.iter().zip(&values).enumerate() {
            if *new > old + 1e-8 * old.abs().max(1.0) {
                return Err(Error::Solver(format!(
                    "policy improvement increased the value of state {s} from {old} to {new}"
                )));
            }
        }
        policy = next_policy;
        values = next_values;
    }
    Err(Error::NotConverged {
        iterations: settings.max_iterations,
        residual: f64::NAN,
    })
}
