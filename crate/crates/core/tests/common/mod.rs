#![allow(dead_code)]

use epiplan::belief::Belief;
use epiplan::dp::{MdpModel, PomdpModel};
use epiplan::linalg::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability vector with strictly positive entries.
pub fn simplex_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n)
        .map(|_| -(rng.random::<f64>().max(1e-12)).ln())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn random_belief(rng: &mut ChaCha8Rng, n: usize) -> Belief {
    Belief::new(simplex_point(rng, n)).unwrap()
}

fn stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| simplex_point(rng, cols)).collect()
}

/// Dense random POMDP with costs in `[0, 10)`.
pub fn random_pomdp(seed: u64, n: usize, actions: usize, obs: usize) -> PomdpModel {
    let mut r = rng(seed);
    let t: Vec<_> = (0..actions).map(|_| stochastic(&mut r, n, n)).collect();
    let o: Vec<_> = (0..actions).map(|_| stochastic(&mut r, n, obs)).collect();
    let c: Vec<Vec<f64>> = (0..actions)
        .map(|_| (0..n).map(|_| 10.0 * r.random::<f64>()).collect())
        .collect();
    PomdpModel::from_dense(&t, &o, &c).unwrap()
}

/// Random sparse MDP, each row reaching up to four successors.
pub fn random_mdp(seed: u64, n: usize, actions: usize) -> MdpModel {
    let mut r = rng(seed);
    let transitions = (0..actions)
        .map(|_| {
            let rows = (0..n)
                .map(|_| {
                    let k = r.random_range(1..=4);
                    let w = simplex_point(&mut r, k);
                    w.into_iter().map(|p| (r.random_range(0..n), p)).collect()
                })
                .collect();
            Arc::new(CsrMatrix::from_rows(n, rows).unwrap())
        })
        .collect();
    let cost = epiplan::dp::CostTable(
        (0..actions)
            .map(|_| (0..n).map(|_| 10.0 * r.random::<f64>()).collect())
            .collect(),
    );
    MdpModel {
        transitions,
        cost,
        terminal: None,
    }
}

/// The same dynamics and costs with an identity observation for every action.
pub fn perfectly_observed(model: &PomdpModel) -> PomdpModel {
    let n = model.n_states();
    let eye: Vec<Vec<f64>> = (0..n)
        .map(|s| (0..n).map(|k| if k == s { 1.0 } else { 0.0 }).collect())
        .collect();
    let t: Vec<_> = model
        .actions()
        .iter()
        .map(|a| a.transition.to_dense())
        .collect();
    let o: Vec<_> = model.actions().iter().map(|_| eye.clone()).collect();
    let c: Vec<_> = model.actions().iter().map(|a| a.cost.clone()).collect();
    PomdpModel::from_dense(&t, &o, &c).unwrap()
}
