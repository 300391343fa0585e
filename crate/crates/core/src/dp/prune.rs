use std::collections::VecDeque;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;

use super::gamma::{argmin_vector, GammaSet, GammaVector};
use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Removes vectors never minimal on any grid belief, then vectors pointwise
/// dominated by a survivor. The value at every grid belief is unchanged.
pub fn prune_dominated(set: GammaSet, grid: &[Belief]) -> Result<GammaSet> {
    check_grid(&set, grid)?;
    let weights: Vec<&[f64]> = grid.iter().map(|b| b.weights()).collect();
    GammaSet::new(set.stage, prune_vectors(set.vectors, &weights, false))
}

/// Like [`prune_dominated`], then re-admits any discarded vector that a linear
/// program shows to be strictly better somewhere on the simplex.
pub fn prune_exact(set: GammaSet, grid: &[Belief]) -> Result<GammaSet> {
    check_grid(&set, grid)?;
    let weights: Vec<&[f64]> = grid.iter().map(|b| b.weights()).collect();
    GammaSet::new(set.stage, prune_vectors(set.vectors, &weights, true))
}

fn check_grid(set: &GammaSet, grid: &[Belief]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Contract("pruning grid is empty".into()));
    }
    if set.is_empty() {
        return Err(Error::Contract("pruning an empty set".into()));
    }
    if grid.iter().any(|b| b.len() != set.dim()) {
        return Err(Error::Contract(
            "pruning grid dimension differs from vectors".into(),
        ));
    }
    Ok(())
}

pub(crate) fn prune_vectors(
    vectors: Vec<GammaVector>,
    grid: &[&[f64]],
    use_lp: bool,
) -> Vec<GammaVector> {
    if vectors.len() <= 1 {
        return vectors;
    }
    let mut keep = vec![false; vectors.len()];
    let winners: Vec<usize> = grid
        .par_iter()
        .map(|b| argmin_vector(&vectors, b).0)
        .collect();
    for w in winners {
        keep[w] = true;
    }

    if use_lp {
        lp_refine(&vectors, &mut keep);
    }

    let kept = vectors
        .into_iter()
        .zip(keep)
        .filter_map(|(v, k)| k.then_some(v))
        .collect();
    dominance_filter(kept)
}

/// Drops every vector pointwise dominated by another; of equal vectors the
/// lowest action, then the earliest, survives.
pub(crate) fn dominance_filter(vectors: Vec<GammaVector>) -> Vec<GammaVector> {
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    remove_pointwise_dominated(&vectors, &mut order);
    let mut keep = vec![false; vectors.len()];
    order.iter().for_each(|&k| keep[k] = true);
    vectors
        .into_iter()
        .zip(keep)
        .filter_map(|(v, k)| k.then_some(v))
        .collect()
}

/// `a` is no better than `b` anywhere: `a >= b` componentwise.
fn weakly_worse(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

fn remove_pointwise_dominated(vectors: &[GammaVector], order: &mut Vec<usize>) {
    let mut alive = vec![true; order.len()];
    for i in 0..order.len() {
        if !alive[i] {
            continue;
        }
        for j in 0..order.len() {
            if i == j || !alive[j] {
                continue;
            }
            let (vi, vj) = (&vectors[order[i]], &vectors[order[j]]);
            if weakly_worse(&vi.values, &vj.values) {
                let equal = vi.values == vj.values;
                // equal vectors: keep the lower action, then the earlier one
                let i_loses = !equal || (vj.action, order[j]) < (vi.action, order[i]);
                if i_loses {
                    alive[i] = false;
                    break;
                }
            }
        }
    }
    let mut k = 0;
    order.retain(|_| {
        k += 1;
        alive[k - 1]
    });
}

fn lp_refine(vectors: &[GammaVector], keep: &mut [bool]) {
    let mut queue: VecDeque<usize> = (0..vectors.len())
        .filter(|&c| !keep[c])
        .filter(|&c| {
            !(0..vectors.len())
                .any(|k| keep[k] && weakly_worse(&vectors[c].values, &vectors[k].values))
        })
        .collect();
    let mut discarded = vec![false; vectors.len()];
    while let Some(c) = queue.pop_front() {
        if keep[c] || discarded[c] {
            continue;
        }
        let kept: Vec<&[f64]> = (0..vectors.len())
            .filter(|&k| keep[k])
            .map(|k| vectors[k].values.as_slice())
            .collect();
        match lp_witness(&vectors[c].values, &kept) {
            None => discarded[c] = true,
            Some(b) => {
                let pool: Vec<usize> = (0..vectors.len())
                    .filter(|&k| !keep[k] && !discarded[k])
                    .collect();
                let pool_vecs: Vec<GammaVector> =
                    pool.iter().map(|&k| vectors[k].clone()).collect();
                let (best, best_val) = argmin_vector(&pool_vecs, &b);
                let kept_min = kept
                    .iter()
                    .map(|w| dot(w, &b))
                    .fold(f64::INFINITY, f64::min);
                if best_val < kept_min {
                    keep[pool[best]] = true;
                    if pool[best] != c {
                        queue.push_back(c);
                    }
                } else {
                    discarded[c] = true;
                }
            }
        }
    }
}

/// Belief where `candidate` beats every vector in `kept` by a positive margin,
/// if one exists.
fn lp_witness(candidate: &[f64], kept: &[&[f64]]) -> Option<Vec<f64>> {
    let n = candidate.len();
    let scale = candidate.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let margin = 1e-10 * scale;
    if kept.is_empty() {
        return Some(vec![1.0 / n as f64; n]);
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let b: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let delta = lp.add_var(1.0, (-2.0 * scale - 1.0, 2.0 * scale + 1.0));
    let simplex: Vec<_> = b.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(simplex.as_slice(), ComparisonOp::Eq, 1.0);
    for w in kept {
        let mut row: Vec<_> = b
            .iter()
            .zip(w.iter().zip(candidate))
            .filter(|(_, (wi, ci))| *wi != *ci)
            .map(|(&v, (wi, ci))| (v, wi - ci))
            .collect();
        row.push((delta, -1.0));
        lp.add_constraint(row.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let sol = lp.solve().ok()?.into_solution().ok()?;
    if sol.objective() > margin {
        let mut point: Vec<f64> = b.iter().map(|&v| sol.var_value(v).max(0.0)).collect();
        let total: f64 = point.iter().sum();
        point.iter_mut().for_each(|x| *x /= total);
        Some(point)
    } else {
        None
    }
}
