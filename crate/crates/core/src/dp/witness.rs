//! Belief samples used as pruning grids and reduced-backup witnesses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::PomdpModel;
use crate::belief::Belief;
use crate::error::Result;

/// Deterministic low-discrepancy sample of the belief simplex: every vertex
/// (when they fit in `count`), the centroid, then Dirichlet(1) points from an
/// additive recurrence sequence.
pub fn simplex_grid(n_states: usize, count: usize) -> Vec<Belief> {
    let mut out = Vec::with_capacity(count);
    if n_states <= count.saturating_sub(1) {
        out.extend((0..n_states).map(|s| Belief::point_mass(n_states, s)));
    }
    if out.len() < count {
        out.push(Belief::uniform(n_states));
    }
    let alphas = recurrence_steps(n_states);
    let mut k = 1u64;
    while out.len() < count {
        let w: Vec<f64> = alphas
            .iter()
            .map(|a| {
                let u = (0.5 + k as f64 * a).fract().max(1e-12);
                -u.ln()
            })
            .collect();
        let total: f64 = w.iter().sum();
        out.push(Belief::new(w.into_iter().map(|x| x / total).collect()).expect("normalized"));
        k += 1;
    }
    out
}

/// Irrational steps `phi^-(i+1)` of the generalized golden ratio for `dim`
/// dimensions.
fn recurrence_steps(dim: usize) -> Vec<f64> {
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    (0..dim)
        .map(|i| phi.powi(-(i as i32 + 1)).fract())
        .collect()
}

/// Beliefs visited by random action/observation walks from `b0`, restarting
/// every `depth` steps. `b0` itself comes first.
pub fn reachable_beliefs(
    model: &PomdpModel,
    b0: &Belief,
    count: usize,
    depth: usize,
    seed: u64,
) -> Result<Vec<Belief>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![b0.clone()];
    let mut b = b0.clone();
    let mut steps = 0;
    let mut attempts = 0;
    while out.len() < count && attempts < count * 20 {
        attempts += 1;
        if steps == depth.max(1) {
            b = b0.clone();
            steps = 0;
        }
        let act = model.action(rng.random_range(0..model.n_actions()));
        let pred = b.predict_with(&act.transition)?;
        let marg = pred.obs_marginal_with(&act.observation)?;
        let o = sample_index(&marg, rng.random::<f64>());
        b = match pred.update_with(o, &act.observation) {
            Ok(post) => post,
            Err(_) => {
                b = b0.clone();
                steps = 0;
                continue;
            }
        };
        steps += 1;
        out.push(b.clone());
    }
    Ok(out)
}

/// Inverse-cdf draw from a probability vector.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = k;
        }
        acc += p;
        if u < acc && p > 0.0 {
            return k;
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contents() {
        let g = simplex_grid(3, 20);
        assert_eq!(g.len(), 20);
        assert_eq!(g[0].weights(), &[1.0, 0.0, 0.0]);
        assert_eq!(g[3], Belief::uniform(3));
        assert_eq!(simplex_grid(3, 20), g);
        let big = simplex_grid(1000, 10);
        assert_eq!(big.len(), 10);
        assert_eq!(big[0], Belief::uniform(1000));
    }

    #[test]
    fn sampling_skips_zero_mass() {
        assert_eq!(sample_index(&[0.0, 0.5, 0.5], 0.0), 1);
        assert_eq!(sample_index(&[0.5, 0.5, 0.0], 0.9999999), 1);
        assert_eq!(sample_index(&[0.5, 0.5, 0.0], 1.0), 1);
    }
}
