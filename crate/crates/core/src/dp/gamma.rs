use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Relative window inside which two values count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// A state-indexed value hyperplane tagged with the action it recommends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaVector {
    pub action: usize,
    pub values: Vec<f64>,
}

impl GammaVector {
    pub fn new(action: usize, values: Vec<f64>) -> Self {
        Self { action, values }
    }

    pub fn value_at(&self, belief: &[f64]) -> f64 {
        dot(&self.values, belief)
    }
}

/// The value function at one stage, `V(b) = min_gamma <gamma, b>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSet {
    pub stage: usize,
    pub vectors: Vec<GammaVector>,
}

impl GammaSet {
    pub fn new(stage: usize, vectors: Vec<GammaVector>) -> Result<Self> {
        let set = Self { stage, vectors };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self
            .vectors
            .first()
            .map(|v| v.values.len())
            .ok_or_else(|| Error::Contract(format!("stage {} has no vectors", self.stage)))?;
        if self
            .vectors
            .iter()
            .any(|v| v.values.len() != dim || v.values.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Contract(format!(
                "stage {} vectors differ in size or hold non-finite values",
                self.stage
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].values.len()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn value(&self, belief: &[f64]) -> f64 {
        self.vectors
            .iter()
            .map(|v| v.value_at(belief))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Index of the minimizing vector; near-ties go to the lowest action, then the
/// earliest vector.
pub(crate) fn argmin_vector(vectors: &[GammaVector], belief: &[f64]) -> (usize, f64) {
    let values: Vec<f64> = vectors.iter().map(|v| v.value_at(belief)).collect();
    let k = pick_min(&values, |k| vectors[k].action);
    (k, values[k])
}

/// Index of the smallest value under the same tie rule as [`argmin_vector`].
pub(crate) fn pick_min(values: &[f64], action_of: impl Fn(usize) -> usize) -> usize {
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let window = TIE_TOLERANCE * best.abs().max(1.0);
    let mut pick: Option<usize> = None;
    for (k, &val) in values.iter().enumerate() {
        if val <= best + window {
            match pick {
                Some(p) if action_of(p) <= action_of(k) => {}
                _ => pick = Some(k),
            }
        }
    }
    pick.expect("non-empty value list")
}

/// Action of the vector minimizing `<gamma, b>`, and that minimum.
pub fn greedy_action(belief: &Belief, set: &GammaSet) -> Result<(usize, f64)> {
    if set.is_empty() {
        return Err(Error::Contract("greedy action over an empty set".into()));
    }
    if set.dim() != belief.len() {
        return Err(Error::Contract(format!(
            "belief has {} states, vectors have {}",
            belief.len(),
            set.dim()
        )));
    }
    let (k, _) = argmin_vector(&set.vectors, belief.weights());
    Ok((set.vectors[k].action, set.value(belief.weights())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_vector_action() {
        let set = GammaSet::new(0, vec![GammaVector::new(3, vec![1.0, 2.0])]).unwrap();
        let (a, v) = greedy_action(&Belief::uniform(2), &set).unwrap();
        assert_eq!(a, 3);
        assert!((v - 1.5).abs() < 1e-15);
    }

    #[test]
    fn point_mass_picks_smallest_component() {
        let set = GammaSet::new(
            0,
            vec![
                GammaVector::new(0, vec![5.0, 1.0, 3.0]),
                GammaVector::new(1, vec![2.0, 4.0, 3.0]),
                GammaVector::new(2, vec![3.0, 3.0, 0.5]),
            ],
        )
        .unwrap();
        for (s, want) in [(0, 1), (1, 0), (2, 2)] {
            assert_eq!(
                greedy_action(&Belief::point_mass(3, s), &set).unwrap().0,
                want
            );
        }
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let set = GammaSet::new(
            0,
            vec![
                GammaVector::new(2, vec![1.0, 1.0]),
                GammaVector::new(1, vec![1.0, 1.0]),
            ],
        )
        .unwrap();
        assert_eq!(greedy_action(&Belief::uniform(2), &set).unwrap().0, 1);
    }

    #[test]
    fn matches_direct_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vectors: Vec<GammaVector> = (0..12)
            .map(|k| GammaVector::new(k % 4, (0..5).map(|_| rng.random::<f64>() * 10.0).collect()))
            .collect();
        let set = GammaSet::new(2, vectors.clone()).unwrap();
        for _ in 0..100 {
            let b = Belief::from_weights((0..5).map(|_| rng.random::<f64>()).collect()).unwrap();
            let mut best = (usize::MAX, f64::INFINITY);
            for v in &vectors {
                let val: f64 = v.values.iter().zip(b.weights()).map(|(x, y)| x * y).sum();
                if val < best.1 {
                    best = (v.action, val);
                }
            }
            let (a, val) = greedy_action(&b, &set).unwrap();
            assert_eq!(a, best.0);
            assert!((val - best.1).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_or_ragged_sets_rejected() {
        assert!(GammaSet::new(0, vec![]).is_err());
        assert!(GammaSet::new(
            0,
            vec![
                GammaVector::new(0, vec![1.0]),
                GammaVector::new(0, vec![1.0, 2.0])
            ]
        )
        .is_err());
    }
}
