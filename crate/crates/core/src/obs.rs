//! Imperfect binomial test surveys and their binned observation matrices.
//!
//! A survey at level `l` tests `n = round(c_l * N)` people. Each test is
//! positive with probability
//!
//! ```text
//! p = (q1 * I + (1 - q2) * (S + R)) / N,   R = N - S - I
//! ```
//!
//! and the positive count is binomial. Counts are binned by the positive
//! fraction `o / n` into equal-width bins over `[0, 1]`. Level 0 is "no survey"
//! and emits a single sure null observation.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete, DiscreteCDF};

use crate::epi::{EpiState, StateGrid};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Sensitivity `q1` and specificity `q2` of the test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestCharacteristics {
    q1: f64,
    q2: f64,
}

impl TestCharacteristics {
    /// Requires an informative test, `q1 + q2 > 1`.
    pub fn new(q1: f64, q2: f64) -> Result<Self> {
        Self::check_range(q1, q2)?;
        if q1 + q2 <= 1.0 {
            return Err(Error::Parameter(format!(
                "test must be informative (q1 + q2 > 1), got q1={q1}, q2={q2}"
            )));
        }
        Ok(Self { q1, q2 })
    }

    /// Uninformative test with `q2 = 1 - q1`. Only available to tests.
    #[cfg(any(test, feature = "boundary-tests"))]
    pub fn uninformative(q1: f64) -> Result<Self> {
        let q2 = 1.0 - q1;
        Self::check_range(q1, q2)?;
        Ok(Self { q1, q2 })
    }

    fn check_range(q1: f64, q2: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&q1) || !(0.0..=1.0).contains(&q2) {
            return Err(Error::Parameter(format!(
                "sensitivity and specificity must lie in [0, 1], got q1={q1}, q2={q2}"
            )));
        }
        Ok(())
    }

    pub fn sensitivity(&self) -> f64 {
        self.q1
    }

    pub fn specificity(&self) -> f64 {
        self.q2
    }
}

/// Survey coverage per observation level plus the observation binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyDesign {
    coverage: Vec<f64>,
    obs_bins: usize,
    population: f64,
}

impl SurveyDesign {
    pub fn new(coverage: Vec<f64>, obs_bins: usize, population: f64) -> Result<Self> {
        if coverage.first() != Some(&0.0) {
            return Err(Error::Config("survey level 0 must have coverage 0".into()));
        }
        if coverage.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Config("survey coverage must lie in [0, 1]".into()));
        }
        if coverage.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config(
                "survey coverage must be nondecreasing in level".into(),
            ));
        }
        if obs_bins < 2 {
            return Err(Error::Config(format!(
                "obs_bins must be >= 2, got {obs_bins}"
            )));
        }
        if !(population.is_finite() && population > 0.0) {
            return Err(Error::Config(format!(
                "population must be > 0, got {population}"
            )));
        }
        let d = Self {
            coverage,
            obs_bins,
            population,
        };
        if let Some(l) = (1..d.n_levels()).find(|&l| d.sample_size(l) == 0) {
            return Err(Error::Config(format!("survey level {l} tests nobody")));
        }
        Ok(d)
    }

    /// Number of survey levels including the null level.
    pub fn n_levels(&self) -> usize {
        self.coverage.len()
    }

    pub fn coverage(&self, level: usize) -> f64 {
        self.coverage[level]
    }

    pub fn obs_bins(&self) -> usize {
        self.obs_bins
    }

    pub fn population(&self) -> f64 {
        self.population
    }

    /// People tested at `level`.
    pub fn sample_size(&self, level: usize) -> u64 {
        (self.coverage[level] * self.population).round() as u64
    }

    /// Edges of the positive-fraction bins.
    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.obs_bins)
            .map(|k| k as f64 / self.obs_bins as f64)
            .collect()
    }

    /// Number of observation symbols emitted at `level`.
    pub fn n_observations(&self, level: usize) -> usize {
        if level == 0 {
            1
        } else {
            self.obs_bins
        }
    }

    /// Bin receiving a positive count `o` out of `n` tests.
    pub fn bin_of_count(&self, o: u64, n: u64) -> usize {
        self.bin_with(&self.bin_edges(), o, n)
    }

    fn bin_with(&self, edges: &[f64], o: u64, n: u64) -> usize {
        let frac = o as f64 / n as f64;
        let k = edges[1..self.obs_bins].partition_point(|&e| e <= frac);
        k.min(self.obs_bins - 1)
    }

    /// Inclusive range of counts falling into each bin for sample size `n`.
    /// Empty bins get `None`.
    fn count_ranges(&self, n: u64) -> Vec<Option<(u64, u64)>> {
        let edges = self.bin_edges();
        let mut ranges: Vec<Option<(u64, u64)>> = vec![None; self.obs_bins];
        for o in 0..=n {
            let b = self.bin_with(&edges, o, n);
            ranges[b] = Some(match ranges[b] {
                None => (o, o),
                Some((lo, _)) => (lo, o),
            });
        }
        ranges
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level >= self.n_levels() {
            return Err(Error::Index(format!(
                "survey level {level} of {}",
                self.n_levels()
            )));
        }
        Ok(())
    }
}

/// Probability that a single test is positive, `(q1 I + (1 - q2)(N - I)) / N`.
pub fn positive_rate(state: &EpiState, q: &TestCharacteristics, population: f64) -> f64 {
    let i = state.i.min(population);
    ((q.q1 * i + (1.0 - q.q2) * (population - i)) / population).clamp(0.0, 1.0)
}

/// Binomial pmf of the positive count at `level`; the null level returns `[1]`.
pub fn obs_pmf(
    state: &EpiState,
    level: usize,
    design: &SurveyDesign,
    q: &TestCharacteristics,
) -> Result<Vec<f64>> {
    design.check_level(level)?;
    if level == 0 {
        return Ok(vec![1.0]);
    }
    let n = design.sample_size(level);
    let p = positive_rate(state, q, design.population);
    let dist = Binomial::new(p, n).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok((0..=n).map(|o| dist.pmf(o)).collect())
}

/// Observation matrices `O_l[s', j] = Pr(bin j | s')` for every survey level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    pub levels: Vec<Arc<DenseMatrix>>,
}

impl ObservationModel {
    pub fn level(&self, level: usize) -> Result<&DenseMatrix> {
        self.levels
            .get(level)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::Index(format!("survey level {level} of {}", self.levels.len())))
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.levels
            .iter()
            .map(|m| m.max_row_sum_error())
            .fold(0.0, f64::max)
    }
}

/// Bins the binomial law of each cell's representative point, using cdf
/// differences over each bin's count range.
pub fn build_observation(
    grid: &StateGrid,
    design: &SurveyDesign,
    q: &TestCharacteristics,
) -> Result<ObservationModel> {
    if grid.population() != design.population {
        return Err(Error::Config(
            "grid population differs from survey population".into(),
        ));
    }
    let n_cells = grid.n_cells();
    let mut levels = Vec::with_capacity(design.n_levels());
    let mut null = DenseMatrix::zeros(n_cells, 1);
    for r in 0..n_cells {
        null.row_mut(r)[0] = 1.0;
    }
    levels.push(Arc::new(null));

    for level in 1..design.n_levels() {
        let n = design.sample_size(level);
        let ranges = design.count_ranges(n);
        let rows: Vec<Vec<f64>> = (0..n_cells)
            .into_par_iter()
            .map(|cell| {
                let p = positive_rate(&grid.representative(cell), q, design.population);
                binned_row(p, n, &ranges)
            })
            .collect::<Result<_>>()?;
        levels.push(Arc::new(DenseMatrix::from_rows(&rows)?));
    }
    Ok(ObservationModel { levels })
}

fn binned_row(p: f64, n: u64, ranges: &[Option<(u64, u64)>]) -> Result<Vec<f64>> {
    let dist = Binomial::new(p, n).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut row: Vec<f64> = ranges
        .iter()
        .map(|r| match *r {
            None => 0.0,
            Some((lo, hi)) => {
                let upper = dist.cdf(hi);
                let lower = if lo == 0 { 0.0 } else { dist.cdf(lo - 1) };
                (upper - lower).max(0.0)
            }
        })
        .collect();
    let total: f64 = row.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Solver(format!(
            "binomial bins sum to {total} at p={p}"
        )));
    }
    row.iter_mut().for_each(|v| *v /= total);
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(s: f64, i: f64) -> EpiState {
        EpiState { s, i, tau: 0 }
    }

    #[test]
    fn perfect_test_reports_prevalence() {
        let q = TestCharacteristics::new(1.0, 1.0).unwrap();
        assert!((positive_rate(&st(50.0, 10.0), &q, 100.0) - 0.10).abs() < 1e-15);
    }

    #[test]
    fn imperfect_test_hand_value() {
        let q = TestCharacteristics::new(0.9, 0.95).unwrap();
        let p = positive_rate(&st(90.0, 10.0), &q, 100.0);
        assert!((p - 0.135).abs() < 1e-12);
    }

    #[test]
    fn uninformative_test_ignores_incidence() {
        let q = TestCharacteristics::uninformative(0.3).unwrap();
        for i in [0.0, 5.0, 50.0, 100.0] {
            assert!((positive_rate(&st(0.0, i), &q, 100.0) - 0.3).abs() < 1e-12);
        }
        assert!(TestCharacteristics::new(0.3, 0.7).is_err());
        assert!(TestCharacteristics::new(1.1, 0.7).is_err());
    }

    #[test]
    fn pmf_edge_cases() {
        let q = TestCharacteristics::new(0.9, 0.95).unwrap();
        let d = SurveyDesign::new(vec![0.0, 0.1], 4, 100.0).unwrap();
        assert_eq!(obs_pmf(&st(90.0, 10.0), 0, &d, &q).unwrap(), vec![1.0]);
        let pmf = obs_pmf(&st(90.0, 10.0), 1, &d, &q).unwrap();
        assert_eq!(pmf.len(), 11);
        // independent evaluation: (1 - 0.135)^10
        assert!((pmf[0] - 0.865f64.powi(10)).abs() < 1e-12);
        let total: f64 = pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        assert!((mean - 10.0 * 0.135).abs() < 1e-9);
        assert!(obs_pmf(&st(90.0, 10.0), 2, &d, &q).is_err());
    }

    #[test]
    fn design_validation() {
        assert!(SurveyDesign::new(vec![0.1], 4, 100.0).is_err());
        assert!(SurveyDesign::new(vec![0.0, 0.5], 1, 100.0).is_err());
        assert!(SurveyDesign::new(vec![0.0, 0.5, 0.2], 4, 100.0).is_err());
        assert!(SurveyDesign::new(vec![0.0, 0.001], 4, 100.0).is_err());
        let d = SurveyDesign::new(vec![0.0, 0.2], 4, 100.0).unwrap();
        assert_eq!(d.sample_size(1), 20);
        assert_eq!(d.bin_edges(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(d.bin_of_count(0, 20), 0);
        assert_eq!(d.bin_of_count(5, 20), 1);
        assert_eq!(d.bin_of_count(20, 20), 3);
    }

    #[test]
    fn binned_rows_match_exhaustive_summation() {
        let n_pop = 100.0;
        let grid = StateGrid::new(n_pop, 2, 3).unwrap();
        let q = TestCharacteristics::new(0.85, 0.9).unwrap();
        let d = SurveyDesign::new(vec![0.0, 0.2], 4, n_pop).unwrap();
        let om = build_observation(&grid, &d, &q).unwrap();
        let o1 = om.level(1).unwrap();
        // three distinct incidence levels (zero bin and two log bins)
        for cell in 0..3 {
            let rep = grid.representative(cell);
            let p = (0.85 * rep.i + 0.1 * (n_pop - rep.i)) / n_pop;
            let mut want = [0.0f64; 4];
            for o in 0..=20u64 {
                let mut c = 1.0f64;
                for k in 0..o {
                    c *= (20 - k) as f64 / (k + 1) as f64;
                }
                let mass = c * p.powi(o as i32) * (1.0 - p).powi(20 - o as i32);
                let frac = o as f64 / 20.0;
                let bin = ((frac * 4.0).floor() as usize).min(3);
                want[bin] += mass;
            }
            for j in 0..4 {
                assert!(
                    (o1.get(cell, j) - want[j]).abs() < 1e-10,
                    "cell {cell} bin {j}"
                );
            }
        }
    }

    #[test]
    fn null_level_and_uninformative_rows() {
        let grid = StateGrid::new(500.0, 3, 4).unwrap();
        let d = SurveyDesign::new(vec![0.0, 0.05, 0.1], 5, 500.0).unwrap();
        let q = TestCharacteristics::uninformative(0.4).unwrap();
        let om = build_observation(&grid, &d, &q).unwrap();
        let null = om.level(0).unwrap();
        assert_eq!(null.n_cols(), 1);
        assert!((0..null.n_rows()).all(|r| null.get(r, 0) == 1.0));
        for l in 1..3 {
            let m = om.level(l).unwrap();
            for r in 1..m.n_rows() {
                for j in 0..m.n_cols() {
                    assert!((m.get(r, j) - m.get(0, j)).abs() < 1e-12);
                }
            }
        }
        assert!(om.max_row_sum_error() < 1e-9);
    }

    #[test]
    fn positive_rate_increases_with_incidence() {
        let q = TestCharacteristics::new(0.7, 0.6).unwrap();
        let mut last = -1.0;
        for i in 0..=100 {
            let p = positive_rate(&st(0.0, i as f64), &q, 100.0);
            assert!(p > last);
            last = p;
        }
    }
}
