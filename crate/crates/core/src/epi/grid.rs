use serde::{Deserialize, Serialize};

use super::dynamics::{EpiState, TsirParams, SEASON_LENGTH};
use crate::error::{Error, Result};

/// Discretization of `(S, I, tau)` into flat-indexed cells.
///
/// Flat index is `(tau * s_bins + s_bin) * i_bins + i_bin`. The first I bin
/// holds exactly `I = 0`; the rest are log-spaced over `[1, N]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    s_edges: Vec<f64>,
    i_edges: Vec<f64>,
    population: f64,
}

/// Coordinates of a cell in the three grid dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellCoord {
    pub s_bin: usize,
    pub i_bin: usize,
    pub tau: usize,
}

pub fn build_grid(params: &TsirParams, s_bins: usize, i_bins: usize) -> Result<StateGrid> {
    StateGrid::new(params.population, s_bins, i_bins)
}

impl StateGrid {
    pub fn new(population: f64, s_bins: usize, i_bins: usize) -> Result<Self> {
        if s_bins < 2 || i_bins < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 bins per dimension, got s_bins={s_bins}, i_bins={i_bins}"
            )));
        }
        if !(population.is_finite() && population > 1.0) {
            return Err(Error::Config(format!(
                "population must exceed 1, got {population}"
            )));
        }
        let s_edges = (0..=s_bins)
            .map(|k| population * k as f64 / s_bins as f64)
            .collect();
        let log_n = population.ln();
        let log_bins = (i_bins - 1) as f64;
        let mut i_edges = vec![0.0];
        i_edges.extend((0..i_bins).map(|k| (log_n * k as f64 / log_bins).exp()));
        *i_edges.last_mut().unwrap() = population;
        let g = Self {
            s_edges,
            i_edges,
            population,
        };
        g.check_edges()?;
        Ok(g)
    }

    fn check_edges(&self) -> Result<()> {
        for (name, e) in [("S", &self.s_edges), ("I", &self.i_edges)] {
            if e.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!(
                    "{name} edges not strictly increasing"
                )));
            }
        }
        Ok(())
    }

    pub fn population(&self) -> f64 {
        self.population
    }

    pub fn s_bins(&self) -> usize {
        self.s_edges.len() - 1
    }

    pub fn i_bins(&self) -> usize {
        self.i_edges.len() - 1
    }

    pub fn s_edges(&self) -> &[f64] {
        &self.s_edges
    }

    pub fn i_edges(&self) -> &[f64] {
        &self.i_edges
    }

    pub fn n_cells(&self) -> usize {
        self.s_bins() * self.i_bins() * SEASON_LENGTH
    }

    pub fn index(&self, c: CellCoord) -> usize {
        (c.tau * self.s_bins() + c.s_bin) * self.i_bins() + c.i_bin
    }

    pub fn coord(&self, index: usize) -> CellCoord {
        let i_bin = index % self.i_bins();
        let rest = index / self.i_bins();
        CellCoord {
            s_bin: rest % self.s_bins(),
            i_bin,
            tau: rest / self.s_bins(),
        }
    }

    fn bin_of(edges: &[f64], x: f64) -> usize {
        let last = edges.len() - 2;
        // number of interior edges <= x
        let k = edges[1..=last].partition_point(|&e| e <= x);
        k.min(last)
    }

    pub fn s_bin_of(&self, s: f64) -> usize {
        Self::bin_of(&self.s_edges, s)
    }

    pub fn i_bin_of(&self, i: f64) -> usize {
        Self::bin_of(&self.i_edges, i)
    }

    /// Cell containing `state`. Values beyond `N` fall in the last bin.
    pub fn cell_of(&self, state: &EpiState) -> usize {
        self.index(CellCoord {
            s_bin: self.s_bin_of(state.s),
            i_bin: self.i_bin_of(state.i),
            tau: state.tau % SEASON_LENGTH,
        })
    }

    pub fn s_representative(&self, s_bin: usize) -> f64 {
        0.5 * (self.s_edges[s_bin] + self.s_edges[s_bin + 1])
    }

    /// Zero for the zero bin, geometric midpoint otherwise.
    pub fn i_representative(&self, i_bin: usize) -> f64 {
        if i_bin == 0 {
            0.0
        } else {
            (self.i_edges[i_bin] * self.i_edges[i_bin + 1]).sqrt()
        }
    }

    /// Representative point of a cell. Incidence is capped at `N - S` so the
    /// point is a feasible state.
    pub fn representative(&self, index: usize) -> EpiState {
        let c = self.coord(index);
        let s = self.s_representative(c.s_bin);
        let i = self.i_representative(c.i_bin).min(self.population - s);
        EpiState { s, i, tau: c.tau }
    }

    /// Representative incidence of every cell, in flat-index order.
    pub fn incidence(&self) -> Vec<f64> {
        (0..self.n_cells())
            .map(|k| self.representative(k).i)
            .collect()
    }
}
