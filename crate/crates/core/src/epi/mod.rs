//! Stochastic TSIR dynamics, state discretization and per-action transition
//! matrices.

mod dynamics;
mod grid;
mod transition;

pub use dynamics::{seasonal_beta, tsir_step, EpiState, TsirParams, SEASON_LENGTH};
pub use grid::{build_grid, CellCoord, StateGrid};
pub use transition::{
    build_transition, intervention_actions, noise_quadrature, InterventionAction, TransitionModel,
};
