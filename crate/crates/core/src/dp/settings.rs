use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackupMode {
    /// Full cross-sum with pruning.
    Exact,
    /// At most one vector per action per stage, chosen on witness beliefs.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMethod {
    /// Dominance plus witness-grid filtering.
    Grid,
    /// Grid filtering followed by a linear-program check of every discarded
    /// vector, so the pruned set is exact over the whole simplex.
    Exact,
    /// `Exact` up to [`SolveSettings::exact_prune_max_states`] states, `Grid` above.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    pub horizon: usize,
    pub discount: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub backup: BackupMode,
    pub witness_count: usize,
    pub prune_grid: usize,
    pub prune: PruneMethod,
    pub exact_prune_max_states: usize,
    pub infinite_horizon: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            horizon: 1,
            discount: 1.0,
            tolerance: 1e-9,
            max_iterations: 10_000,
            backup: BackupMode::Exact,
            witness_count: 64,
            prune_grid: 512,
            prune: PruneMethod::Auto,
            exact_prune_max_states: 256,
            infinite_horizon: false,
        }
    }
}

impl SolveSettings {
    pub fn finite(horizon: usize, discount: f64) -> Self {
        Self {
            horizon,
            discount,
            ..Self::default()
        }
    }

    pub fn infinite(discount: f64) -> Self {
        Self {
            discount,
            infinite_horizon: true,
            ..Self::default()
        }
    }

    pub fn with_backup(mut self, backup: BackupMode) -> Self {
        self.backup = backup;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.infinite_horizon && self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!(
                "discount must lie in (0, 1], got {}",
                self.discount
            )));
        }
        if self.infinite_horizon && self.discount >= 1.0 {
            return Err(Error::Config(
                "infinite-horizon mode needs discount < 1".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if self.backup == BackupMode::Reduced && self.witness_count == 0 {
            return Err(Error::Config(
                "reduced backups need at least one witness belief".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn use_lp_pruning(&self, n_states: usize) -> bool {
        match self.prune {
            PruneMethod::Grid => false,
            PruneMethod::Exact => true,
            PruneMethod::Auto => n_states <= self.exact_prune_max_states,
        }
    }
}
