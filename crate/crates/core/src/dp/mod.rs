//! Dynamic programming over beliefs (POMDP) and over states (MDP).

mod backup;
mod gamma;
mod mdp;
mod model;
mod oracle;
mod prune;
mod settings;
mod witness;

pub use backup::{
    pomdp_backup_exact, pomdp_backup_reduced, solve_pomdp, solve_pomdp_with_beliefs, terminal_set,
    Backup, PomdpPolicy,
};
pub use gamma::{greedy_action, GammaSet, GammaVector};
pub use mdp::{
    mdp_policy_iteration, mdp_value_iteration, MdpSolution, POLICY_EVALUATION_MAX_STATES,
};
pub use model::{ActionModel, CostTable, MdpModel, PomdpModel, STOCHASTIC_TOLERANCE};
pub use oracle::{evaluate_exact_tree, TREE_LEAF_LIMIT};
pub use prune::{prune_dominated, prune_exact};
pub use settings::{BackupMode, PruneMethod, SolveSettings};
pub use witness::{reachable_beliefs, simplex_grid};

pub(crate) use witness::sample_index;
