//! Policy rollouts, paired policy comparison and campaign timing sweeps.

mod budget;
mod rollout;
mod sweep;

pub use budget::{with_campaign_budget, BudgetedModel};
pub use rollout::{
    compare_policies, paired_difference, rollout, CostAccounting, MeanSe, PairedDifference, Policy,
    PolicyComparison, RolloutRecord, RolloutSpec, RolloutSummary, SimulationModel, StepRecord,
};
pub use sweep::{
    campaign_action, open_loop_cost, schedule_coverage, schedule_objective, sia_timing_sweep,
    single_campaign_schedule, BudgetSpec, SweepResult,
};
