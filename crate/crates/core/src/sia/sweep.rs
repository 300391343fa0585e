use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::dp::PomdpModel;
use crate::epi::TransitionModel;
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Campaign budget: the summed coverage of all campaigns may not exceed
/// `total`; each campaign reaches `coverage` of the susceptibles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub total: f64,
    pub coverage: f64,
}

impl BudgetSpec {
    pub fn new(total: f64, coverage: f64) -> Result<Self> {
        let b = Self { total, coverage };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total >= 0.0 && self.total.is_finite()) {
            return Err(Error::Config(format!(
                "budget must be >= 0, got {}",
                self.total
            )));
        }
        if !(0.0..=1.0).contains(&self.coverage) {
            return Err(Error::Config(format!(
                "campaign coverage must lie in [0, 1], got {}",
                self.coverage
            )));
        }
        Ok(())
    }

    /// Campaigns the budget pays for.
    pub fn campaigns(&self) -> usize {
        if self.coverage == 0.0 {
            usize::MAX
        } else {
            (self.total / self.coverage + 1e-12).floor() as usize
        }
    }
}

/// Action index whose coverage equals `coverage`.
pub fn campaign_action(transition: &TransitionModel, coverage: f64) -> Result<usize> {
    transition
        .actions
        .iter()
        .position(|a| (a.coverage - coverage).abs() < 1e-12)
        .ok_or_else(|| Error::Config(format!("no intervention level has coverage {coverage}")))
}

/// Idle schedule of `horizon` steps except a campaign at `timing` in
/// `1..=horizon`; the campaign acts in the transition that produces state
/// `timing`.
pub fn single_campaign_schedule(
    horizon: usize,
    timing: usize,
    campaign: usize,
    idle: usize,
) -> Result<Vec<usize>> {
    if timing == 0 || timing > horizon {
        return Err(Error::Config(format!(
            "campaign timing {timing} outside 1..={horizon}"
        )));
    }
    let mut s = vec![idle; horizon];
    s[timing - 1] = campaign;
    Ok(s)
}

/// Summed coverage of a schedule.
pub fn schedule_coverage(transition: &TransitionModel, schedule: &[usize]) -> f64 {
    schedule
        .iter()
        .map(|&a| transition.actions[a].coverage)
        .sum()
}

/// `sum_{t=1..K} discount^t E[I_t]` under a fixed schedule, by propagating
/// the state distribution exactly.
pub fn schedule_objective(
    transition: &TransitionModel,
    incidence: &[f64],
    b0: &Belief,
    schedule: &[usize],
    discount: f64,
) -> Result<f64> {
    let mut d = b0.weights().to_vec();
    let mut weight = 1.0;
    let mut total = 0.0;
    for &a in schedule {
        d = transition.matrix(a)?.tmul_vec(&d);
        weight *= discount;
        total += weight * dot(&d, incidence);
    }
    Ok(total)
}

/// Expected discounted cost of a fixed schedule on a POMDP's dynamics,
/// `sum_t discount^t <d_t, l_a_t> + discount^K <d_K, terminal>`.
pub fn open_loop_cost(
    model: &PomdpModel,
    b0: &Belief,
    schedule: &[usize],
    discount: f64,
) -> Result<f64> {
    if b0.len() != model.n_states() {
        return Err(Error::Contract(
            "belief dimension differs from model".into(),
        ));
    }
    if let Some(&a) = schedule.iter().find(|&&a| a >= model.n_actions()) {
        return Err(Error::Index(format!("action {a} in schedule")));
    }
    let mut d = b0.weights().to_vec();
    let mut weight = 1.0;
    let mut total = 0.0;
    for &a in schedule {
        let act = model.action(a);
        total += weight * dot(&d, &act.cost);
        d = act.transition.tmul_vec(&d);
        weight *= discount;
    }
    Ok(total + weight * dot(&d, &model.terminal_values()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Campaign timings `1..=K`.
    pub timings: Vec<usize>,
    /// Expected discounted infections for each timing.
    pub objective: Vec<f64>,
    /// Objective with no campaign at all.
    pub baseline: f64,
    /// Best timing; ties go to the earliest.
    pub argmin: usize,
}

impl SweepResult {
    /// Largest over smallest objective across timings.
    pub fn spread(&self) -> f64 {
        let max = self.objective.iter().copied().fold(f64::MIN, f64::max);
        let min = self.objective.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }
}

/// Evaluates every single-campaign schedule exactly. `burn_in` idle steps are
/// applied to `b0` before the horizon starts.
pub fn sia_timing_sweep(
    transition: &TransitionModel,
    incidence: &[f64],
    b0: &Belief,
    budget: &BudgetSpec,
    horizon: usize,
    discount: f64,
    burn_in: usize,
) -> Result<SweepResult> {
    budget.validate()?;
    if budget.campaigns() == 0 {
        return Err(Error::Config(format!(
            "campaign coverage {} exceeds the budget {}",
            budget.coverage, budget.total
        )));
    }
    if horizon == 0 {
        return Err(Error::Config("sweep horizon must be >= 1".into()));
    }
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(Error::Config(format!(
            "discount must lie in (0, 1], got {discount}"
        )));
    }
    if incidence.len() != transition.n_states() || b0.len() != transition.n_states() {
        return Err(Error::Contract(
            "incidence or belief length differs from state count".into(),
        ));
    }
    let idle = campaign_action(transition, 0.0)?;
    let campaign = campaign_action(transition, budget.coverage)?;
    let idle_t = transition.matrix(idle)?;
    let camp_t = transition.matrix(campaign)?;

    let mut start = b0.weights().to_vec();
    for _ in 0..burn_in {
        start = idle_t.tmul_vec(&start);
    }
    // idle prefix distributions d_0..d_{K-1}, discounted incidences, and the
    // running idle objective
    let mut prefix = Vec::with_capacity(horizon);
    let mut prefix_obj = vec![0.0; horizon + 1];
    let mut d = start;
    let mut weight = 1.0;
    for t in 0..horizon {
        prefix.push(d.clone());
        d = idle_t.tmul_vec(&d);
        weight *= discount;
        prefix_obj[t + 1] = prefix_obj[t] + weight * dot(&d, incidence);
    }
    let baseline = prefix_obj[horizon];

    let objective: Vec<f64> = (1..=horizon)
        .map(|timing| {
            let mut d = camp_t.tmul_vec(&prefix[timing - 1]);
            let mut weight = discount.powi(timing as i32);
            let mut total = prefix_obj[timing - 1] + weight * dot(&d, incidence);
            for _ in timing..horizon {
                d = idle_t.tmul_vec(&d);
                weight *= discount;
                total += weight * dot(&d, incidence);
            }
            total
        })
        .collect();
    let mut argmin = 0;
    for (k, &v) in objective.iter().enumerate() {
        if v < objective[argmin] {
            argmin = k;
        }
    }
    Ok(SweepResult {
        timings: (1..=horizon).collect(),
        objective,
        baseline,
        argmin: argmin + 1,
    })
}
