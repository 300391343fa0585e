use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::dp::{sample_index, MdpSolution, PomdpModel, PomdpPolicy};
use crate::error::{Error, Result};

/// How a policy picks actions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// Greedy on the filtered belief.
    ClosedLoop(PomdpPolicy),
    /// Fixed action index per step.
    OpenLoop(Vec<usize>),
    /// Acts on the true state; an upper bound on what observation can buy.
    StateFeedback(MdpSolution),
}

/// How realized stage costs are charged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostAccounting {
    /// The model's expected cost `l(s, a)`.
    Expected,
    /// `c_i * max(I(s') - I(s), 0) + fixed[a]`.
    Realized { c_i: f64, fixed: Vec<f64> },
}

/// The process rollouts are drawn from. Its action and observation indices
/// must line up with the planner's.
#[derive(Debug, Clone)]
pub struct SimulationModel {
    pub model: PomdpModel,
    pub incidence: Vec<f64>,
    pub accounting: CostAccounting,
}

impl SimulationModel {
    pub fn new(model: PomdpModel, incidence: Vec<f64>, accounting: CostAccounting) -> Result<Self> {
        if incidence.len() != model.n_states() {
            return Err(Error::Contract(
                "incidence length differs from state count".into(),
            ));
        }
        if let CostAccounting::Realized { fixed, c_i } = &accounting {
            if fixed.len() != model.n_actions() || !(*c_i >= 0.0) {
                return Err(Error::Contract(
                    "realized cost terms do not match the action count".into(),
                ));
            }
        }
        Ok(Self {
            model,
            incidence,
            accounting,
        })
    }

    fn cost(&self, s: usize, next: usize, a: usize) -> f64 {
        match &self.accounting {
            CostAccounting::Expected => self.model.action(a).cost[s],
            CostAccounting::Realized { c_i, fixed } => {
                c_i * (self.incidence[next] - self.incidence[s]).max(0.0) + fixed[a]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub state: usize,
    pub incidence: f64,
    pub action: usize,
    pub survey: usize,
    pub observation: usize,
    pub next_state: usize,
    pub next_incidence: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub seed: u64,
    pub rep: usize,
    pub steps: Vec<StepRecord>,
    /// `sum_{t<K} discount^t cost_t`.
    pub discounted_cost: f64,
    /// `sum_{t=1..K} discount^t I_t`.
    pub discounted_infections: f64,
    /// Set when the filter hit an observation of zero predicted probability.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub reps: usize,
    pub failed: usize,
    pub cost: MeanSe,
    pub infections: MeanSe,
}

impl RolloutSummary {
    pub fn of(records: &[RolloutRecord]) -> Self {
        let ok: Vec<&RolloutRecord> = records.iter().filter(|r| r.error.is_none()).collect();
        let cost: Vec<f64> = ok.iter().map(|r| r.discounted_cost).collect();
        let inf: Vec<f64> = ok.iter().map(|r| r.discounted_infections).collect();
        Self {
            reps: records.len(),
            failed: records.len() - ok.len(),
            cost: MeanSe::of(&cost),
            infections: MeanSe::of(&inf),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutSpec {
    pub horizon: usize,
    pub discount: f64,
    pub reps: usize,
    pub seed: u64,
}

impl RolloutSpec {
    fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.reps == 0 {
            return Err(Error::Config(
                "rollouts need horizon >= 1 and reps >= 1".into(),
            ));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!(
                "discount must lie in (0, 1], got {}",
                self.discount
            )));
        }
        Ok(())
    }
}

/// Random streams for one rep. Transitions and observations draw from
/// separate streams so paired policies share the same uniforms per step.
fn streams(seed: u64, rep: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut dynamics = ChaCha8Rng::seed_from_u64(seed);
    dynamics.set_stream(2 * rep as u64);
    let mut sensing = ChaCha8Rng::seed_from_u64(seed);
    sensing.set_stream(2 * rep as u64 + 1);
    (dynamics, sensing)
}

fn check_policy(
    policy: &Policy,
    planner: &PomdpModel,
    truth: &SimulationModel,
    horizon: usize,
) -> Result<()> {
    let n_actions = truth.model.n_actions();
    match policy {
        Policy::ClosedLoop(p) => {
            if !p.stationary && p.horizon() < horizon {
                return Err(Error::Contract(format!(
                    "policy has {} stages, rollout needs {horizon}",
                    p.horizon()
                )));
            }
            if p.stages[0].dim() != planner.n_states() {
                return Err(Error::Contract(
                    "policy dimension differs from planner model".into(),
                ));
            }
            if p.stages
                .iter()
                .flat_map(|s| &s.vectors)
                .any(|v| v.action >= n_actions)
            {
                return Err(Error::Contract("policy refers to an unknown action".into()));
            }
        }
        Policy::OpenLoop(schedule) => {
            if schedule.len() < horizon || schedule.iter().any(|&a| a >= n_actions) {
                return Err(Error::Contract(
                    "open-loop schedule is too short or names unknown actions".into(),
                ));
            }
        }
        Policy::StateFeedback(sol) => {
            if (!sol.stationary && sol.policy.len() < horizon)
                || sol.policy[0].len() != truth.model.n_states()
            {
                return Err(Error::Contract(
                    "state-feedback policy does not fit the rollout".into(),
                ));
            }
        }
    }
    if planner.n_states() != truth.model.n_states() || planner.n_actions() != n_actions {
        return Err(Error::Contract(
            "planner and true model differ in states or actions".into(),
        ));
    }
    Ok(())
}

/// Simulates `spec.reps` independent episodes. Reps run in parallel; results
/// depend only on `spec.seed` and the rep index.
pub fn rollout(
    policy: &Policy,
    planner: &PomdpModel,
    truth: &SimulationModel,
    b0: &Belief,
    spec: &RolloutSpec,
) -> Result<Vec<RolloutRecord>> {
    spec.validate()?;
    check_policy(policy, planner, truth, spec.horizon)?;
    if b0.len() != planner.n_states() {
        return Err(Error::Contract(
            "initial belief dimension differs from model".into(),
        ));
    }
    (0..spec.reps)
        .into_par_iter()
        .map(|rep| run_one(policy, planner, truth, b0, spec, rep))
        .collect()
}

fn run_one(
    policy: &Policy,
    planner: &PomdpModel,
    truth: &SimulationModel,
    b0: &Belief,
    spec: &RolloutSpec,
    rep: usize,
) -> Result<RolloutRecord> {
    let (mut dynamics, mut sensing) = streams(spec.seed, rep);
    let mut state = sample_index(b0.weights(), dynamics.random::<f64>());
    let mut belief = b0.clone();
    let mut steps = Vec::with_capacity(spec.horizon);
    let mut discounted_cost = 0.0;
    let mut discounted_infections = 0.0;
    let mut weight = 1.0;
    let mut error = None;

    for t in 0..spec.horizon {
        let action = match policy {
            Policy::ClosedLoop(p) => p.action(t, &belief)?.0,
            Policy::OpenLoop(schedule) => schedule[t],
            Policy::StateFeedback(sol) => sol.action(t, state),
        };
        let act = truth.model.action(action);
        let (cols, probs) = act.transition.row(state);
        let next = cols[sample_index(probs, dynamics.random::<f64>())];
        let observation = sample_index(act.observation.row(next), sensing.random::<f64>());
        let cost = truth.cost(state, next, action);

        discounted_cost += weight * cost;
        weight *= spec.discount;
        discounted_infections += weight * truth.incidence[next];
        steps.push(StepRecord {
            t,
            state,
            incidence: truth.incidence[state],
            action,
            survey: act.survey,
            observation,
            next_state: next,
            next_incidence: truth.incidence[next],
            cost,
        });
        state = next;

        if matches!(policy, Policy::ClosedLoop(_)) && error.is_none() {
            let plan = planner.action(action);
            let updated = belief
                .predict_with(&plan.transition)
                .and_then(|pred| pred.update_with(observation, &plan.observation));
            match updated {
                Ok(b) => belief = b,
                Err(e @ Error::ImpossibleObservation { .. }) => {
                    error = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(RolloutRecord {
        seed: spec.seed,
        rep,
        steps,
        discounted_cost,
        discounted_infections,
        error,
    })
}

/// Paired comparison of two policies on the same seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    /// Reps where both policies succeeded.
    pub pairs: usize,
    /// Mean of `b - a` with its paired standard error.
    pub cost: MeanSe,
    pub infections: MeanSe,
}

pub fn paired_difference(a: &[RolloutRecord], b: &[RolloutRecord]) -> PairedDifference {
    let (dc, di): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.error.is_none() && y.error.is_none())
        .map(|(x, y)| {
            (
                y.discounted_cost - x.discounted_cost,
                y.discounted_infections - x.discounted_infections,
            )
        })
        .unzip();
    PairedDifference {
        pairs: dc.len(),
        cost: MeanSe::of(&dc),
        infections: MeanSe::of(&di),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub labels: Vec<String>,
    pub summaries: Vec<RolloutSummary>,
    /// `differences[k]` compares policy `k` against policy 0.
    pub differences: Vec<PairedDifference>,
}

/// Rolls out every policy on the same seed sequence.
pub fn compare_policies(
    policies: &[(String, Policy)],
    planner: &PomdpModel,
    truth: &SimulationModel,
    b0: &Belief,
    spec: &RolloutSpec,
) -> Result<(PolicyComparison, Vec<Vec<RolloutRecord>>)> {
    if policies.is_empty() {
        return Err(Error::Config("nothing to compare".into()));
    }
    let runs: Vec<Vec<RolloutRecord>> = policies
        .iter()
        .map(|(_, p)| rollout(p, planner, truth, b0, spec))
        .collect::<Result<_>>()?;
    let comparison = PolicyComparison {
        labels: policies.iter().map(|(l, _)| l.clone()).collect(),
        summaries: runs.iter().map(|r| RolloutSummary::of(r)).collect(),
        differences: runs
            .iter()
            .map(|r| paired_difference(&runs[0], r))
            .collect(),
    };
    Ok((comparison, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{solve_pomdp, SolveSettings};

    fn toy() -> PomdpModel {
        PomdpModel::from_dense(
            &[
                vec![vec![0.7, 0.3], vec![0.2, 0.8]],
                vec![vec![0.95, 0.05], vec![0.6, 0.4]],
            ],
            &[
                vec![vec![0.8, 0.2], vec![0.25, 0.75]],
                vec![vec![0.8, 0.2], vec![0.25, 0.75]],
            ],
            &[vec![0.0, 5.0], vec![1.5, 6.0]],
        )
        .unwrap()
    }

    fn truth(m: &PomdpModel) -> SimulationModel {
        SimulationModel::new(m.clone(), vec![0.0, 1.0], CostAccounting::Expected).unwrap()
    }

    fn spec(reps: usize) -> RolloutSpec {
        RolloutSpec {
            horizon: 6,
            discount: 0.9,
            reps,
            seed: 17,
        }
    }

    #[test]
    fn zero_cost_model_costs_nothing() {
        let m = toy().with_scaled_costs(0.0);
        let recs = rollout(
            &Policy::OpenLoop(vec![1; 6]),
            &m,
            &truth(&m),
            &Belief::uniform(2),
            &spec(50),
        )
        .unwrap();
        assert!(recs.iter().all(|r| r.discounted_cost == 0.0));
    }

    #[test]
    fn deterministic_model_repeats() {
        let m = PomdpModel::from_dense(
            &[vec![vec![0.0, 1.0], vec![1.0, 0.0]]],
            &[vec![vec![1.0], vec![1.0]]],
            &[vec![1.0, 2.0]],
        )
        .unwrap();
        let recs = rollout(
            &Policy::OpenLoop(vec![0; 6]),
            &m,
            &truth(&m),
            &Belief::point_mass(2, 0),
            &spec(20),
        )
        .unwrap();
        assert!(recs.windows(2).all(|w| w[0].steps == w[1].steps));
    }

    #[test]
    fn same_seed_same_records() {
        let m = toy();
        let p = Policy::ClosedLoop(solve_pomdp(&m, &SolveSettings::finite(6, 0.9)).unwrap());
        let a = rollout(&p, &m, &truth(&m), &Belief::uniform(2), &spec(64)).unwrap();
        let b = rollout(&p, &m, &truth(&m), &Belief::uniform(2), &spec(64)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cost_audit() {
        let m = toy();
        let p = Policy::ClosedLoop(solve_pomdp(&m, &SolveSettings::finite(6, 0.9)).unwrap());
        for r in rollout(&p, &m, &truth(&m), &Belief::uniform(2), &spec(32)).unwrap() {
            let c: f64 = r
                .steps
                .iter()
                .map(|s| 0.9f64.powi(s.t as i32) * s.cost)
                .sum();
            let i: f64 = r
                .steps
                .iter()
                .map(|s| 0.9f64.powi(s.t as i32 + 1) * s.next_incidence)
                .sum();
            assert!((c - r.discounted_cost).abs() < 1e-9);
            assert!((i - r.discounted_infections).abs() < 1e-9);
            assert_eq!(r.steps.len(), 6);
        }
    }

    #[test]
    fn closed_loop_mean_matches_solver_value() {
        let m = toy();
        let b0 = Belief::new(vec![0.4, 0.6]).unwrap();
        let pol = solve_pomdp(&m, &SolveSettings::finite(6, 0.9)).unwrap();
        let v = pol.value(0, &b0);
        let recs = rollout(&Policy::ClosedLoop(pol), &m, &truth(&m), &b0, &spec(10_000)).unwrap();
        let s = RolloutSummary::of(&recs);
        assert_eq!(s.failed, 0);
        assert!(
            (s.cost.mean - v).abs() <= 3.0 * s.cost.se,
            "mean {} se {} value {v}",
            s.cost.mean,
            s.cost.se
        );
    }

    #[test]
    fn identical_policies_have_zero_paired_difference() {
        let m = toy();
        let p = Policy::OpenLoop(vec![0, 1, 0, 1, 0, 1]);
        let (cmp, _) = compare_policies(
            &[("a".into(), p.clone()), ("b".into(), p)],
            &m,
            &truth(&m),
            &Belief::uniform(2),
            &spec(200),
        )
        .unwrap();
        assert_eq!(cmp.differences[1].cost.mean, 0.0);
        assert_eq!(cmp.differences[1].cost.se, 0.0);
    }

    #[test]
    fn intervention_reduces_infections() {
        let m = toy();
        let (cmp, _) = compare_policies(
            &[
                ("none".into(), Policy::OpenLoop(vec![0; 6])),
                ("always".into(), Policy::OpenLoop(vec![1; 6])),
            ],
            &m,
            &truth(&m),
            &Belief::uniform(2),
            &spec(2000),
        )
        .unwrap();
        assert!(cmp.summaries[1].infections.mean < cmp.summaries[0].infections.mean);
        assert!(cmp.differences[1].infections.mean < 0.0);
    }

    #[test]
    fn impossible_observation_excludes_rep() {
        // planner believes the observation is perfect, truth is noisy
        let planner = PomdpModel::from_dense(
            &[vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            &[vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            &[vec![1.0, 1.0]],
        )
        .unwrap();
        let noisy = PomdpModel::from_dense(
            &[vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            &[vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
            &[vec![1.0, 1.0]],
        )
        .unwrap();
        let pol = solve_pomdp(&planner, &SolveSettings::finite(6, 0.9)).unwrap();
        let t = SimulationModel::new(noisy, vec![0.0, 1.0], CostAccounting::Expected).unwrap();
        let short = RolloutSpec {
            horizon: 2,
            ..spec(100)
        };
        let recs = rollout(
            &Policy::ClosedLoop(pol),
            &planner,
            &t,
            &Belief::uniform(2),
            &short,
        )
        .unwrap();
        let s = RolloutSummary::of(&recs);
        assert!(s.failed > 0 && s.failed < 100);
        assert_eq!(s.reps, 100);
    }
}
