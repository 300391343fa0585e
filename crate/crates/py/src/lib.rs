use std::collections::HashMap;
use std::path::PathBuf;

use clap::Parser;
use epiplan::belief::Belief;
use epiplan::calibrate::{
    calibrate as fit, synthetic_series, CalibrationSettings, CaseRecord, CaseSeries,
};
use epiplan::cli::files::ModelSpec;
use epiplan::cli::pipeline::{build_base, build_planning, Planning};
use epiplan::cli::RunConfig;
use epiplan::dp::{
    evaluate_exact_tree, mdp_value_iteration, solve_pomdp, PomdpModel, PomdpPolicy, SolveSettings,
};
use epiplan::epi::{tsir_step, EpiState, TsirParams};
use epiplan::sia::{sia_timing_sweep, BudgetSpec};
use epiplan::ErrorCategory;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: epiplan::Error) -> PyErr {
    match e.category() {
        ErrorCategory::Solver => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_belief(weights: Vec<f64>) -> PyResult<Belief> {
    Belief::new(weights).map_err(py_err)
}

/// A finite POMDP with cost minimization.
#[pyclass(name = "Model", module = "epiplan", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: PomdpModel,
}

#[pymethods]
impl PyModel {
    /// `transitions[a][s][s']`, `observations[a][s'][o]`, `costs[a][s]`.
    #[new]
    fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        observations: Vec<Vec<Vec<f64>>>,
        costs: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: PomdpModel::from_dense(&transitions, &observations, &costs).map_err(py_err)?,
        })
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    #[getter]
    fn action_labels(&self) -> Vec<String> {
        self.inner
            .actions()
            .iter()
            .map(|a| a.label.clone())
            .collect()
    }

    fn n_observations(&self, action: usize) -> PyResult<usize> {
        Ok(self.action(action)?.n_observations())
    }

    fn predict(&self, belief: Vec<f64>, action: usize) -> PyResult<Vec<f64>> {
        let a = self.action(action)?;
        Ok(to_belief(belief)?
            .predict_with(&a.transition)
            .map_err(py_err)?
            .into_weights())
    }

    /// Probability of each observation after taking `action` from `belief`.
    fn obs_marginal(&self, belief: Vec<f64>, action: usize) -> PyResult<Vec<f64>> {
        let a = self.action(action)?;
        let pred = to_belief(belief)?
            .predict_with(&a.transition)
            .map_err(py_err)?;
        pred.obs_marginal_with(&a.observation).map_err(py_err)
    }

    /// Posterior after taking `action` and then seeing `observation`.
    fn update(&self, belief: Vec<f64>, action: usize, observation: usize) -> PyResult<Vec<f64>> {
        let a = self.action(action)?;
        let pred = to_belief(belief)?
            .predict_with(&a.transition)
            .map_err(py_err)?;
        Ok(pred
            .update_with(observation, &a.observation)
            .map_err(py_err)?
            .into_weights())
    }

    #[pyo3(signature = (horizon, discount=1.0))]
    fn solve(&self, horizon: usize, discount: f64) -> PyResult<PyPolicy> {
        let settings = SolveSettings::finite(horizon, discount);
        Ok(PyPolicy {
            inner: solve_pomdp(&self.inner, &settings).map_err(py_err)?,
        })
    }

    #[pyo3(signature = (discount, tolerance=1e-6))]
    fn solve_infinite(&self, discount: f64, tolerance: f64) -> PyResult<PyPolicy> {
        let mut settings = SolveSettings::infinite(discount);
        settings.tolerance = tolerance;
        Ok(PyPolicy {
            inner: solve_pomdp(&self.inner, &settings).map_err(py_err)?,
        })
    }

    /// Brute-force expectimax value; exponential in the horizon.
    #[pyo3(signature = (belief, horizon, discount=1.0))]
    fn expectimax(&self, belief: Vec<f64>, horizon: usize, discount: f64) -> PyResult<f64> {
        evaluate_exact_tree(&to_belief(belief)?, &self.inner, horizon, discount).map_err(py_err)
    }

    /// Fully observed stage values, `values[t][s]`.
    #[pyo3(signature = (horizon, discount=1.0))]
    fn mdp_values(&self, horizon: usize, discount: f64) -> PyResult<Vec<Vec<f64>>> {
        let s = SolveSettings::finite(horizon, discount);
        Ok(mdp_value_iteration(&self.inner.mdp(), &s)
            .map_err(py_err)?
            .values)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n_states={}, n_actions={})",
            self.inner.n_states(),
            self.inner.n_actions()
        )
    }
}

impl PyModel {
    fn action(&self, a: usize) -> PyResult<&epiplan::dp::ActionModel> {
        if a >= self.inner.n_actions() {
            return Err(PyValueError::new_err(format!("action {a} out of range")));
        }
        Ok(self.inner.action(a))
    }
}

/// Stage-indexed alpha-vector policy.
#[pyclass(name = "Policy", module = "epiplan", frozen)]
struct PyPolicy {
    inner: PomdpPolicy,
}

#[pymethods]
impl PyPolicy {
    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[pyo3(signature = (belief, t=0))]
    fn value(&self, belief: Vec<f64>, t: usize) -> PyResult<f64> {
        let b = to_belief(belief)?;
        self.check(t, &b)?;
        Ok(self.inner.value(t, &b))
    }

    /// `(action, value)` of the minimizing vector at stage `t`.
    #[pyo3(signature = (belief, t=0))]
    fn action(&self, belief: Vec<f64>, t: usize) -> PyResult<(usize, f64)> {
        let b = to_belief(belief)?;
        self.check(t, &b)?;
        self.inner.action(t, &b).map_err(py_err)
    }

    fn n_vectors(&self, t: usize) -> PyResult<usize> {
        self.check_stage(t)?;
        Ok(self.inner.stage(t).vectors.len())
    }
}

impl PyPolicy {
    fn check_stage(&self, t: usize) -> PyResult<()> {
        if t > self.inner.horizon() {
            return Err(PyValueError::new_err(format!(
                "stage {t} beyond horizon {}",
                self.inner.horizon()
            )));
        }
        Ok(())
    }

    fn check(&self, t: usize, b: &Belief) -> PyResult<()> {
        self.check_stage(t)?;
        let n = self
            .inner
            .stage(t)
            .vectors
            .first()
            .map_or(b.len(), |g| g.values.len());
        if b.len() != n {
            return Err(PyValueError::new_err(format!(
                "belief has {} entries, model has {n} states",
                b.len()
            )));
        }
        Ok(())
    }
}

/// Stochastic TSIR parameters.
#[pyclass(name = "TsirParams", module = "epiplan", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: TsirParams,
}

#[pymethods]
impl PyParams {
    #[new]
    fn new(
        beta_seasonal: Vec<f64>,
        alpha_mix: f64,
        birth_schedule: Vec<f64>,
        noise_sd: f64,
        population: f64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: TsirParams::new(
                beta_seasonal,
                alpha_mix,
                birth_schedule,
                noise_sd,
                population,
            )
            .map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn seasonal_cosine(
        beta_mean: f64,
        amplitude: f64,
        alpha_mix: f64,
        births: f64,
        noise_sd: f64,
        population: f64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: TsirParams::seasonal_cosine(
                beta_mean, amplitude, alpha_mix, births, noise_sd, population,
            )
            .map_err(py_err)?,
        })
    }

    #[getter]
    fn beta_seasonal(&self) -> Vec<f64> {
        self.inner.beta_seasonal.clone()
    }

    #[getter]
    fn alpha_mix(&self) -> f64 {
        self.inner.alpha_mix
    }

    #[getter]
    fn birth_schedule(&self) -> Vec<f64> {
        self.inner.birth_schedule.clone()
    }

    #[getter]
    fn noise_sd(&self) -> f64 {
        self.inner.noise_sd
    }

    #[getter]
    fn population(&self) -> f64 {
        self.inner.population
    }

    /// One step from `(s, i, tau)` with vaccination fraction `mu` and
    /// multiplicative noise `eps`; returns the next `(s, i, tau)`.
    #[pyo3(signature = (s, i, tau, mu=0.0, eps=1.0))]
    fn step(&self, s: f64, i: f64, tau: usize, mu: f64, eps: f64) -> PyResult<(f64, f64, usize)> {
        let st = EpiState::new(s, i, tau).map_err(py_err)?;
        let next = tsir_step(&st, mu, &self.inner, eps).map_err(py_err)?;
        Ok((next.s, next.i, next.tau))
    }

    /// Simulated case series as `(t, cases, births)` rows.
    fn simulate(
        &self,
        s: f64,
        i: f64,
        tau: usize,
        steps: usize,
        seed: u64,
    ) -> PyResult<Vec<(i64, f64, f64)>> {
        let st = EpiState::new(s, i, tau).map_err(py_err)?;
        let series = synthetic_series(&self.inner, st, steps, seed).map_err(py_err)?;
        Ok(series
            .records
            .iter()
            .map(|r| (r.t, r.cases, r.births))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "TsirParams(alpha_mix={}, noise_sd={}, population={})",
            self.inner.alpha_mix, self.inner.noise_sd, self.inner.population
        )
    }
}

/// Fits TSIR parameters to `(t, cases, births)` rows.
#[pyfunction]
#[pyo3(signature = (rows, population, fixed_alpha_mix=None))]
fn calibrate(
    rows: Vec<(i64, f64, f64)>,
    population: f64,
    fixed_alpha_mix: Option<f64>,
) -> PyResult<(PyParams, HashMap<String, f64>)> {
    let records = rows
        .into_iter()
        .map(|(t, cases, births)| CaseRecord {
            t,
            cases,
            births,
            population: Some(population),
        })
        .collect();
    let series = CaseSeries::new(records).map_err(py_err)?;
    let settings = CalibrationSettings {
        fixed_alpha_mix,
        ..Default::default()
    };
    let r = fit(&series, &settings).map_err(py_err)?;
    let stats = HashMap::from([
        ("sbar".to_string(), r.sbar),
        ("alpha_mix_raw".to_string(), r.alpha_mix_raw),
        ("residual_sd".to_string(), r.residual_sd),
        ("sum_squared_residuals".to_string(), r.sum_squared_residuals),
        ("rows_used".to_string(), r.rows_used as f64),
    ]);
    Ok((PyParams { inner: r.params }, stats))
}

/// The planning model described by a run configuration file.
#[pyclass(name = "Planner", module = "epiplan", frozen)]
struct PyPlanner {
    cfg: RunConfig,
    planning: Planning,
}

#[pymethods]
impl PyPlanner {
    #[new]
    fn new(config: PathBuf) -> PyResult<Self> {
        let cfg = RunConfig::load(&config).map_err(py_err)?;
        let spec = ModelSpec::from_config(&cfg).map_err(py_err)?;
        let planning = build_planning(&spec).map_err(py_err)?;
        Ok(Self { cfg, planning })
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.planning.model.n_states()
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.planning.n_cells()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.planning.spec.discount
    }

    #[getter]
    fn params(&self) -> PyParams {
        PyParams {
            inner: self.planning.spec.params.clone(),
        }
    }

    fn initial_belief(&self) -> Vec<f64> {
        self.planning.b0.weights().to_vec()
    }

    fn model(&self) -> PyModel {
        PyModel {
            inner: self.planning.model.clone(),
        }
    }

    /// Exact value of every single-campaign timing from the configured
    /// `[sweep]` section.
    fn sweep(&self) -> PyResult<HashMap<String, Vec<f64>>> {
        let s = self
            .cfg
            .sweep
            .ok_or_else(|| PyValueError::new_err("the configuration has no [sweep] section"))?;
        let base = build_base(&self.planning.spec).map_err(py_err)?;
        let r = sia_timing_sweep(
            &base.transition,
            &base.grid.incidence(),
            &base.b0,
            &BudgetSpec::new(s.total, s.coverage).map_err(py_err)?,
            s.horizon,
            s.discount.unwrap_or(self.cfg.solver.discount),
            s.burn_in,
        )
        .map_err(py_err)?;
        Ok(HashMap::from([
            (
                "timing".to_string(),
                r.timings.iter().map(|&t| t as f64).collect(),
            ),
            ("objective".to_string(), r.objective.clone()),
            ("baseline".to_string(), vec![r.baseline]),
            ("argmin".to_string(), vec![r.argmin as f64]),
            ("spread".to_string(), vec![r.spread()]),
        ]))
    }
}

/// Runs the command line with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> PyResult<i32> {
    let argv = std::iter::once("epiplan".to_string()).chain(args);
    let cli = epiplan::cli::Cli::try_parse_from(argv)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(epiplan::cli::main_with(cli))
}

#[pymodule]
#[pyo3(name = "epiplan")]
fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyPlanner>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
