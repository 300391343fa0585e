use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, SolveMode};
use super::files::{
    self, ModelFile, ModelSpec, ParamsFile, PolicyFile, FORMAT_VERSION, POLICY_FORMAT,
};
use super::pipeline::{build_planning, sample_beliefs, Planning};
use super::Command;
use crate::calibrate::{calibrate, CalibrationSettings, CaseSeries};
use crate::dp::{mdp_value_iteration, solve_pomdp, solve_pomdp_with_beliefs};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::sia::{
    compare_policies, open_loop_cost, sia_timing_sweep, single_campaign_schedule, BudgetSpec,
    CostAccounting, Policy, PolicyComparison, RolloutRecord, RolloutSpec, SimulationModel,
    SweepResult,
};
use crate::voi::{
    build_augmented, value_of_information, value_of_information_with_beliefs, VoiReport,
};

pub const PARAMS_FILE: &str = "params.json";
pub const MODEL_FILE: &str = "model.json";
pub const POLICY_FILE: &str = "policy.json";
pub const ROLLOUTS_FILE: &str = "rollouts.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const VOI_FILE: &str = "voi.json";
pub const REPORT_FILE: &str = "report.txt";

/// Files a command wrote.
#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub written: Vec<PathBuf>,
}

impl Outputs {
    fn json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        files::write_json(&path, value)?;
        self.written.push(path);
        Ok(())
    }

    fn text(&mut self, path: PathBuf, text: &str) -> Result<()> {
        files::write_text(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}

struct Progress(bool);

impl Progress {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn run_command(command: Command, cfg: &RunConfig, quiet: bool) -> Result<Outputs> {
    let progress = Progress(quiet);
    match command {
        Command::Calibrate => cmd_calibrate(cfg, &progress),
        Command::Build => cmd_build(cfg, &progress),
        Command::Solve => cmd_solve(cfg, &progress),
        Command::Simulate => cmd_simulate(cfg, &progress),
        Command::Sweep => cmd_sweep(cfg, &progress),
        Command::Voi => cmd_voi(cfg, &progress),
        Command::Report => cmd_report(cfg),
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

fn cmd_calibrate(cfg: &RunConfig, progress: &Progress) -> Result<Outputs> {
    let section = cfg
        .calibration
        .as_ref()
        .ok_or_else(|| Error::Config("calibrate needs a [calibration] section".into()))?;
    let series = CaseSeries::read_csv(&section.series)?;
    let settings = CalibrationSettings {
        refine: section.refine,
        fixed_alpha_mix: section.fixed_alpha_mix,
        population: section.population.or(cfg.model.population),
        ..CalibrationSettings::default()
    };
    progress.say(format!("calibrating on {} records", series.len()));
    let report = calibrate(&series, &settings)?;
    let mut out = Outputs::default();
    out.json(
        out_path(cfg, PARAMS_FILE),
        &ParamsFile::new(report.params.clone(), Some(report)),
    )?;
    Ok(out)
}

fn cmd_build(cfg: &RunConfig, progress: &Progress) -> Result<Outputs> {
    let spec = ModelSpec::from_config(cfg)?;
    let planning = build_planning(&spec)?;
    let file = planning.model_file();
    progress.say(format!(
        "model: {} states, {} actions, row-sum error {:e}",
        file.n_states,
        file.action_labels.len(),
        file.max_row_sum_error
    ));
    let mut out = Outputs::default();
    out.json(out_path(cfg, MODEL_FILE), &file)?;
    Ok(out)
}

fn load_planning(cfg: &RunConfig) -> Result<(ModelFile, Planning)> {
    let file: ModelFile = files::read(&out_path(cfg, MODEL_FILE))?;
    let planning = Planning::from_file(&file)?;
    Ok((file, planning))
}

fn cmd_solve(cfg: &RunConfig, progress: &Progress) -> Result<Outputs> {
    let (file, planning) = load_planning(cfg)?;
    let settings = cfg.solver.settings();
    if settings.discount != file.spec.discount {
        return Err(Error::Config(
            "solver.discount differs from the model file; rebuild the model".into(),
        ));
    }
    let model = &planning.model;
    let b0 = &planning.b0;
    progress.say(format!(
        "solving {} states with {}",
        model.n_states(),
        cfg.solver.mode.as_str()
    ));
    let (policy, initial_value, horizon, stationary) = match cfg.solver.mode {
        SolveMode::Mdp => {
            let sol = mdp_value_iteration(&model.mdp(), &settings)?;
            let v = dot(b0.weights(), &sol.values[0]);
            let (h, st) = (sol.policy.len(), sol.stationary);
            (Policy::StateFeedback(sol), v, h, st)
        }
        SolveMode::PomdpExact | SolveMode::PomdpReduced => {
            let beliefs = sample_beliefs(
                model,
                b0,
                &settings,
                cfg.solver.beliefs,
                cfg.solver.belief_depth,
                cfg.seed,
            )?;
            let p = match beliefs {
                Some(bs) => solve_pomdp_with_beliefs(model, &settings, &bs)?,
                None => solve_pomdp(model, &settings)?,
            };
            let v = p.value(0, b0);
            let (h, st) = (p.horizon(), p.stationary);
            (Policy::ClosedLoop(p), v, h, st)
        }
    };
    progress.say(format!("value at the initial belief: {initial_value}"));
    let pf = PolicyFile {
        format: POLICY_FORMAT.into(),
        version: FORMAT_VERSION,
        mode: cfg.solver.mode,
        n_states: model.n_states(),
        action_labels: file.action_labels.clone(),
        horizon,
        stationary,
        discount: settings.discount,
        initial_value,
        policy,
    };
    let mut out = Outputs::default();
    out.json(out_path(cfg, POLICY_FILE), &pf)?;
    Ok(out)
}

/// One fixed schedule's exact expected cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopEntry {
    /// Campaign step in `1..=K`; 0 for the idle schedule.
    pub timing: usize,
    pub expected_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub mode: SolveMode,
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    pub discount: f64,
    /// Solver value at the initial belief.
    pub initial_value: f64,
    pub open_loop: Vec<OpenLoopEntry>,
    pub comparison: PolicyComparison,
}

fn cmd_simulate(cfg: &RunConfig, progress: &Progress) -> Result<Outputs> {
    let (file, planning) = load_planning(cfg)?;
    let pf: PolicyFile = files::read(&out_path(cfg, POLICY_FILE))?;
    pf.check()?;
    if pf.n_states != file.n_states || pf.action_labels != file.action_labels {
        return Err(Error::Data(
            "policy file does not belong to the model file".into(),
        ));
    }
    let horizon = match cfg.simulate.horizon {
        Some(h) => h,
        None if pf.stationary => cfg.solver.horizon,
        None => pf.horizon,
    };
    let spec = RolloutSpec {
        horizon,
        discount: pf.discount,
        reps: cfg.simulate.reps,
        seed: cfg.seed,
    };
    let model = &planning.model;
    let incidence = planning.lift_cell_values(&planning.base.grid.incidence());
    let truth = SimulationModel::new(model.clone(), incidence, CostAccounting::Expected)?;

    let label = match pf.mode {
        SolveMode::Mdp => "state_feedback",
        _ => "closed_loop",
    };
    let mut policies = vec![(label.to_string(), pf.policy.clone())];
    let mut open_loop = Vec::new();
    if cfg.simulate.open_loop_baselines {
        let idle = planning
            .action_for(0)
            .ok_or_else(|| Error::Config("model has no idle action".into()))?;
        let level = match cfg.sweep {
            Some(s) => planning
                .spec
                .intervention_coverage
                .iter()
                .position(|&c| (c - s.coverage).abs() < 1e-12)
                .ok_or_else(|| {
                    Error::Config(format!("no intervention level has coverage {}", s.coverage))
                })?,
            None => planning.spec.intervention_coverage.len() - 1,
        };
        let campaign = planning
            .action_for(level)
            .ok_or_else(|| Error::Config(format!("no action runs intervention level {level}")))?;
        let idle_schedule = vec![idle; horizon];
        open_loop.push(OpenLoopEntry {
            timing: 0,
            expected_cost: open_loop_cost(model, &planning.b0, &idle_schedule, pf.discount)?,
        });
        let mut best: Option<(usize, f64)> = None;
        for timing in 1..=horizon {
            let s = single_campaign_schedule(horizon, timing, campaign, idle)?;
            let c = open_loop_cost(model, &planning.b0, &s, pf.discount)?;
            open_loop.push(OpenLoopEntry {
                timing,
                expected_cost: c,
            });
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((timing, c));
            }
        }
        let (timing, _) = best.expect("horizon >= 1");
        policies.push((
            format!("open_loop_t{timing}"),
            Policy::OpenLoop(single_campaign_schedule(horizon, timing, campaign, idle)?),
        ));
        policies.push(("open_loop_idle".into(), Policy::OpenLoop(idle_schedule)));
    }
    progress.say(format!(
        "{} policies x {} reps over {horizon} steps",
        policies.len(),
        spec.reps
    ));
    let (comparison, runs) = compare_policies(&policies, model, &truth, &planning.b0, &spec)?;

    let summary = SimulationSummary {
        mode: pf.mode,
        horizon,
        reps: spec.reps,
        seed: spec.seed,
        discount: spec.discount,
        initial_value: pf.initial_value,
        open_loop,
        comparison,
    };
    let mut out = Outputs::default();
    out.text(
        out_path(cfg, ROLLOUTS_FILE),
        &rollouts_csv(&summary.comparison.labels, &runs)?,
    )?;
    out.text(
        out_path(cfg, SUMMARY_CSV),
        &summary_csv(&summary.comparison)?,
    )?;
    out.json(out_path(cfg, SUMMARY_JSON), &summary)?;
    Ok(out)
}

fn csv_text(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).map_err(|e| Error::Data(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

fn rollouts_csv(labels: &[String], runs: &[Vec<RolloutRecord>]) -> Result<String> {
    csv_text(|w| {
        w.write_record([
            "policy",
            "rep",
            "seed",
            "discounted_cost",
            "discounted_infections",
            "error",
        ])?;
        for (label, records) in labels.iter().zip(runs) {
            for r in records {
                w.write_record([
                    label.clone(),
                    r.rep.to_string(),
                    r.seed.to_string(),
                    r.discounted_cost.to_string(),
                    r.discounted_infections.to_string(),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
        }
        Ok(())
    })
}

fn summary_csv(c: &PolicyComparison) -> Result<String> {
    csv_text(|w| {
        w.write_record([
            "policy",
            "reps",
            "failed",
            "cost_mean",
            "cost_se",
            "infections_mean",
            "infections_se",
            "cost_diff_mean",
            "cost_diff_se",
        ])?;
        for ((label, s), d) in c.labels.iter().zip(&c.summaries).zip(&c.differences) {
            w.write_record([
                label.clone(),
                s.reps.to_string(),
                s.failed.to_string(),
                s.cost.mean.to_string(),
                s.cost.se.to_string(),
                s.infections.mean.to_string(),
                s.infections.se.to_string(),
                d.cost.mean.to_string(),
                d.cost.se.to_string(),
            ])?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    pub budget: BudgetSpec,
    pub horizon: usize,
    pub burn_in: usize,
    pub discount: f64,
    pub result: SweepResult,
    pub spread: f64,
}

fn cmd_sweep(cfg: &RunConfig, progress: &Progress) -> Result<Outputs> {
    let s = cfg
        .sweep
        .ok_or_else(|| Error::Config("sweep needs a [sweep] section".into()))?;
    let spec = ModelSpec::from_config(cfg)?;
    let base = super::pipeline::build_base(&spec)?;
    let budget = BudgetSpec::new(s.total, s.coverage)?;
    let discount = s.discount.unwrap_or(cfg.solver.discount);
    progress.say(format!(
        "sweeping {} timings on {} cells",
        s.horizon,
        base.grid.n_cells()
    ));
    let result = sia_timing_sweep(
        &base.transition,
        &base.grid.incidence(),
        &base.b0,
        &budget,
        s.horizon,
        discount,
        s.burn_in,
    )?;
    let table = csv_text(|w| {
        w.write_record(["timing", "objective", "relative_to_baseline"])?;
        for (t, v) in result.timings.iter().zip(&result.objective) {
            w.write_record([
                t.to_string(),
                v.to_string(),
                (v / result.baseline).to_string(),
            ])?;
        }
        Ok(())
    })?;
    let file = SweepFile {
        budget,
        horizon: s.horizon,
        burn_in: s.burn_in,
        discount,
        spread: result.spread(),
        result,
    };
    let mut out = Outputs::default();
    out.text(out_path(cfg, SWEEP_CSV), &table)?;
    out.json(out_path(cfg, SWEEP_JSON), &file)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoiFile {
    pub n_states: usize,
    pub c_o: f64,
    pub report: VoiReport,
}

fn cmd_voi(cfg: &RunConfig, progress: &Progress) -> Result<Outputs> {
    let (_, planning) = load_planning(cfg)?;
    let spec = &planning.spec;
    let space = match &planning.augmented {
        Some(space) => space.clone(),
        None => build_augmented(
            &planning.transition,
            &planning.observation,
            &planning.base.design,
            &planning.incidence,
            &spec.cost_model()?,
        )?,
    };
    let mut settings = cfg.solver.settings();
    if cfg.solver.mode == SolveMode::Mdp {
        settings.backup = crate::dp::BackupMode::Exact;
    }
    progress.say(format!(
        "value of information on {} states",
        space.n_states()
    ));
    let lifted = space.lift_belief(&planning.b0_inner, 0)?;
    let beliefs = sample_beliefs(
        &space.model,
        &lifted,
        &settings,
        cfg.solver.beliefs,
        cfg.solver.belief_depth,
        cfg.seed,
    )?;
    let report = match beliefs {
        Some(bs) => value_of_information_with_beliefs(&space, &settings, &planning.b0_inner, &bs)?,
        None => value_of_information(&space, &settings, &planning.b0_inner)?,
    };
    let mut out = Outputs::default();
    out.json(
        out_path(cfg, VOI_FILE),
        &VoiFile {
            n_states: space.n_states(),
            c_o: spec.costs.c_o,
            report,
        },
    )?;
    Ok(out)
}

fn read_if_present<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if path.exists() {
        files::read(path).map(Some)
    } else {
        Ok(None)
    }
}

fn cmd_report(cfg: &RunConfig) -> Result<Outputs> {
    let mut text = String::new();
    let mut found = false;
    if let Some(p) = read_if_present::<ParamsFile>(&out_path(cfg, PARAMS_FILE))? {
        found = true;
        let _ = writeln!(text, "parameters");
        let _ = writeln!(text, "  population       {}", p.params.population);
        let _ = writeln!(text, "  alpha_mix        {}", p.params.alpha_mix);
        let _ = writeln!(text, "  noise_sd         {}", p.params.noise_sd);
        if let Some(c) = &p.calibration {
            let _ = writeln!(text, "  sbar             {}", c.sbar);
            let _ = writeln!(
                text,
                "  rows used        {} ({} excluded)",
                c.rows_used, c.rows_excluded
            );
        }
    }
    if let Some(m) = read_if_present::<ModelFile>(&out_path(cfg, MODEL_FILE))? {
        found = true;
        let _ = writeln!(text, "model");
        let _ = writeln!(
            text,
            "  states           {} ({} cells)",
            m.n_states, m.n_cells
        );
        let _ = writeln!(text, "  actions          {}", m.action_labels.join(" "));
        let _ = writeln!(text, "  row-sum error    {:e}", m.max_row_sum_error);
    }
    if let Some(p) = read_if_present::<PolicyFile>(&out_path(cfg, POLICY_FILE))? {
        found = true;
        let _ = writeln!(text, "policy");
        let _ = writeln!(text, "  mode             {}", p.mode.as_str());
        let _ = writeln!(text, "  horizon          {}", p.horizon);
        let _ = writeln!(text, "  initial value    {}", p.initial_value);
    }
    if let Some(s) = read_if_present::<SimulationSummary>(&out_path(cfg, SUMMARY_JSON))? {
        found = true;
        let c = &s.comparison;
        let _ = writeln!(
            text,
            "simulation ({} reps, seed {}, horizon {})",
            s.reps, s.seed, s.horizon
        );
        for ((label, sum), d) in c.labels.iter().zip(&c.summaries).zip(&c.differences) {
            let _ = writeln!(
                text,
                "  {label:<18} cost {:.4} +/- {:.4}  diff {:+.4} +/- {:.4}",
                sum.cost.mean, sum.cost.se, d.cost.mean, d.cost.se
            );
        }
    }
    if let Some(s) = read_if_present::<SweepFile>(&out_path(cfg, SWEEP_JSON))? {
        found = true;
        let _ = writeln!(text, "timing sweep");
        let _ = writeln!(text, "  best timing      {}", s.result.argmin);
        let _ = writeln!(text, "  max/min ratio    {:.4}", s.spread);
        let _ = writeln!(text, "  baseline         {}", s.result.baseline);
    }
    if let Some(v) = read_if_present::<VoiFile>(&out_path(cfg, VOI_FILE))? {
        found = true;
        let _ = writeln!(text, "value of information");
        let _ = writeln!(text, "  with surveys     {}", v.report.full);
        let _ = writeln!(text, "  without surveys  {}", v.report.restricted);
        let _ = writeln!(text, "  value            {}", v.report.value);
    }
    if !found {
        return Err(Error::Config(format!(
            "no artifacts found in {}",
            cfg.out.display()
        )));
    }
    let mut out = Outputs::default();
    out.text(out_path(cfg, REPORT_FILE), &text)?;
    Ok(out)
}
