//! Case-series input and TSIR regression.
//!
//! Susceptibles are reconstructed as `S_t = S_bar + D_t - mean(D)` with
//! `D_t` the running sum of births minus cases, and the mean level `S_bar` is
//! profiled. For each candidate the seasonal rates and mixing exponent come
//! from least squares on
//!
//! ```text
//! log I_t - log S_{t-1} = log beta_{tau(t-1)} + alpha * log I_{t-1}
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::epi::{tsir_step, EpiState, TsirParams, SEASON_LENGTH};
use crate::error::{Error, Result};

/// Shortest series accepted, two seasonal cycles.
pub const MIN_SERIES_LENGTH: usize = 2 * SEASON_LENGTH;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub t: i64,
    pub cases: f64,
    /// Births entering the susceptible pool between `t - 1` and `t`.
    pub births: f64,
    pub population: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSeries {
    pub records: Vec<CaseRecord>,
}

impl CaseSeries {
    pub fn new(records: Vec<CaseRecord>) -> Result<Self> {
        let s = Self { records };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Data("case series is empty".into()));
        }
        for (k, w) in self.records.windows(2).enumerate() {
            if w[1].t != w[0].t + 1 {
                return Err(Error::Data(format!(
                    "time index jumps from {} to {} at row {}",
                    w[0].t,
                    w[1].t,
                    k + 2
                )));
            }
        }
        for r in &self.records {
            let ok = r.cases >= 0.0
                && r.births >= 0.0
                && r.cases.is_finite()
                && r.births.is_finite()
                && r.population.is_none_or(|p| p > 0.0 && p.is_finite());
            if !ok {
                return Err(Error::Data(format!(
                    "row t={} has a negative or non-finite count",
                    r.t
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Reads `t,cases,births[,population]`; blank or missing population
    /// cells are left unset.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .clone();
        for required in ["t", "cases", "births"] {
            if !headers.iter().any(|h| h == required) {
                return Err(Error::Data(format!("missing column `{required}`")));
            }
        }
        let records = rdr
            .deserialize::<CaseRecord>()
            .map(|r| r.map_err(|e| Error::Data(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(records)
    }

    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))
    }

    /// Population of the first row that carries one.
    pub fn population(&self) -> Option<f64> {
        self.records.iter().find_map(|r| r.population)
    }
}

fn season(t: i64) -> usize {
    t.rem_euclid(SEASON_LENGTH as i64) as usize
}

/// Simulates reported cases from the stochastic model, with `tau = t mod 24`
/// and lognormal noise.
pub fn synthetic_series(
    params: &TsirParams,
    start: EpiState,
    steps: usize,
    seed: u64,
) -> Result<CaseSeries> {
    params.validate()?;
    start.validate(params.population)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::standard();
    let mut state = start;
    let mut records = vec![CaseRecord {
        t: start.tau as i64,
        cases: start.i,
        births: 0.0,
        population: Some(params.population),
    }];
    for k in 1..steps {
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let eps = (params.noise_sd * z.inverse_cdf(u)).exp();
        let births = params.birth_schedule[state.tau];
        state = tsir_step(&state, 0.0, params, eps)?;
        records.push(CaseRecord {
            t: start.tau as i64 + k as i64,
            cases: state.i,
            births,
            population: Some(params.population),
        });
    }
    CaseSeries::new(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    /// Candidate `S_bar / N` values for the profile search.
    pub sbar_fractions: Vec<f64>,
    /// Golden-section refinement around the best grid point.
    pub refine: bool,
    pub fixed_alpha_mix: Option<f64>,
    pub fixed_sbar: Option<f64>,
    /// Used when the series carries no population column.
    pub population: Option<f64>,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            sbar_fractions: (1..=100).map(|k| k as f64 * 0.005).collect(),
            refine: true,
            fixed_alpha_mix: None,
            fixed_sbar: None,
            population: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub params: TsirParams,
    pub sbar: f64,
    /// Mixing exponent before clamping into `(0, 1]`.
    pub alpha_mix_raw: f64,
    pub residual_sd: f64,
    pub sum_squared_residuals: f64,
    pub rows_used: usize,
    pub rows_excluded: usize,
}

struct Fit {
    log_beta: Vec<f64>,
    alpha: f64,
    ssr: f64,
    rows: usize,
    excluded: usize,
}

/// Reconstructed susceptibles for a given mean level.
fn susceptibles(series: &CaseSeries, sbar: f64) -> Vec<f64> {
    let mut d = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (k, r) in series.records.iter().enumerate() {
        if k > 0 {
            acc += r.births - r.cases;
        }
        d.push(acc);
    }
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    d.iter().map(|x| sbar + x - mean).collect()
}

fn fit_at(series: &CaseSeries, sbar: f64, fixed_alpha: Option<f64>) -> Option<Fit> {
    let s = susceptibles(series, sbar);
    let recs = &series.records;
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    let mut excluded = 0;
    for t in 1..recs.len() {
        let (i_now, i_prev, s_prev) = (recs[t].cases, recs[t - 1].cases, s[t - 1]);
        if i_now <= 0.0 || i_prev <= 0.0 {
            excluded += 1;
            continue;
        }
        if s_prev <= 0.0 {
            return None;
        }
        rows.push((season(recs[t - 1].t), i_now.ln() - s_prev.ln(), i_prev.ln()));
    }
    let mut seen = [false; SEASON_LENGTH];
    rows.iter().for_each(|r| seen[r.0] = true);
    if seen.iter().any(|x| !x) {
        return None;
    }

    let (log_beta, alpha) = match fixed_alpha {
        Some(a) => {
            let mut sum = [0.0; SEASON_LENGTH];
            let mut count = [0usize; SEASON_LENGTH];
            for &(tau, y, x) in &rows {
                sum[tau] += y - a * x;
                count[tau] += 1;
            }
            (
                (0..SEASON_LENGTH)
                    .map(|k| sum[k] / count[k] as f64)
                    .collect::<Vec<_>>(),
                a,
            )
        }
        None => {
            let p = SEASON_LENGTH + 1;
            if rows.len() <= p {
                return None;
            }
            let x = DMatrix::from_fn(rows.len(), p, |r, c| {
                if c == SEASON_LENGTH {
                    rows[r].2
                } else if c == rows[r].0 {
                    1.0
                } else {
                    0.0
                }
            });
            let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
            let coef = (x.transpose() * &x).cholesky()?.solve(&(x.transpose() * y));
            (
                coef.iter().take(SEASON_LENGTH).copied().collect(),
                coef[SEASON_LENGTH],
            )
        }
    };
    let ssr = rows
        .iter()
        .map(|&(tau, y, x)| (y - log_beta[tau] - alpha * x).powi(2))
        .sum();
    Some(Fit {
        log_beta,
        alpha,
        ssr,
        rows: rows.len(),
        excluded,
    })
}

/// Golden-section minimum of `f` on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iterations: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iterations {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

pub fn calibrate(series: &CaseSeries, settings: &CalibrationSettings) -> Result<CalibrationReport> {
    series.validate()?;
    if series.len() < MIN_SERIES_LENGTH {
        return Err(Error::Calibration(format!(
            "series has {} steps, at least {MIN_SERIES_LENGTH} are needed",
            series.len()
        )));
    }
    let population = series.population().or(settings.population).ok_or_else(|| {
        Error::Config("population is neither in the series nor configured".into())
    })?;
    if let Some(a) = settings.fixed_alpha_mix {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Config(format!(
                "fixed alpha_mix must lie in (0, 1], got {a}"
            )));
        }
    }
    let ssr_at =
        |sbar: f64| fit_at(series, sbar, settings.fixed_alpha_mix).map_or(f64::INFINITY, |f| f.ssr);

    let sbar = match settings.fixed_sbar {
        Some(v) => v,
        None => {
            let fractions = &settings.sbar_fractions;
            if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
                return Err(Error::Config("S_bar fractions must lie in (0, 1]".into()));
            }
            let profile: Vec<f64> = fractions.iter().map(|&f| ssr_at(f * population)).collect();
            let (best, best_ssr) =
                profile
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::INFINITY),
                        |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc },
                    );
            if !best_ssr.is_finite() {
                return Err(Error::Calibration(
                    "no candidate S_bar keeps the reconstructed susceptibles positive with every season observed".into(),
                ));
            }
            let at = fractions[best] * population;
            if settings.refine && fractions.len() > 1 {
                let lo = fractions[best.saturating_sub(1)] * population;
                let hi = fractions[(best + 1).min(fractions.len() - 1)] * population;
                let refined = golden_min(ssr_at, lo, hi, 60);
                if ssr_at(refined) < best_ssr {
                    refined
                } else {
                    at
                }
            } else {
                at
            }
        }
    };

    let fit = fit_at(series, sbar, settings.fixed_alpha_mix).ok_or_else(|| {
        Error::Calibration(format!(
            "regression is degenerate at S_bar = {sbar}: reconstructed susceptibles not positive, a season without usable rows, or too few rows"
        ))
    })?;
    let dof = fit
        .rows
        .saturating_sub(SEASON_LENGTH + usize::from(settings.fixed_alpha_mix.is_none()));
    let residual_sd = if dof > 0 {
        (fit.ssr / dof as f64).sqrt()
    } else {
        0.0
    };

    let mut births = [0.0; SEASON_LENGTH];
    let mut counts = [0usize; SEASON_LENGTH];
    for w in series.records.windows(2) {
        births[season(w[0].t)] += w[1].births;
        counts[season(w[0].t)] += 1;
    }
    let birth_schedule = (0..SEASON_LENGTH)
        .map(|k| {
            if counts[k] > 0 {
                births[k] / counts[k] as f64
            } else {
                0.0
            }
        })
        .collect();
    let params = TsirParams::new(
        fit.log_beta.iter().map(|b| b.exp()).collect(),
        fit.alpha.clamp(1e-6, 1.0),
        birth_schedule,
        residual_sd,
        population,
    )?;
    Ok(CalibrationReport {
        params,
        sbar,
        alpha_mix_raw: fit.alpha,
        residual_sd,
        sum_squared_residuals: fit.ssr,
        rows_used: fit.rows,
        rows_excluded: fit.excluded,
    })
}
