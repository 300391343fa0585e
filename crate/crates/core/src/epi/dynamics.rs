use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seasonal steps per year. Seasonality is indexed by `t mod 24`.
pub const SEASON_LENGTH: usize = 24;

/// Parameters of the stochastic TSIR recursion.
///
/// `beta_seasonal[tau]` multiplies raw susceptible counts, so it carries units
/// of 1/(person * step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsirParams {
    pub beta_seasonal: Vec<f64>,
    pub alpha_mix: f64,
    pub birth_schedule: Vec<f64>,
    pub noise_sd: f64,
    pub population: f64,
}

impl TsirParams {
    pub fn new(
        beta_seasonal: Vec<f64>,
        alpha_mix: f64,
        birth_schedule: Vec<f64>,
        noise_sd: f64,
        population: f64,
    ) -> Result<Self> {
        let p = Self {
            beta_seasonal,
            alpha_mix,
            birth_schedule,
            noise_sd,
            population,
        };
        p.validate()?;
        Ok(p)
    }

    /// Constant births with a cosine seasonal transmission profile
    /// `beta_mean * (1 + amplitude * cos(2 pi tau / 24))`.
    pub fn seasonal_cosine(
        beta_mean: f64,
        amplitude: f64,
        alpha_mix: f64,
        births: f64,
        noise_sd: f64,
        population: f64,
    ) -> Result<Self> {
        let beta = (0..SEASON_LENGTH)
            .map(|tau| {
                let phase = 2.0 * std::f64::consts::PI * tau as f64 / SEASON_LENGTH as f64;
                beta_mean * (1.0 + amplitude * phase.cos())
            })
            .collect();
        Self::new(
            beta,
            alpha_mix,
            vec![births; SEASON_LENGTH],
            noise_sd,
            population,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_seasonal.len() != SEASON_LENGTH {
            return Err(Error::Parameter(format!(
                "beta_seasonal must have {SEASON_LENGTH} entries, got {}",
                self.beta_seasonal.len()
            )));
        }
        if self.birth_schedule.len() != SEASON_LENGTH {
            return Err(Error::Parameter(format!(
                "birth_schedule must have {SEASON_LENGTH} entries, got {}",
                self.birth_schedule.len()
            )));
        }
        if let Some(b) = self
            .beta_seasonal
            .iter()
            .find(|b| !(b.is_finite() && **b > 0.0))
        {
            return Err(Error::Parameter(format!(
                "beta_seasonal entries must be > 0, got {b}"
            )));
        }
        if !(self.alpha_mix > 0.0 && self.alpha_mix <= 1.0) {
            return Err(Error::Parameter(format!(
                "alpha_mix must lie in (0, 1], got {}",
                self.alpha_mix
            )));
        }
        if let Some(b) = self
            .birth_schedule
            .iter()
            .find(|b| !(b.is_finite() && **b >= 0.0))
        {
            return Err(Error::Parameter(format!("births must be >= 0, got {b}")));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise_sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        if !(self.population.is_finite() && self.population > 0.0) {
            return Err(Error::Parameter(format!(
                "population must be > 0, got {}",
                self.population
            )));
        }
        Ok(())
    }

    pub fn max_births(&self) -> f64 {
        self.birth_schedule.iter().copied().fold(0.0, f64::max)
    }

    /// Copy with every seasonal transmission rate multiplied by `factor`.
    pub fn with_beta_multiplier(&self, factor: f64) -> Result<Self> {
        let mut p = self.clone();
        p.beta_seasonal.iter_mut().for_each(|b| *b *= factor);
        p.validate()?;
        Ok(p)
    }
}

/// Susceptible count, incidence and biweek-of-year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiState {
    pub s: f64,
    pub i: f64,
    pub tau: usize,
}

impl EpiState {
    pub fn new(s: f64, i: f64, tau: usize) -> Result<Self> {
        let st = Self { s, i, tau };
        st.check_basic()?;
        Ok(st)
    }

    fn check_basic(&self) -> Result<()> {
        if !(self.s.is_finite() && self.s >= 0.0) {
            return Err(Error::Parameter(format!(
                "S must be finite and >= 0, got {}",
                self.s
            )));
        }
        if !(self.i.is_finite() && self.i >= 0.0) {
            return Err(Error::Parameter(format!(
                "I must be finite and >= 0, got {}",
                self.i
            )));
        }
        if self.tau >= SEASON_LENGTH {
            return Err(Error::Index(format!(
                "tau {} outside 0..{SEASON_LENGTH}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Full validity check against a population size, including `S + I <= N`.
    pub fn validate(&self, population: f64) -> Result<()> {
        self.check_basic()?;
        if self.s + self.i > population {
            return Err(Error::Parameter(format!(
                "S + I = {} exceeds population {population}",
                self.s + self.i
            )));
        }
        Ok(())
    }

    /// Recovered count by convention `N - S - I`, floored at zero.
    pub fn recovered(&self, population: f64) -> f64 {
        (population - self.s - self.i).max(0.0)
    }
}

pub fn seasonal_beta(params: &TsirParams, tau: usize) -> Result<f64> {
    params
        .beta_seasonal
        .get(tau)
        .copied()
        .ok_or_else(|| Error::Index(format!("tau {tau} outside 0..{SEASON_LENGTH}")))
}

/// One stochastic TSIR step.
///
/// Incidence is drawn from the incoming state first,
/// `I' = clamp(round(beta_tau * I^alpha * S * eps), 0, S + B_tau)`,
/// and the susceptible update then uses it,
/// `S' = clamp(round((1 - mu) * (B_tau + S - I')), 0, N)`.
pub fn tsir_step(state: &EpiState, mu: f64, params: &TsirParams, eps: f64) -> Result<EpiState> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Parameter(format!(
            "vaccination fraction {mu} outside [0, 1]"
        )));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Parameter(format!(
            "noise draw must be finite and > 0, got {eps}"
        )));
    }
    state.check_basic()?;
    let beta = seasonal_beta(params, state.tau)?;
    let births = params.birth_schedule[state.tau];

    let force = if state.i > 0.0 {
        beta * state.i.powf(params.alpha_mix) * state.s * eps
    } else {
        0.0
    };
    let i_next = force.round().clamp(0.0, (state.s + births).floor());
    let s_next = ((1.0 - mu) * (births + state.s - i_next))
        .round()
        .clamp(0.0, params.population);
    Ok(EpiState {
        s: s_next,
        i: i_next,
        tau: (state.tau + 1) % SEASON_LENGTH,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(beta: f64, alpha: f64, births: f64, n: f64) -> TsirParams {
        TsirParams::new(vec![beta; 24], alpha, vec![births; 24], 0.1, n).unwrap()
    }

    #[test]
    fn hand_evaluated_step() {
        let p = flat(0.001, 1.0, 50.0, 10_000.0);
        let next = tsir_step(&EpiState::new(1000.0, 100.0, 0).unwrap(), 0.0, &p, 1.0).unwrap();
        assert_eq!(
            next,
            EpiState {
                s: 950.0,
                i: 100.0,
                tau: 1
            }
        );
    }

    #[test]
    fn full_coverage_empties_susceptibles() {
        let p = flat(0.0005, 0.9, 30.0, 5000.0);
        let next = tsir_step(&EpiState::new(2000.0, 40.0, 7).unwrap(), 1.0, &p, 1.0).unwrap();
        assert_eq!(next.s, 0.0);
    }

    #[test]
    fn zero_incidence_is_absorbing() {
        let p = flat(0.001, 0.97, 50.0, 1040.0);
        let next = tsir_step(&EpiState::new(1000.0, 0.0, 3).unwrap(), 0.0, &p, 1.0).unwrap();
        assert_eq!(next.i, 0.0);
        assert_eq!(next.s, 1040.0);
        let capped = flat(0.001, 0.97, 50.0, 1020.0);
        let next = tsir_step(&EpiState::new(1000.0, 0.0, 3).unwrap(), 0.0, &capped, 1.0).unwrap();
        assert_eq!(next.s, 1020.0);
    }

    #[test]
    fn constant_schedule_and_range_check() {
        let p = flat(0.002, 1.0, 0.0, 100.0);
        for tau in 0..24 {
            assert_eq!(seasonal_beta(&p, tau).unwrap(), 0.002);
        }
        assert!(matches!(seasonal_beta(&p, 24), Err(Error::Index(_))));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = flat(0.001, 1.0, 50.0, 10_000.0);
        let st = EpiState::new(10.0, 1.0, 0).unwrap();
        assert!(tsir_step(&st, 1.5, &p, 1.0).is_err());
        assert!(tsir_step(&st, 0.5, &p, f64::NAN).is_err());
        assert!(tsir_step(&st, 0.5, &p, 0.0).is_err());
        assert!(EpiState::new(1.0, 1.0, 24).is_err());
        assert!(EpiState::new(60.0, 50.0, 0)
            .unwrap()
            .validate(100.0)
            .is_err());
        assert!(TsirParams::new(vec![0.1; 23], 1.0, vec![0.0; 24], 0.0, 1.0).is_err());
        assert!(TsirParams::new(vec![0.1; 24], 1.2, vec![0.0; 24], 0.0, 1.0).is_err());
    }

    fn arb_case() -> impl Strategy<Value = (TsirParams, EpiState, f64)> {
        (
            1e-6f64..1e-3,
            0.5f64..=1.0,
            0.0f64..200.0,
            1000.0f64..50_000.0,
            0.0f64..1.0,
            0.0f64..1.0,
            0usize..24,
            0.2f64..5.0,
        )
            .prop_map(|(beta, alpha, births, n, sf, if_, tau, eps)| {
                let p = TsirParams::new(
                    vec![beta; 24],
                    alpha,
                    vec![births.round(); 24],
                    0.2,
                    n.round(),
                )
                .unwrap();
                let s = (sf * p.population).round();
                let i = (if_ * (p.population - s)).round();
                (p, EpiState { s, i, tau }, eps)
            })
    }

    proptest! {
        #[test]
        fn conservation_bound((p, st, eps) in arb_case(), mu in 0.0f64..=1.0) {
            let next = tsir_step(&st, mu, &p, eps).unwrap();
            prop_assert!(next.s + next.i <= p.population + p.max_births());
            prop_assert!(next.s >= 0.0 && next.i >= 0.0);
        }

        #[test]
        fn susceptibles_nonincreasing_in_coverage((p, st, eps) in arb_case(), m1 in 0.0f64..=1.0, m2 in 0.0f64..=1.0) {
            let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            let a = tsir_step(&st, lo, &p, eps).unwrap();
            let b = tsir_step(&st, hi, &p, eps).unwrap();
            prop_assert!(b.s <= a.s);
            prop_assert_eq!(a.i, b.i);
        }

        #[test]
        fn step_is_deterministic((p, st, eps) in arb_case(), mu in 0.0f64..=1.0) {
            let a = tsir_step(&st, mu, &p, eps).unwrap();
            let b = tsir_step(&st, mu, &p, eps).unwrap();
            prop_assert_eq!(a.s.to_bits(), b.s.to_bits());
            prop_assert_eq!(a.i.to_bits(), b.i.to_bits());
        }
    }
}
