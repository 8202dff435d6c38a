//! Ground-truth register simulation.
//!
//! Downstream evaluation needs a confidential register whose data-generating
//! process is known. [`simulate_register`] produces stylized entry/exit and
//! size dynamics (left-censored entry mass, geometric exit hazard, AR(1) log
//! employment, multiplicative payroll). [`simulate_dynamic_panel`] generates
//! a balanced-cohort panel that satisfies the dynamic employment model with
//! known coefficients, for estimator-recovery tests.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::register::{EntityHistory, Register, YearRange};
use crate::seed::derive_rng;

/// Mean log employment around which industry size levels are drawn.
const BASE_LOG_SIZE: f64 = 1.5;
/// Spread of per-industry size and wage levels.
const INDUSTRY_LEVEL_SD: f64 = 0.2;
/// Share of `entities_per_industry` injected as a structural-break cohort.
const BREAK_COHORT_SHARE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_industries: usize,
    pub entities_per_industry: usize,
    pub window: YearRange,
    /// Per-year probability that entry is delayed one more year; 0 leaves
    /// every entity left-censored at the window start.
    pub entry_rate: f64,
    /// Per-year probability that a live entity exits before the next year.
    pub exit_hazard: f64,
    /// AR(1) persistence of log employment, in (0, 1).
    pub ar1_rho: f64,
    /// Stationary standard deviation of log employment.
    pub size_sigma: f64,
    /// Mean log wage (log payroll-per-worker) across industries.
    pub wage_level: f64,
    /// Entity-year wage noise standard deviation.
    pub wage_sigma: f64,
    /// When set, injects a cohort whose records exist with missing sizes for
    /// up to two years before their first positive year (late integration).
    pub structural_break_year: Option<i32>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_industries: 5,
            entities_per_industry: 2000,
            window: YearRange::new(1991, 2015).expect("static range"),
            entry_rate: 0.7,
            exit_hazard: 0.08,
            ar1_rho: 0.7,
            size_sigma: 1.1,
            wage_level: 3.4,
            wage_sigma: 0.25,
            structural_break_year: None,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_industries < 1 || self.entities_per_industry < 1 {
            return Err(Error::invalid(
                "simulation needs at least one industry and entity",
            ));
        }
        if self.n_industries > 88 {
            return Err(Error::invalid(
                "industry codes support at most 88 industries",
            ));
        }
        if !(0.0..=1.0).contains(&self.entry_rate) || !(0.0..=1.0).contains(&self.exit_hazard) {
            return Err(Error::invalid(
                "entry_rate and exit_hazard must lie in [0, 1]",
            ));
        }
        if !(self.ar1_rho > 0.0 && self.ar1_rho < 1.0) {
            return Err(Error::invalid("ar1_rho must lie in (0, 1)"));
        }
        if self.size_sigma < 0.0 || self.wage_sigma < 0.0 {
            return Err(Error::invalid("dispersion parameters must be non-negative"));
        }
        if let Some(b) = self.structural_break_year {
            if !self.window.contains(b) || b == self.window.first() {
                return Err(Error::invalid(format!(
                    "structural break year {b} must lie strictly inside the window {}",
                    self.window
                )));
            }
        }
        Ok(())
    }

    /// Four-digit industry codes; distinct at the two-digit level.
    pub fn industry_codes(&self) -> Vec<String> {
        (0..self.n_industries)
            .map(|j| format!("{}", 1100 + 100 * j as i32))
            .collect()
    }
}

fn std_normal(rng: &mut ChaCha20Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

/// Geometric entry delay: keep delaying with probability `entry_rate`.
fn draw_first_year(rng: &mut ChaCha20Rng, window: YearRange, entry_rate: f64) -> i32 {
    let mut year = window.first();
    while year < window.last() && rng.random::<f64>() < entry_rate {
        year += 1;
    }
    year
}

/// Survive each subsequent year with probability `1 - exit_hazard`.
fn draw_last_year(rng: &mut ChaCha20Rng, first: i32, window: YearRange, exit_hazard: f64) -> i32 {
    let mut year = first;
    while year < window.last() && rng.random::<f64>() >= exit_hazard {
        year += 1;
    }
    year
}

/// Stationary AR(1) path of log employment over `len` years.
fn ar1_path(rng: &mut ChaCha20Rng, len: usize, mu: f64, rho: f64, sigma: f64) -> Vec<f64> {
    let innovation_sd = sigma * (1.0 - rho * rho).sqrt();
    let mut path = Vec::with_capacity(len);
    let mut x = mu + sigma * std_normal(rng);
    path.push(x);
    for _ in 1..len {
        x = mu + rho * (x - mu) + innovation_sd * std_normal(rng);
        path.push(x);
    }
    path
}

/// Deterministic function of the config: same config, identical register.
/// Industries draw from independent sub-streams, so edits to one industry's
/// parameters or data never perturb another's draws.
pub fn simulate_register(cfg: &SimConfig) -> Result<Register> {
    cfg.validate()?;
    let mut entities = Vec::new();
    for code in cfg.industry_codes() {
        let mut rng = derive_rng(cfg.seed, "register-sim", &code);
        let size_mu = BASE_LOG_SIZE + INDUSTRY_LEVEL_SD * std_normal(&mut rng);
        let wage_mu = cfg.wage_level + INDUSTRY_LEVEL_SD * std_normal(&mut rng);

        for e in 0..cfg.entities_per_industry {
            let first = draw_first_year(&mut rng, cfg.window, cfg.entry_rate);
            let last = draw_last_year(&mut rng, first, cfg.window, cfg.exit_hazard);
            entities.push(make_entity(
                format!("E{code}-{e:05}"),
                &code,
                YearRange::new(first, last)?,
                &mut rng,
                size_mu,
                wage_mu,
                cfg,
            ));
        }

        if let Some(break_year) = cfg.structural_break_year {
            let n_break = ((cfg.entities_per_industry as f64 * BREAK_COHORT_SHARE) as usize).max(1);
            for e in 0..n_break {
                let last = draw_last_year(&mut rng, break_year, cfg.window, cfg.exit_hazard);
                let drawn: u8 = if rng.random::<f64>() < 0.5 { 1 } else { 2 };
                let prefix = drawn.min((break_year - cfg.window.first()).min(255) as u8);
                let mut entity = make_entity(
                    format!("X{code}-{e:05}"),
                    &code,
                    YearRange::new(break_year, last)?,
                    &mut rng,
                    size_mu,
                    wage_mu,
                    cfg,
                );
                entity.missing_prefix_years = prefix;
                entities.push(entity);
            }
        }
    }
    let mut register = Register::from_entities(entities, cfg.window);
    register.industry_codes = cfg.industry_codes().into_iter().collect();
    Ok(register)
}

fn make_entity(
    id: String,
    code: &str,
    lifespan: YearRange,
    rng: &mut ChaCha20Rng,
    size_mu: f64,
    wage_mu: f64,
    cfg: &SimConfig,
) -> EntityHistory {
    let log_emp = ar1_path(rng, lifespan.len(), size_mu, cfg.ar1_rho, cfg.size_sigma);
    let employment: Vec<f64> = log_emp.iter().map(|x| x.exp()).collect();
    let payroll: Vec<f64> = employment
        .iter()
        .map(|emp| emp * (wage_mu + cfg.wage_sigma * std_normal(rng)).exp())
        .collect();
    EntityHistory::new(id, code, lifespan, employment, payroll)
}

/// Data-generating process for the dynamic employment model, with every
/// coefficient known. Log employment follows
///
///   y_et = b0 + theta * y_{e,t-1} + eta * p_et + age effects + lambda_t
///          + alpha_e + eps_et,        eps_et = u_et + ma1 * u_{e,t-1}
///
/// with exogenous stationary AR(1) log payroll `p`, entity effects `alpha`,
/// and a burn-in long enough that every entity starts at stationarity (the
/// initial-conditions requirement of the level moment conditions).
#[derive(Debug, Clone, PartialEq)]
pub struct DynPanelConfig {
    pub theta: f64,
    pub eta: f64,
    pub intercept: f64,
    /// Effects for age classes 3-4, 5-7, 8-12, 13+ relative to 0-2.
    pub age_effects: [f64; 4],
    pub entity_effect_sd: f64,
    pub noise_sd: f64,
    /// MA(1) coefficient of the disturbance; 0 gives white noise.
    pub ma1: f64,
    pub pay_rho: f64,
    pub pay_innovation_sd: f64,
    pub year_effect_sd: f64,
    /// Entities enter in staggered cohorts so age varies independently of
    /// calendar year.
    pub n_cohorts: usize,
    pub n_industries: usize,
}

impl Default for DynPanelConfig {
    fn default() -> Self {
        DynPanelConfig {
            theta: 0.5,
            eta: 0.4,
            intercept: 0.0,
            age_effects: [0.0; 4],
            entity_effect_sd: 0.8,
            noise_sd: 0.2,
            ma1: 0.0,
            pay_rho: 0.5,
            pay_innovation_sd: 0.5,
            year_effect_sd: 0.05,
            n_cohorts: 4,
            n_industries: 2,
        }
    }
}

const BURN_IN: usize = 40;

impl DynPanelConfig {
    pub fn generate(&self, n: usize, t: usize, seed: u64) -> Result<Register> {
        if self.theta.abs() >= 1.0 {
            return Err(Error::invalid(format!(
                "dynamic panel needs |theta| < 1, got {}",
                self.theta
            )));
        }
        if n == 0 || t < 3 {
            return Err(Error::invalid(
                "dynamic panel needs n >= 1 entities and t >= 3 years",
            ));
        }
        if self.pay_rho.abs() >= 1.0 {
            return Err(Error::invalid("pay_rho must lie in (-1, 1)"));
        }
        let window = YearRange::new(2001, 2001 + t as i32 - 1)?;
        let mut rng = derive_rng(seed, "dynamic-panel", "panel");
        let year_effects: Vec<f64> = (0..t)
            .map(|_| self.year_effect_sd * std_normal(&mut rng))
            .collect();
        let pay_stationary_sd = self.pay_innovation_sd / (1.0 - self.pay_rho * self.pay_rho).sqrt();

        let max_cohort = self.n_cohorts.min(t.saturating_sub(2)).max(1);
        let mut entities = Vec::with_capacity(n);
        for e in 0..n {
            let cohort = e % max_cohort;
            let first = window.first() + cohort as i32;
            let len = (window.last() - first) as usize + 1;
            let alpha = self.entity_effect_sd * std_normal(&mut rng);

            // Exogenous pay path, stationary from the first draw; extended
            // backwards through the burn-in.
            let total = BURN_IN + len;
            let mut pay = Vec::with_capacity(total);
            let mut p = pay_stationary_sd * std_normal(&mut rng);
            pay.push(p);
            for _ in 1..total {
                p = self.pay_rho * p + self.pay_innovation_sd * std_normal(&mut rng);
                pay.push(p);
            }

            // Disturbances with optional MA(1) structure.
            let mut u_prev = self.noise_sd * std_normal(&mut rng);
            let mut eps = Vec::with_capacity(total);
            for _ in 0..total {
                let u = self.noise_sd * std_normal(&mut rng);
                eps.push(u + self.ma1 * u_prev);
                u_prev = u;
            }

            // Burn in from the deterministic steady state; age and year
            // effects only apply inside the observation window.
            let mut y = (self.intercept + alpha + self.eta * pay[0]) / (1.0 - self.theta);
            let mut log_emp = Vec::with_capacity(len);
            for s in 0..total {
                let mut rhs = self.intercept + self.theta * y + self.eta * pay[s] + alpha + eps[s];
                if s >= BURN_IN {
                    let year = first + (s - BURN_IN) as i32;
                    let age = (year - first) as u32;
                    rhs += self.age_effect(age) + year_effects[(year - window.first()) as usize];
                }
                y = rhs;
                if s >= BURN_IN {
                    log_emp.push(y);
                }
            }

            let employment: Vec<f64> = log_emp.iter().map(|x| x.exp()).collect();
            let payroll: Vec<f64> = pay[BURN_IN..].iter().map(|p| p.exp()).collect();
            let industry = format!("{}", 1100 + 100 * (e % self.n_industries) as i32);
            entities.push(EntityHistory::new(
                format!("P{:05}", e),
                industry,
                YearRange::new(first, window.last())?,
                employment,
                payroll,
            ));
        }
        Ok(Register::from_entities(entities, window))
    }

    fn age_effect(&self, age: u32) -> f64 {
        use crate::register::AgeClass::*;
        match crate::register::AgeClass::from_age(age) {
            A0to2 => 0.0,
            A3to4 => self.age_effects[0],
            A5to7 => self.age_effects[1],
            A8to12 => self.age_effects[2],
            A13Plus => self.age_effects[3],
        }
    }
}

/// Panel oracle with the default nuisance parameters.
pub fn simulate_dynamic_panel(
    theta: f64,
    eta: f64,
    n: usize,
    t: usize,
    seed: u64,
) -> Result<Register> {
    DynPanelConfig {
        theta,
        eta,
        ..DynPanelConfig::default()
    }
    .generate(n, t, seed)
}
