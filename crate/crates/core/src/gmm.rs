//! The analyst's modelling strategy for employment dynamics: OLS, difference
//! GMM, system GMM, and system GMM under MA(1) errors, with overidentification
//! and second-order serial-correlation diagnostics.
//!
//! The estimated model regresses log employment on its one-year lag, log
//! payroll, age-class dummies, and year effects (industry dummies in OLS;
//! entity effects handled by the GMM transformations). Payroll is treated as
//! predetermined throughout: difference equations are instrumented by lagged
//! levels of employment (t-2 and earlier) and payroll (t-1 and earlier), and
//! system level equations by once-lagged first differences. The MA(1) variant
//! deepens every instrument lag by one. Instruments are collapsed (one column
//! per lag distance) unless configured otherwise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::register::{AgeClass, Register, YearRange};
use crate::stats;

// ---------------------------------------------------------------------------
// Design
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct EntitySeries {
    industry_index: usize,
    first: i32,
    last: i32,
    birth: i32,
    log_emp: Vec<f64>,
    log_pay: Vec<f64>,
}

impl EntitySeries {
    fn emp(&self, year: i32) -> f64 {
        self.log_emp[(year - self.first) as usize]
    }

    fn pay(&self, year: i32) -> f64 {
        self.log_pay[(year - self.first) as usize]
    }

    fn age_class(&self, year: i32) -> AgeClass {
        AgeClass::from_age((year - self.birth).max(0) as u32)
    }
}

/// Long panel prepared for estimation: per-entity contiguous log series with
/// lag bookkeeping. Entities with a single usable year carry no estimation
/// rows and are dropped with a count.
#[derive(Debug, Clone)]
pub struct PanelDesign {
    entities: Vec<EntitySeries>,
    industries: Vec<String>,
    window: YearRange,
    pub dropped_single_year_entities: usize,
}

/// Build the estimation panel from a register.
pub fn build_design(r: &Register) -> Result<PanelDesign> {
    if r.observation_window.len() < 3 {
        return Err(Error::data(
            "panel estimation needs a window of at least 3 years",
        ));
    }
    let mut industries: Vec<String> = r.entities.iter().map(|e| e.industry.clone()).collect();
    industries.sort();
    industries.dedup();
    let mut entities = Vec::new();
    let mut dropped = 0usize;
    let mut sorted: Vec<&crate::register::EntityHistory> = r.entities.iter().collect();
    sorted.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    for e in sorted {
        if e.lifespan.len() < 2 {
            dropped += 1;
            continue;
        }
        entities.push(EntitySeries {
            industry_index: industries
                .binary_search(&e.industry)
                .expect("collected above"),
            first: e.lifespan.first(),
            last: e.lifespan.last(),
            birth: e.birth_year(),
            log_emp: e.employment.iter().map(|v| v.ln()).collect(),
            log_pay: e.payroll.iter().map(|v| v.ln()).collect(),
        });
    }
    if entities.is_empty() {
        return Err(Error::data(
            "no entity holds two consecutive usable years; nothing to estimate",
        ));
    }
    Ok(PanelDesign {
        entities,
        industries,
        window: r.observation_window,
        dropped_single_year_entities: dropped,
    })
}

impl PanelDesign {
    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    fn min_first(&self) -> i32 {
        self.entities
            .iter()
            .map(|e| e.first)
            .min()
            .expect("non-empty")
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    Ols,
    DiffGmm,
    SystemGmm,
    SystemGmmMa,
}

impl ModelTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::Ols => "ols",
            ModelTag::DiffGmm => "diff_gmm",
            ModelTag::SystemGmm => "system_gmm",
            ModelTag::SystemGmmMa => "system_gmm_ma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub name: String,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SarganTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// df = 0: the statistic is identically zero and carries no information.
    pub exactly_identified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: ModelTag,
    /// Coefficient on lagged log employment.
    pub theta: Estimate,
    /// Coefficient on log payroll.
    pub eta: Estimate,
    pub terms: Vec<Term>,
    pub n_obs: usize,
    pub n_entities: usize,
    pub dropped_entities: usize,
    pub r_squared: Option<f64>,
    pub sargan: Option<SarganTest>,
    pub m2: Option<f64>,
    pub instrument_count: Option<usize>,
}

// ---------------------------------------------------------------------------
// Shared column machinery
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum XCol {
    Const,
    LagEmployment,
    Payroll,
    Age(AgeClass),
    Year(i32),
}

impl XCol {
    fn name(&self) -> String {
        match self {
            XCol::Const => "intercept".into(),
            XCol::LagEmployment => "lag_employment".into(),
            XCol::Payroll => "ln_payroll".into(),
            XCol::Age(class) => class.column_name().into(),
            XCol::Year(y) => format!("year_{y}"),
        }
    }

    fn is_exogenous(&self) -> bool {
        !matches!(self, XCol::LagEmployment | XCol::Payroll)
    }

    fn level_value(&self, e: &EntitySeries, t: i32) -> f64 {
        match self {
            XCol::Const => 1.0,
            XCol::LagEmployment => e.emp(t - 1),
            XCol::Payroll => e.pay(t),
            XCol::Age(class) => f64::from(e.age_class(t) == *class),
            XCol::Year(y) => f64::from(t == *y),
        }
    }

    fn diff_value(&self, e: &EntitySeries, t: i32) -> f64 {
        match self {
            XCol::Const => 0.0,
            _ => self.level_value(e, t) - self.level_value(e, t - 1),
        }
    }
}

/// Candidate age and year dummies given a reference year.
fn dummy_columns(design: &PanelDesign, reference_year: i32) -> Vec<XCol> {
    let mut cols = Vec::new();
    for class in &AgeClass::ALL[1..] {
        cols.push(XCol::Age(*class));
    }
    for y in design.window.years() {
        if y != reference_year {
            cols.push(XCol::Year(y));
        }
    }
    cols
}

// ---------------------------------------------------------------------------
// OLS
// ---------------------------------------------------------------------------

/// Pooled OLS of the dynamic employment equation with industry dummies.
pub fn ols_fit(design: &PanelDesign) -> Result<FitReport> {
    let reference_year = design.min_first() + 1;
    let mut cols = vec![XCol::Const, XCol::LagEmployment, XCol::Payroll];
    cols.extend(dummy_columns(design, reference_year));
    // Industry dummies, reference = lexicographically smallest.
    let industry_cols: Vec<usize> = (1..design.industries.len()).collect();

    let mut rows = 0usize;
    for e in &design.entities {
        rows += (e.last - e.first) as usize;
    }
    let p_base = cols.len();
    let p = p_base + industry_cols.len();
    let mut x = DMatrix::<f64>::zeros(rows, p);
    let mut y = DVector::<f64>::zeros(rows);
    let mut i = 0usize;
    for e in &design.entities {
        for t in e.first + 1..=e.last {
            for (j, col) in cols.iter().enumerate() {
                x[(i, j)] = col.level_value(e, t);
            }
            for (j, industry) in industry_cols.iter().enumerate() {
                x[(i, p_base + j)] = f64::from(e.industry_index == *industry);
            }
            y[i] = e.emp(t);
            i += 1;
        }
    }

    let mut names: Vec<String> = cols.iter().map(XCol::name).collect();
    for industry in &industry_cols {
        names.push(format!("industry_{}", design.industries[*industry]));
    }
    // Drop empty dummy columns (ages or years with no observations).
    let keep: Vec<usize> = (0..p)
        .filter(|&j| (0..rows).any(|i| x[(i, j)] != 0.0))
        .collect();
    let x = x.select_columns(&keep);
    let names: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();

    let fit = linalg::lstsq(&x, &y, &names)?;
    let dof = rows.saturating_sub(names.len()).max(1) as f64;
    let sigma2 = fit.rss / dof;
    let terms: Vec<Term> = names
        .iter()
        .enumerate()
        .map(|(j, name)| Term {
            name: name.clone(),
            estimate: Estimate {
                value: fit.coefficients[j],
                std_error: (sigma2 * fit.xtx_inv[(j, j)].max(0.0)).sqrt(),
            },
        })
        .collect();
    let mean_y = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    let report = FitReport {
        model: ModelTag::Ols,
        theta: terms
            .iter()
            .find(|t| t.name == "lag_employment")
            .map(|t| t.estimate)
            .ok_or_else(|| Error::numerical("lag column missing from OLS fit".to_string()))?,
        eta: terms
            .iter()
            .find(|t| t.name == "ln_payroll")
            .map(|t| t.estimate)
            .ok_or_else(|| Error::numerical("payroll column missing from OLS fit".to_string()))?,
        terms,
        n_obs: rows,
        n_entities: design.entities.len(),
        dropped_entities: design.dropped_single_year_entities,
        r_squared: Some(1.0 - fit.rss / tss),
        sargan: None,
        m2: None,
        instrument_count: None,
    };
    Ok(report)
}

// ---------------------------------------------------------------------------
// GMM
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    /// Add level equations instrumented by lagged differences.
    pub system: bool,
    /// Deepen every instrument lag by one, valid under MA(1) disturbances.
    pub ma_errors: bool,
    /// Number of lag distances used per instrumented variable.
    pub max_lag_depth: usize,
    /// One instrument column per lag distance instead of one per
    /// (period, distance) pair.
    pub collapse: bool,
    /// Override the year-dummy reference (defaults to the earliest level
    /// period); estimates are invariant to this choice.
    pub reference_year: Option<i32>,
}

impl GmmSpec {
    pub fn diff(max_lag_depth: usize) -> Self {
        GmmSpec {
            system: false,
            ma_errors: false,
            max_lag_depth,
            collapse: true,
            reference_year: None,
        }
    }

    pub fn system(max_lag_depth: usize) -> Self {
        GmmSpec {
            system: true,
            ..GmmSpec::diff(max_lag_depth)
        }
    }

    pub fn system_ma(max_lag_depth: usize) -> Self {
        GmmSpec {
            system: true,
            ma_errors: true,
            ..GmmSpec::diff(max_lag_depth)
        }
    }

    fn model_tag(&self) -> ModelTag {
        match (self.system, self.ma_errors) {
            (false, _) => ModelTag::DiffGmm,
            (true, false) => ModelTag::SystemGmm,
            (true, true) => ModelTag::SystemGmmMa,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ZCol {
    /// Level of log employment dated t - distance, instrumenting a
    /// difference equation (optionally tied to one period).
    DiffLagEmp {
        distance: i32,
        period: Option<i32>,
    },
    /// Level of log payroll dated t - distance (predetermined).
    DiffLagPay {
        distance: i32,
        period: Option<i32>,
    },
    /// Lagged first difference of employment for a level equation.
    LevelDiffEmp {
        lag: i32,
        period: Option<i32>,
    },
    /// Lagged first difference of payroll for a level equation.
    LevelDiffPay {
        lag: i32,
        period: Option<i32>,
    },
    Exog(XCol),
}

struct Equation {
    t: i32,
    is_diff: bool,
}

/// One-step GMM estimation; diagnostics are computed at fit time and live in
/// the report.
pub struct GmmEstimation {
    report: FitReport,
}

impl std::ops::Deref for GmmEstimation {
    type Target = FitReport;

    fn deref(&self) -> &FitReport {
        &self.report
    }
}

impl GmmEstimation {
    pub fn report(&self) -> &FitReport {
        &self.report
    }

    pub fn into_report(self) -> FitReport {
        self.report
    }
}

fn equations_for(e: &EntitySeries, spec: &GmmSpec) -> Vec<Equation> {
    let mut eqs = Vec::new();
    for t in e.first + 2..=e.last {
        eqs.push(Equation { t, is_diff: true });
    }
    if spec.system {
        for t in e.first + 1..=e.last {
            eqs.push(Equation { t, is_diff: false });
        }
    }
    eqs
}

fn z_value(col: &ZCol, e: &EntitySeries, eq: &Equation) -> f64 {
    match col {
        ZCol::DiffLagEmp { distance, period } => {
            if !eq.is_diff || period.is_some_and(|p| p != eq.t) {
                return 0.0;
            }
            let s = eq.t - distance;
            if s >= e.first && s <= e.last {
                e.emp(s)
            } else {
                0.0
            }
        }
        ZCol::DiffLagPay { distance, period } => {
            if !eq.is_diff || period.is_some_and(|p| p != eq.t) {
                return 0.0;
            }
            let s = eq.t - distance;
            if s >= e.first && s <= e.last {
                e.pay(s)
            } else {
                0.0
            }
        }
        ZCol::LevelDiffEmp { lag, period } => {
            if eq.is_diff || period.is_some_and(|p| p != eq.t) {
                return 0.0;
            }
            let s = eq.t - lag;
            if s > e.first && s <= e.last {
                e.emp(s) - e.emp(s - 1)
            } else {
                0.0
            }
        }
        ZCol::LevelDiffPay { lag, period } => {
            if eq.is_diff || period.is_some_and(|p| p != eq.t) {
                return 0.0;
            }
            let s = eq.t - lag;
            if s > e.first && s <= e.last {
                e.pay(s) - e.pay(s - 1)
            } else {
                0.0
            }
        }
        ZCol::Exog(c) => {
            if eq.is_diff {
                c.diff_value(e, eq.t)
            } else {
                c.level_value(e, eq.t)
            }
        }
    }
}

fn x_row(cols: &[XCol], e: &EntitySeries, eq: &Equation, out: &mut [f64]) {
    for (j, col) in cols.iter().enumerate() {
        out[j] = if eq.is_diff {
            col.diff_value(e, eq.t)
        } else {
            col.level_value(e, eq.t)
        };
    }
}

/// Block weighting for the one-step estimator: the Arellano-Bond tridiagonal
/// pattern on consecutive difference equations, identity on levels.
fn h_matrix(eqs: &[Equation]) -> DMatrix<f64> {
    let n = eqs.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (&eqs[i], &eqs[j]);
        match (a.is_diff, b.is_diff) {
            (true, true) => {
                if a.t == b.t {
                    2.0
                } else if (a.t - b.t).abs() == 1 {
                    -1.0
                } else {
                    0.0
                }
            }
            (false, false) => f64::from(a.t == b.t),
            _ => 0.0,
        }
    })
}

fn candidate_z_cols(design: &PanelDesign, spec: &GmmSpec, x_cols: &[XCol]) -> Vec<ZCol> {
    let ma = i32::from(spec.ma_errors);
    let depth = spec.max_lag_depth as i32;
    let mut cols = Vec::new();
    let window_len = design.window.len() as i32;

    let periods: Vec<Option<i32>> = if spec.collapse {
        vec![None]
    } else {
        (design.window.first() + 2..=design.window.last())
            .map(Some)
            .collect()
    };
    for period in &periods {
        for d in (2 + ma)..=(1 + ma + depth).min(window_len - 1) {
            cols.push(ZCol::DiffLagEmp {
                distance: d,
                period: *period,
            });
        }
        for d in (1 + ma)..=(ma + depth).min(window_len - 1) {
            cols.push(ZCol::DiffLagPay {
                distance: d,
                period: *period,
            });
        }
    }
    if spec.system {
        let level_periods: Vec<Option<i32>> = if spec.collapse {
            vec![None]
        } else {
            (design.window.first() + 1..=design.window.last())
                .map(Some)
                .collect()
        };
        for period in &level_periods {
            cols.push(ZCol::LevelDiffEmp {
                lag: 1 + ma,
                period: *period,
            });
            cols.push(ZCol::LevelDiffPay {
                lag: 1 + ma,
                period: *period,
            });
        }
    }
    for c in x_cols {
        if c.is_exogenous() {
            cols.push(ZCol::Exog(c.clone()));
        }
    }
    cols
}

/// Fit by one-step GMM with the given specification.
pub fn gmm_fit(design: &PanelDesign, spec: &GmmSpec) -> Result<GmmEstimation> {
    if spec.max_lag_depth == 0 {
        return Err(Error::invalid("max_lag_depth must be at least 1"));
    }
    let reference_year = spec.reference_year.unwrap_or(design.min_first() + 1);
    if !design.window.contains(reference_year) {
        return Err(Error::invalid(format!(
            "reference year {reference_year} lies outside the window {}",
            design.window
        )));
    }
    let mut x_cols = Vec::new();
    if spec.system {
        x_cols.push(XCol::Const);
    }
    x_cols.push(XCol::LagEmployment);
    x_cols.push(XCol::Payroll);
    x_cols.extend(dummy_columns(design, reference_year));
    let z_cols = candidate_z_cols(design, spec, &x_cols);

    // Pass 1: column activity, to drop dummies and instruments that never
    // take a nonzero value.
    let mut x_active = vec![false; x_cols.len()];
    let mut z_active = vec![false; z_cols.len()];
    let mut total_eqs = 0usize;
    let mut total_diff_eqs = 0usize;
    let mut xbuf = vec![0.0; x_cols.len()];
    for e in &design.entities {
        let eqs = equations_for(e, spec);
        total_eqs += eqs.len();
        total_diff_eqs += eqs.iter().filter(|q| q.is_diff).count();
        for eq in &eqs {
            x_row(&x_cols, e, eq, &mut xbuf);
            for (j, v) in xbuf.iter().enumerate() {
                if *v != 0.0 {
                    x_active[j] = true;
                }
            }
            for (j, col) in z_cols.iter().enumerate() {
                if !z_active[j] && z_value(col, e, eq) != 0.0 {
                    z_active[j] = true;
                }
            }
        }
    }
    if total_diff_eqs == 0 {
        return Err(Error::data(
            "no entity supports a difference equation (need 3 consecutive years)",
        ));
    }
    let x_cols: Vec<XCol> = x_cols
        .into_iter()
        .zip(&x_active)
        .filter(|(_, a)| **a)
        .map(|(c, _)| c)
        .collect();
    let z_cols: Vec<ZCol> = z_cols
        .into_iter()
        .zip(&z_active)
        .filter(|(_, a)| **a)
        .map(|(c, _)| c)
        .collect();
    let p = x_cols.len();
    let k = z_cols.len();
    if k < p {
        return Err(Error::numerical(format!(
            "underidentified: {k} instruments for {p} parameters; raise max_lag_depth"
        )));
    }
    if k > total_eqs {
        return Err(Error::numerical(format!(
            "instrument count {k} exceeds the equation count {total_eqs}; use a smaller max_lag_depth"
        )));
    }
    let x_names: Vec<String> = x_cols.iter().map(XCol::name).collect();

    // Pass 2: accumulate the moment blocks.
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut sxz = DMatrix::<f64>::zeros(p, k);
    let mut szy = DVector::<f64>::zeros(k);
    type BlockVisitor<'a> =
        dyn FnMut(&EntitySeries, &[Equation], &DMatrix<f64>, &DMatrix<f64>, &DVector<f64>) + 'a;
    let per_entity = |f: &mut BlockVisitor| {
        for e in &design.entities {
            let eqs = equations_for(e, spec);
            let rows = eqs.len();
            let mut x = DMatrix::<f64>::zeros(rows, p);
            let mut z = DMatrix::<f64>::zeros(rows, k);
            let mut y = DVector::<f64>::zeros(rows);
            for (i, eq) in eqs.iter().enumerate() {
                for (j, col) in x_cols.iter().enumerate() {
                    x[(i, j)] = if eq.is_diff {
                        col.diff_value(e, eq.t)
                    } else {
                        col.level_value(e, eq.t)
                    };
                }
                for (j, col) in z_cols.iter().enumerate() {
                    z[(i, j)] = z_value(col, e, eq);
                }
                y[i] = if eq.is_diff {
                    e.emp(eq.t) - e.emp(eq.t - 1)
                } else {
                    e.emp(eq.t)
                };
            }
            f(e, &eqs, &x, &z, &y);
        }
    };
    per_entity(&mut |_e, eqs, x, z, y| {
        let h = h_matrix(eqs);
        a += z.transpose() * &h * z;
        sxz += x.transpose() * z;
        szy += z.transpose() * y;
    });

    let advise = |what: &str| {
        Error::numerical(format!(
            "{what} is singular; the instrument set is too rich for the data, use a smaller max_lag_depth"
        ))
    };
    let w1 = linalg::inv_spd(&a).ok_or_else(|| advise("one-step weight matrix"))?;
    let g = &sxz * &w1; // p x k
    let m = &g * sxz.transpose(); // p x p
    let minv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularDesign(x_names.clone()))?;
    let beta = &minv * (&g * &szy);

    // Pass 3: residual moments for the robust variance, the two-step Sargan
    // weighting, and the m2 pieces.
    let mut s = DMatrix::<f64>::zeros(k, k);
    let mut n_obs = 0usize;
    let mut m2_b = 0.0f64;
    let mut m2_term1 = 0.0f64;
    let mut m2_wx = DVector::<f64>::zeros(p);
    let mut m2_qz = DVector::<f64>::zeros(k);
    let mut m2_entities = 0usize;
    per_entity(&mut |_e, eqs, x, z, y| {
        let u = y - x * &beta;
        let zu = z.transpose() * &u;
        s += &zu * zu.transpose();
        n_obs += eqs.len();

        // Lag-2 alignment of difference-equation residuals.
        let mut w = DVector::<f64>::zeros(eqs.len());
        let mut any = false;
        for (i, eq) in eqs.iter().enumerate() {
            if !eq.is_diff {
                continue;
            }
            if let Some(j) = eqs.iter().position(|q| q.is_diff && q.t == eq.t - 2) {
                w[i] = u[j];
                any = true;
            }
        }
        if any {
            let wu = w.dot(&u);
            m2_b += wu;
            m2_term1 += wu * wu;
            m2_wx += x.transpose() * &w;
            m2_qz += &zu * wu;
            m2_entities += 1;
        }
    });

    let w2 = linalg::inv_spd(&s).ok_or_else(|| advise("two-step weight matrix"))?;

    // Sargan statistic at the two-step estimator.
    let g2 = &sxz * &w2;
    let m2mat = &g2 * sxz.transpose();
    let m2inv = m2mat
        .try_inverse()
        .ok_or_else(|| advise("two-step projection"))?;
    let beta2 = &m2inv * (&g2 * &szy);
    let gbar = &szy - sxz.transpose() * &beta2;
    let df = k - p;
    let sargan = if df == 0 {
        SarganTest {
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
            exactly_identified: true,
        }
    } else {
        let statistic = (w2.clone() * &gbar).dot(&gbar).max(0.0);
        SarganTest {
            statistic,
            df,
            p_value: stats::chi_square_sf(statistic, df),
            exactly_identified: false,
        }
    };

    // Robust one-step variance: Minv G S G' Minv.
    let vce = &minv * (&g * &s * g.transpose()) * &minv;

    // Arellano-Bond m2 on the difference residuals, with the full correction.
    let m2 = if m2_entities >= 2 {
        let variance =
            m2_term1 - 2.0 * m2_wx.dot(&(&minv * (&g * &m2_qz))) + m2_wx.dot(&(&vce * &m2_wx));
        if variance > 0.0 {
            Some(m2_b / variance.sqrt())
        } else {
            None
        }
    } else {
        None
    };

    let terms: Vec<Term> = x_names
        .iter()
        .enumerate()
        .map(|(j, name)| Term {
            name: name.clone(),
            estimate: Estimate {
                value: beta[j],
                std_error: vce[(j, j)].max(0.0).sqrt(),
            },
        })
        .collect();
    let find = |name: &str| -> Result<Estimate> {
        terms
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.estimate)
            .ok_or_else(|| Error::numerical(format!("{name} column missing from GMM fit")))
    };
    let report = FitReport {
        model: spec.model_tag(),
        theta: find("lag_employment")?,
        eta: find("ln_payroll")?,
        terms,
        n_obs,
        n_entities: design.entities.len(),
        dropped_entities: design.dropped_single_year_entities,
        r_squared: None,
        sargan: Some(sargan),
        m2,
        instrument_count: Some(k),
    };
    Ok(GmmEstimation { report })
}

/// First-difference GMM: difference equations instrumented by lagged levels.
pub fn diff_gmm_fit(design: &PanelDesign, max_lag_depth: usize) -> Result<GmmEstimation> {
    gmm_fit(design, &GmmSpec::diff(max_lag_depth))
}

/// System GMM: difference equations plus level equations instrumented by
/// lagged first differences.
pub fn system_gmm_fit(design: &PanelDesign, max_lag_depth: usize) -> Result<GmmEstimation> {
    gmm_fit(design, &GmmSpec::system(max_lag_depth))
}

/// System GMM with every instrument lag deepened by one, valid under MA(1)
/// disturbances.
pub fn system_gmm_ma_fit(design: &PanelDesign, max_lag_depth: usize) -> Result<GmmEstimation> {
    gmm_fit(design, &GmmSpec::system_ma(max_lag_depth))
}

/// Overidentification test of the fitted model.
pub fn sargan_test(est: &GmmEstimation) -> SarganTest {
    est.report
        .sargan
        .expect("gmm fits always carry a sargan record")
}

/// Second-order serial-correlation z-score of the difference residuals.
pub fn m2_test(est: &GmmEstimation) -> Result<f64> {
    est.report.m2.ok_or_else(|| {
        Error::data(
            "m2 needs at least 2 entities with 5 consecutive years (two difference \
             residuals two years apart)",
        )
    })
}

/// Long-run elasticity of employment with respect to payroll.
pub fn long_run_elasticity(theta_hat: f64, eta_hat: f64) -> Result<f64> {
    if (1.0 - theta_hat).abs() < 1e-9 {
        return Err(Error::numerical(format!(
            "long-run elasticity undefined at theta = {theta_hat}"
        )));
    }
    Ok(eta_hat / (1.0 - theta_hat))
}

// ---------------------------------------------------------------------------
// Strategy run
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct BiasRow {
    pub model: ModelTag,
    pub theta_bias: f64,
    pub eta_bias: f64,
    /// theta bias + eta bias; near zero when the biases offset.
    pub bias_sum: f64,
    pub eta_star_confidential: Option<f64>,
    pub eta_star_synthetic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestRow {
    pub model: ModelTag,
    pub m2_confidential: Option<f64>,
    pub m2_synthetic: Option<f64>,
    pub sargan_confidential: Option<SarganTest>,
    pub sargan_synthetic: Option<SarganTest>,
}

#[derive(Debug, Clone)]
pub struct StrategyReport {
    pub confidential: Vec<FitReport>,
    pub synthetic: Vec<FitReport>,
    pub bias: Vec<BiasRow>,
    pub tests: Vec<TestRow>,
}

/// Run the full modelling strategy (OLS, difference GMM, system GMM, system
/// GMM MA) on both registers and tabulate coefficient biases and test
/// statistics.
pub fn strategy_run(
    conf: &Register,
    syn: &Register,
    max_lag_depth: usize,
) -> Result<StrategyReport> {
    let conf_design = build_design(conf)?;
    let syn_design = build_design(syn)?;
    let fit_all = |design: &PanelDesign| -> Result<Vec<FitReport>> {
        Ok(vec![
            ols_fit(design)?,
            diff_gmm_fit(design, max_lag_depth)?.into_report(),
            system_gmm_fit(design, max_lag_depth)?.into_report(),
            system_gmm_ma_fit(design, max_lag_depth)?.into_report(),
        ])
    };
    let confidential = fit_all(&conf_design)?;
    let synthetic = fit_all(&syn_design)?;
    let mut bias = Vec::new();
    let mut tests = Vec::new();
    for (c, s) in confidential.iter().zip(&synthetic) {
        bias.push(BiasRow {
            model: c.model,
            theta_bias: s.theta.value - c.theta.value,
            eta_bias: s.eta.value - c.eta.value,
            bias_sum: (s.theta.value - c.theta.value) + (s.eta.value - c.eta.value),
            eta_star_confidential: long_run_elasticity(c.theta.value, c.eta.value).ok(),
            eta_star_synthetic: long_run_elasticity(s.theta.value, s.eta.value).ok(),
        });
        tests.push(TestRow {
            model: c.model,
            m2_confidential: c.m2,
            m2_synthetic: s.m2,
            sargan_confidential: c.sargan,
            sargan_synthetic: s.sargan,
        });
    }
    Ok(StrategyReport {
        confidential,
        synthetic,
        bias,
        tests,
    })
}
