//! Partially synthetic register generation.
//!
//! Synthesis runs independently per industry. Categorical variables come
//! first: each entity's (first year, last year) pair is drawn from
//! Dirichlet-multinomial posteriors, last year conditional on first year.
//! Continuous paths follow: employment and payroll values are mapped to
//! normal scores through an empirical quantile transform, modelled with
//! sequential linear regressions on the transformed scale, then drawn with
//! fresh normal residuals and mapped back. Entity counts per industry are
//! preserved exactly and every synthetic value is positive.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::linalg;
use crate::register::{EntityHistory, Register, YearRange};
use crate::seed::derive_rng;
use crate::stats;

/// Minimum entity-years a year stratum must hold before it stops absorbing
/// the next year; sparse strata synthesize poorly.
const MIN_STRATUM_ROWS: usize = 10;
/// Synthetic values are clamped to this multiple of the smallest observed
/// value, which keeps inverse-transform extrapolation positive.
const POSITIVE_FLOOR_SHARE: f64 = 0.01;

// ---------------------------------------------------------------------------
// Lifespan model
// ---------------------------------------------------------------------------

/// Dirichlet posteriors over (first year, last year | first year).
#[derive(Debug, Clone)]
pub struct LifespanModel {
    window: YearRange,
    /// prior + count of entities first observed in each window year.
    first_year_posterior: Vec<f64>,
    /// Per first-year stratum, prior + counts over admissible last years
    /// (last >= first). Strata with no entities carry the prior alone.
    last_year_conditional: Vec<Vec<f64>>,
}

/// Posterior parameters: `prior_alpha` plus observed counts, per year.
pub fn fit_lifespan_model(slice: &Register, prior_alpha: f64) -> Result<LifespanModel> {
    if slice.entities.is_empty() {
        return Err(Error::data(
            "lifespan model needs a non-empty industry slice",
        ));
    }
    if prior_alpha <= 0.0 || prior_alpha.is_nan() {
        return Err(Error::invalid("prior_alpha must be positive"));
    }
    let window = slice.observation_window;
    let n_years = window.len();
    let mut first_year_posterior = vec![prior_alpha; n_years];
    let mut last_year_conditional: Vec<Vec<f64>> = (0..n_years)
        .map(|f| vec![prior_alpha; n_years - f])
        .collect();
    for e in &slice.entities {
        let f = (e.birth_year() - window.first()) as usize;
        let l = (e.lifespan.last() - window.first()) as usize;
        first_year_posterior[f] += 1.0;
        last_year_conditional[f][l - f] += 1.0;
    }
    Ok(LifespanModel {
        window,
        first_year_posterior,
        last_year_conditional,
    })
}

impl LifespanModel {
    pub fn window(&self) -> YearRange {
        self.window
    }

    pub fn first_year_posterior(&self) -> &[f64] {
        &self.first_year_posterior
    }

    pub fn last_year_conditional(&self, first_year: i32) -> &[f64] {
        &self.last_year_conditional[(first_year - self.window.first()) as usize]
    }
}

fn dirichlet_draw(alpha: &[f64], rng: &mut ChaCha20Rng) -> Vec<f64> {
    if alpha.len() == 1 {
        return vec![1.0];
    }
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("alpha > 0").sample(rng))
        .collect();
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 {
        // All gamma draws underflowed; fall back to the normalized parameters.
        let total: f64 = alpha.iter().sum();
        return alpha.iter().map(|a| a / total).collect();
    }
    for d in &mut draws {
        *d /= sum;
    }
    draws
}

fn sample_category(probs: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draw `n` (first year, last year) pairs.
///
/// Each pair draws a fresh probability vector from the Dirichlet posterior
/// and then the category, first year first, last year from the conditional
/// stratum. Independent parameter draws per entity leave the sampled counts
/// with exactly multinomial dispersion around the posterior-mean frequencies.
pub fn sample_lifespans(model: &LifespanModel, n: usize, rng: &mut ChaCha20Rng) -> Vec<(i32, i32)> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let first_probs = dirichlet_draw(&model.first_year_posterior, rng);
        let f = sample_category(&first_probs, rng);
        let last_probs = dirichlet_draw(&model.last_year_conditional[f], rng);
        let l = f + sample_category(&last_probs, rng);
        out.push((
            model.window.first() + f as i32,
            model.window.first() + l as i32,
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Quantile transform
// ---------------------------------------------------------------------------

/// Empirical quantile map onto normal scores.
///
/// The i-th order statistic of the training sample maps to
/// probit((i - 0.5) / m); between knots the map interpolates linearly and
/// beyond the range it extrapolates along the two extreme knots. Tied sample
/// values collapse to one knot carrying the mean of their scores, so the map
/// stays strictly monotone.
#[derive(Debug, Clone)]
pub struct KdeTransform {
    xs: Vec<f64>,
    zs: Vec<f64>,
}

pub fn build_kde_transform(values: &[f64]) -> Result<KdeTransform> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.len() != values.len() {
        return Err(Error::data("transform training values must be finite"));
    }
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let mut xs: Vec<f64> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j < m && sorted[j] == sorted[i] {
            j += 1;
        }
        let score_sum: f64 = (i..j)
            .map(|k| stats::normal_quantile((k as f64 + 0.5) / m as f64))
            .sum();
        xs.push(sorted[i]);
        zs.push(score_sum / (j - i) as f64);
        i = j;
    }
    if xs.len() < 3 {
        return Err(Error::data(format!(
            "quantile transform needs at least 3 distinct values, got {}",
            xs.len()
        )));
    }
    Ok(KdeTransform { xs, zs })
}

impl KdeTransform {
    pub fn min_value(&self) -> f64 {
        self.xs[0]
    }

    pub fn forward(&self, x: f64) -> f64 {
        interpolate(&self.xs, &self.zs, x)
    }

    pub fn inverse(&self, z: f64) -> f64 {
        interpolate(&self.zs, &self.xs, z)
    }
}

/// Piecewise-linear interpolation through (`from`, `to`) knots with linear
/// extrapolation beyond the ends. `from` is strictly increasing.
fn interpolate(from: &[f64], to: &[f64], x: f64) -> f64 {
    let n = from.len();
    let seg = if x <= from[0] {
        0
    } else if x >= from[n - 1] {
        n - 2
    } else {
        match from.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return to[i],
            Err(i) => i - 1,
        }
    };
    let t = (x - from[seg]) / (from[seg + 1] - from[seg]);
    to[seg] + t * (to[seg + 1] - to[seg])
}

// ---------------------------------------------------------------------------
// Path models
// ---------------------------------------------------------------------------

/// Contiguous run of years treated as one stratum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YearBin {
    pub first: i32,
    pub last: i32,
}

impl YearBin {
    fn contains(&self, year: i32) -> bool {
        year >= self.first && year <= self.last
    }

    fn label(&self) -> String {
        if self.first == self.last {
            format!("{}", self.first)
        } else {
            format!("{}-{}", self.first, self.last)
        }
    }
}

/// Linear model on the transformed scale with year-bin effects and a per-bin
/// residual standard deviation.
#[derive(Debug, Clone)]
pub struct LagModel {
    pub intercept: f64,
    pub lag_coef: f64,
    /// Additional regressor (transformed current employment) in the payroll
    /// model; zero weight in the employment model.
    pub extra_coef: f64,
    /// Effect per year bin, relative to the first bin.
    pub bin_effects: Vec<f64>,
    pub residual_sd: Vec<f64>,
}

/// Marginal draw for first observed years where no lag exists.
#[derive(Debug, Clone)]
pub struct InitialEmploymentModel {
    pub mean: f64,
    pub sd: f64,
}

/// First-year payroll given first-year employment, on the transformed scale.
#[derive(Debug, Clone)]
pub struct InitialPayrollModel {
    pub intercept: f64,
    pub employment_coef: f64,
    pub residual_sd: f64,
}

#[derive(Debug, Clone)]
pub struct PathModel {
    pub year_bins: Vec<YearBin>,
    /// None when the industry holds no multi-year lifespans.
    pub employment: Option<LagModel>,
    pub employment_initial: InitialEmploymentModel,
    pub payroll: Option<LagModel>,
    pub payroll_initial: InitialPayrollModel,
}

impl PathModel {
    /// Stratum for a synthesis year: its own bin, or the nearest following
    /// bin for years the training data never reached.
    fn bin_index(&self, year: i32) -> usize {
        self.year_bins
            .iter()
            .position(|b| year <= b.last)
            .unwrap_or(self.year_bins.len() - 1)
    }
}

/// Transforms fitted on an industry slice, one per continuous variable.
#[derive(Debug, Clone)]
pub struct Transforms {
    pub employment: KdeTransform,
    pub payroll: KdeTransform,
}

pub fn fit_transforms(slice: &Register) -> Result<Transforms> {
    let emp: Vec<f64> = slice
        .entities
        .iter()
        .flat_map(|e| e.employment.iter().copied())
        .collect();
    let pay: Vec<f64> = slice
        .entities
        .iter()
        .flat_map(|e| e.payroll.iter().copied())
        .collect();
    Ok(Transforms {
        employment: build_kde_transform(&emp)?,
        payroll: build_kde_transform(&pay)?,
    })
}

/// Rows entering the sequential models: one per entity-year with a lag.
struct TransitionRow {
    year: i32,
    z_emp: f64,
    z_emp_lag: f64,
    z_pay: f64,
    z_pay_lag: f64,
}

/// Merge estimation years into strata of at least [`MIN_STRATUM_ROWS`] rows.
fn build_year_bins(years: &[i32], counts: &[usize]) -> Vec<YearBin> {
    let mut bins = Vec::new();
    let mut start = 0usize;
    let mut acc = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        acc += c;
        if acc >= MIN_STRATUM_ROWS {
            bins.push(YearBin {
                first: years[start],
                last: years[i],
            });
            start = i + 1;
            acc = 0;
        }
    }
    if start < years.len() {
        match bins.last_mut() {
            Some(last) => last.last = years[years.len() - 1],
            None => bins.push(YearBin {
                first: years[0],
                last: years[years.len() - 1],
            }),
        }
    }
    bins
}

pub fn fit_path_models(slice: &Register, transforms: &Transforms) -> Result<PathModel> {
    let mut rows: Vec<TransitionRow> = Vec::new();
    let mut first_emp_z: Vec<f64> = Vec::new();
    let mut first_pay_z: Vec<f64> = Vec::new();
    for e in &slice.entities {
        let z_emp: Vec<f64> = e
            .employment
            .iter()
            .map(|&v| transforms.employment.forward(v))
            .collect();
        let z_pay: Vec<f64> = e
            .payroll
            .iter()
            .map(|&v| transforms.payroll.forward(v))
            .collect();
        first_emp_z.push(z_emp[0]);
        first_pay_z.push(z_pay[0]);
        for i in 1..z_emp.len() {
            rows.push(TransitionRow {
                year: e.lifespan.first() + i as i32,
                z_emp: z_emp[i],
                z_emp_lag: z_emp[i - 1],
                z_pay: z_pay[i],
                z_pay_lag: z_pay[i - 1],
            });
        }
    }

    let employment_initial = InitialEmploymentModel {
        mean: stats::mean(&first_emp_z),
        sd: stats::sample_sd(&first_emp_z),
    };
    let payroll_initial = fit_initial_payroll(&first_emp_z, &first_pay_z)?;

    if rows.is_empty() {
        // Single-year lifespans only: initial models carry the synthesis.
        let window = slice.observation_window;
        return Ok(PathModel {
            year_bins: vec![YearBin {
                first: window.first(),
                last: window.last(),
            }],
            employment: None,
            employment_initial,
            payroll: None,
            payroll_initial,
        });
    }

    rows.sort_by_key(|r| r.year);
    let mut years: Vec<i32> = rows.iter().map(|r| r.year).collect();
    years.dedup();
    let counts: Vec<usize> = years
        .iter()
        .map(|y| rows.iter().filter(|r| r.year == *y).count())
        .collect();
    let year_bins = build_year_bins(&years, &counts);

    let employment = Some(fit_lag_model(&rows, &year_bins, false)?);
    let payroll = Some(fit_lag_model(&rows, &year_bins, true)?);
    Ok(PathModel {
        year_bins,
        employment,
        employment_initial,
        payroll,
        payroll_initial,
    })
}

fn fit_initial_payroll(z_emp: &[f64], z_pay: &[f64]) -> Result<InitialPayrollModel> {
    let n = z_emp.len();
    if n < 2 {
        // One entity: payroll pins to its observed score.
        return Ok(InitialPayrollModel {
            intercept: z_pay.first().copied().unwrap_or(0.0),
            employment_coef: 0.0,
            residual_sd: 0.0,
        });
    }
    let x = nalgebra::DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { z_emp[i] });
    let y = nalgebra::DVector::from_row_slice(z_pay);
    let names = vec!["intercept".to_string(), "z_employment".to_string()];
    match linalg::lstsq(&x, &y, &names) {
        Ok(fit) => {
            let df = (n as f64 - 2.0).max(1.0);
            Ok(InitialPayrollModel {
                intercept: fit.coefficients[0],
                employment_coef: fit.coefficients[1],
                residual_sd: (fit.rss / df).sqrt(),
            })
        }
        // Degenerate first-year employment scores (all equal): marginal draw.
        Err(Error::SingularDesign(_)) => Ok(InitialPayrollModel {
            intercept: stats::mean(z_pay),
            employment_coef: 0.0,
            residual_sd: stats::sample_sd(z_pay),
        }),
        Err(e) => Err(e),
    }
}

/// OLS of the transformed variable on its lag (plus transformed current
/// employment for payroll) and year-bin dummies; residual sd per bin.
fn fit_lag_model(rows: &[TransitionRow], bins: &[YearBin], payroll: bool) -> Result<LagModel> {
    let n = rows.len();
    let extra = usize::from(payroll);
    let p = 2 + extra + bins.len() - 1;
    let bin_of = |year: i32| {
        bins.iter()
            .position(|b| b.contains(year))
            .expect("bins cover years")
    };
    let mut names = vec!["intercept".to_string(), "lag".to_string()];
    if payroll {
        names.push("z_employment".to_string());
    }
    for b in &bins[1..] {
        names.push(format!("years {}", b.label()));
    }
    let x = nalgebra::DMatrix::from_fn(n, p, |i, j| {
        let r = &rows[i];
        match j {
            0 => 1.0,
            1 => {
                if payroll {
                    r.z_pay_lag
                } else {
                    r.z_emp_lag
                }
            }
            2 if payroll => r.z_emp,
            _ => {
                let bin = j - 2 - extra + 1;
                if bin_of(r.year) == bin {
                    1.0
                } else {
                    0.0
                }
            }
        }
    });
    let y = nalgebra::DVector::from_fn(n, |i, _| {
        if payroll {
            rows[i].z_pay
        } else {
            rows[i].z_emp
        }
    });
    let fit = linalg::lstsq(&x, &y, &names).map_err(|e| match e {
        Error::SingularDesign(cols) => Error::SingularDesign(
            cols.into_iter()
                .map(|c| format!("{} model stratum column {c}", kind(payroll)))
                .collect(),
        ),
        other => other,
    })?;

    let mut residual_sd = Vec::with_capacity(bins.len());
    for (b, bin) in bins.iter().enumerate() {
        let mut rss = 0.0;
        let mut count = 0usize;
        for (i, r) in rows.iter().enumerate() {
            if bin_of(r.year) == b {
                rss += fit.residuals[i] * fit.residuals[i];
                count += 1;
            }
        }
        let df = count.saturating_sub(2).max(1) as f64;
        residual_sd.push(if count == 0 { 0.0 } else { (rss / df).sqrt() });
        debug_assert!(
            count > 0 || bin.first > bin.last,
            "bins built from observed years"
        );
    }

    Ok(LagModel {
        intercept: fit.coefficients[0],
        lag_coef: fit.coefficients[1],
        extra_coef: if payroll { fit.coefficients[2] } else { 0.0 },
        bin_effects: (0..bins.len() - 1)
            .map(|b| fit.coefficients[2 + extra + b])
            .collect(),
        residual_sd,
    })
}

fn kind(payroll: bool) -> &'static str {
    if payroll {
        "payroll"
    } else {
        "employment"
    }
}

impl LagModel {
    fn bin_effect(&self, bin: usize) -> f64 {
        if bin == 0 {
            0.0
        } else {
            self.bin_effects[bin - 1]
        }
    }
}

// ---------------------------------------------------------------------------
// Industry synthesis
// ---------------------------------------------------------------------------

/// Outcome of synthesizing one industry.
#[derive(Debug, Clone, PartialEq)]
pub struct IndustryReport {
    pub industry: String,
    pub n_entities: usize,
    pub confidential_rows: usize,
    pub synthetic_rows: usize,
    /// Synthetic observations dated the final window year; flagged because
    /// final-year synthesis inherits the thinnest stratum.
    pub final_year_rows: usize,
    pub status: SynthesisStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthesisStatus {
    Synthesized,
    Failed { reason: String },
}

impl SynthesisStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SynthesisStatus::Synthesized => "synthesized",
            SynthesisStatus::Failed { .. } => "failed",
        }
    }
}

/// Synthesize one industry slice. Entity count is preserved exactly; all
/// values are positive; fixed (slice, seed) reproduce the output bit for bit.
pub fn synthesize_industry(
    slice: &Register,
    seed: u64,
) -> Result<(Vec<EntityHistory>, IndustryReport)> {
    let industry = slice
        .entities
        .first()
        .map(|e| e.industry.clone())
        .ok_or_else(|| Error::data("cannot synthesize an empty industry slice"))?;
    let n = slice.entities.len();
    if n < 3 {
        return Err(Error::data(format!(
            "industry {industry}: needs at least 3 entities to fit synthesis models, got {n}"
        )));
    }
    if let Some(stray) = slice.entities.iter().find(|e| e.industry != industry) {
        return Err(Error::data(format!(
            "industry slice mixes {industry} with {} (entity {})",
            stray.industry, stray.entity_id
        )));
    }
    let mut rng = derive_rng(seed, "synth-industry", &industry);

    let lifespans_model = fit_lifespan_model(slice, 1.0)?;
    let transforms =
        fit_transforms(slice).map_err(|e| Error::data(format!("industry {industry}: {e}")))?;
    let paths = fit_path_models(slice, &transforms)
        .map_err(|e| Error::data(format!("industry {industry}: {e}")))?;

    let emp_floor = transforms.employment.min_value() * POSITIVE_FLOOR_SHARE;
    let pay_floor = transforms.payroll.min_value() * POSITIVE_FLOOR_SHARE;
    let window = slice.observation_window;

    let lifespans = sample_lifespans(&lifespans_model, n, &mut rng);
    let mut entities = Vec::with_capacity(n);
    let mut synthetic_rows = 0usize;
    let mut final_year_rows = 0usize;
    for (i, (first, last)) in lifespans.into_iter().enumerate() {
        let len = (last - first) as usize + 1;
        let mut z_emp = Vec::with_capacity(len);
        let mut z_pay = Vec::with_capacity(len);
        let init = &paths.employment_initial;
        z_emp.push(init.mean + init.sd * std_normal(&mut rng));
        let pinit = &paths.payroll_initial;
        z_pay.push(
            pinit.intercept
                + pinit.employment_coef * z_emp[0]
                + pinit.residual_sd * std_normal(&mut rng),
        );
        for k in 1..len {
            let year = first + k as i32;
            let bin = paths.bin_index(year);
            match (&paths.employment, &paths.payroll) {
                (Some(emp_model), Some(pay_model)) => {
                    let ze = emp_model.intercept
                        + emp_model.lag_coef * z_emp[k - 1]
                        + emp_model.bin_effect(bin)
                        + emp_model.residual_sd[bin] * std_normal(&mut rng);
                    z_emp.push(ze);
                    let zp = pay_model.intercept
                        + pay_model.lag_coef * z_pay[k - 1]
                        + pay_model.extra_coef * ze
                        + pay_model.bin_effect(bin)
                        + pay_model.residual_sd[bin] * std_normal(&mut rng);
                    z_pay.push(zp);
                }
                // The training slice held only single-year lifespans but the
                // posterior still put mass on longer spans: fall back to the
                // initial-year models for every year.
                _ => {
                    let ze = init.mean + init.sd * std_normal(&mut rng);
                    z_emp.push(ze);
                    z_pay.push(
                        pinit.intercept
                            + pinit.employment_coef * ze
                            + pinit.residual_sd * std_normal(&mut rng),
                    );
                }
            }
        }
        let employment: Vec<f64> = z_emp
            .iter()
            .map(|&z| transforms.employment.inverse(z).max(emp_floor))
            .collect();
        let payroll: Vec<f64> = z_pay
            .iter()
            .map(|&z| transforms.payroll.inverse(z).max(pay_floor))
            .collect();
        synthetic_rows += len;
        if last == window.last() {
            final_year_rows += 1;
        }
        entities.push(EntityHistory::new(
            format!("S{industry}-{i:05}"),
            industry.clone(),
            YearRange::new(first, last)?,
            employment,
            payroll,
        ));
    }

    let report = IndustryReport {
        industry,
        n_entities: n,
        confidential_rows: slice.n_observations(),
        synthetic_rows,
        final_year_rows,
        status: SynthesisStatus::Synthesized,
    };
    Ok((entities, report))
}

/// Full synthesis report across industries, including the observation share
/// that could not be synthesized.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReport {
    pub industries: Vec<IndustryReport>,
}

impl SynthesisReport {
    pub fn synthesized_observations(&self) -> usize {
        self.industries
            .iter()
            .filter(|r| r.status == SynthesisStatus::Synthesized)
            .map(|r| r.confidential_rows)
            .sum()
    }

    pub fn not_synthesized_observations(&self) -> usize {
        self.industries
            .iter()
            .filter(|r| matches!(r.status, SynthesisStatus::Failed { .. }))
            .map(|r| r.confidential_rows)
            .sum()
    }

    pub fn total_observations(&self) -> usize {
        self.industries.iter().map(|r| r.confidential_rows).sum()
    }
}

/// Synthesize a whole register. Industries run independently on sub-seeds
/// derived from `seed`; industries whose model fitting fails are omitted
/// from the output and recorded in the report.
pub fn synthesize_register(r: &Register, seed: u64) -> (Register, SynthesisReport) {
    let mut entities = Vec::new();
    let mut industries = Vec::new();
    for (code, slice_entities) in r.by_industry() {
        let slice = Register {
            entities: slice_entities.into_iter().cloned().collect(),
            observation_window: r.observation_window,
            industry_codes: std::iter::once(code.to_string()).collect(),
        };
        match synthesize_industry(&slice, seed) {
            Ok((mut synthesized, report)) => {
                entities.append(&mut synthesized);
                industries.push(report);
            }
            Err(e) => industries.push(IndustryReport {
                industry: code.to_string(),
                n_entities: slice.entities.len(),
                confidential_rows: slice.n_observations(),
                synthetic_rows: 0,
                final_year_rows: 0,
                status: SynthesisStatus::Failed {
                    reason: e.to_string(),
                },
            }),
        }
    }
    let register = Register::from_entities(entities, r.observation_window);
    (register, SynthesisReport { industries })
}

fn std_normal(rng: &mut ChaCha20Rng) -> f64 {
    rand_distr::Normal::new(0.0, 1.0)
        .expect("unit normal")
        .sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_register, SimConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn lifespan_posterior_adds_counts_to_prior() {
        let window = YearRange::new(1991, 1992).unwrap();
        let mk = |id: &str, first: i32| {
            EntityHistory::new(
                id,
                "1100",
                YearRange::new(first, 1992).unwrap(),
                vec![1.0; (1992 - first) as usize + 1],
                vec![1.0; (1992 - first) as usize + 1],
            )
        };
        let r = Register::from_entities(
            vec![mk("a", 1991), mk("b", 1991), mk("c", 1992), mk("d", 1992)],
            window,
        );
        let model = fit_lifespan_model(&r, 1.0).unwrap();
        assert_eq!(model.first_year_posterior(), &[3.0, 3.0]);
    }

    #[test]
    fn degenerate_posterior_concentrates() {
        let window = YearRange::new(1991, 1993).unwrap();
        let entities: Vec<EntityHistory> = (0..200)
            .map(|i| {
                EntityHistory::new(
                    format!("e{i}"),
                    "1100",
                    YearRange::new(1992, 1992).unwrap(),
                    vec![1.0],
                    vec![1.0],
                )
            })
            .collect();
        let r = Register::from_entities(entities, window);
        let model = fit_lifespan_model(&r, 1e-6).unwrap();
        let mut rng = derive_rng(5, "test", "degenerate");
        let pairs = sample_lifespans(&model, 50, &mut rng);
        assert!(pairs.iter().all(|&(f, l)| f == 1992 && l == 1992));
    }

    #[test]
    fn empty_stratum_keeps_prior_only() {
        let window = YearRange::new(1991, 1993).unwrap();
        let e = EntityHistory::new(
            "a",
            "1100",
            YearRange::new(1991, 1991).unwrap(),
            vec![1.0],
            vec![1.0],
        );
        let model = fit_lifespan_model(&Register::from_entities(vec![e], window), 1.0).unwrap();
        // No entity starts in 1992: the conditional holds the flat prior.
        assert_eq!(model.last_year_conditional(1992), &[1.0, 1.0]);
    }

    #[test]
    fn lifespan_sampling_is_deterministic() {
        let window = YearRange::new(1991, 1995).unwrap();
        let entities: Vec<EntityHistory> = (0..20)
            .map(|i| {
                let first = 1991 + (i % 5);
                EntityHistory::new(
                    format!("e{i}"),
                    "1100",
                    YearRange::new(first, 1995).unwrap(),
                    vec![2.0; (1995 - first) as usize + 1],
                    vec![5.0; (1995 - first) as usize + 1],
                )
            })
            .collect();
        let model = fit_lifespan_model(&Register::from_entities(entities, window), 1.0).unwrap();
        let a = sample_lifespans(&model, 40, &mut derive_rng(9, "t", "x"));
        let b = sample_lifespans(&model, 40, &mut derive_rng(9, "t", "x"));
        assert_eq!(a, b);
        assert!(a.iter().all(|&(f, l)| l >= f));
    }

    #[test]
    fn normal_scores_for_three_values() {
        let t = build_kde_transform(&[3.0, 1.0, 2.0]).unwrap();
        // probit of (1/6, 1/2, 5/6)
        assert_abs_diff_eq!(t.forward(1.0), -0.9674215661017044, epsilon = 1e-4);
        assert_abs_diff_eq!(t.forward(2.0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.forward(3.0), 0.9674215661017044, epsilon = 1e-4);
    }

    #[test]
    fn transform_round_trips_sample_points() {
        let values = [0.5, 1.25, 2.0, 7.5, 30.0, 31.5];
        let t = build_kde_transform(&values).unwrap();
        for v in values {
            assert_abs_diff_eq!(t.inverse(t.forward(v)), v, epsilon = 1e-10);
        }
    }

    #[test]
    fn transform_is_monotone() {
        let values = [1.0, 2.0, 2.0, 3.0, 5.0, 8.0, 8.0, 13.0];
        let t = build_kde_transform(&values).unwrap();
        let probes: Vec<f64> = (0..100).map(|i| 0.5 + i as f64 * 0.15).collect();
        for pair in probes.windows(2) {
            assert!(t.forward(pair[1]) > t.forward(pair[0]));
        }
    }

    #[test]
    fn too_few_distinct_values_rejected() {
        assert!(build_kde_transform(&[1.0, 1.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn nonpositive_prior_rejected() {
        let window = YearRange::new(1991, 1992).unwrap();
        let e = EntityHistory::new("a", "1100", window, vec![1.0, 2.0], vec![3.0, 4.0]);
        let r = Register::from_entities(vec![e], window);
        assert!(fit_lifespan_model(&r, 0.0).is_err());
        assert!(fit_lifespan_model(&r, -1.0).is_err());
    }

    #[test]
    fn noiseless_transitions_have_zero_residual_sd() {
        // Constant-per-entity histories make every transition z_t = z_{t-1}
        // exactly: the fitted line is the identity and residuals vanish.
        let window = YearRange::new(2000, 2003).unwrap();
        let entities: Vec<EntityHistory> = (0..12)
            .map(|i| {
                // Payroll levels ordered differently from employment levels
                // so the two transformed columns are not collinear.
                let level = 5.0 + i as f64;
                let pay_level = 30.0 * (20.0 - ((i * 5) % 12) as f64);
                EntityHistory::new(
                    format!("e{i}"),
                    "1100",
                    window,
                    vec![level; 4],
                    vec![pay_level; 4],
                )
            })
            .collect();
        let slice = Register::from_entities(entities, window);
        let transforms = fit_transforms(&slice).unwrap();
        let paths = fit_path_models(&slice, &transforms).unwrap();
        let emp = paths.employment.unwrap();
        assert!(
            (emp.lag_coef - 1.0).abs() < 1e-8,
            "lag coefficient {}",
            emp.lag_coef
        );
        assert!(
            emp.residual_sd.iter().all(|s| *s < 1e-8),
            "{:?}",
            emp.residual_sd
        );
        let pay = paths.payroll.unwrap();
        assert!(
            pay.residual_sd.iter().all(|s| *s < 1e-8),
            "{:?}",
            pay.residual_sd
        );
    }

    #[test]
    fn lag_coefficient_tracks_simulator_persistence() {
        // On a register whose log employment is AR(1), the transformed-scale
        // lag coefficient approximates the simulator's persistence.
        let rho = 0.7;
        let conf = simulate_register(&SimConfig {
            n_industries: 1,
            entities_per_industry: 2500,
            window: YearRange::new(1995, 2006).unwrap(),
            ar1_rho: rho,
            entry_rate: 0.4,
            exit_hazard: 0.05,
            ..SimConfig::default()
        })
        .unwrap();
        let transforms = fit_transforms(&conf).unwrap();
        let paths = fit_path_models(&conf, &transforms).unwrap();
        let emp = paths.employment.unwrap();
        assert!(
            (emp.lag_coef - rho).abs() < 0.1,
            "transformed-scale lag coefficient {} vs persistence {rho}",
            emp.lag_coef
        );
    }

    #[test]
    fn single_year_lifespans_use_initial_model_only() {
        let window = YearRange::new(2000, 2003).unwrap();
        let entities: Vec<EntityHistory> = (0..24)
            .map(|i| {
                let year = 2000 + (i % 4);
                EntityHistory::new(
                    format!("e{i}"),
                    "1100",
                    YearRange::new(year, year).unwrap(),
                    vec![1.0 + i as f64],
                    vec![10.0 + i as f64],
                )
            })
            .collect();
        let slice = Register::from_entities(entities, window);
        let transforms = fit_transforms(&slice).unwrap();
        let paths = fit_path_models(&slice, &transforms).unwrap();
        assert!(paths.employment.is_none());
        assert!(paths.payroll.is_none());
        let (synthetic, report) = synthesize_industry(&slice, 17).unwrap();
        assert_eq!(synthetic.len(), 24);
        assert_eq!(report.status, SynthesisStatus::Synthesized);
    }

    fn small_sim() -> Register {
        simulate_register(&SimConfig {
            n_industries: 2,
            entities_per_industry: 300,
            window: YearRange::new(1995, 2006).unwrap(),
            ..SimConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn entity_count_preserved_and_positive() {
        let conf = small_sim();
        let (syn, report) = synthesize_register(&conf, 23);
        assert!(report
            .industries
            .iter()
            .all(|r| r.status == SynthesisStatus::Synthesized));
        for (code, group) in conf.by_industry() {
            assert_eq!(group.len(), syn.industry_slice(code).entities.len());
        }
        assert!(syn.validate().is_empty());
        for e in &syn.entities {
            assert!(e.employment.iter().all(|v| *v > 0.0));
            assert!(e.payroll.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn synthesis_is_deterministic_and_industry_independent() {
        let conf = small_sim();
        let (a, _) = synthesize_register(&conf, 23);
        let (b, _) = synthesize_register(&conf, 23);
        assert_eq!(a, b);
        let (c, _) = synthesize_register(&conf, 24);
        assert_ne!(a, c);

        // Dropping one industry leaves the other's synthetic output unchanged.
        let only_1100 = conf.industry_slice("1100");
        let (d, _) = synthesize_register(&only_1100, 23);
        assert_eq!(a.industry_slice("1100").entities, d.entities);
    }

    #[test]
    fn infeasible_industry_is_reported_and_omitted() {
        let window = YearRange::new(2000, 2001).unwrap();
        let mut entities = vec![
            EntityHistory::new("a", "9900", window, vec![1.0, 1.0], vec![2.0, 2.0]),
            EntityHistory::new("b", "9900", window, vec![1.0, 1.0], vec![2.0, 2.0]),
        ];
        for i in 0..30 {
            entities.push(EntityHistory::new(
                format!("c{i}"),
                "1100",
                window,
                vec![1.0 + i as f64, 2.0 + i as f64],
                vec![5.0 + i as f64, 6.0 + i as f64],
            ));
        }
        let r = Register::from_entities(entities, window);
        let (syn, report) = synthesize_register(&r, 7);
        assert!(syn.entities.iter().all(|e| e.industry == "1100"));
        let failed = report
            .industries
            .iter()
            .find(|i| i.industry == "9900")
            .unwrap();
        assert!(matches!(failed.status, SynthesisStatus::Failed { .. }));
        assert_eq!(report.not_synthesized_observations(), 4);
    }

    #[test]
    fn lifespan_marginals_track_confidential_frequencies() {
        let conf = simulate_register(&SimConfig {
            n_industries: 1,
            entities_per_industry: 2500,
            window: YearRange::new(1995, 2006).unwrap(),
            entry_rate: 0.6,
            ..SimConfig::default()
        })
        .unwrap();
        let (syn, _) = synthesize_register(&conf, 31);
        let n = conf.entities.len() as f64;
        for year in conf.observation_window.years() {
            let cf = conf
                .entities
                .iter()
                .filter(|e| e.birth_year() == year)
                .count() as f64;
            let sf = syn
                .entities
                .iter()
                .filter(|e| e.birth_year() == year)
                .count() as f64;
            let p = cf / n;
            let se = (p * (1.0 - p) / n).sqrt().max(1e-9);
            assert!(
                (sf / n - p).abs() <= 3.0 * se + 2.0 / n,
                "year {year}: conf share {p:.4}, syn share {:.4}, 3se {:.4}",
                sf / n,
                3.0 * se
            );
        }
    }

    #[test]
    fn per_year_marginals_match_distributionally() {
        let conf = simulate_register(&SimConfig {
            n_industries: 1,
            entities_per_industry: 2500,
            window: YearRange::new(1995, 2006).unwrap(),
            ..SimConfig::default()
        })
        .unwrap();
        let (syn, _) = synthesize_register(&conf, 37);
        let mut total = 0.0;
        let mut years = 0usize;
        for year in conf.observation_window.years() {
            let cv: Vec<f64> = conf
                .entities
                .iter()
                .filter_map(|e| e.employment_at(year))
                .map(f64::ln)
                .collect();
            let sv: Vec<f64> = syn
                .entities
                .iter()
                .filter_map(|e| e.employment_at(year))
                .map(f64::ln)
                .collect();
            if cv.len() > 30 && sv.len() > 30 {
                total += crate::stats::ks_distance(&cv, &sv);
                years += 1;
            }
        }
        let mean_ks = total / years as f64;
        assert!(mean_ks < 0.1, "mean per-year KS distance {mean_ks}");
    }
}
