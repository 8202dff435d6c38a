//! Propensity-score mean-squared-error utility metrics.
//!
//! The combined panel stacks the confidential and synthetic long panels and
//! labels rows by source. A logit of the label on log employment, log
//! payroll, age-class dummies, and year/industry fixed effects yields
//! propensity scores whose mean squared deviation from c = n2/N is the pMSE;
//! the null moments give its ratio and standardized forms.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::glm::{fit_logit, LogitFit};
use crate::register::{AgeClass, PanelRow, Register, SourceLabel};

/// Confidential and synthetic long panels stacked, with source labels.
#[derive(Debug, Clone)]
pub struct CombinedPanel {
    pub rows: Vec<PanelRow>,
    /// Confidential row count.
    pub n1: usize,
    /// Synthetic row count.
    pub n2: usize,
}

impl CombinedPanel {
    pub fn total(&self) -> usize {
        self.n1 + self.n2
    }

    /// c = n2 / N, the synthetic share of rows.
    pub fn c(&self) -> f64 {
        self.n2 as f64 / self.total() as f64
    }

    /// Build directly from labelled rows (taken as-is).
    pub fn from_rows(rows: Vec<PanelRow>) -> Result<CombinedPanel> {
        let n2 = rows
            .iter()
            .filter(|r| r.source == SourceLabel::Synthetic)
            .count();
        let n1 = rows.len() - n2;
        if n1 == 0 || n2 == 0 {
            return Err(Error::data("combined panel needs rows from both sources"));
        }
        Ok(CombinedPanel { rows, n1, n2 })
    }
}

/// Stack the long panels of both registers; synthetic rows get the
/// synthetic label. The windows must agree.
pub fn build_combined(conf: &Register, syn: &Register) -> Result<CombinedPanel> {
    if conf.observation_window != syn.observation_window {
        return Err(Error::data(format!(
            "window mismatch: confidential {} vs synthetic {}",
            conf.observation_window, syn.observation_window
        )));
    }
    if conf.entities.is_empty() || syn.entities.is_empty() {
        return Err(Error::data(
            "combined panel needs non-empty registers on both sides",
        ));
    }
    let mut rows = conf.to_long()?;
    let mut syn_rows = syn.to_long()?;
    for row in &mut syn_rows {
        row.source = SourceLabel::Synthetic;
    }
    let n1 = rows.len();
    let n2 = syn_rows.len();
    rows.append(&mut syn_rows);
    Ok(CombinedPanel { rows, n1, n2 })
}

/// Which predictors enter the propensity model. Fixed-effect families drop
/// one reference level each (earliest year, lexicographically smallest
/// industry, age class 0-2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropensityModel {
    pub employment: bool,
    pub payroll: bool,
    pub age: bool,
    pub year_effects: bool,
    pub industry_effects: bool,
}

impl Default for PropensityModel {
    fn default() -> Self {
        PropensityModel {
            employment: true,
            payroll: true,
            age: true,
            year_effects: true,
            industry_effects: true,
        }
    }
}

impl PropensityModel {
    pub fn intercept_only() -> Self {
        PropensityModel {
            employment: false,
            payroll: false,
            age: false,
            year_effects: false,
            industry_effects: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropensityFit {
    pub logit: LogitFit,
    /// Non-intercept columns actually fitted.
    pub predictor_columns: usize,
    /// Predictor count attributable to synthesized variables (employment,
    /// payroll, each fitted age dummy); the default k for reports.
    pub synthesized_k: usize,
}

/// Fit the source-membership logit on the combined panel.
pub fn fit_propensity(panel: &CombinedPanel, model: &PropensityModel) -> Result<PropensityFit> {
    if panel.n1 == 0 || panel.n2 == 0 {
        return Err(Error::data("propensity fit needs both source labels"));
    }
    let rows = &panel.rows;
    let n = rows.len();

    // Dummy families: levels present in the data minus a reference.
    let mut age_levels: Vec<AgeClass> = Vec::new();
    let mut year_levels: Vec<i32> = Vec::new();
    let mut industry_levels: Vec<String> = Vec::new();
    if model.age {
        for class in AgeClass::ALL {
            if rows.iter().any(|r| r.age_class == class) {
                age_levels.push(class);
            }
        }
        age_levels.remove(0); // reference: youngest present class
    }
    if model.year_effects {
        let mut years: Vec<i32> = rows.iter().map(|r| r.year).collect();
        years.sort_unstable();
        years.dedup();
        year_levels = years.split_off(1); // reference: earliest year
    }
    if model.industry_effects {
        let mut industries: Vec<String> = rows.iter().map(|r| r.industry.clone()).collect();
        industries.sort();
        industries.dedup();
        industry_levels = industries.split_off(1); // reference: smallest code
    }

    let mut names: Vec<String> = vec!["intercept".into()];
    if model.employment {
        names.push("ln_employment".into());
    }
    if model.payroll {
        names.push("ln_payroll".into());
    }
    for class in &age_levels {
        names.push(class.column_name().to_string());
    }
    for year in &year_levels {
        names.push(format!("year_{year}"));
    }
    for industry in &industry_levels {
        names.push(format!("industry_{industry}"));
    }
    let p = names.len();

    let x = DMatrix::from_fn(n, p, |i, j| {
        let row = &rows[i];
        let mut col = 0usize;
        if j == col {
            return 1.0;
        }
        col += 1;
        if model.employment {
            if j == col {
                return row.log_employment;
            }
            col += 1;
        }
        if model.payroll {
            if j == col {
                return row.log_payroll;
            }
            col += 1;
        }
        if j < col + age_levels.len() {
            return f64::from(row.age_class == age_levels[j - col]);
        }
        col += age_levels.len();
        if j < col + year_levels.len() {
            return f64::from(row.year == year_levels[j - col]);
        }
        col += year_levels.len();
        f64::from(row.industry == industry_levels[j - col])
    });
    let y: Vec<f64> = rows
        .iter()
        .map(|r| f64::from(r.source == SourceLabel::Synthetic))
        .collect();
    let logit = fit_logit(&x, &y, &names)?;
    Ok(PropensityFit {
        predictor_columns: p - 1,
        synthesized_k: usize::from(model.employment)
            + usize::from(model.payroll)
            + age_levels.len(),
        logit,
    })
}

/// Mean squared deviation of the propensity scores from c.
pub fn pmse(p_hat: &[f64], c: f64) -> Result<f64> {
    if p_hat.is_empty() {
        return Err(Error::data("pMSE of an empty score vector"));
    }
    if p_hat.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("propensity scores must lie in [0, 1]"));
    }
    Ok(p_hat.iter().map(|p| (p - c) * (p - c)).sum::<f64>() / p_hat.len() as f64)
}

/// Null expectation and standard deviation of the pMSE when the synthesis
/// model matches the true data-generating process:
///
///   E    = (k - 1) (1 - c)^2 c / N
///   SD   = sqrt(2 (k - 1)) (1 - c)^2 c / N
pub fn pmse_null_moments(k: usize, c: f64, n: usize) -> Result<(f64, f64)> {
    if k < 2 {
        return Err(Error::invalid(format!("null moments need k >= 2, got {k}")));
    }
    if n < 1 {
        return Err(Error::invalid("null moments need N >= 1"));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid(format!(
            "null moments need c in (0, 1), got {c}"
        )));
    }
    let base = (1.0 - c) * (1.0 - c) * c / n as f64;
    let e_null = (k as f64 - 1.0) * base;
    let sd_null = (2.0 * (k as f64 - 1.0)).sqrt() * base;
    Ok((e_null, sd_null))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmseReport {
    pub pmse: f64,
    pub e_null: f64,
    pub sd_null: f64,
    pub ratio: f64,
    pub standardized: f64,
    pub k: usize,
    pub n: usize,
    pub c: f64,
}

/// Assemble the pMSE, its null moments for the given k, and the ratio and
/// standardized forms.
pub fn pmse_report(fit: &PropensityFit, panel: &CombinedPanel, k: usize) -> Result<PmseReport> {
    let c = panel.c();
    let n = panel.total();
    let value = pmse(&fit.logit.fitted, c)?;
    let (e_null, sd_null) = pmse_null_moments(k, c, n)?;
    Ok(PmseReport {
        pmse: value,
        e_null,
        sd_null,
        ratio: value / e_null,
        standardized: (value - e_null) / sd_null,
        k,
        n,
        c,
    })
}

/// Confidence-interval overlap: the average of the overlap length relative
/// to each interval's own length.
pub fn cio(conf: (f64, f64), syn: (f64, f64)) -> Result<f64> {
    let (cl, cu) = conf;
    let (sl, su) = syn;
    if cl > cu || sl > su {
        return Err(Error::invalid("interval bounds must satisfy lo <= hi"));
    }
    if cu - cl <= 0.0 || su - sl <= 0.0 {
        return Err(Error::invalid(
            "confidence-interval overlap needs non-degenerate intervals",
        ));
    }
    let overlap = (cu.min(su) - cl.max(sl)).max(0.0);
    Ok(0.5 * (overlap / (cu - cl) + overlap / (su - sl)))
}
