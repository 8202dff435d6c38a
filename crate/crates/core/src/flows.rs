//! Descriptive register dynamics: gross series, job creation/destruction,
//! entry/exit rates, and industry-year share tables.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::register::Register;

/// Year-indexed series over the observation window. Years whose value could
/// not be formed from a positive denominator carry 0 and a flag.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct YearSeries {
    values: BTreeMap<i32, f64>,
    flagged: BTreeSet<i32>,
}

impl YearSeries {
    pub fn get(&self, year: i32) -> Option<f64> {
        self.values.get(&year).copied()
    }

    pub fn is_flagged(&self, year: i32) -> bool {
        self.flagged.contains(&year)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.values.iter().map(|(y, v)| (*y, *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn insert(&mut self, year: i32, value: f64) {
        self.values.insert(year, value);
    }

    fn insert_flagged(&mut self, year: i32) {
        self.values.insert(year, 0.0);
        self.flagged.insert(year);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrossVariable {
    Employment,
    Payroll,
}

impl GrossVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            GrossVariable::Employment => "employment",
            GrossVariable::Payroll => "payroll",
        }
    }
}

/// Per-year sum of the raw variable over alive entities; empty years are 0.
pub fn gross_series(r: &Register, variable: GrossVariable) -> YearSeries {
    let mut series = YearSeries::default();
    for year in r.observation_window.years() {
        series.insert(year, 0.0);
    }
    for e in &r.entities {
        let values = match variable {
            GrossVariable::Employment => &e.employment,
            GrossVariable::Payroll => &e.payroll,
        };
        for (i, year) in e.lifespan.years().enumerate() {
            if let Some(v) = series.values.get_mut(&year) {
                *v += values[i];
            }
        }
    }
    series
}

/// Job creation / destruction rates plus the raw pieces they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct JobFlows {
    pub creation: YearSeries,
    pub destruction: YearSeries,
    /// Summed employment gains of expanding and entering entities.
    pub gains: YearSeries,
    /// Summed employment losses of contracting and exiting entities.
    pub losses: YearSeries,
    /// Averaged aggregate employment 0.5 (E_t + E_{t-1}).
    pub denominator: YearSeries,
}

/// Year-over-year job flows: gains sum employment increases of expanding and
/// entering entities, losses sum decreases of contracting and exiting ones,
/// both scaled by the two-year average of aggregate employment. The first
/// window year has no predecessor and is omitted.
pub fn job_flow_rates(r: &Register) -> Result<JobFlows> {
    let window = r.observation_window;
    if window.len() < 2 {
        return Err(Error::data("job flows need a window of at least 2 years"));
    }
    let gross = gross_series(r, GrossVariable::Employment);
    let mut flows = JobFlows {
        creation: YearSeries::default(),
        destruction: YearSeries::default(),
        gains: YearSeries::default(),
        losses: YearSeries::default(),
        denominator: YearSeries::default(),
    };
    let mut gains: BTreeMap<i32, f64> = BTreeMap::new();
    let mut losses: BTreeMap<i32, f64> = BTreeMap::new();
    for e in &r.entities {
        for year in window.first() + 1..=window.last() {
            // Absent (including missing-size prefix years) counts as zero.
            let now = e.employment_at(year).unwrap_or(0.0);
            let before = e.employment_at(year - 1).unwrap_or(0.0);
            let diff = now - before;
            if diff > 0.0 {
                *gains.entry(year).or_insert(0.0) += diff;
            } else if diff < 0.0 {
                *losses.entry(year).or_insert(0.0) -= diff;
            }
        }
    }
    for year in window.first() + 1..=window.last() {
        let g = gains.get(&year).copied().unwrap_or(0.0);
        let l = losses.get(&year).copied().unwrap_or(0.0);
        let denom = 0.5 * (gross.get(year).unwrap() + gross.get(year - 1).unwrap());
        flows.gains.insert(year, g);
        flows.losses.insert(year, l);
        flows.denominator.insert(year, denom);
        if denom > 0.0 {
            flows.creation.insert(year, g / denom);
            flows.destruction.insert(year, l / denom);
        } else {
            flows.creation.insert_flagged(year);
            flows.destruction.insert_flagged(year);
        }
    }
    Ok(flows)
}

/// Entry and exit rates.
///
/// Entry at year t counts entities whose employment changed from missing or
/// absent to positive at t, over the population alive at t; the first window
/// year is omitted (left censoring). Exit is attributed to the last year
/// alive: the rate at t counts entities alive at t and absent at t+1, over
/// the population alive at t; the last window year is omitted (right
/// censoring).
pub fn entry_exit_rates(r: &Register) -> Result<(YearSeries, YearSeries)> {
    let window = r.observation_window;
    if window.len() < 2 {
        return Err(Error::data(
            "entry/exit rates need a window of at least 2 years",
        ));
    }
    let mut alive: BTreeMap<i32, usize> = window.years().map(|y| (y, 0)).collect();
    let mut entries: BTreeMap<i32, usize> = BTreeMap::new();
    let mut exits: BTreeMap<i32, usize> = BTreeMap::new();
    for e in &r.entities {
        for year in e.lifespan.years() {
            *alive.get_mut(&year).expect("lifespan within window") += 1;
        }
        *entries.entry(e.lifespan.first()).or_insert(0) += 1;
        *exits.entry(e.lifespan.last()).or_insert(0) += 1;
    }
    let mut entry = YearSeries::default();
    for year in window.first() + 1..=window.last() {
        let n = alive[&year];
        if n > 0 {
            entry.insert(
                year,
                entries.get(&year).copied().unwrap_or(0) as f64 / n as f64,
            );
        } else {
            entry.insert_flagged(year);
        }
    }
    let mut exit = YearSeries::default();
    for year in window.first()..window.last() {
        let n = alive[&year];
        if n > 0 {
            exit.insert(
                year,
                exits.get(&year).copied().unwrap_or(0) as f64 / n as f64,
            );
        } else {
            exit.insert_flagged(year);
        }
    }
    Ok((entry, exit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareVariable {
    Entities,
    Employment,
    Payroll,
}

impl ShareVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShareVariable::Entities => "entities",
            ShareVariable::Employment => "employment",
            ShareVariable::Payroll => "payroll",
        }
    }
}

/// One industry-year cell of the share table.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareCell {
    pub industry: String,
    pub year: i32,
    /// Aggregate of the variable in this cell.
    pub aggregate: f64,
    /// Aggregate divided by the grand total over all industries and years.
    pub share: f64,
}

/// Industry-year shares of the chosen variable; industries are truncated to
/// `industry_digits` leading characters before aggregation. Shares sum to 1.
pub fn share_statistic(
    r: &Register,
    variable: ShareVariable,
    industry_digits: usize,
) -> Result<Vec<ShareCell>> {
    let mut cells: BTreeMap<(String, i32), f64> = BTreeMap::new();
    for e in &r.entities {
        let industry: String = e.industry.chars().take(industry_digits.max(1)).collect();
        for (i, year) in e.lifespan.years().enumerate() {
            let v = match variable {
                ShareVariable::Entities => 1.0,
                ShareVariable::Employment => e.employment[i],
                ShareVariable::Payroll => e.payroll[i],
            };
            *cells.entry((industry.clone(), year)).or_insert(0.0) += v;
        }
    }
    let total: f64 = cells.values().sum();
    if total <= 0.0 || total.is_nan() {
        return Err(Error::data(
            "share statistic undefined: grand total is zero",
        ));
    }
    Ok(cells
        .into_iter()
        .map(|((industry, year), aggregate)| ShareCell {
            industry,
            year,
            aggregate,
            share: aggregate / total,
        })
        .collect())
}

/// Paired share rows for the original-vs-synthetic scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedShare {
    pub industry: String,
    pub year: i32,
    pub share_confidential: f64,
    pub share_synthetic: f64,
}

/// Full outer join of the two share tables on (industry, year), zero-filled.
pub fn paired_share_table(
    conf: &Register,
    syn: &Register,
    variable: ShareVariable,
    industry_digits: usize,
) -> Result<Vec<PairedShare>> {
    let conf_cells = share_statistic(conf, variable, industry_digits)?;
    let syn_cells = share_statistic(syn, variable, industry_digits)?;
    let mut joined: BTreeMap<(String, i32), (f64, f64)> = BTreeMap::new();
    for c in conf_cells {
        joined.entry((c.industry, c.year)).or_insert((0.0, 0.0)).0 = c.share;
    }
    for c in syn_cells {
        joined.entry((c.industry, c.year)).or_insert((0.0, 0.0)).1 = c.share;
    }
    Ok(joined
        .into_iter()
        .map(
            |((industry, year), (share_confidential, share_synthetic))| PairedShare {
                industry,
                year,
                share_confidential,
                share_synthetic,
            },
        )
        .collect())
}
