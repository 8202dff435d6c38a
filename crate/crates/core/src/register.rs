//! Longitudinal register data model: entity histories in wide form, panel
//! rows in long form, harmonization, and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// Inclusive span of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct YearRange {
    first_year: i32,
    last_year: i32,
}

impl YearRange {
    pub const MAX_LEN: usize = 200;

    pub fn new(first_year: i32, last_year: i32) -> Result<Self> {
        if first_year > last_year {
            return Err(Error::invalid(format!(
                "year range {first_year}..{last_year} has first year after last year"
            )));
        }
        let len = (last_year - first_year) as usize + 1;
        if len > Self::MAX_LEN {
            return Err(Error::invalid(format!(
                "year range {first_year}..{last_year} spans {len} years (max {})",
                Self::MAX_LEN
            )));
        }
        Ok(YearRange {
            first_year,
            last_year,
        })
    }

    pub fn first(&self) -> i32 {
        self.first_year
    }

    pub fn last(&self) -> i32 {
        self.last_year
    }

    pub fn len(&self) -> usize {
        (self.last_year - self.first_year) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, year: i32) -> bool {
        year >= self.first_year && year <= self.last_year
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.first_year..=self.last_year
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.first_year, self.last_year)
    }
}

/// Entity age bucketed the way the panel models code it.
///
/// Age is years since the entity was first observed; `A0to2` is the
/// reference class in every dummy coding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeClass {
    A0to2,
    A3to4,
    A5to7,
    A8to12,
    A13Plus,
}

impl AgeClass {
    pub const ALL: [AgeClass; 5] = [
        AgeClass::A0to2,
        AgeClass::A3to4,
        AgeClass::A5to7,
        AgeClass::A8to12,
        AgeClass::A13Plus,
    ];

    /// Total over all non-negative ages.
    pub fn from_age(age: u32) -> Self {
        match age {
            0..=2 => AgeClass::A0to2,
            3..=4 => AgeClass::A3to4,
            5..=7 => AgeClass::A5to7,
            8..=12 => AgeClass::A8to12,
            _ => AgeClass::A13Plus,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AgeClass::A0to2 => "0-2",
            AgeClass::A3to4 => "3-4",
            AgeClass::A5to7 => "5-7",
            AgeClass::A8to12 => "8-12",
            AgeClass::A13Plus => "13+",
        }
    }

    /// Identifier-safe name used in design-matrix columns and CSV terms.
    pub fn column_name(&self) -> &'static str {
        match self {
            AgeClass::A0to2 => "age_0_2",
            AgeClass::A3to4 => "age_3_4",
            AgeClass::A5to7 => "age_5_7",
            AgeClass::A8to12 => "age_8_12",
            AgeClass::A13Plus => "age_13_plus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceLabel {
    Original,
    Synthetic,
}

impl SourceLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceLabel::Original => "original",
            SourceLabel::Synthetic => "synthetic",
        }
    }
}

/// One business entity's harmonized history in wide form.
///
/// `lifespan` covers the years with positive employment; `employment` and
/// `payroll` hold one value per lifespan year. `missing_prefix_years` marks
/// years immediately before the lifespan in which a record existed but the
/// size was reported missing (the register simulator uses this to model
/// late-integrated cohorts); it is zero for ordinary entities and for all
/// synthesizer output.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityHistory {
    pub entity_id: String,
    pub industry: String,
    pub lifespan: YearRange,
    pub employment: Vec<f64>,
    pub payroll: Vec<f64>,
    pub missing_prefix_years: u8,
}

impl EntityHistory {
    pub fn new(
        entity_id: impl Into<String>,
        industry: impl Into<String>,
        lifespan: YearRange,
        employment: Vec<f64>,
        payroll: Vec<f64>,
    ) -> Self {
        EntityHistory {
            entity_id: entity_id.into(),
            industry: industry.into(),
            lifespan,
            employment,
            payroll,
            missing_prefix_years: 0,
        }
    }

    /// First year the entity is observed in the data: the first lifespan year,
    /// or earlier when missing-size records precede it.
    pub fn birth_year(&self) -> i32 {
        self.lifespan.first() - i32::from(self.missing_prefix_years)
    }

    /// Age class at `year`, counted from the first observed year.
    pub fn age_class(&self, year: i32) -> AgeClass {
        let age = (year - self.birth_year()).max(0) as u32;
        AgeClass::from_age(age)
    }

    pub fn employment_at(&self, year: i32) -> Option<f64> {
        if self.lifespan.contains(year) {
            Some(self.employment[(year - self.lifespan.first()) as usize])
        } else {
            None
        }
    }

    pub fn payroll_at(&self, year: i32) -> Option<f64> {
        if self.lifespan.contains(year) {
            Some(self.payroll[(year - self.lifespan.first()) as usize])
        } else {
            None
        }
    }
}

/// A collection of entity histories over a common observation window.
///
/// Entity order is preserved from construction; it is the "original order"
/// used by rank-based pairing in the disclosure measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Register {
    pub entities: Vec<EntityHistory>,
    pub observation_window: YearRange,
    pub industry_codes: BTreeSet<String>,
}

/// One entity-year observation in long form, with log-scale values.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub entity_id: String,
    pub year: i32,
    pub industry: String,
    pub log_employment: f64,
    pub log_payroll: f64,
    pub age_class: AgeClass,
    pub source: SourceLabel,
}

/// A data-contract violation found by validation. Violations are data, not
/// failures: a register that breaks its invariants still reports them all.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub entity_id: Option<String>,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.entity_id {
            Some(id) => write!(f, "entity {id}: {}", self.reason),
            None => write!(f, "{}", self.reason),
        }
    }
}

impl Register {
    pub fn new(
        entities: Vec<EntityHistory>,
        observation_window: YearRange,
        industry_codes: BTreeSet<String>,
    ) -> Self {
        Register {
            entities,
            observation_window,
            industry_codes,
        }
    }

    /// Build a register whose industry code set is derived from the entities.
    pub fn from_entities(entities: Vec<EntityHistory>, observation_window: YearRange) -> Self {
        let industry_codes = entities.iter().map(|e| e.industry.clone()).collect();
        Register {
            entities,
            observation_window,
            industry_codes,
        }
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    /// Total entity-year observations (lifespan years only).
    pub fn n_observations(&self) -> usize {
        self.entities.iter().map(|e| e.lifespan.len()).sum()
    }

    /// Industries present, in sorted order, each with its entities in
    /// register order.
    pub fn by_industry(&self) -> BTreeMap<&str, Vec<&EntityHistory>> {
        let mut map: BTreeMap<&str, Vec<&EntityHistory>> = BTreeMap::new();
        for e in &self.entities {
            map.entry(e.industry.as_str()).or_default().push(e);
        }
        map
    }

    /// The sub-register holding one industry's entities (original order).
    pub fn industry_slice(&self, industry: &str) -> Register {
        let entities: Vec<EntityHistory> = self
            .entities
            .iter()
            .filter(|e| e.industry == industry)
            .cloned()
            .collect();
        let mut codes = BTreeSet::new();
        codes.insert(industry.to_string());
        Register {
            entities,
            observation_window: self.observation_window,
            industry_codes: codes,
        }
    }

    /// Check every invariant; empty result means the register is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut seen_ids: BTreeSet<&str> = BTreeSet::new();
        for e in &self.entities {
            let id = || Some(e.entity_id.clone());
            if !seen_ids.insert(e.entity_id.as_str()) {
                violations.push(Violation {
                    entity_id: id(),
                    reason: "duplicate entity id".into(),
                });
            }
            if e.employment.len() != e.lifespan.len() {
                violations.push(Violation {
                    entity_id: id(),
                    reason: format!(
                        "employment length {} does not match lifespan length {}",
                        e.employment.len(),
                        e.lifespan.len()
                    ),
                });
            }
            if e.payroll.len() != e.lifespan.len() {
                violations.push(Violation {
                    entity_id: id(),
                    reason: format!(
                        "payroll length {} does not match lifespan length {}",
                        e.payroll.len(),
                        e.lifespan.len()
                    ),
                });
            }
            for (i, v) in e.employment.iter().enumerate() {
                if !(v.is_finite() && *v > 0.0) {
                    violations.push(Violation {
                        entity_id: id(),
                        reason: format!(
                            "non-positive employment {v} in {}",
                            e.lifespan.first() + i as i32
                        ),
                    });
                }
            }
            for (i, v) in e.payroll.iter().enumerate() {
                if !(v.is_finite() && *v > 0.0) {
                    violations.push(Violation {
                        entity_id: id(),
                        reason: format!(
                            "non-positive payroll {v} in {}",
                            e.lifespan.first() + i as i32
                        ),
                    });
                }
            }
            if e.birth_year() < self.observation_window.first()
                || e.lifespan.last() > self.observation_window.last()
            {
                violations.push(Violation {
                    entity_id: id(),
                    reason: format!(
                        "lifespan outside window: observed {}..{} vs window {}",
                        e.birth_year(),
                        e.lifespan.last(),
                        self.observation_window
                    ),
                });
            }
            if !self.industry_codes.contains(&e.industry) {
                violations.push(Violation {
                    entity_id: id(),
                    reason: format!("industry {} not in register code set", e.industry),
                });
            }
        }
        violations
    }

    /// Convert to the long format: one row per lifespan year, log-scale
    /// values, rows ordered by (entity_id, year).
    ///
    /// Missing-prefix years carry no values and produce no rows. All rows are
    /// labelled `Original`; callers combining sources relabel.
    pub fn to_long(&self) -> Result<Vec<PanelRow>> {
        let mut rows = Vec::with_capacity(self.n_observations());
        for e in &self.entities {
            for (i, year) in e.lifespan.years().enumerate() {
                let emp = e.employment[i];
                let pay = e.payroll[i];
                if !(emp.is_finite() && emp > 0.0) {
                    return Err(Error::data(format!(
                        "entity {} year {year}: cannot take log of employment {emp}",
                        e.entity_id
                    )));
                }
                if !(pay.is_finite() && pay > 0.0) {
                    return Err(Error::data(format!(
                        "entity {} year {year}: cannot take log of payroll {pay}",
                        e.entity_id
                    )));
                }
                rows.push(PanelRow {
                    entity_id: e.entity_id.clone(),
                    year,
                    industry: e.industry.clone(),
                    log_employment: emp.ln(),
                    log_payroll: pay.ln(),
                    age_class: e.age_class(year),
                    source: SourceLabel::Original,
                });
            }
        }
        rows.sort_by(|a, b| a.entity_id.cmp(&b.entity_id).then(a.year.cmp(&b.year)));
        Ok(rows)
    }
}

/// Rebuild a wide register from long rows.
///
/// Each entity's rows must cover contiguous years; the observation window is
/// the span of the data. Composed with [`Register::to_long`] this reproduces
/// the input register up to floating-point round-trip of the logs
/// (missing-prefix annotations do not survive, they are not part of the long
/// panel).
pub fn to_wide(rows: &[PanelRow]) -> Result<Register> {
    if rows.is_empty() {
        return Err(Error::data("cannot build a register from zero rows"));
    }
    let mut grouped: BTreeMap<&str, Vec<&PanelRow>> = BTreeMap::new();
    for row in rows {
        grouped.entry(row.entity_id.as_str()).or_default().push(row);
    }
    let min_year = rows.iter().map(|r| r.year).min().expect("nonempty");
    let max_year = rows.iter().map(|r| r.year).max().expect("nonempty");
    let window = YearRange::new(min_year, max_year)?;

    let mut entities = Vec::with_capacity(grouped.len());
    for (id, mut entity_rows) in grouped {
        entity_rows.sort_by_key(|r| r.year);
        for pair in entity_rows.windows(2) {
            if pair[1].year == pair[0].year {
                return Err(Error::data(format!(
                    "entity {id}: duplicate year {}",
                    pair[0].year
                )));
            }
            if pair[1].year != pair[0].year + 1 {
                return Err(Error::data(format!(
                    "entity {id}: gap in years between {} and {}",
                    pair[0].year, pair[1].year
                )));
            }
            if pair[1].industry != pair[0].industry {
                return Err(Error::data(format!(
                    "entity {id}: industry changes over the lifespan (harmonize first)"
                )));
            }
        }
        let lifespan =
            YearRange::new(entity_rows[0].year, entity_rows[entity_rows.len() - 1].year)?;
        entities.push(EntityHistory::new(
            id,
            entity_rows[0].industry.clone(),
            lifespan,
            entity_rows.iter().map(|r| r.log_employment.exp()).collect(),
            entity_rows.iter().map(|r| r.log_payroll.exp()).collect(),
        ));
    }
    Ok(Register::from_entities(entities, window))
}

/// Most frequent code; ties broken by the earliest-observed code.
pub fn modal_industry<S: AsRef<str>>(codes: &[S]) -> Result<String> {
    if codes.is_empty() {
        return Err(Error::invalid("modal industry of an empty code sequence"));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for code in codes {
        let code = code.as_ref();
        if !counts.contains_key(code) {
            order.push(code);
        }
        *counts.entry(code).or_insert(0) += 1;
    }
    // Earliest-observed wins ties: scan in first-seen order, strict maximum only.
    let mut winner = order[0];
    for code in &order {
        if counts[*code] > counts[winner] {
            winner = code;
        }
    }
    Ok(winner.to_string())
}

/// Drop boundary-year observations.
///
/// With `trim_first`, every observation dated the window's first year is
/// removed and the window starts one year later; `trim_last` mirrors this at
/// the end. Entities whose entire lifespan falls in trimmed years are
/// dropped. Trimming everything is an error.
pub fn trim_boundary_years(r: &Register, trim_first: bool, trim_last: bool) -> Result<Register> {
    if !trim_first && !trim_last {
        return Ok(r.clone());
    }
    let old = r.observation_window;
    let new_first = old.first() + i32::from(trim_first);
    let new_last = old.last() - i32::from(trim_last);
    if new_first > new_last {
        return Err(Error::data(format!(
            "trimming window {old} on both sides leaves no years"
        )));
    }
    let window = YearRange::new(new_first, new_last)?;
    let mut entities = Vec::new();
    for e in &r.entities {
        let first = e.lifespan.first().max(new_first);
        let last = e.lifespan.last().min(new_last);
        if first > last {
            continue; // entire lifespan trimmed
        }
        let off = (first - e.lifespan.first()) as usize;
        let len = (last - first) as usize + 1;
        let lifespan = YearRange::new(first, last)?;
        let prefix_first = e.birth_year().max(new_first);
        let mut trimmed = EntityHistory::new(
            e.entity_id.clone(),
            e.industry.clone(),
            lifespan,
            e.employment[off..off + len].to_vec(),
            e.payroll[off..off + len].to_vec(),
        );
        trimmed.missing_prefix_years = (first - prefix_first).max(0) as u8;
        entities.push(trimmed);
    }
    if entities.is_empty() {
        return Err(Error::data(
            "trimming boundary years would empty the register",
        ));
    }
    Ok(Register::new(entities, window, r.industry_codes.clone()))
}
