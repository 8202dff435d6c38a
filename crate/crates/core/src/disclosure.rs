//! Disclosure risk via birth-year concordance: per industry, the probability
//! that the true first observed year equals the synthetic one, conditional on
//! the synthetic first year.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::register::Register;

/// How confidential and synthetic entities are matched into pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// i-th synthetic entity of an industry pairs with the i-th confidential
    /// entity, both in register order. The synthesizer preserves per-industry
    /// counts and generation order, so this is the default.
    ByRank,
    /// Pair on equal entity ids (identity checks).
    ById,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcordanceRow {
    pub industry: String,
    /// Synthetic birth year b.
    pub synthetic_year: i32,
    /// P(true birth year = b | synthetic birth year = b) within the industry.
    pub probability: f64,
    /// Synthetic entities with synthetic birth year b in the industry.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConcordanceTable {
    pub rows: Vec<ConcordanceRow>,
}

/// Min/mean/max of the per-industry probabilities for one synthetic year.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcordanceSummary {
    pub year: i32,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Compute the concordance table over paired entities.
pub fn birthyear_concordance(
    conf: &Register,
    syn: &Register,
    pairing: Pairing,
) -> Result<ConcordanceTable> {
    let conf_groups = conf.by_industry();
    let syn_groups = syn.by_industry();
    let mut rows = Vec::new();
    for (industry, syn_entities) in &syn_groups {
        let conf_entities = conf_groups.get(industry).ok_or_else(|| {
            Error::data(format!(
                "industry {industry} present only in the synthetic register"
            ))
        })?;
        // (true birth, synthetic birth) pairs for this industry.
        let pairs: Vec<(i32, i32)> = match pairing {
            Pairing::ByRank => {
                if conf_entities.len() != syn_entities.len() {
                    return Err(Error::data(format!(
                        "industry {industry}: {} confidential vs {} synthetic entities; rank \
                         pairing needs equal counts",
                        conf_entities.len(),
                        syn_entities.len()
                    )));
                }
                conf_entities
                    .iter()
                    .zip(syn_entities)
                    .map(|(c, s)| (c.birth_year(), s.birth_year()))
                    .collect()
            }
            Pairing::ById => {
                let by_id: BTreeMap<&str, i32> = conf_entities
                    .iter()
                    .map(|c| (c.entity_id.as_str(), c.birth_year()))
                    .collect();
                let mut pairs = Vec::with_capacity(syn_entities.len());
                for s in syn_entities {
                    let truth = by_id.get(s.entity_id.as_str()).ok_or_else(|| {
                        Error::data(format!(
                            "industry {industry}: synthetic entity {} has no confidential match",
                            s.entity_id
                        ))
                    })?;
                    pairs.push((*truth, s.birth_year()));
                }
                pairs
            }
        };
        let mut per_year: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
        for (true_birth, syn_birth) in pairs {
            let cell = per_year.entry(syn_birth).or_insert((0, 0));
            cell.1 += 1;
            if true_birth == syn_birth {
                cell.0 += 1;
            }
        }
        for (year, (hits, count)) in per_year {
            rows.push(ConcordanceRow {
                industry: industry.to_string(),
                synthetic_year: year,
                probability: hits as f64 / count as f64,
                count,
            });
        }
    }
    rows.sort_by(|a, b| (a.synthetic_year, &a.industry).cmp(&(b.synthetic_year, &b.industry)));
    Ok(ConcordanceTable { rows })
}

/// Unweighted min/mean/max across industries, per synthetic year. Years with
/// no populated rows are absent.
pub fn summarize_concordance(table: &ConcordanceTable) -> Vec<ConcordanceSummary> {
    let mut per_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for row in &table.rows {
        per_year
            .entry(row.synthetic_year)
            .or_default()
            .push(row.probability);
    }
    per_year
        .into_iter()
        .map(|(year, probs)| ConcordanceSummary {
            year,
            min: probs.iter().copied().fold(f64::INFINITY, f64::min),
            mean: probs.iter().sum::<f64>() / probs.len() as f64,
            max: probs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}
