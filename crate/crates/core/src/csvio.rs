//! Long-format register CSV.
//!
//! Schema (UTF-8, header row): `entity_id,year,industry,employment,payroll`
//! with raw positive decimals. Years in which a record exists but the size is
//! missing are written with empty employment/payroll fields; on read they are
//! folded back into the entity's missing-prefix annotation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::register::{EntityHistory, Register, YearRange};

pub const REGISTER_HEADER: [&str; 5] = ["entity_id", "year", "industry", "employment", "payroll"];

pub fn write_register<W: Write>(w: W, register: &Register) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(REGISTER_HEADER)?;
    for e in &register.entities {
        for year in e.birth_year()..e.lifespan.first() {
            wtr.write_record([
                e.entity_id.as_str(),
                &year.to_string(),
                e.industry.as_str(),
                "",
                "",
            ])?;
        }
        for (i, year) in e.lifespan.years().enumerate() {
            wtr.write_record([
                e.entity_id.as_str(),
                &year.to_string(),
                e.industry.as_str(),
                &e.employment[i].to_string(),
                &e.payroll[i].to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_register_path(path: &Path, register: &Register) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_register(std::io::BufWriter::new(file), register)
}

struct RawRow {
    year: i32,
    industry: String,
    employment: Option<f64>,
    payroll: Option<f64>,
}

pub fn read_register<R: Read>(r: R) -> Result<Register> {
    let mut rdr = csv::Reader::from_reader(r);
    {
        let headers = rdr.headers()?;
        let expected: Vec<&str> = REGISTER_HEADER.to_vec();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::data(format!(
                "register CSV header mismatch: expected {expected:?}, got {got:?}"
            )));
        }
    }

    // Group rows per entity preserving first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<RawRow>> = BTreeMap::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let line = line + 2; // header + 1-based
        let field = |i: usize, name: &str| -> Result<String> {
            record
                .get(i)
                .map(str::to_string)
                .ok_or_else(|| Error::data(format!("line {line}: missing column {name}")))
        };
        let entity_id = field(0, "entity_id")?;
        let year: i32 = field(1, "year")?
            .parse()
            .map_err(|_| Error::data(format!("line {line}: year is not an integer")))?;
        let industry = field(2, "industry")?;
        let parse_opt = |i: usize, name: &str| -> Result<Option<f64>> {
            let s = field(i, name)?;
            if s.is_empty() {
                return Ok(None);
            }
            let v: f64 = s
                .parse()
                .map_err(|_| Error::data(format!("line {line}: {name} is not a number")))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::data(format!(
                    "line {line}: {name} must be positive, got {v}"
                )));
            }
            Ok(Some(v))
        };
        let employment = parse_opt(3, "employment")?;
        let payroll = parse_opt(4, "payroll")?;
        if !grouped.contains_key(&entity_id) {
            order.push(entity_id.clone());
        }
        grouped.entry(entity_id).or_default().push(RawRow {
            year,
            industry,
            employment,
            payroll,
        });
    }
    if order.is_empty() {
        return Err(Error::data("register CSV holds no observations"));
    }

    let mut entities = Vec::with_capacity(order.len());
    let mut min_year = i32::MAX;
    let mut max_year = i32::MIN;
    for id in order {
        let mut rows = grouped.remove(&id).expect("grouped by construction");
        rows.sort_by_key(|r| r.year);
        for pair in rows.windows(2) {
            if pair[1].year != pair[0].year + 1 {
                return Err(Error::data(format!(
                    "entity {id}: years {} and {} are not contiguous",
                    pair[0].year, pair[1].year
                )));
            }
        }
        let industry = rows[0].industry.clone();
        if rows.iter().any(|r| r.industry != industry) {
            return Err(Error::data(format!(
                "entity {id}: industry varies across years"
            )));
        }
        // Missing-size rows are only admissible as a prefix before the
        // positive span.
        let first_positive = rows
            .iter()
            .position(|r| r.employment.is_some())
            .ok_or_else(|| Error::data(format!("entity {id}: no positive-size year")))?;
        let mut employment = Vec::new();
        let mut payroll = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            match (i < first_positive, row.employment, row.payroll) {
                (true, None, None) => {}
                (true, _, _) => unreachable!("before first positive"),
                (false, Some(e), Some(p)) => {
                    employment.push(e);
                    payroll.push(p);
                }
                (false, _, _) => {
                    return Err(Error::data(format!(
                        "entity {id} year {}: partially missing sizes inside the lifespan",
                        row.year
                    )))
                }
            }
        }
        let lifespan = YearRange::new(rows[first_positive].year, rows[rows.len() - 1].year)?;
        min_year = min_year.min(rows[0].year);
        max_year = max_year.max(rows[rows.len() - 1].year);
        let mut entity = EntityHistory::new(id, industry, lifespan, employment, payroll);
        entity.missing_prefix_years = u8::try_from(first_positive).map_err(|_| {
            Error::data(format!(
                "entity {}: missing prefix too long",
                entity.entity_id
            ))
        })?;
        entities.push(entity);
    }
    let window = YearRange::new(min_year, max_year)?;
    Ok(Register::from_entities(entities, window))
}

pub fn read_register_path(path: &Path) -> Result<Register> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    read_register(std::io::BufReader::new(file))
}

/// Write generic report rows with a header; every report CSV goes through
/// this so formatting stays uniform and deterministic.
pub fn write_rows<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_rows_path(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_rows(std::io::BufWriter::new(file), header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Register {
        let window = YearRange::new(1991, 1994).unwrap();
        let mut a = EntityHistory::new(
            "A",
            "1100",
            YearRange::new(1993, 1994).unwrap(),
            vec![10.5, 11.25],
            vec![300.125, 360.5],
        );
        a.missing_prefix_years = 2;
        let b = EntityHistory::new(
            "B",
            "1200",
            YearRange::new(1991, 1992).unwrap(),
            vec![5.0, 6.0],
            vec![100.0, 120.0],
        );
        Register::from_entities(vec![a, b], window)
    }

    #[test]
    fn round_trip_including_missing_prefix() {
        let r = sample();
        let mut buf = Vec::new();
        write_register(&mut buf, &r).unwrap();
        let back = read_register(buf.as_slice()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn missing_inside_lifespan_rejected() {
        let csv = "entity_id,year,industry,employment,payroll\n\
                   A,1991,1100,5,100\nA,1992,1100,,\nA,1993,1100,6,120\n";
        assert!(read_register(csv.as_bytes()).is_err());
    }

    #[test]
    fn header_mismatch_rejected() {
        let csv = "id,year,industry,employment,payroll\nA,1991,1100,5,100\n";
        match read_register(csv.as_bytes()) {
            Err(Error::Data(msg)) => assert!(msg.contains("header mismatch")),
            other => panic!("expected header mismatch, got {other:?}"),
        }
    }

    #[test]
    fn year_gap_rejected() {
        let csv = "entity_id,year,industry,employment,payroll\n\
                   A,1991,1100,5,100\nA,1993,1100,6,120\n";
        match read_register(csv.as_bytes()) {
            Err(Error::Data(msg)) => assert!(msg.contains("not contiguous")),
            other => panic!("expected gap error, got {other:?}"),
        }
    }
}
