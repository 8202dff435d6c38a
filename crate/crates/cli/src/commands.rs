//! Subcommand implementations: each reads its inputs, runs the corresponding
//! core stage, and writes plot-ready CSVs under the output directory.

use std::path::Path;

use synthreg_core::csvio::{read_register_path, write_register_path, write_rows_path};
use synthreg_core::disclosure::{birthyear_concordance, summarize_concordance, Pairing};
use synthreg_core::flows::{self, GrossVariable, ShareVariable};
use synthreg_core::gmm::{self, FitReport, ModelTag};
use synthreg_core::pmse::{self, PropensityModel};
use synthreg_core::register::{trim_boundary_years, Register};
use synthreg_core::sim::simulate_register;
use synthreg_core::stats;
use synthreg_core::synth::{synthesize_register, SynthesisStatus};
use synthreg_core::{Error, Result};

use crate::config::PipelineConfig;

fn fmt(v: f64) -> String {
    v.to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn ensure_out_dir(config: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| Error::data(format!("cannot create {}: {e}", config.out_dir.display())))
}

/// Read the confidential register and apply the configured boundary trims.
fn load_confidential(config: &PipelineConfig) -> Result<Register> {
    let register = read_register_path(&config.register_path())?;
    trim_boundary_years(&register, config.trim_first, config.trim_last)
}

fn load_synthetic(config: &PipelineConfig) -> Result<Register> {
    read_register_path(&config.synthetic_path())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(config: &PipelineConfig) -> Result<()> {
    ensure_out_dir(config)?;
    let sim = config.sim_config()?;
    let register = simulate_register(&sim)?;
    write_register_path(&config.out_dir.join("register.csv"), &register)?;

    // Sidecar of true parameters for test harnesses.
    let rows = vec![
        vec!["seed".to_string(), sim.seed.to_string()],
        vec!["n_industries".to_string(), sim.n_industries.to_string()],
        vec![
            "entities_per_industry".to_string(),
            sim.entities_per_industry.to_string(),
        ],
        vec!["first_year".to_string(), sim.window.first().to_string()],
        vec!["last_year".to_string(), sim.window.last().to_string()],
        vec!["entry_rate".to_string(), fmt(sim.entry_rate)],
        vec!["exit_hazard".to_string(), fmt(sim.exit_hazard)],
        vec!["ar1_rho".to_string(), fmt(sim.ar1_rho)],
        vec!["size_sigma".to_string(), fmt(sim.size_sigma)],
        vec!["wage_level".to_string(), fmt(sim.wage_level)],
        vec!["wage_sigma".to_string(), fmt(sim.wage_sigma)],
        vec![
            "structural_break_year".to_string(),
            sim.structural_break_year
                .map(|y| y.to_string())
                .unwrap_or_default(),
        ],
    ];
    write_rows_path(
        &config.out_dir.join("true_params.csv"),
        &["parameter", "value"],
        &rows,
    )?;
    println!(
        "simulated {} entities across {} industries into {}",
        register.n_entities(),
        sim.n_industries,
        config.out_dir.join("register.csv").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// synthesize
// ---------------------------------------------------------------------------

pub fn cmd_synthesize(config: &PipelineConfig) -> Result<()> {
    ensure_out_dir(config)?;
    let confidential = load_confidential(config)?;
    let (synthetic, report) = synthesize_register(&confidential, config.seed);
    write_register_path(&config.out_dir.join("synthetic.csv"), &synthetic)?;

    let mut rows = Vec::new();
    for industry in &report.industries {
        let failure = match &industry.status {
            SynthesisStatus::Synthesized => String::new(),
            SynthesisStatus::Failed { reason } => reason.clone(),
        };
        rows.push(vec![
            industry.industry.clone(),
            industry.n_entities.to_string(),
            industry.confidential_rows.to_string(),
            industry.synthetic_rows.to_string(),
            industry.final_year_rows.to_string(),
            industry.status.as_str().to_string(),
            failure,
        ]);
    }
    write_rows_path(
        &config.out_dir.join("synthesis_report.csv"),
        &[
            "industry",
            "n_entities",
            "confidential_rows",
            "synthetic_rows",
            "final_year_rows",
            "status",
            "failure_reason",
        ],
        &rows,
    )?;

    // Observation counts in the shape of a synthesized/not-synthesized table.
    let total = report.total_observations();
    let synthesized = report.synthesized_observations();
    let synth_pct = 100.0 * synthesized as f64 / total as f64;
    let counts = vec![
        vec![
            "synthesized".to_string(),
            synthesized.to_string(),
            format!("{synth_pct:.2}"),
        ],
        vec![
            "not_synthesized".to_string(),
            report.not_synthesized_observations().to_string(),
            format!("{:.2}", 100.0 - synth_pct),
        ],
        vec![
            "total".to_string(),
            total.to_string(),
            format!("{:.2}", 100.0),
        ],
    ];
    write_rows_path(
        &config.out_dir.join("synthesis_counts.csv"),
        &["category", "observations", "percentage"],
        &counts,
    )?;
    println!(
        "synthesized {} of {} observations ({synth_pct:.2}%) into {}",
        synthesized,
        total,
        config.out_dir.join("synthetic.csv").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

fn push_series(
    rows: &mut Vec<Vec<String>>,
    metric: &str,
    source: &str,
    series: &flows::YearSeries,
) {
    for (year, value) in series.iter() {
        rows.push(vec![
            metric.to_string(),
            year.to_string(),
            source.to_string(),
            fmt(value),
        ]);
    }
}

pub fn cmd_evaluate(config: &PipelineConfig) -> Result<()> {
    ensure_out_dir(config)?;
    let conf = load_confidential(config)?;
    let syn = load_synthetic(config)?;

    // Descriptive time series, tidy format.
    let mut rows = Vec::new();
    for (label, register) in [("original", &conf), ("synthetic", &syn)] {
        push_series(
            &mut rows,
            "gross_employment",
            label,
            &flows::gross_series(register, GrossVariable::Employment),
        );
        push_series(
            &mut rows,
            "gross_payroll",
            label,
            &flows::gross_series(register, GrossVariable::Payroll),
        );
        let jf = flows::job_flow_rates(register)?;
        push_series(&mut rows, "job_creation", label, &jf.creation);
        push_series(&mut rows, "job_destruction", label, &jf.destruction);
        let (entry, exit) = flows::entry_exit_rates(register)?;
        push_series(&mut rows, "entry_rate", label, &entry);
        push_series(&mut rows, "exit_rate", label, &exit);
    }
    write_rows_path(
        &config.out_dir.join("series.csv"),
        &["metric", "year", "source", "value"],
        &rows,
    )?;

    // Share tables plus a deviation summary of how far the scatter sits
    // from the diagonal.
    let mut share_summary = Vec::new();
    for (variable, file) in [
        (ShareVariable::Entities, "shares_entities.csv"),
        (ShareVariable::Employment, "shares_employment.csv"),
        (ShareVariable::Payroll, "shares_payroll.csv"),
    ] {
        let table = flows::paired_share_table(&conf, &syn, variable, config.share_digits)?;
        let rows: Vec<Vec<String>> = table
            .iter()
            .map(|cell| {
                vec![
                    cell.industry.clone(),
                    cell.year.to_string(),
                    fmt(cell.share_confidential),
                    fmt(cell.share_synthetic),
                ]
            })
            .collect();
        write_rows_path(
            &config.out_dir.join(file),
            &["industry", "year", "x_conf", "x_syn"],
            &rows,
        )?;
        let mean_abs_diff = table
            .iter()
            .map(|cell| (cell.share_confidential - cell.share_synthetic).abs())
            .sum::<f64>()
            / table.len().max(1) as f64;
        share_summary.push(vec![
            variable.as_str().to_string(),
            table.len().to_string(),
            fmt(mean_abs_diff),
        ]);
    }
    write_rows_path(
        &config.out_dir.join("share_summary.csv"),
        &["variable", "cells", "mean_abs_diff"],
        &share_summary,
    )?;

    // pMSE: overall plus per-sector rows.
    let model = config.pmse.model();
    let mut pmse_rows = Vec::new();
    let mut coef_rows = Vec::new();
    let overall = pmse_for_pair(&conf, &syn, &model, config.pmse.k)?;
    for (name, estimate, se) in &overall.coefficients {
        coef_rows.push(vec![name.clone(), fmt(*estimate), fmt(*se)]);
    }
    pmse_rows.push(overall.row("all"));
    let mut sectors: Vec<String> = conf
        .industry_codes
        .iter()
        .map(|c| c.chars().take(config.share_digits.max(1)).collect())
        .collect();
    sectors.sort();
    sectors.dedup();
    if sectors.len() > 1 {
        for sector in &sectors {
            let conf_slice = sector_slice(&conf, sector, config.share_digits);
            let syn_slice = sector_slice(&syn, sector, config.share_digits);
            if conf_slice.entities.is_empty() || syn_slice.entities.is_empty() {
                continue;
            }
            match pmse_for_pair(&conf_slice, &syn_slice, &model, config.pmse.k) {
                Ok(result) => pmse_rows.push(result.row(sector)),
                Err(e) => eprintln!("warning: pMSE for sector {sector} skipped: {e}"),
            }
        }
    }
    write_rows_path(
        &config.out_dir.join("pmse_report.csv"),
        &[
            "sector",
            "pmse",
            "pmse_ratio",
            "standardized_pmse",
            "k",
            "n",
            "c",
        ],
        &pmse_rows,
    )?;
    write_rows_path(
        &config.out_dir.join("pmse_coefficients.csv"),
        &["term", "estimate", "std_error"],
        &coef_rows,
    )?;

    // Confidence-interval overlap for simple register-level estimands.
    let mut cio_rows = Vec::new();
    for (name, pick) in [
        ("mean_log_employment", 0usize),
        ("mean_log_payroll", 1usize),
    ] {
        let values = |r: &Register| -> Result<Vec<f64>> {
            Ok(r.to_long()?
                .iter()
                .map(|row| {
                    if pick == 0 {
                        row.log_employment
                    } else {
                        row.log_payroll
                    }
                })
                .collect())
        };
        let conf_ci = stats::mean_ci95(&values(&conf)?);
        let syn_ci = stats::mean_ci95(&values(&syn)?);
        let overlap = pmse::cio(conf_ci, syn_ci)?;
        cio_rows.push(vec![
            name.to_string(),
            fmt(conf_ci.0),
            fmt(conf_ci.1),
            fmt(syn_ci.0),
            fmt(syn_ci.1),
            fmt(overlap),
        ]);
    }
    write_rows_path(
        &config.out_dir.join("cio.csv"),
        &["estimand", "conf_lo", "conf_hi", "syn_lo", "syn_hi", "cio"],
        &cio_rows,
    )?;
    println!("utility reports written to {}", config.out_dir.display());
    Ok(())
}

struct PmseResult {
    report: pmse::PmseReport,
    coefficients: Vec<(String, f64, f64)>,
}

impl PmseResult {
    fn row(&self, sector: &str) -> Vec<String> {
        vec![
            sector.to_string(),
            fmt(self.report.pmse),
            fmt(self.report.ratio),
            fmt(self.report.standardized),
            self.report.k.to_string(),
            self.report.n.to_string(),
            fmt(self.report.c),
        ]
    }
}

fn sector_slice(register: &Register, sector: &str, digits: usize) -> Register {
    let entities: Vec<_> = register
        .entities
        .iter()
        .filter(|e| e.industry.chars().take(digits.max(1)).collect::<String>() == sector)
        .cloned()
        .collect();
    Register::from_entities(entities, register.observation_window)
}

fn pmse_for_pair(
    conf: &Register,
    syn: &Register,
    model: &PropensityModel,
    configured_k: usize,
) -> Result<PmseResult> {
    let panel = pmse::build_combined(conf, syn)?;
    let fit = pmse::fit_propensity(&panel, model)?;
    let k = if configured_k == 0 {
        fit.synthesized_k.max(2)
    } else {
        configured_k
    };
    let report = pmse::pmse_report(&fit, &panel, k)?;
    let coefficients = fit
        .logit
        .column_names
        .iter()
        .zip(&fit.logit.coefficients)
        .zip(&fit.logit.std_errors)
        .map(|((name, est), se)| (name.clone(), *est, *se))
        .collect();
    Ok(PmseResult {
        report,
        coefficients,
    })
}

// ---------------------------------------------------------------------------
// panel
// ---------------------------------------------------------------------------

pub fn cmd_panel(config: &PipelineConfig) -> Result<()> {
    ensure_out_dir(config)?;
    let conf = load_confidential(config)?;
    let syn = load_synthetic(config)?;
    let report = gmm::strategy_run(&conf, &syn, config.gmm.max_lag_depth)?;

    for (c, s) in report.confidential.iter().zip(&report.synthetic) {
        write_model_csv(&config.out_dir, c, s)?;
    }

    let bias_rows: Vec<Vec<String>> = report
        .bias
        .iter()
        .map(|b| {
            vec![
                b.model.as_str().to_string(),
                fmt(b.theta_bias),
                fmt(b.eta_bias),
                fmt(b.bias_sum),
                fmt_opt(b.eta_star_confidential),
                fmt_opt(b.eta_star_synthetic),
            ]
        })
        .collect();
    write_rows_path(
        &config.out_dir.join("panel_bias.csv"),
        &[
            "model",
            "theta_bias",
            "eta_bias",
            "bias_sum",
            "eta_star_conf",
            "eta_star_syn",
        ],
        &bias_rows,
    )?;

    let mut test_rows = Vec::new();
    for t in &report.tests {
        if t.model == ModelTag::Ols {
            continue;
        }
        let model = t.model.as_str().to_string();
        test_rows.push(vec![
            model.clone(),
            "m2".to_string(),
            fmt_opt(t.m2_confidential),
            fmt_opt(t.m2_synthetic),
        ]);
        test_rows.push(vec![
            model.clone(),
            "sargan".to_string(),
            fmt_opt(t.sargan_confidential.map(|s| s.statistic)),
            fmt_opt(t.sargan_synthetic.map(|s| s.statistic)),
        ]);
        test_rows.push(vec![
            model.clone(),
            "sargan_df".to_string(),
            t.sargan_confidential
                .map(|s| s.df.to_string())
                .unwrap_or_default(),
            t.sargan_synthetic
                .map(|s| s.df.to_string())
                .unwrap_or_default(),
        ]);
        test_rows.push(vec![
            model,
            "sargan_p".to_string(),
            fmt_opt(t.sargan_confidential.map(|s| s.p_value)),
            fmt_opt(t.sargan_synthetic.map(|s| s.p_value)),
        ]);
    }
    write_rows_path(
        &config.out_dir.join("panel_tests.csv"),
        &["model", "test", "confidential", "synthetic"],
        &test_rows,
    )?;
    println!(
        "panel model reports written to {}",
        config.out_dir.display()
    );
    Ok(())
}

fn write_model_csv(out_dir: &Path, conf: &FitReport, syn: &FitReport) -> Result<()> {
    let mut names: Vec<String> = conf.terms.iter().map(|t| t.name.clone()).collect();
    for term in &syn.terms {
        if !names.contains(&term.name) {
            names.push(term.name.clone());
        }
    }
    let mut rows = Vec::new();
    for name in &names {
        let c = conf.terms.iter().find(|t| &t.name == name);
        let s = syn.terms.iter().find(|t| &t.name == name);
        rows.push(vec![
            name.clone(),
            c.map(|t| fmt(t.estimate.value)).unwrap_or_default(),
            c.map(|t| fmt(t.estimate.std_error)).unwrap_or_default(),
            s.map(|t| fmt(t.estimate.value)).unwrap_or_default(),
            s.map(|t| fmt(t.estimate.std_error)).unwrap_or_default(),
        ]);
    }
    rows.push(vec![
        "n_obs".to_string(),
        conf.n_obs.to_string(),
        String::new(),
        syn.n_obs.to_string(),
        String::new(),
    ]);
    if let (Some(rc), Some(rs)) = (conf.r_squared, syn.r_squared) {
        rows.push(vec![
            "r_squared".to_string(),
            fmt(rc),
            String::new(),
            fmt(rs),
            String::new(),
        ]);
    }
    write_rows_path(
        &out_dir.join(format!("panel_{}.csv", conf.model.as_str())),
        &["term", "conf_estimate", "conf_se", "syn_estimate", "syn_se"],
        &rows,
    )
}

// ---------------------------------------------------------------------------
// disclosure
// ---------------------------------------------------------------------------

pub fn cmd_disclosure(config: &PipelineConfig) -> Result<()> {
    ensure_out_dir(config)?;
    let conf = load_confidential(config)?;
    let syn = load_synthetic(config)?;
    let table = birthyear_concordance(&conf, &syn, Pairing::ByRank)?;

    let detail_rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.industry.clone(),
                r.synthetic_year.to_string(),
                fmt(r.probability),
                r.count.to_string(),
            ]
        })
        .collect();
    write_rows_path(
        &config.out_dir.join("concordance_detail.csv"),
        &["industry", "synthetic_year", "probability", "count"],
        &detail_rows,
    )?;

    let summary_rows: Vec<Vec<String>> = summarize_concordance(&table)
        .iter()
        .map(|s| {
            vec![
                s.year.to_string(),
                s.year.to_string(),
                fmt(s.min),
                fmt(s.mean),
                fmt(s.max),
            ]
        })
        .collect();
    write_rows_path(
        &config.out_dir.join("concordance.csv"),
        &["synthetic_year", "actual_year", "min", "mean", "max"],
        &summary_rows,
    )?;
    println!("disclosure reports written to {}", config.out_dir.display());
    Ok(())
}
