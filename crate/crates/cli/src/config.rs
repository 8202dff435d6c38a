//! TOML pipeline configuration with flag overrides (flags win).

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use synthreg_core::pmse::PropensityModel;
use synthreg_core::sim::SimConfig;
use synthreg_core::{Error, Result, YearRange};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stochastic stage derives named sub-seeds from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Confidential register CSV; defaults to `<out_dir>/register.csv`.
    pub register: Option<PathBuf>,
    /// Synthetic register CSV; defaults to `<out_dir>/synthetic.csv`.
    pub synthetic: Option<PathBuf>,
    /// Drop first-window-year observations when harmonizing the
    /// confidential register.
    pub trim_first: bool,
    /// Drop last-window-year observations likewise.
    pub trim_last: bool,
    /// Industry digits used for share tables and per-sector pMSE rows.
    pub share_digits: usize,
    pub pmse: PmseSection,
    pub gmm: GmmSection,
    pub sim: SimSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            out_dir: PathBuf::from("out"),
            register: None,
            synthetic: None,
            trim_first: false,
            trim_last: false,
            share_digits: 2,
            pmse: PmseSection::default(),
            gmm: GmmSection::default(),
            sim: SimSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmseSection {
    pub employment: bool,
    pub payroll: bool,
    pub age: bool,
    pub year_effects: bool,
    pub industry_effects: bool,
    /// Predictor count for the null moments; 0 derives it from the fitted
    /// synthesized predictors (employment, payroll, age dummies).
    pub k: usize,
}

impl Default for PmseSection {
    fn default() -> Self {
        PmseSection {
            employment: true,
            payroll: true,
            age: true,
            year_effects: true,
            industry_effects: true,
            k: 0,
        }
    }
}

impl PmseSection {
    pub fn model(&self) -> PropensityModel {
        PropensityModel {
            employment: self.employment,
            payroll: self.payroll,
            age: self.age,
            year_effects: self.year_effects,
            industry_effects: self.industry_effects,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSection {
    pub max_lag_depth: usize,
}

impl Default for GmmSection {
    fn default() -> Self {
        GmmSection { max_lag_depth: 4 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n_industries: usize,
    pub entities_per_industry: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub entry_rate: f64,
    pub exit_hazard: f64,
    pub ar1_rho: f64,
    pub size_sigma: f64,
    pub wage_level: f64,
    pub wage_sigma: f64,
    /// 0 means no structural break.
    pub structural_break_year: i32,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            n_industries: 5,
            entities_per_industry: 2000,
            first_year: 1991,
            last_year: 2015,
            entry_rate: 0.7,
            exit_hazard: 0.08,
            ar1_rho: 0.7,
            size_sigma: 1.1,
            wage_level: 3.4,
            wage_sigma: 0.25,
            structural_break_year: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(PipelineConfig::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::data(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| Error::data(format!("config {}: {e}", path.display())))
            }
        }
    }

    pub fn register_path(&self) -> PathBuf {
        self.register
            .clone()
            .unwrap_or_else(|| self.out_dir.join("register.csv"))
    }

    pub fn synthetic_path(&self) -> PathBuf {
        self.synthetic
            .clone()
            .unwrap_or_else(|| self.out_dir.join("synthetic.csv"))
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.sim;
        Ok(SimConfig {
            n_industries: s.n_industries,
            entities_per_industry: s.entities_per_industry,
            window: YearRange::new(s.first_year, s.last_year)?,
            entry_rate: s.entry_rate,
            exit_hazard: s.exit_hazard,
            ar1_rho: s.ar1_rho,
            size_sigma: s.size_sigma,
            wage_level: s.wage_level,
            wage_sigma: s.wage_sigma,
            structural_break_year: (s.structural_break_year != 0)
                .then_some(s.structural_break_year),
            seed: self.seed,
        })
    }
}

/// Every config key as a same-named command-line flag; nested sections use
/// their section name as a prefix. Flags win over the config file.
#[derive(Debug, Clone, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (config key `out_dir`).
    #[arg(long = "out", alias = "out-dir", value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub register: Option<PathBuf>,
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    #[arg(long)]
    pub trim_first: Option<bool>,
    #[arg(long)]
    pub trim_last: Option<bool>,
    #[arg(long)]
    pub share_digits: Option<usize>,

    #[arg(long = "pmse-employment")]
    pub pmse_employment: Option<bool>,
    #[arg(long = "pmse-payroll")]
    pub pmse_payroll: Option<bool>,
    #[arg(long = "pmse-age")]
    pub pmse_age: Option<bool>,
    #[arg(long = "pmse-year-effects")]
    pub pmse_year_effects: Option<bool>,
    #[arg(long = "pmse-industry-effects")]
    pub pmse_industry_effects: Option<bool>,
    #[arg(long = "pmse-k")]
    pub pmse_k: Option<usize>,

    #[arg(long = "gmm-max-lag-depth")]
    pub gmm_max_lag_depth: Option<usize>,

    #[arg(long = "sim-n-industries")]
    pub sim_n_industries: Option<usize>,
    #[arg(long = "sim-entities-per-industry")]
    pub sim_entities_per_industry: Option<usize>,
    #[arg(long = "sim-first-year")]
    pub sim_first_year: Option<i32>,
    #[arg(long = "sim-last-year")]
    pub sim_last_year: Option<i32>,
    #[arg(long = "sim-entry-rate")]
    pub sim_entry_rate: Option<f64>,
    #[arg(long = "sim-exit-hazard")]
    pub sim_exit_hazard: Option<f64>,
    #[arg(long = "sim-ar1-rho")]
    pub sim_ar1_rho: Option<f64>,
    #[arg(long = "sim-size-sigma")]
    pub sim_size_sigma: Option<f64>,
    #[arg(long = "sim-wage-level")]
    pub sim_wage_level: Option<f64>,
    #[arg(long = "sim-wage-sigma")]
    pub sim_wage_sigma: Option<f64>,
    #[arg(long = "sim-structural-break-year")]
    pub sim_structural_break_year: Option<i32>,
}

impl Overrides {
    pub fn apply(&self, config: &mut PipelineConfig) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = &$value {
                    $field = v.clone();
                }
            };
        }
        set!(config.seed, self.seed);
        set!(config.out_dir, self.out_dir);
        if self.register.is_some() {
            config.register = self.register.clone();
        }
        if self.synthetic.is_some() {
            config.synthetic = self.synthetic.clone();
        }
        set!(config.trim_first, self.trim_first);
        set!(config.trim_last, self.trim_last);
        set!(config.share_digits, self.share_digits);
        set!(config.pmse.employment, self.pmse_employment);
        set!(config.pmse.payroll, self.pmse_payroll);
        set!(config.pmse.age, self.pmse_age);
        set!(config.pmse.year_effects, self.pmse_year_effects);
        set!(config.pmse.industry_effects, self.pmse_industry_effects);
        set!(config.pmse.k, self.pmse_k);
        set!(config.gmm.max_lag_depth, self.gmm_max_lag_depth);
        set!(config.sim.n_industries, self.sim_n_industries);
        set!(
            config.sim.entities_per_industry,
            self.sim_entities_per_industry
        );
        set!(config.sim.first_year, self.sim_first_year);
        set!(config.sim.last_year, self.sim_last_year);
        set!(config.sim.entry_rate, self.sim_entry_rate);
        set!(config.sim.exit_hazard, self.sim_exit_hazard);
        set!(config.sim.ar1_rho, self.sim_ar1_rho);
        set!(config.sim.size_sigma, self.sim_size_sigma);
        set!(config.sim.wage_level, self.sim_wage_level);
        set!(config.sim.wage_sigma, self.sim_wage_sigma);
        set!(
            config.sim.structural_break_year,
            self.sim_structural_break_year
        );
    }
}
