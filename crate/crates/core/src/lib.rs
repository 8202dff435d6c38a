//! Synthetic longitudinal business register toolkit.
//!
//! The crate covers the full desk workflow for partially synthetic business
//! microdata:
//!
//! * [`register`] — the longitudinal register data model (wide entity
//!   histories, long panel rows, harmonization, validation).
//! * [`sim`] — a register simulator that plays the role of the confidential
//!   ground truth, plus a dynamic-panel generator with known coefficients
//!   for estimator-recovery tests.
//! * [`synth`] — the synthesizer: per-industry Dirichlet-multinomial lifespan
//!   models and normal-scores-transformed sequential regressions for
//!   employment and payroll paths.
//! * [`flows`] — descriptive dynamics: gross series, job creation and
//!   destruction, entry/exit rates, and industry-year share tables.
//! * [`pmse`] — propensity-score mean-squared-error utility metrics with the
//!   null moments, ratio and standardized forms, and confidence-interval
//!   overlap.
//! * [`gmm`] — the analyst modelling strategy: OLS, difference GMM, system
//!   GMM, system GMM under MA(1) errors, with Sargan and m2 diagnostics.
//! * [`disclosure`] — birth-year concordance disclosure risk.

pub mod csvio;
pub mod disclosure;
pub mod error;
pub mod flows;
pub mod glm;
pub mod gmm;
pub mod linalg;
pub mod pmse;
pub mod register;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use register::{AgeClass, EntityHistory, PanelRow, Register, SourceLabel, YearRange};
