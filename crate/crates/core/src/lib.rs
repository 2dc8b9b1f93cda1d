//! Privacy-preserving load shaping of real and reactive household power.
//!
//! The pipeline runs bottom-up through the modules: [`ingest`] reads or
//! synthesises appliance traces, [`scenarios`] reduces them to weighted
//! on-demand and PV scenarios, [`model`] builds the mixed-integer program,
//! [`solve`] runs the stand-alone and minimax goal-programming solves, and
//! [`privacy`] scores the resulting metered profiles with empirical mutual
//! information.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]
pub mod config;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod model;
pub mod privacy;
pub mod scenarios;
pub mod solve;
pub mod synthetic;

pub use config::HouseholdConfig;
pub use domain::{
    build_time_grid, validate_household, Appliance, ApplianceCategory, HouseholdModel, TimeGrid,
};
pub use error::{DomainError, IngestError, ModelError, PrivacyError, ScenarioError, SolveError};
