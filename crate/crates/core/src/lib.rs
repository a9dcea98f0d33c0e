//! AutoPV: day-ahead PV power forecasts for plants with unknown mounting
//! configuration.
//!
//! A pool of per-plant pipelines, each trained on one plant's history and
//! scaled by its peak power rating, is combined by weights on the simplex.
//! Weights start equal (cold start) and are re-fitted by bounded least squares
//! on the most recent measurements every adaptation cycle. The combined
//! forecast is re-scaled by the new plant's rating.

pub mod bvls;
pub mod cash;
pub mod csv_io;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod par;
pub mod pipeline;
pub mod regressors;
pub mod synth;
pub mod timeseries;
pub mod workflow;

pub use error::{Error, Result};
pub use par::Execution;
