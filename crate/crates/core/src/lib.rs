//! Turn raw open-source project traces (commits, thread messages) into
//! monthly sociotechnical networks and feature time series, forecast project
//! sustainability with focal-loss classifiers composed behind a foundation
//! router, and explain forecasts through attribution and downturn reports.

pub mod config;
pub mod downturn;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod identity;
pub mod manifest;
pub mod model;
pub mod month;
pub mod networks;
pub mod reply;
pub mod report;
pub mod router;
pub mod synth;
pub mod trace;
pub mod train;

pub use error::{Error, Result};
