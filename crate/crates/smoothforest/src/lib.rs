//! File formats, dataset IO, experiment pipelines and rendering around
//! [`smoothforest_core`].

pub mod checkpoint;
pub mod csv_io;
pub mod error;
pub mod experiments;
pub mod forest_json;
pub mod heatmap;
pub mod metrics;
pub mod report;

pub use error::{IoError, Result};
pub use smoothforest_core;
