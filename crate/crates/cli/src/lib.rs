//! Command-line front end: meta-dataset generation, training, selection,
//! classification conversion, experiment presets and reports.

pub mod builder;
pub mod cli;
pub mod convert;
pub mod presets;
pub mod report;
