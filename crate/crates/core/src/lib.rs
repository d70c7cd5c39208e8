//! Frame-level ROC/AUC and spatio-temporal STROC/STAUC evaluation for
//! traffic video anomaly detectors.

pub mod annotations;
pub mod cli;
pub mod exec;
pub mod metrics;
pub mod scoremaps;
pub mod synthetic;
