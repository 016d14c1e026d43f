//! Frame-level pain intensity estimation from face images.
//!
//! The crate derives PSPI labels from FACS action units, preprocesses face
//! crops, trains convolutional classifiers with class-weighted cross-entropy
//! under subject-disjoint cross-validation, and reports MAE, MSE and accuracy.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod facs;
pub mod io;
pub mod models;
pub mod preprocess;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
