//! Synthetic test data for fairness auditing when protected attributes and
//! model features live in separate datasets.

pub mod classifiers;
pub mod discretize;
pub mod error;
pub mod estimation;
pub mod freq;
pub mod metrics;
pub mod pipeline;
pub mod sampling;
pub mod schema;
pub mod seed;
pub mod separation;
pub mod table;

pub use error::{Error, Result};
