//! Co-training over Key Concept Set instances for decomposable short-text
//! classification, with naive Bayes and EM baselines and an evaluation harness.

pub mod baselines;
pub mod commands;
pub mod concepts;
pub mod config;
pub mod context;
pub mod corpus;
pub mod cotrain;
pub mod error;
pub mod eval;
pub mod learners;
pub mod synthetic;

pub use error::{Error, Result};
