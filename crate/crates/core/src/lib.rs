pub mod attacks;
pub mod classifiers;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod recommender;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
