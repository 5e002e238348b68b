//! Genre classification toolkit.
//!
//! Char/word n-gram tf-idf features, logistic regression and a dropout
//! feed-forward classifier, validation-tuned soft-voting ensembles,
//! Monte-Carlo dropout confidence, and the statistics used to audit them.

pub mod classifiers;
pub mod corpus;
pub mod features;
pub mod par;
pub mod rng;
pub mod confidence;
pub mod ensemble;
pub mod stats;
pub mod synthetic;
pub mod config;
pub mod pipeline;
pub mod cli;
