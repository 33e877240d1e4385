//! Probabilistic latent semantic analysis for document classification.
//!
//! - [`corpus`]: tokenization, stopwords, vocabulary, sparse counts.
//! - [`plsa`]: the aspect model and its EM training.
//! - [`foldin`]: topic features for unseen documents.
//! - [`classify`]: logistic regression and linear SVM over topic features.
//! - [`harness`]: experiment grid, reports and synthetic corpora.

pub mod classify;
pub mod corpus;
pub mod error;
pub mod foldin;
pub mod harness;
pub mod plsa;

pub use error::{Error, Result};
