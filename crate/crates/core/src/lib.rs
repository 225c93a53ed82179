//! Learned user profiles for personalized search.
//!
//! The crate trains document-domain classifiers and center-of-interest
//! predictors on a small neural-network kernel, fits GloVe word vectors,
//! maintains per-user concept weights from implicit feedback and reranks
//! search results with those weights.

pub mod domain;
pub mod error;
pub mod glove;
pub mod harness;
pub mod interest;
pub mod nn;
pub mod profile;
pub mod text;

pub use error::{Error, Result};
