//! Vandalism scoring for Wikidata revisions.
//!
//! The crate reads precomputed per-revision feature tables, subsamples
//! negatives, engineers features (missingness filtering, median imputation,
//! smoothed spam-count encoding), fits logistic regression, extremely
//! randomized trees or gradient boosted trees, and evaluates them with ROC and
//! precision-recall metrics under k-fold model selection.
//!
//! All randomness flows from one `u64` seed through [`rng::derive_seed`], and
//! every parallel step reduces in a fixed order, so results are identical for
//! any thread count.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod ingest;
pub mod learners;
pub mod rng;
pub mod sampling;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
