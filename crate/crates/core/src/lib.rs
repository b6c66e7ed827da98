//! Industrial topics from regional employment.
//!
//! Region x occupation employment tables are reweighted with TF-IDF and
//! factored with nonnegative matrix factorization. The resulting topics
//! (groups of co-located occupations) characterize regions, are tracked
//! across years, cluster cities, and are tested for spatial autocorrelation.

// `!(v >= 0.0)` is used on purpose to reject NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod clustering;
pub mod dynamics;
pub mod error;
pub mod factorization;
pub mod ingest;
pub mod matrix;
pub mod pipeline;
pub mod spatial;
pub mod synth;
pub mod topics;
pub mod weighting;

pub use error::{Error, Result};
pub use factorization::{FitConfig, TopicModel};
pub use ingest::{Crosswalk, EmploymentRecord, EmploymentTable, FormatConfig};
pub use matrix::{MatrixKind, RegionOccupationMatrix};
