//! Annotation-bias auditing and mitigation for facial-expression datasets
//! described by action-unit intensities.

pub mod aucfer;
pub mod audit;
pub mod calibrate;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod relabel;
pub mod report;
pub mod rng;
pub mod special;
pub mod synth;
mod threshold;

pub use dataset::{
    binarize, load_dataset, read_dataset, save_dataset, write_dataset, AnnotatedRecord, AuCellKey,
    Dataset, GroupThresholds, LoadReport, Schema, Split,
};
pub use error::{Error, Result};
pub use rng::Rng;
