//! Joint learning of label embeddings and input representations for discourse
//! relation classification, an intrinsic label-embedding quality score, and
//! alignment of relation inventories across annotation frameworks by
//! label-embedding similarity.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`types`], [`dataset`], [`artifact`]: shared domain types and persistence.
//! - [`ingest`]: RST tree and PDTB record preprocessing, splits, augmentation,
//!   synthetic corpora.
//! - [`encoders`]: the input encoder and label-embedding table initialisation.
//! - [`losses`]: the four training objectives with analytic gradients.
//! - [`training`]: the optimisation loop, baselines and multi-seed runs.
//! - [`evaluation`]: inference, classification metrics and the LEQ score.
//! - [`alignment`]: cross-framework similarity, mapping reports, relabeling
//!   and the ensemble used for extrinsic evaluation.

pub mod alignment;
pub mod artifact;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod losses;
pub mod training;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    DatasetSplits, ExperimentConfig, Framework, InstanceSource, LabelEncoderKind, LabelRecord, LossToggles,
    RelationInstance, RelationKind, RelationTaxonomy, SplitName,
};
