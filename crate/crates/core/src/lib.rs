//! Automated weak supervision over precomputed feature matrices.
//!
//! The pipeline turns a large unlabeled pool plus a small labeled split into
//! weak labels. LFs are synthesized from small learners ([`lf`]), selected
//! from a candidate pool by threshold or interactive vetting ([`iws`]), or
//! replaced by clustering ([`goggles`]). Votes are aggregated by a label
//! model ([`label_model`]) and scored against baselines ([`baselines`]) with
//! the tools in [`eval`].

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod goggles;
pub mod io;
pub mod iws;
pub mod label_model;
pub mod learners;
pub mod lf;
pub mod matrix;
pub mod synthetic;

pub use data::{load_bundle, load_bundle_with, DatasetBundle, FeatureMatrix, LabelVector, LoadOptions, Manifest};
pub use error::{Error, Result};
pub use label_model::{VoteMatrix, WeakLabelOutput, ABSTAIN};
pub use lf::{LFSet, LabelingFunction, SynthesisConfig};
pub use matrix::Matrix;
