//! Neighbor-based next-trip prediction from origin-destination trip histories.
//!
//! Each entity is one user in one weekly time slot (weekday and hour) with a
//! day-ordered trip history and an optional held-out test trip. Prediction
//! works in three steps:
//!
//! 1. split every history into a training half and a validation half
//!    ([`selection::split_entity`]);
//! 2. admit as neighbors all entities whose training half is at least as
//!    close to the target's validation half as the target's own training half
//!    ([`selection::neighbor_set`]);
//! 3. pool the trips of the target and its `k` nearest neighbors and return
//!    their frequency-weighted medoid ([`predict::representative_trip`]).
//!
//! [`eval`] sweeps `k`, scores predictions against test trips and runs the
//! experiment families; [`ingest`] and [`synth`] produce datasets; [`nmf`]
//! provides the optional latent-feature preprocessing.

pub mod domain;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod metrics;
pub mod nmf;
pub mod predict;
pub mod selection;
pub mod synth;

pub use domain::{Coordinate, Dataset, DatasetMeta, Entity, EntityKey, Trip};
pub use error::{Error, Result};
pub use metrics::MetricVariant;
