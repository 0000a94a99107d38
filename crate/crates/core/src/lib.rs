//! Detection and ranking of collusive reviewer groups in product-review data.
//!
//! The pipeline builds an attributed product-rating graph, extracts candidate
//! groups by repeated group detection over the graph and its line graphs,
//! filters them by six behavioral indicators, embeds reviewers from a
//! pairwise collusion graph, and ranks groups by how tightly their members
//! cluster in the embedding space.

// `!(x > 0.0)` is used on purpose so NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collusion;
pub mod detect;
pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod indicators;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod rank;
pub mod report;
pub mod sets;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
pub use model::{CandidateGroup, Dataset, ProductIx, Provenance, ProvenanceKind, RatingScale, Review, ReviewerIx};
