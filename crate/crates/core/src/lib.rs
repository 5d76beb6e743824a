//! Session-based recommender built on substitutable/complementary item graphs.
//!
//! The pipeline: ingest multi-behavior session logs, derive two relation
//! graphs from behavior transitions, embed items through denoised weighted
//! graph attention, and score next-item candidates per session prefix.

pub mod ablate;
pub mod config;
pub mod eval;
pub mod graphs;
pub mod ingest;
pub mod math;
pub mod model;
pub mod synth;
pub mod train;
