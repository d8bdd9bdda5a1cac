//! Active-learning workbench for technology-assisted review (TAR).
//!
//! A review starts from one known-relevant seed document. Each iteration a
//! classifier is trained on every reviewed document, the unreviewed pool is
//! scored, and a batch is picked for a simulated reviewer by relevance
//! feedback or uncertainty sampling. Each iteration's state is evaluated
//! with R-Precision and two-phase review cost, and runs are compared with
//! paired t-tests.
//!
//! Modules follow the pipeline: [`corpus`] and [`features`] prepare tasks,
//! [`classifier`] and [`plugin_bridge`] provide models, [`active_learning`]
//! runs the loop, [`evaluation`] and [`stats`] measure it, and
//! [`experiment`] orchestrates run matrices and writes results.

pub mod active_learning;
pub mod classifier;
pub mod corpus;
pub mod evaluation;
pub mod experiment;
pub mod features;
pub mod parallel;
pub mod plugin_bridge;
pub mod rng;
pub mod stats;
pub mod synthetic;
