//! Executional error detection on surgical robot kinematics.
//!
//! Pipeline: [`dataio`] reads or synthesizes JIGSAWS-layout datasets,
//! [`preprocess`] turns gesture instances into normalized 26 × 30 windows,
//! [`ndgrad`] supplies the layers and their gradients, [`models`] builds and
//! trains the four detectors, [`eval`] runs the experiments and [`monitor`]
//! replays trials as a stream.

pub mod dataio;
pub mod eval;
pub mod models;
pub mod monitor;
pub mod ndgrad;
pub mod preprocess;
pub mod rng;
