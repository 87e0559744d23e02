//! Online page migration with predictions: metrics, offline optimum,
//! online strategies, instance generators and the experiment harness.

pub mod generators;
pub mod harness;
pub mod io;
pub mod metric;
pub mod rounding;
pub mod sequences;
pub mod simulation;
pub mod solver;
pub mod strategies;
