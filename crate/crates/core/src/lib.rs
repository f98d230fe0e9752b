//! Measure and predict how well stack canaries and hardware shadow stacks
//! catch sequential stack buffer overflows.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`] ingests the Juliet C/C++ 1.3 suite or generates small
//!   synthetic overflow programs,
//! - [`build_matrix`] turns protection variants into compiler flags and builds
//!   every case across the compiler x optimisation x variant grid,
//! - [`runner`] executes binaries deterministically and captures exit status,
//!   signal information and output streams,
//! - [`classifier`] maps each run to a detection class,
//! - [`report`] aggregates classes into detection tables and checks the
//!   expected ordering between variants.
//!
//! [`frame_model`] is an in-process, byte-accurate model of a function's stack
//! frame that predicts which detector fires for a given overflow. It backs the
//! `predicted` cells of a grid when live runs are impossible (for example on
//! hosts without shadow stack hardware).

pub mod build_matrix;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod frame_model;
pub mod grid;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
