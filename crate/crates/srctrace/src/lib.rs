//! File formats, multi-threaded scoring and the command-line driver built on
//! `srctrace-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod parallel;
pub mod report;
pub mod store;

pub use error::{Result, StoreError};
