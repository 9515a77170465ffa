//! File formats, experiment drivers, verification and the `fogserve` CLI on
//! top of [`fogserve_core`].

pub mod acceptance;
pub mod config;
pub mod experiment;
pub mod formats;
pub mod plot;
pub mod report;
pub mod verify;

pub use fogserve_core as core;
