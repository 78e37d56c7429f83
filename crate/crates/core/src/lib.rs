//! Acoustic-to-articulatory inversion with a frozen synthesizer inside an
//! autoencoder loop, plus the auditory front end, data and evaluation tools
//! around it.

pub mod arch;
pub mod audfront;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub(crate) mod fmt;
pub mod mirrornet;
pub mod nn;
pub mod study;
pub mod synth;
pub mod tensor;
pub(crate) mod train;

pub use error::{Error, Result};
