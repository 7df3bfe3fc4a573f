//! Few-shot spoken intent classification at desk scale.
//!
//! The pipeline trains a small character-level CNN+LSTM classifier on phone
//! transcriptions (or dense frame features) of spoken commands, evaluates it
//! on speaker-disjoint test sets, and sweeps the speakers x shots grid that
//! the bundled reference result tables use.

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod grad;
pub mod model;
pub mod protocol;

pub use error::{Error, Result};
