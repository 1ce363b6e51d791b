//! Numerology selection for OFDM links over doubly dispersive channels.
//!
//! The crate simulates WSSUS Rayleigh channels, computes per-numerology
//! interference powers and SNR loss, labels the loss-minimizing numerology by
//! brute force and trains a small MLP to predict that label from channel
//! features.

pub mod bessel;
pub mod channel;
pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod interference;
pub mod linksim;
pub mod mlp;
pub mod numerology;
pub mod pipeline;
pub mod selection;

pub use error::{Error, Result};
