//! Toolkit for building synthetic strong-label sound event datasets and for
//! the objectives and metrics used to train and evaluate audio-text
//! alignment at clip and frame granularity.
//!
//! Pipeline stages:
//!
//! * [`clipper`]: window-energy extraction of clean single-event segments.
//! * [`mixer`] / [`dataset`]: background + SNR-scaled events, frame labels, captions.
//! * [`sampler`]: cluster-disjoint negative phrases to a fixed phrase-set size.
//! * [`objectives`]: clip/frame sigmoid losses and InfoNCE with analytic gradients.
//! * [`metrics`]: event matching, PSDS, recall@k and zero-shot accuracy.

pub mod audio;
pub mod clipper;
pub mod dataset;
pub mod error;
pub mod labels;
pub mod manifest;
pub mod metrics;
pub mod mixer;
pub mod objectives;
pub mod par;
pub mod rng;
pub mod sampler;
pub mod tensor;
pub mod validate;

pub use error::{Error, Result};
