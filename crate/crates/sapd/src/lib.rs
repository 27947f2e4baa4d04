//! Desk-scale anchor-point object detector.
//!
//! The crate implements a single-stage anchor-free detector trained on
//! synthetic shape scenes. Bounding boxes are encoded as per-pixel
//! point-to-boundary distances on a feature pyramid. Training uses two
//! soft reweighting mechanisms:
//!
//! - **soft anchor weighting**: each positive anchor point's loss is scaled
//!   by a generalized centerness of the anchor within its instance box, so
//!   anchors near instance boundaries contribute less;
//! - **soft level selection**: a small selection network predicts per-instance
//!   probabilities over pyramid levels, and each instance is assigned to the
//!   top-k levels with the smallest instance-dependent loss, weighted by
//!   those probabilities.
//!
//! Everything is built on a minimal deterministic f32 numerics layer
//! ([`numerics`]) with hand-derived backward passes that are verified against
//! a central finite-difference oracle.

pub mod config;
pub mod geometry;
pub mod losses;
pub mod numerics;
pub mod pipeline;
pub mod selection;
pub mod weighting;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
