//! Time-lapse trajectory toolkit.
//!
//! Learns a compact latent space from backbone feature vectors with pretext
//! heads (time, variety, fungicide, rot), projects it to the plane, and models
//! per-variety growth as a position-conditioned velocity field.

pub mod embedding;
pub mod evaluation;
pub mod feature_store;
pub mod nn;
pub mod pretext;
pub mod synthetic;
pub mod trajectory;
