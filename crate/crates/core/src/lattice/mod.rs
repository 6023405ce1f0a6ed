//! Lattice algorithms: forward-backward arc posteriors, per-frame phone
//! posterior features, confusion-network construction, and consensus
//! decoding.
//!
//! The lattice data type and its file format live in [`crate::featio`];
//! everything here is pure computation over validated lattices.

mod consensus;
mod posterior;

pub use consensus::{build_confusion_network, consensus_hypothesis, ConfusionNetwork};
pub use posterior::{
    arc_posteriors, phone_posterior_features, with_computed_posteriors, PhonePosteriorMatrix,
    POSTERIOR_FLOOR,
};
