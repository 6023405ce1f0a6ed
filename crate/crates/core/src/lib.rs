//! Speaker-adaptation feature toolkit.
//!
//! This crate implements the feature side of a speaker-adapted speech
//! recognition system built around an auxiliary monophone GMM:
//!
//! - [`featio`]: line-oriented text formats for feature archives, alignments,
//!   lattices, symbol tables, GMM sets, total-variability models, and
//!   confusion networks, with validating readers and deterministic writers.
//! - [`frontend`]: frame splicing, DCT dimensionality reduction, and feature
//!   concatenation.
//! - [`gmm`]: diagonal-covariance Gaussian mixtures, EM training, and the
//!   state-indexed auxiliary model.
//! - [`adapt`]: MAP mean adaptation of the auxiliary model towards a speaker
//!   and the per-frame likelihood gain diagnostic.
//! - [`gmmd`]: GMM-derived feature extraction (per-state log-likelihood
//!   vectors) and assembly of spliced network input.
//! - [`ivector`]: Baum-Welch statistics, total-variability training, and
//!   i-vector extraction.
//! - [`lattice`]: arc posteriors by forward-backward, phone posterior
//!   features, confusion network construction, and consensus decoding.
//! - [`fusion`]: posterior-domain and lattice-domain combination of two
//!   systems, plus a grid search for the interpolation weight.
//! - [`analysis`]: Davies-Bouldin clustering index, frame error rates,
//!   lattice statistics, WER/WERR scoring, and scatter-plot exports.
//!
//! All scores are natural logarithms unless a function says otherwise.
//! Every operation is deterministic given its inputs and an explicit seed;
//! parallel code reduces in a fixed order so thread count never changes
//! results.

pub mod adapt;
pub mod analysis;
pub mod error;
pub mod featio;
pub mod frontend;
pub mod fusion;
pub mod gmm;
pub mod gmmd;
pub mod ivector;
pub mod lattice;
pub mod math;
pub mod testutil;

pub use error::{Error, Result};
