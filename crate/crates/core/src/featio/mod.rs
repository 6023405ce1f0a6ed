//! File formats and in-memory containers shared by the toolkit.
//!
//! Every format is line-oriented UTF-8 with `#` comment lines, real numbers
//! written by [`common::fmt_real`] so that write → read → write is
//! byte-identical, and utterances keyed and serialized in lexicographic id
//! order. Writers replace files atomically (temp file plus rename).

pub mod common;

mod alignment;
mod cn;
mod feature;
mod lattice;
mod model;
mod symtab;

pub use alignment::{
    read_alignment_set, write_alignment_set, AlignmentSet, AlignmentTrack, FrameLabel,
};
pub use cn::{read_confusion_networks, write_confusion_networks, ConfusionNetworkSet};
pub use feature::{read_feature_archive, write_feature_archive, FeatureArchive, FeatureMatrix};
pub use lattice::{read_lattice_set, write_lattice_set, Lattice, LatticeArc, LatticeSet};
pub use model::{
    read_aux_model, read_aux_model_set, read_gmm, read_tv_model, write_aux_model,
    write_aux_model_set, write_gmm, write_tv_model, AuxModelSet,
};
pub use symtab::{read_symbol_table, write_symbol_table, SymbolTable, NULL_SYMBOL};
