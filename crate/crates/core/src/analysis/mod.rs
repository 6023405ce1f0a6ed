//! Diagnostics: cluster validity (Davies-Bouldin), frame error rates and
//! lattice candidate statistics, WER/WERR scoring, and t-SNE data export.
//!
//! Every report offers `text()` (human-readable) and `table()`
//! (tab-delimited, one record per line) renderings.

mod cluster;
mod fer;
mod tsne;
mod wer;

pub use cluster::db_index;
pub use fer::{frame_error_rates, lattice_statistics, speech_mask, LatticeStatsReport};
pub use tsne::{tsne_export, PhoneGroup};
pub use wer::{
    relative_reduction, wer_score, werr_report, EditCounts, SpeakerWerr, WerReport, WerrReport,
};
