//! MAP re-estimation of auxiliary-model means and measurement of the
//! resulting likelihood gain.
//!
//! Adaptation interpolates each component mean with the
//! responsibility-weighted data mean:
//! `mu_hat = (tau * mu + sum_t gamma_t o_t) / (tau + sum_t gamma_t)`,
//! where frames are assigned to states by the alignment (hard) and to
//! components within a state by their posteriors (soft). Weights and
//! variances are left untouched.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featio::{AlignmentSet, AlignmentTrack, FeatureArchive, FeatureMatrix};
use crate::gmm::AuxModel;

fn aligned_utterances<'a>(
    num_states: usize,
    dim: usize,
    feats: &'a FeatureArchive,
    ali: &'a AlignmentSet,
) -> Result<Vec<(&'a str, &'a FeatureMatrix, &'a AlignmentTrack)>> {
    let mut out = Vec::with_capacity(feats.len());
    for (id, x) in feats {
        let track = ali
            .get(id)
            .ok_or_else(|| Error::Mismatch(format!("utterance {id} has no alignment")))?;
        if track.len() != x.num_frames() {
            return Err(Error::Mismatch(format!(
                "utterance {id}: {} frames but {} alignment labels",
                x.num_frames(),
                track.len()
            )));
        }
        if x.dim() != dim {
            return Err(Error::Mismatch(format!(
                "utterance {id}: dimension {} does not match model dimension {dim}",
                x.dim()
            )));
        }
        if let Some(l) = track.labels().iter().find(|l| l.state_id >= num_states) {
            return Err(Error::Mismatch(format!(
                "utterance {id}: state {} out of range for a {num_states}-state model",
                l.state_id
            )));
        }
        out.push((id.as_str(), x, track));
    }
    Ok(out)
}

/// Per-state soft-count and weighted-sum statistics.
struct MapStats {
    occ: Vec<Array1<f64>>,
    sum: Vec<Array2<f64>>,
}

impl MapStats {
    fn zeros(model: &AuxModel) -> Self {
        MapStats {
            occ: model
                .states()
                .iter()
                .map(|g| Array1::zeros(g.num_components()))
                .collect(),
            sum: model
                .states()
                .iter()
                .map(|g| Array2::zeros((g.num_components(), g.dim())))
                .collect(),
        }
    }

    fn merge(mut self, other: MapStats) -> Self {
        for (a, b) in self.occ.iter_mut().zip(other.occ) {
            *a += &b;
        }
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += &b;
        }
        self
    }
}

/// MAP adaptation of the means, `tau >= 0`. States (and components) with no
/// occupancy keep their prior means; `tau = 0` yields plain ML re-estimation.
///
/// Statistics are accumulated in parallel over utterances and reduced in
/// utterance order, so results do not depend on thread count.
pub fn map_adapt_means(
    model: &AuxModel,
    feats: &FeatureArchive,
    ali: &AlignmentSet,
    tau: f64,
) -> Result<AuxModel> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::invalid("tau", "must be a finite non-negative real"));
    }
    let utts = aligned_utterances(model.num_states(), model.dim(), feats, ali)?;

    let per_utt: Vec<Result<MapStats>> = utts
        .par_iter()
        .map(|(_, x, track)| {
            let mut stats = MapStats::zeros(model);
            for (t, l) in track.labels().iter().enumerate() {
                let o = x.frame(t);
                let gamma = model.state(l.state_id).component_posteriors(o)?;
                let occ = &mut stats.occ[l.state_id];
                let sum = &mut stats.sum[l.state_id];
                for m in 0..gamma.len() {
                    occ[m] += gamma[m];
                    for i in 0..o.len() {
                        sum[[m, i]] += gamma[m] * o[i];
                    }
                }
            }
            Ok(stats)
        })
        .collect();
    let mut stats = MapStats::zeros(model);
    for s in per_utt {
        stats = stats.merge(s?);
    }

    let mut adapted = model.clone();
    for s in 0..model.num_states() {
        let gmm = model.state(s);
        let mut means = gmm.means().to_owned();
        for m in 0..gmm.num_components() {
            let denom = tau + stats.occ[s][m];
            if denom == 0.0 {
                continue;
            }
            for i in 0..gmm.dim() {
                means[[m, i]] = (tau * gmm.means()[[m, i]] + stats.sum[s][[m, i]]) / denom;
            }
        }
        adapted = adapted.with_state(s, gmm.with_means(means)?)?;
    }
    Ok(adapted)
}

/// Mean per-frame gain `log p_adapted(o_t | s_t) - log p_prior(o_t | s_t)`
/// with states taken from the alignment.
pub fn likelihood_gain(
    si: &AuxModel,
    sa: &AuxModel,
    feats: &FeatureArchive,
    ali: &AlignmentSet,
) -> Result<f64> {
    if si.num_states() != sa.num_states() || si.dim() != sa.dim() {
        return Err(Error::Mismatch(format!(
            "models disagree: {} states/dim {} vs {} states/dim {}",
            si.num_states(),
            si.dim(),
            sa.num_states(),
            sa.dim()
        )));
    }
    let utts = aligned_utterances(si.num_states(), si.dim(), feats, ali)?;
    let total_frames: usize = utts.iter().map(|(_, x, _)| x.num_frames()).sum();
    if total_frames == 0 {
        return Err(Error::invalid("likelihood gain input", "no frames"));
    }

    let per_utt: Vec<Result<f64>> = utts
        .par_iter()
        .map(|(_, x, track)| {
            let mut acc = 0.0;
            for (t, l) in track.labels().iter().enumerate() {
                let o = x.frame(t);
                acc += sa.state(l.state_id).log_likelihood(o)?
                    - si.state(l.state_id).log_likelihood(o)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for v in per_utt {
        total += v?;
    }
    Ok(total / total_frames as f64)
}
