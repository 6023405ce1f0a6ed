//! GMMD feature extraction: each frame becomes the vector of per-state
//! log-likelihoods under an auxiliary model, optionally assembled with base
//! features into spliced network inputs.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featio::{FeatureArchive, FeatureMatrix};
use crate::frontend::{concat_features, splice};
use crate::gmm::{state_loglikes, AuxModel};

/// T x N matrix whose row t holds `log p(o_t | s = i)` for every state i.
pub fn extract_gmmd(model: &AuxModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.dim() != model.dim() {
        return Err(Error::Mismatch(format!(
            "utterance {}: dimension {} does not match model dimension {}",
            x.utterance_id(),
            x.dim(),
            model.dim()
        )));
    }
    let t = x.num_frames();
    let n = model.num_states();
    let mut out = Array2::zeros((t, n));
    for ti in 0..t {
        let row = state_loglikes(model, x.frame(ti))?;
        out.row_mut(ti).assign(&row);
    }
    FeatureMatrix::new(x.utterance_id(), out)
}

/// Applies [`extract_gmmd`] to every utterance, in parallel.
pub fn extract_gmmd_archive(model: &AuxModel, feats: &FeatureArchive) -> Result<FeatureArchive> {
    let extracted: Vec<Result<(String, FeatureMatrix)>> = feats
        .par_iter()
        .map(|(id, x)| Ok((id.clone(), extract_gmmd(model, x)?)))
        .collect();
    let mut out = FeatureArchive::new();
    for item in extracted {
        let (id, x) = item?;
        out.insert(id, x);
    }
    Ok(out)
}

/// Concatenates GMMD features with the base features frame by frame, then
/// splices the result over the given context offsets.
pub fn build_gmmd_input(
    gmmd: &FeatureMatrix,
    base: &FeatureMatrix,
    offsets: &[i32],
) -> Result<FeatureMatrix> {
    splice(&concat_features(gmmd, base)?, offsets)
}

/// Per-utterance mean/variance normalization of each coordinate
/// (population statistics). Constant coordinates are centered only.
pub fn mean_variance_normalize(x: &FeatureMatrix) -> Result<FeatureMatrix> {
    let t = x.num_frames();
    if t == 0 {
        return Ok(x.clone());
    }
    let mean = x.frames().mean_axis(Axis(0)).expect("non-empty");
    let mut var = Array1::zeros(x.dim());
    for row in x.frames().rows() {
        for i in 0..x.dim() {
            let d = row[i] - mean[i];
            var[i] += d * d;
        }
    }
    var /= t as f64;
    let mut out = x.frames().to_owned();
    for mut row in out.rows_mut() {
        for i in 0..x.dim() {
            row[i] -= mean[i];
            if var[i] > 0.0 {
                row[i] /= var[i].sqrt();
            }
        }
    }
    FeatureMatrix::new(x.utterance_id(), out)
}
