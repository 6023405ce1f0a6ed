//! Frame-level diagnostics of phone posterior features: frame error rates
//! and candidate-list statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::featio::{AlignmentSet, AlignmentTrack, SymbolTable};
use crate::lattice::PhonePosteriorMatrix;

/// Speech mask from a reference alignment: true wherever the frame's phone
/// differs from the silence phone.
pub fn speech_mask(track: &AlignmentTrack, silence_phone: u32) -> Vec<bool> {
    track
        .labels()
        .iter()
        .map(|l| l.phone_id != silence_phone)
        .collect()
}

fn column_index(ids: &[u32], phone: u32) -> Result<usize> {
    ids.binary_search(&phone)
        .map_err(|_| Error::invalid("reference phone", format!("id {phone} is not in the symbol table")))
}

fn check_shapes(
    p: &PhonePosteriorMatrix,
    reference: &AlignmentTrack,
    mask: &[bool],
    ids: &[u32],
) -> Result<()> {
    if p.num_frames() != reference.len() || p.num_frames() != mask.len() {
        return Err(Error::Mismatch(format!(
            "utterance {}: {} posterior frames, {} alignment frames, {} mask entries",
            p.utterance_id(),
            p.num_frames(),
            reference.len(),
            mask.len()
        )));
    }
    if p.num_phones() != ids.len() {
        return Err(Error::Mismatch(format!(
            "utterance {}: {} posterior columns but the table defines {} phones",
            p.utterance_id(),
            p.num_phones(),
            ids.len()
        )));
    }
    Ok(())
}

/// (FER, oracle FER) over speech frames.
///
/// FER: fraction where the argmax phone (ties to the lowest id) differs
/// from the reference. Oracle FER: fraction where the reference phone sits
/// at or below the floor, i.e. is absent from the lattice's candidates.
/// The two move independently.
pub fn frame_error_rates(
    p: &PhonePosteriorMatrix,
    reference: &AlignmentTrack,
    mask: &[bool],
    phones: &SymbolTable,
) -> Result<(f64, f64)> {
    let ids: Vec<u32> = phones.ids().collect();
    check_shapes(p, reference, mask, &ids)?;
    let mut speech = 0usize;
    let mut wrong = 0usize;
    let mut absent = 0usize;
    for (t, l) in reference.labels().iter().enumerate() {
        if !mask[t] {
            continue;
        }
        speech += 1;
        let ref_col = column_index(&ids, l.phone_id)?;
        let row = p.probs().row(t).to_owned();
        let mut best = 0usize;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best != ref_col {
            wrong += 1;
        }
        if row[ref_col] <= p.epsilon() {
            absent += 1;
        }
    }
    if speech == 0 {
        return Err(Error::invalid(
            "speech mask",
            format!("utterance {}: no speech frames", p.utterance_id()),
        ));
    }
    Ok((wrong as f64 / speech as f64, absent as f64 / speech as f64))
}

/// Distributions over speech frames of a posterior-feature corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeStatsReport {
    /// (candidate count, cumulative fraction of speech frames).
    pub alternatives_cdf: Vec<(f64, f64)>,
    /// (1-based rank of the reference phone, cumulative fraction of frames
    /// where it is present).
    pub rank_cdf: Vec<(f64, f64)>,
    /// (unit-width bin center of ln posterior, fraction of present frames).
    pub logprob_histogram: Vec<(f64, f64)>,
    pub logprob_mean: f64,
    pub logprob_std: f64,
    pub speech_frames: usize,
    /// Speech frames whose reference phone is among the candidates.
    pub present_frames: usize,
}

impl LatticeStatsReport {
    pub fn text(&self) -> String {
        let mut out = format!(
            "{} speech frames; reference phone present in {} ({:.2}%)\n",
            self.speech_frames,
            self.present_frames,
            100.0 * self.present_frames as f64 / self.speech_frames.max(1) as f64
        );
        let _ = writeln!(
            out,
            "log-probability of the reference phone where present: {:.4} +/- {:.4}",
            self.logprob_mean, self.logprob_std
        );
        out
    }

    /// Tab-separated rows: `<section> <value> <fraction>`.
    pub fn table(&self) -> String {
        let mut out = String::from("section\tvalue\tfraction\n");
        for (v, f) in &self.alternatives_cdf {
            let _ = writeln!(out, "alternatives_cdf\t{v}\t{f:.6}");
        }
        for (v, f) in &self.rank_cdf {
            let _ = writeln!(out, "rank_cdf\t{v}\t{f:.6}");
        }
        for (v, f) in &self.logprob_histogram {
            let _ = writeln!(out, "logprob_histogram\t{v}\t{f:.6}");
        }
        let _ = writeln!(out, "logprob_mean\t{:.6}\tn/a", self.logprob_mean);
        let _ = writeln!(out, "logprob_std\t{:.6}\tn/a", self.logprob_std);
        out
    }
}

fn cdf_of(counts: &BTreeMap<usize, usize>, total: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(counts.len());
    let mut acc = 0usize;
    for (&v, &c) in counts {
        acc += c;
        out.push((v as f64, acc as f64 / total.max(1) as f64));
    }
    out
}

/// Tallies candidate counts, reference ranks, and reference log-posteriors
/// over all speech frames of the corpus. Candidates are entries strictly
/// above the floor; ranks sort by descending posterior with ties to the
/// lower phone id.
pub fn lattice_statistics(
    ps: &BTreeMap<String, PhonePosteriorMatrix>,
    refs: &AlignmentSet,
    masks: &BTreeMap<String, Vec<bool>>,
    phones: &SymbolTable,
) -> Result<LatticeStatsReport> {
    let ids: Vec<u32> = phones.ids().collect();
    let mut alternatives: BTreeMap<usize, usize> = BTreeMap::new();
    let mut ranks: BTreeMap<usize, usize> = BTreeMap::new();
    let mut hist: BTreeMap<i64, usize> = BTreeMap::new();
    let mut speech = 0usize;
    let mut present = 0usize;
    let (mut lp_sum, mut lp_sq) = (0.0, 0.0);

    for (id, p) in ps {
        let reference = refs
            .get(id)
            .ok_or_else(|| Error::Mismatch(format!("utterance {id} has no alignment")))?;
        let mask = masks
            .get(id)
            .ok_or_else(|| Error::Mismatch(format!("utterance {id} has no speech mask")))?;
        check_shapes(p, reference, mask, &ids)?;
        for (t, l) in reference.labels().iter().enumerate() {
            if !mask[t] {
                continue;
            }
            speech += 1;
            let row = p.probs().row(t).to_owned();
            let n_candidates = row.iter().filter(|&&v| v > p.epsilon()).count();
            *alternatives.entry(n_candidates).or_insert(0) += 1;

            let ref_col = column_index(&ids, l.phone_id)?;
            let p_ref = row[ref_col];
            if p_ref > p.epsilon() {
                present += 1;
                let mut rank = 1usize;
                for c in 0..row.len() {
                    if c == ref_col || row[c] <= p.epsilon() {
                        continue;
                    }
                    if row[c] > p_ref || (row[c] == p_ref && ids[c] < ids[ref_col]) {
                        rank += 1;
                    }
                }
                *ranks.entry(rank).or_insert(0) += 1;
                let lp = p_ref.ln();
                lp_sum += lp;
                lp_sq += lp * lp;
                *hist.entry(lp.round() as i64).or_insert(0) += 1;
            }
        }
    }
    if speech == 0 {
        return Err(Error::invalid("speech mask", "no speech frames in the corpus"));
    }

    let (mean, std) = if present > 0 {
        let mean = lp_sum / present as f64;
        let var = (lp_sq / present as f64 - mean * mean).max(0.0);
        (mean, var.sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(LatticeStatsReport {
        alternatives_cdf: cdf_of(&alternatives, speech),
        rank_cdf: cdf_of(&ranks, present),
        logprob_histogram: hist
            .iter()
            .map(|(&b, &c)| (b as f64, c as f64 / present.max(1) as f64))
            .collect(),
        logprob_mean: mean,
        logprob_std: std,
        speech_frames: speech,
        present_frames: present,
    })
}
