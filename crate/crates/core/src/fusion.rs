//! Combining two systems' outputs: score-level fusion of posterior
//! features, posterior-level fusion of lattices, and a grid search for the
//! interpolation weight.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::analysis::wer_score;
use crate::error::{Error, Result};
use crate::featio::{FeatureArchive, FeatureMatrix, Lattice, LatticeArc, LatticeSet, SymbolTable};
use crate::lattice::{arc_posteriors, build_confusion_network, consensus_hypothesis};
use crate::math::complementary_weights;

/// Turns posterior features into scaled log-likelihoods by dividing out the
/// class priors: `ln p[t][j] - ln prior[j]`. Rows must be proper
/// distributions and strictly positive so the logarithm stays finite.
pub fn scaled_loglike(post: &FeatureMatrix, priors: &[f64]) -> Result<FeatureMatrix> {
    if priors.len() != post.dim() {
        return Err(Error::Mismatch(format!(
            "utterance {}: {} feature columns but {} priors",
            post.utterance_id(),
            post.dim(),
            priors.len()
        )));
    }
    if let Some(p) = priors.iter().find(|p| !p.is_finite() || **p <= 0.0) {
        return Err(Error::invalid("priors", format!("prior {p} is not strictly positive")));
    }
    let ln_priors: Vec<f64> = priors.iter().map(|p| p.ln()).collect();
    for (t, row) in post.frames().rows().into_iter().enumerate() {
        if let Some(v) = row.iter().find(|v| **v <= 0.0) {
            return Err(Error::invalid(
                "posterior features",
                format!("utterance {}: frame {t} holds non-positive entry {v}", post.utterance_id()),
            ));
        }
        let sum: f64 = row.sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(
                "posterior features",
                format!("utterance {}: frame {t} sums to {sum}, not 1", post.utterance_id()),
            ));
        }
    }
    let mut out = post.frames().mapv(f64::ln);
    for mut row in out.rows_mut() {
        for (v, lp) in row.iter_mut().zip(&ln_priors) {
            *v -= lp;
        }
    }
    FeatureMatrix::new(post.utterance_id(), out)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("weight {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// Frame-synchronous linear combination of two score matrices:
/// `alpha * a + (1 - alpha) * b`. The complementary weights are derived so
/// that swapping the inputs and replacing `alpha` by `1 - alpha` reproduces
/// the result bit for bit.
pub fn posterior_fuse(a: &FeatureMatrix, b: &FeatureMatrix, alpha: f64) -> Result<FeatureMatrix> {
    check_alpha(alpha)?;
    if a.utterance_id() != b.utterance_id() {
        return Err(Error::Mismatch(format!(
            "fusing utterances {} and {}",
            a.utterance_id(),
            b.utterance_id()
        )));
    }
    if a.num_frames() != b.num_frames() || a.dim() != b.dim() {
        return Err(Error::Mismatch(format!(
            "utterance {}: shapes {}x{} and {}x{}",
            a.utterance_id(),
            a.num_frames(),
            a.dim(),
            b.num_frames(),
            b.dim()
        )));
    }
    if alpha == 1.0 {
        return Ok(a.clone());
    }
    if alpha == 0.0 {
        return Ok(b.clone());
    }
    let (wa, wb) = complementary_weights(alpha);
    let fused = a.frames().to_owned() * wa + b.frames().to_owned() * wb;
    FeatureMatrix::new(a.utterance_id(), fused)
}

fn node_map(lat: &Lattice, first_internal: usize) -> (Vec<usize>, usize) {
    let mut map = vec![0usize; lat.num_nodes()];
    let mut next = first_internal;
    for (n, slot) in map.iter_mut().enumerate() {
        *slot = if n == lat.start() {
            0
        } else if n == lat.end() {
            1
        } else {
            next += 1;
            next - 1
        };
    }
    (map, next)
}

/// Merges two lattices over the same utterance into one whose stored arc
/// posteriors carry the fused evidence: each arc of `a` keeps its scores and
/// gets posterior `alpha * p_a`, each arc of `b` gets `(1 - alpha) * p_b`,
/// where `p_a`/`p_b` come from forward-backward under the lattice's own
/// acoustic scale. The inputs keep their internal structure; only the start
/// and end nodes are shared, so any frame-count disagreement is rejected by
/// lattice validation.
pub fn lattice_fuse(
    a: &Lattice,
    b: &Lattice,
    alpha: f64,
    lambda_a: f64,
    lambda_b: f64,
) -> Result<Lattice> {
    check_alpha(alpha)?;
    if a.utterance_id() != b.utterance_id() {
        return Err(Error::Mismatch(format!(
            "fusing lattices for utterances {} and {}",
            a.utterance_id(),
            b.utterance_id()
        )));
    }
    let pa = arc_posteriors(a, lambda_a)?;
    let pb = arc_posteriors(b, lambda_b)?;
    let (wa, wb) = complementary_weights(alpha);

    let (map_a, after_a) = node_map(a, 2);
    let (map_b, num_nodes) = node_map(b, after_a);
    let mut arcs = Vec::with_capacity(a.arcs().len() + b.arcs().len());
    for (arc, &p) in a.arcs().iter().zip(&pa) {
        arcs.push(LatticeArc {
            from: map_a[arc.from],
            to: map_a[arc.to],
            posterior: Some(wa * p),
            ..arc.clone()
        });
    }
    for (arc, &p) in b.arcs().iter().zip(&pb) {
        arcs.push(LatticeArc {
            from: map_b[arc.from],
            to: map_b[arc.to],
            posterior: Some(wb * p),
            ..arc.clone()
        });
    }
    Lattice::new(a.utterance_id(), num_nodes, 0, 1, arcs)
}

/// Where `alpha_search` gets its per-utterance system outputs from.
pub enum FusionSource<'a> {
    /// Frame-synchronous log-score matrices; hypotheses are per-frame argmax
    /// symbols with consecutive repeats collapsed.
    LogScores {
        a: &'a FeatureArchive,
        b: &'a FeatureArchive,
    },
    /// Lattices; hypotheses are the consensus over the fused lattice.
    Lattices {
        a: &'a LatticeSet,
        b: &'a LatticeSet,
        lambda_a: f64,
        lambda_b: f64,
    },
}

/// Result of a fusion-weight grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSearchReport {
    pub best_alpha: f64,
    /// `(alpha, corpus WER)` in grid order.
    pub table: Vec<(f64, f64)>,
}

impl AlphaSearchReport {
    pub fn text(&self) -> String {
        let mut out = format!("best alpha {:.4}\n", self.best_alpha);
        for (alpha, wer) in &self.table {
            out.push_str(&format!("alpha {alpha:.4}: WER {:.2}%\n", 100.0 * wer));
        }
        out
    }

    /// Tab-separated rows: `<alpha> <wer>`.
    pub fn table(&self) -> String {
        let mut out = String::from("alpha\twer\n");
        for (alpha, wer) in &self.table {
            out.push_str(&format!("{alpha}\t{wer:.6}\n"));
        }
        out
    }
}

fn decode_log_scores(x: &FeatureMatrix, ids: &[u32], phones: &SymbolTable) -> Result<Vec<String>> {
    if x.dim() != ids.len() {
        return Err(Error::Mismatch(format!(
            "utterance {}: {} score columns but the table defines {} symbols",
            x.utterance_id(),
            x.dim(),
            ids.len()
        )));
    }
    let mut words = Vec::new();
    let mut last = None;
    for row in x.frames().rows() {
        let mut best = 0usize;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if last != Some(ids[best]) {
            last = Some(ids[best]);
            words.push(phones.name_of(ids[best]).unwrap().to_string());
        }
    }
    Ok(words)
}

fn ids_to_words(ids: &[u32], phones: &SymbolTable) -> Result<Vec<String>> {
    ids.iter()
        .map(|&id| {
            phones
                .name_of(id)
                .map(str::to_string)
                .ok_or_else(|| Error::invalid("hypothesis", format!("symbol id {id} is not in the table")))
        })
        .collect()
}

fn corpus_wer(
    refs: &BTreeMap<String, Vec<String>>,
    source: &FusionSource<'_>,
    ids: &[u32],
    phones: &SymbolTable,
    alpha: f64,
) -> Result<f64> {
    let mut hyps = BTreeMap::new();
    for id in refs.keys() {
        let missing = || Error::Mismatch(format!("utterance {id} is missing from a system"));
        let words = match source {
            FusionSource::LogScores { a, b } => {
                let xa = a.get(id).ok_or_else(missing)?;
                let xb = b.get(id).ok_or_else(missing)?;
                decode_log_scores(&posterior_fuse(xa, xb, alpha)?, ids, phones)?
            }
            FusionSource::Lattices {
                a,
                b,
                lambda_a,
                lambda_b,
            } => {
                let la = a.get(id).ok_or_else(missing)?;
                let lb = b.get(id).ok_or_else(missing)?;
                let fused = lattice_fuse(la, lb, alpha, *lambda_a, *lambda_b)?;
                // The fused lattice stores its posteriors, so the scale
                // passed here is never consulted.
                let cn = build_confusion_network(&fused, 1.0)?;
                ids_to_words(&consensus_hypothesis(&cn), phones)?
            }
        };
        hyps.insert(id.clone(), words);
    }
    Ok(wer_score(refs, &hyps)?.wer())
}

/// Scores every weight in `grid` against the references and returns the
/// table plus the winner. Ties prefer the weight nearest 0.5, then the
/// smaller weight, so equally good systems blend evenly.
pub fn alpha_search(
    refs: &BTreeMap<String, Vec<String>>,
    source: &FusionSource<'_>,
    phones: &SymbolTable,
    grid: &[f64],
) -> Result<AlphaSearchReport> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "no weights to score"));
    }
    for &alpha in grid {
        check_alpha(alpha)?;
    }
    if refs.is_empty() {
        return Err(Error::invalid("references", "empty reference set"));
    }
    let ids: Vec<u32> = phones.ids().collect();
    let table: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&alpha| Ok((alpha, corpus_wer(refs, source, &ids, phones, alpha)?)))
        .collect::<Result<_>>()?;

    let mut best = table[0];
    for &(alpha, wer) in &table[1..] {
        let cand = wer
            .total_cmp(&best.1)
            .then((alpha - 0.5).abs().total_cmp(&(best.0 - 0.5).abs()))
            .then(alpha.total_cmp(&best.0));
        if cand.is_lt() {
            best = (alpha, wer);
        }
    }
    Ok(AlphaSearchReport {
        best_alpha: best.0,
        table,
    })
}
