//! Arc posteriors by log-domain forward-backward, and per-frame phone
//! posterior features accumulated from them.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::featio::{FeatureMatrix, Lattice, SymbolTable};
use crate::math::logaddexp;

/// Default floor for absent phones in posterior feature matrices.
pub const POSTERIOR_FLOOR: f64 = 1e-9;

/// Posterior probability per arc, aligned with `lat.arcs()`.
///
/// The weight of an arc is `acoustic_score / lambda + lm_score`; an arc's
/// posterior is the mass of all start-to-end paths through it divided by
/// the total path mass, computed entirely in the log domain.
pub fn arc_posteriors(lat: &Lattice, lambda: f64) -> Result<Vec<f64>> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::invalid("lambda", "must be a positive real"));
    }
    let order = lat.topo_order()?;
    let n = lat.num_nodes();
    let arcs = lat.arcs();
    let mut out_arcs: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_arcs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, a) in arcs.iter().enumerate() {
        out_arcs[a.from].push(i);
        in_arcs[a.to].push(i);
    }
    let weight = |i: usize| arcs[i].acoustic_score / lambda + arcs[i].lm_score;

    let mut alpha = vec![f64::NEG_INFINITY; n];
    alpha[lat.start()] = 0.0;
    for &node in &order {
        for &i in &out_arcs[node] {
            alpha[arcs[i].to] = logaddexp(alpha[arcs[i].to], alpha[node] + weight(i));
        }
    }
    let mut beta = vec![f64::NEG_INFINITY; n];
    beta[lat.end()] = 0.0;
    for &node in order.iter().rev() {
        for &i in &in_arcs[node] {
            beta[arcs[i].from] = logaddexp(beta[arcs[i].from], weight(i) + beta[node]);
        }
    }

    let total = alpha[lat.end()];
    if !total.is_finite() {
        return Err(Error::Numeric(format!(
            "lattice {}: total path score is not finite",
            lat.utterance_id()
        )));
    }
    if (beta[lat.start()] - total).abs() > 1e-6 * total.abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "lattice {}: forward and backward totals disagree ({} vs {})",
            lat.utterance_id(),
            total,
            beta[lat.start()]
        )));
    }
    Ok((0..arcs.len())
        .map(|i| (alpha[arcs[i].from] + weight(i) + beta[arcs[i].to] - total).exp())
        .collect())
}

/// Returns a copy of the lattice whose arcs carry freshly computed
/// posteriors.
pub fn with_computed_posteriors(lat: &Lattice, lambda: f64) -> Result<Lattice> {
    lat.with_posteriors(&arc_posteriors(lat, lambda)?)
}

/// Per-frame phone posteriors in the probability domain, floored at
/// `epsilon`. Exported archives store the natural log of these values;
/// [`PhonePosteriorMatrix::from_log_features`] restores the floor exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonePosteriorMatrix {
    utterance_id: String,
    probs: Array2<f64>,
    epsilon: f64,
}

impl PhonePosteriorMatrix {
    pub fn new(utterance_id: impl Into<String>, probs: Array2<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid("epsilon", "must lie strictly between 0 and 1"));
        }
        let utterance_id = utterance_id.into();
        for (t, row) in probs.rows().into_iter().enumerate() {
            let mut sum = 0.0;
            for &p in row {
                if !p.is_finite() || p < epsilon || p > 1.0 + 1e-6 {
                    return Err(Error::invalid(
                        "phone posteriors",
                        format!("utterance {utterance_id}: frame {t} holds {p}, outside [{epsilon}, 1]"),
                    ));
                }
                sum += p;
            }
            // The floor contributes at most num_phones * epsilon beyond 1.
            if sum > 1.0 + 1e-6 + row.len() as f64 * epsilon {
                return Err(Error::invalid(
                    "phone posteriors",
                    format!("utterance {utterance_id}: frame {t} sums to {sum}"),
                ));
            }
        }
        Ok(PhonePosteriorMatrix {
            utterance_id,
            probs,
            epsilon,
        })
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn num_frames(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_phones(&self) -> usize {
        self.probs.ncols()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Probability-domain values, rows = frames, columns = phones in
    /// ascending symbol-id order (null excluded).
    pub fn probs(&self) -> ndarray::ArrayView2<'_, f64> {
        self.probs.view()
    }

    /// Log-domain feature matrix for archive export.
    pub fn to_log_features(&self) -> Result<FeatureMatrix> {
        FeatureMatrix::new(&self.utterance_id, self.probs.mapv(f64::ln))
    }

    /// Inverse of [`Self::to_log_features`]: values at or below
    /// `ln(epsilon)` are restored to exactly `epsilon`, so a write/read
    /// round trip reproduces floored entries bit for bit.
    pub fn from_log_features(x: &FeatureMatrix, epsilon: f64) -> Result<Self> {
        let ln_eps = epsilon.ln();
        let probs = x
            .frames()
            .mapv(|lp| if lp <= ln_eps { epsilon } else { lp.exp() });
        PhonePosteriorMatrix::new(x.utterance_id(), probs, epsilon)
    }
}

/// Accumulates arc posteriors into per-frame phone posteriors.
///
/// Column order follows the symbol table's non-null ids ascending. `t`
/// overrides the frame count (it must cover the lattice); absent phones and
/// uncovered frames are floored at `epsilon`.
pub fn phone_posterior_features(
    lat: &Lattice,
    phones: &SymbolTable,
    lambda: f64,
    epsilon: f64,
    t: Option<usize>,
) -> Result<PhonePosteriorMatrix> {
    let ids: Vec<u32> = phones.ids().collect();
    if ids.is_empty() {
        return Err(Error::invalid("symbol table", "defines no phones"));
    }
    let col_of = |id: u32| ids.binary_search(&id).ok();
    let num_frames = t.unwrap_or(lat.num_frames());
    if lat.num_frames() > num_frames {
        return Err(Error::Mismatch(format!(
            "lattice {} spans {} frames but only {num_frames} were requested",
            lat.utterance_id(),
            lat.num_frames()
        )));
    }
    let posteriors = arc_posteriors(lat, lambda)?;
    let mut probs = Array2::<f64>::zeros((num_frames, ids.len()));
    for (arc, &p) in lat.arcs().iter().zip(&posteriors) {
        if arc.symbol_id == 0 {
            return Err(Error::invalid(
                "phone lattice",
                format!("lattice {} has an arc with the null symbol", lat.utterance_id()),
            ));
        }
        let col = col_of(arc.symbol_id).ok_or_else(|| {
            Error::invalid(
                "phone lattice",
                format!(
                    "lattice {}: symbol id {} is not in the table",
                    lat.utterance_id(),
                    arc.symbol_id
                ),
            )
        })?;
        for ti in arc.start_frame..arc.end_frame {
            probs[[ti, col]] += p;
        }
    }
    let probs = probs.mapv(|p| p.max(epsilon).min(1.0));
    PhonePosteriorMatrix::new(lat.utterance_id(), probs, epsilon)
}
