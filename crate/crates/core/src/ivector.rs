//! Total-variability speaker modeling: Baum-Welch statistics against a UBM,
//! EM estimation of the loading matrices, and posterior-mean i-vector
//! extraction.
//!
//! The model says component k of the UBM shifts for speaker s as
//! `mu_k(s) = mu_k + T_k w(s)` with a standard-normal prior on `w`. Training
//! runs plain EM over fixed per-speaker statistics; extraction returns the
//! posterior mean `w = L^-1 sum_k T_k' Sigma_k^-1 F_k` with
//! `L = I + sum_k N_k T_k' Sigma_k^-1 T_k`.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::featio::FeatureMatrix;
use crate::gmm::DiagonalGmm;

/// Zeroth- and centered first-order statistics of one speaker (or
/// utterance) against a `K`-component, `D`-dimensional UBM.
#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchStats {
    counts: Array1<f64>,
    first: Array2<f64>,
}

impl BaumWelchStats {
    pub fn zeros(k: usize, d: usize) -> Self {
        BaumWelchStats {
            counts: Array1::zeros(k),
            first: Array2::zeros((k, d)),
        }
    }

    pub fn new(counts: Array1<f64>, first: Array2<f64>) -> Result<Self> {
        if counts.len() != first.nrows() {
            return Err(Error::invalid(
                "baum-welch stats",
                format!("{} counts for {} first-order rows", counts.len(), first.nrows()),
            ));
        }
        if counts.iter().any(|&n| !n.is_finite() || n < 0.0)
            || first.iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid("baum-welch stats", "non-finite or negative entries"));
        }
        Ok(BaumWelchStats { counts, first })
    }

    pub fn num_components(&self) -> usize {
        self.counts.len()
    }

    pub fn dim(&self) -> usize {
        self.first.ncols()
    }

    /// N_k: soft frame counts per component.
    pub fn counts(&self) -> ArrayView1<'_, f64> {
        self.counts.view()
    }

    /// F_k: responsibility-weighted sums of (o_t - mu_k).
    pub fn first_order(&self) -> ndarray::ArrayView2<'_, f64> {
        self.first.view()
    }

    /// Adds another utterance's statistics; stats are additive.
    pub fn merge(&mut self, other: &BaumWelchStats) -> Result<()> {
        if self.counts.len() != other.counts.len() || self.first.dim() != other.first.dim() {
            return Err(Error::Mismatch("baum-welch stats shapes differ".into()));
        }
        self.counts += &other.counts;
        self.first += &other.first;
        Ok(())
    }
}

/// Accumulates UBM-aligned statistics for one utterance.
pub fn accumulate_stats(ubm: &DiagonalGmm, x: &FeatureMatrix) -> Result<BaumWelchStats> {
    if x.dim() != ubm.dim() && x.num_frames() > 0 {
        return Err(Error::Mismatch(format!(
            "utterance {}: dimension {} does not match UBM dimension {}",
            x.utterance_id(),
            x.dim(),
            ubm.dim()
        )));
    }
    let k = ubm.num_components();
    let d = ubm.dim();
    let mut stats = BaumWelchStats::zeros(k, d);
    let means = ubm.means();
    for frame in x.frames().rows() {
        let gamma = ubm.component_posteriors(frame)?;
        for c in 0..k {
            stats.counts[c] += gamma[c];
            for i in 0..d {
                stats.first[[c, i]] += gamma[c] * (frame[i] - means[[c, i]]);
            }
        }
    }
    Ok(stats)
}

/// The trained subspace: a UBM plus one `D x M` loading matrix per
/// component.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalVariability {
    ubm: DiagonalGmm,
    loadings: Vec<Array2<f64>>,
    ivector_dim: usize,
}

impl TotalVariability {
    pub fn new(ubm: DiagonalGmm, loadings: Vec<Array2<f64>>, ivector_dim: usize) -> Result<Self> {
        if ivector_dim == 0 {
            return Err(Error::invalid("total-variability model", "i-vector dimension must be >= 1"));
        }
        if loadings.len() != ubm.num_components() {
            return Err(Error::invalid(
                "total-variability model",
                format!(
                    "{} loading matrices for {} UBM components",
                    loadings.len(),
                    ubm.num_components()
                ),
            ));
        }
        for (k, t) in loadings.iter().enumerate() {
            if t.dim() != (ubm.dim(), ivector_dim) {
                return Err(Error::invalid(
                    "total-variability model",
                    format!(
                        "loading {k} is {:?}, expected ({}, {ivector_dim})",
                        t.dim(),
                        ubm.dim()
                    ),
                ));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("total-variability model", format!("loading {k} has non-finite entries")));
            }
        }
        Ok(TotalVariability {
            ubm,
            loadings,
            ivector_dim,
        })
    }

    pub fn ubm(&self) -> &DiagonalGmm {
        &self.ubm
    }

    pub fn loadings(&self) -> &[Array2<f64>] {
        &self.loadings
    }

    pub fn ivector_dim(&self) -> usize {
        self.ivector_dim
    }

    /// Total Frobenius norm across all loading matrices.
    pub fn loading_norm(&self) -> f64 {
        self.loadings
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// Trained model plus the marginal-likelihood EM objective observed at the
/// start of each iteration (non-decreasing within 1e-6).
#[derive(Debug, Clone)]
pub struct TvTrainOutcome {
    pub tv: TotalVariability,
    pub objective: Vec<f64>,
}

/// Posterior precision and projected stats for one speaker under the
/// current loadings.
struct SpeakerPosterior {
    l: DMatrix<f64>,
    b: DVector<f64>,
}

fn speaker_posterior(tv: &TotalVariability, stats: &BaumWelchStats) -> Result<SpeakerPosterior> {
    let m = tv.ivector_dim();
    let d = tv.ubm.dim();
    let mut l = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for k in 0..tv.ubm.num_components() {
        let t = &tv.loadings[k];
        let var = tv.ubm.vars().row(k).to_owned();
        // G_k = T_k' Sigma_k^-1 T_k and b_k = T_k' Sigma_k^-1 F_k.
        for r in 0..m {
            for c in 0..=r {
                let mut acc = 0.0;
                for i in 0..d {
                    acc += t[[i, r]] * t[[i, c]] / var[i];
                }
                let n = stats.counts[k];
                l[(r, c)] += n * acc;
                if r != c {
                    l[(c, r)] += n * acc;
                }
            }
            let mut acc = 0.0;
            for i in 0..d {
                acc += t[[i, r]] * stats.first[[k, i]] / var[i];
            }
            b[r] += acc;
        }
    }
    Ok(SpeakerPosterior { l, b })
}

fn check_compatible(tv: &TotalVariability, stats: &BaumWelchStats) -> Result<()> {
    if stats.num_components() != tv.ubm.num_components() || stats.dim() != tv.ubm.dim() {
        return Err(Error::Mismatch(format!(
            "stats are {}x{}, model expects {}x{}",
            stats.num_components(),
            stats.dim(),
            tv.ubm.num_components(),
            tv.ubm.dim()
        )));
    }
    Ok(())
}

/// Posterior-mean i-vector for one speaker's statistics.
pub fn extract_ivector(tv: &TotalVariability, stats: &BaumWelchStats) -> Result<Array1<f64>> {
    check_compatible(tv, stats)?;
    let post = speaker_posterior(tv, stats)?;
    let chol = Cholesky::new(post.l)
        .ok_or_else(|| Error::Numeric("posterior precision is not positive definite".into()))?;
    let w = chol.solve(&post.b);
    Ok(Array1::from_iter(w.iter().copied()))
}

/// EM estimation of the loading matrices from per-speaker statistics.
///
/// Deterministic given `(stats, ubm, m, iterations, seed)`. A singular
/// M-step normal matrix (a component no speaker occupies) gets a ridge term
/// and a warning.
pub fn train_total_variability(
    stats: &BTreeMap<String, BaumWelchStats>,
    ubm: &DiagonalGmm,
    m: usize,
    iterations: usize,
    seed: u64,
) -> Result<TvTrainOutcome> {
    if stats.is_empty() {
        return Err(Error::invalid("tv training input", "no speakers"));
    }
    for (spk, s) in stats {
        if s.num_components() != ubm.num_components() || s.dim() != ubm.dim() {
            return Err(Error::Mismatch(format!(
                "speaker {spk}: stats are {}x{}, UBM is {}x{}",
                s.num_components(),
                s.dim(),
                ubm.num_components(),
                ubm.dim()
            )));
        }
    }
    let k = ubm.num_components();
    let d = ubm.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loadings: Vec<Array2<f64>> = (0..k)
        .map(|_| Array2::from_shape_fn((d, m), |_| 0.1 * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let mut objective = Vec::with_capacity(iterations);

    for _ in 0..iterations {
        let tv = TotalVariability::new(ubm.clone(), loadings.clone(), m)?;
        let mut obj = 0.0;
        let mut a: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, m); k];
        let mut bmat: Vec<Array2<f64>> = vec![Array2::zeros((d, m)); k];
        for speaker_stats in stats.values() {
            let post = speaker_posterior(&tv, speaker_stats)?;
            let chol = Cholesky::new(post.l.clone()).ok_or_else(|| {
                Error::Numeric("posterior precision is not positive definite".into())
            })?;
            let w = chol.solve(&post.b);
            let logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
            obj += -0.5 * logdet + 0.5 * post.b.dot(&w);
            let linv = chol.inverse();
            for ki in 0..k {
                let n = speaker_stats.counts[ki];
                for r in 0..m {
                    for c in 0..m {
                        a[ki][(r, c)] += n * (linv[(r, c)] + w[r] * w[c]);
                    }
                }
                for i in 0..d {
                    let f = speaker_stats.first[[ki, i]];
                    for c in 0..m {
                        bmat[ki][[i, c]] += f * w[c];
                    }
                }
            }
        }
        objective.push(obj);

        for ki in 0..k {
            let mut normal = a[ki].clone();
            let mut ridge = 0.0;
            let chol = loop {
                match Cholesky::new(normal.clone()) {
                    Some(c) => break c,
                    None => {
                        let scale = normal.diagonal().iter().sum::<f64>() / m as f64;
                        let step = (scale * 1e-8).max(1e-12);
                        ridge += step;
                        warn!(
                            "train_total_variability: singular normal matrix for component {ki}; adding ridge {ridge:.3e}"
                        );
                        for r in 0..m {
                            normal[(r, r)] += step;
                        }
                        if ridge > scale.max(1.0) {
                            return Err(Error::Numeric(format!(
                                "component {ki}: normal matrix stays singular despite ridge"
                            )));
                        }
                    }
                }
            };
            // T_k' = A_k^-1 B_k'; solve per row of B_k.
            let mut t = Array2::zeros((d, m));
            for i in 0..d {
                let rhs = DVector::from_iterator(m, bmat[ki].row(i).iter().copied());
                let sol = chol.solve(&rhs);
                for c in 0..m {
                    t[[i, c]] = sol[c];
                }
            }
            loadings[ki] = t;
        }
    }

    Ok(TvTrainOutcome {
        tv: TotalVariability::new(ubm.clone(), loadings, m)?,
        objective,
    })
}

/// Appends the same trailing coordinates to every frame.
pub fn append_ivector(x: &FeatureMatrix, w: ArrayView1<f64>) -> Result<FeatureMatrix> {
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("ivector", "non-finite entries"));
    }
    if w.is_empty() {
        return Ok(x.clone());
    }
    let t = x.num_frames();
    let d = x.dim();
    let mut out = Array2::zeros((t, d + w.len()));
    for ti in 0..t {
        for i in 0..d {
            out[[ti, i]] = x.frames()[[ti, i]];
        }
        for (i, &v) in w.iter().enumerate() {
            out[[ti, d + i]] = v;
        }
    }
    FeatureMatrix::new(x.utterance_id(), out)
}
