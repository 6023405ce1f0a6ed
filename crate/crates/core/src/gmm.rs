//! Diagonal-covariance Gaussian mixtures and the state-indexed auxiliary
//! model.
//!
//! The auxiliary model is a bank of per-state GMMs over the same feature
//! space; its per-state log-likelihood vector is what the `gmmd` module
//! exports as features. Training is plain maximum-likelihood EM with a
//! variance floor and seeded deterministic initialization.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::logsumexp;

pub const LN_2PI: f64 = 1.8378770664093453;

/// Mixture of `M` axis-aligned Gaussians in `d` dimensions.
///
/// Weights are strictly positive and sum to 1 within 1e-9; variances are
/// strictly positive. Per-component normalization constants are cached at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGmm {
    weights: Array1<f64>,
    means: Array2<f64>,
    vars: Array2<f64>,
    /// log w_m − ½(d·ln 2π + Σ_i ln σ²_mi), the frame-independent part of
    /// each component's weighted log density.
    log_consts: Array1<f64>,
}

impl DiagonalGmm {
    pub fn new(weights: Array1<f64>, means: Array2<f64>, vars: Array2<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::invalid("gmm", "no components"));
        }
        if means.nrows() != m || vars.nrows() != m || means.ncols() != vars.ncols() {
            return Err(Error::invalid(
                "gmm",
                format!(
                    "inconsistent shapes: {} weights, means {:?}, vars {:?}",
                    m,
                    means.dim(),
                    vars.dim()
                ),
            ));
        }
        let sum: f64 = weights.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("gmm", format!("weights sum to {sum}, expected 1")));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("gmm", "weights must be strictly positive and finite"));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gmm", "non-finite mean"));
        }
        if vars.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("gmm", "variances must be strictly positive and finite"));
        }
        let d = means.ncols();
        let log_consts = Array1::from_iter(weights.iter().zip(vars.rows()).map(|(&w, var)| {
            let log_det: f64 = var.iter().map(|v| v.ln()).sum();
            w.ln() - 0.5 * (d as f64 * LN_2PI + log_det)
        }));
        Ok(DiagonalGmm {
            weights,
            means,
            vars,
            log_consts,
        })
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    pub fn vars(&self) -> ArrayView2<'_, f64> {
        self.vars.view()
    }

    /// Same mixture with new means; used by MAP adaptation.
    pub fn with_means(&self, means: Array2<f64>) -> Result<DiagonalGmm> {
        DiagonalGmm::new(self.weights.clone(), means, self.vars.clone())
    }

    fn check_dim(&self, o: ArrayView1<f64>) -> Result<()> {
        if o.len() != self.dim() {
            return Err(Error::Mismatch(format!(
                "frame dimension {} does not match gmm dimension {}",
                o.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// log(w_m · N(o; μ_m, σ²_m)) for every component.
    pub fn component_logliks(&self, o: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_dim(o)?;
        let mut out = self.log_consts.clone();
        for (m, val) in out.iter_mut().enumerate() {
            let mean = self.means.row(m);
            let var = self.vars.row(m);
            let mut quad = 0.0;
            for i in 0..o.len() {
                let diff = o[i] - mean[i];
                quad += diff * diff / var[i];
            }
            *val -= 0.5 * quad;
        }
        Ok(out)
    }

    /// Mixture log-likelihood log Σ_m w_m N(o; μ_m, σ²_m).
    pub fn log_likelihood(&self, o: ArrayView1<f64>) -> Result<f64> {
        Ok(logsumexp(self.component_logliks(o)?.as_slice().unwrap()))
    }

    /// Posterior responsibility of each component for the frame.
    pub fn component_posteriors(&self, o: ArrayView1<f64>) -> Result<Array1<f64>> {
        let logliks = self.component_logliks(o)?;
        let total = logsumexp(logliks.as_slice().unwrap());
        Ok(logliks.mapv(|l| (l - total).exp()))
    }
}

/// EM training settings. `variance_floor` is applied elementwise after
/// every M-step; [`default_variance_floor`] gives the usual data-derived
/// choice.
#[derive(Debug, Clone)]
pub struct EmConfig {
    pub components: usize,
    pub iterations: usize,
    pub variance_floor: f64,
    pub seed: u64,
}

/// Trained mixture plus the total data log-likelihood observed at the start
/// of each iteration (non-decreasing within 1e-8).
#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub gmm: DiagonalGmm,
    pub log_likelihoods: Vec<f64>,
}

/// 1e-3 times the mean per-dimension variance of the data.
pub fn default_variance_floor(data: ArrayView2<f64>) -> Result<f64> {
    if data.nrows() == 0 {
        return Err(Error::invalid("em input", "empty data"));
    }
    let gvar = global_variance(data);
    let mean_var = gvar.mean().unwrap_or(0.0);
    Ok((1e-3 * mean_var).max(f64::MIN_POSITIVE))
}

fn global_variance(data: ArrayView2<f64>) -> Array1<f64> {
    let mean = data.mean_axis(Axis(0)).expect("non-empty");
    let mut var = Array1::zeros(data.ncols());
    for row in data.rows() {
        for (i, &v) in row.iter().enumerate() {
            let diff = v - mean[i];
            var[i] += diff * diff;
        }
    }
    var /= data.nrows() as f64;
    var
}

fn seeded_init(data: ArrayView2<f64>, components: usize, floor: f64, rng: &mut ChaCha8Rng) -> DiagonalGmm {
    let d = data.ncols();
    let gvar = global_variance(data).mapv(|v| v.max(floor));
    // Means start at distinct random frames, jittered so duplicate frames
    // cannot pin two components to identical parameters forever; variances
    // start at the global variance.
    let mut idx: Vec<usize> = (0..data.nrows()).collect();
    for m in 0..components {
        let j = rng.random_range(m..idx.len());
        idx.swap(m, j);
    }
    let mut means = Array2::zeros((components, d));
    for m in 0..components {
        for i in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            means[[m, i]] = data[[idx[m], i]] + 0.05 * gvar[i].sqrt() * z;
        }
    }
    let vars = Array2::from_shape_fn((components, d), |(_, i)| gvar[i]);
    let weights = Array1::from_elem(components, 1.0 / components as f64);
    DiagonalGmm::new(weights, means, vars).expect("seeded initializer is valid")
}

/// Maximum-likelihood EM for a diagonal GMM. Deterministic given
/// `(data, config)`; starved components are re-seeded from the same stream
/// with a warning.
pub fn em_train(data: ArrayView2<f64>, config: &EmConfig) -> Result<EmOutcome> {
    if config.components == 0 {
        return Err(Error::invalid("em config", "components must be >= 1"));
    }
    if !(config.variance_floor > 0.0) {
        return Err(Error::invalid("em config", "variance floor must be > 0"));
    }
    if data.nrows() == 0 {
        return Err(Error::invalid("em input", "empty data"));
    }
    if data.nrows() < config.components {
        return Err(Error::invalid(
            "em input",
            format!(
                "{} frames cannot support {} components",
                data.nrows(),
                config.components
            ),
        ));
    }

    let t = data.nrows();
    let d = data.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gmean = data.mean_axis(Axis(0)).expect("non-empty");
    let gvar = global_variance(data).mapv(|v| v.max(config.variance_floor));
    let mut gmm = seeded_init(data, config.components, config.variance_floor, &mut rng);
    let mut trace = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        let m = gmm.num_components();
        let mut occ = Array1::<f64>::zeros(m);
        let mut sum = Array2::<f64>::zeros((m, d));
        let mut sum_sq = Array2::<f64>::zeros((m, d));
        let mut total_ll = 0.0;
        for frame in data.rows() {
            let logliks = gmm.component_logliks(frame)?;
            let lse = logsumexp(logliks.as_slice().unwrap());
            total_ll += lse;
            for c in 0..m {
                let gamma = (logliks[c] - lse).exp();
                occ[c] += gamma;
                for i in 0..d {
                    sum[[c, i]] += gamma * frame[i];
                    sum_sq[[c, i]] += gamma * frame[i] * frame[i];
                }
            }
        }
        trace.push(total_ll);

        let mut weights = Array1::<f64>::zeros(m);
        let mut means = Array2::<f64>::zeros((m, d));
        let mut vars = Array2::<f64>::zeros((m, d));
        for c in 0..m {
            if occ[c] < 1e-10 {
                warn!("em_train: component {c} starved (occupancy {:.3e}); re-seeding", occ[c]);
                weights[c] = 1.0 / m as f64;
                for i in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    means[[c, i]] = gmean[i] + 0.1 * gvar[i].sqrt() * z;
                    vars[[c, i]] = gvar[i];
                }
                continue;
            }
            weights[c] = occ[c] / t as f64;
            for i in 0..d {
                means[[c, i]] = sum[[c, i]] / occ[c];
                let second = sum_sq[[c, i]] / occ[c] - means[[c, i]] * means[[c, i]];
                vars[[c, i]] = second.max(config.variance_floor);
            }
        }
        let wsum = weights.sum();
        weights /= wsum;
        gmm = DiagonalGmm::new(weights, means, vars)?;
    }

    Ok(EmOutcome {
        gmm,
        log_likelihoods: trace,
    })
}

/// Phone identity and HMM position of one auxiliary-model state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateMeta {
    pub phone_id: u32,
    pub hmm_position: u8,
}

/// Bank of `N` per-state GMMs over a shared feature space, indexed by the
/// `state_id` values used in alignments.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxModel {
    states: Vec<DiagonalGmm>,
    meta: Vec<StateMeta>,
}

impl AuxModel {
    pub fn new(states: Vec<DiagonalGmm>, meta: Vec<StateMeta>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("aux model", "needs at least one state"));
        }
        if states.len() != meta.len() {
            return Err(Error::invalid(
                "aux model",
                format!("{} states but {} metadata records", states.len(), meta.len()),
            ));
        }
        let d = states[0].dim();
        if let Some(bad) = states.iter().position(|g| g.dim() != d) {
            return Err(Error::invalid(
                "aux model",
                format!("state {bad} has dimension {}, expected {d}", states[bad].dim()),
            ));
        }
        if meta.iter().any(|m| m.hmm_position > 2) {
            return Err(Error::invalid("aux model", "hmm_position outside {0,1,2}"));
        }
        Ok(AuxModel { states, meta })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn state(&self, s: usize) -> &DiagonalGmm {
        &self.states[s]
    }

    pub fn states(&self) -> &[DiagonalGmm] {
        &self.states
    }

    pub fn meta(&self, s: usize) -> StateMeta {
        self.meta[s]
    }

    pub fn metas(&self) -> &[StateMeta] {
        &self.meta
    }

    /// Same bank with one state's GMM replaced.
    pub fn with_state(&self, s: usize, gmm: DiagonalGmm) -> Result<AuxModel> {
        if s >= self.states.len() {
            return Err(Error::invalid("aux model", format!("state {s} out of range")));
        }
        let mut states = self.states.clone();
        states[s] = gmm;
        AuxModel::new(states, self.meta.clone())
    }
}

/// Log-likelihood of the frame under every state, in state order.
pub fn state_loglikes(model: &AuxModel, o: ArrayView1<f64>) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(model.num_states());
    for (s, gmm) in model.states.iter().enumerate() {
        out[s] = gmm.log_likelihood(o)?;
    }
    Ok(out)
}

/// Trains one GMM per state on the frames the alignment assigns to it.
///
/// State count is `max state_id + 1` over the alignments. The per-state
/// component count is capped by the state's frame count; a state with no
/// frames falls back to a single global Gaussian. Both cases log a warning.
/// Deterministic: per-state EM is seeded from `config.seed` and the state id.
pub fn train_aux_model(
    feats: &crate::featio::FeatureArchive,
    ali: &crate::featio::AlignmentSet,
    config: &EmConfig,
) -> Result<AuxModel> {
    use rayon::prelude::*;

    let mut num_states = 0usize;
    let mut total_frames = 0usize;
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
        for l in track.labels() {
            num_states = num_states.max(l.state_id + 1);
        }
        total_frames += x.num_frames();
    }
    if num_states == 0 || total_frames == 0 {
        return Err(Error::invalid("aux training input", "no aligned frames"));
    }
    let dim = feats.values().next().map(|x| x.dim()).unwrap_or(0);

    // Gather every state's frames in utterance order, and each state's
    // phone/position label (which must be consistent across frames).
    let mut state_frames: Vec<Vec<f64>> = vec![Vec::new(); num_states];
    let mut meta: Vec<Option<StateMeta>> = vec![None; num_states];
    let mut pooled: Vec<f64> = Vec::with_capacity(total_frames * dim);
    for (id, x) in feats {
        if x.dim() != dim {
            return Err(Error::Mismatch(format!(
                "utterance {id}: dimension {} differs from {dim}",
                x.dim()
            )));
        }
        let track = &ali[id.as_str()];
        for (t, l) in track.labels().iter().enumerate() {
            let row = x.frame(t);
            state_frames[l.state_id].extend(row.iter());
            pooled.extend(row.iter());
            let m = StateMeta {
                phone_id: l.phone_id,
                hmm_position: l.hmm_position,
            };
            match meta[l.state_id] {
                None => meta[l.state_id] = Some(m),
                Some(prev) if prev == m => {}
                Some(prev) => {
                    return Err(Error::Mismatch(format!(
                        "utterance {id}: state {} labeled ({}, {}) here but ({}, {}) elsewhere",
                        l.state_id, m.phone_id, m.hmm_position, prev.phone_id, prev.hmm_position
                    )));
                }
            }
        }
    }
    let pooled = Array2::from_shape_vec((total_frames, dim), pooled).expect("counted above");
    let gmean = pooled.mean_axis(Axis(0)).expect("non-empty");
    let gvar = global_variance(pooled.view()).mapv(|v| v.max(config.variance_floor));

    let states: Vec<Result<DiagonalGmm>> = state_frames
        .par_iter()
        .enumerate()
        .map(|(s, flat)| {
            let frames = flat.len() / dim.max(1);
            if frames == 0 {
                warn!("train_aux_model: state {s} has no aligned frames; using the global Gaussian");
                return DiagonalGmm::new(
                    Array1::from_elem(1, 1.0),
                    gmean.clone().insert_axis(Axis(0)),
                    gvar.clone().insert_axis(Axis(0)),
                );
            }
            let data = Array2::from_shape_vec((frames, dim), flat.clone()).expect("flat rows");
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(s as u64);
            if frames < cfg.components {
                warn!(
                    "train_aux_model: state {s} has {frames} frames; reducing components from {} to {frames}",
                    cfg.components
                );
                cfg.components = frames;
            }
            Ok(em_train(data.view(), &cfg)?.gmm)
        })
        .collect();
    let states = states.into_iter().collect::<Result<Vec<_>>>()?;
    let meta = meta
        .into_iter()
        .map(|m| m.unwrap_or(StateMeta { phone_id: 0, hmm_position: 0 }))
        .collect();
    AuxModel::new(states, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    pub fn gmm1(mean: &[f64], var: &[f64]) -> DiagonalGmm {
        DiagonalGmm::new(
            array![1.0],
            Array2::from_shape_vec((1, mean.len()), mean.to_vec()).unwrap(),
            Array2::from_shape_vec((1, var.len()), var.to_vec()).unwrap(),
        )
        .unwrap()
    }

    fn random_gmm(rng: &mut ChaCha8Rng, m: usize, d: usize) -> DiagonalGmm {
        let mut weights = Array1::from_shape_fn(m, |_| rng.random_range(0.2..1.0));
        let sum = weights.sum();
        weights /= sum;
        let means = Array2::from_shape_fn((m, d), |_| rng.random_range(-3.0..3.0));
        let vars = Array2::from_shape_fn((m, d), |_| rng.random_range(0.2..2.0));
        DiagonalGmm::new(weights, means, vars).unwrap()
    }

    #[test]
    fn standard_gaussian_at_origin() {
        let g = gmm1(&[0.0, 0.0], &[1.0, 1.0]);
        let ll = g.log_likelihood(array![0.0, 0.0].view()).unwrap();
        assert!((ll - (-LN_2PI)).abs() < 1e-12, "{ll}");
        assert!((ll - (-(2.0 * std::f64::consts::PI).ln())).abs() < 1e-12);
    }

    #[test]
    fn duplicate_component_halved_weights_same_likelihood() {
        let g = DiagonalGmm::new(array![1.0], array![[1.0, -1.0]], array![[0.5, 2.0]]).unwrap();
        let split = DiagonalGmm::new(
            array![0.5, 0.5],
            array![[1.0, -1.0], [1.0, -1.0]],
            array![[0.5, 2.0], [0.5, 2.0]],
        )
        .unwrap();
        let o = array![0.3, 0.7];
        let a = g.log_likelihood(o.view()).unwrap();
        let b = split.log_likelihood(o.view()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn likelihood_matches_naive_density_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let g = random_gmm(&mut rng, 5, 3);
            let o = Array1::from_shape_fn(3, |_| rng.random_range(-3.0..3.0));
            let naive: f64 = (0..5)
                .map(|m| {
                    let mut dens = g.weights()[m];
                    for i in 0..3 {
                        let diff = o[i] - g.means()[[m, i]];
                        let var = g.vars()[[m, i]];
                        dens *= (-0.5 * diff * diff / var).exp()
                            / (2.0 * std::f64::consts::PI * var).sqrt();
                    }
                    dens
                })
                .sum();
            let ll = g.log_likelihood(o.view()).unwrap();
            assert!((ll - naive.ln()).abs() <= 1e-9 * naive.ln().abs().max(1.0));
        }
    }

    #[test]
    fn likelihood_invariant_under_component_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_gmm(&mut rng, 4, 2);
        let perm = [2usize, 0, 3, 1];
        let weights = Array1::from_iter(perm.iter().map(|&p| g.weights()[p]));
        let means = Array2::from_shape_fn((4, 2), |(m, i)| g.means()[[perm[m], i]]);
        let vars = Array2::from_shape_fn((4, 2), |(m, i)| g.vars()[[perm[m], i]]);
        let h = DiagonalGmm::new(weights, means, vars).unwrap();
        let o = array![0.5, -0.25];
        let a = g.log_likelihood(o.view()).unwrap();
        let b = h.log_likelihood(o.view()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn posteriors_basics() {
        let g = gmm1(&[0.0], &[1.0]);
        assert_eq!(
            g.component_posteriors(array![3.0].view()).unwrap(),
            array![1.0]
        );

        let twin = DiagonalGmm::new(
            array![0.5, 0.5],
            array![[1.0], [1.0]],
            array![[1.0], [1.0]],
        )
        .unwrap();
        let p = twin.component_posteriors(array![0.2].view()).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn posteriors_match_direct_densities_and_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let g = random_gmm(&mut rng, 6, 4);
            let o = Array1::from_shape_fn(4, |_| rng.random_range(-2.0..2.0));
            let dens: Vec<f64> = (0..6)
                .map(|m| {
                    let mut dens = g.weights()[m];
                    for i in 0..4 {
                        let diff = o[i] - g.means()[[m, i]];
                        let var = g.vars()[[m, i]];
                        dens *= (-0.5 * diff * diff / var).exp()
                            / (2.0 * std::f64::consts::PI * var).sqrt();
                    }
                    dens
                })
                .collect();
            let total: f64 = dens.iter().sum();
            let p = g.component_posteriors(o.view()).unwrap();
            assert!((p.sum() - 1.0).abs() < 1e-9);
            for m in 0..6 {
                assert!((p[m] - dens[m] / total).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn posteriors_invariant_under_constant_logdensity_shift() {
        // Adding a constant to every component log density must not move the
        // responsibilities; exercised against a softmax of shifted logliks.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = random_gmm(&mut rng, 5, 3);
        let o = Array1::from_shape_fn(3, |_| rng.random_range(-2.0..2.0));
        let logliks = g.component_logliks(o.view()).unwrap();
        let shifted: Vec<f64> = logliks.iter().map(|l| l + 1234.5).collect();
        let lse = logsumexp(&shifted);
        let manual: Vec<f64> = shifted.iter().map(|l| (l - lse).exp()).collect();
        let p = g.component_posteriors(o.view()).unwrap();
        for m in 0..5 {
            assert!((p[m] - manual[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn em_single_component_closed_form() {
        let data = array![[1.0, 10.0], [3.0, 14.0], [2.0, 12.0]];
        let out = em_train(
            data.view(),
            &EmConfig {
                components: 1,
                iterations: 5,
                variance_floor: 1e-6,
                seed: 0,
            },
        )
        .unwrap();
        let g = out.gmm;
        assert_eq!(g.weights(), array![1.0].view());
        assert!((g.means()[[0, 0]] - 2.0).abs() < 1e-12);
        assert!((g.means()[[0, 1]] - 12.0).abs() < 1e-12);
        // Population variance of {1,3,2} is 2/3.
        assert!((g.vars()[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn em_variance_floor_applies() {
        let data = array![[5.0], [5.0], [5.0]];
        let out = em_train(
            data.view(),
            &EmConfig {
                components: 1,
                iterations: 3,
                variance_floor: 0.25,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(out.gmm.vars()[[0, 0]], 0.25);
    }

    #[test]
    fn em_recovers_two_separated_gaussians() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n_per = 400;
        let mut data = Array2::zeros((2 * n_per, 1));
        for i in 0..n_per {
            let z: f64 = rng.sample(StandardNormal);
            data[[i, 0]] = -5.0 + 0.7 * z;
        }
        for i in 0..n_per {
            let z: f64 = rng.sample(StandardNormal);
            data[[n_per + i, 0]] = 5.0 + 0.7 * z;
        }
        let out = em_train(
            data.view(),
            &EmConfig {
                components: 2,
                iterations: 30,
                variance_floor: 1e-6,
                seed: 1,
            },
        )
        .unwrap();
        let mut means: Vec<f64> = out.gmm.means().column(0).to_vec();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // 3 standard errors of the per-component sample mean.
        let tol = 3.0 * 0.7 / (n_per as f64).sqrt();
        assert!((means[0] + 5.0).abs() < tol, "{means:?}");
        assert!((means[1] - 5.0).abs() < tol, "{means:?}");
    }

    #[test]
    fn em_zero_iterations_returns_initializer() {
        let data = array![[0.0], [1.0], [2.0], [3.0]];
        let cfg = EmConfig {
            components: 2,
            iterations: 0,
            variance_floor: 1e-4,
            seed: 9,
        };
        let out = em_train(data.view(), &cfg).unwrap();
        assert!(out.log_likelihoods.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = seeded_init(data.view(), 2, 1e-4, &mut rng);
        assert_eq!(out.gmm, init);
    }

    #[test]
    fn em_loglik_non_decreasing_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..5 {
            let t = 60 + trial * 17;
            let data = Array2::from_shape_fn((t, 2), |_| rng.random_range(-4.0..4.0));
            let out = em_train(
                data.view(),
                &EmConfig {
                    components: 3,
                    iterations: 15,
                    variance_floor: 1e-6,
                    seed: trial as u64,
                },
            )
            .unwrap();
            for pair in out.log_likelihoods.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-8, "{:?}", out.log_likelihoods);
            }
        }
    }

    #[test]
    fn em_rejects_bad_input() {
        let data = array![[1.0], [2.0]];
        let cfg = EmConfig {
            components: 3,
            iterations: 1,
            variance_floor: 1e-6,
            seed: 0,
        };
        assert!(em_train(data.view(), &cfg).is_err());
        let empty = Array2::<f64>::zeros((0, 1));
        let cfg1 = EmConfig { components: 1, ..cfg };
        assert!(em_train(empty.view(), &cfg1).is_err());
    }

    #[test]
    fn state_loglikes_basics() {
        let g = gmm1(&[0.0], &[1.0]);
        let model = AuxModel::new(
            vec![g.clone(), g.clone()],
            vec![
                StateMeta { phone_id: 1, hmm_position: 0 },
                StateMeta { phone_id: 1, hmm_position: 1 },
            ],
        )
        .unwrap();
        let v = state_loglikes(&model, array![0.5].view()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0], v[1]);
        assert_eq!(v[0], g.log_likelihood(array![0.5].view()).unwrap());
    }

    #[test]
    fn train_aux_model_fits_per_state_means() {
        use crate::featio::{AlignmentSet, AlignmentTrack, FeatureArchive, FeatureMatrix, FrameLabel};
        let mut feats = FeatureArchive::new();
        let mut ali = AlignmentSet::new();
        feats.insert(
            "u1".into(),
            FeatureMatrix::new("u1", array![[0.9], [1.1], [4.8]]).unwrap(),
        );
        ali.insert(
            "u1".into(),
            AlignmentTrack::new(
                "u1",
                vec![
                    FrameLabel { state_id: 0, phone_id: 1, hmm_position: 0 },
                    FrameLabel { state_id: 0, phone_id: 1, hmm_position: 0 },
                    FrameLabel { state_id: 2, phone_id: 2, hmm_position: 1 },
                ],
            )
            .unwrap(),
        );
        feats.insert(
            "u2".into(),
            FeatureMatrix::new("u2", array![[5.2]]).unwrap(),
        );
        ali.insert(
            "u2".into(),
            AlignmentTrack::new(
                "u2",
                vec![FrameLabel { state_id: 2, phone_id: 2, hmm_position: 1 }],
            )
            .unwrap(),
        );
        let cfg = EmConfig {
            components: 1,
            iterations: 4,
            variance_floor: 1e-3,
            seed: 0,
        };
        let model = train_aux_model(&feats, &ali, &cfg).unwrap();
        assert_eq!(model.num_states(), 3);
        assert!((model.state(0).means()[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((model.state(2).means()[[0, 0]] - 5.0).abs() < 1e-12);
        // State 1 never occurs: falls back to the global Gaussian.
        let gmean = (0.9 + 1.1 + 4.8 + 5.2) / 4.0;
        assert!((model.state(1).means()[[0, 0]] - gmean).abs() < 1e-12);
        assert_eq!(model.meta(0), StateMeta { phone_id: 1, hmm_position: 0 });
        assert_eq!(model.meta(2), StateMeta { phone_id: 2, hmm_position: 1 });
    }

    #[test]
    fn state_loglikes_matches_per_state_loop_at_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let states: Vec<DiagonalGmm> = (0..120).map(|_| random_gmm(&mut rng, 2, 3)).collect();
        let meta: Vec<StateMeta> = (0..120)
            .map(|s| StateMeta {
                phone_id: (s / 3 + 1) as u32,
                hmm_position: (s % 3) as u8,
            })
            .collect();
        let model = AuxModel::new(states.clone(), meta).unwrap();
        let o = Array1::from_shape_fn(3, |_| rng.random_range(-2.0..2.0));
        let v = state_loglikes(&model, o.view()).unwrap();
        assert_eq!(v.len(), 120);
        for (s, g) in states.iter().enumerate() {
            assert_eq!(v[s], g.log_likelihood(o.view()).unwrap());
        }
    }
}
