//! Deterministic generators and brute-force reference implementations
//! shared by unit tests and the acceptance suite. Not part of the stable
//! API.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::featio::{Lattice, LatticeArc};
use crate::gmm::DiagonalGmm;
use crate::math::logsumexp;

/// Knobs for [`random_lattice`]. Sizes stay small so exhaustive path
/// enumeration remains cheap.
#[derive(Debug, Clone)]
pub struct LatticeShape {
    pub max_mid_layers: usize,
    pub max_width: usize,
    pub num_symbols: u32,
    /// Probability that an arc carries the null symbol (id 0).
    pub eps_probability: f64,
    /// Allow arcs that jump over a layer, creating paths of unequal length.
    pub allow_skips: bool,
}

impl Default for LatticeShape {
    fn default() -> Self {
        LatticeShape {
            max_mid_layers: 3,
            max_width: 2,
            num_symbols: 4,
            eps_probability: 0.0,
            allow_skips: true,
        }
    }
}

/// Builds a random valid lattice: layered nodes with strictly increasing
/// times, every node on some start-to-end path, arc spans matching node
/// times.
pub fn random_lattice(rng: &mut ChaCha8Rng, utterance_id: &str, shape: &LatticeShape) -> Lattice {
    let mid_layers = rng.random_range(1..=shape.max_mid_layers.max(1));
    // layers[0] = {start}, layers[last] = {end}.
    let mut layers: Vec<Vec<usize>> = Vec::with_capacity(mid_layers + 2);
    let mut times: Vec<usize> = Vec::with_capacity(mid_layers + 2);
    let mut next_node = 0usize;
    let mut t = 0usize;
    for li in 0..mid_layers + 2 {
        let width = if li == 0 || li == mid_layers + 1 {
            1
        } else {
            rng.random_range(1..=shape.max_width.max(1))
        };
        layers.push((0..width).map(|_| {
            let id = next_node;
            next_node += 1;
            id
        }).collect());
        times.push(t);
        t += rng.random_range(1..=3);
    }
    let num_nodes = next_node;
    let start = layers[0][0];
    let end = layers[mid_layers + 1][0];

    let symbol = |rng: &mut ChaCha8Rng| -> u32 {
        if shape.eps_probability > 0.0 && rng.random_range(0.0..1.0) < shape.eps_probability {
            0
        } else {
            rng.random_range(1..=shape.num_symbols.max(1))
        }
    };
    let mut arcs: Vec<LatticeArc> = Vec::new();
    let push = |rng: &mut ChaCha8Rng, arcs: &mut Vec<LatticeArc>, from_layer: usize, to_layer: usize, from: usize, to: usize| {
        let sym = symbol(rng);
        arcs.push(LatticeArc {
            from,
            to,
            symbol_id: sym,
            start_frame: times[from_layer],
            end_frame: times[to_layer],
            acoustic_score: rng.random_range(-6.0..-0.5),
            lm_score: rng.random_range(-2.0..-0.05),
            posterior: None,
        });
    };

    for li in 0..mid_layers + 1 {
        // Every node of the next layer gets a predecessor, every node of
        // this layer a successor; then a few extras.
        for &to in &layers[li + 1] {
            let from = layers[li][rng.random_range(0..layers[li].len())];
            push(rng, &mut arcs, li, li + 1, from, to);
        }
        for &from in &layers[li] {
            if !arcs.iter().any(|a| a.from == from) || rng.random_range(0.0..1.0) < 0.3 {
                let to = layers[li + 1][rng.random_range(0..layers[li + 1].len())];
                if !arcs.iter().any(|a| a.from == from && a.to == to) {
                    push(rng, &mut arcs, li, li + 1, from, to);
                }
            }
        }
        if shape.allow_skips && li + 2 < mid_layers + 2 && rng.random_range(0.0..1.0) < 0.3 {
            let from = layers[li][rng.random_range(0..layers[li].len())];
            let to = layers[li + 2][rng.random_range(0..layers[li + 2].len())];
            push(rng, &mut arcs, li, li + 2, from, to);
        }
    }

    Lattice::new(utterance_id, num_nodes, start, end, arcs).expect("generated lattice is valid")
}

/// Exhaustive path-enumeration reference for arc posteriors.
pub struct PathOracle {
    /// Posterior per arc, aligned with `lat.arcs()`.
    pub posteriors: Vec<f64>,
    /// Log of the total path mass.
    pub total_log: f64,
    pub num_paths: usize,
}

/// Computes arc posteriors by enumerating every start-to-end path and
/// summing path scores per arc — independent of the forward-backward code.
pub fn oracle_arc_posteriors(lat: &Lattice, lambda: f64) -> PathOracle {
    let arcs = lat.arcs();
    let mut out_arcs: Vec<Vec<usize>> = vec![Vec::new(); lat.num_nodes()];
    for (i, a) in arcs.iter().enumerate() {
        out_arcs[a.from].push(i);
    }
    let mut path_scores: Vec<f64> = Vec::new();
    let mut per_arc: Vec<Vec<f64>> = vec![Vec::new(); arcs.len()];
    let mut stack: Vec<usize> = Vec::new();

    fn walk(
        node: usize,
        end: usize,
        lambda: f64,
        arcs: &[LatticeArc],
        out_arcs: &[Vec<usize>],
        stack: &mut Vec<usize>,
        path_scores: &mut Vec<f64>,
        per_arc: &mut [Vec<f64>],
    ) {
        if node == end {
            let score: f64 = stack
                .iter()
                .map(|&i| arcs[i].acoustic_score / lambda + arcs[i].lm_score)
                .sum();
            path_scores.push(score);
            for &i in stack.iter() {
                per_arc[i].push(score);
            }
            return;
        }
        for &i in &out_arcs[node] {
            stack.push(i);
            walk(arcs[i].to, end, lambda, arcs, out_arcs, stack, path_scores, per_arc);
            stack.pop();
        }
    }
    walk(
        lat.start(),
        lat.end(),
        lambda,
        arcs,
        &out_arcs,
        &mut stack,
        &mut path_scores,
        &mut per_arc,
    );

    let total_log = logsumexp(&path_scores);
    let posteriors = per_arc
        .iter()
        .map(|scores| {
            if scores.is_empty() {
                0.0
            } else {
                (logsumexp(scores) - total_log).exp()
            }
        })
        .collect();
    PathOracle {
        posteriors,
        total_log,
        num_paths: path_scores.len(),
    }
}

/// Random diagonal GMM with well-conditioned parameters.
pub fn random_gmm(rng: &mut ChaCha8Rng, m: usize, d: usize) -> DiagonalGmm {
    let mut weights = Array1::from_shape_fn(m, |_| rng.random_range(0.2..1.0));
    let total = weights.sum();
    weights /= total;
    let means = Array2::from_shape_fn((m, d), |_| rng.random_range(-5.0..5.0));
    let vars = Array2::from_shape_fn((m, d), |_| rng.random_range(0.3..2.0));
    DiagonalGmm::new(weights, means, vars).expect("generated gmm is valid")
}

/// Samples `t` frames from the mixture.
pub fn sample_frames(rng: &mut ChaCha8Rng, gmm: &DiagonalGmm, t: usize) -> Array2<f64> {
    let d = gmm.dim();
    let mut out = Array2::zeros((t, d));
    for ti in 0..t {
        let r: f64 = rng.random();
        let mut pick = gmm.num_components() - 1;
        let mut acc = 0.0;
        for m in 0..gmm.num_components() {
            acc += gmm.weights()[m];
            if r < acc {
                pick = m;
                break;
            }
        }
        for i in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            out[[ti, i]] = gmm.means()[[pick, i]] + gmm.vars()[[pick, i]].sqrt() * z;
        }
    }
    out
}
