//! Confusion-network construction from arc posteriors, and consensus
//! decoding.
//!
//! Construction: null-symbol arcs and arcs with exactly zero posterior are
//! dropped; same-symbol arcs are merged when their spans overlap; the
//! resulting clusters are then merged greedily — overlapping pairs first,
//! highest combined posterior first — as long as no lattice precedence
//! (reachability) relation would be violated. Because the lattice ties node
//! times to arc spans, arcs inside one cluster are always pairwise
//! incomparable, so a cluster's posterior mass never exceeds the total path
//! mass of 1; the null symbol absorbs the remainder in each bin.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::featio::Lattice;

use super::posterior::arc_posteriors;

/// Time-ordered bins of `symbol_id -> posterior`; every bin sums to 1
/// within 1e-6, with id 0 (the null symbol) holding the residual mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionNetwork {
    utterance_id: String,
    bins: Vec<BTreeMap<u32, f64>>,
}

impl ConfusionNetwork {
    pub fn new(utterance_id: impl Into<String>, bins: Vec<BTreeMap<u32, f64>>) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if utterance_id.is_empty() || utterance_id.contains(char::is_whitespace) {
            return Err(Error::invalid("utterance id", "must be a non-empty single token"));
        }
        for (k, bin) in bins.iter().enumerate() {
            if bin.is_empty() {
                return Err(Error::invalid(
                    "confusion network",
                    format!("utterance {utterance_id}: bin {k} is empty"),
                ));
            }
            let mut sum = 0.0;
            for (&sym, &p) in bin {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::invalid(
                        "confusion network",
                        format!("utterance {utterance_id}: bin {k} symbol {sym} has posterior {p}"),
                    ));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(
                    "confusion network",
                    format!("utterance {utterance_id}: bin {k} sums to {sum}"),
                ));
            }
        }
        Ok(ConfusionNetwork { utterance_id, bins })
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn bins(&self) -> &[BTreeMap<u32, f64>] {
        &self.bins
    }

    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }
}

/// A group of mutually compatible arcs destined for one bin.
struct Cluster {
    arc_idxs: Vec<usize>,
    start: usize,
    end: usize,
    total: f64,
    created: usize,
}

impl Cluster {
    fn overlaps(&self, other: &Cluster) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Pairwise node reachability via topological propagation.
fn reachability(lat: &Lattice) -> Result<Vec<Vec<bool>>> {
    let order = lat.topo_order()?;
    let n = lat.num_nodes();
    let mut out_nodes: Vec<Vec<usize>> = vec![Vec::new(); n];
    for a in lat.arcs() {
        out_nodes[a.from].push(a.to);
    }
    let mut reach = vec![vec![false; n]; n];
    for &u in order.iter().rev() {
        for i in 0..out_nodes[u].len() {
            let v = out_nodes[u][i];
            reach[u][v] = true;
            for w in 0..n {
                if reach[v][w] {
                    reach[u][w] = true;
                }
            }
        }
    }
    Ok(reach)
}

fn transitive_closure(prec: &mut [Vec<bool>], alive: &[bool]) {
    let n = prec.len();
    for k in 0..n {
        if !alive[k] {
            continue;
        }
        for i in 0..n {
            if !alive[i] || !prec[i][k] {
                continue;
            }
            for j in 0..n {
                if alive[j] && prec[k][j] {
                    prec[i][j] = true;
                }
            }
        }
    }
}

/// Groups word arcs into clusters; exposed to tests so bin masses can be
/// checked against independently computed posteriors.
fn cluster_arcs(lat: &Lattice, posteriors: &[f64]) -> Result<Vec<Cluster>> {
    let arcs = lat.arcs();
    let reach = reachability(lat)?;
    let precedes = |a: usize, b: usize| -> bool {
        arcs[a].to == arcs[b].from || reach[arcs[a].to][arcs[b].from]
    };

    let mut by_symbol: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, a) in arcs.iter().enumerate() {
        if a.symbol_id != 0 && posteriors[i] > 0.0 {
            by_symbol.entry(a.symbol_id).or_default().push(i);
        }
    }

    // Intra-word pass: sweep same-symbol arcs in span order, merging on
    // overlap unless the arcs are sequentially ordered in the lattice.
    let mut clusters: Vec<Cluster> = Vec::new();
    for idxs in by_symbol.into_values() {
        let mut idxs = idxs;
        idxs.sort_by_key(|&i| (arcs[i].start_frame, arcs[i].end_frame, i));
        let mut current: Option<Cluster> = None;
        for i in idxs {
            let fits = current.as_ref().is_some_and(|c| {
                arcs[i].start_frame < c.end
                    && c.arc_idxs.iter().all(|&m| !precedes(m, i) && !precedes(i, m))
            });
            if fits {
                let c = current.as_mut().expect("checked above");
                c.arc_idxs.push(i);
                c.end = c.end.max(arcs[i].end_frame);
                c.total += posteriors[i];
            } else {
                if let Some(c) = current.take() {
                    clusters.push(c);
                }
                current = Some(Cluster {
                    arc_idxs: vec![i],
                    start: arcs[i].start_frame,
                    end: arcs[i].end_frame,
                    total: posteriors[i],
                    created: 0,
                });
            }
        }
        if let Some(c) = current.take() {
            clusters.push(c);
        }
    }
    for (k, c) in clusters.iter_mut().enumerate() {
        c.created = k;
    }

    // Cluster-level precedence, kept transitively closed while merging.
    let nc = clusters.len();
    let mut prec = vec![vec![false; nc]; nc];
    for i in 0..nc {
        for j in 0..nc {
            if i != j {
                prec[i][j] = clusters[i]
                    .arc_idxs
                    .iter()
                    .any(|&a| clusters[j].arc_idxs.iter().any(|&b| precedes(a, b)));
            }
        }
    }
    let mut alive = vec![true; nc];
    transitive_closure(&mut prec, &alive);

    // Inter-word pass: repeatedly merge the compatible overlapping pair
    // with the largest combined mass.
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..nc {
            if !alive[i] {
                continue;
            }
            for j in i + 1..nc {
                if !alive[j] || !clusters[i].overlaps(&clusters[j]) || prec[i][j] || prec[j][i] {
                    continue;
                }
                let mass = clusters[i].total + clusters[j].total;
                if best.map_or(true, |(m, _, _)| mass > m) {
                    best = Some((mass, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let absorbed = std::mem::take(&mut clusters[j].arc_idxs);
        clusters[i].arc_idxs.extend(absorbed);
        clusters[i].start = clusters[i].start.min(clusters[j].start);
        clusters[i].end = clusters[i].end.max(clusters[j].end);
        clusters[i].total += clusters[j].total;
        alive[j] = false;
        for k in 0..nc {
            if prec[j][k] {
                prec[i][k] = true;
            }
            if prec[k][j] {
                prec[k][i] = true;
            }
        }
        transitive_closure(&mut prec, &alive);
    }

    let mut kept: Vec<Cluster> = clusters
        .into_iter()
        .zip(alive)
        .filter_map(|(c, keep)| keep.then_some(c))
        .collect();
    kept.sort_by(|a, b| {
        let mid = |c: &Cluster| {
            c.arc_idxs
                .iter()
                .map(|&i| (arcs[i].start_frame + arcs[i].end_frame) as f64 / 2.0)
                .sum::<f64>()
                / c.arc_idxs.len() as f64
        };
        mid(a)
            .total_cmp(&mid(b))
            .then(a.start.cmp(&b.start))
            .then_with(|| {
                let min_sym = |c: &Cluster| c.arc_idxs.iter().map(|&i| arcs[i].symbol_id).min();
                min_sym(a).cmp(&min_sym(b))
            })
            .then(a.created.cmp(&b.created))
    });
    Ok(kept)
}

/// Builds the confusion network. Stored arc posteriors are used when every
/// arc carries one (as after lattice fusion); otherwise posteriors are
/// computed with `lambda`.
pub fn build_confusion_network(lat: &Lattice, lambda: f64) -> Result<ConfusionNetwork> {
    let posteriors: Vec<f64> = match lat.arcs().iter().map(|a| a.posterior).collect::<Option<Vec<_>>>() {
        Some(stored) => stored,
        None => arc_posteriors(lat, lambda)?,
    };
    let clusters = cluster_arcs(lat, &posteriors)?;

    let mut bins = Vec::with_capacity(clusters.len());
    for c in &clusters {
        let mut bin: BTreeMap<u32, f64> = BTreeMap::new();
        for &i in &c.arc_idxs {
            *bin.entry(lat.arcs()[i].symbol_id).or_insert(0.0) += posteriors[i];
        }
        let total: f64 = bin.values().sum();
        if total > 1.0 + 1e-6 {
            return Err(Error::Numeric(format!(
                "lattice {}: bin mass {total} exceeds 1",
                lat.utterance_id()
            )));
        }
        let residual = 1.0 - total;
        if residual > 1e-12 {
            bin.insert(0, residual);
        }
        bins.push(bin);
    }
    ConfusionNetwork::new(lat.utterance_id(), bins)
}

/// Per bin, the highest-posterior symbol; ties go to the lower symbol id
/// and the null symbol (id 0) is never emitted.
pub fn consensus_hypothesis(cn: &ConfusionNetwork) -> Vec<u32> {
    let mut out = Vec::new();
    for bin in cn.bins() {
        let mut best: Option<(u32, f64)> = None;
        for (&sym, &p) in bin {
            if best.map_or(true, |(_, bp)| p > bp) {
                best = Some((sym, p));
            }
        }
        if let Some((sym, _)) = best {
            if sym != 0 {
                out.push(sym);
            }
        }
    }
    out
}
