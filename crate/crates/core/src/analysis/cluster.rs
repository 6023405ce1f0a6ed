//! Davies-Bouldin cluster validity index.

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView2};

use crate::error::{Error, Result};

/// DB = (1/K) sum_k max_{j != k} (sigma_k + sigma_j) / rho_kj, where
/// sigma_k is the standard deviation of the members' Euclidean distances
/// to their centroid and rho is the distance between centroids. Lower is
/// better; coincident centroids make the ratio undefined and are rejected.
pub fn db_index(vectors: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if vectors.nrows() != labels.len() {
        return Err(Error::Mismatch(format!(
            "{} vectors but {} labels",
            vectors.nrows(),
            labels.len()
        )));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(Error::invalid("clustering", "needs at least two clusters"));
    }

    let d = vectors.ncols();
    let mut centroids: Vec<Array1<f64>> = Vec::with_capacity(members.len());
    let mut scatters: Vec<f64> = Vec::with_capacity(members.len());
    for rows in members.values() {
        let mut c = Array1::zeros(d);
        for &r in rows {
            c += &vectors.row(r);
        }
        c /= rows.len() as f64;
        let dists: Vec<f64> = rows
            .iter()
            .map(|&r| {
                (&vectors.row(r) - &c)
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let var = dists.iter().map(|&r| (r - mean) * (r - mean)).sum::<f64>() / dists.len() as f64;
        centroids.push(c);
        scatters.push(var.sqrt());
    }

    let k = centroids.len();
    let mut total = 0.0;
    for a in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for b in 0..k {
            if a == b {
                continue;
            }
            let rho = (&centroids[a] - &centroids[b])
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if rho == 0.0 {
                return Err(Error::Numeric(
                    "two clusters share a centroid; the index is undefined".into(),
                ));
            }
            worst = worst.max((scatters[a] + scatters[b]) / rho);
        }
        total += worst;
    }
    Ok(total / k as f64)
}
