//! Deterministic per-frame feature transforms: context splicing, orthonormal
//! DCT dimensionality reduction, and feature concatenation.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::featio::FeatureMatrix;

/// Stacks context frames: output frame `t` is the concatenation of
/// `x[t + o]` over `offsets`, clamping out-of-range indices to the first or
/// last frame.
pub fn splice(x: &FeatureMatrix, offsets: &[i32]) -> Result<FeatureMatrix> {
    if offsets.is_empty() {
        return Err(Error::invalid("splice offsets", "must be non-empty"));
    }
    if offsets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("splice offsets", "must be strictly ascending"));
    }
    let t = x.num_frames();
    if t == 0 {
        return Err(Error::invalid(
            "splice input",
            format!("utterance {} has no frames", x.utterance_id()),
        ));
    }
    let d = x.dim();
    let mut out = Array2::zeros((t, d * offsets.len()));
    for ti in 0..t {
        for (oi, &o) in offsets.iter().enumerate() {
            let src = (ti as i64 + o as i64).clamp(0, t as i64 - 1) as usize;
            for i in 0..d {
                out[[ti, oi * d + i]] = x.frames()[[src, i]];
            }
        }
    }
    FeatureMatrix::new(x.utterance_id(), out)
}

/// Orthonormal type-II DCT basis as an `out_dim x d` matrix, so that
/// `y = C x` gives the first `out_dim` coefficients.
fn dct_matrix(d: usize, out_dim: usize) -> Array2<f64> {
    let mut c = Array2::zeros((out_dim, d));
    for k in 0..out_dim {
        let scale = if k == 0 {
            (1.0 / d as f64).sqrt()
        } else {
            (2.0 / d as f64).sqrt()
        };
        for n in 0..d {
            c[[k, n]] =
                scale * (std::f64::consts::PI * (2.0 * n as f64 + 1.0) * k as f64 / (2.0 * d as f64)).cos();
        }
    }
    c
}

/// Replaces each frame with its first `out_dim` orthonormal type-II DCT
/// coefficients. With `out_dim == d` this is an isometry.
pub fn dct_reduce(x: &FeatureMatrix, out_dim: usize) -> Result<FeatureMatrix> {
    let d = x.dim();
    if out_dim == 0 || out_dim > d {
        return Err(Error::invalid(
            "dct output dimension",
            format!("{out_dim} must be in 1..={d}"),
        ));
    }
    let c = dct_matrix(d, out_dim);
    let out = x.frames().dot(&c.t());
    FeatureMatrix::new(x.utterance_id(), out)
}

/// Joins two frame-synchronous matrices side by side. Either operand may
/// have dimension zero.
pub fn concat_features(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<FeatureMatrix> {
    if a.utterance_id() != b.utterance_id() {
        return Err(Error::Mismatch(format!(
            "cannot concatenate utterances {} and {}",
            a.utterance_id(),
            b.utterance_id()
        )));
    }
    if a.num_frames() != b.num_frames() {
        return Err(Error::Mismatch(format!(
            "utterance {}: {} frames vs {} frames",
            a.utterance_id(),
            a.num_frames(),
            b.num_frames()
        )));
    }
    let t = a.num_frames();
    let (da, db) = (a.dim(), b.dim());
    let mut out = Array2::zeros((t, da + db));
    for ti in 0..t {
        for i in 0..da {
            out[[ti, i]] = a.frames()[[ti, i]];
        }
        for i in 0..db {
            out[[ti, da + i]] = b.frames()[[ti, i]];
        }
    }
    FeatureMatrix::new(a.utterance_id(), out)
}

/// Naive O(d) type-II DCT coefficient, used as an independent check.
#[cfg(test)]
fn dct_coefficient(frame: ndarray::ArrayView1<'_, f64>, k: usize) -> f64 {
    let d = frame.len();
    let scale = if k == 0 {
        (1.0 / d as f64).sqrt()
    } else {
        (2.0 / d as f64).sqrt()
    };
    let sum: f64 = frame
        .iter()
        .enumerate()
        .map(|(n, &v)| v * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2.0 * d as f64)).cos())
        .sum();
    scale * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

    fn fm(id: &str, rows: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new(id, rows).unwrap()
    }

    #[test]
    fn splice_zero_offset_is_identity() {
        let x = fm("u", array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(splice(&x, &[0]).unwrap(), x);
    }

    #[test]
    fn splice_clamps_single_frame_to_thirteen_copies() {
        let x = fm("u", array![[7.0, -2.0]]);
        let offsets = [-10, -5, -4, -3, -2, -1, 0, 1, 2, 3, 4, 5, 10];
        let y = splice(&x, &offsets).unwrap();
        assert_eq!(y.dim(), 26);
        for i in 0..13 {
            assert_eq!(y.frames()[[0, 2 * i]], 7.0);
            assert_eq!(y.frames()[[0, 2 * i + 1]], -2.0);
        }
    }

    #[test]
    fn splice_matches_hand_built_context() {
        let x = fm(
            "u",
            array![[0.0, 10.0], [1.0, 11.0], [2.0, 12.0], [3.0, 13.0], [4.0, 14.0]],
        );
        let y = splice(&x, &[-1, 0, 1]).unwrap();
        assert_eq!(y.dim(), 6);
        // Frame 0 clamps its left context to frame 0.
        assert_eq!(
            y.frames().row(0).to_vec(),
            vec![0.0, 10.0, 0.0, 10.0, 1.0, 11.0]
        );
        assert_eq!(
            y.frames().row(2).to_vec(),
            vec![1.0, 11.0, 2.0, 12.0, 3.0, 13.0]
        );
        // Frame 4 clamps its right context to frame 4.
        assert_eq!(
            y.frames().row(4).to_vec(),
            vec![3.0, 13.0, 4.0, 14.0, 4.0, 14.0]
        );
    }

    #[test]
    fn splice_rejects_unsorted_offsets_and_empty_input() {
        let x = fm("u", array![[1.0]]);
        assert!(splice(&x, &[]).is_err());
        assert!(splice(&x, &[0, 0]).is_err());
        assert!(splice(&x, &[1, -1]).is_err());
        let empty = fm("u", Array2::zeros((0, 3)));
        assert!(splice(&empty, &[0]).is_err());
    }

    #[test]
    fn dct_constant_vector_keeps_only_dc() {
        let x = fm("u", Array2::from_elem((1, 9), 3.0));
        let y = dct_reduce(&x, 1).unwrap();
        assert!((y.frames()[[0, 0]] - 3.0 * 9.0_f64.sqrt()).abs() < 1e-12);
        let full = dct_reduce(&x, 9).unwrap();
        for k in 1..9 {
            assert!(full.frames()[[0, k]].abs() < 1e-12);
        }
    }

    #[test]
    fn full_dct_preserves_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = fm(
            "u",
            Array2::from_shape_fn((6, 17), |_| rng.random_range(-3.0..3.0)),
        );
        let y = dct_reduce(&x, 17).unwrap();
        for t in 0..6 {
            let nx: f64 = x.frames().row(t).iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.frames().row(t).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((nx - ny).abs() < 1e-9, "frame {t}: {nx} vs {ny}");
        }
    }

    #[test]
    fn dct_matches_naive_cosine_sum_at_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = fm(
            "u",
            Array2::from_shape_fn((2, 473), |_| rng.random_range(-1.0..1.0)),
        );
        let y = dct_reduce(&x, 258).unwrap();
        assert_eq!(y.dim(), 258);
        for t in 0..2 {
            for k in [0, 1, 7, 100, 257] {
                let direct = dct_coefficient(x.frames().row(t), k);
                assert!(
                    (y.frames()[[t, k]] - direct).abs() < 1e-9,
                    "t={t} k={k}"
                );
            }
        }
    }

    #[test]
    fn dct_rejects_expanding_dimension() {
        let x = fm("u", array![[1.0, 2.0]]);
        assert!(dct_reduce(&x, 3).is_err());
        assert!(dct_reduce(&x, 0).is_err());
    }

    #[test]
    fn concat_joins_columns() {
        let a = fm("u", array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let b = fm(
            "u",
            array![
                [10.0, 11.0, 12.0, 13.0],
                [20.0, 21.0, 22.0, 23.0],
                [30.0, 31.0, 32.0, 33.0]
            ],
        );
        let y = concat_features(&a, &b).unwrap();
        assert_eq!(y.dim(), 6);
        assert_eq!(y.frames().row(1).to_vec(), vec![3.0, 4.0, 20.0, 21.0, 22.0, 23.0]);
    }

    #[test]
    fn concat_with_zero_dim_operand_is_identity() {
        let a = fm("u", array![[1.0], [2.0]]);
        let empty = fm("u", Array2::zeros((2, 0)));
        assert_eq!(concat_features(&a, &empty).unwrap(), a);
        assert_eq!(concat_features(&empty, &a).unwrap(), a);
    }

    #[test]
    fn concat_rejects_mismatches() {
        let a = fm("u", array![[1.0], [2.0]]);
        let b = fm("v", array![[1.0], [2.0]]);
        assert!(concat_features(&a, &b).is_err());
        let short = fm("u", array![[1.0]]);
        assert!(concat_features(&a, &short).is_err());
    }
}
