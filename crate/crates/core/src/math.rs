//! Small numeric helpers shared across modules.

/// Log of a sum of exponentials, stable against overflow.
///
/// Returns negative infinity for an empty slice or when every term is
/// negative infinity.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Two-term version of [`logsumexp`], used by accumulating recursions.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Complementary interpolation weights for `alpha` in `[0, 1]`.
///
/// The pair always sums to exactly 1.0 and swapping the roles of the two
/// systems together with `alpha -> 1 - alpha` reproduces the exact same
/// pair, which is what makes fusion bit-for-bit symmetric.
pub fn complementary_weights(alpha: f64) -> (f64, f64) {
    let wb = 1.0 - alpha;
    let wa = 1.0 - wb;
    (wa, wb)
}
