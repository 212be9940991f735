//! Natural-log arithmetic helpers.

use rand::Rng;

/// `log(e^a + e^b)`, exact for infinite arguments.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log sum_i e^{v_i}` with a max shift. Empty or all `-inf` gives `-inf`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log k!`.
pub(crate) fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Draws an index with probability proportional to `exp(log_weights[i])`
/// by inverse CDF on max-shifted weights. Returns `None` if every weight is
/// `-inf`. Never returns an index whose weight is `-inf`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in log_weights.iter().enumerate() {
        if *w == f64::NEG_INFINITY {
            continue;
        }
        acc += (w - max).exp();
        last = Some(i);
        if target < acc {
            return last;
        }
    }
    last
}
