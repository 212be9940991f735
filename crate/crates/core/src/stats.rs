//! Goodness-of-fit p-values used by the oracle suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k>=1} (-1)^{k-1} e^{-2 k² λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov statistic and asymptotic p-value (with the
/// usual small-sample correction of the argument).
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sqrt_n = n.sqrt();
    (d, kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * d))
}

/// Pearson chi-square p-value for observed counts against expected
/// probabilities. Cells with expected count below `min_expected` are pooled
/// in order until each pooled cell reaches it.
pub fn chi_square_test(observed: &[u64], probabilities: &[f64], min_expected: f64) -> (f64, f64) {
    let total: u64 = observed.iter().sum();
    let total = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        obs += o as f64;
        exp += p * total;
        if exp >= min_expected {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => cells.push((obs, exp)),
        }
    }
    if cells.len() < 2 {
        return (0.0, 1.0);
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (cells.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat);
    (stat, p)
}
