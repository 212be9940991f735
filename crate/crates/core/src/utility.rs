//! Utility functions over (dataset, candidate quantile vector) pairs.
//!
//! Bins are `(q_{j-1}, q_j]` with `q_0 = a` and `q_{m+1} = b`; the first bin
//! also holds points sitting exactly on `a`, so the `m + 1` bins always
//! partition the data. That is the convention under which the block sampler
//! and these utilities describe the same density.

use crate::domain::{empirical_quantiles, Bounds, Dataset, QuantileEstimate, QuantileSpec};
use crate::error::{Error, Result};

/// A utility score, always `<= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct UtilityValue(f64);

impl UtilityValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Number of points in each of the `m + 1` bins. `sorted` must be sorted.
pub(crate) fn bin_counts(sorted: &Dataset, q: &[f64]) -> Vec<usize> {
    let n = sorted.len();
    let mut counts = Vec::with_capacity(q.len() + 1);
    let mut below = 0;
    for &qj in q {
        let le = sorted.count_le(qj);
        counts.push(le - below);
        below = le;
    }
    counts.push(n - below);
    counts
}

/// `-(1/2) sum_j |delta_JE(j)|` from precomputed bin counts.
pub(crate) fn je_from_counts(counts: &[usize], spec: &QuantileSpec, n: usize) -> f64 {
    let total: f64 = counts
        .iter()
        .enumerate()
        .map(|(idx, &c)| {
            let j = idx + 1;
            (n as f64 * (spec.p(j) - spec.p(j - 1)) - c as f64).abs()
        })
        .sum();
    -0.5 * total
}

/// Count-based inverse sensitivity from bin counts.
pub(crate) fn is_tilde_from_counts(counts: &[usize], spec: &QuantileSpec, n: usize) -> f64 {
    let m = spec.m();
    let mut cost = 0.0;
    for (idx, &c) in counts.iter().enumerate() {
        let j = idx + 1;
        let target = spec.rank(j, n) as i64 - spec.rank(j - 1, n) as i64;
        let delta = c as i64 - target;
        cost += 0.5 * delta.unsigned_abs() as f64;
        if j <= m && delta >= 0 {
            cost += 1.0;
        }
    }
    -cost
}

fn check_shape(q: &QuantileEstimate, spec: &QuantileSpec) -> Result<()> {
    if q.m() != spec.m() {
        return Err(Error::LengthMismatch {
            left: q.m(),
            right: spec.m(),
        });
    }
    Ok(())
}

/// JointExp utility: half the total absolute deviation between bin counts
/// and their expected sizes `n (p_j - p_{j-1})`, negated.
pub fn u_je(data: &Dataset, q: &QuantileEstimate, spec: &QuantileSpec) -> Result<UtilityValue> {
    check_shape(q, spec)?;
    let sorted = data.sorted();
    let counts = bin_counts(&sorted, q.values());
    Ok(UtilityValue(je_from_counts(&counts, spec, data.len())))
}

/// Inverse sensitivity in the form that agrees with the exact one almost
/// everywhere: deviations are measured against the integer targets
/// `ceil(n p_j) - ceil(n p_{j-1})`, and every bin `j <= m` that is not in
/// deficit pays one extra substitution.
pub fn u_is_tilde(
    data: &Dataset,
    q: &QuantileEstimate,
    spec: &QuantileSpec,
) -> Result<UtilityValue> {
    check_shape(q, spec)?;
    let sorted = data.sorted();
    let counts = bin_counts(&sorted, q.values());
    Ok(UtilityValue(is_tilde_from_counts(
        &counts,
        spec,
        data.len(),
    )))
}

/// Closed-form inverse sensitivity for collision-free `q` disjoint from the
/// data. The first bin is the closed interval `[a, q_1]`.
///
/// Counts are taken by direct scans rather than through [`bin_counts`] so
/// that this stays an independent route for cross-checks.
pub fn u_is_exact(
    data: &Dataset,
    q: &QuantileEstimate,
    spec: &QuantileSpec,
) -> Result<UtilityValue> {
    check_shape(q, spec)?;
    let qs = q.values();
    if qs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("q must be strictly increasing".into()));
    }
    if let Some(x) = data.values().iter().find(|x| qs.contains(x)) {
        return Err(Error::Precondition(format!(
            "q collides with data value {x}"
        )));
    }
    let n = data.len();
    let m = spec.m();
    let xs = data.values();
    let target = |j: usize| spec.rank(j, n) as i64 - spec.rank(j - 1, n) as i64;

    let closed_first = xs.iter().filter(|&&x| x <= qs[0]).count() as i64 - target(1);
    let mut cost = 0.5 * closed_first.unsigned_abs() as f64;
    if closed_first >= 0 {
        cost += 1.0;
    }
    for j in 2..=m + 1 {
        let lo = qs[j - 2];
        let count = if j <= m {
            let hi = qs[j - 1];
            xs.iter().filter(|&&x| lo < x && x <= hi).count()
        } else {
            xs.iter().filter(|&&x| lo < x).count()
        };
        let delta = count as i64 - target(j);
        cost += 0.5 * delta.unsigned_abs() as f64;
        if j <= m && delta >= 0 {
            cost += 1.0;
        }
    }
    Ok(UtilityValue(-cost))
}

/// Exhaustive search for the smallest number of substitutions that makes
/// the empirical quantiles of the data equal `q` exactly.
///
/// Replacement values range over one representative of every order class
/// relative to `q`: each `q_j` itself and one point inside every non-empty
/// open interval cut out by `{a} ∪ q ∪ {b}`. Whether `Y_(k) = q_j` depends
/// only on how many points of `Y` fall below, on, or above each `q_j`, so
/// these representatives cover every reachable outcome.
pub fn brute_force_inverse_sensitivity(
    data: &Dataset,
    q: &QuantileEstimate,
    spec: &QuantileSpec,
    bounds: &Bounds,
) -> Result<usize> {
    check_shape(q, spec)?;
    spec.validate_for(data.len())?;
    q.check_within(bounds)?;
    let sorted = data.sorted();
    let xs = sorted.values();
    let n = xs.len();

    let mut marks: Vec<f64> = Vec::with_capacity(q.m() + 2);
    marks.push(bounds.lower());
    marks.extend_from_slice(q.values());
    marks.push(bounds.upper());
    marks.dedup();
    let mut candidates: Vec<f64> = q.values().to_vec();
    candidates.dedup();
    for w in marks.windows(2) {
        if w[0] < w[1] {
            candidates.push(0.5 * (w[0] + w[1]));
        }
    }

    let hits = |y: &[f64]| -> bool {
        let ds = Dataset::new(y.to_vec()).expect("finite values");
        empirical_quantiles(&ds, spec).is_ok_and(|e| e.values() == q.values())
    };

    for k in 0..=n {
        let mut found = false;
        for_each_removal(xs, k, &mut |kept: &[f64]| {
            for_each_multiset(candidates.len(), k, &mut |picks: &[usize]| {
                let mut y = kept.to_vec();
                y.extend(picks.iter().map(|&c| candidates[c]));
                found = hits(&y);
                found
            })
        });
        if found {
            return Ok(k);
        }
    }
    Err(Error::Infeasible)
}

/// Calls `f` with the sorted values left after removing each distinct
/// sub-multiset of size `k`. Stops early once `f` returns true.
fn for_each_removal(xs: &[f64], k: usize, f: &mut dyn FnMut(&[f64]) -> bool) -> bool {
    fn rec(
        xs: &[f64],
        start: usize,
        left: usize,
        removed: &mut Vec<usize>,
        f: &mut dyn FnMut(&[f64]) -> bool,
    ) -> bool {
        if left == 0 {
            let kept: Vec<f64> = xs
                .iter()
                .enumerate()
                .filter(|(i, _)| !removed.contains(i))
                .map(|(_, &v)| v)
                .collect();
            return f(&kept);
        }
        let mut i = start;
        while i + left <= xs.len() {
            if i > start && xs[i] == xs[i - 1] {
                i += 1;
                continue;
            }
            removed.push(i);
            if rec(xs, i + 1, left - 1, removed, f) {
                return true;
            }
            removed.pop();
            i += 1;
        }
        false
    }
    rec(xs, 0, k, &mut Vec::with_capacity(k), f)
}

/// Calls `f` with every non-decreasing index tuple of length `k` over
/// `0..choices`. Stops early once `f` returns true.
fn for_each_multiset(choices: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if k == 0 {
        return f(&[]);
    }
    if choices == 0 {
        return false;
    }
    let mut idx = vec![0usize; k];
    loop {
        if f(&idx) {
            return true;
        }
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == choices - 1 {
            pos -= 1;
        }
        if pos == 0 {
            return false;
        }
        let next = idx[pos - 1] + 1;
        for slot in idx.iter_mut().skip(pos - 1) {
            *slot = next;
        }
    }
}
