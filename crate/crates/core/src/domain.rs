//! Domain types shared by every mechanism: bounds, datasets, probability
//! vectors, budgets and estimates, plus the empirical quantile map and the
//! Hamming distance between datasets.
//!
//! Order statistics are 1-indexed. Out-of-range accessors follow the usual
//! padding conventions (`X_i = a` for `i <= 0`, `X_i = b` for `i >= n + 1`,
//! likewise for `q` and `p`) without storing any padding.

use std::cmp::Ordering;

use crate::error::{Error, Result, SpecViolation};

/// Relative slack used when a product like `n * p` is meant to be an integer.
const RANK_SLACK: f64 = 1e-9;

/// Closed feature space `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    lo: f64,
    hi: f64,
}

impl Bounds {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidBounds { a, b });
        }
        Ok(Self { lo: a, hi: b })
    }

    pub fn lower(&self) -> f64 {
        self.lo
    }

    pub fn upper(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Widen by `margin` on both sides.
    pub fn widen(&self, margin: f64) -> Result<Self> {
        Self::new(self.lo - margin, self.hi + margin)
    }
}

/// A real sample of size `n >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    sorted: bool,
}

impl Dataset {
    /// Builds a dataset from finite values. The sorted flag is computed.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let sorted = values.windows(2).all(|w| w[0] <= w[1]);
        Ok(Self { values, sorted })
    }

    /// Builds a dataset and checks every value lies in `bounds`.
    pub fn within(values: Vec<f64>, bounds: &Bounds) -> Result<Self> {
        let data = Self::new(values)?;
        data.check_within(bounds)?;
        Ok(data)
    }

    pub fn check_within(&self, bounds: &Bounds) -> Result<()> {
        match self.values.iter().position(|&v| !bounds.contains(v)) {
            Some(index) => Err(Error::OutOfBounds {
                index,
                value: self.values[index],
                lo: bounds.lower(),
                hi: bounds.upper(),
            }),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    /// Stable ascending sort.
    pub fn sorted(&self) -> Dataset {
        if self.sorted {
            return self.clone();
        }
        let mut values = self.values.clone();
        values.sort_by(f64::total_cmp);
        Dataset {
            values,
            sorted: true,
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Order statistic `X_(i)` of sorted data, padded with `a`/`b` outside `1..=n`.
    ///
    /// Panics if the dataset is not sorted.
    pub fn order_stat(&self, i: i64, bounds: &Bounds) -> f64 {
        assert!(self.sorted, "order statistics need sorted data");
        let n = self.values.len() as i64;
        if i <= 0 {
            bounds.lower()
        } else if i > n {
            bounds.upper()
        } else {
            self.values[(i - 1) as usize]
        }
    }

    /// Number of values `<= t`. Requires sorted data.
    pub(crate) fn count_le(&self, t: f64) -> usize {
        debug_assert!(self.sorted);
        self.values.partition_point(|&x| x <= t)
    }
}

/// Checks a probability vector against the constraints for sample size `n`:
/// each `p_j` in `(0, 1)`, strictly increasing, and `n (p_{j+1} - p_j) >= 1`.
pub fn validate(p: &[f64], n: usize) -> std::result::Result<(), SpecViolation> {
    validate_shape(p)?;
    for j in 1..p.len() {
        let spacing = n as f64 * (p[j] - p[j - 1]);
        if spacing < 1.0 - RANK_SLACK {
            return Err(SpecViolation::Spacing { j, spacing });
        }
    }
    Ok(())
}

fn validate_shape(p: &[f64]) -> std::result::Result<(), SpecViolation> {
    if p.is_empty() {
        return Err(SpecViolation::Empty);
    }
    for (idx, &value) in p.iter().enumerate() {
        if !(value > 0.0 && value < 1.0) {
            return Err(SpecViolation::OutOfRange { j: idx + 1, value });
        }
        if idx > 0 && value <= p[idx - 1] {
            return Err(SpecViolation::NotIncreasing { j: idx });
        }
    }
    Ok(())
}

/// Strictly increasing probability vector `p` in `(0, 1)^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSpec {
    p: Vec<f64>,
}

impl QuantileSpec {
    /// Checks range and ordering; the spacing constraint depends on `n` and
    /// is checked by [`QuantileSpec::validate_for`].
    pub fn new(p: Vec<f64>) -> Result<Self> {
        validate_shape(&p)?;
        Ok(Self { p })
    }

    /// Evenly spaced `p = (1/(m+1), ..., m/(m+1))`.
    pub fn uniform_grid(m: usize) -> Result<Self> {
        Self::new((1..=m).map(|j| j as f64 / (m + 1) as f64).collect())
    }

    pub fn validate_for(&self, n: usize) -> Result<()> {
        validate(&self.p, n).map_err(Error::from)
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// `p_j` with `p_0 = 0` and `p_{m+1} = 1`.
    pub fn p(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else if j > self.p.len() {
            1.0
        } else {
            self.p[j - 1]
        }
    }

    /// Target rank `ceil(n p_j)`, with `0` for `j = 0` and `n` for `j = m + 1`.
    pub fn rank(&self, j: usize, n: usize) -> usize {
        if j == 0 {
            0
        } else if j > self.p.len() {
            n
        } else {
            ceil_rank(n, self.p[j - 1])
        }
    }
}

/// `ceil(n p)`, treating products within rounding error of an integer as that
/// integer (so `10 * 0.3` gives 3).
pub(crate) fn ceil_rank(n: usize, p: f64) -> usize {
    let x = n as f64 * p;
    let r = x.round();
    if (x - r).abs() <= RANK_SLACK * x.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Privacy budget `epsilon > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        Ok(Self(epsilon))
    }

    pub fn epsilon(&self) -> f64 {
        self.0
    }

    /// Splits the budget evenly over `parts` mechanisms.
    pub fn split(&self, parts: usize) -> Result<Self> {
        Self::new(self.0 / parts.max(1) as f64)
    }
}

/// Non-decreasing vector of `m` quantile estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileEstimate(Vec<f64>);

impl QuantileEstimate {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Precondition("quantile estimate is empty".into()));
        }
        if let Some(index) = q.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if q.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Precondition(
                "quantile estimate is not non-decreasing".into(),
            ));
        }
        Ok(Self(q))
    }

    /// Sorts the values before wrapping them.
    pub fn from_unsorted(mut q: Vec<f64>) -> Result<Self> {
        q.sort_by(f64::total_cmp);
        Self::new(q)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// `q_j` with `q_0 = a` and `q_{m+1} = b`.
    pub fn q(&self, j: usize, bounds: &Bounds) -> f64 {
        if j == 0 {
            bounds.lower()
        } else if j > self.0.len() {
            bounds.upper()
        } else {
            self.0[j - 1]
        }
    }

    pub fn check_within(&self, bounds: &Bounds) -> Result<()> {
        match self.0.iter().position(|&v| !bounds.contains(v)) {
            Some(index) => Err(Error::OutOfBounds {
                index,
                value: self.0[index],
                lo: bounds.lower(),
                hi: bounds.upper(),
            }),
            None => Ok(()),
        }
    }
}

/// Root seed for every random draw in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RngSeed(pub u64);

/// `(X_(ceil(n p_1)), ..., X_(ceil(n p_m)))`.
pub fn empirical_quantiles(data: &Dataset, spec: &QuantileSpec) -> Result<QuantileEstimate> {
    let n = data.len();
    spec.validate_for(n)?;
    let sorted = data.sorted();
    let q = (1..=spec.m())
        .map(|j| sorted.values()[spec.rank(j, n).clamp(1, n) - 1])
        .collect();
    Ok(QuantileEstimate(q))
}

/// Minimal number of substitutions turning `x` into a permutation of `y`:
/// `n` minus the size of the largest common sub-multiset.
pub fn hamming_distance(x: &Dataset, y: &Dataset) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let xs = x.sorted();
    let ys = y.sorted();
    let (xs, ys) = (xs.values(), ys.values());
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < xs.len() && j < ys.len() {
        match xs[i].partial_cmp(&ys[j]).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
        }
    }
    Ok(xs.len() - common)
}
