//! Exact sampling from the exponential mechanism over sorted quantile
//! vectors.
//!
//! The output density of JointExp and of the inverse-sensitivity mechanism
//! is constant on blocks `[X_{i_1}, X_{i_1+1}) x ... x [X_{i_m}, X_{i_m+1})`
//! intersected with the sorted cone, one block per non-decreasing gap tuple
//! `i`. A block's mass factorizes as
//!
//! ```text
//! P(i) ∝ (1 / γ(i)) · Π_{j=1}^{m+1} φ(i_{j-1}, i_j, j) · Π_{j=1}^{m} τ(i_j)
//! ```
//!
//! with `i_0 = 0`, `i_{m+1} = n`, `τ` the gap lengths and `γ` the product of
//! factorials of repeated gap multiplicities (the sorted-cone volume
//! correction). Sampling draws a block, then sorts independent uniforms
//! inside its gaps.
//!
//! Everything is kept in natural-log space: a collided gap has `log τ = -inf`.

mod dp;
pub mod logspace;

use rand::Rng;

pub use dp::BlockSampler;
pub use logspace::{log_add_exp, logsumexp, sample_log_categorical};

use crate::domain::{Bounds, Dataset, PrivacyBudget, QuantileEstimate, QuantileSpec};
use crate::error::{Error, Result};
use crate::utility::{u_is_tilde, u_je};

/// Largest `(n + 1)^m` the enumerating sampler accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Which utility drives the exponential mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MechanismFlavor {
    JointExp,
    InverseSensitivity,
}

impl MechanismFlavor {
    pub fn name(self) -> &'static str {
        match self {
            MechanismFlavor::JointExp => "joint_exp",
            MechanismFlavor::InverseSensitivity => "inverse_sensitivity",
        }
    }
}

/// Non-decreasing tuple of gap indices in `0..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockIndex(Vec<usize>);

impl BlockIndex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Precondition("block index is empty".into()));
        }
        if indices.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Precondition(
                "block index must be non-decreasing".into(),
            ));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    fn check_gaps(&self, n: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last > n => Err(Error::Precondition(format!(
                "gap index {last} exceeds n = {n}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Every block with its unnormalized log weight, plus the log normalizer.
#[derive(Debug, Clone)]
pub struct BlockDistribution {
    pub log_weights: Vec<(BlockIndex, f64)>,
    pub log_normalizer: f64,
}

impl BlockDistribution {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Normalized probabilities in enumeration order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights
            .iter()
            .map(|(_, w)| (w - self.log_normalizer).exp())
            .collect()
    }
}

/// Gap length `τ(i) = X_{i+1} - X_i` on sorted data, with `X_0 = a` and
/// `X_{n+1} = b`.
pub fn tau(i: usize, data: &Dataset, bounds: &Bounds) -> f64 {
    let i = i as i64;
    data.order_stat(i + 1, bounds) - data.order_stat(i, bounds)
}

/// `γ(i)`: product of the factorials of the multiplicities in `i`.
pub fn gamma(block: &BlockIndex) -> u64 {
    let mut result = 1u64;
    let mut run = 0u64;
    for (k, &g) in block.0.iter().enumerate() {
        if k > 0 && block.0[k - 1] == g {
            run += 1;
        } else {
            run = 1;
        }
        result *= run;
    }
    result
}

/// `log φ(i, i', j)`: the exponent contributed by quantile interval `j` when
/// it spans gaps `i` to `i'`. Uses sensitivity 1, so the scale is `ε/2`.
///
/// * JointExp: `-(ε/2)(1/2)|i' - i - n(p_j - p_{j-1})|`
/// * inverse sensitivity: `-(ε/2)[(1/2)|δ| + 1{δ >= 0, j <= m}]` with
///   `δ = i' - i - (ceil(n p_j) - ceil(n p_{j-1}))`
///
/// `-inf` when `i' < i`.
pub fn log_phi(
    flavor: MechanismFlavor,
    i: usize,
    i_next: usize,
    j: usize,
    n: usize,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
) -> f64 {
    if i_next < i {
        return f64::NEG_INFINITY;
    }
    let half_eps = 0.5 * eps.epsilon();
    let span = (i_next - i) as f64;
    match flavor {
        MechanismFlavor::JointExp => {
            let expected = n as f64 * (spec.p(j) - spec.p(j - 1));
            -half_eps * 0.5 * (span - expected).abs()
        }
        MechanismFlavor::InverseSensitivity => {
            let target = spec.rank(j, n) as f64 - spec.rank(j - 1, n) as f64;
            let delta = span - target;
            let indicator = if j <= spec.m() && delta >= 0.0 {
                1.0
            } else {
                0.0
            };
            -half_eps * (0.5 * delta.abs() + indicator)
        }
    }
}

/// `log P(i)` before normalization.
pub fn block_log_weight(
    flavor: MechanismFlavor,
    block: &BlockIndex,
    data: &Dataset,
    bounds: &Bounds,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
) -> Result<f64> {
    let data = data.sorted();
    check_instance(&data, bounds, spec)?;
    if block.m() != spec.m() {
        return Err(Error::LengthMismatch {
            left: block.m(),
            right: spec.m(),
        });
    }
    let n = data.len();
    block.check_gaps(n)?;
    Ok(block_log_weight_sorted(
        flavor, block, &data, bounds, spec, eps,
    ))
}

fn block_log_weight_sorted(
    flavor: MechanismFlavor,
    block: &BlockIndex,
    data: &Dataset,
    bounds: &Bounds,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
) -> f64 {
    let n = data.len();
    let m = spec.m();
    let gap = |j: usize| -> usize {
        if j == 0 {
            0
        } else if j > m {
            n
        } else {
            block.0[j - 1]
        }
    };
    let mut total = -(gamma(block) as f64).ln();
    for j in 1..=m + 1 {
        total += log_phi(flavor, gap(j - 1), gap(j), j, n, spec, eps);
    }
    for &g in &block.0 {
        total += tau(g, data, bounds).ln();
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

pub(crate) fn check_instance(data: &Dataset, bounds: &Bounds, spec: &QuantileSpec) -> Result<()> {
    data.check_within(bounds)?;
    if spec.m() == 0 {
        return Err(Error::Spec(crate::error::SpecViolation::Empty));
    }
    Ok(())
}

/// Enumerates all `C(n + m, m)` blocks. Refuses instances with
/// `(n + 1)^m > 10^6`.
pub fn brute_force_distribution(
    flavor: MechanismFlavor,
    data: &Dataset,
    bounds: &Bounds,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
) -> Result<BlockDistribution> {
    let data = data.sorted();
    check_instance(&data, bounds, spec)?;
    let n = data.len();
    let m = spec.m();
    let size = ((n + 1) as f64).powi(m as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut log_weights = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        let block = BlockIndex(idx.clone());
        let w = block_log_weight_sorted(flavor, &block, &data, bounds, spec, eps);
        log_weights.push((block, w));
        // next non-decreasing tuple over 0..=n
        let mut pos = m;
        while pos > 0 && idx[pos - 1] == n {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        let next = idx[pos - 1] + 1;
        for slot in idx.iter_mut().skip(pos - 1) {
            *slot = next;
        }
    }
    let all: Vec<f64> = log_weights.iter().map(|(_, w)| *w).collect();
    let log_normalizer = logsumexp(&all);
    if log_normalizer == f64::NEG_INFINITY {
        return Err(Error::DegenerateDistribution);
    }
    Ok(BlockDistribution {
        log_weights,
        log_normalizer,
    })
}

/// Draws one block by the forward/backward dynamic program.
pub fn dp_sample_block<R: Rng + ?Sized>(
    flavor: MechanismFlavor,
    data: &Dataset,
    bounds: &Bounds,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
    rng: &mut R,
) -> Result<BlockIndex> {
    Ok(BlockSampler::new(flavor, data, bounds, spec, eps)?.sample(rng))
}

/// Independent uniforms in each selected gap, sorted ascending.
pub fn sample_within_block<R: Rng + ?Sized>(
    block: &BlockIndex,
    data: &Dataset,
    bounds: &Bounds,
    rng: &mut R,
) -> Result<QuantileEstimate> {
    let data = data.sorted();
    block.check_gaps(data.len())?;
    let mut q = Vec::with_capacity(block.m());
    for &g in &block.0 {
        let lo = data.order_stat(g as i64, bounds);
        let hi = data.order_stat(g as i64 + 1, bounds);
        if hi <= lo {
            return Err(Error::ZeroVolumeGap { index: g });
        }
        let u: f64 = rng.random();
        q.push((lo + u * (hi - lo)).min(hi));
    }
    QuantileEstimate::from_unsorted(q)
}

/// Log density of the mechanism's output at `q` with respect to Lebesgue
/// measure on the sorted cone: `(ε/2) u(X, q) - log Z`.
pub fn mechanism_log_density(
    flavor: MechanismFlavor,
    data: &Dataset,
    bounds: &Bounds,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
    q: &QuantileEstimate,
) -> Result<f64> {
    BlockSampler::new(flavor, data, bounds, spec, eps)?.log_density(q)
}

/// `(ε/2) u(X, q)` for the flavor's utility.
pub(crate) fn scaled_utility(
    flavor: MechanismFlavor,
    data: &Dataset,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
    q: &QuantileEstimate,
) -> Result<f64> {
    let u = match flavor {
        MechanismFlavor::JointExp => u_je(data, q, spec)?,
        MechanismFlavor::InverseSensitivity => u_is_tilde(data, q, spec)?,
    };
    Ok(0.5 * eps.epsilon() * u.value())
}
