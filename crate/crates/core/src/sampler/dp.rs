//! Forward/backward dynamic program over the chain-factorized block
//! distribution.
//!
//! State after placing quantiles `1..=j` is the gap `i` of quantile `j` and
//! the length `r` of the run of equal gap indices ending at `j`. Extending a
//! run to length `r` multiplies by `1/r`, which accumulates `1/γ(i)` along
//! the path. Entering a new gap from an earlier one is a convolution of the
//! previous marginal with `φ(·, ·, j)`, which only depends on `i' - i`; the
//! kernel `-k|d - c| - β 1{d >= c}` splits at `c` into a geometric tail
//! (running recursion) and a bounded window (sliding-window log-sum), so the
//! forward pass costs `O(n m^2)` time and `O(n m)` memory.

use rand::Rng;

use super::logspace::{ln_factorial, log_add_exp, logsumexp, sample_log_categorical};
use super::{check_instance, scaled_utility, tau, BlockIndex, MechanismFlavor};
use crate::domain::{Bounds, Dataset, PrivacyBudget, QuantileEstimate, QuantileSpec};
use crate::error::{Error, Result};
use crate::utility::{bin_counts, is_tilde_from_counts, je_from_counts};

/// `log φ(i, i + d, j) = -slope |d - center| - step 1{d >= center}`.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    center: f64,
    slope: f64,
    step: f64,
}

impl Kernel {
    fn new(flavor: MechanismFlavor, j: usize, n: usize, spec: &QuantileSpec, eps: f64) -> Self {
        let slope = 0.25 * eps;
        match flavor {
            MechanismFlavor::JointExp => Kernel {
                center: n as f64 * (spec.p(j) - spec.p(j - 1)),
                slope,
                step: 0.0,
            },
            MechanismFlavor::InverseSensitivity => Kernel {
                center: (spec.rank(j, n) - spec.rank(j - 1, n)) as f64,
                slope,
                step: if j <= spec.m() { 0.5 * eps } else { 0.0 },
            },
        }
    }

    fn eval(&self, d: usize) -> f64 {
        let d = d as f64;
        let base = -self.slope * (d - self.center).abs();
        if d >= self.center {
            base - self.step
        } else {
            base
        }
    }

    /// `out[i'] = logsumexp_{i < i'} (prev[i] + eval(i' - i))`.
    fn convolve_strict(&self, prev: &[f64]) -> Vec<f64> {
        let len = prev.len();
        let mut out = vec![f64::NEG_INFINITY; len];
        // smallest offset on the far side of the kink
        let far = (self.center.max(0.0).ceil() as usize).max(1);
        let far_weight = self.eval(far);
        let mut acc = f64::NEG_INFINITY;
        for ip in far..len {
            acc = log_add_exp(acc - self.slope, prev[ip - far] + far_weight);
            out[ip] = acc;
        }
        // offsets 1..far-1 sit on the near side: weight slope (d - center)
        let width = far - 1;
        if width > 0 && len > 1 {
            let shifted: Vec<f64> = prev
                .iter()
                .enumerate()
                .map(|(i, v)| v - self.slope * i as f64)
                .collect();
            let window = sliding_window_lse(&shifted, width);
            for ip in 1..len {
                let near = window[ip - 1] + self.slope * (ip as f64 - self.center);
                out[ip] = log_add_exp(out[ip], near);
            }
        }
        out
    }
}

/// `out[e] = logsumexp(v[max(0, e + 1 - w) ..= e])`, by block prefix/suffix
/// sums so that no subtraction in log space is needed.
fn sliding_window_lse(v: &[f64], w: usize) -> Vec<f64> {
    let len = v.len();
    let mut prefix = vec![f64::NEG_INFINITY; len];
    let mut suffix = vec![f64::NEG_INFINITY; len];
    for e in 0..len {
        prefix[e] = if e % w == 0 {
            v[e]
        } else {
            log_add_exp(prefix[e - 1], v[e])
        };
    }
    for s in (0..len).rev() {
        suffix[s] = if s % w == w - 1 || s == len - 1 {
            v[s]
        } else {
            log_add_exp(v[s], suffix[s + 1])
        };
    }
    (0..len)
        .map(|e| {
            if e + 1 < w {
                prefix[e]
            } else {
                let s = e + 1 - w;
                if s.is_multiple_of(w) {
                    prefix[e]
                } else {
                    log_add_exp(suffix[s], prefix[e])
                }
            }
        })
        .collect()
}

/// Precomputed forward tables for one (flavor, dataset, bounds, spec, ε)
/// instance. Build once, then sample or evaluate densities repeatedly.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    flavor: MechanismFlavor,
    data: Dataset,
    bounds: Bounds,
    spec: QuantileSpec,
    eps: PrivacyBudget,
    log_tau: Vec<f64>,
    kernels: Vec<Kernel>,
    /// `first[j - 1][i]`: log mass of prefixes ending with a fresh run at gap `i`.
    first: Vec<Vec<f64>>,
    /// `total[j - 1][i]`: log mass of prefixes whose `j`-th quantile sits in gap `i`.
    total: Vec<Vec<f64>>,
    /// `self_cum[t] = sum_{s <= t} log φ(i, i, s)`.
    self_cum: Vec<f64>,
    log_z: f64,
}

impl BlockSampler {
    pub fn new(
        flavor: MechanismFlavor,
        data: &Dataset,
        bounds: &Bounds,
        spec: &QuantileSpec,
        eps: PrivacyBudget,
    ) -> Result<Self> {
        let data = data.sorted();
        check_instance(&data, bounds, spec)?;
        let log_tau: Vec<f64> = (0..=data.len())
            .map(|i| tau(i, &data, bounds).ln())
            .collect();
        Self::with_gaps(flavor, data, bounds, log_tau, spec, eps)
    }

    /// Like [`BlockSampler::new`] but with gap lengths supplied by the caller,
    /// for data whose exact positions are finer than `f64` resolution. `data`
    /// must be sorted and `log_tau` must have `n + 1` entries.
    pub(crate) fn with_gaps(
        flavor: MechanismFlavor,
        data: Dataset,
        bounds: &Bounds,
        log_tau: Vec<f64>,
        spec: &QuantileSpec,
        eps: PrivacyBudget,
    ) -> Result<Self> {
        debug_assert!(data.is_sorted() && log_tau.len() == data.len() + 1);
        let n = data.len();
        let m = spec.m();
        // kernels[j - 1] for j = 1..=m+1
        let kernels: Vec<Kernel> = (1..=m + 1)
            .map(|j| Kernel::new(flavor, j, n, spec, eps.epsilon()))
            .collect();
        let mut self_cum = vec![0.0; m + 1];
        for t in 1..=m {
            self_cum[t] = self_cum[t - 1] + kernels[t - 1].eval(0);
        }

        // runs[r - 1][i] for the current step
        let mut runs = vec![vec![f64::NEG_INFINITY; n + 1]; m];
        let mut first = Vec::with_capacity(m);
        let mut total = Vec::with_capacity(m);
        for (i, slot) in runs[0].iter_mut().enumerate() {
            *slot = kernels[0].eval(i) + log_tau[i];
        }
        first.push(runs[0].clone());
        total.push(runs[0].clone());
        for j in 2..=m {
            let kernel = kernels[j - 1];
            let stay = kernel.eval(0);
            for r in (2..=j).rev() {
                let penalty = (r as f64).ln();
                let (lower, upper) = runs.split_at_mut(r - 1);
                for ((dst, src), lt) in upper[0].iter_mut().zip(&lower[r - 2]).zip(&log_tau) {
                    *dst = src + stay + lt - penalty;
                }
            }
            let conv = kernel.convolve_strict(&total[j - 2]);
            for ((dst, c), lt) in runs[0].iter_mut().zip(&conv).zip(&log_tau) {
                *dst = c + lt;
            }
            let marginal: Vec<f64> = (0..=n)
                .map(|i| {
                    let mut acc = f64::NEG_INFINITY;
                    for run in runs.iter().take(j) {
                        acc = log_add_exp(acc, run[i]);
                    }
                    acc
                })
                .collect();
            first.push(runs[0].clone());
            total.push(marginal);
        }
        let last = kernels[m];
        let closing: Vec<f64> = (0..=n)
            .map(|i| total[m - 1][i] + last.eval(n - i))
            .collect();
        let log_z = logsumexp(&closing);
        if !log_z.is_finite() {
            return Err(Error::DegenerateDistribution);
        }
        Ok(Self {
            flavor,
            data,
            bounds: *bounds,
            spec: spec.clone(),
            eps,
            log_tau,
            kernels,
            first,
            total,
            self_cum,
            log_z,
        })
    }

    /// `log Z`: the log of the total block mass, equal to the log of the
    /// integral of `exp((ε/2) u(X, q))` over the sorted cone.
    pub fn log_normalizer(&self) -> f64 {
        self.log_z
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Log mass of prefixes `1..=j` whose trailing run at gap `i` has length `r`.
    fn run_weight(&self, j: usize, i: usize, r: usize) -> f64 {
        let start = j + 1 - r;
        let base = self.first[start - 1][i];
        if r == 1 {
            return base;
        }
        base + (self.self_cum[j] - self.self_cum[start]) + (r - 1) as f64 * self.log_tau[i]
            - ln_factorial(r)
    }

    /// Candidate log weights for the gap preceding `next_gap` at step `j`.
    fn gap_weights(&self, j: usize, next_gap: usize, inclusive: bool) -> Vec<f64> {
        let kernel = self.kernels[j];
        let limit = if inclusive { next_gap + 1 } else { next_gap };
        (0..limit)
            .map(|i| self.total[j - 1][i] + kernel.eval(next_gap - i))
            .collect()
    }

    fn run_weights(&self, j: usize, i: usize) -> Vec<f64> {
        (1..=j).map(|r| self.run_weight(j, i, r)).collect()
    }

    /// Exact draw from the block distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BlockIndex {
        let m = self.spec.m();
        let mut idx = vec![0usize; m];
        let mut j = m;
        let mut next_gap = self.data.len();
        let mut inclusive = true;
        while j > 0 {
            let gaps = self.gap_weights(j, next_gap, inclusive);
            let i = sample_log_categorical(&gaps, rng).expect("positive conditional mass");
            let r = 1 + sample_log_categorical(&self.run_weights(j, i), rng)
                .expect("positive run mass");
            idx[j - r..j].fill(i);
            j -= r;
            next_gap = i;
            inclusive = false;
        }
        BlockIndex(idx)
    }

    /// Log probability the sampler assigns to `block`, obtained by walking
    /// the same backward conditionals that [`BlockSampler::sample`] draws from.
    pub fn log_probability(&self, block: &BlockIndex) -> f64 {
        let m = self.spec.m();
        let g = block.indices();
        if g.len() != m || g.last().is_some_and(|&v| v > self.data.len()) {
            return f64::NEG_INFINITY;
        }
        let mut lp = 0.0;
        let mut j = m;
        let mut next_gap = self.data.len();
        let mut inclusive = true;
        while j > 0 {
            let i = g[j - 1];
            let mut r = 1;
            while r < j && g[j - 1 - r] == i {
                r += 1;
            }
            if i > next_gap || (!inclusive && i == next_gap) {
                return f64::NEG_INFINITY;
            }
            let gaps = self.gap_weights(j, next_gap, inclusive);
            lp += gaps[i] - logsumexp(&gaps);
            let runs = self.run_weights(j, i);
            lp += runs[r - 1] - logsumexp(&runs);
            j -= r;
            next_gap = i;
            inclusive = false;
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    /// Draws a block and then a point inside it. A gap narrower than the
    /// `f64` spacing at its left edge yields that edge.
    pub fn sample_output<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<QuantileEstimate> {
        let block = self.sample(rng);
        let q = block
            .indices()
            .iter()
            .map(|&g| {
                let lo = self.data.order_stat(g as i64, &self.bounds);
                let hi = self.data.order_stat(g as i64 + 1, &self.bounds);
                let u: f64 = rng.random();
                (lo + u * (hi - lo)).clamp(lo, hi.max(lo))
            })
            .collect();
        QuantileEstimate::from_unsorted(q)
    }

    /// `(ε/2) u(X, q) - log Z`.
    pub fn log_density(&self, q: &QuantileEstimate) -> Result<f64> {
        q.check_within(&self.bounds)?;
        Ok(scaled_utility(self.flavor, &self.data, &self.spec, self.eps, q)? - self.log_z)
    }

    /// Same as [`BlockSampler::log_density`] but skips re-validation; `q`
    /// must be sorted, inside the bounds and of length `m`.
    pub(crate) fn log_density_unchecked(&self, q: &[f64]) -> f64 {
        let counts = bin_counts(&self.data, q);
        let n = self.data.len();
        let u = match self.flavor {
            MechanismFlavor::JointExp => je_from_counts(&counts, &self.spec, n),
            MechanismFlavor::InverseSensitivity => is_tilde_from_counts(&counts, &self.spec, n),
        };
        0.5 * self.eps.epsilon() * u - self.log_z
    }
}
