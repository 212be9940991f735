//! Empirical privacy-loss estimation over discretized neighbor and output
//! grids.
//!
//! For the exact flavors the density is available in closed form through
//! the block sampler's normalizer. For HSJointExp the density of the output
//! given `X` is the average over noise draws of JointExp densities on the
//! noisy data, estimated by Monte Carlo.

use rand::Rng;

use crate::domain::{Bounds, Dataset, PrivacyBudget, QuantileEstimate, QuantileSpec};
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};
use crate::mechanisms::{NoiseConfig, NoiseFamily, SmoothedData};
use crate::sampler::{logsumexp, BlockSampler, MechanismFlavor};

/// Bootstrap resamples used for the Monte Carlo standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Which mechanism is being audited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AuditTarget {
    Exact(MechanismFlavor),
    Smoothed(NoiseConfig),
}

impl AuditTarget {
    pub fn name(&self) -> &'static str {
        match self {
            AuditTarget::Exact(f) => f.name(),
            AuditTarget::Smoothed(_) => "hs_joint_exp",
        }
    }

    /// Domain that outputs live in.
    pub fn output_bounds(&self, bounds: &Bounds) -> Result<Bounds> {
        match self {
            AuditTarget::Exact(_) => Ok(*bounds),
            AuditTarget::Smoothed(cfg) => cfg.extended_bounds(bounds),
        }
    }
}

/// Grid resolutions and Monte Carlo effort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConfig {
    pub neighbor_grid_size: usize,
    pub output_grid_size: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            neighbor_grid_size: 64,
            output_grid_size: 64,
            mc_samples: 2000,
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbor_grid_size < 2 || self.output_grid_size < 1 || self.mc_samples < 1 {
            return Err(Error::InvalidConfig(
                "audit needs neighbor grid >= 2, output grid >= 1 and mc samples >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Default noise for auditing HSJointExp.
pub fn default_audit_noise(std: f64) -> Result<NoiseConfig> {
    NoiseConfig::from_std(NoiseFamily::Laplace, std)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyLossReport {
    pub epsilon_eff: f64,
    pub argmax_neighbor: Dataset,
    pub argmax_output: QuantileEstimate,
    pub std_error: f64,
}

/// `grid` equispaced values over the bounds, endpoints included.
fn linspace(bounds: &Bounds, grid: usize) -> Vec<f64> {
    if grid == 1 {
        return vec![0.5 * (bounds.lower() + bounds.upper())];
    }
    let step = bounds.width() / (grid - 1) as f64;
    (0..grid)
        .map(|k| {
            if k == grid - 1 {
                bounds.upper()
            } else {
                bounds.lower() + step * k as f64
            }
        })
        .collect()
}

/// Single-entry substitutions of `X` by `grid` equispaced values. Positions
/// holding equal values give the same multiset, so only one is used.
pub fn neighbors(data: &Dataset, bounds: &Bounds, grid: usize) -> Vec<Dataset> {
    let values = linspace(bounds, grid.max(2));
    let sorted = data.sorted();
    let xs = sorted.values();
    let mut out = Vec::new();
    for i in 0..xs.len() {
        if i > 0 && xs[i] == xs[i - 1] {
            continue;
        }
        for &v in &values {
            if v == xs[i] {
                continue;
            }
            let mut y = xs.to_vec();
            y[i] = v;
            out.push(Dataset::new(y).expect("finite values"));
        }
    }
    out
}

/// Output density of the audited mechanism for one dataset.
enum DensityModel {
    Exact(BlockSampler),
    Smoothed(Vec<BlockSampler>),
}

impl DensityModel {
    fn build(
        target: &AuditTarget,
        data: &Dataset,
        bounds: &Bounds,
        spec: &QuantileSpec,
        eps: PrivacyBudget,
        cfg: &AuditConfig,
        stream: u64,
    ) -> Result<Self> {
        match target {
            AuditTarget::Exact(flavor) => Ok(DensityModel::Exact(BlockSampler::new(
                *flavor, data, bounds, spec, eps,
            )?)),
            AuditTarget::Smoothed(noise) => {
                let mut rng = stream_rng(cfg.seed, stream, 0);
                let draws = (0..cfg.mc_samples)
                    .map(|_| SmoothedData::draw(data, bounds, noise, &mut rng)?.sampler(spec, eps))
                    .collect::<Result<Vec<_>>>()?;
                Ok(DensityModel::Smoothed(draws))
            }
        }
    }

    fn log_density(&self, q: &[f64]) -> f64 {
        match self {
            DensityModel::Exact(s) => s.log_density_unchecked(q),
            DensityModel::Smoothed(draws) => {
                let terms = self.per_draw(q);
                logsumexp(&terms) - (draws.len() as f64).ln()
            }
        }
    }

    fn per_draw(&self, q: &[f64]) -> Vec<f64> {
        match self {
            DensityModel::Exact(s) => vec![s.log_density_unchecked(q)],
            DensityModel::Smoothed(draws) => {
                draws.iter().map(|s| s.log_density_unchecked(q)).collect()
            }
        }
    }
}

fn log_ratio(num: f64, den: f64) -> f64 {
    if den == f64::NEG_INFINITY {
        if num == f64::NEG_INFINITY {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num - den
    }
}

fn check_pair(x: &Dataset, y: &Dataset) -> Result<()> {
    if crate::domain::hamming_distance(x, y)? > 1 {
        return Err(Error::Precondition("datasets are not neighbors".into()));
    }
    Ok(())
}

/// `log L(X, Y, q)`: log of the ratio of output densities at `q`. A zero
/// denominator with a positive numerator gives `+inf`.
#[allow(clippy::too_many_arguments)]
pub fn log_privacy_loss(
    x: &Dataset,
    y: &Dataset,
    q: &QuantileEstimate,
    target: &AuditTarget,
    eps: PrivacyBudget,
    spec: &QuantileSpec,
    bounds: &Bounds,
    cfg: &AuditConfig,
) -> Result<f64> {
    check_pair(x, y)?;
    if q.m() != spec.m() {
        return Err(Error::LengthMismatch {
            left: q.m(),
            right: spec.m(),
        });
    }
    q.check_within(&target.output_bounds(bounds)?)?;
    let mx = DensityModel::build(target, x, bounds, spec, eps, cfg, 0)?;
    let my = DensityModel::build(target, y, bounds, spec, eps, cfg, 1)?;
    Ok(log_ratio(
        mx.log_density(q.values()),
        my.log_density(q.values()),
    ))
}

/// `L(X, Y, q)`.
#[allow(clippy::too_many_arguments)]
pub fn privacy_loss(
    x: &Dataset,
    y: &Dataset,
    q: &QuantileEstimate,
    target: &AuditTarget,
    eps: PrivacyBudget,
    spec: &QuantileSpec,
    bounds: &Bounds,
    cfg: &AuditConfig,
) -> Result<f64> {
    Ok(log_privacy_loss(x, y, q, target, eps, spec, bounds, cfg)?.exp())
}

/// Evaluation points for the output grid.
///
/// For `m = 1`: midpoints of the cells cut by `X ∪ Y ∪ {a, b}` (where exact
/// densities are constant) plus an equispaced grid. For `m >= 2`: every
/// non-decreasing tuple over an equispaced grid.
pub fn output_grid(
    x: &Dataset,
    y: &Dataset,
    out_bounds: &Bounds,
    m: usize,
    size: usize,
) -> Vec<Vec<f64>> {
    let base = linspace(out_bounds, size);
    if m == 1 {
        let mut cuts: Vec<f64> = x
            .values()
            .iter()
            .chain(y.values())
            .copied()
            .filter(|v| out_bounds.contains(*v))
            .chain([out_bounds.lower(), out_bounds.upper()])
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut points: Vec<f64> = cuts
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .chain(base)
            .collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        return points.into_iter().map(|v| vec![v]).collect();
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        out.push(idx.iter().map(|&k| base[k]).collect());
        let mut pos = m;
        while pos > 0 && idx[pos - 1] == base.len() - 1 {
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
    out
}

struct Best {
    value: f64,
    neighbor: usize,
    output: Vec<f64>,
    forward: bool,
}

/// `sup_Y sup_q |log L(X, Y, q)|` over the neighbor and output grids. Both
/// orders of each pair are checked since neighboring is symmetric.
pub fn epsilon_eff(
    x: &Dataset,
    target: &AuditTarget,
    eps: PrivacyBudget,
    spec: &QuantileSpec,
    bounds: &Bounds,
    cfg: &AuditConfig,
) -> Result<PrivacyLossReport> {
    cfg.validate()?;
    spec.validate_for(x.len())?;
    x.check_within(bounds)?;
    let x = x.sorted();
    let out_bounds = target.output_bounds(bounds)?;
    let ys = neighbors(&x, bounds, cfg.neighbor_grid_size);
    if ys.is_empty() {
        return Err(Error::Precondition("no neighbors on the grid".into()));
    }
    let mx = DensityModel::build(target, &x, bounds, spec, eps, cfg, 0)?;
    let per_neighbor = cfg.execution.map_indexed(ys.len(), |k| -> Result<Best> {
        let y = &ys[k];
        let my = DensityModel::build(target, y, bounds, spec, eps, cfg, k as u64 + 1)?;
        let mut best = Best {
            value: f64::NEG_INFINITY,
            neighbor: k,
            output: Vec::new(),
            forward: true,
        };
        for q in output_grid(&x, y, &out_bounds, spec.m(), cfg.output_grid_size) {
            let lx = mx.log_density(&q);
            let ly = my.log_density(&q);
            for (forward, v) in [(true, log_ratio(lx, ly)), (false, log_ratio(ly, lx))] {
                if v > best.value {
                    best = Best {
                        value: v,
                        neighbor: k,
                        output: q.clone(),
                        forward,
                    };
                }
            }
        }
        Ok(best)
    });
    let mut best: Option<Best> = None;
    for b in per_neighbor {
        let b = b?;
        if best.as_ref().is_none_or(|cur| b.value > cur.value) {
            best = Some(b);
        }
    }
    let best = best.expect("at least one neighbor");
    if best.value.is_nan() {
        return Err(Error::DegenerateDistribution);
    }
    let std_error = match target {
        AuditTarget::Exact(_) => 0.0,
        AuditTarget::Smoothed(_) => {
            let y = &ys[best.neighbor];
            let my =
                DensityModel::build(target, y, bounds, spec, eps, cfg, best.neighbor as u64 + 1)?;
            let (num, den) = if best.forward {
                (mx.per_draw(&best.output), my.per_draw(&best.output))
            } else {
                (my.per_draw(&best.output), mx.per_draw(&best.output))
            };
            bootstrap_std(&num, &den, cfg.seed)
        }
    };
    Ok(PrivacyLossReport {
        epsilon_eff: best.value,
        argmax_neighbor: ys[best.neighbor].clone(),
        argmax_output: QuantileEstimate::new(best.output)?,
        std_error,
    })
}

/// Bootstrap standard deviation of `log mean(e^num) - log mean(e^den)`.
fn bootstrap_std(num: &[f64], den: &[f64], seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 0xffff_ffff, 0);
    let mut resample = |v: &[f64]| -> f64 {
        let picks: Vec<f64> = (0..v.len())
            .map(|_| v[rng.random_range(0..v.len())])
            .collect();
        logsumexp(&picks) - (v.len() as f64).ln()
    };
    let stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let a = resample(num);
            let b = resample(den);
            log_ratio(a, b)
        })
        .filter(|v| v.is_finite())
        .collect();
    if stats.len() < 2 {
        return 0.0;
    }
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    let var = stats.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (stats.len() - 1) as f64;
    var.sqrt()
}
