//! Noise-sweep experiment runner.

use std::time::Instant;

use crate::domain::{
    empirical_quantiles, Bounds, Dataset, PrivacyBudget, QuantileEstimate, QuantileSpec,
};
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};
use crate::mechanisms::{recommended_sigma, Mechanism, NoiseConfig, NoiseFamily};

use super::metrics;
use super::synthetic::SyntheticSpec;

/// Noise level as a fraction of `b - a`, or the recommended heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseRatio {
    Fixed(f64),
    Auto,
}

impl NoiseRatio {
    /// `count` ratios log-spaced over `[lo, hi]`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<NoiseRatio> {
        if count == 1 {
            return vec![NoiseRatio::Fixed(lo)];
        }
        let (a, b) = (lo.log10(), hi.log10());
        (0..count)
            .map(|k| {
                let e = a + (b - a) * k as f64 / (count - 1) as f64;
                NoiseRatio::Fixed(10f64.powf(e))
            })
            .collect()
    }

    /// 17 points over `[1e-8, 1]` followed by `Auto`.
    pub fn default_grid() -> Vec<NoiseRatio> {
        let mut v = Self::log_spaced(1e-8, 1.0, 17);
        v.push(NoiseRatio::Auto);
        v
    }

    fn resolve(self, n: usize, eps: PrivacyBudget, m: usize, bounds: &Bounds) -> f64 {
        match self {
            NoiseRatio::Fixed(r) => r,
            NoiseRatio::Auto => recommended_sigma(n, eps, m, bounds) / bounds.width(),
        }
    }
}

/// What the estimates are scored against.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ReferenceMode {
    /// Empirical quantiles of the clean dataset.
    #[default]
    Empirical,
    /// `F^{-1}(p)` of the law the data was drawn from.
    Population(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub dataset_id: String,
    pub mechanisms: Vec<Mechanism>,
    pub noise_families: Vec<NoiseFamily>,
    pub noise_ratios: Vec<NoiseRatio>,
    pub m_values: Vec<usize>,
    pub eps_values: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    /// Overrides the evenly spaced `p` for every `m`.
    pub probabilities: Option<QuantileSpec>,
    pub reference: ReferenceMode,
    /// When false, `runtime_ms` is written as 0 so output is reproducible.
    pub record_runtime: bool,
    pub execution: Execution,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dataset_id: "data".into(),
            mechanisms: vec![Mechanism::JointExp, Mechanism::HsJointExp],
            noise_families: NoiseFamily::ALL.to_vec(),
            noise_ratios: NoiseRatio::default_grid(),
            m_values: vec![1, 3, 5],
            eps_values: vec![1.0],
            replications: 100,
            seed: 0,
            probabilities: None,
            reference: ReferenceMode::Empirical,
            record_runtime: false,
            execution: Execution::Parallel,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.mechanisms.is_empty() || self.m_values.is_empty() || self.eps_values.is_empty() {
            return bad("mechanisms, m values and eps values must be non-empty");
        }
        if self.mechanisms.iter().any(|m| m.uses_noise())
            && (self.noise_families.is_empty() || self.noise_ratios.is_empty())
        {
            return bad("hs_joint_exp needs at least one noise family and ratio");
        }
        for r in &self.noise_ratios {
            if let NoiseRatio::Fixed(v) = r {
                if !(v.is_finite() && *v > 0.0) {
                    return bad("noise ratios must be positive");
                }
            }
        }
        for &e in &self.eps_values {
            PrivacyBudget::new(e)?;
        }
        if let Some(spec) = &self.probabilities {
            if self.m_values.iter().any(|&m| m != spec.m()) {
                return bad("explicit probabilities fix m");
            }
        }
        Ok(())
    }
}

/// One aggregated cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dataset_id: String,
    pub mechanism: String,
    pub noise_family: String,
    pub noise_ratio: f64,
    pub m: usize,
    pub eps: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub linf_mean: f64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone)]
struct Cell {
    mechanism: Mechanism,
    family: Option<NoiseFamily>,
    ratio: f64,
    spec: QuantileSpec,
    eps: PrivacyBudget,
    reference: QuantileEstimate,
}

fn cells(data: &Dataset, bounds: &Bounds, cfg: &SweepConfig) -> Result<Vec<Cell>> {
    let n = data.len();
    let mut out = Vec::new();
    for &mechanism in &cfg.mechanisms {
        for &m in &cfg.m_values {
            let spec = match &cfg.probabilities {
                Some(s) => s.clone(),
                None => QuantileSpec::uniform_grid(m)?,
            };
            spec.validate_for(n)?;
            let reference = match &cfg.reference {
                ReferenceMode::Empirical => empirical_quantiles(data, &spec)?,
                ReferenceMode::Population(law) => law.population_quantiles(&spec)?,
            };
            for &e in &cfg.eps_values {
                let eps = PrivacyBudget::new(e)?;
                let base = Cell {
                    mechanism,
                    family: None,
                    ratio: 0.0,
                    spec: spec.clone(),
                    eps,
                    reference: reference.clone(),
                };
                if !mechanism.uses_noise() {
                    out.push(base);
                    continue;
                }
                for &family in &cfg.noise_families {
                    for &ratio in &cfg.noise_ratios {
                        out.push(Cell {
                            family: Some(family),
                            ratio: ratio.resolve(n, eps, spec.m(), bounds),
                            ..base.clone()
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

struct Replication {
    mse: f64,
    linf: f64,
    elapsed_ms: f64,
}

/// Runs every cell of the configuration, `replications` times each. Rows come
/// back in configuration order whatever the scheduling.
pub fn run_sweep(data: &Dataset, bounds: &Bounds, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    data.check_within(bounds)?;
    let data = data.sorted();
    let cells = cells(&data, bounds, cfg)?;
    let reps = cfg.replications;
    let results = cfg
        .execution
        .map_indexed(cells.len() * reps, |task| -> Result<Replication> {
            let (c, r) = (task / reps, task % reps);
            let cell = &cells[c];
            let noise = match cell.family {
                Some(f) => Some(NoiseConfig::from_std(f, cell.ratio * bounds.width())?),
                None => None,
            };
            let mut rng = stream_rng(cfg.seed, c as u64, r as u64);
            let start = Instant::now();
            let q = cell.mechanism.run(
                &data,
                bounds,
                &cell.spec,
                cell.eps,
                noise.as_ref(),
                &mut rng,
            )?;
            let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            let (mse, linf) = metrics(&q, &cell.reference)?;
            Ok(Replication {
                mse,
                linf,
                elapsed_ms,
            })
        });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(cells
        .iter()
        .zip(results.chunks(reps))
        .map(|(cell, chunk)| {
            let k = chunk.len() as f64;
            let mse_mean = chunk.iter().map(|r| r.mse).sum::<f64>() / k;
            let mse_std = if chunk.len() > 1 {
                (chunk
                    .iter()
                    .map(|r| (r.mse - mse_mean).powi(2))
                    .sum::<f64>()
                    / (k - 1.0))
                    .sqrt()
            } else {
                0.0
            };
            SweepRow {
                dataset_id: cfg.dataset_id.clone(),
                mechanism: cell.mechanism.name().to_string(),
                noise_family: cell.family.map_or("none", NoiseFamily::name).to_string(),
                noise_ratio: cell.ratio,
                m: cell.spec.m(),
                eps: cell.eps.epsilon(),
                mse_mean,
                mse_std,
                linf_mean: chunk.iter().map(|r| r.linf).sum::<f64>() / k,
                runtime_ms: if cfg.record_runtime {
                    chunk.iter().map(|r| r.elapsed_ms).sum()
                } else {
                    0.0
                },
            }
        })
        .collect())
}
