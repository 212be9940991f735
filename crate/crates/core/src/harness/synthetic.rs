//! Synthetic data laws with known population quantiles.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::{Bounds, Dataset, QuantileEstimate, QuantileSpec};
use crate::error::{Error, Result};
use crate::exec::stream_rng;

/// Tolerance on mixture weights summing to one.
const WEIGHT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticKind {
    Constant(f64),
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Clamped to the bounds after drawing.
    Gaussian {
        mean: f64,
        std: f64,
    },
    /// Point masses `(location, weight)` plus uniform pieces `(lo, hi, weight)`.
    DiracMixture {
        atoms: Vec<(f64, f64)>,
        pieces: Vec<(f64, f64, f64)>,
    },
}

impl SyntheticKind {
    /// Half the mass on one atom at the lower end, half spread over the upper
    /// half of the range, like a column of dividends where most rows are zero.
    pub fn dividends_like(bounds: &Bounds) -> Self {
        let mid = 0.5 * (bounds.lower() + bounds.upper());
        SyntheticKind::DiracMixture {
            atoms: vec![(bounds.lower(), 0.5)],
            pieces: vec![(mid, bounds.upper(), 0.5)],
        }
    }

    /// Several atoms at round values over a thin continuous background.
    pub fn earnings_like(bounds: &Bounds) -> Self {
        let at = |t: f64| bounds.lower() + t * bounds.width();
        SyntheticKind::DiracMixture {
            atoms: vec![
                (at(0.0), 0.2),
                (at(0.25), 0.15),
                (at(0.5), 0.15),
                (at(0.75), 0.1),
            ],
            pieces: vec![(at(0.0), at(1.0), 0.4)],
        }
    }

    pub fn preset(name: &str, bounds: &Bounds) -> Result<Self> {
        match name {
            "dividends-like" => Ok(Self::dividends_like(bounds)),
            "earnings-like" => Ok(Self::earnings_like(bounds)),
            other => Err(Error::InvalidConfig(format!("unknown preset `{other}`"))),
        }
    }

    fn validate(&self, bounds: &Bounds) -> Result<()> {
        let inside = |v: f64| bounds.contains(v);
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        match self {
            SyntheticKind::Constant(v) if !inside(*v) => bad("constant outside bounds"),
            SyntheticKind::Uniform { lo, hi } if !(lo < hi && inside(*lo) && inside(*hi)) => {
                bad("uniform support must be a non-empty interval inside the bounds")
            }
            SyntheticKind::Gaussian { mean, std } if !(mean.is_finite() && *std > 0.0) => {
                bad("gaussian needs a finite mean and positive std")
            }
            SyntheticKind::DiracMixture { atoms, pieces } => {
                let mut total = 0.0;
                for &(loc, w) in atoms {
                    if !(inside(loc) && w >= 0.0) {
                        return bad("atoms must lie inside the bounds with weight >= 0");
                    }
                    total += w;
                }
                for &(lo, hi, w) in pieces {
                    if !(lo < hi && inside(lo) && inside(hi) && w >= 0.0) {
                        return bad("pieces must be intervals inside the bounds with weight >= 0");
                    }
                    total += w;
                }
                if (total - 1.0).abs() > WEIGHT_SLACK {
                    return bad("mixture weights must sum to 1");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, bounds: &Bounds, rng: &mut R) -> f64 {
        match self {
            SyntheticKind::Constant(v) => *v,
            SyntheticKind::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            SyntheticKind::Gaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                bounds.clamp(mean + std * z)
            }
            SyntheticKind::DiracMixture { atoms, pieces } => {
                let mut u: f64 = rng.random();
                for &(loc, w) in atoms {
                    if u < w {
                        return loc;
                    }
                    u -= w;
                }
                for &(lo, hi, w) in pieces {
                    if u < w {
                        return lo + (u / w) * (hi - lo);
                    }
                    u -= w;
                }
                // rounding left a sliver of mass: use the last component
                match (pieces.last(), atoms.last()) {
                    (Some(&(_, hi, _)), _) => hi,
                    (None, Some(&(loc, _))) => loc,
                    (None, None) => bounds.lower(),
                }
            }
        }
    }

    /// `F(x)` of the law after clamping.
    pub fn cdf(&self, bounds: &Bounds, x: f64) -> f64 {
        if x >= bounds.upper() {
            return 1.0;
        }
        if x < bounds.lower() {
            return 0.0;
        }
        match self {
            SyntheticKind::Constant(v) => f64::from(u8::from(x >= *v)),
            SyntheticKind::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            SyntheticKind::Gaussian { mean, std } => {
                Normal::new(*mean, *std).expect("validated").cdf(x)
            }
            SyntheticKind::DiracMixture { atoms, pieces } => {
                let a: f64 = atoms
                    .iter()
                    .filter(|(loc, _)| *loc <= x)
                    .map(|(_, w)| w)
                    .sum();
                let c: f64 = pieces
                    .iter()
                    .map(|&(lo, hi, w)| w * ((x - lo) / (hi - lo)).clamp(0.0, 1.0))
                    .sum();
                a + c
            }
        }
    }

    /// `F^{-1}(p) = inf { x : F(x) >= p }`, by bisection on the bounds.
    pub fn quantile(&self, bounds: &Bounds, p: f64) -> f64 {
        let (mut lo, mut hi) = (bounds.lower(), bounds.upper());
        if self.cdf(bounds, lo) >= p {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(bounds, mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// A synthetic law, sample size and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub bounds: Bounds,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, bounds: Bounds, n: usize, seed: u64) -> Result<Self> {
        kind.validate(&bounds)?;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            kind,
            bounds,
            n,
            seed,
        })
    }

    /// Population quantiles `F^{-1}(p_j)`.
    pub fn population_quantiles(&self, spec: &QuantileSpec) -> Result<QuantileEstimate> {
        QuantileEstimate::new(
            spec.probabilities()
                .iter()
                .map(|&p| self.kind.quantile(&self.bounds, p))
                .collect(),
        )
    }
}

/// `n` i.i.d. draws from the law.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.kind.validate(&spec.bounds)?;
    let mut rng = stream_rng(spec.seed, 0xfffe, 0);
    let values = (0..spec.n)
        .map(|_| spec.kind.draw(&spec.bounds, &mut rng))
        .collect();
    Dataset::within(values, &spec.bounds)
}
