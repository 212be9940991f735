//! End-to-end private estimators.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::domain::{Bounds, Dataset, PrivacyBudget, QuantileEstimate, QuantileSpec};
use crate::error::{Error, Result};
use crate::sampler::{BlockSampler, MechanismFlavor};

/// How many scales past `[a, b]` unbounded noise may push a point before it
/// is clamped.
pub const CLAMP_SCALES: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseFamily {
    Uniform,
    Laplace,
    Gaussian,
}

impl NoiseFamily {
    pub const ALL: [NoiseFamily; 3] = [
        NoiseFamily::Uniform,
        NoiseFamily::Laplace,
        NoiseFamily::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Uniform => "uniform",
            NoiseFamily::Laplace => "laplace",
            NoiseFamily::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(NoiseFamily::Uniform),
            "laplace" => Ok(NoiseFamily::Laplace),
            "gaussian" | "normal" => Ok(NoiseFamily::Gaussian),
            other => Err(Error::InvalidConfig(format!(
                "unknown noise family `{other}`"
            ))),
        }
    }
}

/// Noise law added to every data point before smoothing.
///
/// `scale` is the family's own parameter: half-width for uniform, `b` for
/// Laplace, standard deviation for Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    family: NoiseFamily,
    scale: f64,
}

impl NoiseConfig {
    pub fn new(family: NoiseFamily, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidNoise(scale));
        }
        Ok(Self { family, scale })
    }

    /// Config whose draws have standard deviation `std`.
    pub fn from_std(family: NoiseFamily, std: f64) -> Result<Self> {
        let scale = match family {
            NoiseFamily::Uniform => std * 3f64.sqrt(),
            NoiseFamily::Laplace => std / 2f64.sqrt(),
            NoiseFamily::Gaussian => std,
        };
        Self::new(family, scale)
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn std(&self) -> f64 {
        match self.family {
            NoiseFamily::Uniform => self.scale / 3f64.sqrt(),
            NoiseFamily::Laplace => self.scale * 2f64.sqrt(),
            NoiseFamily::Gaussian => self.scale,
        }
    }

    /// The domain the noisy data is projected onto.
    pub fn extended_bounds(&self, bounds: &Bounds) -> Result<Bounds> {
        let margin = match self.family {
            NoiseFamily::Uniform => self.scale,
            NoiseFamily::Laplace | NoiseFamily::Gaussian => CLAMP_SCALES * self.scale,
        };
        bounds.widen(margin)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::Uniform => rng.random_range(-self.scale..=self.scale),
            NoiseFamily::Laplace => {
                let e: f64 = Exp1.sample(rng);
                if rng.random::<bool>() {
                    self.scale * e
                } else {
                    -self.scale * e
                }
            }
            NoiseFamily::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.scale * z
            }
        }
    }
}

/// `n` i.i.d. noise draws.
pub fn generate_noise<R: Rng + ?Sized>(n: usize, cfg: &NoiseConfig, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| cfg.draw(rng)).collect()
}

/// Smallest noise ratio handed out, so the scale never underflows to zero.
pub const MIN_SIGMA_RATIO: f64 = 1e-300;

/// `(b - a) min(1e-2, exp(-n ε / (20 sqrt(m))))`, floored at
/// `(b - a) MIN_SIGMA_RATIO`.
pub fn recommended_sigma(n: usize, eps: PrivacyBudget, m: usize, bounds: &Bounds) -> f64 {
    let decay = (-(n as f64) * eps.epsilon() / (20.0 * (m as f64).sqrt())).exp();
    bounds.width() * decay.clamp(MIN_SIGMA_RATIO, 1e-2)
}

fn exponential_mechanism<R: Rng + ?Sized>(
    flavor: MechanismFlavor,
    data: &Dataset,
    bounds: &Bounds,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
    rng: &mut R,
) -> Result<QuantileEstimate> {
    spec.validate_for(data.len())?;
    BlockSampler::new(flavor, data, bounds, spec, eps)?.sample_output(rng)
}

/// JointExp: exponential mechanism on the bin-count utility.
pub fn joint_exp<R: Rng + ?Sized>(
    data: &Dataset,
    bounds: &Bounds,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
    rng: &mut R,
) -> Result<QuantileEstimate> {
    exponential_mechanism(MechanismFlavor::JointExp, data, bounds, spec, eps, rng)
}

/// Exponential mechanism on the inverse-sensitivity utility.
pub fn inverse_sensitivity_mechanism<R: Rng + ?Sized>(
    data: &Dataset,
    bounds: &Bounds,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
    rng: &mut R,
) -> Result<QuantileEstimate> {
    exponential_mechanism(
        MechanismFlavor::InverseSensitivity,
        data,
        bounds,
        spec,
        eps,
        rng,
    )
}

/// Single-quantile JointExp.
pub fn exponential_quantile<R: Rng + ?Sized>(
    data: &Dataset,
    bounds: &Bounds,
    p: f64,
    eps: PrivacyBudget,
    rng: &mut R,
) -> Result<f64> {
    let spec = QuantileSpec::new(vec![p])?;
    Ok(joint_exp(data, bounds, &spec, eps, rng)?.values()[0])
}

/// `m` independent single-quantile runs at `ε / m` each, sorted.
pub fn composed_single_quantiles<R: Rng + ?Sized>(
    data: &Dataset,
    bounds: &Bounds,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
    rng: &mut R,
) -> Result<QuantileEstimate> {
    spec.validate_for(data.len())?;
    let share = eps.split(spec.m())?;
    let sorted = data.sorted();
    let draws = spec
        .probabilities()
        .iter()
        .map(|&p| exponential_quantile(&sorted, bounds, p, share, rng))
        .collect::<Result<Vec<_>>>()?;
    QuantileEstimate::from_unsorted(draws)
}

/// Noise-smoothed data. Each point is kept as the exact sum `hi + lo` of
/// its value and its noise, so noise far below the `f64` spacing of the
/// data still separates tied points.
#[derive(Debug, Clone)]
pub struct SmoothedData {
    points: Vec<(f64, f64)>,
    bounds: Bounds,
}

/// `(s, e)` with `s = fl(a + b)` and `s + e = a + b` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl SmoothedData {
    /// `project(sort(X) + w)`. Sorting first makes the result depend on `X`
    /// only through its multiset.
    pub fn draw<R: Rng + ?Sized>(
        data: &Dataset,
        bounds: &Bounds,
        cfg: &NoiseConfig,
        rng: &mut R,
    ) -> Result<Self> {
        data.check_within(bounds)?;
        let ext = cfg.extended_bounds(bounds)?;
        let sorted = data.sorted();
        let noise = generate_noise(sorted.len(), cfg, rng);
        let mut points: Vec<(f64, f64)> = sorted
            .values()
            .iter()
            .zip(&noise)
            .map(|(&x, &w)| {
                let (hi, lo) = two_sum(x, w);
                if hi > ext.upper() || (hi == ext.upper() && lo > 0.0) {
                    (ext.upper(), 0.0)
                } else if hi < ext.lower() || (hi == ext.lower() && lo < 0.0) {
                    (ext.lower(), 0.0)
                } else {
                    (hi, lo)
                }
            })
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Ok(Self {
            points,
            bounds: ext,
        })
    }

    /// The extended domain.
    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Points rounded to `f64`, sorted.
    pub fn dataset(&self) -> Dataset {
        Dataset::new(self.points.iter().map(|p| p.0).collect()).expect("finite points")
    }

    /// `log τ(i)` for `i = 0..=n`, from the exact point positions.
    pub fn log_gaps(&self) -> Vec<f64> {
        let edge = |k: usize| -> (f64, f64) {
            if k == 0 {
                (self.bounds.lower(), 0.0)
            } else if k > self.points.len() {
                (self.bounds.upper(), 0.0)
            } else {
                self.points[k - 1]
            }
        };
        (0..=self.points.len())
            .map(|k| {
                let (a, b) = (edge(k), edge(k + 1));
                let gap = (b.0 - a.0) + (b.1 - a.1);
                if gap > 0.0 {
                    gap.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    /// JointExp sampler over the smoothed data.
    pub fn sampler(&self, spec: &QuantileSpec, eps: PrivacyBudget) -> Result<BlockSampler> {
        BlockSampler::with_gaps(
            MechanismFlavor::JointExp,
            self.dataset(),
            &self.bounds,
            self.log_gaps(),
            spec,
            eps,
        )
    }
}

/// `project(sort(X) + w)` rounded to `f64`, with the extended domain.
pub fn noisy_dataset<R: Rng + ?Sized>(
    data: &Dataset,
    bounds: &Bounds,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<(Dataset, Bounds)> {
    let smoothed = SmoothedData::draw(data, bounds, cfg, rng)?;
    Ok((smoothed.dataset(), smoothed.bounds))
}

/// HSJointExp: JointExp on noise-smoothed data over the extended domain.
pub fn hs_joint_exp<R: Rng + ?Sized>(
    data: &Dataset,
    bounds: &Bounds,
    spec: &QuantileSpec,
    eps: PrivacyBudget,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<QuantileEstimate> {
    spec.validate_for(data.len())?;
    let smoothed = SmoothedData::draw(data, bounds, cfg, rng)?;
    smoothed.sampler(spec, eps)?.sample_output(rng)
}

/// Every estimator the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    JointExp,
    InverseSensitivity,
    HsJointExp,
    ComposedBaseline,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [
        Mechanism::JointExp,
        Mechanism::InverseSensitivity,
        Mechanism::HsJointExp,
        Mechanism::ComposedBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::JointExp => "joint_exp",
            Mechanism::InverseSensitivity => "inverse_sensitivity",
            Mechanism::HsJointExp => "hs_joint_exp",
            Mechanism::ComposedBaseline => "composed_baseline",
        }
    }

    pub fn uses_noise(self) -> bool {
        self == Mechanism::HsJointExp
    }

    /// Runs the mechanism. `noise` is required for HSJointExp and ignored
    /// otherwise.
    pub fn run<R: Rng + ?Sized>(
        self,
        data: &Dataset,
        bounds: &Bounds,
        spec: &QuantileSpec,
        eps: PrivacyBudget,
        noise: Option<&NoiseConfig>,
        rng: &mut R,
    ) -> Result<QuantileEstimate> {
        match self {
            Mechanism::JointExp => joint_exp(data, bounds, spec, eps, rng),
            Mechanism::InverseSensitivity => {
                inverse_sensitivity_mechanism(data, bounds, spec, eps, rng)
            }
            Mechanism::ComposedBaseline => composed_single_quantiles(data, bounds, spec, eps, rng),
            Mechanism::HsJointExp => {
                let cfg = noise.ok_or_else(|| {
                    Error::InvalidConfig("hs_joint_exp needs a noise configuration".into())
                })?;
                hs_joint_exp(data, bounds, spec, eps, cfg, rng)
            }
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "jointexp" | "je" => Ok(Mechanism::JointExp),
            "inversesensitivity" | "is" => Ok(Mechanism::InverseSensitivity),
            "hsjointexp" | "hs" => Ok(Mechanism::HsJointExp),
            "composedbaseline" | "composed" => Ok(Mechanism::ComposedBaseline),
            _ => Err(Error::InvalidConfig(format!("unknown mechanism `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }
    fn eps(e: f64) -> PrivacyBudget {
        PrivacyBudget::new(e).unwrap()
    }

    #[test]
    fn recommended_sigma_examples() {
        let s = recommended_sigma(100, eps(1.0), 1, &Bounds::new(-1.0, 1.0).unwrap());
        assert!((s - 2.0 * (-5f64).exp()).abs() < 1e-15);
        assert!((s - 1.3476e-2).abs() < 1e-5);
        let s = recommended_sigma(10, eps(0.1), 1, &Bounds::new(0.0, 1.0).unwrap());
        assert_eq!(s, 1e-2);
        let s2 = recommended_sigma(10, eps(0.1), 1, &Bounds::new(0.0, 2.0).unwrap());
        assert_eq!(s2, 2.0 * s);
        let tiny = recommended_sigma(1_000_000, eps(1.0), 1, &Bounds::new(0.0, 1.0).unwrap());
        assert_eq!(tiny, MIN_SIGMA_RATIO);
    }

    #[test]
    fn noise_support_and_moments() {
        let cfg = NoiseConfig::new(NoiseFamily::Uniform, 0.1).unwrap();
        assert!(generate_noise(10_000, &cfg, &mut rng(1))
            .iter()
            .all(|w| w.abs() <= 0.1));
        assert_eq!(
            generate_noise(5, &cfg, &mut rng(2)),
            generate_noise(5, &cfg, &mut rng(2))
        );
        for family in NoiseFamily::ALL {
            let cfg = NoiseConfig::from_std(family, 0.5).unwrap();
            assert!((cfg.std() - 0.5).abs() < 1e-12);
            let w = generate_noise(200_000, &cfg, &mut rng(3));
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
            assert!((sd - 0.5).abs() < 0.01, "{family}: {sd}");
        }
        assert!(NoiseConfig::new(NoiseFamily::Gaussian, 0.0).is_err());
    }

    #[test]
    fn outputs_sorted_within_bounds_and_reproducible() {
        let bounds = Bounds::new(0.0, 10.0).unwrap();
        let data = Dataset::new((0..40).map(|i| (i * 7 % 40) as f64 / 4.0).collect()).unwrap();
        let spec = QuantileSpec::uniform_grid(3).unwrap();
        let noise = NoiseConfig::new(NoiseFamily::Laplace, 0.2).unwrap();
        for mech in Mechanism::ALL {
            let ext = if mech.uses_noise() {
                noise.extended_bounds(&bounds).unwrap()
            } else {
                bounds
            };
            for seed in 0..20 {
                let q = mech
                    .run(
                        &data,
                        &bounds,
                        &spec,
                        eps(1.0),
                        Some(&noise),
                        &mut rng(seed),
                    )
                    .unwrap();
                assert!(q.values().windows(2).all(|w| w[0] <= w[1]));
                assert!(q.check_within(&ext).is_ok());
                let again = mech
                    .run(
                        &data,
                        &bounds,
                        &spec,
                        eps(1.0),
                        Some(&noise),
                        &mut rng(seed),
                    )
                    .unwrap();
                assert_eq!(q, again);
            }
        }
    }

    #[test]
    fn permutation_does_not_change_outputs() {
        let bounds = Bounds::new(0.0, 1.0).unwrap();
        let mut v: Vec<f64> = (0..30).map(|i| ((i * 13) % 30) as f64 / 30.0).collect();
        let spec = QuantileSpec::uniform_grid(2).unwrap();
        let noise = NoiseConfig::new(NoiseFamily::Gaussian, 0.01).unwrap();
        let a = Dataset::new(v.clone()).unwrap();
        v.reverse();
        let b = Dataset::new(v).unwrap();
        for mech in Mechanism::ALL {
            let qa = mech
                .run(&a, &bounds, &spec, eps(1.0), Some(&noise), &mut rng(9))
                .unwrap();
            let qb = mech
                .run(&b, &bounds, &spec, eps(1.0), Some(&noise), &mut rng(9))
                .unwrap();
            assert_eq!(qa, qb, "{mech}");
        }
    }

    #[test]
    fn exponential_quantile_aliases_joint_exp() {
        let bounds = Bounds::new(0.0, 101.0).unwrap();
        let data = Dataset::new((1..=100).map(f64::from).collect()).unwrap();
        let spec = QuantileSpec::new(vec![0.5]).unwrap();
        let a = exponential_quantile(&data, &bounds, 0.5, eps(10.0), &mut rng(4)).unwrap();
        let b = joint_exp(&data, &bounds, &spec, eps(10.0), &mut rng(4)).unwrap();
        assert_eq!(a, b.values()[0]);
        let mut r = rng(5);
        let near = (0..500)
            .filter(|_| {
                let v = exponential_quantile(&data, &bounds, 0.5, eps(10.0), &mut r).unwrap();
                (v - 50.0).abs() <= 3.0
            })
            .count();
        assert!(near > 450, "{near}");
    }

    #[test]
    fn uniform_noise_never_clips() {
        let bounds = Bounds::new(0.0, 1.0).unwrap();
        let data = Dataset::new(vec![0.0, 0.0, 1.0, 1.0, 0.5]).unwrap();
        let cfg = NoiseConfig::new(NoiseFamily::Uniform, 0.05).unwrap();
        let (noisy, ext) = noisy_dataset(&data, &bounds, &cfg, &mut rng(1)).unwrap();
        assert_eq!((ext.lower(), ext.upper()), (-0.05, 1.05));
        assert!(noisy.values().iter().all(|v| (-0.05..=1.05).contains(v)));
    }

    #[test]
    fn noise_below_float_spacing_still_separates_ties() {
        let bounds = Bounds::new(0.0, 1.0).unwrap();
        let data = Dataset::new(vec![0.3; 6]).unwrap();
        let cfg = NoiseConfig::new(NoiseFamily::Uniform, 1e-150).unwrap();
        let s = SmoothedData::draw(&data, &bounds, &cfg, &mut rng(8)).unwrap();
        assert!(s.dataset().values().iter().all(|&v| v == 0.3));
        let gaps = s.log_gaps();
        assert!(gaps.iter().all(|g| g.is_finite()));
        assert!(gaps[1..6].iter().all(|&g| g < (2e-150f64).ln() + 1e-9));
        let spec = QuantileSpec::new(vec![0.5]).unwrap();
        let q = hs_joint_exp(&data, &bounds, &spec, eps(1.0), &cfg, &mut rng(1)).unwrap();
        assert!(q.values()[0] >= 0.0 && q.values()[0] <= 1.0);
    }

    #[test]
    fn two_sum_is_exact() {
        let (s, e) = two_sum(0.3, 1e-150);
        assert_eq!(s, 0.3);
        assert_eq!(e, 1e-150);
        let (s, e) = two_sum(1.0, 2f64.powi(-60));
        assert_eq!((s, e), (1.0, 2f64.powi(-60)));
    }

    #[test]
    fn mechanism_names_round_trip() {
        for mech in Mechanism::ALL {
            assert_eq!(mech.name().parse::<Mechanism>().unwrap(), mech);
        }
        assert_eq!(
            "hsjointexp".parse::<Mechanism>().unwrap(),
            Mechanism::HsJointExp
        );
        assert!("median".parse::<Mechanism>().is_err());
        for f in NoiseFamily::ALL {
            assert_eq!(f.name().parse::<NoiseFamily>().unwrap(), f);
        }
    }

    #[test]
    fn spacing_violation_is_rejected() {
        let bounds = Bounds::new(0.0, 1.0).unwrap();
        let data = Dataset::new(vec![0.1, 0.2, 0.3]).unwrap();
        let spec = QuantileSpec::new(vec![0.5, 0.6]).unwrap();
        assert!(matches!(
            joint_exp(&data, &bounds, &spec, eps(1.0), &mut rng(0)),
            Err(Error::Spec(_))
        ));
    }
}
