//! Statistical behaviour of the mechanisms on synthetic data.

use mqdp_core::exec::stream_rng;
use mqdp_core::harness::{
    generate, metrics, run_sweep, NoiseRatio, SweepConfig, SyntheticKind, SyntheticSpec,
};
use mqdp_core::mechanisms::{
    composed_single_quantiles, generate_noise, inverse_sensitivity_mechanism, joint_exp, Mechanism,
};
use mqdp_core::stats::ks_test;
use mqdp_core::{
    empirical_quantiles, BlockSampler, Bounds, Dataset, Execution, MechanismFlavor, NoiseConfig,
    NoiseFamily, PrivacyBudget, QuantileEstimate, QuantileSpec,
};

fn eps(e: f64) -> PrivacyBudget {
    PrivacyBudget::new(e).unwrap()
}

fn uniform_data(n: usize, seed: u64) -> Dataset {
    let law = SyntheticSpec::new(
        SyntheticKind::Uniform { lo: 0.0, hi: 1.0 },
        Bounds::new(0.0, 1.0).unwrap(),
        n,
        seed,
    )
    .unwrap();
    generate(&law).unwrap()
}

#[test]
fn synthetic_uniform_passes_ks() {
    let x = uniform_data(20_000, 3);
    let (_, p) = ks_test(x.values(), |v| v.clamp(0.0, 1.0));
    assert!(p > 0.01, "{p}");
}

/// On constant data the inverse-sensitivity output is uniform on each side
/// of the data point; the two sides differ by one unit of utility.
#[test]
fn inverse_sensitivity_is_piecewise_uniform_on_constant_data() {
    let bounds = Bounds::new(-1.0, 1.0).unwrap();
    let data = Dataset::new(vec![0.0; 50]).unwrap();
    let spec = QuantileSpec::new(vec![0.5]).unwrap();
    let sampler = BlockSampler::new(
        MechanismFlavor::InverseSensitivity,
        &data,
        &bounds,
        &spec,
        eps(1.0),
    )
    .unwrap();
    let at = |v: f64| {
        sampler
            .log_density(&QuantileEstimate::new(vec![v]).unwrap())
            .unwrap()
            .exp()
    };
    let (left, right) = (at(-0.5), at(0.5));
    assert!((at(-0.9) - left).abs() < 1e-12 && (at(0.9) - right).abs() < 1e-12);
    assert!(
        ((left / right).ln().abs() - 0.5).abs() < 1e-9,
        "{left} {right}"
    );
    let out = Execution::Parallel.map_indexed(5000, |k| {
        let mut rng = stream_rng(5, 0, k as u64);
        inverse_sensitivity_mechanism(&data, &bounds, &spec, eps(1.0), &mut rng)
            .unwrap()
            .values()[0]
    });
    let cdf = |x: f64| {
        let x = x.clamp(-1.0, 1.0);
        if x < 0.0 {
            left * (x + 1.0)
        } else {
            left + right * x
        }
    };
    let (_, p) = ks_test(&out, cdf);
    assert!(p > 0.01, "{p}");
}

#[test]
fn mse_decreases_with_epsilon() {
    let bounds = Bounds::new(0.0, 1.0).unwrap();
    let data = uniform_data(500, 1);
    let spec = QuantileSpec::uniform_grid(3).unwrap();
    let reference = empirical_quantiles(&data, &spec).unwrap();
    let mse = |e: f64| -> f64 {
        let v = Execution::Parallel.map_indexed(200, |k| {
            let mut rng = stream_rng(2, (e * 100.0) as u64, k as u64);
            let q = joint_exp(&data, &bounds, &spec, eps(e), &mut rng).unwrap();
            metrics(&q, &reference).unwrap().0
        });
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (a, b, c) = (mse(0.1), mse(1.0), mse(10.0));
    assert!(a > b && b > c, "{a} {b} {c}");
}

#[test]
fn composed_baseline_is_worse_than_joint_exp() {
    let bounds = Bounds::new(0.0, 1.0).unwrap();
    let data = uniform_data(1000, 4);
    let spec = QuantileSpec::uniform_grid(5).unwrap();
    let reference = empirical_quantiles(&data, &spec).unwrap();
    let run = |composed: bool| -> f64 {
        let v = Execution::Parallel.map_indexed(200, |k| {
            let mut rng = stream_rng(6, u64::from(composed), k as u64);
            let q = if composed {
                composed_single_quantiles(&data, &bounds, &spec, eps(0.2), &mut rng)
            } else {
                joint_exp(&data, &bounds, &spec, eps(0.2), &mut rng)
            };
            metrics(&q.unwrap(), &reference).unwrap().0
        });
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (je, composed) = (run(false), run(true));
    assert!(composed > je, "composed {composed} vs joint {je}");
}

#[test]
fn gaussian_noise_std_within_one_percent() {
    let cfg = NoiseConfig::new(NoiseFamily::Gaussian, 0.3).unwrap();
    let w = generate_noise(1_000_000, &cfg, &mut stream_rng(8, 0, 0));
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
    assert!((sd / 0.3 - 1.0).abs() < 0.01, "{sd}");
}

#[test]
fn vanishing_noise_matches_joint_exp() {
    let bounds = Bounds::new(0.0, 1.0).unwrap();
    let data = uniform_data(1000, 11);
    let cfg = SweepConfig {
        mechanisms: vec![Mechanism::JointExp, Mechanism::HsJointExp],
        noise_families: vec![NoiseFamily::Uniform],
        noise_ratios: vec![NoiseRatio::Fixed(1e-9)],
        m_values: vec![3],
        replications: 2000,
        seed: 12,
        ..SweepConfig::default()
    };
    let rows = run_sweep(&data, &bounds, &cfg).unwrap();
    let (je, hs) = (rows[0].mse_mean, rows[1].mse_mean);
    assert!((hs / je - 1.0).abs() < 0.05 * 2.0, "hs {hs} vs je {je}");
}

#[test]
fn sweep_row_count_matches_cells() {
    let bounds = Bounds::new(0.0, 1.0).unwrap();
    let data = uniform_data(100, 2);
    let cfg = SweepConfig {
        mechanisms: Mechanism::ALL.to_vec(),
        noise_families: vec![NoiseFamily::Uniform, NoiseFamily::Laplace],
        noise_ratios: vec![
            NoiseRatio::Fixed(1e-3),
            NoiseRatio::Fixed(1e-2),
            NoiseRatio::Auto,
        ],
        m_values: vec![1, 2],
        eps_values: vec![0.5, 1.0],
        replications: 2,
        ..SweepConfig::default()
    };
    let rows = run_sweep(&data, &bounds, &cfg).unwrap();
    // three noiseless mechanisms plus 2 families x 3 ratios for hs, per (m, eps)
    assert_eq!(rows.len(), 2 * 2 * (3 + 6));
    assert!(rows
        .iter()
        .all(|r| r.mse_mean.is_finite() && r.mse_mean >= 0.0));
}
