//! Oracle suites shared by the `verify` command and the acceptance tests.
//!
//! Each suite compares a fast path against an independent slow path and
//! collects every disagreement instead of stopping at the first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Bounds, Dataset, PrivacyBudget, QuantileEstimate, QuantileSpec};
use crate::error::Result;
use crate::exec::{stream_rng, Execution};
use crate::sampler::{brute_force_distribution, BlockSampler, MechanismFlavor};
use crate::stats::chi_square_test;
use crate::utility::{brute_force_inverse_sensitivity, u_is_exact, u_is_tilde, u_je};

/// Outcome of one oracle suite.
#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub name: String,
    pub checked: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }

    fn absorb(&mut self, other: SuiteReport) {
        self.checked += other.checked;
        self.failures.extend(other.failures);
    }
}

/// All non-decreasing `k`-tuples over `values`.
fn multisets(values: &[f64], k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        out.push(idx.iter().map(|&i| values[i]).collect());
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == values.len() - 1 {
            pos -= 1;
        }
        if pos == 0 {
            return out;
        }
        let next = idx[pos - 1] + 1;
        for slot in idx.iter_mut().skip(pos - 1) {
            *slot = next;
        }
    }
}

/// Strictly increasing `k`-tuples over `values`.
fn strict_tuples(values: &[f64], k: usize) -> Vec<Vec<f64>> {
    fn rec(values: &[f64], start: usize, k: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..values.len() {
            cur.push(values[i]);
            rec(values, i + 1, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(values, 0, k, &mut Vec::new(), &mut out);
    out
}

fn probability_sets(m: usize) -> Vec<Vec<f64>> {
    match m {
        1 => vec![vec![0.25], vec![0.5], vec![0.75]],
        2 => vec![vec![0.25, 0.75], vec![0.4, 0.9]],
        _ => vec![(1..=m).map(|j| j as f64 / (m + 1) as f64).collect()],
    }
}

/// Closed-form inverse sensitivity against exhaustive search, on every
/// multiset over `{0.1, ..., 0.9}` of size `2..=max_n` and every `q` on the
/// shifted grid `{0.05, ..., 0.95}` (so `q` never meets the data).
pub fn closed_form_vs_brute_force(max_n: usize, max_m: usize, exec: Execution) -> SuiteReport {
    let bounds = Bounds::new(0.0, 1.0).expect("unit interval");
    let values: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let shifted: Vec<f64> = (0..10).map(|k| (2 * k + 1) as f64 / 20.0).collect();
    let mut jobs: Vec<(Vec<f64>, QuantileSpec)> = Vec::new();
    for n in 2..=max_n {
        for m in 1..=max_m {
            for p in probability_sets(m) {
                let spec = QuantileSpec::new(p).expect("valid probabilities");
                if spec.validate_for(n).is_err() {
                    continue;
                }
                for x in multisets(&values, n) {
                    jobs.push((x, spec.clone()));
                }
            }
        }
    }
    let parts = exec.map_indexed(jobs.len(), |k| {
        let (x, spec) = &jobs[k];
        let data = Dataset::new(x.clone()).expect("finite");
        let mut report = SuiteReport::new("");
        for q in strict_tuples(&shifted, spec.m()) {
            let q = QuantileEstimate::new(q).expect("sorted");
            report.checked += 1;
            let exact = u_is_exact(&data, &q, spec).map(|u| -u.value());
            let brute = brute_force_inverse_sensitivity(&data, &q, spec, &bounds);
            match (exact, brute) {
                (Ok(e), Ok(b)) if e == b as f64 => {}
                (e, b) => report.failures.push(format!(
                    "X={x:?} p={:?} q={:?}: closed form {e:?}, search {b:?}",
                    spec.probabilities(),
                    q.values()
                )),
            }
        }
        report
    });
    let mut report = SuiteReport::new("closed-form inverse sensitivity vs exhaustive search");
    for part in parts {
        report.absorb(part);
    }
    report
}

fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> (Dataset, QuantileSpec) {
    loop {
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(1..=max_m);
        // coarse grid so that ties and collided gaps show up often
        let x: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..=8) as f64 / 8.0)
            .collect();
        let mut p: Vec<f64> = (0..m)
            .map(|_| rng.random_range(1..20) as f64 / 20.0)
            .collect();
        p.sort_by(f64::total_cmp);
        p.dedup();
        let Ok(spec) = QuantileSpec::new(p) else {
            continue;
        };
        if spec.validate_for(n).is_ok() {
            return (Dataset::new(x).expect("finite"), spec);
        }
    }
}

/// Dynamic-program normalizers and block probabilities against full
/// enumeration on `instances` random instances per flavor.
pub fn sampler_vs_enumeration(
    instances: usize,
    max_n: usize,
    max_m: usize,
    seed: u64,
) -> Result<SuiteReport> {
    let bounds = Bounds::new(0.0, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("block sampler vs enumeration");
    for _ in 0..instances {
        let (data, spec) = random_instance(&mut rng, max_n, max_m);
        let eps = PrivacyBudget::new(rng.random_range(0.1..4.0))?;
        for flavor in [
            MechanismFlavor::JointExp,
            MechanismFlavor::InverseSensitivity,
        ] {
            report.checked += 1;
            let brute = brute_force_distribution(flavor, &data, &bounds, &spec, eps)?;
            let dp = BlockSampler::new(flavor, &data, &bounds, &spec, eps)?;
            let gap = (brute.log_normalizer - dp.log_normalizer()).abs();
            let tv = 0.5
                * brute
                    .log_weights
                    .iter()
                    .map(|(b, w)| {
                        ((w - brute.log_normalizer).exp() - dp.log_probability(b).exp()).abs()
                    })
                    .sum::<f64>();
            if !(gap <= 1e-9 && tv <= 1e-9) {
                report.failures.push(format!(
                    "{} X={:?} p={:?} eps={}: |dlogZ|={gap:e} tv={tv:e}",
                    flavor.name(),
                    data.values(),
                    spec.probabilities(),
                    eps.epsilon()
                ));
            }
        }
    }
    Ok(report)
}

/// Chi-square goodness of fit of sampled blocks against exact block
/// probabilities. Returns the suite report and every p-value.
pub fn sampler_goodness_of_fit(
    instances: usize,
    draws: usize,
    max_n: usize,
    max_m: usize,
    seed: u64,
    alpha: f64,
) -> Result<(SuiteReport, Vec<f64>)> {
    let bounds = Bounds::new(0.0, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("block sampler chi-square fit");
    let mut pvalues = Vec::new();
    for k in 0..instances {
        let (data, spec) = random_instance(&mut rng, max_n, max_m);
        let eps = PrivacyBudget::new(rng.random_range(0.1..4.0))?;
        let flavor = if k % 2 == 0 {
            MechanismFlavor::JointExp
        } else {
            MechanismFlavor::InverseSensitivity
        };
        let brute = brute_force_distribution(flavor, &data, &bounds, &spec, eps)?;
        let dp = BlockSampler::new(flavor, &data, &bounds, &spec, eps)?;
        let position: std::collections::HashMap<_, _> = brute
            .log_weights
            .iter()
            .enumerate()
            .map(|(i, (b, _))| (b.clone(), i))
            .collect();
        let mut counts = vec![0u64; brute.len()];
        let mut draw_rng = stream_rng(seed, k as u64, 0);
        for _ in 0..draws {
            counts[position[&dp.sample(&mut draw_rng)]] += 1;
        }
        let (_, p) = chi_square_test(&counts, &brute.probabilities(), 5.0);
        report.checked += 1;
        pvalues.push(p);
        if p <= alpha {
            report.failures.push(format!(
                "{} X={:?} p={:?}: chi-square p-value {p:e}",
                flavor.name(),
                data.values(),
                spec.probabilities()
            ));
        }
    }
    Ok((report, pvalues))
}

/// Sensitivity of both utilities over random neighbor pairs, and the gap
/// between the two inverse-sensitivity forms over valid triples.
pub fn sensitivity_checks(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("utility sensitivity");
    let draw = |rng: &mut ChaCha8Rng| rng.random_range(0..=10) as f64 / 10.0;
    let mut done = 0;
    while done < trials {
        let (data, spec) = random_instance(&mut rng, 10, 3);
        let mut y = data.values().to_vec();
        let i = rng.random_range(0..y.len());
        y[i] = draw(&mut rng);
        let y = Dataset::new(y)?;
        // candidates may land on data values, which exercises the bin edges
        let q = QuantileEstimate::from_unsorted((0..spec.m()).map(|_| draw(&mut rng)).collect())?;
        let dje = (u_je(&data, &q, &spec)?.value() - u_je(&y, &q, &spec)?.value()).abs();
        let dis =
            (u_is_tilde(&data, &q, &spec)?.value() - u_is_tilde(&y, &q, &spec)?.value()).abs();
        report.checked += 1;
        if dje > 1.0 + 1e-12 || dis > 1.0 + 1e-12 {
            report.failures.push(format!(
                "X={:?} Y={:?} q={:?}: |du_je|={dje} |du_is|={dis}",
                data.values(),
                y.values(),
                q.values()
            ));
        }
        done += 1;
    }
    let mut valid = 0;
    while valid < trials {
        let (data, spec) = random_instance(&mut rng, 10, 3);
        let mut q: Vec<f64> = (0..spec.m())
            .map(|_| rng.random_range(0..40) as f64 / 40.0 + 1e-3)
            .collect();
        q.sort_by(f64::total_cmp);
        let q = QuantileEstimate::new(q)?;
        let Ok(exact) = u_is_exact(&data, &q, &spec) else {
            continue;
        };
        valid += 1;
        report.checked += 1;
        let tilde = u_is_tilde(&data, &q, &spec)?;
        let gap = (tilde.value() - exact.value()).abs();
        if gap > 2.0 * (spec.m() + 1) as f64 {
            report.failures.push(format!(
                "X={:?} q={:?}: |u_tilde - u_exact| = {gap}",
                data.values(),
                q.values()
            ));
        }
    }
    Ok(report)
}
