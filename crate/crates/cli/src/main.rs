use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use mqdp_core::audit::{epsilon_eff, AuditConfig, AuditTarget, PrivacyLossReport};
use mqdp_core::exec::stream_rng;
use mqdp_core::harness::{
    generate, load_csv, run_sweep, write_audit_csv, write_sweep_csv, NoiseRatio, ReferenceMode,
    SweepConfig, SyntheticKind, SyntheticSpec,
};
use mqdp_core::mechanisms::recommended_sigma;
use mqdp_core::oracles::{closed_form_vs_brute_force, sampler_vs_enumeration, sensitivity_checks};
use mqdp_core::{
    Bounds, Dataset, Execution, Mechanism, MechanismFlavor, NoiseConfig, NoiseFamily,
    PrivacyBudget, QuantileSpec,
};

/// Differentially private multi-quantile estimation.
#[derive(Parser)]
#[command(name = "mqdp", version)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "MQDP_THREADS", default_value_t = 0)]
    threads: usize,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mechanism and print the estimated quantiles.
    Estimate(EstimateArgs),
    /// Error sweep over mechanisms, noise levels, m and eps; writes CSV.
    Sweep(SweepArgs),
    /// Estimate the effective privacy loss of a dataset; writes CSV.
    Audit(AuditArgs),
    /// Run the oracle suites; exits 1 on any disagreement.
    Verify(VerifyArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "synthetic"])))]
struct DataArgs {
    /// CSV file holding the data.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Column name; defaults to the first column.
    #[arg(long, requires = "input")]
    col: Option<String>,
    /// Synthetic data instead of a file: dividends-like, earnings-like or uniform.
    #[arg(long)]
    synthetic: Option<String>,
    /// Synthetic sample size.
    #[arg(long, default_value_t = 1000, requires = "synthetic")]
    n: usize,
    /// Public data bounds; values outside are clamped.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, required = true)]
    bounds: Vec<f64>,
    /// Use a random subset of this many rows.
    #[arg(long, requires = "input")]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Loaded {
    id: String,
    data: Dataset,
    bounds: Bounds,
    law: Option<SyntheticSpec>,
}

impl DataArgs {
    fn load(&self) -> Result<Loaded> {
        let bounds = Bounds::new(self.bounds[0], self.bounds[1])?;
        if let Some(path) = &self.input {
            let loaded = load_csv(
                path,
                self.col.as_deref(),
                &bounds,
                self.subsample,
                self.seed,
            )
            .with_context(|| format!("reading {}", path.display()))?;
            if loaded.clamped > 0 || loaded.skipped > 0 {
                eprintln!(
                    "note: {} values clamped to bounds, {} non-numeric rows skipped",
                    loaded.clamped, loaded.skipped
                );
            }
            let id = self
                .col
                .clone()
                .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .unwrap_or_else(|| "data".into());
            return Ok(Loaded {
                id,
                data: loaded.data,
                bounds,
                law: None,
            });
        }
        let name = self
            .synthetic
            .as_deref()
            .expect("clap enforces a data source");
        let kind = match name {
            "uniform" => SyntheticKind::Uniform {
                lo: bounds.lower(),
                hi: bounds.upper(),
            },
            other => SyntheticKind::preset(other, &bounds)?,
        };
        let law = SyntheticSpec::new(kind, bounds, self.n, self.seed)?;
        Ok(Loaded {
            id: name.to_string(),
            data: generate(&law)?,
            bounds,
            law: Some(law),
        })
    }
}

/// Noise level: `auto` or a standard deviation in data units.
#[derive(Clone, Copy)]
enum Sigma {
    Auto,
    Std(f64),
}

fn parse_sigma(s: &str) -> Result<Sigma, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Sigma::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Sigma::Std(v)),
        _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
    }
}

fn parse_ratio(s: &str) -> Result<NoiseRatio, String> {
    match parse_sigma(s)? {
        Sigma::Auto => Ok(NoiseRatio::Auto),
        Sigma::Std(v) => Ok(NoiseRatio::Fixed(v)),
    }
}

#[derive(Args)]
struct QuantileArgs {
    /// Number of quantiles, evenly spaced at j / (m + 1).
    #[arg(long, default_value_t = 1, conflicts_with = "p")]
    m: usize,
    /// Explicit probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
}

impl QuantileArgs {
    fn spec(&self) -> Result<QuantileSpec> {
        Ok(match &self.p {
            Some(p) => QuantileSpec::new(p.clone())?,
            None => QuantileSpec::uniform_grid(self.m)?,
        })
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    quantiles: QuantileArgs,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    /// joint_exp, inverse_sensitivity, hs_joint_exp or composed_baseline.
    #[arg(long, default_value = "joint_exp")]
    mech: Mechanism,
    /// Noise standard deviation for hs_joint_exp, or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_sigma)]
    sigma: Sigma,
    #[arg(long, default_value = "laplace")]
    family: NoiseFamily,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reference {
    /// Empirical quantiles of the clean data.
    Empirical,
    /// Quantiles of the synthetic law.
    Population,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "joint_exp,hs_joint_exp")]
    mech: Vec<Mechanism>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "uniform,laplace,gaussian"
    )]
    family: Vec<NoiseFamily>,
    /// Noise std as a fraction of b - a, or `auto`; default is 17 log-spaced
    /// points over [1e-8, 1] plus `auto`.
    #[arg(long, value_delimiter = ',', value_parser = parse_ratio)]
    ratios: Option<Vec<NoiseRatio>>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, value_enum, default_value_t = Reference::Empirical)]
    reference: Reference,
    /// Record wall-clock time per cell (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    quantiles: QuantileArgs,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "joint_exp,inverse_sensitivity,hs_joint_exp"
    )]
    mech: Vec<Mechanism>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    eps: Vec<f64>,
    /// Noise standard deviation for hs_joint_exp, or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_sigma)]
    sigma: Sigma,
    #[arg(long, default_value = "laplace")]
    family: NoiseFamily,
    #[arg(long, default_value_t = 64)]
    neighbor_grid: usize,
    #[arg(long, default_value_t = 64)]
    output_grid: usize,
    /// Monte Carlo noise draws per density for hs_joint_exp.
    #[arg(long, default_value_t = 2000)]
    mc: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 6)]
    max_n: usize,
    #[arg(long, default_value_t = 2)]
    max_m: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Random instances for the sampler check.
    #[arg(long, default_value_t = 200)]
    instances: usize,
    /// Random neighbor pairs for the sensitivity check.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
}

fn noise_std(sigma: Sigma, n: usize, eps: PrivacyBudget, m: usize, bounds: &Bounds) -> f64 {
    match sigma {
        Sigma::Auto => recommended_sigma(n, eps, m, bounds),
        Sigma::Std(v) => v,
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let src = args.data.load()?;
    let spec = args.quantiles.spec()?;
    let eps = PrivacyBudget::new(args.eps)?;
    let noise = if args.mech.uses_noise() {
        let std = noise_std(args.sigma, src.data.len(), eps, spec.m(), &src.bounds);
        Some(NoiseConfig::from_std(args.family, std)?)
    } else {
        None
    };
    let mut rng = stream_rng(args.data.seed, 1, 0);
    let q = args
        .mech
        .run(&src.data, &src.bounds, &spec, eps, noise.as_ref(), &mut rng)?;
    let mut out = io::stdout().lock();
    for v in q.values() {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

fn sweep(args: &SweepArgs, execution: Execution) -> Result<()> {
    let src = args.data.load()?;
    let reference = match args.reference {
        Reference::Empirical => ReferenceMode::Empirical,
        Reference::Population => match src.law {
            Some(law) => ReferenceMode::Population(law),
            None => bail!("--reference population needs --synthetic data"),
        },
    };
    let cfg = SweepConfig {
        dataset_id: src.id,
        mechanisms: args.mech.clone(),
        noise_families: args.family.clone(),
        noise_ratios: args.ratios.clone().unwrap_or_else(NoiseRatio::default_grid),
        m_values: args.m.clone(),
        eps_values: args.eps.clone(),
        replications: args.reps,
        seed: args.data.seed,
        probabilities: None,
        reference,
        record_runtime: args.timing,
        execution,
    };
    let rows = run_sweep(&src.data, &src.bounds, &cfg)?;
    write_sweep_csv(&rows, output(&args.output)?)?;
    Ok(())
}

fn audit(args: &AuditArgs, execution: Execution) -> Result<()> {
    let src = args.data.load()?;
    let spec = args.quantiles.spec()?;
    let cfg = AuditConfig {
        neighbor_grid_size: args.neighbor_grid,
        output_grid_size: args.output_grid,
        mc_samples: args.mc,
        seed: args.data.seed,
        execution,
    };
    let mut rows: Vec<(String, String, f64, PrivacyLossReport)> = Vec::new();
    for &e in &args.eps {
        let eps = PrivacyBudget::new(e)?;
        for &mech in &args.mech {
            let target = match mech {
                Mechanism::JointExp => AuditTarget::Exact(MechanismFlavor::JointExp),
                Mechanism::InverseSensitivity => {
                    AuditTarget::Exact(MechanismFlavor::InverseSensitivity)
                }
                Mechanism::HsJointExp => {
                    let std = noise_std(args.sigma, src.data.len(), eps, spec.m(), &src.bounds);
                    AuditTarget::Smoothed(NoiseConfig::from_std(args.family, std)?)
                }
                Mechanism::ComposedBaseline => bail!("the audit does not cover composed_baseline"),
            };
            let report = epsilon_eff(&src.data, &target, eps, &spec, &src.bounds, &cfg)?;
            rows.push((src.id.clone(), mech.name().to_string(), e, report));
        }
    }
    write_audit_csv(&rows, output(&args.output)?)?;
    Ok(())
}

fn verify(args: &VerifyArgs, execution: Execution) -> Result<bool> {
    ensure!(
        args.max_n >= 2 && args.max_m >= 1,
        "need --max-n >= 2 and --max-m >= 1"
    );
    let reports = [
        closed_form_vs_brute_force(args.max_n, args.max_m, execution),
        sampler_vs_enumeration(args.instances, args.max_n.max(3), args.max_m, args.seed)?,
        sensitivity_checks(args.trials, args.seed)?,
    ];
    let mut ok = true;
    for r in &reports {
        println!(
            "{} {}: {} checks, {} failures",
            if r.passed() { "ok  " } else { "FAIL" },
            r.name,
            r.checked,
            r.failures.len()
        );
        for f in r.failures.iter().take(5) {
            println!("    {f}");
        }
        ok &= r.passed();
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    #[cfg(feature = "parallel")]
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Estimate(a) => estimate(a).map(|_| true),
        Command::Sweep(a) => sweep(a, execution).map(|_| true),
        Command::Audit(a) => audit(a, execution).map(|_| true),
        Command::Verify(a) => verify(a, execution),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
