//! `lpo-knn`: exact leave-p-out risk of the k-NN classifier from the
//! command line, plus bound evaluation, parameter selection, a Monte-Carlo
//! verification campaign, and an oracle self-check.
//!
//! Exit codes: 0 on success, 1 when a verification or oracle check fails,
//! 2 on input/parse errors, 3 on infeasible parameters or enumeration caps.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use lpo_knn::bounds::{evaluate_all, BoundInputs};
use lpo_knn::lpo::{
    lpo_bruteforce_rational, lpo_exact, rational_to_f64, EstimateMethod, LpOEstimate,
};
use lpo_knn::select::{default_confidence_exponent, select_k, SelectionCurve};
use lpo_knn::ustat::{incomplete_ustat_estimate, permutation_average};
use lpo_knn::verify::{
    empirical_campaign, sample_dataset, CampaignConfig, DistributionSpec, ReplicationReport,
};
use lpo_knn::Dataset;

use lpo_knn_cli::output::{self, Format};
use lpo_knn_cli::{io, CliError};

#[derive(Parser)]
#[command(name = "lpo-knn", version, about = "Exact leave-p-out cross-validation for k-NN: estimation, bounds, selection, verification")]
struct Cli {
    /// Worker thread count (overrides the LPO_KNN_WORKERS environment
    /// variable; default: all cores). Results never depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the leave-p-out risk estimate of a k-NN classifier.
    Estimate(EstimateArgs),
    /// Evaluate exact leave-p-out over a k grid and pick the minimizer.
    Select(SelectArgs),
    /// Evaluate every theoretical bound at one parameter tuple.
    Bounds(BoundsArgs),
    /// Run a Monte-Carlo campaign checking every bound empirically.
    Verify(VerifyArgs),
    /// Cross-check the exact recursion against definition-level oracles.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// Synthetic data-generating process.
    #[arg(long, value_enum, default_value = "gaussian-1d")]
    spec: SpecKind,
    /// P(Y = 1) for the Gaussian mixtures.
    #[arg(long, default_value_t = 0.5)]
    prior: f64,
    /// Class-0 mean (comma-separated coordinates for gaussian-md).
    #[arg(long, value_delimiter = ',', default_values_t = vec![-1.0])]
    mean0: Vec<f64>,
    /// Class-1 mean (comma-separated coordinates for gaussian-md).
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0])]
    mean1: Vec<f64>,
    /// Class-0 standard deviation (gaussian-1d).
    #[arg(long, default_value_t = 1.0)]
    std0: f64,
    /// Class-1 standard deviation (gaussian-1d).
    #[arg(long, default_value_t = 1.0)]
    std1: f64,
    /// Isotropic standard deviation (gaussian-md).
    #[arg(long, default_value_t = 1.0)]
    std: f64,
    /// Number of cells (checker-1d).
    #[arg(long, default_value_t = 2)]
    cells: usize,
    /// Regression level on even cells (checker-1d).
    #[arg(long, default_value_t = 0.9)]
    eta_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SpecKind {
    #[value(name = "gaussian-1d")]
    Gaussian1d,
    #[value(name = "gaussian-md")]
    GaussianMd,
    #[value(name = "checker-1d")]
    Checker1d,
}

impl SpecArgs {
    fn build(&self) -> Result<DistributionSpec, CliError> {
        let spec = match self.spec {
            SpecKind::Gaussian1d => DistributionSpec::GaussianMixture1d {
                class_prior: self.prior,
                mean0: self.mean0.first().copied().unwrap_or(-1.0),
                std0: self.std0,
                mean1: self.mean1.first().copied().unwrap_or(1.0),
                std1: self.std1,
            },
            SpecKind::GaussianMd => DistributionSpec::GaussianMixtureMd {
                class_prior: self.prior,
                mean0: self.mean0.clone(),
                mean1: self.mean1.clone(),
                std: self.std,
            },
            SpecKind::Checker1d => DistributionSpec::UniformChecker1d {
                cells: self.cells,
                eta_high: self.eta_high,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self.build().ok()).unwrap_or(serde_json::Value::Null)
    }
}

/// Where a command's dataset comes from: a CSV file or a generated sample.
#[derive(Args)]
struct SourceArgs {
    /// Input CSV (header f1..fd,label).
    #[arg(long, conflicts_with = "n")]
    input: Option<PathBuf>,
    /// Generate this many points from the synthetic spec instead of
    /// reading a file.
    #[arg(long)]
    n: Option<usize>,
    /// Seed for the generated sample.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    spec: SpecArgs,
}

impl SourceArgs {
    fn load(&self) -> Result<Dataset, CliError> {
        match (&self.input, self.n) {
            (Some(path), _) => io::read_dataset(path),
            (None, Some(n)) => Ok(sample_dataset(&self.spec.build()?, n, self.seed)?),
            (None, None) => Err(CliError::input("supply either --input or --n with spec flags")),
        }
    }

    fn echo(&self) -> serde_json::Value {
        match &self.input {
            Some(p) => json!({"input": p.display().to_string()}),
            None => json!({"generated": {"n": self.n, "seed": self.seed, "spec": self.spec.echo()}}),
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write the rendered output to this path instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Number of neighbors.
    #[arg(short, long)]
    k: usize,
    /// Number of held-out points.
    #[arg(short, long)]
    p: usize,
    /// Computation method.
    #[arg(long, value_enum, default_value = "exact")]
    method: MethodArg,
    /// Permutation replicates for the Monte-Carlo method.
    #[arg(long, default_value_t = 10_000)]
    replicates: usize,
    /// Seed for the Monte-Carlo method.
    #[arg(long, default_value_t = 0)]
    mc_seed: u64,
    /// Enumeration cap for the brute-force method.
    #[arg(long, default_value_t = 1_000_000)]
    cap: u128,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum MethodArg {
    /// Rank-conditioned closed form.
    Exact,
    /// Exhaustive split enumeration (exact rationals).
    BruteForce,
    /// Incomplete U-statistic Monte-Carlo.
    HoeffdingMc,
}

#[derive(Serialize)]
struct EstimateResult {
    estimate: LpOEstimate,
    elapsed_ms: f64,
}

fn run_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let dataset = args.source.load()?;
    let start = Instant::now();
    let estimate = match args.method {
        MethodArg::Exact => lpo_exact(&dataset, args.k, args.p)?,
        MethodArg::BruteForce => {
            let value =
                rational_to_f64(&lpo_bruteforce_rational(&dataset, args.k, args.p, args.cap)?);
            LpOEstimate {
                value,
                n: dataset.len(),
                p: args.p,
                k: args.k,
                method: EstimateMethod::BruteForce,
                std_error: None,
            }
        }
        MethodArg::HoeffdingMc => {
            incomplete_ustat_estimate(&dataset, args.k, args.p, args.replicates, args.mc_seed)?
        }
    };
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let result = EstimateResult { estimate, elapsed_ms };
    let mut table = format!(
        "leave-{}-out risk of {}-NN on n = {} points\nmethod: {:?}\nvalue: {}\n",
        result.estimate.p, result.estimate.k, result.estimate.n, result.estimate.method,
        result.estimate.value,
    );
    if let Some(se) = result.estimate.std_error {
        table.push_str(&format!("std error: {se}\n"));
    }
    table.push_str(&format!("elapsed: {elapsed_ms:.1} ms\n"));
    let config = json!({
        "source": args.source.echo(),
        "k": args.k, "p": args.p,
        "method": format!("{:?}", args.method),
        "replicates": args.replicates, "mc_seed": args.mc_seed, "cap": args.cap.to_string(),
    });
    output::emit("estimate", config, &result, table, args.out.format, args.out.output.as_deref())
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Held-out counts; one selection curve is emitted per value.
    #[arg(short, long, value_delimiter = ',', required = true)]
    p: Vec<usize>,
    /// Candidate neighbor counts.
    #[arg(long, value_delimiter = ',', required = true)]
    k_grid: Vec<usize>,
    /// Stone constant for confidence radii (default: 2 when the data is
    /// one-dimensional, otherwise none).
    #[arg(long)]
    gamma_d: Option<f64>,
    /// Confidence exponent; the radius fails with probability 2 e^{-x}.
    /// Default ln(2/0.05), a 95% coverage target.
    #[arg(short = 'x', long)]
    confidence_x: Option<f64>,
    /// Write the curves as CSV (p, k, estimate, radius).
    #[arg(long)]
    curve_csv: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

fn run_select(args: &SelectArgs) -> Result<(), CliError> {
    let dataset = args.source.load()?;
    let gamma_d = args.gamma_d.or((dataset.dimension() == 1).then_some(2.0));
    let curves: Vec<SelectionCurve> = args
        .p
        .iter()
        .map(|&p| select_k(&dataset, p, &args.k_grid, gamma_d, args.confidence_x))
        .collect::<Result<_, _>>()?;
    let mut table = String::new();
    for curve in &curves {
        table.push_str(&format!("p = {} (chosen k = {}):\n", curve.p, curve.chosen_k));
        table.push_str("  k  estimate  radius\n");
        for pt in &curve.points {
            let radius = pt
                .confidence_radius
                .map_or("-".to_string(), |r| r.to_string());
            let marker = if pt.k == curve.chosen_k { " *" } else { "" };
            table.push_str(&format!("  {}  {}  {}{}\n", pt.k, pt.estimate.value, radius, marker));
        }
    }
    if let Some(path) = &args.curve_csv {
        let rows = curves
            .iter()
            .flat_map(|c| {
                c.points.iter().map(move |pt| {
                    format!(
                        "{},{},{},{}",
                        c.p,
                        pt.k,
                        pt.estimate.value,
                        pt.confidence_radius.map_or(String::new(), |r| r.to_string())
                    )
                })
            })
            .collect();
        output::write_csv(path, "p,k,estimate,radius", rows)?;
    }
    let config = json!({
        "source": args.source.echo(),
        "p": args.p, "k_grid": args.k_grid,
        "gamma_d": gamma_d,
        "x": args.confidence_x.unwrap_or_else(default_confidence_exponent),
    });
    output::emit("select", config, &curves, table, args.out.format, args.out.output.as_deref())
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    n: usize,
    #[arg(short, long)]
    p: usize,
    #[arg(short, long)]
    k: usize,
    /// Stone constant (2 is the built-in 1-d value).
    #[arg(long, default_value_t = 2.0)]
    gamma_d: f64,
    /// Deviation scale for tail bounds.
    #[arg(short, long, default_value_t = 0.5)]
    t: f64,
    /// Confidence exponent.
    #[arg(short = 'x', long, default_value_t = 1.0)]
    x: f64,
    /// Moment order.
    #[arg(short, long, default_value_t = 4.0)]
    q: f64,
    #[command(flatten)]
    out: OutputArgs,
}

fn run_bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let inputs = BoundInputs {
        n: args.n,
        p: args.p,
        k: args.k,
        q: args.q,
        t: args.t,
        x: args.x,
        gamma_d: args.gamma_d,
    };
    let report = evaluate_all(&inputs)?;
    let mut table = format!(
        "bounds at n = {}, p = {}, k = {}, q = {}, t = {}, x = {}, gamma_d = {}\n",
        args.n, args.p, args.k, args.q, args.t, args.x, args.gamma_d
    );
    table.push_str(&format!(
        "constants: c1_loo = {}, c2 = {}, c1_lpo = {}, delta = {}, gamma = {}, square = {}\n\n",
        report.constants.c1_loo,
        report.constants.c2,
        report.constants.c1_lpo,
        report.constants.delta,
        report.constants.gamma_large_p,
        report.constants.square
    ));
    table.push_str("  bound  value  [clipped]\n");
    for e in &report.entries {
        match e.value {
            Some(v) => {
                let clip = e.clipped.map_or(String::new(), |c| format!("  [{c}]"));
                table.push_str(&format!("  {}  {}{}\n", e.id, v, clip));
            }
            None => table.push_str(&format!(
                "  {}  out of regime ({})\n",
                e.id,
                e.note.as_deref().unwrap_or("")
            )),
        }
    }
    let config = serde_json::to_value(inputs).unwrap_or(serde_json::Value::Null);
    output::emit("bounds", config, &report, table, args.out.format, args.out.output.as_deref())
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(short, long, default_value_t = 10)]
    p: usize,
    #[arg(short, long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    /// Highest central-moment order checked.
    #[arg(long, default_value_t = 4)]
    q_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stone constant override (required for d >= 2 specs).
    #[arg(long)]
    gamma_d: Option<f64>,
    /// Explicit deviation grid (comma-separated); default covers the
    /// observed deviations.
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    /// Test-set size for risk evaluation when d >= 2.
    #[arg(long, default_value_t = 10_000)]
    risk_test_points: usize,
    /// Write the tail table as CSV (t, empirical, bound_id, bound_value).
    #[arg(long)]
    tail_csv: Option<PathBuf>,
    /// Self-test hook: scale every bound before comparison; values below 1
    /// emulate a corrupted constant and must trip the violation exit.
    #[arg(long, hide = true)]
    corrupt_bound_scale: Option<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

fn run_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let spec = args.spec.build()?;
    let cfg = CampaignConfig {
        n: args.n,
        p: args.p,
        k: args.k,
        replicates: args.replicates,
        t_grid: args.t_grid.clone(),
        q_max: args.q_max,
        seed: args.seed,
        gamma_d: args.gamma_d,
        risk_test_points: args.risk_test_points,
    };
    let mut report: ReplicationReport = empirical_campaign(&spec, &cfg)?;
    if let Some(scale) = args.corrupt_bound_scale {
        for check in &mut report.checks {
            check.bound *= scale;
            check.slack_ratio = (check.empirical > 0.0).then(|| check.bound / check.empirical);
            check.violated = check.empirical > check.bound + check.tolerance;
        }
        report.violations = report.checks.iter().filter(|c| c.violated).count();
    }
    let mut table = format!(
        "campaign: n = {}, p = {}, k = {}, replicates = {}, seed = {}, gamma_d = {}\n",
        report.n, report.p, report.k, report.replicates, report.seed, report.gamma_d
    );
    table.push_str(&format!(
        "mean estimate = {}, mean conditional error = {}\nbias = {} (se {}), mse = {} (se {})\n",
        report.mean_estimate,
        report.mean_conditional_error,
        report.bias,
        report.bias_std_error,
        report.mse,
        report.mse_std_error
    ));
    table.push_str(&format!(
        "variance = {}, stability frequency = {}, stone max in-degree = {}\n\n",
        report.variance, report.stability_frequency, report.stone_max_indegree
    ));
    table.push_str("  check  empirical  bound  3se  status\n");
    for c in &report.checks {
        table.push_str(&format!(
            "  {}  {}  {}  {}  {}\n",
            c.id,
            c.empirical,
            c.bound,
            c.tolerance,
            if c.violated { "VIOLATED" } else { "ok" }
        ));
    }
    table.push_str(&format!("\nviolations: {}\n", report.violations));
    if let Some(path) = &args.tail_csv {
        let rows = report
            .tails
            .iter()
            .flat_map(|row| {
                row.envelopes.iter().map(move |env| {
                    format!("{},{},{},{}", row.t, row.empirical, env.id, env.value)
                })
            })
            .collect();
        output::write_csv(path, "t,empirical,bound_id,bound_value", rows)?;
    }
    let config = json!({
        "spec": args.spec.echo(),
        "n": args.n, "p": args.p, "k": args.k,
        "replicates": args.replicates, "q_max": args.q_max, "seed": args.seed,
        "gamma_d": args.gamma_d, "t_grid": args.t_grid,
        "risk_test_points": args.risk_test_points,
        "corrupt_bound_scale": args.corrupt_bound_scale,
    });
    output::emit("verify", config, &report, table, args.out.format, args.out.output.as_deref())?;
    if report.violations > 0 {
        return Err(CliError::check_failed(format!(
            "verification failed: {} violation flag(s) set",
            report.violations
        )));
    }
    Ok(())
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 4)]
    n_min: usize,
    #[arg(long, default_value_t = 10)]
    n_max: usize,
    /// Sweep k = 1..=k_max.
    #[arg(long, default_value_t = 3)]
    k_max: usize,
    /// Random datasets per (n, dimension) pair.
    #[arg(long, default_value_t = 20)]
    datasets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enumeration cap for the brute-force side.
    #[arg(long, default_value_t = 1_000_000)]
    cap: u128,
    /// Permutation-identity check range (all n! permutations).
    #[arg(long, default_value_t = 5)]
    perm_n_min: usize,
    #[arg(long, default_value_t = 6)]
    perm_n_max: usize,
    /// Self-test hook: offset added to every exact value before
    /// comparison; any nonzero offset must trip the failure exit.
    #[arg(long, hide = true)]
    corrupt_dp: Option<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Serialize)]
struct OracleCheck {
    cases: usize,
    max_abs_discrepancy: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct OracleResult {
    split_enumeration: OracleCheck,
    permutation_identity: OracleCheck,
    passed: bool,
}

fn run_oracle(args: &OracleArgs) -> Result<(), CliError> {
    const TOL: f64 = 1e-12;
    let offset = args.corrupt_dp.unwrap_or(0.0);
    if args.n_min < 2 || args.n_max < args.n_min {
        return Err(CliError::input("need 2 <= n_min <= n_max"));
    }
    let mut rng_seed = args.seed;
    let mut sweep_cases = 0usize;
    let mut sweep_worst = 0.0f64;
    for n in args.n_min..=args.n_max {
        for d in [1usize, 2] {
            for _ in 0..args.datasets {
                rng_seed = rng_seed.wrapping_add(1);
                let ds = random_uniform_dataset(n, d, rng_seed);
                for k in 1..=args.k_max.min(n - 1) {
                    for p in 1..=(n - k) {
                        let exact = lpo_exact(&ds, k, p)?.value + offset;
                        let brute =
                            rational_to_f64(&lpo_bruteforce_rational(&ds, k, p, args.cap)?);
                        sweep_worst = sweep_worst.max((exact - brute).abs());
                        sweep_cases += 1;
                    }
                }
            }
        }
    }
    let mut perm_cases = 0usize;
    let mut perm_worst = 0.0f64;
    for n in args.perm_n_min..=args.perm_n_max {
        for m in [2usize, 3] {
            if m > n {
                continue;
            }
            let p = n - m + 1;
            for k in 1..m {
                rng_seed = rng_seed.wrapping_add(1);
                let ds = random_uniform_dataset(n, 1, rng_seed);
                let avg = permutation_average(&ds, k, p, args.perm_n_max)?;
                let exact = lpo_exact(&ds, k, p)?.value + offset;
                perm_worst = perm_worst.max((avg - exact).abs());
                perm_cases += 1;
            }
        }
    }
    let result = OracleResult {
        split_enumeration: OracleCheck {
            cases: sweep_cases,
            max_abs_discrepancy: sweep_worst,
            tolerance: TOL,
            passed: sweep_worst <= TOL,
        },
        permutation_identity: OracleCheck {
            cases: perm_cases,
            max_abs_discrepancy: perm_worst,
            tolerance: TOL,
            passed: perm_worst <= TOL,
        },
        passed: sweep_worst <= TOL && perm_worst <= TOL,
    };
    let table = format!(
        "split enumeration: {} cases, max |exact - brute| = {:.3e} ({})\n\
         permutation identity: {} cases, max |mean - exact| = {:.3e} ({})\n",
        result.split_enumeration.cases,
        result.split_enumeration.max_abs_discrepancy,
        if result.split_enumeration.passed { "ok" } else { "FAILED" },
        result.permutation_identity.cases,
        result.permutation_identity.max_abs_discrepancy,
        if result.permutation_identity.passed { "ok" } else { "FAILED" },
    );
    let config = json!({
        "n_min": args.n_min, "n_max": args.n_max, "k_max": args.k_max,
        "datasets": args.datasets, "seed": args.seed, "cap": args.cap.to_string(),
        "perm_n_min": args.perm_n_min, "perm_n_max": args.perm_n_max,
        "corrupt_dp": args.corrupt_dp,
    });
    let passed = result.passed;
    output::emit("oracle", config, &result, table, args.out.format, args.out.output.as_deref())?;
    if !passed {
        return Err(CliError::check_failed("oracle checks failed"));
    }
    Ok(())
}

/// Uniform random points with fair labels; the oracle sweep needs variety,
/// not realism.
fn random_uniform_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    use rand::Rng;
    let mut rng = lpo_knn::seeding::replicate_rng(seed, 0);
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
    Dataset::from_parts(features, labels).expect("generated data is valid")
}

fn configure_workers(cli_workers: Option<usize>) {
    let from_env = std::env::var("LPO_KNN_WORKERS").ok().and_then(|v| v.parse().ok());
    if let Some(threads) = cli_workers.or(from_env) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_workers(cli.workers);
    let result = match &cli.command {
        Command::Estimate(args) => run_estimate(args),
        Command::Select(args) => run_select(args),
        Command::Bounds(args) => run_bounds(args),
        Command::Verify(args) => run_verify(args),
        Command::Oracle(args) => run_oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
