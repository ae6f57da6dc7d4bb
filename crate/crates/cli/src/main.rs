//! Command-line front end for the theta-bound library.
//!
//! The binary is a thin dispatcher: it parses arguments, loads a channel,
//! calls into the library, and formats results. All numeric work, including
//! parallelism, lives behind the library API.
//!
//! Exit codes: 0 success, 1 verification found violations, 2 usage or input
//! error, 3 numeric failure. Identical invocations produce byte-identical
//! output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use theta_bound::binary::{binary_entropy, binary_theta, rho_theta_limit, z_from_gram};
use theta_bound::bound::{bound_curve, default_rho_grid, SearchOptions};
use theta_bound::channel::{Channel, Composition};
use theta_bound::oracle::{
    check_cap_packing, check_plotkin_exhaustive, check_rowsum_eigenvalue,
};
use theta_bound::theta::{
    optimize_theta, optimize_theta_weighted, OptimizeOptions, ThetaCertificate, DEFAULT_SEED,
};
use theta_bound::{configure_thread_pool, Error};

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "thetabound",
    version,
    about = "Certified upper bounds on minimum Bhattacharyya distance over discrete channels"
)]
struct Cli {
    /// Cap on worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Display values in bits instead of nats. Files always stay in nats.
    #[arg(long, global = true)]
    bits: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimax theta value of a channel at one degree, with certificate.
    Theta(ThetaArgs),
    /// Weighted theta value for a fixed composition over the inputs.
    ThetaWeighted(ThetaWeightedArgs),
    /// Distance-rate bound curve over degree and rate grids, as CSV.
    BoundCurve(BoundCurveArgs),
    /// Property checks; exit 0 only when zero violations are found.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Closed-form table for binary channels over a weight grid.
    Binary(BinaryArgs),
}

#[derive(Args)]
struct ThetaArgs {
    /// Channel: a JSON file path, or bsc:<p>, pentagon, identity:<k>.
    #[arg(long)]
    channel: String,
    /// Representation degree, at least 1.
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Random starts beyond the structured ones.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Write the full certificate as JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThetaWeightedArgs {
    /// Channel: a JSON file path, or bsc:<p>, pentagon, identity:<k>.
    #[arg(long)]
    channel: String,
    #[arg(long)]
    rho: f64,
    /// Input weights, comma separated, summing to 1.
    #[arg(long, value_delimiter = ',', required = true)]
    q: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundCurveArgs {
    /// Channel: a JSON file path, or bsc:<p>, pentagon, identity:<k>.
    #[arg(long)]
    channel: String,
    /// Composition over the inputs; defaults to uniform.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Degree grid; defaults to a log-spaced grid up to 10^4.
    #[arg(long, value_delimiter = ',')]
    rho_grid: Option<Vec<f64>>,
    /// Rate grid in nats; defaults to 0.05..0.70 in steps of 0.05.
    #[arg(long, value_delimiter = ',')]
    r_grid: Option<Vec<f64>>,
    /// Spend extra optimizer iterations per candidate type. The default
    /// search already solves channels with positive semidefinite caps
    /// exactly; this helps on channels where it does not.
    #[arg(long)]
    refine: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write the CSV here instead of stdout, and print a summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Random cap-packing instances: vectors pinned to a common cap must
    /// contain a close pair.
    CapPacking(CapPackingArgs),
    /// Exhaustive enumeration of all small codes against the finite
    /// exponential-Plotkin inequality, using a certified theta value.
    Exhaustive(ExhaustiveArgs),
    /// Largest Gram eigenvalue never exceeds the max absolute row sum.
    RowSum(TrialsArgs),
    /// Numerical optimizer against the closed-form binary solution over a
    /// fixed degree/weight/channel grid.
    ClosedForm(SeedOnlyArgs),
}

#[derive(Args)]
struct CapPackingArgs {
    /// Total instances, split evenly across the (M, dim) grid.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Family sizes to exercise.
    #[arg(long, value_delimiter = ',', default_value = "2,3,5")]
    m: Vec<usize>,
    /// Ambient dimensions to exercise.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    dim: Vec<usize>,
}

#[derive(Args)]
struct ExhaustiveArgs {
    /// Channel: a JSON file path, or bsc:<p>, pentagon, identity:<k>.
    #[arg(long)]
    channel: String,
    /// Block length.
    #[arg(long)]
    n: usize,
    /// Code size.
    #[arg(long = "M")]
    m: usize,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct TrialsArgs {
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct SeedOnlyArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct BinaryArgs {
    /// Bhattacharyya coefficient between the two inputs, in (0, 1].
    #[arg(long, conflicts_with = "z")]
    b01: Option<f64>,
    /// Bhattacharyya distance between the two inputs, in nats.
    #[arg(long)]
    z: Option<f64>,
    #[arg(long, default_value_t = 1e4)]
    rho: f64,
    /// Weight-of-input-1 grid, comma separated, each in [0, 1].
    #[arg(long, value_delimiter = ',', required = true)]
    lambda: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Entry point and error mapping
// ---------------------------------------------------------------------------

/// Restores the default SIGPIPE disposition so that piping into a pager or
/// `head` ends the process quietly, unix style, instead of panicking on the
/// first failed write. Rust mutes the signal by default.
fn reset_sigpipe() {
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = configure_thread_pool(threads) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let units = Units { bits: cli.bits };
    let run = match cli.command {
        Command::Theta(args) => cmd_theta(args, units),
        Command::ThetaWeighted(args) => cmd_theta_weighted(args, units),
        Command::BoundCurve(args) => cmd_bound_curve(args, units),
        Command::Verify(command) => cmd_verify(command),
        Command::Binary(args) => cmd_binary(args, units),
    };
    match run {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Usage and input problems exit 2; failures of the numerics exit 3.
fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Optimizer(_) | Error::Internal(_) => 3,
        _ => 2,
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Built-in names are matched by prefix so that a typo inside one reports
/// the parse error instead of a misleading missing-file error.
fn load_channel(name_or_path: &str) -> theta_bound::Result<Channel> {
    if name_or_path == "pentagon"
        || name_or_path.starts_with("bsc:")
        || name_or_path.starts_with("identity:")
    {
        Channel::from_named(name_or_path)
    } else {
        Channel::from_path(Path::new(name_or_path))
    }
}

/// Display-only unit conversion. Stored artifacts are always in nats.
#[derive(Clone, Copy)]
struct Units {
    bits: bool,
}

impl Units {
    fn value(self, nats: f64) -> f64 {
        if self.bits {
            nats / std::f64::consts::LN_2
        } else {
            nats
        }
    }

    fn label(self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }
}

/// Six significant digits, positional when the magnitude is moderate and
/// scientific otherwise. Zero and non-finite values print canonically.
///
/// Rounding happens before the display form is chosen, so a carry at the
/// decade boundary (0.99999995 becoming 1.00000) cannot smuggle in a
/// seventh digit.
fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.5e}", x);
    let split = sci.find('e').expect("scientific format always has an exponent");
    let exp: i32 = sci[split + 1..].parse().expect("exponent is an integer");
    if (-4..6).contains(&exp) {
        let mantissa: f64 = sci[..split].parse().expect("mantissa is a float");
        format!("{:.*}", (5 - exp).max(0) as usize, mantissa * 10f64.powi(exp))
    } else {
        sci
    }
}


fn build_options(seed: u64, restarts: Option<usize>, max_iterations: Option<usize>) -> OptimizeOptions {
    let mut options = OptimizeOptions::with_seed(seed);
    if let Some(r) = restarts {
        options.restarts = r;
    }
    if let Some(n) = max_iterations {
        options.max_iterations = n;
    }
    options
}

fn print_certificate(cert: &ThetaCertificate, units: Units, out: Option<&PathBuf>) -> theta_bound::Result<()> {
    println!("rho: {}", sig6(cert.representation.rho()));
    println!("value: {} {}", sig6(units.value(cert.value)), units.label());
    println!("feasibility residual: {}", sig6(cert.feasibility_residual));
    println!(
        "restarts used: {} ({})",
        cert.restarts_used,
        if cert.converged { "converged" } else { "budget exhausted" }
    );
    if let Some(path) = out {
        std::fs::write(path, cert.to_json_string())?;
        println!("certificate written to {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_theta(args: ThetaArgs, units: Units) -> theta_bound::Result<u8> {
    let channel = load_channel(&args.channel)?;
    let gram = channel.gram();
    let options = build_options(args.seed, args.restarts, args.max_iterations);
    let cert = optimize_theta(&gram, args.rho, &options)?;
    println!("channel: {} ({} inputs)", args.channel, channel.num_inputs());
    print_certificate(&cert, units, args.out.as_ref())?;
    Ok(0)
}

fn cmd_theta_weighted(args: ThetaWeightedArgs, units: Units) -> theta_bound::Result<u8> {
    let channel = load_channel(&args.channel)?;
    let gram = channel.gram();
    let q = Composition::new(args.q)?;
    let options = build_options(args.seed, args.restarts, args.max_iterations);
    let cert = optimize_theta_weighted(&gram, args.rho, &q, &options)?;
    println!("channel: {} ({} inputs)", args.channel, channel.num_inputs());
    let weights: Vec<String> = q.as_slice().iter().map(|w| sig6(*w)).collect();
    println!("weights: [{}]", weights.join(", "));
    print_certificate(&cert, units, args.out.as_ref())?;
    Ok(0)
}

fn cmd_bound_curve(args: BoundCurveArgs, units: Units) -> theta_bound::Result<u8> {
    let channel = load_channel(&args.channel)?;
    let gram = channel.gram();
    let p = match args.p {
        Some(list) => Composition::new(list)?,
        None => Composition::uniform(channel.num_inputs()),
    };
    let rho_grid = args.rho_grid.unwrap_or_else(default_rho_grid);
    let r_grid = args
        .r_grid
        .unwrap_or_else(|| (1..=14).map(|i| f64::from(i) * 0.05).collect());
    let mut search = if args.refine {
        SearchOptions::default()
    } else {
        SearchOptions::coarse(args.seed)
    };
    search.optimize.seed = args.seed;
    let curve = bound_curve(&gram, &p, &rho_grid, &r_grid, &search)?;
    let csv = curve.to_csv();
    match args.out {
        Some(path) => {
            std::fs::write(&path, &csv)?;
            println!("wrote {} ({} rates)", path.display(), curve.points.len());
            for point in &curve.points {
                let rate = sig6(units.value(point.r));
                if point.distance_bound.is_finite() {
                    let rho = point.source.as_ref().map(|b| b.rho).unwrap_or(f64::NAN);
                    println!(
                        "R {rate} {}: d <= {} {} (rho {})",
                        units.label(),
                        sig6(units.value(point.distance_bound)),
                        units.label(),
                        sig6(rho)
                    );
                } else {
                    println!("R {rate} {}: no bound on this grid", units.label());
                }
            }
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_binary(args: BinaryArgs, units: Units) -> theta_bound::Result<u8> {
    let z = match (args.b01, args.z) {
        (Some(b), None) => {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "b01 must lie in (0, 1], got {b}"
                )));
            }
            -b.ln()
        }
        (None, Some(z)) => z,
        _ => {
            return Err(Error::InvalidInput(
                "provide exactly one of --b01 or --z".into(),
            ))
        }
    };
    println!("z: {} nats (b01 = {})", sig6(z), sig6((-z).exp()));
    println!("rho: {}", sig6(args.rho));
    println!("units: {}", units.label());
    println!(
        "{:<10} {:<14} {:<14} {:<14} {:<14}",
        "lambda", "theta", "rho*theta", "limit", "rate_threshold"
    );
    for &lambda in &args.lambda {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidInput(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        let q = Composition::new(vec![1.0 - lambda, lambda])?;
        let geometry = binary_theta(z, args.rho, &q)?;
        let limit = rho_theta_limit(&q, z)?;
        let threshold = std::f64::consts::LN_2 - binary_entropy(lambda);
        println!(
            "{:<10} {:<14} {:<14} {:<14} {:<14}",
            sig6(lambda),
            sig6(units.value(geometry.value)),
            sig6(units.value(args.rho * geometry.value)),
            sig6(units.value(limit)),
            sig6(units.value(threshold))
        );
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// Verification suites
// ---------------------------------------------------------------------------

fn cmd_verify(command: VerifyCommand) -> theta_bound::Result<u8> {
    let (checked, violations, tightest) = match command {
        VerifyCommand::CapPacking(args) => verify_cap_packing(args)?,
        VerifyCommand::Exhaustive(args) => verify_exhaustive(args)?,
        VerifyCommand::RowSum(args) => verify_row_sum(args)?,
        VerifyCommand::ClosedForm(args) => verify_closed_form(args)?,
    };
    let summary = serde_json::json!({
        "checked": checked,
        "violations": violations,
        "tightest_instance": tightest,
    });
    println!("summary: {summary}");
    Ok(u8::from(violations > 0))
}

fn verify_cap_packing(args: CapPackingArgs) -> theta_bound::Result<(u64, u64, serde_json::Value)> {
    let combos: Vec<(usize, usize)> = args
        .m
        .iter()
        .flat_map(|&m| args.dim.iter().map(move |&dim| (m, dim)))
        .collect();
    if combos.is_empty() {
        return Err(Error::InvalidInput("empty M or dim grid".into()));
    }
    // Split the budget evenly, rounding up so the total is never under the
    // requested count.
    let per_combo = args.trials.div_ceil(combos.len() as u64);
    let mut checked = 0;
    let mut violations = 0;
    let mut tightest = serde_json::Value::Null;
    let mut worst = f64::INFINITY;
    for (i, &(m, dim)) in combos.iter().enumerate() {
        let report = check_cap_packing(m, dim, per_combo, args.seed.wrapping_add(i as u64))?;
        println!(
            "M={m} dim={dim}: {} trials, {} violations, worst margin {}",
            report.trials,
            report.violations,
            sig6(report.worst_margin)
        );
        checked += report.trials;
        violations += report.violations;
        if report.worst_margin < worst {
            worst = report.worst_margin;
            tightest = serde_json::json!({"M": m, "dim": dim, "margin": report.worst_margin});
        }
    }
    Ok((checked, violations, tightest))
}

fn verify_exhaustive(args: ExhaustiveArgs) -> theta_bound::Result<(u64, u64, serde_json::Value)> {
    let channel = load_channel(&args.channel)?;
    let gram = channel.gram();
    // Any certified upper bound on theta is a sound input here; a loose
    // one only weakens the inequality being checked.
    let cert = optimize_theta(&gram, args.rho, &OptimizeOptions::with_seed(args.seed))?;
    println!(
        "theta certificate: value {} nats, residual {}",
        sig6(cert.value),
        sig6(cert.feasibility_residual)
    );
    let report = check_plotkin_exhaustive(&gram, args.n, args.m, args.rho, cert.value)?;
    println!(
        "codes checked: {}, violations: {}, forced max inner product {}",
        report.codes_checked,
        report.violations,
        sig6(report.rhs)
    );
    println!(
        "tightest margin {} at code {:?}",
        sig6(report.tightest_margin),
        report.tightest_code
    );
    let tightest = serde_json::json!({
        "code": report.tightest_code,
        "margin": report.tightest_margin,
        "rhs": report.rhs,
    });
    Ok((report.codes_checked, report.violations, tightest))
}

fn verify_row_sum(args: TrialsArgs) -> theta_bound::Result<(u64, u64, serde_json::Value)> {
    let report = check_rowsum_eigenvalue(args.trials, args.seed)?;
    println!(
        "{} trials, {} violations, worst margin {}",
        report.trials,
        report.violations,
        sig6(report.worst_margin)
    );
    let tightest = serde_json::json!({"margin": report.worst_margin});
    Ok((report.trials, report.violations, tightest))
}

/// Crossover probability of the binary symmetric channel whose inputs have
/// Bhattacharyya coefficient `b`: solves 2 sqrt(p(1-p)) = b on [0, 1/2].
fn crossover_for_coefficient(b: f64) -> f64 {
    (1.0 - (1.0 - b * b).sqrt()) / 2.0
}

fn verify_closed_form(args: SeedOnlyArgs) -> theta_bound::Result<(u64, u64, serde_json::Value)> {
    const TOLERANCE: f64 = 1e-4;
    let rhos = [1.0, 2.0, 5.0, 10.0, 100.0];
    let weights = [0.5, 0.7, 0.9];
    let coefficients = [0.2, 0.6, 0.9];
    let mut checked = 0;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut tightest = serde_json::Value::Null;
    for &b in &coefficients {
        let channel = Channel::binary_symmetric(crossover_for_coefficient(b))?;
        let gram = channel.gram();
        let z = z_from_gram(&gram)?;
        for &rho in &rhos {
            for &q0 in &weights {
                let q = Composition::new(vec![q0, 1.0 - q0])?;
                let closed = binary_theta(z, rho, &q)?;
                let numeric =
                    optimize_theta_weighted(&gram, rho, &q, &OptimizeOptions::fast(args.seed))?;
                let error = (numeric.value - closed.value).abs();
                checked += 1;
                if error > TOLERANCE {
                    violations += 1;
                    println!(
                        "MISMATCH b01={} rho={} q0={}: optimizer {} vs closed form {}",
                        sig6(b),
                        sig6(rho),
                        sig6(q0),
                        sig6(numeric.value),
                        sig6(closed.value)
                    );
                }
                // Track the smallest remaining headroom to the tolerance.
                let margin = TOLERANCE - error;
                if margin < worst {
                    worst = margin;
                    tightest = serde_json::json!({
                        "b01": b, "rho": rho, "q0": q0, "margin": margin,
                    });
                }
            }
        }
    }
    println!(
        "{checked} grid cases, {violations} beyond tolerance {}",
        sig6(TOLERANCE)
    );
    Ok((checked, violations, tightest))
}
