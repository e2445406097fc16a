use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;

use coordest::FunctionSpec;
use coordest_cli::commands::{
    cmd_bench_aggregate, cmd_bench_tight, cmd_derive, cmd_estimate, cmd_sample, cmd_verify, fmt4, parse_estimator,
    OrderChoice, SchemeSpec, VerifyOptions,
};
use coordest_cli::ingest::{parse_rational_list, read_matrix_csv, synthetic_matrix};
use coordest_cli::{Aggregate, CliError, KeyFilter, QuerySpec, Result};

#[derive(Parser)]
#[command(name = "coordest", version, about = "Sum-query estimates from coordinated samples")]
struct Cli {
    /// Salt mixed into every item's seed hash.
    #[arg(long, global = true, default_value = "")]
    salt: String,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a CSV dataset (header `key,<instance>,...`) into a sample file.
    Sample(SampleArgs),
    /// Estimate a sum query from a sample file.
    Estimate(EstimateArgs),
    /// Build the order-optimal estimator table of a finite domain.
    Derive(DeriveArgs),
    /// Run the estimator property checks on a grid of vectors.
    Verify(VerifyArgs),
    /// Run a benchmark family.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SchemeArgs {
    /// PPS rate tau*: one for all instances or one per instance. An entry is
    /// sampled when its value is at least seed * rate.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    rate: Vec<f64>,
    /// Step scheme breakpoints in (0,1]; replaces PPS.
    #[arg(long, value_delimiter = ',', requires = "levels")]
    breakpoints: Option<Vec<f64>>,
    /// Step scheme levels, one per breakpoint.
    #[arg(long, value_delimiter = ',', requires = "breakpoints")]
    levels: Option<Vec<f64>>,
}

impl SchemeArgs {
    fn spec(&self) -> SchemeSpec {
        match (&self.breakpoints, &self.levels) {
            (Some(b), Some(l)) => SchemeSpec::Step { breakpoints: b.clone(), levels: l.clone() },
            _ => SchemeSpec::Pps(self.rate.clone()),
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    input: PathBuf,
    /// Sample file to write (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Per-item seeds replacing the hash, in input order.
    #[arg(long, hide = true, value_delimiter = ',')]
    inject_seeds: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum QueryKind {
    /// Sum of |difference|^p.
    Lpp,
    /// p-th root of the lpp sum.
    Lp,
    /// Sum of max(0, v1 - v2)^p.
    Lpplus,
    /// Sum of --function over the selected instances.
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionKind {
    Rg,
    Rgplus,
    Tight,
}

impl FunctionKind {
    fn spec(self, p: f64) -> FunctionSpec {
        match self {
            FunctionKind::Rg => FunctionSpec::RgP { p },
            FunctionKind::Rgplus => FunctionSpec::RgPPlus { p },
            FunctionKind::Tight => FunctionSpec::TightFamily { p },
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    sample: PathBuf,
    #[arg(long, value_enum)]
    query: QueryKind,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Item function for `--query custom`.
    #[arg(long, value_enum, default_value = "rg")]
    function: FunctionKind,
    /// 1-based instances feeding the item function.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    instances: Vec<usize>,
    /// Explicit item keys (default: every item).
    #[arg(long, value_delimiter = ',', conflicts_with = "key_prefix")]
    keys: Option<Vec<String>>,
    /// Only items whose key starts with this.
    #[arg(long)]
    key_prefix: Option<String>,
    /// lstar, ustar or ht.
    #[arg(long, default_value = "lstar")]
    estimator: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderKind {
    /// Smaller function values first (gives L*).
    Lower,
    /// Larger function values first (gives U*).
    Higher,
    /// Chains read from --order-file.
    Chains,
}

#[derive(Args)]
struct DeriveArgs {
    /// Domain file: one vector per line, e.g. `3,1` or `(1/2,0)`.
    #[arg(long)]
    domain: PathBuf,
    /// Step breakpoints, exact: `1/4,1/2,3/4`.
    #[arg(long)]
    breakpoints: String,
    /// Step levels, exact: `1,2,3`.
    #[arg(long)]
    levels: String,
    #[arg(long, value_enum, default_value = "lower")]
    order: OrderKind,
    /// One chain per line, earliest first: `(3,1) < (3,2) < (3,0)`.
    #[arg(long, required_if_eq("order", "chains"))]
    order_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "rgplus")]
    function: FunctionKind,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Table JSON to write (default: only the listing is printed).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "rgplus")]
    function: FunctionKind,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Points per axis of the [0,1]^2 grid.
    #[arg(long, default_value_t = 20)]
    grid: usize,
    /// Seeds i/n, i = 1..n, for the pointwise checks.
    #[arg(long, default_value_t = 99)]
    seeds: usize,
    /// PPS rates of the two instances.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    #[arg(long)]
    no_ustar: bool,
    #[arg(long)]
    no_ht: bool,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Family {
    /// Second moments of v-optimal and L* on the family whose ratio tends to 4.
    Tight,
    /// Relative error of sum estimates as the number of items grows.
    Aggregate,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Defaults to 0.25 for `tight` and 1 for `aggregate`.
    #[arg(long)]
    p: Option<f64>,
    /// Dataset for `aggregate` (default: a synthetic one).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthetic dataset size.
    #[arg(long, default_value_t = 10_000)]
    items: usize,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, value_enum, default_value = "rgplus")]
    function: FunctionKind,
    #[arg(long, default_value = "lstar")]
    estimator: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Cmd::Bench(b) = &cli.cmd {
        let p = b.p.unwrap_or(0.25);
        if b.family == Family::Tight && !(0.0..0.5).contains(&p) {
            Cli::command()
                .error(ErrorKind::ValueValidation, format!("--p must lie in [0, 0.5) for the tight family, got {p}"))
                .exit();
        }
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

/// Runs the command; `Ok(false)` means it ran but something failed a check.
fn run(cli: &Cli) -> Result<bool> {
    match &cli.cmd {
        Cmd::Sample(a) => {
            let input = BufReader::new(File::open(&a.input)?);
            let seeds = a.inject_seeds.as_deref();
            let set = match &a.output {
                Some(path) => {
                    let mut out = BufWriter::new(File::create(path)?);
                    let set = cmd_sample(input, &a.scheme.spec(), &cli.salt, seeds, &mut out)?;
                    out.flush()?;
                    set
                }
                None => cmd_sample(input, &a.scheme.spec(), &cli.salt, seeds, io::stdout().lock())?,
            };
            if a.output.is_some() {
                let sampled: usize = set.records.iter().map(|r| r.outcome.sampled().len()).sum();
                if cli.json {
                    print_json(&json!({ "items": set.records.len(), "sampled_entries": sampled }))?;
                } else {
                    println!("{} items, {sampled} sampled entries", set.records.len());
                }
            }
            Ok(true)
        }
        Cmd::Estimate(a) => {
            let aggregate = match a.query {
                QueryKind::Lpp => Aggregate::LpP(a.p),
                QueryKind::Lp => Aggregate::Lp(a.p),
                QueryKind::Lpplus => Aggregate::LpPlus(a.p),
                QueryKind::Custom => Aggregate::CustomSum(a.function.spec(a.p)),
            };
            let keys = match (&a.keys, &a.key_prefix) {
                (Some(k), _) => KeyFilter::Keys(k.clone()),
                (None, Some(p)) => KeyFilter::Prefix(p.clone()),
                (None, None) => KeyFilter::All,
            };
            let query = QuerySpec { aggregate, instances: a.instances.clone(), keys };
            let kind = parse_estimator(&a.estimator)?;
            let res = cmd_estimate(BufReader::new(File::open(&a.sample)?), &query, &kind)?;
            if cli.json {
                print_json(&serde_json::to_value(&res)?)?;
            } else {
                println!(
                    "{} over {} items ({} contributing) with {}: {}",
                    res.query, res.items, res.contributing, res.estimator, res.estimate
                );
                if let Some(note) = &res.note {
                    println!("note: {note}");
                }
                if !res.missing_keys.is_empty() {
                    println!("not in sample (counted as zero): {}", res.missing_keys.join(","));
                }
                for f in &res.failures {
                    println!("failed {}: {}", f.key, f.error);
                }
            }
            Ok(res.failures.is_empty())
        }
        Cmd::Derive(a) => {
            let order = match a.order {
                OrderKind::Lower => OrderChoice::LowerFirst,
                OrderKind::Higher => OrderChoice::HigherFirst,
                OrderKind::Chains => {
                    let path = a.order_file.as_ref().ok_or_else(|| CliError::Input("--order-file is required".into()))?;
                    OrderChoice::Chains(fs::read_to_string(path)?)
                }
            };
            let table = cmd_derive(
                &a.function.spec(a.p),
                &fs::read_to_string(&a.domain)?,
                parse_rational_list(&a.breakpoints)?,
                parse_rational_list(&a.levels)?,
                &order,
            )?;
            if let Some(path) = &a.output {
                fs::write(path, serde_json::to_string_pretty(&table.to_json())? + "\n")?;
            }
            if cli.json {
                print_json(&table.to_json())?;
            } else {
                print!("{}", table.listing());
            }
            Ok(true)
        }
        Cmd::Verify(a) => {
            let report = cmd_verify(&VerifyOptions {
                fspec: a.function.spec(a.p),
                grid: a.grid,
                rates: a.rates.clone(),
                seeds: a.seeds,
                check_ustar: !a.no_ustar,
                check_ht: !a.no_ht,
            })?;
            if cli.json {
                print_json(&serde_json::to_value(&report)?)?;
            } else {
                let at = report.argmax.as_ref().map(|v| format!(" at {v:?}")).unwrap_or_default();
                println!(
                    "{} vectors, {} points, {} violations, max L* ratio {}{at}",
                    report.vectors,
                    report.points,
                    report.violations.len(),
                    fmt4(report.max_lstar_ratio)
                );
                for v in report.violations.iter().take(20) {
                    println!("  {:?} {} {:?} seed {:?}: {}", v.check, v.estimator, v.vector, v.seed, v.detail);
                }
                println!("{}", if report.passed() { "PASS" } else { "FAIL" });
            }
            Ok(report.passed())
        }
        Cmd::Bench(a) => match a.family {
            Family::Tight => {
                let t = cmd_bench_tight(a.p.unwrap_or(0.25))?;
                if cli.json {
                    print_json(&serde_json::to_value(t)?)?;
                } else {
                    println!("({}, {}, {})", fmt4(t.opt_sm), fmt4(t.lstar_sm), fmt4(t.ratio));
                    println!(
                        "numeric ({}, {}, {}), largest relative gap {:.1e}",
                        fmt4(t.numeric_opt_sm),
                        fmt4(t.numeric_lstar_sm),
                        fmt4(t.numeric_ratio),
                        t.max_rel_gap
                    );
                }
                Ok(t.max_rel_gap <= 1e-4)
            }
            Family::Aggregate => {
                let matrix = match &a.input {
                    Some(path) => read_matrix_csv(BufReader::new(File::open(path)?))?,
                    None => synthetic_matrix(a.items, &cli.salt)?,
                };
                let kind = parse_estimator(&a.estimator)?;
                let report = cmd_bench_aggregate(&matrix, &a.function.spec(a.p.unwrap_or(1.0)), &kind, &a.sizes, a.trials, &cli.salt)?;
                if cli.json {
                    print_json(&serde_json::to_value(&report)?)?;
                } else {
                    println!("{:>8} {:>14} {:>14} {:>12} {:>10}", "items", "truth", "mean", "std error", "rel rmse");
                    for r in &report.rows {
                        println!(
                            "{:>8} {:>14.6} {:>14.6} {:>12.3e} {:>10.4}",
                            r.items, r.truth, r.mean, r.std_error, r.relative_rmse
                        );
                    }
                }
                Ok(true)
            }
        },
    }
}
