//! Command-line front end: fit rules to a column of values, reproduce the
//! simulation tables and ablations, trace regret curves, and run the
//! count-matrix denoising protocol. Every subcommand is deterministic given
//! its flags and seed.

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use sureshrink::bench::{
    self, ablation_knots_and_bandwidths, fmt_sig, preset_scenarios, regret_curve, run_table,
    AblationKind, EstimatorId, PriorTag, ReportTable,
};
use sureshrink::denoise::{choose_targets, denoise_cells, synthetic_expression, ExpressionMatrix};
use sureshrink::density::{BandwidthRule, GridSpec};
use sureshrink::estimators::{
    fit_bg, fit_constrained_pwl, fit_jz_npmle, fit_linear_sure, fit_monotone_pwc, fit_tv_pwc,
    predict, KnotStrategy, NpmleConfig, PwcFitConfig, PwlFitConfig, TauSelector,
};
use sureshrink::rules::SeparableRule;
use sureshrink::{Error, FitReport, SampleSet};

#[derive(Parser)]
#[command(name = "sureshrink", version, about = "Shrinkage estimation for many normal means")]
struct Cli {
    /// INI-style key=value file supplying default flag values (explicit
    /// flags win on conflict).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker cap for parallel sections (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one rule to a single-column file of observations.
    Fit(FitArgs),
    /// Reproduce a benchmark table over seeded replications.
    Simulate(SimulateArgs),
    /// Knot and bandwidth ablation grids.
    Ablate(AblateArgs),
    /// Paired Monte Carlo regret against the oracle across sample sizes.
    Regret(RegretArgs),
    /// Denoise a cells-by-genes count matrix.
    Denoise(DenoiseArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input file: one observation per line.
    #[arg(long)]
    input: PathBuf,
    /// Known noise standard deviation.
    #[arg(long)]
    sigma: f64,
    /// One of: linear, pwl, pwc, tv, bg, jz.
    #[arg(long)]
    method: String,
    /// Budget selector for pwl: ub, plugin, or cv.
    #[arg(long, default_value = "plugin")]
    tau_selector: String,
    /// Knot strategy for pwl: a count for regular knots, "order", or
    /// "percentiles".
    #[arg(long, default_value = "30")]
    knots: String,
    /// Bandwidth for pwc/tv/bg: "asymptotic", "bg", "silverman", or a number.
    #[arg(long, default_value = "asymptotic")]
    bandwidth: String,
    /// Seed (used by the cv selector).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for report.json and rule.csv.
    #[arg(long)]
    out: PathBuf,
    /// Evaluation grid for the rule CSV as lo,hi,size (default: data range
    /// padded by one noise sd, 512 points).
    #[arg(long)]
    grid: Option<String>,
    /// Also write a gnuplot-friendly rule.dat.
    #[arg(long, default_value_t = false)]
    emit_gnuplot: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset: sparse-high, dense-high, sparse-low, dense-low.
    #[arg(long)]
    table: String,
    /// Comma-separated estimator names overriding the preset list.
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// Which grid: pwl-knots, pwc-knots, pwc-bandwidths.
    #[arg(long)]
    which: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    /// Comma-separated sparse k values (mu = 5 rows).
    #[arg(long, default_value = "5,50,500")]
    sparse: String,
    /// Comma-separated dense priors (uniform, normal, laplace, mixture).
    #[arg(long, default_value = "uniform,normal,laplace")]
    priors: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegretArgs {
    /// Comma-separated increasing sample sizes.
    #[arg(long, default_value = "100,1000,10000")]
    n: String,
    /// Estimator name.
    #[arg(long, default_value = "pwc")]
    estimator: String,
    /// Dense prior for the means.
    #[arg(long, default_value = "normal")]
    prior: String,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = false)]
    emit_gnuplot: bool,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Counts CSV (header: cell_id,<genes...>).
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Coordinates CSV (cell_id,x,y).
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Use the bundled synthetic generator instead of input files.
    #[arg(long, default_value_t = false)]
    synthetic: bool,
    #[arg(long, default_value_t = 1000)]
    cells: usize,
    #[arg(long, default_value_t = 241)]
    genes: usize,
    /// Number of randomly selected target cells.
    #[arg(long, default_value_t = 1000)]
    targets: usize,
    /// Comma-separated method names.
    #[arg(long, default_value = "identity,pwl_cv,pwc,bg,jz_em")]
    methods: String,
    /// Neighbors for the pseudo-truth.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let argv = match inject_config_defaults(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = Cli::parse_from(argv);
    if let Some(jobs) = cli.jobs {
        // ignore failure: the pool can only be built once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Merge `key=value` lines from `--config` into argv as defaults: a key is
/// applied only when the corresponding `--key` flag is absent.
fn inject_config_defaults(mut argv: Vec<String>) -> Result<Vec<String>, Error> {
    let pos = argv.iter().position(|a| a == "--config");
    let Some(pos) = pos else { return Ok(argv) };
    if pos + 1 >= argv.len() {
        return Err(Error::InvalidInput("--config needs a path".into()));
    }
    let path = argv[pos + 1].clone();
    let text = fs::read_to_string(&path)?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse { line: lineno + 1, msg: "expected key=value".into() });
        };
        let flag = format!("--{}", k.trim());
        if !argv.iter().any(|a| *a == flag) {
            argv.push(flag);
            argv.push(v.trim().to_string());
        }
    }
    Ok(argv)
}

fn run(command: Command) -> Result<u8, Error> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Regret(args) => cmd_regret(args),
        Command::Denoise(args) => cmd_denoise(args),
    }
}

fn read_values(path: &Path) -> Result<Vec<f64>, Error> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("invalid number '{line}'"),
        })?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("no values in {}", path.display())));
    }
    Ok(values)
}

fn parse_bandwidth(s: &str) -> Result<BandwidthRule, Error> {
    match s {
        "asymptotic" => Ok(BandwidthRule::AsymptoticN16),
        "bg" => Ok(BandwidthRule::BgLogNHalf),
        "silverman" => Ok(BandwidthRule::Silverman),
        other => other
            .parse::<f64>()
            .map(|h| BandwidthRule::Fixed { h })
            .map_err(|_| Error::InvalidInput(format!("invalid bandwidth '{other}'"))),
    }
}

fn parse_knots(s: &str) -> Result<KnotStrategy, Error> {
    match s {
        "order" => Ok(KnotStrategy::OrderStatistics),
        "percentiles" => Ok(KnotStrategy::Percentiles),
        other => other
            .parse::<usize>()
            .map(KnotStrategy::Regular)
            .map_err(|_| Error::InvalidInput(format!("invalid knot strategy '{other}'"))),
    }
}

fn parse_list<T, F: Fn(&str) -> Result<T, Error>>(s: &str, f: F) -> Result<Vec<T>, Error> {
    s.split(',').map(|p| f(p.trim())).collect()
}

fn cmd_fit(args: FitArgs) -> Result<u8, Error> {
    let values = read_values(&args.input)?;
    let sample = SampleSet::new(values, args.sigma)?;
    let seed = args.seed;

    let tau_selector = match args.tau_selector.as_str() {
        "ub" => TauSelector::UpperBound,
        "plugin" => TauSelector::Plugin,
        "cv" => TauSelector::Cv { k: 5, grid_size: 20 },
        other => return Err(Error::InvalidInput(format!("unknown tau selector '{other}'"))),
    };

    let report: FitReport = match args.method.as_str() {
        "linear" => fit_linear_sure(&sample)?,
        "pwl" => fit_constrained_pwl(
            &sample,
            &PwlFitConfig { knot_strategy: parse_knots(&args.knots)?, tau_selector, seed },
        )?,
        "pwc" => fit_monotone_pwc(
            &sample,
            &PwcFitConfig { bandwidth: parse_bandwidth(&args.bandwidth)?, ..Default::default() },
        )?,
        "tv" => fit_tv_pwc(
            &sample,
            &PwcFitConfig { bandwidth: parse_bandwidth(&args.bandwidth)?, ..Default::default() },
        )?,
        "bg" => {
            let h = match args.bandwidth.as_str() {
                "asymptotic" | "bg" => None,
                other => Some(other.parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("invalid bandwidth '{other}'"))
                })?),
            };
            fit_bg(&sample, h)?
        }
        "jz" => fit_jz_npmle(&sample, &NpmleConfig::default(), seed)?,
        other => return Err(Error::InvalidInput(format!("unknown method '{other}'"))),
    };

    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("report.json"), serde_json::to_string_pretty(&report)?)?;

    let grid = match &args.grid {
        Some(spec) => {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::InvalidInput("grid must be lo,hi,size".into()));
            }
            GridSpec::new(
                parts[0].trim().parse().map_err(|_| Error::InvalidInput("bad grid lo".into()))?,
                parts[1].trim().parse().map_err(|_| Error::InvalidInput("bad grid hi".into()))?,
                parts[2].trim().parse().map_err(|_| Error::InvalidInput("bad grid size".into()))?,
            )?
        }
        None => GridSpec::new(sample.min() - args.sigma, sample.max() + args.sigma, 512)?,
    };
    let mut csv = String::from("x,d\n");
    let mut dat = String::new();
    for x in grid.points() {
        let d = report.rule.evaluate(x);
        csv.push_str(&format!("{},{}\n", fmt_sig(x), fmt_sig(d)));
        dat.push_str(&format!("{} {}\n", fmt_sig(x), fmt_sig(d)));
    }
    fs::write(args.out.join("rule.csv"), csv)?;
    if args.emit_gnuplot {
        fs::write(args.out.join("rule.dat"), dat)?;
    }

    let mut fitted = String::from("x,fitted\n");
    let vals = predict(&report.rule, sample.values());
    for (x, v) in sample.values().iter().zip(&vals) {
        fitted.push_str(&format!("{},{}\n", fmt_sig(*x), fmt_sig(*v)));
    }
    fs::write(args.out.join("fitted.csv"), fitted)?;

    Ok(if report.diagnostics.converged { 0 } else { 2 })
}

fn write_table(table: &ReportTable, out: &Path, stem: &str) -> Result<(), Error> {
    fs::create_dir_all(out)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    fs::write(out.join(format!("{stem}.csv")), csv)?;
    fs::write(out.join(format!("{stem}.json")), serde_json::to_string_pretty(table)?)?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, Error> {
    let (scenarios, default_ests) = preset_scenarios(&args.table, args.reps)?;
    let estimators = match &args.estimators {
        Some(list) => parse_list(list, EstimatorId::parse)?,
        None => default_ests,
    };
    let table = run_table(&args.table, &scenarios, &estimators, args.seed)?;
    write_table(&table, &args.out, &args.table)?;
    let flagged = table.cells.iter().flatten().any(|c| c.is_flagged());
    Ok(if flagged { 2 } else { 0 })
}

fn cmd_ablate(args: AblateArgs) -> Result<u8, Error> {
    let kind = match args.which.as_str() {
        "pwl-knots" => AblationKind::PwlKnots,
        "pwc-knots" => AblationKind::PwcKnots,
        "pwc-bandwidths" => AblationKind::PwcBandwidths,
        other => return Err(Error::InvalidInput(format!("unknown ablation '{other}'"))),
    };
    let ks = parse_list(&args.sparse, |s| {
        s.parse::<usize>().map_err(|_| Error::InvalidInput(format!("invalid k '{s}'")))
    })?;
    let priors = parse_list(&args.priors, PriorTag::parse)?;
    let scenarios = bench::ablation_scenarios(args.reps, &ks, &priors);
    let table = ablation_knots_and_bandwidths(kind, &scenarios, args.seed)?;
    write_table(&table, &args.out, &args.which)?;
    Ok(0)
}

fn cmd_regret(args: RegretArgs) -> Result<u8, Error> {
    let ns = parse_list(&args.n, |s| {
        s.parse::<usize>().map_err(|_| Error::InvalidInput(format!("invalid n '{s}'")))
    })?;
    let estimator = EstimatorId::parse(&args.estimator)?;
    let prior = PriorTag::parse(&args.prior)?;
    let points = regret_curve(&ns, prior, args.sigma2, estimator, args.reps, args.seed)?;

    fs::create_dir_all(&args.out)?;
    let mut csv = String::from("n,regret,se\n");
    let mut dat = String::from("# n regret se\n");
    for p in &points {
        csv.push_str(&format!("{},{},{}\n", p.n, fmt_sig(p.regret), fmt_sig(p.se)));
        dat.push_str(&format!("{} {} {}\n", p.n, fmt_sig(p.regret), fmt_sig(p.se)));
    }
    fs::write(args.out.join("regret.csv"), csv)?;
    fs::write(args.out.join("regret.json"), serde_json::to_string_pretty(&points)?)?;
    if args.emit_gnuplot {
        fs::write(args.out.join("regret.dat"), dat)?;
    }
    Ok(0)
}

fn cmd_denoise(args: DenoiseArgs) -> Result<u8, Error> {
    let matrix = if args.synthetic {
        synthetic_expression(args.cells, args.genes, args.seed)
    } else {
        let counts = args
            .counts
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("--counts required without --synthetic".into()))?;
        let coords = args
            .coords
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("--coords required without --synthetic".into()))?;
        ExpressionMatrix::from_csv(counts, coords)?
    };

    let mut methods = parse_list(&args.methods, EstimatorId::parse)?;
    // the unshrunken observed values are the protocol's baseline; keep them
    // in the report even when not requested
    if !methods.contains(&EstimatorId::Identity) {
        methods.insert(0, EstimatorId::Identity);
    }
    let reference = if methods.contains(&EstimatorId::JzNpmle) {
        EstimatorId::JzNpmle
    } else {
        EstimatorId::Identity
    };

    let targets = choose_targets(&matrix, args.targets, args.seed);
    let report = denoise_cells(&matrix, &targets, &methods, args.k, args.seed, reference)?;

    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("denoise.json"), serde_json::to_string_pretty(&report)?)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    fs::write(args.out.join("denoise_cells.csv"), csv)?;

    let mut summary = String::from("method,mean_mse,failures\n");
    for (i, m) in report.methods.iter().enumerate() {
        summary.push_str(&format!("{},{},{}\n", m, fmt_sig(report.mean_mse[i]), report.failures[i]));
    }
    fs::write(args.out.join("denoise_summary.csv"), summary)?;

    let any_failures = report.failures.iter().any(|&f| f > 0);
    Ok(if any_failures { 2 } else { 0 })
}
