//! The `mobdp` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mobdp_core::attack::{recover, recovery_accuracy, AttackConfig};
use mobdp_core::data::{aggregate, GridSpec};
use mobdp_core::dp::RandomSource;
use mobdp_core::metrics::{mae, mre, MreDenominator, DEFAULT_GAMMA};
use mobdp_core::postprocess::consistency_postprocess;
use mobdp_core::schemes::{DivisionPoints, Scheme, DEFAULT_ALPHA};
use mobdp_core::synth::{to_records, GeneratorConfig, Population};
use serde::Serialize;

use crate::experiment::{run_and_write, ExperimentConfig};
use crate::io;
use crate::publish::{format_splits, parse_splits, publish, PublishOptions, ThresholdRule};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mobdp", version, about = "Differentially private publication of aggregated mobility histograms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bin raw location records into a histogram series
    Aggregate(AggregateArgs),
    /// Generate a synthetic population and its series
    Generate(GenerateArgs),
    /// Release a series under differential privacy
    Publish(PublishArgs),
    /// Round a noisy series to consistent non-negative counts
    Postprocess(PostprocessArgs),
    /// Run the trajectory-recovery attack against a series
    Attack(AttackArgs),
    /// Score a published series against the raw one
    Evaluate(EvaluateArgs),
    /// Run a parameter sweep from a JSON config
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Records CSV with header user_id,time,lon,lat
    #[arg(long)]
    pub records: PathBuf,
    /// Grid JSON
    #[arg(long)]
    pub grid: PathBuf,
    /// Bucket width in seconds
    #[arg(long, default_value_t = 3600)]
    pub interval: u64,
    /// Number of buckets, starting at the earliest record
    #[arg(long, default_value_t = 19)]
    pub timestamps: usize,
    /// Keep only the first k timestamps
    #[arg(long)]
    pub points: Option<usize>,
    /// Output series CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Output trajectories CSV for users covered from the first bucket
    #[arg(long)]
    pub out_truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    pub users: usize,
    /// Grid JSON
    #[arg(long, conflicts_with = "grid_side", required_unless_present = "grid_side")]
    pub grid: Option<PathBuf>,
    /// Square grid of this many cells per side, instead of --grid
    #[arg(long)]
    pub grid_side: Option<usize>,
    #[arg(long, default_value_t = 19)]
    pub timestamps: usize,
    /// Daytime window a:b, zero-based and inclusive
    #[arg(long, default_value = "7:16", value_parser = parse_window)]
    pub day: DivisionPoints,
    #[arg(long, default_value_t = 3600)]
    pub interval: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Records CSV of the generated day
    #[arg(long)]
    pub out_records: Option<PathBuf>,
    /// Series CSV of the generated day
    #[arg(long)]
    pub out_series: PathBuf,
    /// Trajectories CSV of the generated day
    #[arg(long)]
    pub out_truth: Option<PathBuf>,
    /// Grid JSON the cell indices refer to
    #[arg(long)]
    pub out_grid: Option<PathBuf>,
    /// Days of the same population to generate before the output day
    #[arg(long, default_value_t = 0)]
    pub history_days: usize,
    /// Historical series are written to <prefix>1.csv, <prefix>2.csv, ...
    #[arg(long)]
    pub history_prefix: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Direct,
    Threshold,
    StaticHybrid,
    DynamicHybrid,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Direct => Scheme::Direct,
            SchemeArg::Threshold => Scheme::Threshold,
            SchemeArg::StaticHybrid => Scheme::StaticHybrid,
            SchemeArg::DynamicHybrid => Scheme::DynamicHybrid,
        }
    }
}

#[derive(Debug, Args)]
pub struct PublishArgs {
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    #[arg(long)]
    pub epsilon: f64,
    /// Raw series CSV
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Published series CSV
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Number, `Tbar/k` or `f*Tbar` where Tbar is the mean adjacent distance
    #[arg(long, default_value = "Tbar/4", value_parser = parse_threshold)]
    pub threshold: ThresholdRule,
    /// Maximum fresh releases of threshold perturbation
    #[arg(long, default_value_t = 1)]
    pub cutoff: usize,
    /// Cutoff after the window (dynamic hybrid); defaults to --cutoff
    #[arg(long)]
    pub cutoff_after: Option<usize>,
    /// Share of the threshold budget spent on comparisons
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Hybrid budget split, e.g. s=0.2,d=0.4,t=0.4 or d=0.5,t1=0.25,t2=0.25
    #[arg(long)]
    pub splits: Option<String>,
    /// Historical raw series for dynamic hybrid, oldest first
    #[arg(long, num_args = 1..)]
    pub history: Vec<PathBuf>,
    /// Write post-processed counts instead of the noisy release
    #[arg(long)]
    pub postprocess: bool,
    /// JSON summary of the release
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PostprocessArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Integral series CSV, usually post-processed
    #[arg(long)]
    pub series: PathBuf,
    /// Trajectories CSV with header user_id,timestamp,cell
    #[arg(long)]
    pub truth: PathBuf,
    /// Grid JSON the cell indices refer to
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Night timestamps as a:b ranges, comma separated
    #[arg(long, value_parser = parse_ranges)]
    pub night: Option<Ranges>,
    /// Attack only the first k timestamps
    #[arg(long)]
    pub points: Option<usize>,
    /// JSON report; printed to stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    Raw,
    Noisy,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long)]
    pub published: PathBuf,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value = "raw")]
    pub mre_denominator: DenominatorArg,
    /// JSON report; printed to stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Inclusive timestamp ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranges(pub Vec<(usize, usize)>);

impl Ranges {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().flat_map(|&(a, b)| a..=b)
    }
}

fn parse_window(s: &str) -> std::result::Result<DivisionPoints, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad start in {s:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad end in {s:?}"))?;
    if a > b {
        return Err(format!("start after end in {s:?}"));
    }
    Ok(DivisionPoints::new(a, b))
}

fn parse_ranges(s: &str) -> std::result::Result<Ranges, String> {
    s.split(',').map(|r| parse_window(r).map(|w| (w.start, w.end))).collect::<std::result::Result<_, _>>().map(Ranges)
}

fn parse_threshold(s: &str) -> std::result::Result<ThresholdRule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Serialize)]
struct ReleaseSummary {
    scheme: String,
    epsilon: f64,
    threshold: f64,
    consumed: f64,
    division: Option<[usize; 2]>,
    fresh: Vec<usize>,
    fallback: bool,
    splits: Option<String>,
}

#[derive(Serialize)]
struct AttackReport {
    accuracy: f64,
    per_timestamp: Vec<f64>,
    trajectories: usize,
    truncated_at: Option<usize>,
}

#[derive(Serialize)]
struct EvaluationReport {
    mae: f64,
    mre: f64,
    gamma: f64,
    mre_denominator: &'static str,
    mae_per_timestamp: Vec<f64>,
    mre_per_timestamp: Vec<f64>,
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => io::write_json(path, value),
        None => {
            use std::io::Write as _;
            let text = serde_json::to_string_pretty(value).expect("report serializes");
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
                _ => Ok(()),
            }
        }
    }
}

fn run_aggregate(args: AggregateArgs) -> Result<()> {
    let grid = io::read_grid(&args.grid)?;
    let records = io::read_records(&args.records)?;
    let horizon = args.interval * args.timestamps as u64;
    let mut result = aggregate(&records, &grid, args.interval, horizon)?;
    let stats = &result.stats;
    if stats.out_of_bounds > 0 || stats.partially_covered > 0 {
        log::warn!(
            "{} records outside the grid, {} users missing from the first bucket",
            stats.out_of_bounds,
            stats.partially_covered
        );
    }
    if let Some(k) = args.points {
        let k = k.min(result.series.len());
        result.series = mobdp_core::data::CountSeries::new(result.series.histograms()[..k].to_vec(), args.interval)?;
        result.dataset = result.dataset.truncate(k);
    }
    io::write_series(&args.out, &result.series)?;
    if let Some(path) = &args.out_truth {
        io::write_trajectories(path, &result.dataset)?;
    }
    Ok(())
}

fn run_generate(args: GenerateArgs) -> Result<()> {
    let grid = match (&args.grid, args.grid_side) {
        (Some(path), _) => io::read_grid(path)?,
        (None, Some(side)) => GridSpec::square(side),
        (None, None) => return Err(Error::argument("grid", "need --grid or --grid-side")),
    };
    let mut config = GeneratorConfig::new(args.users, grid);
    config.timestamps = args.timestamps;
    config.day_window = args.day;
    config.interval_s = args.interval;
    let mut rng = RandomSource::new(args.seed, 0);
    let population = Population::sample(&config, &mut rng)?;
    for h in 1..=args.history_days {
        let day = population.day(&config, &mut rng)?;
        let prefix = args
            .history_prefix
            .as_deref()
            .ok_or_else(|| Error::argument("history_prefix", "required with --history-days"))?;
        io::write_series(Path::new(&format!("{prefix}{h}.csv")), &day.series)?;
    }
    let day = population.day(&config, &mut rng)?;
    io::write_series(&args.out_series, &day.series)?;
    if let Some(path) = &args.out_records {
        io::write_records(path, &to_records(&day.dataset, &grid, args.interval, 0))?;
    }
    if let Some(path) = &args.out_truth {
        io::write_trajectories(path, &day.dataset)?;
    }
    if let Some(path) = &args.out_grid {
        io::write_grid(path, &grid)?;
    }
    Ok(())
}

fn run_publish(args: PublishArgs) -> Result<()> {
    let series = io::read_counts(&args.input)?;
    let history = args.history.iter().map(|p| io::read_counts(p)).collect::<Result<Vec<_>>>()?;
    let mut options = PublishOptions::new(args.epsilon);
    options.threshold = args.threshold;
    options.cutoff = args.cutoff;
    options.cutoff_after = args.cutoff_after;
    options.rho = args.rho;
    options.alpha = args.alpha;
    options.splits = args.splits.as_deref().map(parse_splits).transpose()?;
    let scheme = Scheme::from(args.scheme);
    let mut rng = RandomSource::new(args.seed, args.stream);
    let release = publish(scheme, &series, &history, &options, &mut rng)?;
    if args.postprocess {
        io::write_series(&args.out, &consistency_postprocess(&release.series, &mut rng)?)?;
    } else {
        io::write_series(&args.out, &release.series)?;
    }
    if let Some(path) = &args.report {
        let summary = ReleaseSummary {
            scheme: scheme.to_string(),
            epsilon: args.epsilon,
            threshold: options.threshold.resolve(&series)?,
            consumed: release.budget.consumed(),
            division: release.division.map(|d| [d.start, d.end]),
            fresh: release.fresh.clone(),
            fallback: release.fallback,
            splits: options.splits.as_deref().map(format_splits),
        };
        io::write_json(path, &summary)?;
    }
    Ok(())
}

fn run_postprocess(args: PostprocessArgs) -> Result<()> {
    let noisy = io::read_series(&args.input)?;
    let mut rng = RandomSource::new(args.seed, args.stream);
    io::write_series(&args.out, &consistency_postprocess(&noisy, &mut rng)?)
}

fn run_attack(args: AttackArgs) -> Result<()> {
    let mut series = io::read_counts(&args.series)?;
    let grid = io::read_grid(&args.grid)?;
    let mut truth = io::read_trajectories(&args.truth, grid.cells())?;
    if let Some(k) = args.points {
        let k = k.min(series.len());
        series = mobdp_core::data::CountSeries::new(series.histograms()[..k].to_vec(), series.interval_s())?;
        truth = truth.truncate(k);
    }
    let mut config = AttackConfig::new(args.sigma, args.lambda, grid.cols)?;
    if let Some(night) = &args.night {
        config = config.with_night(night.indices());
    }
    let recovered = recover(&series, &config)?;
    if let Some(t) = recovered.truncated_at {
        log::warn!("slots ran out at timestamp {t}; later timestamps score zero");
    }
    let accuracy = recovery_accuracy(&recovered, &truth)?;
    let report = AttackReport {
        accuracy: accuracy.accuracy,
        per_timestamp: accuracy.per_timestamp,
        trajectories: recovered.len(),
        truncated_at: recovered.truncated_at,
    };
    emit_json(args.out.as_deref(), &report)
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let raw = io::read_counts(&args.raw)?;
    let published = io::read_series(&args.published)?;
    let denominator = match args.mre_denominator {
        DenominatorArg::Raw => MreDenominator::Raw,
        DenominatorArg::Noisy => MreDenominator::Published,
    };
    let a = mae(&raw, &published)?;
    let r = mre(&raw, &published, args.gamma, denominator)?;
    let report = EvaluationReport {
        mae: a.mean,
        mre: r.mean,
        gamma: args.gamma,
        mre_denominator: match args.mre_denominator {
            DenominatorArg::Raw => "raw",
            DenominatorArg::Noisy => "noisy",
        },
        mae_per_timestamp: a.per_timestamp,
        mre_per_timestamp: r.per_timestamp,
    };
    emit_json(args.out.as_deref(), &report)
}

fn run_experiment_command(args: ExperimentArgs) -> Result<()> {
    let config = ExperimentConfig::read(&args.config)?;
    let report = run_and_write(&config)?;
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} runs failed; see the error column", report.rows.len());
    }
    Ok(())
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Aggregate(a) => run_aggregate(a),
        Command::Generate(a) => run_generate(a),
        Command::Publish(a) => run_publish(a),
        Command::Postprocess(a) => run_postprocess(a),
        Command::Attack(a) => run_attack(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Experiment(a) => run_experiment_command(a),
    }
}

/// Parses `argv` and runs it; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
