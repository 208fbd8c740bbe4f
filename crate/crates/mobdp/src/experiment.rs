//! Parameter sweeps over schemes, budgets and repeats.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mobdp_core::attack::{recover, recovery_accuracy, AttackConfig};
use mobdp_core::data::{CountSeries, GridSpec, TrajectoryDataset};
use mobdp_core::dp::RandomSource;
use mobdp_core::metrics::{mae, mre, MreDenominator, DEFAULT_GAMMA};
use mobdp_core::postprocess::consistency_postprocess;
use mobdp_core::schemes::{Scheme, DEFAULT_ALPHA};
use mobdp_core::synth::{generate_days, GeneratorConfig};
use serde::{Deserialize, Serialize};

use crate::io;
use crate::publish::{parse_splits, publish, PublishOptions, ThresholdRule};
use crate::{Error, Result};

pub const REPORT_HEADER: &str = "scheme,epsilon,threshold,seed,repeat,mae,mre,attack_accuracy,error";
pub const SUMMARY_HEADER: &str = "scheme,epsilon,threshold,runs,failed,mae,mre,attack_accuracy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Series and optional ground truth on disk; paths are relative to the config.
    Files {
        series: PathBuf,
        #[serde(default)]
        truth: Option<PathBuf>,
        /// Needed to attack; only the grid geometry is used.
        #[serde(default)]
        grid: Option<PathBuf>,
        #[serde(default)]
        history: Vec<PathBuf>,
    },
    /// A generated population: `history_days` days for dynamic hybrid, then the
    /// published day.
    Synthetic {
        users: usize,
        #[serde(default = "default_grid_side")]
        grid_side: usize,
        #[serde(default = "default_timestamps")]
        timestamps: usize,
        #[serde(default = "default_day")]
        day: [usize; 2],
        seed: u64,
        #[serde(default = "default_history_days")]
        history_days: usize,
    },
}

fn default_grid_side() -> usize {
    mobdp_core::synth::DEFAULT_GRID_SIDE
}

fn default_timestamps() -> usize {
    19
}

fn default_day() -> [usize; 2] {
    [7, 16]
}

fn default_history_days() -> usize {
    5
}

fn default_cutoff() -> usize {
    1
}

fn default_rho() -> f64 {
    0.5
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorChoice {
    #[default]
    Raw,
    Noisy,
}

impl From<DenominatorChoice> for MreDenominator {
    fn from(c: DenominatorChoice) -> Self {
        match c {
            DenominatorChoice::Raw => MreDenominator::Raw,
            DenominatorChoice::Noisy => MreDenominator::Published,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSettings {
    pub sigma: f64,
    pub lambda: f64,
    /// Inclusive `[start, end]` ranges of night timestamps.
    #[serde(default)]
    pub night: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub schemes: Vec<Scheme>,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub threshold: ThresholdRule,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default)]
    pub cutoff_after: Option<usize>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `s=..,d=..,t=..` for static hybrid.
    #[serde(default)]
    pub static_split: Option<String>,
    /// `d=..,t1=..,t2=..` for dynamic hybrid.
    #[serde(default)]
    pub dynamic_split: Option<String>,
    pub repeats: usize,
    pub seed: u64,
    /// Score the post-processed release rather than the raw noisy one.
    #[serde(default = "default_true")]
    pub postprocess: bool,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub mre_denominator: DenominatorChoice,
    #[serde(default)]
    pub attack: Option<AttackSettings>,
    pub output: PathBuf,
    /// Defaults to the report path with `_summary` added to the file stem.
    #[serde(default)]
    pub summary: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json { path: origin.to_path_buf(), source })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut config = Self::from_json(&io::read_text(path)?, path)?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    /// Makes relative paths relative to `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.output);
        if let Some(s) = &mut self.summary {
            fix(s);
        }
        if let DatasetSource::Files { series, truth, grid, history } = &mut self.dataset {
            fix(series);
            truth.iter_mut().for_each(fix);
            grid.iter_mut().for_each(fix);
            history.iter_mut().for_each(fix);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::argument("repeats", "must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::argument("schemes", "list is empty"));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::argument("epsilons", "need at least one positive value"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::argument("gamma", "must be positive"));
        }
        Ok(())
    }

    pub fn summary_path(&self) -> PathBuf {
        self.summary.clone().unwrap_or_else(|| {
            let stem = self.output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            self.output.with_file_name(format!("{stem}_summary.csv"))
        })
    }

    fn options(&self, scheme: Scheme, epsilon: f64) -> Result<PublishOptions> {
        let mut options = PublishOptions::new(epsilon);
        options.threshold = self.threshold;
        options.cutoff = self.cutoff;
        options.cutoff_after = self.cutoff_after;
        options.rho = self.rho;
        options.alpha = self.alpha;
        options.splits = match scheme {
            Scheme::StaticHybrid => self.static_split.as_deref().map(parse_splits).transpose()?,
            Scheme::DynamicHybrid => self.dynamic_split.as_deref().map(parse_splits).transpose()?,
            _ => None,
        };
        Ok(options)
    }
}

/// The data a sweep runs on.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub series: CountSeries,
    pub history: Vec<CountSeries>,
    pub truth: Option<TrajectoryDataset>,
    pub grid_cols: Option<usize>,
}

impl LoadedDataset {
    pub fn load(source: &DatasetSource) -> Result<Self> {
        match source {
            DatasetSource::Files { series, truth, grid, history } => {
                let series = io::read_counts(series)?;
                let history = history.iter().map(|p| io::read_counts(p)).collect::<Result<Vec<_>>>()?;
                let truth = truth.as_deref().map(|p| io::read_trajectories(p, series.cells())).transpose()?;
                let grid_cols = grid.as_deref().map(io::read_grid).transpose()?.map(|g| g.cols);
                Ok(LoadedDataset { series, history, truth, grid_cols })
            }
            DatasetSource::Synthetic { users, grid_side, timestamps, day, seed, history_days } => {
                let mut config = GeneratorConfig::new(*users, GridSpec::square(*grid_side));
                config.timestamps = *timestamps;
                config.day_window = mobdp_core::schemes::DivisionPoints::new(day[0], day[1]);
                let mut rng = RandomSource::new(*seed, 0);
                let mut days = generate_days(&config, history_days + 1, &mut rng)?;
                let current = days.pop().expect("at least one day");
                Ok(LoadedDataset {
                    series: current.series,
                    history: days.into_iter().map(|d| d.series).collect(),
                    truth: Some(current.dataset),
                    grid_cols: Some(*grid_side),
                })
            }
        }
    }
}

/// One `(scheme, ε, repeat)` outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scheme: Scheme,
    pub epsilon: f64,
    pub threshold: f64,
    pub seed: u64,
    pub repeat: usize,
    pub mae: Option<f64>,
    pub mre: Option<f64>,
    pub attack_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub epsilon: f64,
    pub threshold: f64,
    pub runs: usize,
    pub failed: usize,
    pub mae: Option<f64>,
    pub mre: Option<f64>,
    pub attack_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
}

/// RNG stream of one cell of the sweep; distinct for every cell.
pub fn cell_stream(scheme: usize, epsilon: usize, repeat: usize) -> u64 {
    1 + ((scheme as u64) << 48 | (epsilon as u64) << 28 | repeat as u64)
}

fn run_cell(
    config: &ExperimentConfig,
    data: &LoadedDataset,
    attack: Option<&AttackConfig>,
    scheme: Scheme,
    epsilon: f64,
    stream: u64,
) -> Result<(f64, f64, Option<f64>)> {
    let options = config.options(scheme, epsilon)?;
    let mut rng = RandomSource::new(config.seed, stream);
    let release = publish(scheme, &data.series, &data.history, &options, &mut rng)?;
    let processed = consistency_postprocess(&release.series, &mut rng)?;
    let denominator = config.mre_denominator.into();
    let (e_abs, e_rel) = if config.postprocess {
        (mae(&data.series, &processed)?.mean, mre(&data.series, &processed, config.gamma, denominator)?.mean)
    } else {
        (mae(&data.series, &release.series)?.mean, mre(&data.series, &release.series, config.gamma, denominator)?.mean)
    };
    let accuracy = match (attack, &data.truth) {
        (Some(attack), Some(truth)) => Some(attack_accuracy(&processed, truth, attack)?),
        _ => None,
    };
    Ok((e_abs, e_rel, accuracy))
}

/// Recovery accuracy of the attack on `series`.
pub fn attack_accuracy(series: &CountSeries, truth: &TrajectoryDataset, config: &AttackConfig) -> Result<f64> {
    let recovered = recover(series, config)?;
    if let Some(t) = recovered.truncated_at {
        log::debug!("attack ran out of slots at timestamp {t}");
    }
    Ok(recovery_accuracy(&recovered, truth)?.accuracy)
}

fn worker_count(jobs: usize) -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs).max(1)
}

/// Runs every cell of the sweep. Cells run in parallel but each has its own RNG
/// stream, so results do not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let data = LoadedDataset::load(&config.dataset)?;
    run_on(config, &data)
}

/// [`run_experiment`] on data already in memory.
pub fn run_on(config: &ExperimentConfig, data: &LoadedDataset) -> Result<ExperimentReport> {
    config.validate()?;
    let threshold = config.threshold.resolve(&data.series)?;
    let attack = match &config.attack {
        Some(settings) => {
            let cols = data.grid_cols.ok_or_else(|| Error::argument("dataset", "attacking needs the grid"))?;
            if data.truth.is_none() {
                return Err(Error::argument("dataset", "attacking needs ground-truth trajectories"));
            }
            let night = settings.night.iter().flat_map(|[a, b]| *a..=*b);
            Some(AttackConfig::new(settings.sigma, settings.lambda, cols)?.with_night(night))
        }
        None => None,
    };

    let mut cells = Vec::new();
    for (si, &scheme) in config.schemes.iter().enumerate() {
        for (ei, &epsilon) in config.epsilons.iter().enumerate() {
            for repeat in 0..config.repeats {
                cells.push((scheme, epsilon, repeat, cell_stream(si, ei, repeat)));
            }
        }
    }

    let workers = worker_count(cells.len());
    let chunk = cells.len().div_ceil(workers);
    let results: Vec<Result<(f64, f64, Option<f64>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cells
            .chunks(chunk)
            .map(|part| {
                let attack = attack.as_ref();
                scope.spawn(move || {
                    part.iter()
                        .map(|&(scheme, epsilon, _, stream)| run_cell(config, data, attack, scheme, epsilon, stream))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("experiment worker panicked")).collect()
    });

    let rows: Vec<ReportRow> = cells
        .iter()
        .zip(results)
        .map(|(&(scheme, epsilon, repeat, _), result)| {
            let mut row = ReportRow {
                scheme,
                epsilon,
                threshold,
                seed: config.seed,
                repeat,
                mae: None,
                mre: None,
                attack_accuracy: None,
                error: None,
            };
            match result {
                Ok((a, r, acc)) => {
                    row.mae = Some(a);
                    row.mre = Some(r);
                    row.attack_accuracy = acc;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    let summary = summarize(&rows, config.repeats);
    Ok(ExperimentReport { rows, summary })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Averages successful repeats of each `(scheme, ε)`; rows must be grouped.
pub fn summarize(rows: &[ReportRow], repeats: usize) -> Vec<SummaryRow> {
    rows.chunks(repeats.max(1))
        .map(|group| {
            let ok: Vec<&ReportRow> = group.iter().filter(|r| r.error.is_none()).collect();
            SummaryRow {
                scheme: group[0].scheme,
                epsilon: group[0].epsilon,
                threshold: group[0].threshold,
                runs: ok.len(),
                failed: group.len() - ok.len(),
                mae: mean(ok.iter().filter_map(|r| r.mae)),
                mre: mean(ok.iter().filter_map(|r| r.mre)),
                attack_accuracy: mean(ok.iter().filter_map(|r| r.attack_accuracy)),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn format_report(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.epsilon,
            r.threshold,
            r.seed,
            r.repeat,
            opt(r.mae),
            opt(r.mre),
            opt(r.attack_accuracy),
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    out
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme,
            r.epsilon,
            r.threshold,
            r.runs,
            r.failed,
            opt(r.mae),
            opt(r.mre),
            opt(r.attack_accuracy)
        );
    }
    out
}

/// Runs the sweep and writes the report and summary CSVs.
pub fn run_and_write(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let report = run_experiment(config)?;
    io::write_text(&config.output, &format_report(&report.rows))?;
    io::write_text(&config.summary_path(), &format_summary(&report.summary))?;
    Ok(report)
}
