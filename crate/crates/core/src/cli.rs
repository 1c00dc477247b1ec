//! The `fedmmf` command line: `prepare`, `run`, `attack`, `report`.
//!
//! Relative dataset paths are resolved against `FEDMMF_DATA_DIR` when it is
//! set, else against `./data`. Every output directory gets a JSON manifest recording the config
//! hash, dataset hash and seeds, enough to reproduce the run exactly.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    attack_report, gradient_leakage_solve, instance_from_observation, LeakageStatus, PartyRatings, SolverOptions,
};
use crate::dataio::{self, Dataset, FeatureOptions, MovieLensFormat, SplitRatios};
use crate::error::{Error, Result};
use crate::fedsim::{self, ExperimentConfig, Observation, RunResult, TranscriptEvent};
use crate::localmask::PrivacyGroup;
use crate::rng;

pub const DATA_DIR_ENV: &str = "FEDMMF_DATA_DIR";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "fedmmf",
    version,
    about = "Federated masked matrix factorization experiments"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a raw dataset, build side features and write a canonical bundle.
    Prepare(PrepareArgs),
    /// Run an experiment config for all its repetitions.
    Run(RunArgs),
    /// Attack a completed run: recovery, ranking and gradient leakage.
    Attack(AttackArgs),
    /// Collect finished runs into a mean ± std table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RawFormat {
    Ml100k,
    Ml10m,
    Lastfm,
}

impl RawFormat {
    fn default_dir(self) -> &'static str {
        match self {
            RawFormat::Ml100k => "ml-100k",
            RawFormat::Ml10m => "ml-10M100K",
            RawFormat::Lastfm => "hetrec2011-lastfm-2k",
        }
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long, value_enum)]
    pub dataset: RawFormat,
    /// Raw data directory [default: the archive's usual directory name, e.g.
    /// ml-100k, resolved like dataset paths].
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Bundle output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Rating levels for LastFM listening counts.
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    /// Side-feature dimension after PCA.
    #[arg(long)]
    pub pca_dim: Option<usize>,
    /// Seed of the reference split stored in the bundle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the number of repetitions.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Override the base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of federated rounds.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Record the server transcript of every repetition.
    #[arg(long)]
    pub transcript: bool,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Directory of a completed `run`.
    #[arg(long)]
    pub run: PathBuf,
    /// Recovery error levels, in rating steps.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0])]
    pub g: Vec<f64>,
    /// Ranking top proportions.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.02, 0.05])]
    pub h: Vec<f64>,
    /// Which repetition to attack.
    #[arg(long, default_value_t = 0)]
    pub repetition: usize,
    /// Also run the gradient-leakage solver on replayed uploads.
    #[arg(long)]
    pub leakage: bool,
    /// First of the two observed rounds.
    #[arg(long, default_value_t = 1)]
    pub leakage_round: usize,
    /// Observe at most this many parties...
    #[arg(long, default_value_t = 50)]
    pub max_parties: usize,
    /// ...each with at most this many training items.
    #[arg(long, default_value_t = 40)]
    pub max_items: usize,
    /// Output directory [default: <run>/attack].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments and runs the command.
pub fn main_with_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidInput(e.to_string()))?;
    execute(cli)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(args) => prepare(&args).map(|_| ()),
        Command::Run(args) => run(&args).map(|_| ()),
        Command::Attack(args) => attack(&args).map(|_| ()),
        Command::Report(args) => {
            let table = report(&args)?;
            print!("{}", table.to_markdown());
            Ok(())
        }
    }
}

/// Where a dataset path points: absolute paths as given; relative ones
/// under `$FEDMMF_DATA_DIR` when set, else under `./data` when that exists,
/// else relative to the working directory.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        return PathBuf::from(dir).join(path);
    }
    let under_data = Path::new("data").join(path);
    if under_data.exists() {
        under_data
    } else {
        path.to_path_buf()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::MissingFiles(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------- prepare

pub fn prepare(args: &PrepareArgs) -> Result<dataio::BundleManifest> {
    let input = match &args.input {
        Some(p) => p.clone(),
        None => resolve_data_path(Path::new(args.dataset.default_dir())),
    };
    let mut features = FeatureOptions::default();
    if let Some(dim) = args.pca_dim {
        features.pca_dim = dim;
    }
    let dataset = match args.dataset {
        RawFormat::Ml100k => dataio::load_movielens(&input, MovieLensFormat::Ml100k, features)?,
        RawFormat::Ml10m => dataio::load_movielens(&input, MovieLensFormat::Ml10m, features)?,
        RawFormat::Lastfm => dataio::load_lastfm(&input, args.bins, features)?,
    };
    let manifest = dataio::write_bundle(&args.out, &dataset, args.seed, SplitRatios::default())?;
    info!(
        "{}: {} users, {} items, {} ratings -> {}",
        manifest.name,
        manifest.n_users,
        manifest.n_items,
        manifest.n_ratings,
        args.out.display()
    );
    Ok(manifest)
}

// -------------------------------------------------------------------- run

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub repetition: usize,
    pub seed: u64,
    pub rmse: f64,
    pub mae: f64,
    pub rounds_run: usize,
}

/// Everything needed to reproduce a run and to attack or report on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub algorithm: String,
    pub dataset: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub rows: Vec<MetricRow>,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub rating_min: f64,
    pub rating_max: f64,
    pub rating_step: f64,
    /// Wall-clock seconds per phase, one map per repetition.
    pub phase_seconds: Vec<BTreeMap<String, f64>>,
    pub has_masks: bool,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let mut spec = config.dataset.clone();
    spec.path = resolve_data_path(&spec.path);
    if !spec.path.exists() {
        return Err(Error::MissingFiles(format!(
            "dataset directory {} does not exist (set {DATA_DIR_ENV} or fix dataset.path)",
            spec.path.display()
        )));
    }
    spec.load()
}

pub fn run(args: &RunArgs) -> Result<RunManifest> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(r) = args.repetitions {
        config.repetitions = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(e) = args.epochs {
        config.hyperparams.epochs = e;
    }
    config.transcript |= args.transcript;
    config.validate()?;
    let dataset = load_dataset(&config)?;
    run_config(&config, &dataset, &args.out)
}

/// Runs every repetition of `config` and writes the outputs under `out`.
pub fn run_config(config: &ExperimentConfig, dataset: &Dataset, out: &Path) -> Result<RunManifest> {
    fs::create_dir_all(out)?;
    write_atomic(&out.join("config.toml"), config.to_toml()?.as_bytes())?;
    let mut rows = Vec::new();
    let mut phases = Vec::new();
    let mut has_masks = false;
    for rep in 0..config.repetitions {
        let started = Instant::now();
        let result = fedsim::run_repetition(config, dataset, rep)?;
        info!(
            "{} {} repetition {rep}: rmse {:.4} mae {:.4} ({} rounds, {:.1}s)",
            result.algorithm,
            result.dataset,
            result.rmse,
            result.mae,
            result.rounds_run,
            started.elapsed().as_secs_f64()
        );
        has_masks |= !result.masked_ratings.is_empty();
        write_repetition(&out.join(format!("rep_{rep}")), dataset, &result)?;
        rows.push(MetricRow {
            repetition: rep,
            seed: result.seed,
            rmse: result.rmse,
            mae: result.mae,
            rounds_run: result.rounds_run,
        });
        phases.push(result.phase_seconds);
    }

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([
        "algorithm",
        "dataset",
        "repetition",
        "seed",
        "rmse",
        "mae",
        "rounds_run",
    ])?;
    for row in &rows {
        csv.write_record([
            config.algorithm.label(),
            dataset.name.clone(),
            row.repetition.to_string(),
            row.seed.to_string(),
            row.rmse.to_string(),
            row.mae.to_string(),
            row.rounds_run.to_string(),
        ])?;
    }
    let bytes = csv.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&out.join("metrics.csv"), &bytes)?;

    let (rmse_mean, rmse_std) = mean_std(&rows.iter().map(|r| r.rmse).collect::<Vec<_>>());
    let (mae_mean, mae_std) = mean_std(&rows.iter().map(|r| r.mae).collect::<Vec<_>>());
    let manifest = RunManifest {
        algorithm: config.algorithm.label(),
        dataset: dataset.name.clone(),
        config_hash: config.hash(),
        dataset_hash: dataset.content_hash(),
        config: config.clone(),
        seeds: rows.iter().map(|r| r.seed).collect(),
        rows,
        rmse_mean,
        rmse_std,
        mae_mean,
        mae_std,
        rating_min: dataset.scale.min,
        rating_max: dataset.scale.max,
        rating_step: dataset.scale.step,
        phase_seconds: phases,
        has_masks,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn write_repetition(dir: &Path, dataset: &Dataset, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut history = String::from("round,rmse,mae,validation_rmse\n");
    for p in &result.history {
        let v = p.validation_rmse.map_or_else(String::new, |v| v.to_string());
        let _ = writeln!(history, "{},{},{},{v}", p.round, p.rmse, p.mae);
    }
    write_atomic(&dir.join("history.csv"), history.as_bytes())?;

    if !result.masked_ratings.is_empty() {
        let originals: BTreeMap<(usize, usize), f64> = dataset
            .ratings
            .iter()
            .map(|t| ((t.user_id, t.item_id), t.rating))
            .collect();
        let mut text = String::from("party_id,item_id,masked,rating\n");
        for m in &result.masked_ratings {
            let r = originals[&(m.user_id, m.item_id)];
            let _ = writeln!(text, "{},{},{},{r}", m.user_id, m.item_id, m.value);
        }
        write_atomic(&dir.join("masked_ratings.csv"), text.as_bytes())?;
    }
    if !result.mask_models.is_empty() {
        let mut text = String::new();
        for model in &result.mask_models {
            text.push_str(&model.to_json()?.replace('\n', ""));
            text.push('\n');
        }
        write_atomic(&dir.join("mask_models.jsonl"), text.as_bytes())?;
    }
    if !result.privacy.is_empty() {
        let mut text = String::from("party_id,j_estimate,n_validation,optimistic,group\n");
        for (report, group) in result.privacy.iter().zip(&result.groups) {
            let _ = writeln!(
                text,
                "{},{},{},{},{}",
                report.user_id,
                report.j_estimate,
                report.n_validation,
                report.optimistic,
                match group {
                    PrivacyGroup::Secure => "secure",
                    PrivacyGroup::Insecure => "insecure",
                }
            );
        }
        write_atomic(&dir.join("privacy.csv"), text.as_bytes())?;
    }
    if !result.transcript.is_empty() {
        let mut text = String::new();
        for event in &result.transcript {
            text.push_str(&serde_json::to_string(event)?);
            text.push('\n');
        }
        write_atomic(&dir.join("transcript.jsonl"), text.as_bytes())?;
    }
    Ok(())
}

/// Reads a transcript written by `run`.
pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEvent>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

// ----------------------------------------------------------------- attack

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackManifest {
    pub run_config_hash: String,
    pub dataset_hash: String,
    pub repetition: usize,
    pub error_levels: Vec<f64>,
    pub top_proportions: Vec<f64>,
    pub files: Vec<String>,
    pub fraction_alpha_above_half: Vec<f64>,
    pub fraction_beta_at_least_half: Vec<f64>,
    pub leakage: Option<LeakageSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageSummary {
    pub round: usize,
    pub attacked: usize,
    pub masked_uploads: usize,
    pub resolved: usize,
    /// Parties whose every fitted value came back within 1e-3.
    pub recovered_targets: usize,
    /// Parties whose every raw rating came back within 1e-3.
    pub recovered_ratings: usize,
}

/// Masked and original ratings of one repetition, by party.
pub fn read_masked_ratings(path: &Path) -> Result<Vec<PartyRatings>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::MissingFiles(format!("{}: {e}", path.display())))?;
    let mut parties: BTreeMap<usize, PartyRatings> = BTreeMap::new();
    for record in reader.deserialize() {
        let (party, item, masked, rating): (usize, usize, f64, f64) = record?;
        let entry = parties.entry(party).or_insert_with(|| PartyRatings {
            party_id: party,
            items: Vec::new(),
            masked: Vec::new(),
            original: Vec::new(),
        });
        entry.items.push(item);
        entry.masked.push(masked);
        entry.original.push(rating);
    }
    Ok(parties.into_values().collect())
}

pub fn attack(args: &AttackArgs) -> Result<AttackManifest> {
    let manifest: RunManifest = read_json(&args.run.join(MANIFEST_FILE))?;
    if !manifest.has_masks && !args.leakage {
        return Err(Error::InvalidInput(format!(
            "run {} ({}) has no masked ratings; only --leakage applies",
            args.run.display(),
            manifest.algorithm
        )));
    }
    if args.repetition >= manifest.rows.len() {
        return Err(Error::InvalidInput(format!(
            "run has {} repetitions, asked for {}",
            manifest.rows.len(),
            args.repetition
        )));
    }
    let out = args.out.clone().unwrap_or_else(|| args.run.join("attack"));
    fs::create_dir_all(&out)?;
    let mut result = AttackManifest {
        run_config_hash: manifest.config_hash.clone(),
        dataset_hash: manifest.dataset_hash.clone(),
        repetition: args.repetition,
        error_levels: args.g.clone(),
        top_proportions: args.h.clone(),
        files: Vec::new(),
        fraction_alpha_above_half: Vec::new(),
        fraction_beta_at_least_half: Vec::new(),
        leakage: None,
    };

    if manifest.has_masks {
        let parties = read_masked_ratings(
            &args
                .run
                .join(format!("rep_{}", args.repetition))
                .join("masked_ratings.csv"),
        )?;
        let report = attack_report(&parties, manifest.rating_step, &args.g, &args.h)?;
        let mut bytes = Vec::new();
        report.write_csv(&mut bytes)?;
        write_atomic(&out.join("attack.csv"), &bytes)?;
        result.files.push("attack.csv".into());
        for hist in report.histograms() {
            let name = format!("hist_{}.csv", hist.measure);
            let mut bytes = Vec::new();
            hist.write_csv(&mut bytes)?;
            write_atomic(&out.join(&name), &bytes)?;
            result.files.push(name);
        }
        result.fraction_alpha_above_half = (0..args.g.len()).map(|g| report.fraction_alpha_above(g, 0.5)).collect();
        result.fraction_beta_at_least_half = (0..args.h.len())
            .map(|h| report.fraction_beta_at_least(h, 0.5))
            .collect();
        for (g, f) in args.g.iter().zip(&result.fraction_alpha_above_half) {
            info!("recovery g={g}: {:.1}% of parties with alpha > 0.5", 100.0 * f);
        }
        for (h, f) in args.h.iter().zip(&result.fraction_beta_at_least_half) {
            info!("ranking h={h}: {:.1}% of parties with beta >= 0.5", 100.0 * f);
        }
    }

    if args.leakage {
        let (summary, csv) = leakage_attack(&manifest.config, args)?;
        write_atomic(&out.join("leakage.csv"), csv.as_bytes())?;
        result.files.push("leakage.csv".into());
        info!(
            "leakage: {}/{} observed parties fully recovered ({} masked uploads skipped)",
            summary.recovered_targets, summary.attacked, summary.masked_uploads
        );
        result.leakage = Some(summary);
    }
    write_json(&out.join(MANIFEST_FILE), &result)?;
    Ok(result)
}

/// Replays the run's first rounds with two-round observation of small
/// parties, then solves each plaintext upload pair for the fitted values.
fn leakage_attack(run_config: &ExperimentConfig, args: &AttackArgs) -> Result<(LeakageSummary, String)> {
    if args.leakage_round == 0 {
        return Err(Error::InvalidInput("leakage round starts at 1".into()));
    }
    let dataset = load_dataset(run_config)?;
    let mut config = run_config.clone();
    let seed = config.repetition_seed(args.repetition);
    let parties: Vec<usize> = fedsim::party_splits(&dataset, &config, seed)
        .iter()
        .filter(|s| !s.train.is_empty() && s.train.len() <= args.max_items)
        .map(|s| s.user_id)
        .take(args.max_parties)
        .collect();
    config.observe = Some(Observation {
        round: args.leakage_round,
        parties,
    });
    config.hyperparams.epochs = args.leakage_round + 1;
    config.transcript = false;
    config.early_stopping_patience = None;
    let replay = fedsim::run_repetition(&config, &dataset, args.repetition)?;

    let options = SolverOptions {
        multi_item: true,
        ..Default::default()
    };
    let mut solver_rng = rng::stream(seed, "leakage-solver", 0);
    let mut summary = LeakageSummary {
        round: args.leakage_round,
        attacked: 0,
        masked_uploads: 0,
        resolved: 0,
        recovered_targets: 0,
        recovered_ratings: 0,
    };
    let mut csv = String::from("party_id,n_items,group,status,residual,max_error_target,max_error_rating\n");
    for observed in &replay.observations {
        let group = match observed.group {
            PrivacyGroup::Secure => "secure",
            PrivacyGroup::Insecure => "insecure",
        };
        if observed.group == PrivacyGroup::Insecure {
            // the server only holds masked field elements for this party
            summary.masked_uploads += 1;
            let _ = writeln!(csv, "{},{},{group},masked,,,", observed.party, observed.items.len());
            continue;
        }
        let (instance, truth) =
            instance_from_observation(observed, config.hyperparams.gamma, config.hyperparams.lambda)?;
        let solution = gradient_leakage_solve(&instance, &options, &mut solver_rng)?;
        let max_err = |reference: &[f64]| {
            solution
                .ratings
                .iter()
                .zip(reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let err_target = max_err(&truth.identifiable_targets());
        let err_rating = max_err(&observed.truth.ratings);
        summary.attacked += 1;
        if solution.status == LeakageStatus::Resolved {
            summary.resolved += 1;
            summary.recovered_targets += usize::from(err_target < 1e-3);
            summary.recovered_ratings += usize::from(err_rating < 1e-3);
        }
        let status = match solution.status {
            LeakageStatus::Resolved => "resolved",
            LeakageStatus::Ambiguous => "ambiguous",
            LeakageStatus::Unresolved => "unresolved",
        };
        let _ = writeln!(
            csv,
            "{},{},{group},{status},{},{err_target},{err_rating}",
            observed.party,
            observed.items.len(),
            solution.residual_norm
        );
    }
    Ok((summary, csv))
}

// ----------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub datasets: Vec<String>,
    /// `(algorithm, per dataset: Some((rmse cell, mae cell)))`, in first-seen
    /// order.
    #[allow(clippy::type_complexity)]
    pub rows: Vec<(String, Vec<Option<(String, String)>>)>,
}

impl ReportTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["algorithm".to_string()];
        for d in &self.datasets {
            h.push(format!("{d} RMSE"));
            h.push(format!("{d} MAE"));
        }
        h
    }

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|(alg, cells)| {
                let mut row = vec![alg.clone()];
                for c in cells {
                    let (r, m) = c.clone().unwrap_or_else(|| ("-".into(), "-".into()));
                    row.push(r);
                    row.push(m);
                }
                row
            })
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let header = self.header();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for row in self.cells() {
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for row in self.cells() {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        write_atomic(path, &bytes)
    }
}

/// `mean ± std` to four decimals.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{mean:.4} ± {std:.4}")
}

pub fn report(args: &ReportArgs) -> Result<ReportTable> {
    let mut datasets: Vec<String> = Vec::new();
    let mut algorithms: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), (String, String)> = BTreeMap::new();
    for dir in &args.runs {
        let m: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
        if !datasets.contains(&m.dataset) {
            datasets.push(m.dataset.clone());
        }
        if !algorithms.contains(&m.algorithm) {
            algorithms.push(m.algorithm.clone());
        }
        cells.insert(
            (m.algorithm.clone(), m.dataset.clone()),
            (format_cell(m.rmse_mean, m.rmse_std), format_cell(m.mae_mean, m.mae_std)),
        );
    }
    let rows = algorithms
        .into_iter()
        .map(|a| {
            let row = datasets
                .iter()
                .map(|d| cells.get(&(a.clone(), d.clone())).cloned())
                .collect();
            (a, row)
        })
        .collect();
    let table = ReportTable { datasets, rows };
    if let Some(path) = &args.out {
        table.write_csv(path)?;
    }
    Ok(table)
}
