//! `committee`: command-line front end for committee selection experiments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use committee_core::experiment::{
    ensemble_curves, grid_extremes, mean_committee_sizes, run_grid_experiment, ArchiveSource, ExperimentPlan,
    MarginCurves, RunMetadata,
};
use committee_core::io::{
    encode_idx, encode_idx_f32, export_results, load_archive, read_idx, write_archive, ArchiveMetadata, ResultFormat,
};
use committee_core::noise::{add_feature_noise, flip_labels, make_noise_grid, NoiseConfig, RawDataset, GRID_LEVELS};
use committee_core::seed::derive_seed;
use committee_core::selection::{exhaustive_oracle_with_cap, DEFAULT_EXHAUSTIVE_CAP};
use committee_core::selection::{run_algorithm, Algorithm, SelectionReport, StochasticParams};
use committee_core::zoo::{noise_degraded_zoo, DegradationSlopes, ZooConfig};
use committee_core::{Archive, SplitKind};

#[derive(Parser, Debug)]
#[command(name = "committee", version, about = "Classifier committee selection under noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic model library and write it as an archive.
    GenZoo(GenZooArgs),
    /// Corrupt an IDX dataset with Gaussian feature noise and label flips.
    InjectNoise(InjectNoiseArgs),
    /// Select committees from an archive.
    Select(SelectArgs),
    /// Exhaustively find the best committee of a small archive.
    Oracle(OracleArgs),
    /// Run repeated selection over a noise grid and export margin records.
    Experiment(ExperimentArgs),
    /// Check an archive against the format and report its contents.
    ValidateArchive(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
struct ZooArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 1000)]
    selection_size: usize,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    /// Mean individual accuracy on clean data.
    #[arg(long, default_value_t = 0.83)]
    target_accuracy: f64,
    #[arg(long, default_value_t = 0.02)]
    accuracy_spread: f64,
    /// Weight of the score component shared by all models, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    shared_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

impl ZooArgs {
    fn config(&self, num_models: usize, seed: u64) -> ZooConfig {
        ZooConfig {
            num_models,
            num_classes: self.classes,
            selection_size: self.selection_size,
            test_size: self.test_size,
            target_accuracy: self.target_accuracy,
            accuracy_spread: self.accuracy_spread,
            shared_signal_weight: self.shared_weight,
            confidence_temperature: self.temperature,
            seed,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct StochasticArgs {
    /// Number of epochs N.
    #[arg(long, default_value_t = 16)]
    epochs: usize,
    /// Iterations per epoch N_i.
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// Threshold t_a for adding the strongest remaining model.
    #[arg(long, default_value_t = 0.5)]
    add_threshold: f64,
    /// Threshold t_r for removing the weakest member.
    #[arg(long, default_value_t = 0.5)]
    remove_threshold: f64,
    /// Size range r of the per-epoch band.
    #[arg(long, default_value_t = 10)]
    size_range: usize,
}

impl StochasticArgs {
    fn params(&self, seed: u64) -> StochasticParams {
        StochasticParams {
            num_epochs: self.epochs,
            iterations_per_epoch: self.iterations,
            add_strongest_threshold: self.add_threshold,
            remove_weakest_threshold: self.remove_threshold,
            size_range: self.size_range,
            seed,
        }
    }
}

#[derive(Args, Debug)]
struct GenZooArgs {
    /// Output archive directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 25)]
    models: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Attribute noise the library should emulate.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Label noise the library should emulate.
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    #[command(flatten)]
    zoo: ZooArgs,
}

#[derive(Args, Debug)]
struct InjectNoiseArgs {
    /// IDX file of unsigned-byte images.
    #[arg(long)]
    images: PathBuf,
    /// IDX file of unsigned-byte labels.
    #[arg(long)]
    labels: PathBuf,
    /// Output directory; receives features.idx, labels.idx and noise.meta.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Evaluation split: feature noise only, labels stay clean.
    #[arg(long)]
    eval: bool,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    archive: PathBuf,
    /// Algorithms to run; repeat or comma-separate. Defaults to all.
    #[arg(long = "algorithm", value_delimiter = ',')]
    algorithms: Vec<Algorithm>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    stochastic: StochasticArgs,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock times in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    archive: PathBuf,
    /// Largest library the oracle will enumerate.
    #[arg(long, default_value_t = DEFAULT_EXHAUSTIVE_CAP)]
    cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Use this archive as the single pool instead of synthetic libraries.
    #[arg(long)]
    archive: Option<PathBuf>,
    #[arg(long = "algorithm", value_delimiter = ',')]
    algorithms: Vec<Algorithm>,
    /// Pool size P.
    #[arg(long, default_value_t = 50)]
    pool_size: usize,
    /// Draw size m.
    #[arg(long, default_value_t = 25)]
    draw_size: usize,
    /// Repetitions R.
    #[arg(long, default_value_t = 20)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Attribute-noise levels of the synthetic grid.
    #[arg(long, value_delimiter = ',', default_values_t = GRID_LEVELS)]
    sigmas: Vec<f64>,
    /// Label-noise levels of the synthetic grid.
    #[arg(long, value_delimiter = ',', default_values_t = GRID_LEVELS)]
    ps: Vec<f64>,
    /// Accuracy lost per unit of attribute noise.
    #[arg(long, default_value_t = 0.5)]
    sigma_slope: f64,
    /// Accuracy lost per unit of label noise.
    #[arg(long, default_value_t = 0.5)]
    p_slope: f64,
    #[command(flatten)]
    zoo: ZooArgs,
    #[command(flatten)]
    stochastic: StochasticArgs,
    #[arg(long)]
    out: PathBuf,
    /// csv or jsonl.
    #[arg(long, default_value = "csv")]
    format: ResultFormat,
    /// Record wall_ms per run; output is then no longer reproducible byte for byte.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Archive directory.
    archive: PathBuf,
    /// Treat accuracy mismatches in the manifest as errors.
    #[arg(long)]
    strict: bool,
}

#[derive(Serialize)]
struct Reproducibility {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    command: Vec<String>,
}

impl Reproducibility {
    fn new(seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            command: std::env::args().collect(),
        }
    }
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen_zoo(args: GenZooArgs) -> Result<()> {
    let noise = NoiseConfig::new(args.sigma, args.p);
    let config = args.zoo.config(args.models, args.seed);
    let archive: Archive = noise_degraded_zoo(&config, noise, DegradationSlopes::default())?;
    let mut extra = BTreeMap::new();
    extra.insert("seed".to_owned(), args.seed.to_string());
    extra.insert("zoo_config".to_owned(), serde_json::to_string(&config)?);
    extra.insert("version".to_owned(), env!("CARGO_PKG_VERSION").to_owned());
    let meta = ArchiveMetadata {
        dataset_id: "synthetic".to_owned(),
        noise: Some(noise),
        created_by: format!("{} gen-zoo", env!("CARGO_PKG_NAME")),
        extra,
    };
    write_archive(&archive, &meta, &args.out)?;
    println!(
        "wrote {} models, {} classes, {}+{} samples to {}",
        archive.num_models(),
        archive.num_classes(),
        archive.selection().num_samples(),
        archive.test().num_samples(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct InjectSummary {
    reproducibility: Reproducibility,
    sigma: f64,
    p: f64,
    evaluation_split: bool,
    samples: usize,
    flipped: usize,
}

fn inject_noise(args: InjectNoiseArgs) -> Result<()> {
    let images = read_idx(&args.images).with_context(|| format!("reading {}", args.images.display()))?;
    let labels = read_idx(&args.labels).with_context(|| format!("reading {}", args.labels.display()))?;
    if images.dims.first() != labels.dims.first() {
        bail!("{} images but {} labels", images.dims.first().unwrap_or(&0), labels.len());
    }
    let noise = NoiseConfig::new(args.sigma, if args.eval { 0.0 } else { args.p });
    noise.validate()?;
    let dataset: RawDataset<f32> = RawDataset::from_bytes(
        &images.data,
        images.item_size(),
        labels.data.iter().map(|&l| u32::from(l)).collect(),
        args.classes,
    )?;
    let noisy = add_feature_noise(&dataset, noise.sigma, derive_seed(args.seed, &[0]))?;
    let noisy = flip_labels(&noisy, noise.p, derive_seed(args.seed, &[1]))?;
    let flipped = noisy.labels().iter().zip(dataset.labels()).filter(|(a, b)| a != b).count();

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join("features.idx"), encode_idx_f32(&images.dims, noisy.features())?)?;
    let label_bytes: Vec<u8> = noisy.labels().iter().map(|&l| l as u8).collect();
    fs::write(args.out.join("labels.idx"), encode_idx(&labels.dims, &label_bytes)?)?;
    let summary = InjectSummary {
        reproducibility: Reproducibility::new(args.seed),
        sigma: noise.sigma,
        p: noise.p,
        evaluation_split: args.eval,
        samples: dataset.num_samples(),
        flipped,
    };
    write_json(Some(&args.out.join("noise.meta.json")), &summary)?;
    println!("{} samples, {flipped} labels flipped, written to {}", summary.samples, args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ReportSummary {
    algorithm: Algorithm,
    committee: Vec<usize>,
    model_ids: Vec<String>,
    selection_accuracy: f64,
    test_accuracy: f64,
    seed: Option<u64>,
    evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_ms: Option<f64>,
}

impl ReportSummary {
    fn new(archive: &Archive, report: &SelectionReport, timing: bool) -> Self {
        Self {
            algorithm: report.algorithm,
            committee: report.committee.members().to_vec(),
            model_ids: report.committee.iter().map(|m| archive.model_ids()[m].clone()).collect(),
            selection_accuracy: report.selection_accuracy,
            test_accuracy: report.test_accuracy,
            seed: report.seed,
            evaluations: report.evaluations,
            wall_ms: timing.then_some(report.elapsed.as_secs_f64() * 1e3),
        }
    }
}

#[derive(Serialize)]
struct SelectOutput {
    reproducibility: Reproducibility,
    archive: PathBuf,
    stochastic: StochasticParams,
    best_single_selection_accuracy: f64,
    reports: Vec<ReportSummary>,
}

fn load(path: &Path) -> Result<Archive> {
    let loaded = load_archive(path).with_context(|| format!("loading archive {}", path.display()))?;
    for warning in &loaded.warnings {
        log::warn!("{warning}");
    }
    Ok(loaded.archive)
}

fn select(args: SelectArgs) -> Result<()> {
    let archive = load(&args.archive)?;
    let algorithms = if args.algorithms.is_empty() { Algorithm::ALL.to_vec() } else { args.algorithms.clone() };
    let params = args.stochastic.params(args.seed);
    params.validate()?;
    let mut reports = Vec::new();
    for &algorithm in &algorithms {
        let report = run_algorithm(&archive, algorithm, &params)?;
        eprintln!(
            "{:<14} size {:>3}  selection {:.4}  test {:.4}",
            algorithm.name(),
            report.committee.len(),
            report.selection_accuracy,
            report.test_accuracy
        );
        reports.push(ReportSummary::new(&archive, &report, args.timing));
    }
    let output = SelectOutput {
        reproducibility: Reproducibility::new(args.seed),
        archive: args.archive.clone(),
        stochastic: params,
        best_single_selection_accuracy: archive.individual_accuracy(archive.top_model()),
        reports,
    };
    write_json(args.out.as_deref(), &output)
}

#[derive(Serialize)]
struct OracleOutput {
    reproducibility: Reproducibility,
    archive: PathBuf,
    committee: Vec<usize>,
    selection_accuracy: f64,
    test_accuracy: f64,
}

fn oracle(args: OracleArgs) -> Result<()> {
    let archive = load(&args.archive)?;
    let (committee, selection_accuracy) = exhaustive_oracle_with_cap(&archive, args.cap)?;
    let output = OracleOutput {
        reproducibility: Reproducibility::new(0),
        archive: args.archive.clone(),
        test_accuracy: archive.test().accuracy(&committee)?,
        committee: committee.members().to_vec(),
        selection_accuracy,
    };
    write_json(args.out.as_deref(), &output)
}

fn print_curves(label: &str, curves: &MarginCurves) {
    for (name, curve) in [("attribute", &curves.attribute), ("label", &curves.label), ("both", &curves.both)] {
        let points: Vec<String> = curve.iter().map(|p| format!("{:.2}:{:+.5}", p.level, p.mean)).collect();
        eprintln!("{label} {name:<9} {}", points.join("  "));
    }
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let source = match &args.archive {
        Some(path) => ArchiveSource::Archive { path: path.clone() },
        None => ArchiveSource::Synthetic {
            zoo: args.zoo.config(args.pool_size, args.seed),
            grid: make_noise_grid(&args.sigmas, &args.ps),
            slopes: DegradationSlopes { sigma: args.sigma_slope, p: args.p_slope },
        },
    };
    let plan = ExperimentPlan {
        source,
        algorithms: if args.algorithms.is_empty() { Algorithm::ALL.to_vec() } else { args.algorithms.clone() },
        pool_size: args.pool_size,
        draw_size: args.draw_size,
        repetitions: args.repetitions,
        master_seed: args.seed,
        stochastic: args.stochastic.params(0),
        record_timing: args.timing,
    };
    let records = run_grid_experiment(&plan)?;
    export_results(&records, &args.out, args.format)?;
    let meta = RunMetadata::new(&plan, args.format, records.len()).write(&args.out)?;

    let curves = ensemble_curves(&records, SplitKind::Test);
    print_curves("margin over top-1 (test)", &curves);
    for (algorithm, size) in mean_committee_sizes(&records) {
        eprintln!("mean committee size {:<14} {size:.2}", algorithm.name());
    }
    let (low, high) = grid_extremes();
    let rises = curves.rises(low, high);
    eprintln!("rises from {low} to {high}: attribute {} label {} both {}", rises[0], rises[1], rises[2]);
    println!("{} records written to {} ({})", records.len(), args.out.display(), meta.display());
    Ok(())
}

fn validate_archive(args: ValidateArgs) -> Result<()> {
    let loaded = load_archive(&args.archive).with_context(|| format!("invalid archive {}", args.archive.display()))?;
    let archive = &loaded.archive;
    for warning in &loaded.warnings {
        eprintln!("warning: {warning}");
    }
    if args.strict && !loaded.warnings.is_empty() {
        bail!("{} manifest accuracies disagree with the stored predictions", loaded.warnings.len());
    }
    let best = archive.top_model();
    println!(
        "ok: {} models, {} classes, {} selection / {} test samples, best model {} at {:.4}",
        archive.num_models(),
        archive.num_classes(),
        archive.selection().num_samples(),
        archive.test().num_samples(),
        archive.model_ids()[best],
        archive.individual_accuracy(best)
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenZoo(args) => gen_zoo(args),
        Command::InjectNoise(args) => inject_noise(args),
        Command::Select(args) => select(args),
        Command::Oracle(args) => oracle(args),
        Command::Experiment(args) => experiment(args),
        Command::ValidateArchive(args) => validate_archive(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
