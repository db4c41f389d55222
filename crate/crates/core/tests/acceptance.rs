//! Acceptance criteria. Each check prints one PASS/FAIL line; the binary
//! exits non-zero when any check fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use committee_core::experiment::{
    ensemble_curves, margin_vs_topn_normalized, relative_margin_over_top1, run_grid_experiment, ExperimentPlan,
};
use committee_core::io::{export_results, load_archive, read_idx, write_archive, ArchiveMetadata, ResultFormat};
use committee_core::noise::{add_feature_noise, flip_labels, NoiseConfig, RawDataset};
use committee_core::selection::{
    enumerate_moves, exhaustive_oracle, run_algorithm, stochastic_select, Algorithm, OperatorSet, StochasticParams,
};
use committee_core::{committee_accuracy, generate_zoo, Archive, Committee, SplitKind, ZooConfig};

const METRIC_TOLERANCE: f64 = 1e-12;
const FLIP_RATE: f64 = 0.2;
const FLIP_RATE_TOLERANCE: f64 = 0.004;
const NOISE_STD_RELATIVE_TOLERANCE: f64 = 0.01;
const ORACLE_BUDGET: Duration = Duration::from_secs(120);
const NOISE_BUDGET: Duration = Duration::from_secs(10);
const TREND_BUDGET: Duration = Duration::from_secs(15 * 60);
const TREND_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const TREND_REQUIRED: usize = 4;
/// Read from the same file by torchvision's `read_label_file`.
const TORCHVISION_FIRST_TEN: [u8; 10] = [7, 2, 1, 0, 4, 1, 4, 9, 5, 9];
const TORCHVISION_LABEL_SUM: u64 = 44434;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

fn property_archive(seed: u64) -> Archive {
    generate_zoo(&ZooConfig {
        num_models: 10,
        num_classes: 5,
        selection_size: 500,
        test_size: 200,
        target_accuracy: 0.6,
        accuracy_spread: 0.05,
        shared_signal_weight: 0.3,
        seed: 1000 + seed,
        ..ZooConfig::default()
    })
    .expect("valid zoo config")
}

fn local_ops(alg: Algorithm) -> Option<OperatorSet> {
    match alg {
        Algorithm::OneOptC | Algorithm::TopNOneOptC => Some(OperatorSet::OneOpt),
        Algorithm::TwoOptC | Algorithm::TopNTwoOptC => Some(OperatorSet::TwoOpt),
        _ => None,
    }
}

fn small_stochastic(seed: u64) -> StochasticParams {
    StochasticParams { num_epochs: 5, iterations_per_epoch: 200, size_range: 4, seed, ..StochasticParams::default() }
}

/// Ranking by individually computed singleton accuracy, then every prefix.
fn best_prefix_accuracy(archive: &Archive) -> f64 {
    let split = archive.selection();
    let mut order: Vec<(f64, usize)> =
        (0..archive.num_models()).map(|m| (committee_accuracy(&Committee::singleton(m), split).unwrap(), m)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    (1..=order.len())
        .map(|k| committee_accuracy(&order[..k].iter().map(|&(_, m)| m).collect(), split).unwrap())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn oracle_dominance_and_local_optimality() -> Outcome {
    let started = Instant::now();
    let mut problems = Vec::new();
    let mut runs = 0;
    for seed in 0..30 {
        let archive = property_archive(seed);
        let (_, oracle) = exhaustive_oracle(&archive).unwrap();
        for alg in Algorithm::ALL {
            let report = run_algorithm(&archive, alg, &small_stochastic(seed)).unwrap();
            runs += 1;
            if report.selection_accuracy > oracle {
                problems.push(format!("archive {seed}: {alg} {} > oracle {oracle}", report.selection_accuracy));
            }
            if let Some(ops) = local_ops(alg) {
                if let Some(mv) = enumerate_moves(&archive, &report.committee, ops).unwrap() {
                    if mv.accuracy > report.selection_accuracy {
                        problems.push(format!("archive {seed}: {alg} output improved by {}", mv.kind.name()));
                    }
                }
            }
            if alg == Algorithm::TopN && report.selection_accuracy != best_prefix_accuracy(&archive) {
                problems.push(format!("archive {seed}: top-n misses the best prefix"));
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed > ORACLE_BUDGET {
        problems.push(format!("took {elapsed:.1?}, budget {ORACLE_BUDGET:?}"));
    }
    Outcome::new(problems.is_empty(), format!("30 archives, {runs} runs, {elapsed:.1?}; {}", summary(&problems)))
}

fn best_single_model_floor() -> Outcome {
    let mut problems = Vec::new();
    let mut runs = 0;
    for seed in 0..30 {
        let archive = property_archive(seed);
        let floor = archive.individual_accuracy(archive.top_model());
        for alg in Algorithm::ALL {
            let seeds: &[u64] = if alg.is_stochastic() { &[0, 1, 2, 3] } else { &[0] };
            for &s in seeds {
                let report = run_algorithm(&archive, alg, &small_stochastic(s)).unwrap();
                runs += 1;
                if report.selection_accuracy < floor {
                    problems.push(format!("archive {seed}, {alg}, seed {s}: {} < {floor}", report.selection_accuracy));
                }
            }
        }
    }
    Outcome::new(problems.is_empty() && runs >= 200, format!("{runs} runs; {}", summary(&problems)))
}

fn stochastic_size_band() -> Outcome {
    let m = 12;
    let mut problems = Vec::new();
    let mut steps = 0;
    let archive: Archive = generate_zoo(&ZooConfig {
        num_models: m,
        selection_size: 400,
        test_size: 50,
        seed: 12,
        ..ZooConfig::default()
    })
    .unwrap();
    for seed in 0..10 {
        let params = StochasticParams {
            num_epochs: 5,
            iterations_per_epoch: 300,
            size_range: 4,
            seed,
            ..StochasticParams::default()
        };
        let report = stochastic_select(&archive, &params).unwrap();
        let mut entered: Option<usize> = None;
        for e in report.trace.entries() {
            steps += 1;
            let (lo, hi) = (e.epoch.min(m), (e.epoch + params.size_range).min(m));
            let inside = (lo..=hi).contains(&e.committee_size);
            if entered == Some(e.epoch) && !inside {
                problems.push(format!("seed {seed}, step {}: size {} outside [{lo}, {hi}]", e.step, e.committee_size));
            }
            if inside {
                entered = Some(e.epoch);
            }
        }
    }
    Outcome::new(
        problems.is_empty() && steps == 10 * 5 * 300,
        format!("10 seeds, {steps} steps; {}", summary(&problems)),
    )
}

fn metric_anchors() -> Outcome {
    let a: f64 = relative_margin_over_top1(0.88, 0.80).unwrap();
    let b: f64 = margin_vs_topn_normalized(0.855, 0.85, 0.80).unwrap_or(f64::NAN);
    Outcome::new(
        (a - 0.10).abs() <= METRIC_TOLERANCE && (b - 0.10).abs() <= METRIC_TOLERANCE,
        format!("relative {a:.15}, vs top-n {b:.15}"),
    )
}

fn noise_statistics() -> Outcome {
    let started = Instant::now();
    let mut problems = Vec::new();

    let n = 100_000;
    let labels: Vec<u32> = (0..n).map(|i| (i % 10) as u32).collect();
    let data = RawDataset::<f64>::new(vec![0.0; n], 1, labels.clone(), 10).unwrap();
    let flipped = flip_labels(&data, FLIP_RATE, 7).unwrap();
    let changed = labels.iter().zip(flipped.labels()).filter(|(a, b)| a != b).count();
    let rate = changed as f64 / n as f64;
    if (rate - FLIP_RATE).abs() > FLIP_RATE_TOLERANCE {
        problems.push(format!("flip rate {rate}"));
    }
    if flipped.features() != data.features() {
        problems.push("label flips touched features".into());
    }

    let (samples, width, sigma) = (1000, 1000, 0.1);
    let pixels = RawDataset::<f64>::new(vec![0.5; samples * width], width, vec![0; samples], 10).unwrap();
    let noisy = add_feature_noise(&pixels, sigma, 8).unwrap();
    let offsets: Vec<f64> = noisy.features().iter().map(|x| x - 0.5).collect();
    let clipped = noisy.features().iter().filter(|&&x| x == 0.0 || x == 1.0).count();
    let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
    let std = (offsets.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / (offsets.len() - 1) as f64).sqrt();
    if clipped > 0 {
        problems.push(format!("{clipped} values clipped at 5 sigma"));
    }
    if (std / sigma - 1.0).abs() > NOISE_STD_RELATIVE_TOLERANCE {
        problems.push(format!("std {std}"));
    }
    if add_feature_noise(&pixels, 0.0, 9).unwrap() != pixels || flip_labels(&data, 0.0, 9).unwrap() != data {
        problems.push("zero noise is not the identity".into());
    }
    let elapsed = started.elapsed();
    if elapsed > NOISE_BUDGET {
        problems.push(format!("took {elapsed:.1?}"));
    }
    Outcome::new(
        problems.is_empty(),
        format!("flip rate {rate:.5}, std {std:.6}, {elapsed:.1?}; {}", summary(&problems)),
    )
}

fn trend_plan(master_seed: u64) -> ExperimentPlan {
    ExperimentPlan { repetitions: 5, master_seed, ..ExperimentPlan::synthetic_default(ZooConfig::default()) }
}

fn trend_reproduction() -> Outcome {
    let started = Instant::now();
    let mut rising = 0;
    let mut notes = Vec::new();
    for seed in TREND_SEEDS {
        let plan = trend_plan(seed);
        let records = run_grid_experiment(&plan).unwrap();
        let curves = ensemble_curves(&records, SplitKind::Test);
        let flags = curves.rises(0.0, 0.3);
        let ends = [&curves.attribute, &curves.label, &curves.both]
            .map(|c| format!("{:+.4}->{:+.4}", c[0].mean, c[c.len() - 1].mean));
        notes.push(format!("seed {seed} [{}] {flags:?}", ends.join(" ")));
        if flags.iter().all(|&f| f) {
            rising += 1;
        }
    }
    let elapsed = started.elapsed();
    for note in &notes {
        println!("      {note}");
    }
    Outcome::new(
        rising >= TREND_REQUIRED && elapsed <= TREND_BUDGET,
        format!("{rising}/{} seeds rise on all three curves, {elapsed:.1?}", TREND_SEEDS.len()),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let plan = ExperimentPlan {
        pool_size: 20,
        draw_size: 10,
        repetitions: 2,
        master_seed: 99,
        stochastic: small_stochastic(0),
        ..ExperimentPlan::synthetic_default(ZooConfig { selection_size: 300, test_size: 300, ..ZooConfig::default() })
    };
    let paths = ["a.csv", "b.csv"].map(|name| dir.path().join(name));
    for path in &paths {
        export_results(&run_grid_experiment(&plan).unwrap(), path, ResultFormat::Csv).unwrap();
    }
    let [a, b] = paths.map(|p| fs::read(p).unwrap());
    Outcome::new(a == b && !a.is_empty(), format!("{} bytes per run", a.len()))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn format_checks() -> Outcome {
    let mut problems = Vec::new();
    let archive = property_archive(0);
    let (first, second) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let meta = ArchiveMetadata {
        dataset_id: "synthetic".into(),
        noise: Some(NoiseConfig::new(0.3, 0.1)),
        created_by: "acceptance".into(),
        ..ArchiveMetadata::default()
    };
    write_archive(&archive, &meta, first.path()).unwrap();
    let loaded = load_archive(first.path()).unwrap();
    write_archive(&loaded.archive, &ArchiveMetadata::from(&loaded.manifest), second.path()).unwrap();
    if dir_bytes(first.path()) != dir_bytes(second.path()) {
        problems.push("archive bytes changed on round trip".to_string());
    }

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/t10k-labels-idx1-ubyte");
    let labels = read_idx(path).unwrap();
    let raw = fs::read(path).unwrap();
    // Independent read: fixed 8-byte header, one byte per label.
    let independent = if raw.get(..4) == Some(&[0, 0, 0x08, 0x01][..]) { &raw[8..] } else { &[][..] };
    let sum: u64 = labels.data.iter().map(|&l| u64::from(l)).sum();
    if labels.data.len() != 10000
        || labels.data[0] != 7
        || labels.data[..10] != TORCHVISION_FIRST_TEN
        || sum != TORCHVISION_LABEL_SUM
        || labels.data != independent
    {
        problems.push(format!("MNIST labels: {} read, first {:?}", labels.data.len(), labels.data.first()));
    }
    Outcome::new(
        problems.is_empty(),
        format!(
            "round trip over {} files, {} MNIST labels; {}",
            dir_bytes(first.path()).len(),
            labels.data.len(),
            summary(&problems)
        ),
    )
}

fn summary(problems: &[String]) -> String {
    match problems {
        [] => "no violations".into(),
        [one] => one.clone(),
        [first, rest @ ..] => format!("{first} (+{} more)", rest.len()),
    }
}

fn main() -> ExitCode {
    let checks: [Check; 8] = [
        ("oracle dominance and local optimality", oracle_dominance_and_local_optimality),
        ("best single model floor", best_single_model_floor),
        ("stochastic size band", stochastic_size_band),
        ("metric anchors", metric_anchors),
        ("noise statistics", noise_statistics),
        ("trend reproduction", trend_reproduction),
        ("determinism", determinism),
        ("format", format_checks),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = check();
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("{tag}  {name}: {}", outcome.detail);
        failed += usize::from(!outcome.passed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
