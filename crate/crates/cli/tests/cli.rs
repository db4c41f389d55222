use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn committee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_committee")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = committee(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn gen_zoo(dir: &Path, seed: &str) -> String {
    let archive = dir.join(format!("zoo-{seed}"));
    let path = archive.to_str().unwrap().to_string();
    ok(&[
        "gen-zoo",
        "--out",
        &path,
        "--models",
        "8",
        "--seed",
        seed,
        "--classes",
        "4",
        "--selection-size",
        "150",
        "--test-size",
        "100",
        "--sigma",
        "0.1",
        "--p",
        "0.2",
    ]);
    path
}

#[test]
fn gen_zoo_writes_a_valid_archive() {
    let dir = tempfile::tempdir().unwrap();
    let archive = gen_zoo(dir.path(), "3");
    assert!(Path::new(&archive).join("manifest.json").is_file());
    let models = fs::read_dir(Path::new(&archive).join("models")).unwrap().count();
    assert_eq!(models, 8);
    ok(&["validate-archive", &archive, "--strict"]);
}

#[test]
fn gen_zoo_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_zoo(dir.path(), "5");
    let b = dir.path().join("again");
    fs::rename(&a, &b).unwrap();
    let a = gen_zoo(dir.path(), "5");
    for name in ["labels.u16", "models/0000.f32", "models/0007.f32"] {
        assert_eq!(fs::read(Path::new(&a).join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn select_and_oracle_agree_on_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let archive = gen_zoo(dir.path(), "1");
    let select_out = dir.path().join("select.json");
    let oracle_out = dir.path().join("oracle.json");
    ok(&[
        "select",
        "--archive",
        &archive,
        "--algorithm",
        "top-1,top-n,2-opt-c,stochastic",
        "--seed",
        "4",
        "--epochs",
        "4",
        "--iterations",
        "60",
        "--size-range",
        "3",
        "--out",
        select_out.to_str().unwrap(),
    ]);
    ok(&["oracle", "--archive", &archive, "--out", oracle_out.to_str().unwrap()]);

    let selected = json(&select_out);
    let best = json(&oracle_out)["selection_accuracy"].as_f64().unwrap();
    let floor = selected["best_single_selection_accuracy"].as_f64().unwrap();
    let reports = selected["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    for report in reports {
        let acc = report["selection_accuracy"].as_f64().unwrap();
        assert!(floor <= acc && acc <= best, "{report}");
        assert!(report.get("wall_ms").is_none());
    }
}

#[test]
fn oracle_refuses_pools_above_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let archive = gen_zoo(dir.path(), "2");
    assert!(!committee(&["oracle", "--archive", &archive, "--cap", "4"]).status.success());
}

#[test]
fn small_experiment_writes_results_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results.csv");
    ok(&[
        "experiment",
        "--algorithm",
        "top-1,top-n",
        "--pool-size",
        "8",
        "--draw-size",
        "5",
        "--repetitions",
        "2",
        "--sigmas",
        "0,0.3",
        "--ps",
        "0",
        "--classes",
        "4",
        "--selection-size",
        "100",
        "--test-size",
        "100",
        "--seed",
        "6",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("algorithm,sigma,p,"));
    assert_eq!(lines.count(), 2 * 2 * 2);
    let meta = json(&dir.path().join("results.csv.meta.json"));
    assert_eq!(meta["master_seed"], 6);
    assert_eq!(meta["record_count"], 8);
}

fn idx(dims: &[u32], type_code: u8, payload: &[u8]) -> Vec<u8> {
    let mut bytes = vec![0, 0, type_code, dims.len() as u8];
    for d in dims {
        bytes.extend(d.to_be_bytes());
    }
    bytes.extend(payload);
    bytes
}

#[test]
fn inject_noise_on_a_small_idx_pair() {
    let dir = tempfile::tempdir().unwrap();
    let (n, side) = (200u32, 4u32);
    let pixels: Vec<u8> = (0..n * side * side).map(|i| (i % 256) as u8).collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let images_path = dir.path().join("images.idx");
    let labels_path = dir.path().join("labels.idx");
    fs::write(&images_path, idx(&[n, side, side], 0x08, &pixels)).unwrap();
    fs::write(&labels_path, idx(&[n], 0x08, &labels)).unwrap();
    let out = dir.path().join("noisy");
    ok(&[
        "inject-noise",
        "--images",
        images_path.to_str().unwrap(),
        "--labels",
        labels_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--sigma",
        "0.1",
        "--p",
        "0.5",
        "--seed",
        "2",
    ]);

    let features = fs::read(out.join("features.idx")).unwrap();
    assert_eq!(&features[..4], &[0, 0, 0x0D, 3]);
    assert_eq!(features.len(), 4 + 12 + 4 * (n * side * side) as usize);
    let noisy_labels = fs::read(out.join("labels.idx")).unwrap();
    assert_eq!(&noisy_labels[..8], &idx(&[n], 0x08, &[])[..]);
    let changed = noisy_labels[8..].iter().zip(&labels).filter(|(a, b)| a != b).count();
    let meta = json(&out.join("noise.meta.json"));
    assert_eq!(meta["flipped"], changed);
    assert!(changed > 50 && changed < 150, "{changed}");
}

#[test]
fn evaluation_split_keeps_labels() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<u8> = (0..50).map(|i| (i % 10) as u8).collect();
    let images_path = dir.path().join("images.idx");
    let labels_path = dir.path().join("labels.idx");
    fs::write(&images_path, idx(&[50, 2], 0x08, &[128; 100])).unwrap();
    fs::write(&labels_path, idx(&[50], 0x08, &labels)).unwrap();
    let out = dir.path().join("eval");
    ok(&[
        "inject-noise",
        "--images",
        images_path.to_str().unwrap(),
        "--labels",
        labels_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--p",
        "0.9",
        "--eval",
    ]);
    assert_eq!(&fs::read(out.join("labels.idx")).unwrap()[8..], &labels[..]);
}

#[test]
fn invalid_archive_exits_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    let archive = gen_zoo(dir.path(), "4");
    fs::write(Path::new(&archive).join("models/0002.f32"), [0u8; 12]).unwrap();
    let out = committee(&["validate-archive", &archive]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert!(!committee(&["select", "--archive", dir.path().join("missing").to_str().unwrap()]).status.success());
}
