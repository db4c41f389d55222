use std::fs;
use std::path::{Path, PathBuf};

use committee_core::io::{load_archive, parse_idx, read_idx, write_archive, ArchiveMetadata};
use committee_core::noise::NoiseConfig;
use committee_core::{generate_zoo, Archive, ZooConfig};

const MNIST_TEST_LABELS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/t10k-labels-idx1-ubyte");

/// Values read from the same file by torchvision's `read_label_file`.
const TORCHVISION_FIRST_TEN: [u8; 10] = [7, 2, 1, 0, 4, 1, 4, 9, 5, 9];
const TORCHVISION_LABEL_SUM: u64 = 44434;
const TORCHVISION_CLASS_COUNTS: [usize; 10] = [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009];

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

fn small_zoo() -> Archive {
    generate_zoo(&ZooConfig {
        num_models: 6,
        num_classes: 4,
        selection_size: 60,
        test_size: 40,
        seed: 5,
        ..ZooConfig::default()
    })
    .unwrap()
}

#[test]
fn archive_round_trip_is_byte_exact() {
    let archive = small_zoo();
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let meta = ArchiveMetadata {
        dataset_id: "synthetic".into(),
        noise: Some(NoiseConfig::new(0.1, 0.2)),
        created_by: "format test".into(),
        extra: [("seed".to_string(), "5".to_string())].into(),
    };
    write_archive(&archive, &meta, first.path()).unwrap();

    let loaded = load_archive(first.path()).unwrap();
    assert!(loaded.warnings.is_empty(), "{:?}", loaded.warnings);
    assert_eq!(loaded.archive.selection().probabilities(), archive.selection().probabilities());
    assert_eq!(loaded.archive.test().labels(), archive.test().labels());
    assert_eq!(loaded.archive.model_ids(), archive.model_ids());
    write_archive(&loaded.archive, &ArchiveMetadata::from(&loaded.manifest), second.path()).unwrap();

    let a = files_under(first.path());
    let b = files_under(second.path());
    assert_eq!(a.len(), 2 + archive.num_models());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.strip_prefix(first.path()).unwrap(), y.strip_prefix(second.path()).unwrap());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn model_files_store_little_endian_f32_selection_then_test() {
    let archive = small_zoo();
    let dir = tempfile::tempdir().unwrap();
    write_archive(&archive, &ArchiveMetadata::default(), dir.path()).unwrap();
    let bytes = fs::read(dir.path().join("models/0003.f32")).unwrap();
    let floats: Vec<f32> = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let (sel, test) = floats.split_at(60 * 4);
    assert_eq!(sel, archive.selection().model_rows(3));
    assert_eq!(test, archive.test().model_rows(3));

    let labels = fs::read(dir.path().join("labels.u16")).unwrap();
    let labels: Vec<u32> = labels.chunks_exact(2).map(|b| u32::from(u16::from_le_bytes([b[0], b[1]]))).collect();
    assert_eq!(&labels[..60], archive.selection().labels());
    assert_eq!(&labels[60..], archive.test().labels());
}

/// Header check and payload read done by hand, without the library parser.
fn hand_read_labels(bytes: &[u8]) -> Vec<u8> {
    assert_eq!(&bytes[..4], &[0, 0, 0x08, 0x01]);
    let count = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    assert_eq!(bytes.len(), 8 + count);
    bytes[8..].to_vec()
}

#[test]
fn official_mnist_test_labels() {
    let tensor = read_idx(MNIST_TEST_LABELS).unwrap();
    assert_eq!(tensor.dims, vec![10000]);
    assert_eq!(tensor.data.len(), 10000);
    assert_eq!(tensor.data[0], 7);
    assert_eq!(tensor.data[..10], TORCHVISION_FIRST_TEN);
    assert_eq!(tensor.data.iter().map(|&l| u64::from(l)).sum::<u64>(), TORCHVISION_LABEL_SUM);
    let mut counts = [0usize; 10];
    for &l in &tensor.data {
        counts[l as usize] += 1;
    }
    assert_eq!(counts, TORCHVISION_CLASS_COUNTS);

    let bytes = fs::read(MNIST_TEST_LABELS).unwrap();
    assert_eq!(tensor.data, hand_read_labels(&bytes));
}

#[test]
fn truncated_mnist_file_is_rejected() {
    let bytes = fs::read(MNIST_TEST_LABELS).unwrap();
    assert!(parse_idx(&bytes[..bytes.len() - 1]).is_err());
}
