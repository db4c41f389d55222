//! On-disk prediction archives.
//!
//! An archive is a directory:
//!
//! ```text
//! manifest.json      UTF-8 JSON, see ArchiveManifest
//! labels.u16         little-endian u16 labels, selection split then test split
//! models/0000.f32    little-endian f32 probabilities, row-major sample x class,
//! models/0001.f32    selection rows then test rows
//! ...
//! ```
//!
//! Readers reject any payload whose byte length disagrees with the manifest.
//! A directory must not be written by more than one writer at a time.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseConfig;
use crate::prediction::{EvalSplit, PredictionArchive, SplitKind};
use crate::scalar::Scalar;

pub const ARCHIVE_FORMAT: &str = "committee-archive";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.u16";

/// Stored accuracies may differ from recomputed ones by this much before a
/// warning is raised.
pub const ACCURACY_CHECK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestModel {
    pub model_id: String,
    pub path: String,
    pub selection_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub format: String,
    pub format_version: u32,
    pub dataset_id: String,
    pub num_classes: usize,
    pub num_models: usize,
    pub selection_size: usize,
    pub test_size: usize,
    pub labels_file: String,
    pub models: Vec<ManifestModel>,
    pub noise: Option<NoiseConfig>,
    pub created_by: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// Descriptive manifest fields supplied by whoever writes an archive.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArchiveMetadata {
    pub dataset_id: String,
    pub noise: Option<NoiseConfig>,
    pub created_by: String,
    pub extra: BTreeMap<String, String>,
}

impl From<&ArchiveManifest> for ArchiveMetadata {
    fn from(m: &ArchiveManifest) -> Self {
        Self {
            dataset_id: m.dataset_id.clone(),
            noise: m.noise,
            created_by: m.created_by.clone(),
            extra: m.metadata.clone(),
        }
    }
}

/// Unvalidated archive contents, as produced by an external exporter.
#[derive(Clone, Debug)]
pub struct RawArchive<T: Scalar = f32> {
    pub model_ids: Vec<String>,
    pub num_classes: usize,
    pub selection_probabilities: Vec<T>,
    pub selection_labels: Vec<u32>,
    pub test_probabilities: Vec<T>,
    pub test_labels: Vec<u32>,
}

impl<T: Scalar> RawArchive<T> {
    pub fn validate(self) -> Result<PredictionArchive<T>> {
        let m = self.model_ids.len();
        let selection = EvalSplit::new(
            SplitKind::Selection,
            m,
            self.num_classes,
            self.selection_probabilities,
            self.selection_labels,
        )?;
        let test = EvalSplit::new(SplitKind::Test, m, self.num_classes, self.test_probabilities, self.test_labels)?;
        PredictionArchive::new(self.model_ids, selection, test)
    }
}

#[derive(Clone, Debug)]
pub struct LoadedArchive {
    pub archive: PredictionArchive<f32>,
    pub manifest: ArchiveManifest,
    /// Stored accuracies that disagree with the recomputed ones.
    pub warnings: Vec<String>,
}

fn model_path(index: usize) -> String {
    format!("models/{index:04}.f32")
}

/// Validates raw contents and writes them.
pub fn write_raw_archive<T: Scalar>(
    raw: RawArchive<T>,
    meta: &ArchiveMetadata,
    dir: impl AsRef<Path>,
) -> Result<ArchiveManifest> {
    write_archive(&raw.validate()?, meta, dir)
}

pub fn write_archive<T: Scalar>(
    archive: &PredictionArchive<T>,
    meta: &ArchiveMetadata,
    dir: impl AsRef<Path>,
) -> Result<ArchiveManifest> {
    let dir = dir.as_ref();
    let k = archive.num_classes();
    if k > u16::MAX as usize + 1 {
        return Err(Error::invalid(format!("{k} classes do not fit 16-bit labels")));
    }
    let models_dir = dir.join("models");
    fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;

    let mut label_bytes = Vec::with_capacity(2 * (archive.selection().num_samples() + archive.test().num_samples()));
    for &l in archive.selection().labels().iter().chain(archive.test().labels()) {
        label_bytes.extend_from_slice(&(l as u16).to_le_bytes());
    }
    let labels_path = dir.join(LABELS_FILE);
    fs::write(&labels_path, label_bytes).map_err(|e| Error::io(&labels_path, e))?;

    let mut models = Vec::with_capacity(archive.num_models());
    for m in 0..archive.num_models() {
        let rows = archive.selection().model_rows(m).iter().chain(archive.test().model_rows(m));
        let mut bytes =
            Vec::with_capacity(4 * (archive.selection().model_rows(m).len() + archive.test().model_rows(m).len()));
        for p in rows {
            bytes.extend_from_slice(&(p.to_f64_lossy() as f32).to_le_bytes());
        }
        let rel = model_path(m);
        let path = dir.join(&rel);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        models.push(ManifestModel {
            model_id: archive.model_ids()[m].clone(),
            path: rel,
            selection_accuracy: archive.individual_accuracy(m),
        });
    }

    let manifest = ArchiveManifest {
        format: ARCHIVE_FORMAT.to_owned(),
        format_version: FORMAT_VERSION,
        dataset_id: meta.dataset_id.clone(),
        num_classes: k,
        num_models: archive.num_models(),
        selection_size: archive.selection().num_samples(),
        test_size: archive.test().num_samples(),
        labels_file: LABELS_FILE.to_owned(),
        models,
        noise: meta.noise,
        created_by: meta.created_by.clone(),
        metadata: meta.extra.clone(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

fn resolve(dir: &Path, rel: &str) -> Result<PathBuf> {
    let rel_path = Path::new(rel);
    if !rel_path.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(Error::invalid(format!("payload path {rel:?} must be relative and stay inside the archive")));
    }
    Ok(dir.join(rel_path))
}

fn read_exact_len(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected {
        return Err(Error::invalid(format!(
            "{} holds {} bytes, manifest implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<ArchiveManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: ArchiveManifest =
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("malformed manifest: {e}")))?;
    if manifest.format != ARCHIVE_FORMAT {
        return Err(Error::invalid(format!("unrecognized archive format {:?}", manifest.format)));
    }
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    if manifest.models.len() != manifest.num_models {
        return Err(Error::invalid(format!(
            "manifest lists {} models but declares {}",
            manifest.models.len(),
            manifest.num_models
        )));
    }
    Ok(manifest)
}

/// Reads and fully validates an archive, keeping the manifest and warnings.
pub fn load_archive(dir: impl AsRef<Path>) -> Result<LoadedArchive> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let (k, n_sel, n_test) = (manifest.num_classes, manifest.selection_size, manifest.test_size);
    let n_total = n_sel + n_test;

    let label_bytes = read_exact_len(&resolve(dir, &manifest.labels_file)?, 2 * n_total)?;
    let labels: Vec<u32> = label_bytes.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]]) as u32).collect();

    let rows_per_model = n_total * k;
    let mut sel_probs = Vec::with_capacity(manifest.num_models * n_sel * k);
    let mut test_probs = Vec::with_capacity(manifest.num_models * n_test * k);
    for entry in &manifest.models {
        let bytes = read_exact_len(&resolve(dir, &entry.path)?, 4 * rows_per_model)?;
        let values = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        for (i, v) in values.enumerate() {
            if i < n_sel * k {
                sel_probs.push(v);
            } else {
                test_probs.push(v);
            }
        }
    }

    let raw = RawArchive {
        model_ids: manifest.models.iter().map(|m| m.model_id.clone()).collect(),
        num_classes: k,
        selection_probabilities: sel_probs,
        selection_labels: labels[..n_sel].to_vec(),
        test_probabilities: test_probs,
        test_labels: labels[n_sel..].to_vec(),
    };
    let archive = raw.validate()?;

    let mut warnings = Vec::new();
    for (m, entry) in manifest.models.iter().enumerate() {
        let actual = archive.individual_accuracy(m);
        if (actual - entry.selection_accuracy).abs() > ACCURACY_CHECK_TOLERANCE {
            let msg = format!(
                "model {:?}: stored accuracy {} but recomputed {actual}",
                entry.model_id, entry.selection_accuracy
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    Ok(LoadedArchive { archive, manifest, warnings })
}

pub fn read_archive(dir: impl AsRef<Path>) -> Result<PredictionArchive<f32>> {
    load_archive(dir).map(|l| l.archive)
}
