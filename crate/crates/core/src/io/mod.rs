//! Serialization: prediction archives, IDX tensors and result tables.

pub mod archive;
pub mod idx;
pub mod results;

pub use archive::{
    load_archive, read_archive, read_manifest, write_archive, write_raw_archive, ArchiveManifest, ArchiveMetadata,
    LoadedArchive, ManifestModel, RawArchive,
};
pub use idx::{encode_idx, encode_idx_f32, parse_idx, parse_idx_f32, read_idx, IdxTensor};
pub use results::{export_results, read_results, write_csv, write_json_lines, ResultFormat, COLUMNS};
