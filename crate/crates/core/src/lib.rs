//! Selecting committees of classifiers from a library of probability outputs.
//!
//! The crate scores committees by soft voting and searches for good ones with
//! a ranked-prefix baseline, one- and two-element local search and a
//! diversity-aware stochastic search. Around that sit Gaussian feature and
//! uniform label corruption, a synthetic model-library generator, a binary
//! archive format and an experiment harness computing relative margins over
//! the best single model.
//!
//! Numeric containers are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the storage width used on disk.

pub mod error;
pub mod experiment;
pub mod io;
pub mod noise;
pub mod prediction;
pub mod scalar;
pub mod seed;
pub mod selection;
pub mod zoo;

pub use error::{Error, Result};
pub use noise::{add_feature_noise, flip_labels, make_noise_grid, NoiseConfig, RawDataset};
pub use prediction::{
    committee_accuracy, correlation_matrix, model_correlation, rank_models, soft_vote, Committee, CommitteeEvaluator,
    CorrelationMatrix, EvalSplit, PredictionArchive, SplitKind,
};
pub use scalar::Scalar;
pub use selection::{
    enumerate_moves, exhaustive_oracle, local_search, run_algorithm, stochastic_select, top_1, top_n, Algorithm,
    OperatorSet, SearchTrace, SelectionReport, StochasticParams,
};
pub use zoo::{generate_zoo, noise_degraded_zoo, DegradationSlopes, ZooConfig};

/// Archive with single-precision storage, as read from disk.
pub type Archive = PredictionArchive<f32>;
/// Archive with double-precision storage.
pub type Archive64 = PredictionArchive<f64>;
pub type Split = EvalSplit<f32>;
pub type Split64 = EvalSplit<f64>;
pub type Dataset = RawDataset<f32>;
pub type Dataset64 = RawDataset<f64>;
