//! Dataset corruption: Gaussian attribute noise and uniform label flips.
//!
//! Features are normalized intensities in `[0, 1]`. Attribute noise adds an
//! i.i.d. zero-mean Gaussian draw to every value and clips back to `[0, 1]`;
//! draws are taken sample-major, feature-minor. Label noise picks each label
//! with probability `p` and redraws it uniformly from `0..K` until it differs
//! from the original.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_for;

/// Noise levels used for both attribute and label corruption in the grid.
pub const GRID_LEVELS: [f64; 4] = [0.0, 0.1, 0.2, 0.3];

#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset<T: Scalar = f32> {
    features: Vec<T>,
    num_features: usize,
    labels: Vec<u32>,
    num_classes: usize,
}

impl<T: Scalar> RawDataset<T> {
    pub fn new(features: Vec<T>, num_features: usize, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        if features.len() != labels.len() * num_features {
            return Err(Error::InvalidParameter(format!(
                "{} feature values for {} samples of {num_features} features",
                features.len(),
                labels.len()
            )));
        }
        if let Some(x) = features.iter().find(|x| !(T::zero()..=T::one()).contains(*x)) {
            return Err(Error::InvalidParameter(format!("feature value {x} outside [0, 1]")));
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::InvalidParameter(format!("label {l} outside 0..{num_classes}")));
        }
        Ok(Self { features, num_features, labels, num_classes })
    }

    /// Scales raw 8-bit intensities into `[0, 1]`.
    pub fn from_bytes(pixels: &[u8], num_features: usize, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        let scale = T::from_f64_lossy(255.0);
        let features = pixels.iter().map(|&b| T::from_f64_lossy(b as f64) / scale).collect();
        Self::new(features, num_features, labels, num_classes)
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// One corruption setting: attribute noise `sigma`, label flip probability `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub p: f64,
}

impl NoiseConfig {
    pub const CLEAN: NoiseConfig = NoiseConfig { sigma: 0.0, p: 0.0 };

    pub fn new(sigma: f64, p: f64) -> Self {
        Self { sigma, p }
    }

    /// The 4 x 4 grid over [`GRID_LEVELS`].
    pub fn standard_grid() -> Vec<NoiseConfig> {
        make_noise_grid(&GRID_LEVELS, &GRID_LEVELS)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma {} must be non-negative", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!("flip probability {} outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

/// Cartesian product, sigma outer and p inner.
pub fn make_noise_grid(sigmas: &[f64], ps: &[f64]) -> Vec<NoiseConfig> {
    sigmas.iter().flat_map(|&sigma| ps.iter().map(move |&p| NoiseConfig { sigma, p })).collect()
}

/// The unclipped offsets `add_feature_noise` draws for a given seed.
pub fn gaussian_offsets(sigma: f64, seed: u64) -> Result<impl Iterator<Item = f64>> {
    let normal =
        Normal::new(0.0, sigma).map_err(|_| Error::InvalidParameter(format!("sigma {sigma} must be non-negative")))?;
    let mut rng = rng_for(seed);
    Ok(std::iter::repeat_with(move || normal.sample(&mut rng)))
}

pub fn add_feature_noise<T: Scalar>(data: &RawDataset<T>, sigma: f64, seed: u64) -> Result<RawDataset<T>> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be non-negative")));
    }
    if sigma == 0.0 {
        return Ok(data.clone());
    }
    let features = data
        .features
        .iter()
        .zip(gaussian_offsets(sigma, seed)?)
        .map(|(&x, g)| T::from_f64_lossy((x.to_f64_lossy() + g).clamp(0.0, 1.0)))
        .collect();
    Ok(RawDataset { features, ..data.clone() })
}

/// Flips labels in place; returns how many changed.
pub fn flip_label_slice(labels: &mut [u32], num_classes: usize, p: f64, seed: u64) -> Result<usize> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("flip probability {p} outside [0, 1]")));
    }
    if p == 0.0 {
        return Ok(0);
    }
    if num_classes < 2 {
        return Err(Error::SingleClassFlip);
    }
    let mut rng = rng_for(seed);
    let mut flipped = 0;
    for label in labels.iter_mut() {
        if rng.random::<f64>() < p {
            let original = *label;
            while *label == original {
                *label = rng.random_range(0..num_classes as u32);
            }
            flipped += 1;
        }
    }
    Ok(flipped)
}

pub fn flip_labels<T: Scalar>(data: &RawDataset<T>, p: f64, seed: u64) -> Result<RawDataset<T>> {
    let mut out = data.clone();
    flip_label_slice(&mut out.labels, data.num_classes, p, seed)?;
    Ok(out)
}

/// Corrupts a training set and its evaluation sets for one grid cell.
///
/// Attribute noise hits every set; label flips touch the training set only.
/// Each set gets its own stream derived from `seed`.
pub fn corrupt_splits<T: Scalar>(
    train: &RawDataset<T>,
    evaluation: &[RawDataset<T>],
    config: NoiseConfig,
    seed: u64,
) -> Result<(RawDataset<T>, Vec<RawDataset<T>>)> {
    use crate::seed::derive_seed;
    config.validate()?;
    let noisy_train = add_feature_noise(train, config.sigma, derive_seed(seed, &[0, 0]))?;
    let noisy_train = flip_labels(&noisy_train, config.p, derive_seed(seed, &[0, 1]))?;
    let noisy_eval = evaluation
        .iter()
        .enumerate()
        .map(|(i, d)| add_feature_noise(d, config.sigma, derive_seed(seed, &[1, i as u64])))
        .collect::<Result<_>>()?;
    Ok((noisy_train, noisy_eval))
}
