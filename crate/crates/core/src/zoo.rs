//! Synthetic model libraries with tunable strength and diversity.
//!
//! Every simulated model scores each sample as
//!
//! ```text
//! score[c] = rho * shared[c] + (1 - rho) * own[c] + boost * [c == label]
//! ```
//!
//! where `shared` is one standard-normal vector per sample common to all
//! models and `own` is drawn per model. Probabilities are
//! `softmax(score / temperature)`. `rho` moves inter-model correlation;
//! `boost` moves accuracy. Each model gets its own target accuracy around
//! the configured mean, and its boost is found by bisection against a fixed
//! probe set drawn from the same noise distribution.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseConfig;
use crate::prediction::{EvalSplit, PredictionArchive, SplitKind};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_for};

const PROBE_SIZE: usize = 2000;
const PROBE_SEED: u64 = 0x7a6f_6f5f_7072_6f62;
/// Boost used for models asked to be always right.
const SATURATED_BOOST: f64 = 1.0e3;
const BISECTION_STEPS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZooConfig {
    pub num_models: usize,
    pub num_classes: usize,
    pub selection_size: usize,
    pub test_size: usize,
    /// Mean individual accuracy, in `(1/K, 1]`.
    pub target_accuracy: f64,
    /// Standard deviation of per-model accuracy around the mean.
    pub accuracy_spread: f64,
    pub shared_signal_weight: f64,
    pub confidence_temperature: f64,
    pub seed: u64,
}

impl Default for ZooConfig {
    fn default() -> Self {
        Self {
            num_models: 25,
            num_classes: 10,
            selection_size: 1000,
            test_size: 1000,
            target_accuracy: 0.83,
            accuracy_spread: 0.02,
            shared_signal_weight: 0.5,
            confidence_temperature: 1.0,
            seed: 0,
        }
    }
}

impl ZooConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.num_models == 0 {
            return bad("num_models must be positive".into());
        }
        if self.num_classes < 2 {
            return bad("a zoo needs at least two classes".into());
        }
        let chance = 1.0 / self.num_classes as f64;
        if !(self.target_accuracy > chance && self.target_accuracy <= 1.0) {
            return Err(Error::InfeasibleTarget(format!(
                "target accuracy {} must lie in ({chance}, 1]",
                self.target_accuracy
            )));
        }
        if !(self.accuracy_spread >= 0.0 && self.accuracy_spread.is_finite()) {
            return bad(format!("accuracy spread {} must be non-negative", self.accuracy_spread));
        }
        if !(0.0..=1.0).contains(&self.shared_signal_weight) {
            return bad(format!("shared signal weight {} outside [0, 1]", self.shared_signal_weight));
        }
        if !(self.confidence_temperature > 0.0 && self.confidence_temperature.is_finite()) {
            return bad(format!("temperature {} must be positive", self.confidence_temperature));
        }
        Ok(())
    }
}

/// Accuracy lost per unit of attribute and label noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSlopes {
    pub sigma: f64,
    pub p: f64,
}

impl Default for DegradationSlopes {
    fn default() -> Self {
        Self { sigma: 0.5, p: 0.5 }
    }
}

/// Zoo settings emulating models trained under `noise`.
pub fn degraded_config(base: &ZooConfig, noise: NoiseConfig, slopes: DegradationSlopes) -> ZooConfig {
    ZooConfig {
        target_accuracy: base.target_accuracy - slopes.sigma * noise.sigma - slopes.p * noise.p,
        accuracy_spread: base.accuracy_spread * (1.0 + noise.sigma + noise.p),
        ..base.clone()
    }
}

pub fn noise_degraded_zoo<T: Scalar>(
    base: &ZooConfig,
    noise: NoiseConfig,
    slopes: DegradationSlopes,
) -> Result<PredictionArchive<T>> {
    noise.validate()?;
    generate_zoo(&degraded_config(base, noise, slopes))
}

/// Margins the true class needs to win on each probe sample.
struct Probe {
    sorted_margins: Vec<f64>,
}

impl Probe {
    fn new(num_classes: usize, rho: f64) -> Self {
        let mut rng = rng_for(PROBE_SEED);
        let mut margins: Vec<f64> = (0..PROBE_SIZE)
            .map(|_| {
                let mut noise = (0..num_classes).map(|_| {
                    let shared: f64 = rng.sample(StandardNormal);
                    let own: f64 = rng.sample(StandardNormal);
                    rho * shared + (1.0 - rho) * own
                });
                let truth = noise.next().expect("at least two classes");
                noise.fold(f64::NEG_INFINITY, f64::max) - truth
            })
            .collect();
        margins.sort_by(f64::total_cmp);
        Self { sorted_margins: margins }
    }

    fn accuracy(&self, boost: f64) -> f64 {
        self.sorted_margins.partition_point(|&m| m < boost) as f64 / PROBE_SIZE as f64
    }

    /// Smallest boost whose probe accuracy reaches `target`.
    fn boost_for(&self, target: f64) -> f64 {
        if target >= 1.0 {
            return SATURATED_BOOST;
        }
        let (mut lo, mut hi) = (-SATURATED_BOOST, SATURATED_BOOST);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if self.accuracy(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

fn softmax_into<T: Scalar>(scores: &[f64], temperature: f64, out: &mut Vec<T>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    out.extend(exps.iter().map(|e| T::from_f64_lossy(e / total)));
}

/// Draws a library of simulated classifiers; deterministic per config.
pub fn generate_zoo<T: Scalar>(config: &ZooConfig) -> Result<PredictionArchive<T>> {
    config.validate()?;
    let k = config.num_classes;
    let rho = config.shared_signal_weight;
    let n_total = config.selection_size + config.test_size;

    let mut label_rng = rng_for(derive_seed(config.seed, &[0]));
    let labels: Vec<u32> = (0..n_total).map(|_| label_rng.random_range(0..k as u32)).collect();
    let mut shared_rng = rng_for(derive_seed(config.seed, &[1]));
    let shared: Vec<f64> = (0..n_total * k).map(|_| shared_rng.sample(StandardNormal)).collect();

    let probe = Probe::new(k, rho);
    let chance = 1.0 / k as f64;
    let mut sel_probs = Vec::with_capacity(config.num_models * config.selection_size * k);
    let mut test_probs = Vec::with_capacity(config.num_models * config.test_size * k);
    let mut scores = vec![0.0; k];

    for model in 0..config.num_models {
        let mut rng = rng_for(derive_seed(config.seed, &[2, model as u64]));
        let z: f64 = rng.sample(StandardNormal);
        let target = (config.target_accuracy + config.accuracy_spread * z).clamp(chance + 1e-3, 1.0);
        let boost = probe.boost_for(target);

        for (n, &label) in labels.iter().enumerate() {
            for (c, s) in scores.iter_mut().enumerate() {
                let own: f64 = rng.sample(StandardNormal);
                *s = rho * shared[n * k + c] + (1.0 - rho) * own;
            }
            scores[label as usize] += boost;
            let out = if n < config.selection_size { &mut sel_probs } else { &mut test_probs };
            softmax_into(&scores, config.confidence_temperature, out);
        }
    }

    let (sel_labels, test_labels) = labels.split_at(config.selection_size);
    let selection = EvalSplit::new(SplitKind::Selection, config.num_models, k, sel_probs, sel_labels.to_vec())?;
    let test = EvalSplit::new(SplitKind::Test, config.num_models, k, test_probs, test_labels.to_vec())?;
    let ids = (0..config.num_models).map(|m| format!("zoo-{m:03}")).collect();
    PredictionArchive::new(ids, selection, test)
}
