//! Committee search procedures.
//!
//! Every search scores committees on the selection split only. Reports carry
//! the chosen committee together with its accuracy on both splits,
//! recomputed from scratch once the search is over.

mod exhaustive;
mod local_search;
mod stochastic;
mod top_n;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use exhaustive::{exhaustive_oracle, exhaustive_oracle_with_cap, DEFAULT_EXHAUSTIVE_CAP};
pub use local_search::{enumerate_moves, local_search, MoveKind, OperatorSet, ScoredMove};
pub use stochastic::{stochastic_select, StochasticParams};
pub use top_n::{top_1, top_n};

use crate::error::{Error, Result};
use crate::prediction::{Committee, PredictionArchive};
use crate::scalar::Scalar;

/// The selection procedures a trial can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "top-1")]
    Top1,
    #[serde(rename = "top-n")]
    TopN,
    #[serde(rename = "1-opt-c")]
    OneOptC,
    #[serde(rename = "2-opt-c")]
    TwoOptC,
    #[serde(rename = "top-n-1-opt-c")]
    TopNOneOptC,
    #[serde(rename = "top-n-2-opt-c")]
    TopNTwoOptC,
    #[serde(rename = "stochastic")]
    Stochastic,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Top1,
        Algorithm::TopN,
        Algorithm::OneOptC,
        Algorithm::TwoOptC,
        Algorithm::TopNOneOptC,
        Algorithm::TopNTwoOptC,
        Algorithm::Stochastic,
    ];

    /// Everything except the single-model baseline.
    pub const ENSEMBLES: [Algorithm; 6] = [
        Algorithm::TopN,
        Algorithm::OneOptC,
        Algorithm::TwoOptC,
        Algorithm::TopNOneOptC,
        Algorithm::TopNTwoOptC,
        Algorithm::Stochastic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Top1 => "top-1",
            Algorithm::TopN => "top-n",
            Algorithm::OneOptC => "1-opt-c",
            Algorithm::TwoOptC => "2-opt-c",
            Algorithm::TopNOneOptC => "top-n-1-opt-c",
            Algorithm::TopNTwoOptC => "top-n-2-opt-c",
            Algorithm::Stochastic => "stochastic",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self == Algorithm::Stochastic
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm {s:?}")))
    }
}

/// One recorded search step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub step: usize,
    /// Stochastic epoch; zero for the other searches.
    pub epoch: usize,
    pub operation: &'static str,
    pub committee_size: usize,
    pub accuracy: f64,
    pub best_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SearchTrace(pub Vec<TraceEntry>);

impl SearchTrace {
    pub fn entries(&self) -> &[TraceEntry] {
        &self.0
    }

    pub(crate) fn push(&mut self, entry: TraceEntry) {
        self.0.push(entry);
    }

    /// Best-so-far accuracy never drops.
    pub fn is_monotone(&self) -> bool {
        self.0.windows(2).all(|w| w[1].best_accuracy >= w[0].best_accuracy)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectionReport {
    pub algorithm: Algorithm,
    pub committee: Committee,
    pub selection_accuracy: f64,
    pub test_accuracy: f64,
    pub trace: SearchTrace,
    pub seed: Option<u64>,
    pub elapsed: Duration,
    /// Committees scored during the search (memo misses).
    pub evaluations: usize,
}

impl SelectionReport {
    pub(crate) fn finish<T: Scalar>(
        archive: &PredictionArchive<T>,
        algorithm: Algorithm,
        committee: Committee,
        trace: SearchTrace,
        seed: Option<u64>,
        started: Instant,
        evaluations: usize,
    ) -> Result<Self> {
        let selection_accuracy = archive.selection().accuracy(&committee)?;
        let test_accuracy = archive.test().accuracy(&committee)?;
        Ok(Self {
            algorithm,
            committee,
            selection_accuracy,
            test_accuracy,
            trace,
            seed,
            elapsed: started.elapsed(),
            evaluations,
        })
    }
}

/// Runs one algorithm. `params` only matters for [`Algorithm::Stochastic`].
pub fn run_algorithm<T: Scalar>(
    archive: &PredictionArchive<T>,
    algorithm: Algorithm,
    params: &StochasticParams,
) -> Result<SelectionReport> {
    let empty = Committee::new();
    match algorithm {
        Algorithm::Top1 => top_1(archive),
        Algorithm::TopN => top_n(archive),
        Algorithm::OneOptC => local_search(archive, &empty, OperatorSet::OneOpt).map(|r| r.renamed(algorithm)),
        Algorithm::TwoOptC => local_search(archive, &empty, OperatorSet::TwoOpt).map(|r| r.renamed(algorithm)),
        Algorithm::TopNOneOptC | Algorithm::TopNTwoOptC => {
            let started = Instant::now();
            let seed = top_n(archive)?;
            let ops = if algorithm == Algorithm::TopNOneOptC { OperatorSet::OneOpt } else { OperatorSet::TwoOpt };
            let mut report = local_search(archive, &seed.committee, ops)?.renamed(algorithm);
            report.evaluations += seed.evaluations;
            report.elapsed = started.elapsed();
            Ok(report)
        }
        Algorithm::Stochastic => stochastic_select(archive, params),
    }
}

impl SelectionReport {
    fn renamed(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }
}
