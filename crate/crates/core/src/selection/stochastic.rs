//! Randomized committee search steered by individual strength and diversity.
//!
//! Each step adds or removes exactly one model. The chance of adding is
//! `1 - (size - epoch) / range`, so during epoch `i` the committee drifts into
//! sizes `i..=i + range` and stays there. Added models are either the
//! strongest remaining one or the one least correlated with the committee;
//! removed models are either the weakest member or one end of the most
//! correlated pair. The best committee seen at any step is returned.
//!
//! Random draws come from a ChaCha8 generator seeded with `params.seed`, in
//! the order: step draw, then the add or remove draw.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Algorithm, SearchTrace, SelectionReport, TraceEntry};
use crate::error::{Error, Result};
use crate::prediction::{Committee, CommitteeEvaluator, CorrelationMatrix, PredictionArchive};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticParams {
    pub num_epochs: usize,
    pub iterations_per_epoch: usize,
    /// Below this draw the strongest remaining model is added.
    pub add_strongest_threshold: f64,
    /// Below this draw the weakest member is removed.
    pub remove_weakest_threshold: f64,
    pub size_range: usize,
    pub seed: u64,
}

impl Default for StochasticParams {
    fn default() -> Self {
        Self {
            num_epochs: 16,
            iterations_per_epoch: 1000,
            add_strongest_threshold: 0.5,
            remove_weakest_threshold: 0.5,
            size_range: 10,
            seed: 0,
        }
    }
}

impl StochasticParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_owned()));
        if self.num_epochs == 0 {
            return bad("num_epochs must be positive");
        }
        if self.iterations_per_epoch == 0 {
            return bad("iterations_per_epoch must be positive");
        }
        if self.size_range == 0 {
            return bad("size_range must be at least 1");
        }
        for t in [self.add_strongest_threshold, self.remove_weakest_threshold] {
            if !(0.0..=1.0).contains(&t) {
                return bad("thresholds must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

struct Selector<'a> {
    /// Position of each model in the accuracy ranking; lower is stronger.
    rank_pos: Vec<usize>,
    correlations: &'a CorrelationMatrix,
}

impl Selector<'_> {
    fn strongest(&self, left: &[usize]) -> usize {
        *left.iter().min_by_key(|&&m| self.rank_pos[m]).expect("non-empty pool")
    }

    fn weakest(&self, committee: &Committee) -> usize {
        committee.iter().max_by_key(|&m| self.rank_pos[m]).expect("non-empty committee")
    }

    /// Remaining model whose highest correlation to any member is lowest;
    /// ties go to the stronger model.
    fn least_correlated(&self, committee: &Committee, left: &[usize]) -> usize {
        let mut best: Option<(f64, usize)> = None;
        for &m in left {
            let worst = committee.iter().map(|c| self.correlations.get(m, c)).fold(f64::NEG_INFINITY, f64::max);
            let better = match best {
                None => true,
                Some((w, b)) => worst < w || (worst == w && self.rank_pos[m] < self.rank_pos[b]),
            };
            if better {
                best = Some((worst, m));
            }
        }
        best.expect("non-empty pool").1
    }

    /// Weaker end of the most correlated member pair (first pair on ties).
    fn most_correlated_member(&self, committee: &Committee) -> usize {
        let members = committee.members();
        let mut pair = (members[0], members[1]);
        let mut highest = f64::NEG_INFINITY;
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                let r = self.correlations.get(a, b);
                if r > highest {
                    highest = r;
                    pair = (a, b);
                }
            }
        }
        if self.rank_pos[pair.0] > self.rank_pos[pair.1] {
            pair.0
        } else {
            pair.1
        }
    }
}

/// Runs the stochastic search and returns the best committee it visited.
pub fn stochastic_select<T: Scalar>(
    archive: &PredictionArchive<T>,
    params: &StochasticParams,
) -> Result<SelectionReport> {
    let started = Instant::now();
    params.validate()?;
    let num_models = archive.num_models();
    let correlations = archive.correlation_matrix();
    let mut rank_pos = vec![0; num_models];
    for (pos, m) in archive.rank_models().into_iter().enumerate() {
        rank_pos[m] = pos;
    }
    let selector = Selector { rank_pos, correlations: &correlations };

    let eval = CommitteeEvaluator::new(archive.selection());
    let split = archive.selection();
    let mut sums = vec![0i64; split.num_samples() * split.num_classes()];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut committee = Committee::new();
    let mut left: Vec<usize> = (0..num_models).collect();
    let mut best: Option<(usize, Committee)> = None;
    let mut trace = SearchTrace(Vec::with_capacity(params.num_epochs * params.iterations_per_epoch));
    let range = params.size_range as f64;

    for epoch in 0..params.num_epochs {
        for iteration in 0..params.iterations_per_epoch {
            let size = committee.len();
            let add_probability = 1.0 - (size as f64 - epoch as f64) / range;
            let u: f64 = rng.random();
            let add = size == 0 || (u < add_probability && !left.is_empty());

            let (model, operation) = if add {
                let u_add: f64 = rng.random();
                if size == 0 || u_add < params.add_strongest_threshold {
                    (selector.strongest(&left), "add-strongest")
                } else {
                    (selector.least_correlated(&committee, &left), "add-diverse")
                }
            } else {
                let u_remove: f64 = rng.random();
                if size == 1 || u_remove < params.remove_weakest_threshold {
                    (selector.weakest(&committee), "remove-weakest")
                } else {
                    (selector.most_correlated_member(&committee), "remove-correlated")
                }
            };

            let rows = split.fixed_rows(model);
            if add {
                committee.insert(model);
                left.retain(|&m| m != model);
                sums.iter_mut().zip(rows).for_each(|(s, &v)| *s += v);
            } else {
                committee.remove(model);
                left.push(model);
                sums.iter_mut().zip(rows).for_each(|(s, &v)| *s -= v);
            }

            let correct = eval.correct_from_sums(&committee, &sums);
            if best.as_ref().is_none_or(|(b, _)| correct > *b) {
                best = Some((correct, committee.clone()));
            }
            trace.push(TraceEntry {
                step: epoch * params.iterations_per_epoch + iteration,
                epoch,
                operation,
                committee_size: committee.len(),
                accuracy: eval.fraction(correct),
                best_accuracy: eval.fraction(best.as_ref().map_or(0, |b| b.0)),
            });
        }
    }

    let (_, committee) = best.expect("at least one step runs");
    SelectionReport::finish(
        archive,
        Algorithm::Stochastic,
        committee,
        trace,
        Some(params.seed),
        started,
        eval.evaluations(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::test_support::random_archive;

    fn small(seed: u64) -> StochasticParams {
        StochasticParams {
            num_epochs: 4,
            iterations_per_epoch: 100,
            size_range: 3,
            seed,
            ..StochasticParams::default()
        }
    }

    #[test]
    fn defaults() {
        let p = StochasticParams::default();
        assert_eq!((p.num_epochs, p.iterations_per_epoch, p.size_range), (16, 1000, 10));
        assert_eq!((p.add_strongest_threshold, p.remove_weakest_threshold), (0.5, 0.5));
    }

    #[test]
    fn invalid_params_are_rejected() {
        for p in [
            StochasticParams { size_range: 0, ..small(0) },
            StochasticParams { num_epochs: 0, ..small(0) },
            StochasticParams { iterations_per_epoch: 0, ..small(0) },
            StochasticParams { add_strongest_threshold: 1.5, ..small(0) },
            StochasticParams { remove_weakest_threshold: -0.1, ..small(0) },
        ] {
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn single_model_library() {
        let archive = random_archive(1, 20, 3, 1);
        let report = stochastic_select(&archive, &small(5)).unwrap();
        assert_eq!(report.committee, Committee::singleton(0));
    }

    #[test]
    fn first_step_adds_the_strongest_model() {
        let archive = random_archive(7, 120, 4, 2);
        for seed in 0..5 {
            let report = stochastic_select(&archive, &small(seed)).unwrap();
            let first = &report.trace.entries()[0];
            assert_eq!(first.operation, "add-strongest");
            assert_eq!(first.accuracy, archive.individual_accuracy(archive.top_model()));
            assert!(report.selection_accuracy >= first.accuracy);
            assert!(report.trace.is_monotone());
        }
    }

    #[test]
    fn same_seed_same_run() {
        let archive = random_archive(8, 100, 4, 3);
        let a = stochastic_select(&archive, &small(42)).unwrap();
        let b = stochastic_select(&archive, &small(42)).unwrap();
        assert_eq!(a.committee, b.committee);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn helper_rules() {
        let archive = random_archive(6, 200, 4, 4);
        let corr = archive.correlation_matrix();
        let mut rank_pos = vec![0; 6];
        let ranked = archive.rank_models();
        for (p, &m) in ranked.iter().enumerate() {
            rank_pos[m] = p;
        }
        let sel = Selector { rank_pos: rank_pos.clone(), correlations: &corr };
        let all: Vec<usize> = (0..6).collect();
        assert_eq!(sel.strongest(&all), ranked[0]);
        let full: Committee = (0..6).collect();
        assert_eq!(sel.weakest(&full), ranked[5]);

        // Brute-force the diversity rules.
        let committee: Committee = [ranked[0], ranked[1], ranked[2]].into_iter().collect();
        let left: Vec<usize> = ranked[3..].to_vec();
        let score = |m: usize| committee.iter().map(|c| corr.get(m, c)).fold(f64::MIN, f64::max);
        let expected = *left
            .iter()
            .min_by(|&&a, &&b| score(a).partial_cmp(&score(b)).unwrap().then(rank_pos[a].cmp(&rank_pos[b])))
            .unwrap();
        assert_eq!(sel.least_correlated(&committee, &left), expected);

        let mut pairs = Vec::new();
        for a in committee.iter() {
            for b in committee.iter().filter(|&b| b > a) {
                pairs.push((corr.get(a, b), a, b));
            }
        }
        let top = pairs.iter().cloned().fold(pairs[0], |x, y| if y.0 > x.0 { y } else { x });
        let weaker = if rank_pos[top.1] > rank_pos[top.2] { top.1 } else { top.2 };
        assert_eq!(sel.most_correlated_member(&committee), weaker);
    }
}
