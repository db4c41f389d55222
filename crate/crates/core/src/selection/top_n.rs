use std::time::Instant;

use super::{Algorithm, SearchTrace, SelectionReport, TraceEntry};
use crate::error::Result;
use crate::prediction::{Committee, CommitteeEvaluator, PredictionArchive};
use crate::scalar::Scalar;

/// Best-ranked single model.
pub fn top_1<T: Scalar>(archive: &PredictionArchive<T>) -> Result<SelectionReport> {
    let started = Instant::now();
    let model = archive.top_model();
    let acc = archive.individual_accuracy(model);
    let trace = SearchTrace(vec![TraceEntry {
        step: 0,
        epoch: 0,
        operation: "prefix",
        committee_size: 1,
        accuracy: acc,
        best_accuracy: acc,
    }]);
    SelectionReport::finish(archive, Algorithm::Top1, Committee::singleton(model), trace, None, started, 0)
}

/// Best prefix of the accuracy ranking; the shortest one on ties.
pub fn top_n<T: Scalar>(archive: &PredictionArchive<T>) -> Result<SelectionReport> {
    let started = Instant::now();
    let eval = CommitteeEvaluator::new(archive.selection());
    let mut prefix = Committee::new();
    let mut best: Option<(usize, Committee)> = None;
    let mut trace = SearchTrace::default();

    for (step, model) in archive.rank_models().into_iter().enumerate() {
        prefix.insert(model);
        let correct = eval.correct(&prefix);
        if best.as_ref().is_none_or(|(b, _)| correct > *b) {
            best = Some((correct, prefix.clone()));
        }
        trace.push(TraceEntry {
            step,
            epoch: 0,
            operation: "prefix",
            committee_size: prefix.len(),
            accuracy: eval.fraction(correct),
            best_accuracy: eval.fraction(best.as_ref().map_or(0, |b| b.0)),
        });
    }

    let (_, committee) = best.expect("archives hold at least one model");
    SelectionReport::finish(archive, Algorithm::TopN, committee, trace, None, started, eval.evaluations())
}
