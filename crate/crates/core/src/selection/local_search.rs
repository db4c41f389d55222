//! Steepest-ascent search over committees.
//!
//! From the incumbent, every committee reachable by one atomic operation is
//! scored and the best one is taken if it strictly beats the incumbent. The
//! one-element operator set has three families, the two-element set has all
//! eight.

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{Algorithm, SearchTrace, SelectionReport, TraceEntry};
use crate::error::Result;
use crate::prediction::{Committee, CommitteeEvaluator, PredictionArchive};
use crate::scalar::Scalar;

/// Atomic committee modifications, in tie-break priority order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum MoveKind {
    #[serde(rename = "add")]
    Add,
    #[serde(rename = "remove")]
    Remove,
    #[serde(rename = "swap")]
    Swap,
    #[serde(rename = "addTwo")]
    AddTwo,
    #[serde(rename = "removeTwo")]
    RemoveTwo,
    #[serde(rename = "addAndSwap")]
    AddAndSwap,
    #[serde(rename = "removeAndSwap")]
    RemoveAndSwap,
    #[serde(rename = "swapTwice")]
    SwapTwice,
}

impl MoveKind {
    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Add => "add",
            MoveKind::Remove => "remove",
            MoveKind::Swap => "swap",
            MoveKind::AddTwo => "addTwo",
            MoveKind::RemoveTwo => "removeTwo",
            MoveKind::AddAndSwap => "addAndSwap",
            MoveKind::RemoveAndSwap => "removeAndSwap",
            MoveKind::SwapTwice => "swapTwice",
        }
    }

    /// Number of members taken out and put in.
    fn shape(self) -> (usize, usize) {
        match self {
            MoveKind::Add => (0, 1),
            MoveKind::Remove => (1, 0),
            MoveKind::Swap => (1, 1),
            MoveKind::AddTwo => (0, 2),
            MoveKind::RemoveTwo => (2, 0),
            MoveKind::AddAndSwap => (1, 2),
            MoveKind::RemoveAndSwap => (2, 1),
            MoveKind::SwapTwice => (2, 2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorSet {
    #[serde(rename = "one_opt")]
    OneOpt,
    #[serde(rename = "two_opt")]
    TwoOpt,
}

impl OperatorSet {
    pub fn kinds(self) -> &'static [MoveKind] {
        use MoveKind::*;
        match self {
            OperatorSet::OneOpt => &[Add, Remove, Swap],
            OperatorSet::TwoOpt => &[Add, Remove, Swap, AddTwo, RemoveTwo, AddAndSwap, RemoveAndSwap, SwapTwice],
        }
    }
}

/// A neighbor of the incumbent together with its selection score.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoredMove {
    pub kind: MoveKind,
    pub removed: Vec<usize>,
    pub added: Vec<usize>,
    pub committee: Committee,
    pub correct: usize,
    pub accuracy: f64,
}

struct Candidate {
    kind: MoveKind,
    removed: Vec<usize>,
    added: Vec<usize>,
    committee: Committee,
}

/// All `k`-element subsets of `items`, each in ascending order.
fn choose(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    match k {
        0 => vec![Vec::new()],
        1 => items.iter().map(|&a| vec![a]).collect(),
        2 => items.iter().enumerate().flat_map(|(i, &a)| items[i + 1..].iter().map(move |&b| vec![a, b])).collect(),
        _ => unreachable!("moves touch at most two models per side"),
    }
}

fn candidates(committee: &Committee, num_models: usize, ops: OperatorSet) -> Vec<Candidate> {
    let outside: Vec<usize> = (0..num_models).filter(|&m| !committee.contains(m)).collect();
    let mut out = Vec::new();
    for &kind in ops.kinds() {
        let (n_out, n_in) = kind.shape();
        let removals = choose(committee.members(), n_out);
        let additions = choose(&outside, n_in);
        for removed in &removals {
            for added in &additions {
                let next = committee.with_changes(removed, added);
                if next.is_empty() {
                    continue;
                }
                out.push(Candidate { kind, removed: removed.clone(), added: added.clone(), committee: next });
            }
        }
    }
    out
}

/// Higher score first, then earlier family, then smaller member list.
fn prefer(a: (&Candidate, usize), b: (&Candidate, usize)) -> Ordering {
    b.1.cmp(&a.1).then(a.0.kind.cmp(&b.0.kind)).then_with(|| a.0.committee.cmp(&b.0.committee))
}

pub(crate) fn best_move<T: Scalar>(
    eval: &CommitteeEvaluator<'_, T>,
    committee: &Committee,
    ops: OperatorSet,
) -> Option<ScoredMove> {
    let split = eval.split();
    let pool = candidates(committee, split.num_models(), ops);
    let base = eval.delta_base(committee);
    let scores: Vec<usize> =
        pool.par_iter().map(|c| eval.correct_with_delta(&c.committee, &base, &c.removed, &c.added)).collect();
    let (best, correct) = pool.iter().zip(scores).min_by(|a, b| prefer((a.0, a.1), (b.0, b.1)))?;
    Some(ScoredMove {
        kind: best.kind,
        removed: best.removed.clone(),
        added: best.added.clone(),
        committee: best.committee.clone(),
        correct,
        accuracy: eval.fraction(correct),
    })
}

/// Best committee one atomic operation away from `committee`.
///
/// Returns `None` when no non-empty neighbor exists.
pub fn enumerate_moves<T: Scalar>(
    archive: &PredictionArchive<T>,
    committee: &Committee,
    ops: OperatorSet,
) -> Result<Option<ScoredMove>> {
    committee.check_range(archive.num_models())?;
    let eval = CommitteeEvaluator::new(archive.selection());
    Ok(best_move(&eval, committee, ops))
}

/// Climbs from `initial` until no neighbor strictly improves selection accuracy.
///
/// An empty start counts as worse than any non-empty committee, so the first
/// move is always taken.
pub fn local_search<T: Scalar>(
    archive: &PredictionArchive<T>,
    initial: &Committee,
    ops: OperatorSet,
) -> Result<SelectionReport> {
    let started = Instant::now();
    initial.check_range(archive.num_models())?;
    let eval = CommitteeEvaluator::new(archive.selection());
    let mut current = initial.clone();
    let mut score = (!current.is_empty()).then(|| eval.correct(&current));
    let mut trace = SearchTrace::default();
    let start_acc = eval.fraction(score.unwrap_or(0));
    trace.push(TraceEntry {
        step: 0,
        epoch: 0,
        operation: "start",
        committee_size: current.len(),
        accuracy: start_acc,
        best_accuracy: start_acc,
    });

    while let Some(mv) = best_move(&eval, &current, ops) {
        if score.is_some_and(|s| mv.correct <= s) {
            break;
        }
        score = Some(mv.correct);
        current = mv.committee;
        trace.push(TraceEntry {
            step: trace.entries().len(),
            epoch: 0,
            operation: mv.kind.name(),
            committee_size: current.len(),
            accuracy: mv.accuracy,
            best_accuracy: mv.accuracy,
        });
    }

    let algorithm = match ops {
        OperatorSet::OneOpt => Algorithm::OneOptC,
        OperatorSet::TwoOpt => Algorithm::TwoOptC,
    };
    SelectionReport::finish(archive, algorithm, current, trace, None, started, eval.evaluations())
}
