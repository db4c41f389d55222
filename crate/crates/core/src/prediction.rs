//! Model libraries, committees and soft voting.
//!
//! A [`PredictionArchive`] holds, for every candidate model, its class
//! probability rows on two labeled splits. Committees are scored by soft
//! voting: member rows are summed per sample and the class with the largest
//! total wins, lowest class index first on ties.
//!
//! Sums are accumulated over fixed-point integers (`round(p * 2^48)`), which
//! makes voting exact and independent of summation order. Local search relies
//! on that: a candidate scored as `base - removed + added` must agree bit for
//! bit with the same committee scored from scratch.

use std::collections::HashSet;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability resolution of the vote accumulator.
pub const FIXED_POINT_SCALE: f64 = (1u64 << 48) as f64;

/// Largest library whose vote sums cannot overflow an `i64`.
pub const MAX_MODELS: usize = 1 << 15;

/// Allowed deviation of a probability row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Population variance below which a model counts as constant.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Selection,
    Test,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitKind::Selection => f.write_str("selection"),
            SplitKind::Test => f.write_str("test"),
        }
    }
}

/// Predictions of every model on one labeled sample set.
///
/// Probabilities are laid out model-major, then sample, then class.
#[derive(Clone, Debug)]
pub struct EvalSplit<T: Scalar = f32> {
    kind: SplitKind,
    num_models: usize,
    num_samples: usize,
    num_classes: usize,
    probabilities: Vec<T>,
    labels: Vec<u32>,
    fixed: Vec<i64>,
}

impl<T: Scalar> EvalSplit<T> {
    pub fn new(
        kind: SplitKind,
        num_models: usize,
        num_classes: usize,
        probabilities: Vec<T>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        if num_models == 0 {
            return Err(Error::invalid("a library needs at least one model"));
        }
        if num_models > MAX_MODELS {
            return Err(Error::invalid(format!("{num_models} models exceed the supported maximum of {MAX_MODELS}")));
        }
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        let num_samples = labels.len();
        let expected = num_models * num_samples * num_classes;
        if probabilities.len() != expected {
            return Err(Error::invalid(format!(
                "{kind} split holds {} probabilities, expected {num_models} x {num_samples} x {num_classes} = {expected}",
                probabilities.len()
            )));
        }
        if let Some((n, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= num_classes) {
            return Err(Error::invalid(format!("{kind} label {label} at sample {n} is outside 0..{num_classes}")));
        }

        let mut fixed = Vec::with_capacity(expected);
        for (row_idx, row) in probabilities.chunks_exact(num_classes).enumerate() {
            let mut sum = 0.0;
            for &p in row {
                let p = p.to_f64_lossy();
                if !p.is_finite() || p < 0.0 {
                    let (m, n) = (row_idx / num_samples, row_idx % num_samples);
                    return Err(Error::invalid(format!(
                        "{kind} split, model {m}, sample {n}: probability {p} is not a finite non-negative number"
                    )));
                }
                sum += p;
                fixed.push((p * FIXED_POINT_SCALE).round() as i64);
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                let (m, n) = (row_idx / num_samples, row_idx % num_samples);
                return Err(Error::invalid(format!("{kind} split, model {m}, sample {n}: row sums to {sum}, not 1")));
            }
        }

        Ok(Self { kind, num_models, num_samples, num_classes, probabilities, labels, fixed })
    }

    pub fn kind(&self) -> SplitKind {
        self.kind
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// All rows of one model, sample-major.
    pub fn model_rows(&self, model: usize) -> &[T] {
        let len = self.num_samples * self.num_classes;
        &self.probabilities[model * len..(model + 1) * len]
    }

    pub fn row(&self, model: usize, sample: usize) -> &[T] {
        let k = self.num_classes;
        &self.model_rows(model)[sample * k..(sample + 1) * k]
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    pub(crate) fn fixed_rows(&self, model: usize) -> &[i64] {
        let len = self.num_samples * self.num_classes;
        &self.fixed[model * len..(model + 1) * len]
    }

    fn check_members(&self, committee: &Committee) -> Result<()> {
        if committee.is_empty() {
            return Err(Error::EmptyCommittee);
        }
        committee.check_range(self.num_models)
    }

    fn vote_sums(&self, members: &[usize]) -> Vec<i64> {
        let mut sums = vec![0i64; self.num_samples * self.num_classes];
        for &m in members {
            for (s, &v) in sums.iter_mut().zip(self.fixed_rows(m)) {
                *s += v;
            }
        }
        sums
    }

    pub(crate) fn count_correct(&self, sums: &[i64]) -> usize {
        sums.chunks_exact(self.num_classes)
            .zip(&self.labels)
            .filter(|(row, &label)| votes_for(row, label as usize))
            .count()
    }

    /// Soft-vote prediction for every sample.
    pub fn soft_vote(&self, committee: &Committee) -> Result<Vec<u32>> {
        self.check_members(committee)?;
        let sums = self.vote_sums(committee.members());
        Ok(sums.chunks_exact(self.num_classes).map(|row| argmax(row) as u32).collect())
    }

    /// Number of samples the committee classifies correctly.
    pub fn correct_count(&self, committee: &Committee) -> Result<usize> {
        self.check_members(committee)?;
        Ok(self.count_correct(&self.vote_sums(committee.members())))
    }

    pub fn accuracy(&self, committee: &Committee) -> Result<f64> {
        Ok(self.fraction(self.correct_count(committee)?))
    }

    pub(crate) fn fraction(&self, correct: usize) -> f64 {
        if self.num_samples == 0 {
            0.0
        } else {
            correct as f64 / self.num_samples as f64
        }
    }
}

/// Index of the largest entry; the first one wins ties.
#[inline]
fn argmax(row: &[i64]) -> usize {
    let (mut best, mut top) = (0, row[0]);
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > top {
            (best, top) = (i, v);
        }
    }
    best
}

/// `argmax(row) == label` without scanning for the winner.
#[inline]
fn votes_for(row: &[i64], label: usize) -> bool {
    let t = row[label];
    row[..label].iter().all(|&v| v < t) && row[label + 1..].iter().all(|&v| v <= t)
}

/// Predicted labels of a committee by soft voting.
pub fn soft_vote<T: Scalar>(committee: &Committee, split: &EvalSplit<T>) -> Result<Vec<u32>> {
    split.soft_vote(committee)
}

/// Fraction of samples where the soft vote matches the label.
pub fn committee_accuracy<T: Scalar>(committee: &Committee, split: &EvalSplit<T>) -> Result<f64> {
    split.accuracy(committee)
}

/// Duplicate-free set of model indices, kept sorted.
///
/// The derived ordering compares the sorted member lists lexicographically.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Committee(Vec<usize>);

impl Committee {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(model: usize) -> Self {
        Self(vec![model])
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, model: usize) -> bool {
        self.0.binary_search(&model).is_ok()
    }

    /// Returns false if the model was already a member.
    pub fn insert(&mut self, model: usize) -> bool {
        match self.0.binary_search(&model) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, model);
                true
            }
        }
    }

    pub fn remove(&mut self, model: usize) -> bool {
        match self.0.binary_search(&model) {
            Ok(pos) => {
                self.0.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Copy with `removed` taken out and `added` put in.
    pub fn with_changes(&self, removed: &[usize], added: &[usize]) -> Self {
        let mut next = self.clone();
        for &r in removed {
            next.remove(r);
        }
        for &a in added {
            next.insert(a);
        }
        next
    }

    pub fn check_range(&self, num_models: usize) -> Result<()> {
        match self.0.last() {
            Some(&index) if index >= num_models => Err(Error::ModelOutOfRange { index, num_models }),
            _ => Ok(()),
        }
    }
}

impl FromIterator<usize> for Committee {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut members: Vec<usize> = iter.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        Self(members)
    }
}

impl fmt::Display for Committee {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{m}")?;
        }
        f.write_str("}")
    }
}

/// A library of models with predictions on a selection and a test split.
#[derive(Clone, Debug)]
pub struct PredictionArchive<T: Scalar = f32> {
    model_ids: Vec<String>,
    selection: EvalSplit<T>,
    test: EvalSplit<T>,
    selection_correct: Vec<usize>,
}

impl<T: Scalar> PredictionArchive<T> {
    pub fn new(model_ids: Vec<String>, selection: EvalSplit<T>, test: EvalSplit<T>) -> Result<Self> {
        if selection.kind != SplitKind::Selection || test.kind != SplitKind::Test {
            return Err(Error::invalid("splits passed in the wrong roles"));
        }
        if selection.num_classes != test.num_classes {
            return Err(Error::invalid(format!(
                "class counts differ between splits ({} vs {})",
                selection.num_classes, test.num_classes
            )));
        }
        if selection.num_models != test.num_models {
            return Err(Error::invalid(format!(
                "model counts differ between splits ({} vs {})",
                selection.num_models, test.num_models
            )));
        }
        if model_ids.len() != selection.num_models {
            return Err(Error::invalid(format!("{} model ids for {} models", model_ids.len(), selection.num_models)));
        }
        let mut seen = HashSet::with_capacity(model_ids.len());
        if let Some(dup) = model_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invalid(format!("duplicate model id {dup:?}")));
        }

        let selection_correct =
            (0..selection.num_models).map(|m| selection.count_correct(selection.fixed_rows(m))).collect();
        Ok(Self { model_ids, selection, test, selection_correct })
    }

    pub fn num_models(&self) -> usize {
        self.selection.num_models
    }

    pub fn num_classes(&self) -> usize {
        self.selection.num_classes
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn selection(&self) -> &EvalSplit<T> {
        &self.selection
    }

    pub fn test(&self) -> &EvalSplit<T> {
        &self.test
    }

    pub fn split(&self, kind: SplitKind) -> &EvalSplit<T> {
        match kind {
            SplitKind::Selection => &self.selection,
            SplitKind::Test => &self.test,
        }
    }

    /// Cached selection-split accuracy of a single model.
    pub fn individual_accuracy(&self, model: usize) -> f64 {
        self.selection.fraction(self.selection_correct[model])
    }

    /// Model indices by selection accuracy, best first, ties by ascending index.
    pub fn rank_models(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.num_models()).collect();
        order.sort_by(|&a, &b| self.selection_correct[b].cmp(&self.selection_correct[a]).then(a.cmp(&b)));
        order
    }

    /// Index of the individually strongest model.
    pub fn top_model(&self) -> usize {
        self.rank_models()[0]
    }

    /// New archive restricted to `models`, renumbered in the given order.
    pub fn subset(&self, models: &[usize]) -> Result<Self> {
        let pick = |split: &EvalSplit<T>| -> Result<EvalSplit<T>> {
            let mut probs = Vec::with_capacity(models.len() * split.num_samples * split.num_classes);
            for &m in models {
                if m >= split.num_models {
                    return Err(Error::ModelOutOfRange { index: m, num_models: split.num_models });
                }
                probs.extend_from_slice(split.model_rows(m));
            }
            EvalSplit::new(split.kind, models.len(), split.num_classes, probs, split.labels.clone())
        };
        let ids = models.iter().map(|&m| self.model_ids[m].clone()).collect();
        Self::new(ids, pick(&self.selection)?, pick(&self.test)?)
    }

    /// Pairwise correlations of all models on the selection split.
    pub fn correlation_matrix(&self) -> CorrelationMatrix {
        correlation_matrix(self)
    }
}

/// Model indices sorted by individual selection accuracy, descending.
pub fn rank_models<T: Scalar>(archive: &PredictionArchive<T>) -> Vec<usize> {
    archive.rank_models()
}

/// Pearson correlation of two models' flattened prediction matrices.
///
/// Returns 0 when either model has (population) variance below
/// [`VARIANCE_FLOOR`].
pub fn model_correlation<T: Scalar>(m1: usize, m2: usize, split: &EvalSplit<T>) -> f64 {
    let a = split.model_rows(m1);
    let b = split.model_rows(m2);
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let mean = |xs: &[T]| xs.iter().map(|x| x.to_f64_lossy()).sum::<f64>() / n as f64;
    let (mean_a, mean_b) = (mean(a), mean(b));
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x.to_f64_lossy() - mean_a;
        let dy = y.to_f64_lossy() - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    let (var_a, var_b) = (var_a / n as f64, var_b / n as f64);
    if var_a < VARIANCE_FLOOR || var_b < VARIANCE_FLOOR {
        return 0.0;
    }
    if m1 == m2 {
        return 1.0;
    }
    (cov / n as f64 / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0)
}

/// Symmetric M x M matrix of selection-split model correlations.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    size: usize,
    values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    /// Mean of the off-diagonal entries; 0 for a single model.
    pub fn mean_off_diagonal(&self) -> f64 {
        if self.size < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..self.size {
            for j in i + 1..self.size {
                total += self.get(i, j);
            }
        }
        total / (self.size * (self.size - 1) / 2) as f64
    }
}

pub fn correlation_matrix<T: Scalar>(archive: &PredictionArchive<T>) -> CorrelationMatrix {
    let size = archive.num_models();
    let mut values = vec![0.0; size * size];
    for i in 0..size {
        for j in i..size {
            let r = model_correlation(i, j, archive.selection());
            values[i * size + j] = r;
            values[j * size + i] = r;
        }
    }
    CorrelationMatrix { size, values }
}

/// Vote totals of a base committee plus per-model bounds on how far each
/// move can erode the base prediction.
///
/// For sample `n` with base winner `w` and lead `gap[n]` over the runner-up,
/// adding model `m` changes every lead by at least `gain = row[w] - max_{c != w} row[c]`
/// and removing it by at least `-cost` with `cost = row[w] - min_{c != w} row[c]`.
/// When `gap + sum(gain) - sum(cost) > 0` the winner cannot change, so the
/// sample is counted from the base without recomputing its votes.
/// Lowering a gap only makes the test more conservative, so gaps are capped
/// to keep the bound arithmetic inside `i64`.
pub struct DeltaBase {
    sums: Vec<i64>,
    base_correct: Vec<bool>,
    gap: Vec<i64>,
    /// `gain[m * n_samples + n]`
    gain: Vec<i64>,
    /// `cost[m * n_samples + n]`
    cost: Vec<i64>,
}

const GAP_CAP: i64 = i64::MAX / 4;

impl DeltaBase {
    fn new<T: Scalar>(split: &EvalSplit<T>, sums: Vec<i64>) -> Self {
        let (k, n_samples) = (split.num_classes, split.num_samples);
        let mut winners = Vec::with_capacity(n_samples);
        let mut gap = Vec::with_capacity(n_samples);
        let mut base_correct = Vec::with_capacity(n_samples);
        for (row, &label) in sums.chunks_exact(k).zip(&split.labels) {
            let w = argmax(row);
            let runner_up = row.iter().enumerate().filter(|&(c, _)| c != w).map(|(_, &v)| v).max();
            winners.push(w);
            gap.push(runner_up.map_or(GAP_CAP, |r| (row[w] - r).min(GAP_CAP)));
            base_correct.push(w == label as usize);
        }
        let mut gain = Vec::with_capacity(split.num_models * n_samples);
        let mut cost = Vec::with_capacity(split.num_models * n_samples);
        for m in 0..split.num_models {
            for (row, &w) in split.fixed_rows(m).chunks_exact(k).zip(&winners) {
                let (mut hi, mut lo) = (i64::MIN, i64::MAX);
                for (c, &v) in row.iter().enumerate() {
                    if c != w {
                        hi = hi.max(v);
                        lo = lo.min(v);
                    }
                }
                if k == 1 {
                    (hi, lo) = (row[w], row[w]);
                }
                gain.push(row[w] - hi);
                cost.push(row[w] - lo);
            }
        }
        Self { sums, base_correct, gap, gain, cost }
    }

    pub fn sums(&self) -> &[i64] {
        &self.sums
    }
}

/// Scores committees on one split for the duration of a search run.
///
/// Correct-sample counts are memoized by member set. The empty committee
/// scores zero, which is how searches that start from nothing treat it.
pub struct CommitteeEvaluator<'a, T: Scalar = f32> {
    split: &'a EvalSplit<T>,
    memo: DashMap<Committee, usize>,
    computed: AtomicUsize,
}

impl<'a, T: Scalar> CommitteeEvaluator<'a, T> {
    pub fn new(split: &'a EvalSplit<T>) -> Self {
        Self { split, memo: DashMap::new(), computed: AtomicUsize::new(0) }
    }

    pub fn split(&self) -> &'a EvalSplit<T> {
        self.split
    }

    pub fn correct(&self, committee: &Committee) -> usize {
        if committee.is_empty() {
            return 0;
        }
        if let Some(hit) = self.memo.get(committee) {
            return *hit;
        }
        let correct = self.split.count_correct(&self.split.vote_sums(committee.members()));
        self.computed.fetch_add(1, Ordering::Relaxed);
        self.memo.insert(committee.clone(), correct);
        correct
    }

    pub fn accuracy(&self, committee: &Committee) -> f64 {
        self.fraction(self.correct(committee))
    }

    pub fn fraction(&self, correct: usize) -> f64 {
        self.split.fraction(correct)
    }

    /// Fixed-point vote totals of a committee, one row per sample.
    pub fn vote_sums(&self, committee: &Committee) -> Vec<i64> {
        self.split.vote_sums(committee.members())
    }

    /// Prepares `committee` for scoring its neighbors with [`Self::correct_with_delta`].
    pub fn delta_base(&self, committee: &Committee) -> DeltaBase {
        DeltaBase::new(self.split, self.vote_sums(committee))
    }

    /// Scores `candidate` from its already computed vote totals.
    pub fn correct_from_sums(&self, candidate: &Committee, sums: &[i64]) -> usize {
        if candidate.is_empty() {
            return 0;
        }
        if let Some(hit) = self.memo.get(candidate) {
            return *hit;
        }
        let correct = self.split.count_correct(sums);
        self.computed.fetch_add(1, Ordering::Relaxed);
        self.memo.insert(candidate.clone(), correct);
        correct
    }

    /// Scores `candidate`, which must equal the committee behind `base`
    /// minus `removed` plus `added`.
    pub fn correct_with_delta(
        &self,
        candidate: &Committee,
        base: &DeltaBase,
        removed: &[usize],
        added: &[usize],
    ) -> usize {
        if candidate.is_empty() {
            return 0;
        }
        if let Some(hit) = self.memo.get(candidate) {
            return *hit;
        }
        let (k, n_samples) = (self.split.num_classes, self.split.num_samples);
        let added_rows: Vec<&[i64]> = added.iter().map(|&m| self.split.fixed_rows(m)).collect();
        let removed_rows: Vec<&[i64]> = removed.iter().map(|&m| self.split.fixed_rows(m)).collect();
        let mut lower = base.gap.clone();
        for &m in added {
            for (l, &g) in lower.iter_mut().zip(&base.gain[m * n_samples..(m + 1) * n_samples]) {
                *l += g;
            }
        }
        for &m in removed {
            for (l, &c) in lower.iter_mut().zip(&base.cost[m * n_samples..(m + 1) * n_samples]) {
                *l -= c;
            }
        }
        let mut correct = 0;
        for (n, &bound) in lower.iter().enumerate() {
            if bound > 0 {
                correct += usize::from(base.base_correct[n]);
                continue;
            }
            let off = n * k;
            let total = |c: usize| {
                let i = off + c;
                added_rows.iter().map(|r| r[i]).sum::<i64>() - removed_rows.iter().map(|r| r[i]).sum::<i64>()
                    + base.sums[i]
            };
            let label = self.split.labels[n] as usize;
            let t = total(label);
            let wins = (0..label).all(|c| total(c) < t) && (label + 1..k).all(|c| total(c) <= t);
            correct += usize::from(wins);
        }
        self.computed.fetch_add(1, Ordering::Relaxed);
        self.memo.insert(candidate.clone(), correct);
        correct
    }

    /// Number of committees actually scored (memo misses).
    pub fn evaluations(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }
}
