use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::prediction::{Committee, PredictionArchive};
use crate::scalar::Scalar;

pub const DEFAULT_EXHAUSTIVE_CAP: usize = 20;

/// Best committee over all `2^M - 1` non-empty subsets, with the default cap.
pub fn exhaustive_oracle<T: Scalar>(archive: &PredictionArchive<T>) -> Result<(Committee, f64)> {
    exhaustive_oracle_with_cap(archive, DEFAULT_EXHAUSTIVE_CAP)
}

/// Ties go to the smaller committee, then the lexicographically smaller one.
///
/// Subsets are visited in Gray-code order so each step adds or drops a single
/// model from the running vote totals.
pub fn exhaustive_oracle_with_cap<T: Scalar>(archive: &PredictionArchive<T>, cap: usize) -> Result<(Committee, f64)> {
    let m = archive.num_models();
    if m > cap || m >= usize::BITS as usize {
        return Err(Error::LibraryTooLarge { num_models: m, cap });
    }
    let split = archive.selection();
    let mut sums = vec![0i64; split.num_samples() * split.num_classes()];
    let mut mask = 0usize;
    let mut best: Option<(usize, Committee)> = None;

    for i in 1usize..(1 << m) {
        let bit = i.trailing_zeros() as usize;
        mask ^= 1 << bit;
        let rows = split.fixed_rows(bit);
        if mask >> bit & 1 == 1 {
            sums.iter_mut().zip(rows).for_each(|(s, &v)| *s += v);
        } else {
            sums.iter_mut().zip(rows).for_each(|(s, &v)| *s -= v);
        }
        let correct = split.count_correct(&sums);
        let replace = match &best {
            None => true,
            Some((b, _)) if correct != *b => correct > *b,
            Some((_, incumbent)) => {
                let cand: Committee = (0..m).filter(|j| mask >> j & 1 == 1).collect();
                cand.len().cmp(&incumbent.len()).then_with(|| cand.cmp(incumbent)) == Ordering::Less
            }
        };
        if replace {
            best = Some((correct, (0..m).filter(|j| mask >> j & 1 == 1).collect()));
        }
    }

    let (correct, committee) = best.expect("at least one model");
    Ok((committee, split.fraction(correct)))
}
