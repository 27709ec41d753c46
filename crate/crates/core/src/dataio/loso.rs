use std::collections::BTreeSet;

use super::{DataError, TrialRecord};

pub const NUM_FOLDS: usize = 5;

/// One Leave-One-SuperTrial-Out fold; indices refer to the trial slice
/// the folds were built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    /// Held-out repetition (super trial), 1-based.
    pub repetition: u32,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Fold `j` tests on every trial with repetition `j` and trains on the rest.
pub fn split_loso_folds(trials: &[TrialRecord]) -> Result<Vec<Fold>, DataError> {
    let mut reps = BTreeSet::new();
    for t in trials {
        if !(1..=NUM_FOLDS as u32).contains(&t.id.repetition) {
            return Err(DataError::Repetition(t.id.repetition));
        }
        reps.insert(t.id.repetition);
    }
    if reps.len() < NUM_FOLDS {
        return Err(DataError::TooFewRepetitions(reps.into_iter().collect()));
    }
    Ok((1..=NUM_FOLDS as u32)
        .map(|rep| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..trials.len()).partition(|&i| trials[i].id.repetition == rep);
            Fold {
                repetition: rep,
                train,
                test,
            }
        })
        .collect())
}
