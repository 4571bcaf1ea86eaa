use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingest::Dataset;

/// One leave-one-round-out split. Indices refer to `Dataset::samples` and
/// are ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvFold {
    pub test_round: u32,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// One fold per round, ordered by round id.
pub fn logo_folds(dataset: &Dataset) -> Result<Vec<CvFold>, EvalError> {
    let rounds = dataset.rounds();
    if rounds.len() < 2 {
        return Err(EvalError::Config(format!(
            "leave-one-round-out needs at least 2 rounds, found {}",
            rounds.len()
        )));
    }
    Ok(rounds
        .into_iter()
        .map(|round| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..dataset.len()).partition(|&i| dataset.samples[i].round_id == round);
            CvFold {
                test_round: round,
                train_indices: train,
                test_indices: test,
            }
        })
        .collect())
}
