use serde::Serialize;

use super::{compensated_mean, ndcg_at_k, rank_of_target, recall_at_k, EvalError};
use crate::corpus::SplitDataset;
use crate::encoder::{ItemFeatures, Model};
use crate::finetune::{score_next, CandidateIndex};
use crate::parallel::{self, Exec};

/// Which held-out item is the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Predict the validation item from the training prefix.
    Valid,
    /// Predict the test item from the training prefix plus the validation item.
    Test,
}

impl Stage {
    pub fn input_and_target(self, user: &crate::corpus::UserSplit<usize>) -> (Vec<usize>, usize) {
        match self {
            Stage::Valid => (user.valid_input().to_vec(), user.valid),
            Stage::Test => (user.test_input(), user.test),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    /// Rank of each user's target, in split order.
    pub ranks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

#[derive(Serialize)]
struct Cell<'a> {
    metric: &'a str,
    k: usize,
    value: f64,
}

impl EvalReport {
    pub fn from_ranks(ranks: Vec<usize>, ks: &[usize]) -> Result<Self, EvalError> {
        if ks.is_empty() || ks.contains(&0) {
            return Err(EvalError::Config("cutoffs must be a non-empty list of positive integers".into()));
        }
        if ranks.is_empty() {
            return Err(EvalError::Input("no users to evaluate".into()));
        }
        let recall = ks
            .iter()
            .map(|&k| compensated_mean(ranks.iter().map(|&r| recall_at_k(r, k))))
            .collect();
        let ndcg = ks
            .iter()
            .map(|&k| compensated_mean(ranks.iter().map(|&r| ndcg_at_k(r, k))))
            .collect();
        Ok(Self {
            ks: ks.to_vec(),
            ranks,
            recall,
            ndcg,
        })
    }

    pub fn n_users(&self) -> usize {
        self.ranks.len()
    }

    fn lookup(&self, values: &[f64], k: usize) -> f64 {
        let i = self
            .ks
            .iter()
            .position(|&x| x == k)
            .unwrap_or_else(|| panic!("cutoff {k} was not evaluated"));
        values[i]
    }

    /// Mean Recall@k. Panics if `k` was not among the evaluated cutoffs.
    pub fn recall(&self, k: usize) -> f64 {
        self.lookup(&self.recall, k)
    }

    /// Mean NDCG@k. Panics if `k` was not among the evaluated cutoffs.
    pub fn ndcg(&self, k: usize) -> f64 {
        self.lookup(&self.ndcg, k)
    }

    fn cells(&self) -> Vec<Cell<'static>> {
        let mut cells = Vec::new();
        for (name, values) in [("recall", &self.recall), ("ndcg", &self.ndcg)] {
            for (&k, &value) in self.ks.iter().zip(values.iter()) {
                cells.push(Cell { metric: name, k, value });
            }
        }
        cells
    }

    /// One `metric<TAB>K<TAB>value` line per cell.
    pub fn to_text(&self) -> String {
        self.cells()
            .iter()
            .map(|c| format!("{}\t{}\t{}\n", c.metric, c.k, c.value))
            .collect()
    }

    /// The same cells as JSON objects, one per line.
    pub fn to_jsonl(&self) -> String {
        self.cells()
            .iter()
            .map(|c| serde_json::to_string(c).expect("plain struct serializes") + "\n")
            .collect()
    }
}

/// Ranks each user's target under `scorer(input) -> scores over the catalog`.
pub fn evaluate_scores<F>(
    split: &SplitDataset<usize>,
    stage: Stage,
    ks: &[usize],
    exec: Exec,
    scorer: F,
) -> Result<EvalReport, EvalError>
where
    F: Fn(&[usize]) -> Result<Vec<f64>, EvalError> + Sync + Send,
{
    let ranks = parallel::try_map(exec, &split.users, |_, user| {
        let (input, target) = stage.input_and_target(user);
        let scores = scorer(&input)?;
        if target >= scores.len() {
            return Err(EvalError::Input(format!(
                "target ordinal {target} outside a catalog of {}",
                scores.len()
            )));
        }
        Ok(rank_of_target(&scores, target))
    })?;
    EvalReport::from_ranks(ranks, ks)
}

/// Full-catalog evaluation of a trained model; no history exclusion.
pub fn evaluate_model(
    model: &Model,
    split: &SplitDataset<usize>,
    features: &[ItemFeatures],
    stage: Stage,
    ks: &[usize],
    exec: Exec,
) -> Result<EvalReport, EvalError> {
    let index = CandidateIndex::build(model, features, exec).map_err(Box::new)?;
    evaluate_scores(split, stage, ks, exec, |input| {
        score_next(model, input, features, &index).map_err(|e| EvalError::Model(Box::new(e)))
    })
}

/// Interaction counts over the training prefixes, by ordinal.
pub fn pop_scores(split: &SplitDataset<usize>, n_items: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n_items];
    for user in &split.users {
        for &o in &user.train {
            counts[o] += 1.0;
        }
    }
    counts
}

/// Evaluates the static popularity ranking.
pub fn pop_baseline(
    split: &SplitDataset<usize>,
    n_items: usize,
    stage: Stage,
    ks: &[usize],
) -> Result<EvalReport, EvalError> {
    let scores = pop_scores(split, n_items);
    evaluate_scores(split, stage, ks, Exec::Sequential, |_| Ok(scores.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserSplit;

    #[test]
    fn report_means() {
        let r = EvalReport::from_ranks(vec![1], &[10]).unwrap();
        assert_eq!((r.recall(10), r.ndcg(10)), (1.0, 1.0));
        let r = EvalReport::from_ranks(vec![1, 11], &[10, 50]).unwrap();
        assert_eq!((r.recall(10), r.ndcg(10)), (0.5, 0.5));
        assert_eq!(r.recall(50), 1.0);
        assert_eq!(
            r.to_text().lines().next().unwrap(),
            "recall\t10\t0.5"
        );
        assert!(r.to_jsonl().starts_with("{\"metric\":\"recall\",\"k\":10,\"value\":0.5}\n"));
        assert!(EvalReport::from_ranks(vec![], &[10]).is_err());
        assert!(EvalReport::from_ranks(vec![1], &[0]).is_err());
    }

    fn user(train: Vec<usize>, valid: usize, test: usize) -> UserSplit<usize> {
        UserSplit {
            user_id: "u".into(),
            train,
            valid,
            test,
        }
    }

    #[test]
    fn pop_counts_and_ties() {
        let split = SplitDataset {
            users: vec![user(vec![0, 0, 0, 1], 2, 1), user(vec![3], 2, 0)],
            excluded: 0,
        };
        assert_eq!(pop_scores(&split, 4), vec![3.0, 1.0, 0.0, 1.0]);
        let r = pop_baseline(&split, 4, Stage::Test, &[1, 2]).unwrap();
        // Item 1 ties with item 3 at count 1 and wins on ordinal: rank 2.
        assert_eq!(r.ranks, vec![2, 1]);
        let r = pop_baseline(&split, 4, Stage::Valid, &[1]).unwrap();
        // Unseen item 2 ranks after all counted items.
        assert_eq!(r.ranks, vec![4, 4]);
    }
}
