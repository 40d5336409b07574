//! Chronological user sequences and the leave-one-out split.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Catalog, CorpusError, InteractionLog};

/// Groups events by user and orders each user's items by
/// `(timestamp, file position)`. Repeated items are kept.
pub fn build_sequences(log: &InteractionLog) -> BTreeMap<String, Vec<String>> {
    let mut by_user: BTreeMap<&str, Vec<(u64, usize)>> = BTreeMap::new();
    for (pos, e) in log.events.iter().enumerate() {
        by_user.entry(&e.user_id).or_default().push((e.timestamp, pos));
    }
    by_user
        .into_iter()
        .map(|(user, mut evs)| {
            evs.sort_by_key(|&(ts, pos)| (ts, pos));
            let items = evs
                .into_iter()
                .map(|(_, pos)| log.events[pos].item_id.clone())
                .collect();
            (user.to_string(), items)
        })
        .collect()
}

/// The last `n` items of `seq` (all of it when shorter).
pub fn truncate_sequence<T>(seq: &[T], n: usize) -> &[T] {
    assert!(n >= 1, "truncation length must be positive");
    &seq[seq.len().saturating_sub(n)..]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit<T> {
    pub user_id: String,
    pub train: Vec<T>,
    pub valid: T,
    pub test: T,
}

impl<T: Clone> UserSplit<T> {
    /// History used to predict the validation target.
    pub fn valid_input(&self) -> &[T] {
        &self.train
    }

    /// History used to predict the test target: train prefix plus the
    /// validation item.
    pub fn test_input(&self) -> Vec<T> {
        let mut v = self.train.clone();
        v.push(self.valid.clone());
        v
    }
}

/// Leave-one-out split over users with at least three interactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset<T = String> {
    pub users: Vec<UserSplit<T>>,
    /// Users dropped for having fewer than three interactions.
    pub excluded: usize,
}

impl<T> SplitDataset<T> {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

pub fn leave_one_out_split<T: Clone>(sequences: &BTreeMap<String, Vec<T>>) -> SplitDataset<T> {
    let mut users = Vec::with_capacity(sequences.len());
    let mut excluded = 0;
    for (user, seq) in sequences {
        let l = seq.len();
        if l < 3 {
            excluded += 1;
            continue;
        }
        users.push(UserSplit {
            user_id: user.clone(),
            train: seq[..l - 2].to_vec(),
            valid: seq[l - 2].clone(),
            test: seq[l - 1].clone(),
        });
    }
    SplitDataset { users, excluded }
}

impl SplitDataset<String> {
    /// Resolves item ids to catalog ordinals.
    pub fn index(&self, catalog: &Catalog) -> Result<SplitDataset<usize>, CorpusError> {
        let resolve = |id: &String| {
            catalog.ordinal(id).ok_or_else(|| CorpusError::Validation {
                item: id.clone(),
                message: "split references an item missing from the catalog".into(),
            })
        };
        let users = self
            .users
            .iter()
            .map(|u| {
                Ok(UserSplit {
                    user_id: u.user_id.clone(),
                    train: u.train.iter().map(resolve).collect::<Result<_, _>>()?,
                    valid: resolve(&u.valid)?,
                    test: resolve(&u.test)?,
                })
            })
            .collect::<Result<_, CorpusError>>()?;
        Ok(SplitDataset {
            users,
            excluded: self.excluded,
        })
    }

    /// One JSON object per line: `{"user_id":…,"train":[…],"valid":…,"test":…}`.
    /// A trailing `{"excluded":n}` line records dropped users.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for u in &self.users {
            out.push_str(&serde_json::to_string(u).expect("split rows serialize"));
            out.push('\n');
        }
        out.push_str(&format!("{{\"excluded\":{}}}\n", self.excluded));
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CorpusError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Row {
            User(UserSplit<String>),
            Excluded { excluded: usize },
        }
        let mut users = Vec::new();
        let mut excluded = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Row>(line) {
                Ok(Row::User(u)) => users.push(u),
                Ok(Row::Excluded { excluded: n }) => excluded = n,
                Err(e) => {
                    return Err(CorpusError::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(Self { users, excluded })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text =
            fs::read_to_string(path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        Self::from_jsonl(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_jsonl()).map_err(|e| CorpusError::Io(path.display().to_string(), e))
    }
}
