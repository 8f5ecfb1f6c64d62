//! Interaction-log ingestion: parsing, binarization, chronological
//! per-user sequences, and the leave-one-out split.

mod cache;
mod parse;

pub use cache::{fingerprint, load_cache, save_cache, CacheFormat};
pub use parse::{parse_log, LogFormat, ParseOptions, ParseReport};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// One implicit-feedback event. Ratings are binarized away: any rated
/// row counts as one interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
    pub rating: Option<f64>,
}

/// Positions of the held-out items inside one user's chronological
/// sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPoints {
    /// Second most recent interaction.
    pub valid: usize,
    /// Most recent interaction.
    pub test: usize,
}

/// The full interaction log with dense ids, per-user chronological
/// sequences, and (after [`InteractionDataset::build_split`]) the
/// leave-one-out split. Immutable after build; safe to share read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    /// Dense user id → original id, in first-appearance order.
    pub users: Vec<String>,
    /// Dense item id → original id, in first-appearance order.
    pub items: Vec<String>,
    /// Per user: `(item, timestamp)` sorted ascending by timestamp,
    /// ties in input order.
    pub sequences: Vec<Vec<(u32, i64)>>,
    /// Per user: hold-out positions, `None` for users with < 3 events.
    pub splits: Vec<Option<SplitPoints>>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
}

impl InteractionDataset {
    /// Build from binarized interactions, assigning dense ids in
    /// first-appearance order and sorting each user's events by
    /// timestamp (stable, so timestamp ties keep input order).
    pub fn from_interactions(interactions: &[Interaction]) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::data("empty dataset: no valid interactions"));
        }
        let mut users: Vec<String> = Vec::new();
        let mut items: Vec<String> = Vec::new();
        let mut user_index: HashMap<String, u32> = HashMap::new();
        let mut item_index: HashMap<String, u32> = HashMap::new();
        let mut sequences: Vec<Vec<(u32, i64)>> = Vec::new();
        for it in interactions {
            let &mut uid = user_index.entry(it.user.clone()).or_insert_with(|| {
                users.push(it.user.clone());
                sequences.push(Vec::new());
                (users.len() - 1) as u32
            });
            let &mut vid = item_index.entry(it.item.clone()).or_insert_with(|| {
                items.push(it.item.clone());
                (items.len() - 1) as u32
            });
            sequences[uid as usize].push((vid, it.timestamp));
        }
        for seq in &mut sequences {
            seq.sort_by_key(|&(_, t)| t);
        }
        let splits = vec![None; users.len()];
        Ok(InteractionDataset {
            users,
            items,
            sequences,
            splits,
            user_index,
            item_index,
        })
    }

    /// Reassemble from serialized parts (id tables pin the dense-id
    /// assignment, so round-trips are exact).
    pub(crate) fn from_parts(
        users: Vec<String>,
        items: Vec<String>,
        sequences: Vec<Vec<(u32, i64)>>,
        splits: Vec<Option<SplitPoints>>,
    ) -> Result<Self> {
        if users.len() != sequences.len() || users.len() != splits.len() {
            return Err(Error::data("dataset parts disagree on user count"));
        }
        let user_index = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i as u32))
            .collect();
        let item_index = items
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i as u32))
            .collect();
        Ok(InteractionDataset {
            users,
            items,
            sequences,
            splits,
            user_index,
            item_index,
        })
    }

    /// Leave-one-out split: per user with n ≥ 3 interactions the last
    /// event is test, the one before it validation, the rest training.
    /// Users with fewer events are train-only.
    pub fn build_split(&mut self) {
        for (u, seq) in self.sequences.iter().enumerate() {
            let n = seq.len();
            self.splits[u] = if n >= 3 {
                Some(SplitPoints {
                    valid: n - 2,
                    test: n - 1,
                })
            } else {
                None
            };
        }
    }

    pub fn user_id(&self, name: &str) -> Option<u32> {
        self.user_index.get(name).copied()
    }

    pub fn item_id(&self, name: &str) -> Option<u32> {
        self.item_index.get(name).copied()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    /// The training prefix of one user (events before the validation
    /// item, or the whole sequence for train-only users).
    pub fn train_slice(&self, user: usize) -> &[(u32, i64)] {
        match self.splits[user] {
            Some(sp) => &self.sequences[user][..sp.valid],
            None => &self.sequences[user],
        }
    }

    /// Events strictly before the test item: training plus validation.
    pub fn pre_test_slice(&self, user: usize) -> &[(u32, i64)] {
        match self.splits[user] {
            Some(sp) => &self.sequences[user][..sp.test],
            None => &self.sequences[user],
        }
    }

    pub fn min_timestamp(&self) -> i64 {
        self.sequences
            .iter()
            .flat_map(|s| s.iter().map(|&(_, t)| t))
            .min()
            .unwrap_or(0)
    }

    pub fn max_timestamp(&self) -> i64 {
        self.sequences
            .iter()
            .flat_map(|s| s.iter().map(|&(_, t)| t))
            .max()
            .unwrap_or(0)
    }

    /// Table-style summary: users, items, actions, average sequence
    /// length, density.
    pub fn stats(&self) -> DatasetStats {
        let actions = self.n_interactions();
        let users = self.n_users();
        let items = self.n_items();
        DatasetStats {
            users,
            items,
            actions,
            avg_length: actions as f64 / users.max(1) as f64,
            density: actions as f64 / (users.max(1) as f64 * items.max(1) as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub actions: usize,
    pub avg_length: f64,
    pub density: f64,
}

/// Sentinel for padded positions in a fixed-length sequence.
pub const PAD_ITEM: u32 = u32::MAX;

/// A fixed-length (truncated or left-padded) user history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSequence {
    pub items: Vec<u32>,
    pub timestamps: Vec<i64>,
    pub valid_len: usize,
}

impl UserSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_valid_pos(&self, pos: usize) -> bool {
        pos >= self.len() - self.valid_len
    }

    pub fn first_valid_pos(&self) -> usize {
        self.len() - self.valid_len
    }
}

/// Truncate (dropping the oldest events) or left-pad a chronological
/// history to exactly `max_len` positions.
pub fn to_fixed_sequence(history: &[(u32, i64)], max_len: usize) -> Result<UserSequence> {
    if max_len == 0 {
        return Err(Error::config("sequence length L must be positive"));
    }
    let keep = history.len().min(max_len);
    let tail = &history[history.len() - keep..];
    let pad = max_len - keep;
    let mut items = vec![PAD_ITEM; max_len];
    let mut timestamps = vec![0i64; max_len];
    for (i, &(item, ts)) in tail.iter().enumerate() {
        items[pad + i] = item;
        timestamps[pad + i] = ts;
    }
    Ok(UserSequence {
        items,
        timestamps,
        valid_len: keep,
    })
}
