//! Post-hoc score interpolation with an external model:
//! `ŷ = α·ŷ_ours + (1-α)·ŷ_external`, then the standard ranking.

use std::collections::BTreeMap;
use std::path::Path;

use super::report::read_score_lines;
use super::{EvalMetadata, EvalReport, UserResult};
use crate::error::{Error, Result};

/// Scores keyed by `(user, item)` original string ids.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet {
    pub by_user: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ScoreSet {
    pub fn from_report(report: &EvalReport) -> Self {
        let mut by_user = BTreeMap::new();
        for rec in &report.records {
            by_user.insert(
                rec.user.clone(),
                rec.scores.iter().cloned().collect::<BTreeMap<_, _>>(),
            );
        }
        ScoreSet { by_user }
    }

    fn key_diff(&self, other: &ScoreSet) -> Vec<String> {
        let mut missing = Vec::new();
        for (user, items) in &self.by_user {
            match other.by_user.get(user) {
                None => missing.push(format!("user {user} absent from external scores")),
                Some(theirs) => {
                    for item in items.keys() {
                        if !theirs.contains_key(item) {
                            missing.push(format!("({user}, {item}) absent from external scores"));
                        }
                    }
                }
            }
        }
        for (user, items) in &other.by_user {
            match self.by_user.get(user) {
                None => missing.push(format!("user {user} absent from our scores")),
                Some(ours) => {
                    for item in items.keys() {
                        if !ours.contains_key(item) {
                            missing.push(format!("({user}, {item}) absent from our scores"));
                        }
                    }
                }
            }
        }
        missing
    }
}

pub fn load_score_file(path: &Path) -> Result<ScoreSet> {
    let mut by_user: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (user, item, score) in read_score_lines(path)? {
        by_user.entry(user).or_default().insert(item, score);
    }
    Ok(ScoreSet { by_user })
}

/// Interpolate our report's candidate scores with an external score
/// set over the identical `(user, candidate)` keys and re-rank.
/// Mismatched keys are an error listing the missing pairs.
pub fn interpolate(ours: &EvalReport, external: &ScoreSet, alpha: f64) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!(
            "interpolation weight alpha must be in [0, 1], got {alpha}"
        )));
    }
    let our_scores = ScoreSet::from_report(ours);
    let diff = our_scores.key_diff(external);
    if !diff.is_empty() {
        let shown = diff.iter().take(20).cloned().collect::<Vec<_>>().join("; ");
        return Err(Error::data(format!(
            "score sets cover different (user, candidate) pairs ({} mismatches): {shown}",
            diff.len()
        )));
    }
    let mut records: Vec<UserResult> = ours
        .records
        .iter()
        .map(|rec| {
            let theirs = &external.by_user[&rec.user];
            let blended: Vec<(String, f64)> = rec
                .scores
                .iter()
                .map(|(item, s)| (item.clone(), alpha * s + (1.0 - alpha) * theirs[item]))
                .collect();
            // target is scores[0]; rank by descending score, ties by id
            let target_score = blended[0].1;
            let target_item = &blended[0].0;
            let mut rank = 1;
            for (item, s) in &blended[1..] {
                if *s > target_score || (*s == target_score && item < target_item) {
                    rank += 1;
                }
            }
            UserResult {
                user: rec.user.clone(),
                target_item: rec.target_item.clone(),
                rank,
                n_candidates: rec.n_candidates,
                scores: blended,
            }
        })
        .collect();
    records.sort_by(|a, b| a.user.cmp(&b.user));
    let metrics = ours
        .metadata
        .config
        .k_list
        .iter()
        .map(|&k| {
            let n = records.len() as f64;
            let recall = records.iter().filter(|r| r.rank <= k).count() as f64 / n.max(1.0);
            let ndcg = records
                .iter()
                .map(|r| {
                    if r.rank <= k {
                        1.0 / (r.rank as f64 + 1.0).log2()
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                / n.max(1.0);
            (k, recall, ndcg)
        })
        .collect();
    Ok(EvalReport {
        metadata: EvalMetadata {
            checkpoint_digest: format!("interp(alpha={alpha})"),
            ..ours.metadata.clone()
        },
        metrics,
        records,
    })
}
