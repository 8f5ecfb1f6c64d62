//! Evaluation report: per-user ranks plus aggregates, serialized as
//! newline-delimited JSON with a leading summary object.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{EvalConfig, EvalTarget};
use crate::error::{Error, Result};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalMetadata {
    pub checkpoint_digest: String,
    pub dataset_fingerprint: String,
    pub config: EvalConfig,
    pub target: EvalTarget,
    pub eval_users: usize,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct UserResult {
    pub user: String,
    pub target_item: String,
    /// 1-based rank of the target among its candidates.
    pub rank: usize,
    pub n_candidates: usize,
    /// `(item, score)` per candidate, target first.
    pub scores: Vec<(String, f64)>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub metadata: EvalMetadata,
    /// `(k, recall@k, ndcg@k)` per requested cutoff.
    pub metrics: Vec<(usize, f64, f64)>,
    /// Sorted by user id.
    pub records: Vec<UserResult>,
}

#[derive(serde::Serialize)]
struct Summary<'a> {
    kind: &'a str,
    metadata: &'a EvalMetadata,
    metrics: &'a [(usize, f64, f64)],
}

#[derive(serde::Serialize)]
struct RecordLine<'a> {
    kind: &'a str,
    #[serde(flatten)]
    result: UserResult,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ScoreLine {
    user: String,
    item: String,
    score: f64,
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> f64 {
        self.metrics
            .iter()
            .find(|&&(kk, _, _)| kk == k)
            .map_or(0.0, |&(_, r, _)| r)
    }

    pub fn ndcg_at(&self, k: usize) -> f64 {
        self.metrics
            .iter()
            .find(|&&(kk, _, _)| kk == k)
            .map_or(0.0, |&(_, _, n)| n)
    }

    /// Per-user hit indicators at `k` (for significance tests).
    pub fn per_user_recall(&self, k: usize) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| if r.rank <= k { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn per_user_ndcg(&self, k: usize) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| {
                if r.rank <= k {
                    1.0 / (r.rank as f64 + 1.0).log2()
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Write the summary object followed by one record per user.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let summary = Summary {
            kind: "summary",
            metadata: &self.metadata,
            metrics: &self.metrics,
        };
        serde_json::to_writer(&mut w, &summary)
            .map_err(|e| Error::data(format!("report serialization: {e}")))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        for rec in &self.records {
            let line = RecordLine {
                kind: "user",
                result: rec.clone(),
            };
            serde_json::to_writer(&mut w, &line)
                .map_err(|e| Error::data(format!("report serialization: {e}")))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::data(format!("{}: empty report", path.display())))?
            .map_err(|e| Error::io(path, e))?;
        #[derive(serde::Deserialize)]
        struct SummaryOwned {
            metadata: EvalMetadata,
            metrics: Vec<(usize, f64, f64)>,
        }
        let summary: SummaryOwned = serde_json::from_str(&first)
            .map_err(|e| Error::data(format!("{}: bad summary: {e}", path.display())))?;
        let mut records = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            #[derive(serde::Deserialize)]
            struct RecordOwned {
                #[serde(flatten)]
                result: UserResult,
            }
            let rec: RecordOwned = serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("{}: bad record: {e}", path.display())))?;
            records.push(rec.result);
        }
        Ok(EvalReport {
            metadata: summary.metadata,
            metrics: summary.metrics,
            records,
        })
    }

    /// Dump per-(user, candidate) scores as a plain score file other
    /// models can align with.
    pub fn save_scores(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for rec in &self.records {
            for (item, score) in &rec.scores {
                let line = ScoreLine {
                    user: rec.user.clone(),
                    item: item.clone(),
                    score: *score,
                };
                serde_json::to_writer(&mut w, &line)
                    .map_err(|e| Error::data(format!("score serialization: {e}")))?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub(crate) fn read_score_lines(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreLine = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("{}: bad score line: {e}", path.display())))?;
        out.push((rec.user, rec.item, rec.score));
    }
    Ok(out)
}
