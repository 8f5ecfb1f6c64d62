//! Leave-one-out evaluation with sampled negatives, the MostPop
//! baseline, zero-shot transfer, post-hoc score interpolation, the
//! time-leakage audit, and a synthetic-dataset generator.

mod interpolate;
mod leakage;
mod report;
mod stats;
mod synth;

pub use interpolate::{interpolate, load_score_file, ScoreSet};
pub use leakage::{leakage_audit, LeakageReport};
pub use report::{EvalMetadata, EvalReport, UserResult};
pub use stats::{welch_t_test, TTestResult};
pub use synth::{synth_generate, FamilyWeights, GenSpec};

use rayon::prelude::*;

use crate::encoders::SinusoidTable;
use crate::error::{Error, Result};
use crate::ingest::{fingerprint, to_fixed_sequence, InteractionDataset};
use crate::model::{build_inputs, forward, score, ModelParams, PipelineConfig};
use crate::numcore::Scalar;
use crate::popdyn::{PopConfig, PopularityTable, WindowParams};
use crate::rng::{substream, substream_keyed};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EvalConfig {
    pub k_list: Vec<usize>,
    /// Sampled unobserved items per test item.
    pub negatives: usize,
    pub seed: u64,
    /// Prediction-time offset override in fine periods; `None` keeps
    /// the model's configured offset.
    pub offset: Option<i64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_list: vec![10],
            negatives: 100,
            seed: 0,
            offset: None,
        }
    }
}

/// Which held-out interaction to rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTarget {
    /// Most recent action; prefix is everything before it.
    Test,
    /// Second most recent action; prefix is the training slice.
    Validation,
}

impl EvalTarget {
    fn candidate_stream(&self) -> &'static str {
        match self {
            EvalTarget::Test => "candidates",
            EvalTarget::Validation => "val-candidates",
        }
    }
}

/// The per-user candidate set: the held-out item plus sampled
/// unobserved items, deterministic in `(seed, user id)` so external
/// scorers can reproduce the identical sets.
pub fn candidate_set(
    ds: &InteractionDataset,
    user: usize,
    target_item: u32,
    negatives: usize,
    seed: u64,
    stream: &str,
) -> Vec<u32> {
    let history: std::collections::HashSet<u32> =
        ds.sequences[user].iter().map(|&(v, _)| v).collect();
    let mut rng = substream_keyed(seed, stream, &ds.users[user]);
    let mut chosen = std::collections::HashSet::new();
    let mut out = vec![target_item];
    let available = ds.n_items() - history.len();
    let want = negatives.min(available);
    while out.len() < 1 + want {
        let cand = rng.gen_range(0..ds.n_items()) as u32;
        if history.contains(&cand) || chosen.contains(&cand) {
            continue;
        }
        chosen.insert(cand);
        out.push(cand);
    }
    out
}

/// Rank of the target among scored candidates: descending score, ties
/// broken by ascending original item id. `candidates[0]` must be the
/// target. Returns the 1-based rank.
pub fn rank_of_target(ds: &InteractionDataset, candidates: &[u32], scores: &[f64]) -> usize {
    let target = candidates[0];
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| ds.items[candidates[a] as usize].cmp(&ds.items[candidates[b] as usize]))
    });
    order
        .iter()
        .position(|&i| candidates[i] == target)
        .expect("target present")
        + 1
}

fn metric_k(records: &[UserResult], k: usize) -> (f64, f64) {
    if records.is_empty() {
        return (0.0, 0.0);
    }
    let n = records.len() as f64;
    let recall = records.iter().filter(|r| r.rank <= k).count() as f64 / n;
    let ndcg: f64 = records
        .iter()
        .map(|r| {
            if r.rank <= k {
                1.0 / ((r.rank as f64 + 1.0).log2())
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / n;
    (recall, ndcg)
}

fn build_report(
    ds: &InteractionDataset,
    cfg: &EvalConfig,
    target: EvalTarget,
    mut records: Vec<UserResult>,
    checkpoint_digest: String,
) -> EvalReport {
    records.sort_by(|a, b| a.user.cmp(&b.user));
    let metrics = cfg
        .k_list
        .iter()
        .map(|&k| {
            let (r, n) = metric_k(&records, k);
            (k, r, n)
        })
        .collect();
    EvalReport {
        metadata: EvalMetadata {
            checkpoint_digest,
            dataset_fingerprint: fingerprint(ds),
            config: cfg.clone(),
            target,
            eval_users: records.len(),
        },
        metrics,
        records,
    }
}

/// Score one user's held-out interaction against its candidate set.
/// Returns `None` for users without the requested hold-out.
#[allow(clippy::too_many_arguments)]
fn evaluate_user<S: Scalar>(
    params: &ModelParams<S>,
    ds: &InteractionDataset,
    table: &PopularityTable,
    sin: &SinusoidTable,
    wp: &WindowParams,
    cfg: &EvalConfig,
    target: EvalTarget,
    user: usize,
) -> Result<Option<UserResult>> {
    let Some(split) = ds.splits[user] else {
        return Ok(None);
    };
    let (prefix, target_pos) = match target {
        EvalTarget::Test => (ds.pre_test_slice(user), split.test),
        EvalTarget::Validation => (ds.train_slice(user), split.valid),
    };
    let (target_item, target_time) = ds.sequences[user][target_pos];
    let model_cfg = &params.config;
    let seq = to_fixed_sequence(prefix, model_cfg.max_len)?;
    let w = model_cfg.feature_width();
    let mut rows: Vec<Vec<S>> = vec![vec![S::zero(); w]; seq.len()];
    for (p, row) in rows.iter_mut().enumerate().skip(seq.first_valid_pos()) {
        *row = table
            .dynamics_at(Some(seq.items[p]), seq.timestamps[p], wp)
            .features();
    }
    let inputs = build_inputs(&seq, &rows, sin, model_cfg)?;
    let graph = params.tensors(false);
    let mut rng = substream(cfg.seed, "eval-dropout-unused", user as u64);
    let output = forward(&graph, model_cfg, &inputs, false, &mut rng)?;
    let q_u = output.row(seq.len() - 1);

    let candidates = candidate_set(
        ds,
        user,
        target_item,
        cfg.negatives,
        cfg.seed,
        target.candidate_stream(),
    );
    let scores: Vec<f64> = candidates
        .iter()
        .map(|&cand| {
            let feats: Vec<S> = table
                .dynamics_at(Some(cand), target_time, wp)
                .features();
            let emb = params.embed_features(&feats);
            score(q_u, &emb).to_f64()
        })
        .collect();
    let rank = rank_of_target(ds, &candidates, &scores);
    Ok(Some(UserResult {
        user: ds.users[user].clone(),
        target_item: ds.items[target_item as usize].clone(),
        rank,
        n_candidates: candidates.len(),
        scores: candidates
            .iter()
            .zip(&scores)
            .map(|(&c, &s)| (ds.items[c as usize].clone(), s))
            .collect(),
    }))
}

/// Leave-one-out evaluation of a model over every user with a
/// hold-out. Deterministic given `(checkpoint, dataset, seed)`;
/// per-user work is parallel, aggregation is an ordered reduction.
pub fn evaluate<S: Scalar>(
    params: &ModelParams<S>,
    ds: &InteractionDataset,
    table: &PopularityTable,
    cfg: &EvalConfig,
    target: EvalTarget,
) -> Result<EvalReport> {
    let model_cfg = &params.config;
    let mut wp = model_cfg.windows;
    if let Some(offset) = cfg.offset {
        wp = WindowParams::new(wp.k, wp.m, wp.n, offset)?;
    }
    let sin = SinusoidTable::new(model_cfg.max_len, model_cfg.d)?;
    let records: Vec<UserResult> = (0..ds.n_users())
        .into_par_iter()
        .map(|user| evaluate_user(params, ds, table, &sin, &wp, cfg, target, user))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(build_report(ds, cfg, target, records, params.digest()))
}

/// Non-personalized baseline: candidates ranked by global training-set
/// interaction count, ties by item id. Uses the same candidate sets as
/// [`evaluate`].
pub fn mostpop_baseline(
    ds: &InteractionDataset,
    cfg: &EvalConfig,
    target: EvalTarget,
) -> Result<EvalReport> {
    let mut counts = vec![0u64; ds.n_items()];
    for user in 0..ds.n_users() {
        for &(item, _) in ds.train_slice(user) {
            counts[item as usize] += 1;
        }
    }
    let records: Vec<UserResult> = (0..ds.n_users())
        .filter_map(|user| {
            let split = ds.splits[user]?;
            let target_pos = match target {
                EvalTarget::Test => split.test,
                EvalTarget::Validation => split.valid,
            };
            let (target_item, _) = ds.sequences[user][target_pos];
            let candidates = candidate_set(
                ds,
                user,
                target_item,
                cfg.negatives,
                cfg.seed,
                target.candidate_stream(),
            );
            let scores: Vec<f64> = candidates
                .iter()
                .map(|&c| counts[c as usize] as f64)
                .collect();
            let rank = rank_of_target(ds, &candidates, &scores);
            Some(UserResult {
                user: ds.users[user].clone(),
                target_item: ds.items[target_item as usize].clone(),
                rank,
                n_candidates: candidates.len(),
                scores: candidates
                    .iter()
                    .zip(&scores)
                    .map(|(&c, &s)| (ds.items[c as usize].clone(), s))
                    .collect(),
            })
        })
        .collect();
    Ok(build_report(ds, cfg, target, records, "mostpop".into()))
}

pub struct ZeroShotOutcome {
    pub report: EvalReport,
    /// Parameter digest taken before and after inference; equality is
    /// the frozen-weights witness.
    pub digest_before: String,
    pub digest_after: String,
}

/// Apply a trained model to a disjoint dataset: recompute the
/// popularity dynamics on the target log under the checkpoint's
/// pipeline configuration, then run the identical evaluation path. No
/// parameter is updated.
pub fn zero_shot<S: Scalar>(
    params: &ModelParams<S>,
    pipeline: &PipelineConfig,
    target_ds: &InteractionDataset,
    cfg: &EvalConfig,
) -> Result<ZeroShotOutcome> {
    let digest_before = params.digest();
    let bucketing = pipeline.bucketing_for(target_ds.min_timestamp())?;
    let table = PopularityTable::build(target_ds, bucketing, pipeline.pop)?;
    let report = evaluate(params, target_ds, &table, cfg, EvalTarget::Test)?;
    let digest_after = params.digest();
    if digest_before != digest_after {
        return Err(Error::Numerical(
            "parameters changed during zero-shot inference".into(),
        ));
    }
    Ok(ZeroShotOutcome {
        report,
        digest_before,
        digest_after,
    })
}

/// Build a popularity table for a dataset under a checkpoint's pipeline
/// configuration (re-anchored at the dataset's origin).
pub fn table_for(pipeline: &PipelineConfig, ds: &InteractionDataset) -> Result<PopularityTable> {
    let bucketing = pipeline.bucketing_for(ds.min_timestamp())?;
    PopularityTable::build(ds, bucketing, pipeline.pop)
}

/// Convenience: default pipeline configuration over a dataset (paper
/// defaults, fixed-width bucketing anchored at the dataset origin).
pub fn default_pipeline(
    model: crate::model::ModelConfig,
    pop: PopConfig,
    ds: &InteractionDataset,
) -> Result<(PipelineConfig, PopularityTable)> {
    let bucketing = crate::popdyn::TimeBucketing::fixed_default(ds.min_timestamp());
    let table = PopularityTable::build(ds, bucketing, pop)?;
    Ok((PipelineConfig::new(model, pop, &bucketing), table))
}
