//! Training: sampled-negative binary cross entropy over per-position
//! next-item targets, Adam, early stopping on validation NDCG@10.

use std::collections::HashSet;
use std::time::Instant;

use rand::Rng;

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalTarget};
use crate::ingest::{to_fixed_sequence, InteractionDataset};
use crate::model::{build_inputs, forward, GraphParams, ModelConfig, ModelParams, SequenceInputs};
use crate::numcore::{Adam, AdamConfig, Scalar, Tensor};
use crate::popdyn::{FeatureCache, PopularityTable};
use crate::rng::substream;
use crate::encoders::SinusoidTable;

/// Which form the sampled-negative term takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// `log(1 - σ(ŷ⁻))`, the conventional binary cross entropy.
    Default,
    /// `log σ(1 - ŷ⁻)`, the objective exactly as printed.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub negatives_per_positive: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 80,
            lr: 1e-3,
            weight_decay: 1e-5,
            negatives_per_positive: 1,
            patience: 10,
            seed: 0,
            loss_mode: LossMode::Default,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::config("negatives_per_positive must be >= 1"));
        }
        Ok(())
    }
}

/// One supervised position: the positive score, its sampled negative
/// scores, and the prefix length it came from.
#[derive(Debug, Clone)]
pub struct LossTerm {
    pub positive: f64,
    pub negatives: Vec<f64>,
    pub position: usize,
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(1.0 + (-x).exp()).ln()
    } else {
        x - (1.0 + x.exp()).ln()
    }
}

/// Scalar reference route for the loss (the tensor path in
/// [`train_epoch`] is checked against this in tests): mean over terms
/// of `-(log σ(ŷ⁺) + Σ log(1-σ(ŷ⁻)))`, or the literal printed form.
pub fn loss(terms: &[LossTerm], mode: LossMode) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    let total: f64 = terms
        .iter()
        .map(|t| {
            let neg_sum: f64 = t
                .negatives
                .iter()
                .map(|&y| match mode {
                    LossMode::Default => log_sigmoid(-y),
                    LossMode::PaperLiteral => log_sigmoid(1.0 - y),
                })
                .sum();
            -(log_sigmoid(t.positive) + neg_sum)
        })
        .sum();
    total / terms.len() as f64
}

/// Uniform negatives with rejection against the user's full interaction
/// set.
pub fn sample_negatives(
    user_items: &HashSet<u32>,
    n_items: usize,
    count: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<u32>> {
    if user_items.len() >= n_items {
        return Err(Error::data(
            "cannot sample negatives: user has interacted with the whole catalog",
        ));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        loop {
            let cand = rng.gen_range(0..n_items) as u32;
            if !user_items.contains(&cand) {
                out.push(cand);
                break;
            }
        }
    }
    Ok(out)
}

/// A user's assembled training sequence: forward inputs plus target /
/// negative feature rows aligned per position.
struct TrainingExample<S: Scalar> {
    inputs: SequenceInputs<S>,
    positives: Tensor<S>,
    negatives: Vec<Tensor<S>>,
    weights: Vec<S>,
    n_terms: usize,
}

#[allow(clippy::too_many_arguments)]
fn build_example<S: Scalar>(
    ds: &InteractionDataset,
    features: &FeatureCache<'_, S>,
    cfg: &ModelConfig,
    sin: &SinusoidTable,
    user: usize,
    user_items: &HashSet<u32>,
    negatives_per_positive: usize,
    neg_rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Option<TrainingExample<S>>> {
    let events = ds.train_slice(user);
    if events.len() < 2 {
        return Ok(None);
    }
    let seq = to_fixed_sequence(events, cfg.max_len)?;
    let l = seq.len();
    let w = cfg.feature_width();

    let mut input_rows: Vec<Vec<S>> = vec![vec![S::zero(); w]; l];
    for (p, row) in input_rows.iter_mut().enumerate().skip(seq.first_valid_pos()) {
        *row = features
            .features(Some(seq.items[p]), seq.timestamps[p])
            .as_ref()
            .clone();
    }
    let inputs = build_inputs(&seq, &input_rows, sin, cfg)?;

    // Position p is supervised when p+1 is a real event: the target is
    // the next item, its window taken at the target's own timestamp —
    // which is exactly the input row of position p+1.
    let mut pos_rows: Vec<S> = vec![S::zero(); l * w];
    let mut neg_rows: Vec<Vec<S>> = vec![vec![S::zero(); l * w]; negatives_per_positive];
    let mut weights = vec![S::zero(); l];
    let mut n_terms = 0usize;
    for p in seq.first_valid_pos()..l - 1 {
        let t_next = seq.timestamps[p + 1];
        pos_rows[p * w..(p + 1) * w].copy_from_slice(&input_rows[p + 1]);
        let negs = sample_negatives(user_items, ds.n_items(), negatives_per_positive, neg_rng)?;
        for (slot, neg) in negs.into_iter().enumerate() {
            let row = features.features(Some(neg), t_next);
            neg_rows[slot][p * w..(p + 1) * w].copy_from_slice(&row);
        }
        weights[p] = S::one();
        n_terms += 1;
    }
    if n_terms == 0 {
        return Ok(None);
    }
    Ok(Some(TrainingExample {
        inputs,
        positives: Tensor::constant(vec![l, w], pos_rows),
        negatives: neg_rows
            .into_iter()
            .map(|r| Tensor::constant(vec![l, w], r))
            .collect(),
        weights,
        n_terms,
    }))
}

/// Per-sequence loss tensor: masked mean over supervised positions of
/// the positive and sampled-negative log-sigmoid terms.
fn sequence_loss<S: Scalar>(
    graph: &GraphParams<S>,
    output: &Tensor<S>,
    example: &TrainingExample<S>,
    mode: LossMode,
) -> Result<Tensor<S>> {
    let l = example.weights.len();
    let weights = Tensor::constant(vec![l], example.weights.clone());
    let pos_emb = example.positives.matmul(&graph.w_p)?;
    let pos_scores = output.mul(&pos_emb)?.row_sum()?;
    let mut term = pos_scores.log_sigmoid();
    for neg in &example.negatives {
        let neg_emb = neg.matmul(&graph.w_p)?;
        let neg_scores = output.mul(&neg_emb)?.row_sum()?;
        let neg_term = match mode {
            LossMode::Default => neg_scores.neg().log_sigmoid(),
            LossMode::PaperLiteral => neg_scores.neg().add_scalar(S::one()).log_sigmoid(),
        };
        term = term.add(&neg_term)?;
    }
    let masked = term.mul(&weights)?.sum();
    Ok(masked.scale(-S::one() / S::from_f64(example.n_terms as f64)))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub users_seen: usize,
    pub batches: usize,
}

/// One pass over all users in shuffled order, one Adam step per batch
/// of sequences. Gradients accumulate across the batch through shared
/// parameter leaves.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch<S: Scalar>(
    ds: &InteractionDataset,
    features: &FeatureCache<'_, S>,
    params: &mut ModelParams<S>,
    adam: &mut Adam<S>,
    train_cfg: &TrainConfig,
    sin: &SinusoidTable,
    epoch: usize,
) -> Result<EpochStats> {
    let cfg = params.config;
    let mut order: Vec<usize> = (0..ds.n_users()).collect();
    let mut shuffle_rng = substream(train_cfg.seed, "shuffle", epoch as u64);
    for i in (1..order.len()).rev() {
        let j = shuffle_rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let user_sets: Vec<HashSet<u32>> = ds
        .sequences
        .iter()
        .map(|s| s.iter().map(|&(v, _)| v).collect())
        .collect();

    let mut total_loss = 0.0f64;
    let mut users_seen = 0usize;
    let mut batches = 0usize;
    for chunk in order.chunks(train_cfg.batch_size) {
        let graph = params.tensors(true);
        let mut batch_losses: Vec<(usize, Tensor<S>)> = Vec::new();
        for &user in chunk {
            let stream_id = ((epoch as u64) << 32) | user as u64;
            let mut neg_rng = substream(train_cfg.seed, "negatives", stream_id);
            let Some(example) = build_example(
                ds,
                features,
                &cfg,
                sin,
                user,
                &user_sets[user],
                train_cfg.negatives_per_positive,
                &mut neg_rng,
            )?
            else {
                continue;
            };
            let mut dropout_rng = substream(train_cfg.seed, "dropout", stream_id);
            let output = forward(&graph, &cfg, &example.inputs, true, &mut dropout_rng)?;
            let loss_t = sequence_loss(&graph, &output, &example, train_cfg.loss_mode)?;
            batch_losses.push((user, loss_t));
        }
        if batch_losses.is_empty() {
            continue;
        }
        let batch_n = batch_losses.len();
        for (user, loss_t) in batch_losses {
            let value = loss_t.item().to_f64();
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss {value} at epoch {epoch}, user {} ({}), lr {}",
                    user, ds.users[user], train_cfg.lr
                )));
            }
            total_loss += value;
            users_seen += 1;
            loss_t.scale(S::one() / S::from_f64(batch_n as f64)).backward()?;
        }
        let grads = params.collect_grads(&graph);
        let grad_slices: Vec<&[S]> = grads.iter().map(|g| g.as_slice()).collect();
        adam.step(&mut params.values_mut(), &grad_slices)?;
        batches += 1;
    }
    Ok(EpochStats {
        epoch,
        loss: if users_seen > 0 {
            total_loss / users_seen as f64
        } else {
            0.0
        },
        users_seen,
        batches,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_recall10: f64,
    pub val_ndcg10: f64,
    pub wall_seconds: f64,
}

pub struct FitResult<S: Scalar> {
    pub params: ModelParams<S>,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_ndcg10: f64,
    pub best_val_recall10: f64,
}

/// Train with early stopping on validation NDCG@10: keep the best
/// epoch's weights, stop once `patience` epochs pass without
/// improvement.
pub fn fit<S: Scalar>(
    ds: &InteractionDataset,
    table: &PopularityTable,
    model_cfg: ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<FitResult<S>> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    let sin = SinusoidTable::new(model_cfg.max_len, model_cfg.d)?;
    let mut params: ModelParams<S> = ModelParams::init(model_cfg, train_cfg.seed)?;
    if train_cfg.max_epochs == 0 {
        log::warn!("max_epochs = 0: returning freshly initialized parameters");
        return Ok(FitResult {
            params,
            curve: Vec::new(),
            best_epoch: 0,
            best_val_ndcg10: 0.0,
            best_val_recall10: 0.0,
        });
    }
    let features = FeatureCache::new(table, model_cfg.windows);
    let mut adam: Adam<S> = Adam::new(
        AdamConfig {
            lr: train_cfg.lr,
            weight_decay: train_cfg.weight_decay,
            ..AdamConfig::default()
        },
        &params.param_lens(),
    );
    let val_cfg = EvalConfig {
        seed: train_cfg.seed,
        ..EvalConfig::default()
    };

    let mut curve = Vec::new();
    let mut best: Option<(f64, usize, ModelParams<S>, f64)> = None;
    for epoch in 0..train_cfg.max_epochs {
        let start = Instant::now();
        let stats = train_epoch(ds, &features, &mut params, &mut adam, train_cfg, &sin, epoch)?;
        let report = evaluate(&params, ds, table, &val_cfg, EvalTarget::Validation)?;
        let (r10, n10) = (report.recall_at(10), report.ndcg_at(10));
        curve.push(EpochRecord {
            epoch,
            loss: stats.loss,
            val_recall10: r10,
            val_ndcg10: n10,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        let improved = best.as_ref().is_none_or(|(b, _, _, _)| n10 > *b);
        if improved {
            best = Some((n10, epoch, params.clone(), r10));
        }
        let since_best = epoch - best.as_ref().map(|&(_, e, _, _)| e).unwrap();
        if since_best >= train_cfg.patience {
            break;
        }
    }
    let (best_val_ndcg10, best_epoch, best_params, best_val_recall10) =
        best.expect("at least one epoch ran");
    Ok(FitResult {
        params: best_params,
        curve,
        best_epoch,
        best_val_ndcg10,
        best_val_recall10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn loss_term_examples() {
        // σ(0) = 0.5 on both sides → -(ln .5 + ln .5) ≈ 1.3863
        let term = LossTerm {
            positive: 0.0,
            negatives: vec![0.0],
            position: 1,
        };
        assert_relative_eq!(
            loss(std::slice::from_ref(&term), LossMode::Default),
            2.0 * std::f64::consts::LN_2,
            max_relative = 1e-12
        );
        // extreme confidence drives the loss to zero
        let easy = LossTerm {
            positive: 500.0,
            negatives: vec![-500.0],
            position: 1,
        };
        assert!(loss(&[easy], LossMode::Default) < 1e-9);
        // literal printed form: ŷ⁻ = 1 → second term = log σ(0) = ln ½
        let lit = LossTerm {
            positive: 500.0,
            negatives: vec![1.0],
            position: 1,
        };
        assert_relative_eq!(
            loss(&[lit], LossMode::PaperLiteral),
            -(0.5f64.ln()),
            max_relative = 1e-9
        );
        assert!(loss(&[], LossMode::Default) == 0.0);
        // non-negativity on a spread of scores
        for s in [-3.0, -0.5, 0.0, 0.5, 3.0] {
            let t = LossTerm {
                positive: s,
                negatives: vec![-s, s * 0.5],
                position: 2,
            };
            assert!(loss(&[t], LossMode::Default) >= 0.0);
        }
    }

    #[test]
    fn negative_sampling_contracts() {
        let user_items: HashSet<u32> = [0, 1, 2].into_iter().collect();
        let mut rng = substream(3, "negatives", 0);
        // only item 3 remains → drawn with probability 1
        let negs = sample_negatives(&user_items, 4, 5, &mut rng).unwrap();
        assert!(negs.iter().all(|&v| v == 3));
        // never inside the history
        let mut rng = substream(4, "negatives", 0);
        let negs = sample_negatives(&user_items, 50, 200, &mut rng).unwrap();
        assert!(negs.iter().all(|v| !user_items.contains(v)));
        // same seed → same stream
        let mut r1 = substream(5, "negatives", 0);
        let mut r2 = substream(5, "negatives", 0);
        assert_eq!(
            sample_negatives(&user_items, 50, 20, &mut r1).unwrap(),
            sample_negatives(&user_items, 50, 20, &mut r2).unwrap()
        );
        // catalog exhausted
        let all: HashSet<u32> = (0..4).collect();
        let mut rng = substream(6, "negatives", 0);
        assert!(sample_negatives(&all, 4, 1, &mut rng).is_err());
    }
}
