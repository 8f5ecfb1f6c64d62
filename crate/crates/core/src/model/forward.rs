//! Input assembly, the causal transformer stack, and scoring.

use rand_chacha::ChaCha8Rng;

use super::{GraphParams, ModelConfig};
use crate::encoders::{rank_intervals, SinusoidTable};
use crate::error::{Error, Result};
use crate::ingest::UserSequence;
use crate::numcore::{Mask, Scalar, Tensor};

const LN_EPS: f64 = 1e-8;

/// Per-sequence constants for one forward pass: window features per
/// position, the fixed time/position context, and the causal-and-valid
/// attention mask. Pad rows are all zero and masked out as both queries
/// and keys.
pub struct SequenceInputs<S: Scalar> {
    pub features: Tensor<S>,
    pub context: Tensor<S>,
    pub attn_mask: Mask,
    pub valid: Vec<bool>,
}

/// The fixed additive context `T[rank] + P[position]` for every valid
/// position, zeros on pads.
pub fn context_rows<S: Scalar>(
    seq: &UserSequence,
    sin: &SinusoidTable,
    d: usize,
) -> Result<Vec<Vec<S>>> {
    if sin.dim() != d || sin.len() < seq.len() {
        return Err(Error::config(format!(
            "sinusoid table {}×{} does not cover sequence of length {} at dim {d}",
            sin.len(),
            sin.dim(),
            seq.len()
        )));
    }
    let ranks = rank_intervals(&seq.timestamps, seq.valid_len);
    Ok((0..seq.len())
        .map(|pos| {
            if seq.is_valid_pos(pos) {
                let t_row = sin.row(ranks[pos]);
                let p_row = sin.row(pos);
                t_row
                    .iter()
                    .zip(p_row)
                    .map(|(&t, &p)| S::from_f64(t + p))
                    .collect()
            } else {
                vec![S::zero(); d]
            }
        })
        .collect())
}

/// Assemble the per-sequence constants. `feature_rows` holds one window
/// feature row per position (callers zero the pad rows).
pub fn build_inputs<S: Scalar>(
    seq: &UserSequence,
    feature_rows: &[Vec<S>],
    sin: &SinusoidTable,
    cfg: &ModelConfig,
) -> Result<SequenceInputs<S>> {
    let l = seq.len();
    let w = cfg.feature_width();
    if feature_rows.len() != l || feature_rows.iter().any(|r| r.len() != w) {
        return Err(Error::Shape {
            op: "build_inputs",
            lhs: vec![feature_rows.len(), feature_rows.first().map_or(0, |r| r.len())],
            rhs: vec![l, w],
        });
    }
    let features = Tensor::constant(
        vec![l, w],
        feature_rows.iter().flat_map(|r| r.iter().copied()).collect(),
    );
    let ctx = context_rows::<S>(seq, sin, cfg.d)?;
    let context = Tensor::constant(vec![l, cfg.d], ctx.into_iter().flatten().collect());
    let valid: Vec<bool> = (0..l).map(|p| seq.is_valid_pos(p)).collect();
    let mut masked = vec![false; l * l];
    for i in 0..l {
        for j in 0..l {
            masked[i * l + j] = j > i || !valid[i] || !valid[j];
        }
    }
    Ok(SequenceInputs {
        features,
        context,
        attn_mask: Mask::new(vec![l, l], masked),
        valid,
    })
}

/// Run the stack: window projection plus context, then per block
/// pre-norm causal multi-head attention and pre-norm FFN, each followed
/// by dropout and a residual add, with a final layer norm on top.
/// Returns the `L × d` per-position outputs.
pub fn forward<S: Scalar>(
    graph: &GraphParams<S>,
    cfg: &ModelConfig,
    inputs: &SequenceInputs<S>,
    training: bool,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<Tensor<S>> {
    let eps = S::from_f64(LN_EPS);
    let attn_scale = S::from_f64(1.0 / (cfg.head_dim() as f64).sqrt());
    let embedded = inputs.features.matmul(&graph.w_p)?;
    let mut x = embedded.add(&inputs.context)?;
    for layer in &graph.layers {
        let h = x.layer_norm(&layer.ln1_alpha, &layer.ln1_beta, eps)?;
        let mut head_outs = Vec::with_capacity(layer.heads.len());
        for head in &layer.heads {
            let q = h.matmul(&head.w_q)?;
            let k = h.matmul(&head.w_k)?;
            let v = h.matmul(&head.w_v)?;
            let scores = q.matmul(&k.transpose()?)?.scale(attn_scale);
            let attn = scores.softmax_masked(&inputs.attn_mask)?;
            head_outs.push(attn.matmul(&v)?);
        }
        let mixed = Tensor::concat_cols(&head_outs)?.matmul(&layer.w_o)?;
        x = x.add(&mixed.dropout(cfg.dropout, training, dropout_rng)?)?;

        let h2 = x.layer_norm(&layer.ln2_alpha, &layer.ln2_beta, eps)?;
        let ff = h2
            .matmul(&layer.w1)?
            .add_row(&layer.b1)?
            .relu()
            .matmul(&layer.w2)?
            .add_row(&layer.b2)?;
        x = x.add(&ff.dropout(cfg.dropout, training, dropout_rng)?)?;
    }
    x.layer_norm(&graph.final_ln_alpha, &graph.final_ln_beta, eps)
}

/// Preference score: inner product of the user embedding and a
/// candidate's window embedding.
pub fn score<S: Scalar>(user: &[S], candidate: &[S]) -> S {
    user.iter()
        .zip(candidate)
        .map(|(&a, &b)| a * b)
        .fold(S::zero(), |a, b| a + b)
}
