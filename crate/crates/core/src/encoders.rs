//! The three fixed (non-learnable) encoders.
//!
//! * Percentile-basis encoding: a popularity percentile in `[0, 100]`
//!   becomes a linear interpolation between the two nearest decile
//!   basis vectors.
//! * A shared sinusoidal table serving both the relative time-interval
//!   encoding and the positional encoding.
//! * Interval ranking: consecutive-interaction gaps of a user are
//!   ranked (the encoding depends only on the relative order of gaps,
//!   which is what transfers across domains).

use crate::error::{Error, Result};

/// Width of the percentile basis (deciles 0, 10, ..., 100).
pub const PERCENTILE_DIM: usize = 11;

/// Encode a percentile in `[0, 100]` onto `k` basis vectors: index
/// `floor(P/w)` gets `1 - frac(P/w)` and the next index gets
/// `frac(P/w)`, where `w = 100/(k-1)`. Out-of-range inputs are clamped
/// (upstream guarantees the range; this is belt-and-braces).
pub fn encode_percentile_k(p: f64, k: usize) -> Vec<f64> {
    debug_assert!(k >= 2);
    let p = if (0.0..=100.0).contains(&p) {
        p
    } else {
        log::warn!("percentile {p} outside [0, 100], clamping");
        p.clamp(0.0, 100.0)
    };
    let width = 100.0 / (k - 1) as f64;
    let scaled = p / width;
    let idx = scaled.floor() as usize;
    let frac = scaled - scaled.floor();
    let mut out = vec![0.0; k];
    if idx >= k - 1 {
        out[k - 1] = 1.0;
    } else {
        out[idx] = 1.0 - frac;
        out[idx + 1] = frac;
    }
    out
}

/// Percentile encoding with the default width of [`PERCENTILE_DIM`].
pub fn encode_percentile(p: f64) -> Vec<f64> {
    encode_percentile_k(p, PERCENTILE_DIM)
}

/// Fixed sinusoidal encoding matrix of shape `L × d`:
/// row `i`, column `2j` is `sin(i / L^(2j/d))` and column `2j+1` is
/// `cos(i / L^(2j/d))`. One table serves both the time-interval and the
/// positional encoding.
#[derive(Debug, Clone)]
pub struct SinusoidTable {
    len: usize,
    dim: usize,
    rows: Vec<f64>,
}

impl SinusoidTable {
    pub fn new(len: usize, dim: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::config("sinusoid table needs L >= 1"));
        }
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::config(format!(
                "sinusoid table needs an even dimension, got {dim}"
            )));
        }
        let mut rows = vec![0.0; len * dim];
        for i in 0..len {
            for j in 0..dim / 2 {
                let angle = i as f64 / (len as f64).powf(2.0 * j as f64 / dim as f64);
                rows[i * dim + 2 * j] = angle.sin();
                rows[i * dim + 2 * j + 1] = angle.cos();
            }
        }
        Ok(SinusoidTable { len, dim, rows })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }
}

/// Per-position ranks of the consecutive-interaction gaps of one
/// fixed-length sequence. Position `p` carries the rank of the gap
/// `t[p] - t[p-1]`; the first valid position and all pad positions get
/// rank 0. Smallest gap gets rank 0, ties broken by earlier position.
pub fn rank_intervals(timestamps: &[i64], valid_len: usize) -> Vec<usize> {
    let len = timestamps.len();
    let mut ranks = vec![0usize; len];
    if valid_len < 2 {
        return ranks;
    }
    let first_valid = len - valid_len;
    let mut gaps: Vec<(i64, usize)> = (first_valid + 1..len)
        .map(|p| (timestamps[p] - timestamps[p - 1], p))
        .collect();
    gaps.sort_by_key(|&(gap, pos)| (gap, pos));
    for (rank, &(_, pos)) in gaps.iter().enumerate() {
        ranks[pos] = rank;
    }
    ranks
}
