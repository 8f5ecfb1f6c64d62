//! The popularity-dynamics transformer.
//!
//! No table in here is indexed by an item or user id: the only
//! item-facing parameter is the window projection, so the parameter
//! count is a pure function of the configuration and the model
//! transfers to any catalog.

mod checkpoint;
mod forward;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, PipelineConfig};
pub use forward::{build_inputs, context_rows, forward, score, SequenceInputs};

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};
use crate::popdyn::WindowParams;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension.
    pub d: usize,
    /// Attention heads.
    pub heads: usize,
    /// Transformer blocks.
    pub layers: usize,
    /// Fixed sequence length L.
    pub max_len: usize,
    /// Dynamics window geometry (defines the encoder input width).
    pub windows: WindowParams,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 50,
            heads: 2,
            layers: 2,
            max_len: 200,
            windows: WindowParams::default(),
            dropout: 0.3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "embedding dim {} must be divisible by heads {}",
                self.d, self.heads
            )));
        }
        if !self.d.is_multiple_of(2) {
            return Err(Error::config(format!(
                "embedding dim {} must be even for the sinusoid table",
                self.d
            )));
        }
        if self.layers == 0 {
            return Err(Error::config("at least one transformer layer required"));
        }
        if self.max_len == 0 {
            return Err(Error::config("sequence length L must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Input width of the window projection, `k(m+n)`.
    pub fn feature_width(&self) -> usize {
        self.windows.feature_width()
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }
}

/// Closed-form learnable-parameter count: the window projection
/// `d·k(m+n)`, per layer `4d²` attention + `2d² + 2d` FFN + `4d` norms,
/// and the final norm pair.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let d = cfg.d;
    let w = cfg.feature_width();
    d * w + cfg.layers * (4 * d * d + (2 * d * d + 2 * d) + 4 * d) + 2 * d
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NamedParam<S: Scalar> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<S>,
}

/// All learnable weights, in a canonical declared order (the checkpoint
/// array order). Contains no per-item or per-user table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S: Scalar> {
    pub config: ModelConfig,
    pub(crate) params: Vec<NamedParam<S>>,
}

impl<S: Scalar> ModelParams<S> {
    /// Initialize weights: uniform `±1/√fan_in` for projections, ones /
    /// zeros for norm gains / biases. Deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let dh = config.head_dim();
        let w = config.feature_width();
        let mut rng = substream(seed, "init", 0);
        let mut uniform = |shape: Vec<usize>, fan_in: usize| -> Vec<S> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..shape.iter().product::<usize>())
                .map(|_| S::from_f64(rng.gen_range(-bound..bound)))
                .collect()
        };
        let mut params = Vec::new();
        // stored input-major: row c holds the weights reading feature c
        let values = uniform(vec![w, d], w);
        params.push(NamedParam {
            name: "w_p".into(),
            shape: vec![w, d],
            values,
        });
        for l in 0..config.layers {
            for h in 0..config.heads {
                for proj in ["w_q", "w_k", "w_v"] {
                    let values = uniform(vec![d, dh], d);
                    params.push(NamedParam {
                        name: format!("layer{l}.head{h}.{proj}"),
                        shape: vec![d, dh],
                        values,
                    });
                }
            }
            let values = uniform(vec![d, d], d);
            params.push(NamedParam {
                name: format!("layer{l}.w_o"),
                shape: vec![d, d],
                values,
            });
            let values = uniform(vec![d, d], d);
            params.push(NamedParam {
                name: format!("layer{l}.ffn.w1"),
                shape: vec![d, d],
                values,
            });
            params.push(NamedParam {
                name: format!("layer{l}.ffn.b1"),
                shape: vec![d],
                values: vec![S::zero(); d],
            });
            let values = uniform(vec![d, d], d);
            params.push(NamedParam {
                name: format!("layer{l}.ffn.w2"),
                shape: vec![d, d],
                values,
            });
            params.push(NamedParam {
                name: format!("layer{l}.ffn.b2"),
                shape: vec![d],
                values: vec![S::zero(); d],
            });
            for ln in ["ln1", "ln2"] {
                params.push(NamedParam {
                    name: format!("layer{l}.{ln}.alpha"),
                    shape: vec![d],
                    values: vec![S::one(); d],
                });
                params.push(NamedParam {
                    name: format!("layer{l}.{ln}.beta"),
                    shape: vec![d],
                    values: vec![S::zero(); d],
                });
            }
        }
        params.push(NamedParam {
            name: "final_ln.alpha".into(),
            shape: vec![d],
            values: vec![S::one(); d],
        });
        params.push(NamedParam {
            name: "final_ln.beta".into(),
            shape: vec![d],
            values: vec![S::zero(); d],
        });
        Ok(ModelParams { config, params })
    }

    /// Exhaustive enumeration of allocated parameter values; must equal
    /// [`count_params`].
    pub fn total_len(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn param_lens(&self) -> Vec<usize> {
        self.params.iter().map(|p| p.values.len()).collect()
    }

    /// Mutable slices in declared order (for the optimizer).
    pub fn values_mut(&mut self) -> Vec<&mut [S]> {
        self.params
            .iter_mut()
            .map(|p| p.values.as_mut_slice())
            .collect()
    }

    /// The window projection applied to one feature row (inference
    /// path, no graph).
    pub fn embed_features(&self, features: &[S]) -> Vec<S> {
        let w_p = &self.params[0];
        let (w, d) = (w_p.shape[0], w_p.shape[1]);
        debug_assert_eq!(features.len(), w);
        let mut out = vec![S::zero(); d];
        for (c, &x) in features.iter().enumerate() {
            if x == S::zero() {
                continue;
            }
            let row = &w_p.values[c * d..(c + 1) * d];
            for (o, &wv) in out.iter_mut().zip(row) {
                *o = *o + x * wv;
            }
        }
        out
    }

    /// Graph-facing tensors in declared order; leaves when training.
    pub fn tensors(&self, requires_grad: bool) -> GraphParams<S> {
        let mk = |p: &NamedParam<S>| {
            if requires_grad {
                Tensor::leaf(p.shape.clone(), p.values.clone())
            } else {
                Tensor::constant(p.shape.clone(), p.values.clone())
            }
        };
        let flat: Vec<Tensor<S>> = self.params.iter().map(mk).collect();
        let mut it = flat.iter().cloned();
        let w_p = it.next().expect("w_p present");
        let mut layers = Vec::with_capacity(self.config.layers);
        for _ in 0..self.config.layers {
            let mut heads = Vec::with_capacity(self.config.heads);
            for _ in 0..self.config.heads {
                heads.push(HeadTensors {
                    w_q: it.next().unwrap(),
                    w_k: it.next().unwrap(),
                    w_v: it.next().unwrap(),
                });
            }
            layers.push(LayerTensors {
                heads,
                w_o: it.next().unwrap(),
                w1: it.next().unwrap(),
                b1: it.next().unwrap(),
                w2: it.next().unwrap(),
                b2: it.next().unwrap(),
                ln1_alpha: it.next().unwrap(),
                ln1_beta: it.next().unwrap(),
                ln2_alpha: it.next().unwrap(),
                ln2_beta: it.next().unwrap(),
            });
        }
        let final_ln_alpha = it.next().unwrap();
        let final_ln_beta = it.next().unwrap();
        GraphParams {
            w_p,
            layers,
            final_ln_alpha,
            final_ln_beta,
            flat,
        }
    }

    /// Fold accumulated leaf gradients back out, zeros where a
    /// parameter was unused.
    pub fn collect_grads(&self, graph: &GraphParams<S>) -> Vec<Vec<S>> {
        graph
            .flat
            .iter()
            .map(|t| t.grad().unwrap_or_else(|| vec![S::zero(); t.len()]))
            .collect()
    }

    /// Raw little-endian bytes of all parameters in declared order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total_len() * 4);
        for p in &self.params {
            for &v in &p.values {
                out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
            }
        }
        out
    }

    /// Hex SHA-256 over [`ModelParams::to_le_bytes`]; the frozen-weights
    /// witness used by zero-shot inference.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.to_le_bytes());
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub struct HeadTensors<S: Scalar> {
    pub w_q: Tensor<S>,
    pub w_k: Tensor<S>,
    pub w_v: Tensor<S>,
}

pub struct LayerTensors<S: Scalar> {
    pub heads: Vec<HeadTensors<S>>,
    pub w_o: Tensor<S>,
    pub w1: Tensor<S>,
    pub b1: Tensor<S>,
    pub w2: Tensor<S>,
    pub b2: Tensor<S>,
    pub ln1_alpha: Tensor<S>,
    pub ln1_beta: Tensor<S>,
    pub ln2_alpha: Tensor<S>,
    pub ln2_beta: Tensor<S>,
}

/// Tensor views over [`ModelParams`] for one batch of graphs.
pub struct GraphParams<S: Scalar> {
    pub w_p: Tensor<S>,
    pub layers: Vec<LayerTensors<S>>,
    pub final_ln_alpha: Tensor<S>,
    pub final_ln_beta: Tensor<S>,
    /// Declared order, aligned with `ModelParams::params`.
    pub flat: Vec<Tensor<S>>,
}

impl<S: Scalar> GraphParams<S> {
    pub fn clear_grads(&self) {
        for t in &self.flat {
            t.clear_grad();
        }
    }
}
