//! Differentiable operations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Mask;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

// Raw GEMM kernels over row-major slices. `nn` = A·B, `nt` = A·Bᵀ,
// `tn` = Aᵀ·B; the transposed variants keep backward passes
// allocation-light.
fn matmul_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == S::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + aip * bv;
            }
        }
    }
    out
}

fn matmul_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    // a: m×k, b: n×k, out: m×n = a · bᵀ
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc = acc + av * bv;
            }
            out[i * n + j] = acc;
        }
    }
    out
}

fn matmul_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    // a: k×m, b: k×n, out: m×n = aᵀ · b
    let mut out = vec![S::zero(); m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == S::zero() {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<S: Scalar> Tensor<S> {
    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        if self.shape().len() != 2 || rhs.shape().len() != 2 || self.cols() != rhs.rows() {
            return Err(shape_err("matmul", self.shape(), rhs.shape()));
        }
        let (m, k, n) = (self.rows(), self.cols(), rhs.cols());
        let values = matmul_nn(self.values(), rhs.values(), m, k, n);
        let (a, b) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            vec![m, n],
            values,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                vec![
                    matmul_nt(g, b.values(), m, n, k),
                    matmul_tn(a.values(), g, k, m, n),
                ]
            }),
        ))
    }

    pub fn transpose(&self) -> Result<Tensor<S>> {
        if self.shape().len() != 2 {
            return Err(shape_err("transpose", self.shape(), &[]));
        }
        let (m, n) = (self.rows(), self.cols());
        let mut values = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                values[j * m + i] = self.values()[i * n + j];
            }
        }
        Ok(Tensor::from_op(
            vec![n, m],
            values,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gt = vec![S::zero(); m * n];
                for j in 0..n {
                    for i in 0..m {
                        gt[i * n + j] = g[j * m + i];
                    }
                }
                vec![gt]
            }),
        ))
    }

    /// Concatenate rank-2 tensors along the last (column) axis.
    pub fn concat_cols(parts: &[Tensor<S>]) -> Result<Tensor<S>> {
        if parts.is_empty() {
            return Err(Error::config("concat of zero tensors"));
        }
        let m = parts[0].rows();
        for p in parts {
            if p.shape().len() != 2 || p.rows() != m {
                return Err(shape_err("concat", parts[0].shape(), p.shape()));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
        let total: usize = widths.iter().sum();
        let mut values = vec![S::zero(); m * total];
        let mut off = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            for i in 0..m {
                values[i * total + off..i * total + off + w].copy_from_slice(p.row(i));
            }
            off += w;
        }
        let widths_b = widths.clone();
        Ok(Tensor::from_op(
            vec![m, total],
            values,
            parts.to_vec(),
            Box::new(move |g| {
                let mut out = Vec::with_capacity(widths_b.len());
                let mut off = 0;
                for &w in &widths_b {
                    let mut pg = vec![S::zero(); m * w];
                    for i in 0..m {
                        pg[i * w..(i + 1) * w]
                            .copy_from_slice(&g[i * total + off..i * total + off + w]);
                    }
                    out.push(pg);
                    off += w;
                }
                out
            }),
        ))
    }

    pub fn add(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        if self.shape() != rhs.shape() {
            return Err(shape_err("add", self.shape(), rhs.shape()));
        }
        let values = self
            .values()
            .iter()
            .zip(rhs.values())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| vec![g.to_vec(), g.to_vec()]),
        ))
    }

    pub fn sub(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        if self.shape() != rhs.shape() {
            return Err(shape_err("sub", self.shape(), rhs.shape()));
        }
        let values = self
            .values()
            .iter()
            .zip(rhs.values())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| vec![g.to_vec(), g.iter().map(|&x| -x).collect()]),
        ))
    }

    /// Element-wise product.
    pub fn mul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        if self.shape() != rhs.shape() {
            return Err(shape_err("mul", self.shape(), rhs.shape()));
        }
        let values = self
            .values()
            .iter()
            .zip(rhs.values())
            .map(|(&a, &b)| a * b)
            .collect();
        let (a, b) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                vec![
                    g.iter().zip(b.values()).map(|(&gi, &bi)| gi * bi).collect(),
                    g.iter().zip(a.values()).map(|(&gi, &ai)| gi * ai).collect(),
                ]
            }),
        ))
    }

    pub fn neg(&self) -> Tensor<S> {
        self.scale(-S::one())
    }

    pub fn scale(&self, c: S) -> Tensor<S> {
        let values = self.values().iter().map(|&x| x * c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone()],
            Box::new(move |g| vec![g.iter().map(|&x| x * c).collect()]),
        )
    }

    pub fn add_scalar(&self, c: S) -> Tensor<S> {
        let values = self.values().iter().map(|&x| x + c).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone()],
            Box::new(move |g| vec![g.to_vec()]),
        )
    }

    pub fn relu(&self) -> Tensor<S> {
        let values = self
            .values()
            .iter()
            .map(|&x| if x > S::zero() { x } else { S::zero() })
            .collect();
        let input = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone()],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(input.values())
                    .map(|(&gi, &xi)| if xi > S::zero() { gi } else { S::zero() })
                    .collect()]
            }),
        )
    }

    pub fn sigmoid(&self) -> Tensor<S> {
        let values: Vec<S> = self.values().iter().map(|&x| stable_sigmoid(x)).collect();
        let saved = values.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone()],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(&saved)
                    .map(|(&gi, &yi)| gi * yi * (S::one() - yi))
                    .collect()]
            }),
        )
    }

    /// `log σ(x)`, computed without overflow at either tail.
    pub fn log_sigmoid(&self) -> Tensor<S> {
        let values: Vec<S> = self
            .values()
            .iter()
            .map(|&x| {
                // log σ(x) = -softplus(-x)
                if x >= S::zero() {
                    -(S::one() + (-x).exp()).ln()
                } else {
                    x - (S::one() + x.exp()).ln()
                }
            })
            .collect();
        let input = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone()],
            Box::new(move |g| {
                // d/dx log σ(x) = σ(-x)
                vec![g
                    .iter()
                    .zip(input.values())
                    .map(|(&gi, &xi)| gi * stable_sigmoid(-xi))
                    .collect()]
            }),
        )
    }

    /// Row-wise softmax with hard masking: masked entries get exactly
    /// zero probability; rows that are fully masked come out all-zero.
    /// Stabilized by max-subtraction over the visible entries.
    pub fn softmax_masked(&self, mask: &Mask) -> Result<Tensor<S>> {
        if self.shape().len() != 2 || mask.shape != self.shape() {
            return Err(shape_err("softmax_masked", self.shape(), &mask.shape));
        }
        let (m, n) = (self.rows(), self.cols());
        let mut values = vec![S::zero(); m * n];
        for i in 0..m {
            let row = self.row(i);
            let mrow = &mask.masked[i * n..(i + 1) * n];
            let mut max = S::neg_infinity();
            for (j, &x) in row.iter().enumerate() {
                if !mrow[j] && x > max {
                    max = x;
                }
            }
            if max == S::neg_infinity() {
                continue; // fully masked row stays zero
            }
            let out = &mut values[i * n..(i + 1) * n];
            let mut denom = S::zero();
            for j in 0..n {
                if !mrow[j] {
                    let e = (row[j] - max).exp();
                    out[j] = e;
                    denom = denom + e;
                }
            }
            for v in out.iter_mut() {
                *v = *v / denom;
            }
        }
        let saved = values.clone();
        let masked = mask.masked.clone();
        Ok(Tensor::from_op(
            vec![m, n],
            values,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![S::zero(); m * n];
                for i in 0..m {
                    let y = &saved[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let mrow = &masked[i * n..(i + 1) * n];
                    let mut dot = S::zero();
                    for j in 0..n {
                        dot = dot + gr[j] * y[j];
                    }
                    let dr = &mut dx[i * n..(i + 1) * n];
                    for j in 0..n {
                        if !mrow[j] {
                            dr[j] = y[j] * (gr[j] - dot);
                        }
                    }
                }
                vec![dx]
            }),
        ))
    }

    /// Layer normalization over the last axis with learnable gain/bias,
    /// population variance.
    pub fn layer_norm(&self, alpha: &Tensor<S>, beta: &Tensor<S>, eps: S) -> Result<Tensor<S>> {
        if self.shape().len() != 2 {
            return Err(shape_err("layer_norm", self.shape(), alpha.shape()));
        }
        let (m, n) = (self.rows(), self.cols());
        if alpha.shape() != [n] || beta.shape() != [n] {
            return Err(shape_err("layer_norm", alpha.shape(), beta.shape()));
        }
        let inv_n = S::one() / S::from_f64(n as f64);
        let mut values = vec![S::zero(); m * n];
        let mut normed = vec![S::zero(); m * n];
        let mut inv_std = vec![S::zero(); m];
        for i in 0..m {
            let row = self.row(i);
            let mut mean = S::zero();
            for &x in row {
                mean = mean + x;
            }
            mean = mean * inv_n;
            let mut var = S::zero();
            for &x in row {
                let d = x - mean;
                var = var + d * d;
            }
            var = var * inv_n;
            let is = S::one() / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..n {
                let xh = (row[j] - mean) * is;
                normed[i * n + j] = xh;
                values[i * n + j] = alpha.values()[j] * xh + beta.values()[j];
            }
        }
        let alpha_b = alpha.clone();
        Ok(Tensor::from_op(
            vec![m, n],
            values,
            vec![self.clone(), alpha.clone(), beta.clone()],
            Box::new(move |g| {
                let mut dx = vec![S::zero(); m * n];
                let mut dalpha = vec![S::zero(); n];
                let mut dbeta = vec![S::zero(); n];
                for i in 0..m {
                    let gr = &g[i * n..(i + 1) * n];
                    let xh = &normed[i * n..(i + 1) * n];
                    let mut mean_ga = S::zero();
                    let mut mean_gax = S::zero();
                    for j in 0..n {
                        let ga = gr[j] * alpha_b.values()[j];
                        mean_ga = mean_ga + ga;
                        mean_gax = mean_gax + ga * xh[j];
                        dalpha[j] = dalpha[j] + gr[j] * xh[j];
                        dbeta[j] = dbeta[j] + gr[j];
                    }
                    mean_ga = mean_ga * inv_n;
                    mean_gax = mean_gax * inv_n;
                    for j in 0..n {
                        let ga = gr[j] * alpha_b.values()[j];
                        dx[i * n + j] = (ga - mean_ga - xh[j] * mean_gax) * inv_std[i];
                    }
                }
                vec![dx, dalpha, dbeta]
            }),
        ))
    }

    /// Inverted dropout: in training, zero each entry with probability
    /// `rate` and scale survivors by `1/(1-rate)`; identity at
    /// inference.
    pub fn dropout(&self, rate: f64, training: bool, rng: &mut ChaCha8Rng) -> Result<Tensor<S>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            // Identity pass-through (still recorded so gradients flow).
            return Ok(Tensor::from_op(
                self.shape().to_vec(),
                self.values().to_vec(),
                vec![self.clone()],
                Box::new(move |g| vec![g.to_vec()]),
            ));
        }
        let keep_scale = S::from_f64(1.0 / (1.0 - rate));
        let mask: Vec<S> = (0..self.len())
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    S::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let values = self
            .values()
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| x * m)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            vec![self.clone()],
            Box::new(move |g| vec![g.iter().zip(&mask).map(|(&gi, &m)| gi * m).collect()]),
        ))
    }

    /// Broadcast-add a length-`n` vector to every row of an `m×n`
    /// tensor.
    pub fn add_row(&self, row: &Tensor<S>) -> Result<Tensor<S>> {
        if self.shape().len() != 2 || row.shape() != [self.cols()] {
            return Err(shape_err("add_row", self.shape(), row.shape()));
        }
        let (m, n) = (self.rows(), self.cols());
        let mut values = self.values().to_vec();
        for i in 0..m {
            for j in 0..n {
                values[i * n + j] = values[i * n + j] + row.values()[j];
            }
        }
        Ok(Tensor::from_op(
            vec![m, n],
            values,
            vec![self.clone(), row.clone()],
            Box::new(move |g| {
                let mut drow = vec![S::zero(); n];
                for i in 0..m {
                    for j in 0..n {
                        drow[j] = drow[j] + g[i * n + j];
                    }
                }
                vec![g.to_vec(), drow]
            }),
        ))
    }

    /// Sum along the last axis: `m×n` → `m`.
    pub fn row_sum(&self) -> Result<Tensor<S>> {
        if self.shape().len() != 2 {
            return Err(shape_err("row_sum", self.shape(), &[]));
        }
        let (m, n) = (self.rows(), self.cols());
        let values = (0..m)
            .map(|i| {
                let mut acc = S::zero();
                for &x in self.row(i) {
                    acc = acc + x;
                }
                acc
            })
            .collect();
        Ok(Tensor::from_op(
            vec![m],
            values,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![S::zero(); m * n];
                for i in 0..m {
                    for j in 0..n {
                        dx[i * n + j] = g[i];
                    }
                }
                vec![dx]
            }),
        ))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self) -> Tensor<S> {
        let total = self.values().iter().copied().fold(S::zero(), |a, b| a + b);
        let n = self.len();
        Tensor::from_op(
            vec![],
            vec![total],
            vec![self.clone()],
            Box::new(move |g| vec![vec![g[0]; n]]),
        )
    }

    /// Inner product of two equal-length rank-1 tensors.
    pub fn dot(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        if self.shape().len() != 1 || self.shape() != rhs.shape() {
            return Err(shape_err("dot", self.shape(), rhs.shape()));
        }
        let value = self
            .values()
            .iter()
            .zip(rhs.values())
            .map(|(&a, &b)| a * b)
            .fold(S::zero(), |a, b| a + b);
        let (a, b) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            vec![],
            vec![value],
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                vec![
                    b.values().iter().map(|&x| x * g[0]).collect(),
                    a.values().iter().map(|&x| x * g[0]).collect(),
                ]
            }),
        ))
    }
}

fn stable_sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    #[test]
    fn concat_widths() {
        let a = Tensor::<f64>::constant(vec![1, 3], vec![1.0, 2.0, 3.0]);
        let b = Tensor::<f64>::constant(vec![1, 2], vec![4.0, 5.0]);
        let c = Tensor::concat_cols(&[a, b]).unwrap();
        assert_eq!(c.shape(), &[1, 5]);
        assert_eq!(c.values(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn relu_and_sigmoid_points() {
        let x = Tensor::<f64>::constant(vec![2], vec![-2.0, 3.0]);
        assert_eq!(x.relu().values(), &[0.0, 3.0]);
        let z = Tensor::<f64>::constant(vec![1], vec![0.0]);
        assert_eq!(z.sigmoid().values(), &[0.5]);
    }

    #[test]
    fn softmax_symmetric_and_masked() {
        let x = Tensor::<f64>::constant(vec![1, 2], vec![0.0, 0.0]);
        let y = x.softmax_masked(&Mask::none(vec![1, 2])).unwrap();
        assert_eq!(y.values(), &[0.5, 0.5]);

        let x = Tensor::<f64>::constant(vec![1, 2], vec![1.0, 100.0]);
        let mask = Mask::new(vec![1, 2], vec![false, true]);
        let y = x.softmax_masked(&mask).unwrap();
        assert_eq!(y.values(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let x = Tensor::<f64>::constant(vec![1, 2], vec![1000.0, 1000.0]);
        let y = x.softmax_masked(&Mask::none(vec![1, 2])).unwrap();
        assert_eq!(y.values(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_fully_masked_row_is_zero() {
        let x = Tensor::<f64>::constant(vec![2, 2], vec![5.0, 7.0, 1.0, 2.0]);
        let mask = Mask::new(vec![2, 2], vec![true, true, false, false]);
        let y = x.softmax_masked(&mask).unwrap();
        assert_eq!(&y.values()[..2], &[0.0, 0.0]);
        let s: f64 = y.values()[2..].iter().sum();
        assert_relative_eq!(s, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn layer_norm_points() {
        let x = Tensor::<f64>::constant(vec![1, 2], vec![1.0, 3.0]);
        let alpha = Tensor::constant(vec![2], vec![1.0, 1.0]);
        let beta = Tensor::constant(vec![2], vec![0.0, 0.0]);
        let y = x.layer_norm(&alpha, &beta, 1e-12).unwrap();
        assert_relative_eq!(y.values()[0], -1.0, max_relative = 1e-5);
        assert_relative_eq!(y.values()[1], 1.0, max_relative = 1e-5);

        // constant row collapses to beta
        let x = Tensor::<f64>::constant(vec![1, 2], vec![4.0, 4.0]);
        let beta = Tensor::constant(vec![2], vec![0.7, -0.3]);
        let y = x.layer_norm(&alpha, &beta, 1e-8).unwrap();
        assert_relative_eq!(y.values()[0], 0.7, max_relative = 1e-9);
        assert_relative_eq!(y.values()[1], -0.3, max_relative = 1e-9);

        // zero gain leaves only beta
        let x = Tensor::<f64>::constant(vec![1, 2], vec![1.0, 9.0]);
        let zero = Tensor::constant(vec![2], vec![0.0, 0.0]);
        let y = x.layer_norm(&zero, &beta, 1e-8).unwrap();
        assert_eq!(y.values(), &[0.7, -0.3]);
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let x = Tensor::<f64>::constant(vec![2, 5], vec![1.0, -2.0, 0.5, 3.0, 7.0, 2.0, 2.5, -1.0, 0.0, 4.0]);
        let alpha = Tensor::constant(vec![5], vec![1.0; 5]);
        let beta = Tensor::constant(vec![5], vec![0.0; 5]);
        let y = x.layer_norm(&alpha, &beta, 1e-10).unwrap();
        for i in 0..2 {
            let row = y.row(i);
            let mean: f64 = row.iter().sum::<f64>() / 5.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn dropout_contracts() {
        let mut rng = substream(1, "dropout", 0);
        let x = Tensor::<f64>::constant(vec![4], vec![1.0, 2.0, 3.0, 4.0]);
        let y = x.dropout(0.0, true, &mut rng).unwrap();
        assert_eq!(y.values(), x.values());
        let y = x.dropout(0.3, false, &mut rng).unwrap();
        assert_eq!(y.values(), x.values());

        let mut r1 = substream(7, "dropout", 0);
        let mut r2 = substream(7, "dropout", 0);
        let big = Tensor::<f64>::constant(vec![64], vec![1.0; 64]);
        let a = big.dropout(0.3, true, &mut r1).unwrap();
        let b = big.dropout(0.3, true, &mut r2).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.values().contains(&0.0));
        for &v in a.values() {
            assert!(v == 0.0 || (v - 1.0 / 0.7).abs() < 1e-12);
        }

        assert!(x.dropout(1.0, true, &mut rng).is_err());
    }

    #[test]
    fn backward_linear_case() {
        // loss = sum(W·x): dL/dW has rows equal to xᵀ
        let w = Tensor::<f64>::leaf(vec![2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let x = Tensor::<f64>::constant(vec![3, 1], vec![2.0, -1.0, 0.5]);
        let loss = w.matmul(&x).unwrap().sum();
        loss.backward().unwrap();
        let g = w.grad().unwrap();
        assert_eq!(g, vec![2.0, -1.0, 0.5, 2.0, -1.0, 0.5]);
    }

    #[test]
    fn backward_sigmoid_at_zero() {
        // loss = sigmoid(w)·c at w=0 → dL/dw = 0.25·c
        let w = Tensor::<f64>::leaf(vec![1], vec![0.0]);
        let c = 3.0;
        let loss = w.sigmoid().scale(c).sum();
        loss.backward().unwrap();
        assert_relative_eq!(w.grad().unwrap()[0], 0.25 * c, max_relative = 1e-12);
    }

    #[test]
    fn backward_accumulates_across_graphs() {
        let w = Tensor::<f64>::leaf(vec![1], vec![2.0]);
        for _ in 0..3 {
            let loss = w.scale(5.0).sum();
            loss.backward().unwrap();
        }
        assert_eq!(w.grad().unwrap(), vec![15.0]);
        w.clear_grad();
        assert!(w.grad().is_none());
    }

    #[test]
    fn non_scalar_backward_is_error() {
        let w = Tensor::<f64>::leaf(vec![2], vec![1.0, 2.0]);
        let y = w.scale(2.0);
        assert!(y.backward().is_err());
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::constant(vec![2, 3], vec![0.0; 6]);
        let b = Tensor::<f64>::constant(vec![2, 2], vec![0.0; 4]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn unused_parameters_get_no_gradient_and_read_as_zero() {
        let used = Tensor::<f64>::leaf(vec![1], vec![1.0]);
        let unused = Tensor::<f64>::leaf(vec![2], vec![1.0, 2.0]);
        let loss = used.scale(2.0).sum();
        loss.backward().unwrap();
        assert!(unused.grad().is_none());
        assert_eq!(used.grad().unwrap(), vec![2.0]);
    }
}
