//! Finite-difference gradient verification.
//!
//! An independent numerical route for checking the analytic backward
//! pass: central differences on the forward function, evaluated in
//! 64-bit. Functions under check must be pure (any internal randomness
//! reseeded per call).

use super::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Relative error `|analytic - fd| / (|analytic| + 1e-8)`, maximized
    /// over all input entries.
    pub max_rel_err: f64,
    /// (input index, element index) where the maximum occurred.
    pub worst: (usize, usize),
    pub analytic_at_worst: f64,
    pub fd_at_worst: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compare analytic gradients of `f` against central finite
/// differences, at the given inputs. `f` receives one leaf tensor per
/// input and must return a scalar.
pub fn check_gradients<F>(f: F, inputs: &[(Vec<usize>, Vec<f64>)]) -> GradCheckReport
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(shape, vals)| Tensor::leaf(shape.clone(), vals.clone()))
        .collect();
    let loss = f(&leaves);
    assert_eq!(loss.len(), 1, "gradcheck target must be scalar");
    loss.backward().expect("backward failed in gradcheck");
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.len()]))
        .collect();

    let eval = |xs: &[(Vec<usize>, Vec<f64>)]| -> f64 {
        let ts: Vec<Tensor<f64>> = xs
            .iter()
            .map(|(shape, vals)| Tensor::constant(shape.clone(), vals.clone()))
            .collect();
        f(&ts).item()
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic_at_worst: 0.0,
        fd_at_worst: 0.0,
    };
    let mut work: Vec<(Vec<usize>, Vec<f64>)> = inputs.to_vec();
    for (ti, (_, vals)) in inputs.iter().enumerate() {
        for ei in 0..vals.len() {
            let x = vals[ei];
            let h = 1e-5 * x.abs().max(1.0);
            work[ti].1[ei] = x + h;
            let up = eval(&work);
            work[ti].1[ei] = x - h;
            let down = eval(&work);
            work[ti].1[ei] = x;
            let fd = (up - down) / (2.0 * h);
            let a = analytic[ti][ei];
            let rel = (a - fd).abs() / (a.abs() + 1e-8);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (ti, ei);
                report.analytic_at_worst = a;
                report.fd_at_worst = fd;
            }
        }
    }
    report
}
