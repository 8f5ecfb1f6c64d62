//! Significance helper: Welch's two-sided t-test over per-user metric
//! arrays.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy)]
pub struct TTestResult {
    pub t: f64,
    pub degrees_of_freedom: f64,
    pub p_two_sided: f64,
}

/// Welch's unequal-variance t-test. Returns `None` when either sample
/// has fewer than two observations or both variances vanish.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let var = |xs: &[f64], m: f64| {
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return None;
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Some(TTestResult {
        t,
        degrees_of_freedom: df,
        p_two_sided: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_are_insignificant() {
        let a = [0.5, 0.4, 0.6, 0.5, 0.45];
        let r = welch_t_test(&a, &a).unwrap();
        assert!(r.t.abs() < 1e-12);
        assert!(r.p_two_sided > 0.99);
    }

    #[test]
    fn separated_samples_are_significant() {
        let a: Vec<f64> = (0..50).map(|i| 0.8 + 0.001 * (i % 5) as f64).collect();
        let b: Vec<f64> = (0..50).map(|i| 0.2 + 0.001 * (i % 7) as f64).collect();
        let r = welch_t_test(&a, &b).unwrap();
        assert!(r.p_two_sided < 1e-6);
        assert!(r.t > 0.0);
    }

    #[test]
    fn degenerate_inputs_yield_none() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_none());
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_none());
    }
}
