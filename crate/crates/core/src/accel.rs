//! Anderson mixing for fixed-point iterations `x <- g(x)`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

/// Keeps the last `depth` differences of iterates and residuals and
/// extrapolates the next iterate from them.
#[derive(Debug, Clone)]
pub(crate) struct Anderson {
    depth: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    df: VecDeque<Vec<f64>>,
    dg: VecDeque<Vec<f64>>,
}

impl Anderson {
    pub(crate) fn new(depth: usize) -> Self {
        Self {
            depth,
            prev: None,
            df: VecDeque::new(),
            dg: VecDeque::new(),
        }
    }

    pub(crate) fn reset(&mut self) {
        self.prev = None;
        self.df.clear();
        self.dg.clear();
    }

    /// Given the current iterate `x` and its image `g`, returns the mixed
    /// next iterate. The weights are affine, so any linear constraint
    /// satisfied by every image is satisfied by the result.
    pub(crate) fn mix(&mut self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = g.iter().zip(x).map(|(g, x)| g - x).collect();
        if let Some((f_prev, g_prev)) = self.prev.take() {
            self.df.push_back(f.iter().zip(&f_prev).map(|(a, b)| a - b).collect());
            self.dg.push_back(g.iter().zip(&g_prev).map(|(a, b)| a - b).collect());
            if self.df.len() > self.depth {
                self.df.pop_front();
                self.dg.pop_front();
            }
        }
        self.prev = Some((f.clone(), g.to_vec()));
        if self.df.is_empty() {
            return g.to_vec();
        }

        let cols = self.df.len();
        let a = DMatrix::from_fn(f.len(), cols, |r, c| self.df[c][r]);
        let b = DVector::from_column_slice(&f);
        let svd = a.svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max();
        let gamma = match svd.solve(&b, cutoff) {
            Ok(gamma) if gamma.iter().all(|v| v.is_finite()) => gamma,
            _ => {
                self.reset();
                return g.to_vec();
            }
        };
        let mut next = g.to_vec();
        for (c, dg) in self.dg.iter().enumerate() {
            let w = gamma[c];
            for (n, d) in next.iter_mut().zip(dg) {
                *n -= w * d;
            }
        }
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accelerates_slow_linear_iteration() {
        // g(x) = M x + c with eigenvalues close to one
        let n = 30;
        let lambda: Vec<f64> = (0..n).map(|k| 0.999 - 0.03 * k as f64).collect();
        let c: Vec<f64> = (0..n).map(|k| 1.0 + k as f64).collect();
        let fixed: Vec<f64> = (0..n).map(|k| c[k] / (1.0 - lambda[k])).collect();
        let g = |x: &[f64]| -> Vec<f64> { (0..n).map(|k| lambda[k] * x[k] + c[k]).collect() };

        let mut acc = Anderson::new(n);
        let mut x = vec![0.0; n];
        for _ in 0..2 * n {
            let gx = g(&x);
            x = acc.mix(&x, &gx);
        }
        let err = x
            .iter()
            .zip(&fixed)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs() / b.abs()));
        assert!(err < 1e-8, "{err:e}");
    }

    #[test]
    fn weights_are_affine() {
        let mut acc = Anderson::new(3);
        let mut x = vec![1.0, 2.0, 3.0];
        for it in 0..6 {
            // images all satisfy sum = 10
            let s = it as f64;
            let gx = [5.0 + s, 3.0 - 2.0 * s, 2.0 + s + 0.1 * x[0]];
            let shift = (gx.iter().sum::<f64>() - 10.0) / 3.0;
            let gx: Vec<f64> = gx.iter().map(|v| v - shift).collect();
            x = acc.mix(&x, &gx);
            assert!((x.iter().sum::<f64>() - 10.0).abs() < 1e-9);
        }
    }
}
