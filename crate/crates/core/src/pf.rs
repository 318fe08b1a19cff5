//! Perron–Frobenius data of nonnegative irreducible matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::is_irreducible;

/// Internal convergence tolerance of the power iteration.
pub const PF_TOL: f64 = 1e-12;
/// Accuracy promised for reported eigenvalues.
pub const PF_REPORTED_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerronFrobenius {
    pub lambda: f64,
    /// Right eigenvector with `‖ν‖₁ = 1`, indexed like the matrix columns.
    pub nu: Vec<f64>,
    pub tol: f64,
    pub iterations: usize,
}

/// Power iteration on `A + I`, which is primitive whenever `A` is irreducible,
/// so periodic matrices converge as well.
pub fn perron_frobenius(a: &[Vec<u64>], tol: f64) -> Result<PerronFrobenius> {
    if !is_irreducible(a) {
        return Err(Error::NotIrreducible);
    }
    let n = a.len();
    let m: Vec<Vec<f64>> = a
        .iter()
        .map(|row| row.iter().map(|&x| x as f64).collect())
        .collect();
    let mut v = vec![1.0 / n as f64; n];
    let max_iter = 200_000;
    for it in 1..=max_iter {
        let mut w: Vec<f64> = (0..n)
            .map(|i| v[i] + (0..n).map(|j| m[i][j] * v[j]).sum::<f64>())
            .collect();
        let s: f64 = w.iter().sum();
        for x in w.iter_mut() {
            *x /= s;
        }
        let diff: f64 = w.iter().zip(&v).map(|(x, y)| (x - y).abs()).sum();
        v = w;
        if diff < tol * 0.1 {
            let av: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| m[i][j] * v[j]).sum::<f64>())
                .collect();
            let lambda = av.iter().sum::<f64>();
            return Ok(PerronFrobenius {
                lambda,
                nu: v,
                tol,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence(format!(
        "power iteration did not settle in {max_iter} steps"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(lo) < 0.0) == (f(mid) < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn golden_ratio() {
        let pf = perron_frobenius(&[vec![1, 1], vec![1, 0]], PF_TOL).unwrap();
        let oracle = bisect(|x| x * x - x - 1.0, 1.0, 2.0);
        assert!((pf.lambda - oracle).abs() < PF_REPORTED_TOL);
        assert!((pf.lambda - 1.6180339887).abs() < 1e-9);
        assert!((pf.nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tribonacci() {
        // rows are images: a ↦ ab, b ↦ ac, c ↦ a
        let a = vec![vec![1, 1, 0], vec![1, 0, 1], vec![1, 0, 0]];
        let pf = perron_frobenius(&a, PF_TOL).unwrap();
        let oracle = bisect(|x| x * x * x - x * x - x - 1.0, 1.0, 2.0);
        assert!((pf.lambda - oracle).abs() < PF_REPORTED_TOL);
        assert!((pf.lambda - 1.8392867552).abs() < 1e-9);
    }

    #[test]
    fn permutation_is_simplicial() {
        let pf = perron_frobenius(&[vec![0, 1, 0], vec![0, 0, 1], vec![1, 0, 0]], PF_TOL).unwrap();
        assert!((pf.lambda - 1.0).abs() < 1e-9);
        assert!(pf.nu.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-9));
    }

    #[test]
    fn reducible_rejected() {
        assert_eq!(
            perron_frobenius(&[vec![1, 1], vec![0, 1]], PF_TOL),
            Err(Error::NotIrreducible)
        );
    }

    #[test]
    fn eigen_equation_holds() {
        let a = vec![vec![2, 1, 0], vec![1, 0, 1], vec![0, 3, 1]];
        let pf = perron_frobenius(&a, PF_TOL).unwrap();
        for i in 0..3 {
            let av: f64 = (0..3).map(|j| a[i][j] as f64 * pf.nu[j]).sum();
            assert!((av - pf.lambda * pf.nu[i]).abs() < 1e-10);
        }
    }
}
