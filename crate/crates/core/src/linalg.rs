//! Dense symmetric positive-definite solves for the Gaussian-process code.

use crate::error::{Error, Result};

/// Diagonal jitter is multiplied by this on each failed factorisation.
pub const JITTER_GROWTH: f64 = 10.0;
/// Largest jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-4;

/// Lower Cholesky factor of the row-major `n x n` matrix `a`, or `None` when a
/// pivot is not positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n, "cholesky: matrix is not n x n");
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

/// Factor of `a + jitter I`, multiplying the jitter by [`JITTER_GROWTH`] after
/// each failure until it exceeds [`MAX_JITTER`]. Returns the factor and the
/// jitter that worked.
pub fn cholesky_jittered(a: &[f64], n: usize, jitter: f64) -> Result<(Vec<f64>, f64)> {
    let mut j = jitter;
    loop {
        let mut m = a.to_vec();
        for i in 0..n {
            m[i * n + i] += j;
        }
        if let Some(l) = cholesky(&m, n) {
            return Ok((l, j));
        }
        j *= JITTER_GROWTH;
        if j > MAX_JITTER * (1.0 + 1e-9) {
            return Err(Error::Numeric(format!(
                "covariance of size {n} is not positive definite even with jitter {MAX_JITTER}"
            )));
        }
    }
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solves `L^T x = b` for lower-triangular `L`.
pub fn solve_upper_transposed(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reproduces_matrix() {
        let a = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((v - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        let b = [1.0, -2.0, 0.5];
        let x = solve_upper_transposed(&l, 3, &solve_lower(&l, 3, &b));
        for i in 0..3 {
            let v: f64 = (0..3).map(|k| a[i * 3 + k] * x[k]).sum();
            assert!((v - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn jitter_escalates_then_fails() {
        // rank one: needs jitter to factor
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(cholesky(&a, 2).is_none());
        let (_, j) = cholesky_jittered(&a, 2, 1e-8).unwrap();
        assert_eq!(j, 1e-8);
        let indefinite = [1.0, 2.0, 2.0, 1.0];
        assert!(matches!(
            cholesky_jittered(&indefinite, 2, 1e-8),
            Err(Error::Numeric(_))
        ));
    }
}
