use rand::Rng;

use super::{gaussian_vec, LinearOperator};
use crate::error::{AnettError, Result};

/// Dense `m x n` matrix stored row-major, with the transpose as adjoint.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    m: usize,
    n: usize,
    rows: Vec<f64>,
}

impl DenseOperator {
    pub fn from_rows(m: usize, n: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != m * n {
            return Err(AnettError::dim(format!(
                "dense operator payload has {} entries, expected {m} x {n}",
                rows.len()
            )));
        }
        Ok(DenseOperator { m, n, rows })
    }

    pub fn identity(n: usize) -> Self {
        let mut rows = vec![0.0; n * n];
        for i in 0..n {
            rows[i * n + i] = 1.0;
        }
        DenseOperator { m: n, n, rows }
    }

    pub fn random(m: usize, n: usize, rng: &mut impl Rng) -> Self {
        DenseOperator {
            m,
            n,
            rows: gaussian_vec(rng, m * n),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.n + j]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }
}

impl LinearOperator for DenseOperator {
    fn domain_len(&self) -> usize {
        self.n
    }

    fn range_len(&self) -> usize {
        self.m
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        self.rows
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.m);
        let mut out = vec![0.0; self.n];
        for (row, yi) in self.rows.chunks_exact(self.n).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    }
}

/// The identity map, useful for closed-form regression instances.
#[derive(Clone, Copy, Debug)]
pub struct IdentityOperator {
    n: usize,
}

impl IdentityOperator {
    pub fn new(n: usize) -> Self {
        IdentityOperator { n }
    }
}

impl LinearOperator for IdentityOperator {
    fn domain_len(&self) -> usize {
        self.n
    }

    fn range_len(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        x.to_vec()
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n);
        y.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_against_hand_computed() {
        let op = DenseOperator::from_rows(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(op.apply(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(op.apply_adjoint(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn payload_length_is_checked() {
        assert!(DenseOperator::from_rows(2, 3, vec![0.0; 5]).is_err());
    }
}
