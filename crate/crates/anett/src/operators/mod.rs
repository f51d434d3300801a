//! Matrix-free linear forward operators `K : X -> Y` and the adjoint test.

mod dense;
mod fbp;
mod radon;

pub use dense::{DenseOperator, IdentityOperator};
pub use fbp::{fbp, FbpFilter};
pub use radon::RadonOperator;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A linear map together with its exact adjoint, acting on flat vectors.
///
/// Implementations must satisfy `<K x, y> = <x, K^T y>` up to floating-point
/// rounding; [`adjoint_test`] measures the discrepancy.
pub trait LinearOperator {
    fn domain_len(&self) -> usize;
    fn range_len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64>;

    /// Approximate right inverse used to initialize iterative schemes.
    /// Defaults to the adjoint; tomographic operators override this with
    /// filtered backprojection.
    fn approx_inverse(&self, y: &[f64]) -> Vec<f64> {
        self.apply_adjoint(y)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn gaussian_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Maximum over `trials` pseudo-random pairs `(x, y)` of the normalized
/// adjoint discrepancy `|<Kx, y> - <x, K^T y>| / (||Kx|| ||y|| + eps)`.
pub fn adjoint_test(op: &dyn LinearOperator, trials: usize, seed: u64) -> f64 {
    assert!(trials >= 1, "adjoint_test needs at least one trial");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x = gaussian_vec(&mut rng, op.domain_len());
        let y = gaussian_vec(&mut rng, op.range_len());
        let kx = op.apply(&x);
        let kty = op.apply_adjoint(&y);
        let lhs = dot(&kx, &y);
        let rhs = dot(&x, &kty);
        let denom = norm(&kx) * norm(&y) + 1e-30;
        worst = worst.max((lhs - rhs).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Operator whose adjoint is deliberately scaled by 2.
    struct BrokenAdjoint(DenseOperator);

    impl LinearOperator for BrokenAdjoint {
        fn domain_len(&self) -> usize {
            self.0.domain_len()
        }
        fn range_len(&self) -> usize {
            self.0.range_len()
        }
        fn apply(&self, x: &[f64]) -> Vec<f64> {
            self.0.apply(x)
        }
        fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
            self.0.apply_adjoint(y).iter().map(|v| 2.0 * v).collect()
        }
    }

    #[test]
    fn dense_adjoint_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let op = DenseOperator::random(9, 14, &mut rng);
        assert!(adjoint_test(&op, 20, 3) < 1e-14);
    }

    #[test]
    fn wrong_adjoint_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let op = BrokenAdjoint(DenseOperator::random(9, 14, &mut rng));
        // |<Kx,y> - 2<Kx,y>| / (||Kx|| ||y||) = |cos angle(Kx, y)|; over 20
        // Gaussian pairs the max is far above any rounding floor.
        assert!(adjoint_test(&op, 20, 3) > 0.1);
    }

    #[test]
    fn adjoint_of_linear_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let op = DenseOperator::random(6, 8, &mut rng);
        let y1 = gaussian_vec(&mut rng, 6);
        let y2 = gaussian_vec(&mut rng, 6);
        let combo: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| 2.5 * a - 0.5 * b).collect();
        let lhs = op.apply_adjoint(&combo);
        let t1 = op.apply_adjoint(&y1);
        let t2 = op.apply_adjoint(&y2);
        for i in 0..8 {
            assert!((lhs[i] - (2.5 * t1[i] - 0.5 * t2[i])).abs() < 1e-12);
        }
    }
}
