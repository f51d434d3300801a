//! Similarity measures `D : Y x Y -> [0, inf]` and their gradients in the
//! first argument.
//!
//! `L2Squared` is `||u - v||^2`.  `Kl` is the Poisson-compatible divergence
//! `sum_i u_i - v_i + v_i log(v_i / u_i)` with the convention `0 log 0 = 0`
//! and `u` clamped below at a small floor inside the logarithm and division
//! so gradients stay finite when a forward projection has zero entries.
//! `Unstable` is `H(v) ||u - v||^2` with `H(v) = 1` for `||v|| <= 1` and
//! `H(v) = 2` otherwise; it satisfies the quasi triangle-inequality but not
//! the data-continuity condition, and is used in closed-form instability
//! demonstrations only.

use crate::error::{AnettError, Result};
use crate::image::Sinogram;

pub const DEFAULT_KL_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SimilaritySpec {
    L2Squared,
    Kl { floor: f64 },
    Unstable,
}

impl SimilaritySpec {
    pub fn kl() -> Self {
        SimilaritySpec::Kl {
            floor: DEFAULT_KL_FLOOR,
        }
    }

    /// Constant of the quasi triangle-inequality
    /// `D(y0, y1) <= q (D(y0, y2) + D(y2, y1))`, where one holds.
    pub fn quasi_triangle_q(&self) -> Option<f64> {
        match self {
            SimilaritySpec::L2Squared => Some(2.0),
            SimilaritySpec::Unstable => Some(4.0),
            SimilaritySpec::Kl { .. } => None,
        }
    }

    fn check(&self, u: &[f64], v: &[f64]) -> Result<()> {
        if u.len() != v.len() {
            return Err(AnettError::dim(format!(
                "similarity arguments have lengths {} and {}",
                u.len(),
                v.len()
            )));
        }
        if let SimilaritySpec::Kl { floor } = self {
            if !(*floor > 0.0) {
                return Err(AnettError::domain("KL floor must be positive"));
            }
            if v.iter().any(|&x| x < 0.0) {
                return Err(AnettError::domain(
                    "KL divergence requires nonnegative data in the second argument",
                ));
            }
        }
        Ok(())
    }

    /// Evaluates `D(u, v)`.
    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check(u, v)?;
        Ok(match self {
            SimilaritySpec::L2Squared => sq_dist(u, v),
            SimilaritySpec::Kl { floor } => u
                .iter()
                .zip(v)
                .map(|(&ui, &vi)| {
                    let log_term = if vi == 0.0 {
                        0.0
                    } else {
                        vi * (vi / ui.max(*floor)).ln()
                    };
                    ui - vi + log_term
                })
                .sum(),
            SimilaritySpec::Unstable => h_weight(v) * sq_dist(u, v),
        })
    }

    /// Gradient of `D(u, v)` with respect to `u`.  Not provided for the
    /// counterexample measure, which is only used through closed forms.
    pub fn grad(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check(u, v)?;
        match self {
            SimilaritySpec::L2Squared => Ok(u.iter().zip(v).map(|(a, b)| 2.0 * (a - b)).collect()),
            SimilaritySpec::Kl { floor } => Ok(u
                .iter()
                .zip(v)
                .map(|(&ui, &vi)| 1.0 - vi / ui.max(*floor))
                .collect()),
            SimilaritySpec::Unstable => Err(AnettError::Unsupported(
                "no gradient for the counterexample similarity measure".into(),
            )),
        }
    }

    pub fn eval_sinograms(&self, u: &Sinogram, v: &Sinogram) -> Result<f64> {
        if u.geometry() != v.geometry() {
            return Err(AnettError::dim("sinogram geometries differ"));
        }
        self.eval(u.as_slice(), v.as_slice())
    }
}

fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn h_weight(v: &[f64]) -> f64 {
    let norm_sq: f64 = v.iter().map(|x| x * x).sum();
    if norm_sq <= 1.0 {
        1.0
    } else {
        2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_positive(rng: &mut impl Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| 0.1 + rng.random::<f64>()).collect()
    }

    #[test]
    fn identity_of_indiscernibles_on_the_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [
            SimilaritySpec::L2Squared,
            SimilaritySpec::kl(),
            SimilaritySpec::Unstable,
        ] {
            for _ in 0..20 {
                let u = random_positive(&mut rng, 9);
                assert_eq!(spec.eval(&u, &u).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn distinct_arguments_give_positive_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for spec in [
            SimilaritySpec::L2Squared,
            SimilaritySpec::kl(),
            SimilaritySpec::Unstable,
        ] {
            for _ in 0..50 {
                let u = random_positive(&mut rng, 6);
                let mut v = random_positive(&mut rng, 6);
                if u == v {
                    v[0] += 0.5;
                }
                assert!(spec.eval(&u, &v).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn kl_value_on_scalar_example() {
        // u = [2], v = [1]: 2 - 1 + ln(1/2) = 1 - ln 2
        let spec = SimilaritySpec::kl();
        let got = spec.eval(&[2.0], &[1.0]).unwrap();
        assert!((got - (1.0 - std::f64::consts::LN_2)).abs() < 1e-15);
        assert!((got - 0.30685).abs() < 1e-5);
    }

    #[test]
    fn kl_nonnegative_on_positive_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = SimilaritySpec::kl();
        for _ in 0..200 {
            let u = random_positive(&mut rng, 12);
            let v = random_positive(&mut rng, 12);
            assert!(spec.eval(&u, &v).unwrap() >= -1e-14);
        }
    }

    #[test]
    fn kl_rejects_negative_data() {
        let spec = SimilaritySpec::kl();
        assert!(matches!(
            spec.eval(&[1.0], &[-0.5]),
            Err(crate::AnettError::Domain(_))
        ));
    }

    #[test]
    fn unstable_weight_switches_at_unit_norm() {
        let spec = SimilaritySpec::Unstable;
        // ||v|| = 2 > 1: D = 2 * ||u - v||^2 = 2 * 4 = 8
        assert_eq!(spec.eval(&[0.0], &[2.0]).unwrap(), 8.0);
        // ||v|| = 0.5 <= 1: D = ||u - v||^2 = 0.25
        assert_eq!(spec.eval(&[0.0], &[0.5]).unwrap(), 0.25);
    }

    #[test]
    fn unstable_has_no_gradient() {
        assert!(SimilaritySpec::Unstable.grad(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn l2_gradient_vanishes_on_the_diagonal() {
        let g = SimilaritySpec::L2Squared.grad(&[1.0, -2.0], &[1.0, -2.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kl_gradient_on_scalar_example() {
        let g = SimilaritySpec::kl().grad(&[2.0], &[1.0]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-5;
        for spec in [SimilaritySpec::L2Squared, SimilaritySpec::kl()] {
            for _ in 0..20 {
                let u = random_positive(&mut rng, 7);
                let v = random_positive(&mut rng, 7);
                let g = spec.grad(&u, &v).unwrap();
                for i in 0..u.len() {
                    let mut up = u.clone();
                    let mut dn = u.clone();
                    up[i] += h;
                    dn[i] -= h;
                    let fd =
                        (spec.eval(&up, &v).unwrap() - spec.eval(&dn, &v).unwrap()) / (2.0 * h);
                    let denom = g[i].abs().max(1e-8);
                    assert!(
                        ((g[i] - fd) / denom).abs() < 1e-6,
                        "{spec:?} entry {i}: grad {} vs fd {fd}",
                        g[i]
                    );
                }
            }
        }
    }

    #[test]
    fn quasi_triangle_inequality_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (spec, q) in [
            (SimilaritySpec::L2Squared, 2.0),
            (SimilaritySpec::Unstable, 4.0),
        ] {
            assert_eq!(spec.quasi_triangle_q(), Some(q));
            for _ in 0..500 {
                // mix of scales so ||.|| <= 1 and > 1 both occur
                let scale = if rng.random::<f64>() < 0.5 { 0.3 } else { 3.0 };
                let y0: Vec<f64> = (0..5).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
                let y1: Vec<f64> = (0..5).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
                let y2: Vec<f64> = (0..5).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
                let lhs = spec.eval(&y0, &y1).unwrap();
                let rhs = q * (spec.eval(&y0, &y2).unwrap() + spec.eval(&y2, &y1).unwrap());
                assert!(lhs <= rhs + 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(matches!(
            SimilaritySpec::L2Squared.eval(&[1.0], &[1.0, 2.0]),
            Err(crate::AnettError::Dimension(_))
        ));
    }
}
