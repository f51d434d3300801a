//! The sparsity penalty `phi`, its proximal map, the augmented regularizer
//! `R(x) = phi(E(x)) + (c/2) ||x - D(E(x))||^2`, the full variational
//! objective and the absolute Bregman distance.

use crate::error::{AnettError, Result};
use crate::nnet::EncoderDecoder;
use crate::operators::LinearOperator;
use crate::similarity::SimilaritySpec;

/// Shape of one multiscale coefficient block `(channels, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl BlockShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat coefficient vector over the finite index set, with metadata tying
/// index ranges to multiscale channel grids.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    data: Vec<f64>,
    blocks: Vec<BlockShape>,
}

impl Coefficients {
    pub fn new(data: Vec<f64>, blocks: Vec<BlockShape>) -> Result<Self> {
        let expected: usize = blocks.iter().map(BlockShape::len).sum();
        if data.len() != expected {
            return Err(AnettError::dim(format!(
                "coefficient vector has {} entries, blocks describe {expected}",
                data.len()
            )));
        }
        Ok(Coefficients { data, blocks })
    }

    /// A single unstructured block.
    pub fn flat(data: Vec<f64>) -> Self {
        let blocks = vec![BlockShape {
            channels: 1,
            height: 1,
            width: data.len(),
        }];
        Coefficients { data, blocks }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn blocks(&self) -> &[BlockShape] {
        &self.blocks
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Per-index weights of the penalty; the uniform case avoids storing one
/// weight per coefficient.
#[derive(Clone, Debug, PartialEq)]
pub enum PhiWeights {
    Uniform(f64),
    PerIndex(Vec<f64>),
}

impl PhiWeights {
    fn infimum(&self) -> f64 {
        match self {
            PhiWeights::Uniform(w) => *w,
            PhiWeights::PerIndex(ws) => ws.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if let PhiWeights::PerIndex(ws) = self {
            if ws.len() != len {
                return Err(AnettError::dim(format!(
                    "{} weights for {len} coefficients",
                    ws.len()
                )));
            }
        }
        Ok(())
    }

    fn get(&self, idx: usize) -> f64 {
        match self {
            PhiWeights::Uniform(w) => *w,
            PhiWeights::PerIndex(ws) => ws[idx],
        }
    }
}

/// Weighted `l^q` penalty `phi(xi) = sum_i w_i |xi_i|^q` with `q` in `[1, 2]`
/// and optional Huber smoothing of radius `mu` (quadratic on `|t| <= mu`,
/// value- and slope-matched to the shifted power outside, zero at zero).
#[derive(Clone, Debug, PartialEq)]
pub struct PhiSpec {
    q: f64,
    weights: PhiWeights,
    mu: f64,
}

impl PhiSpec {
    pub fn new(q: f64, weights: PhiWeights, mu: f64) -> Result<Self> {
        if !(1.0..=2.0).contains(&q) {
            return Err(AnettError::domain(format!("penalty exponent q={q} not in [1, 2]")));
        }
        if !(weights.infimum() > 0.0) {
            return Err(AnettError::domain("penalty weights must have positive infimum"));
        }
        if !(mu >= 0.0) {
            return Err(AnettError::domain("Huber radius must be nonnegative"));
        }
        Ok(PhiSpec { q, weights, mu })
    }

    /// Plain `l^1` norm.
    pub fn l1() -> Self {
        PhiSpec {
            q: 1.0,
            weights: PhiWeights::Uniform(1.0),
            mu: 0.0,
        }
    }

    /// Huber-smoothed `l^1` norm; the experiments needing a differentiable
    /// regularizer default to `mu = 1e-3`.
    pub fn l1_smoothed(mu: f64) -> Result<Self> {
        PhiSpec::new(1.0, PhiWeights::Uniform(1.0), mu)
    }

    /// Weighted squared norm `sum_i w |xi_i|^2`.
    pub fn l2(weight: f64) -> Result<Self> {
        PhiSpec::new(2.0, PhiWeights::Uniform(weight), 0.0)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn weights(&self) -> &PhiWeights {
        &self.weights
    }

    pub fn inf_weight(&self) -> f64 {
        self.weights.infimum()
    }

    fn entry_value(&self, t: f64) -> f64 {
        let q = self.q;
        let a = t.abs();
        if self.mu > 0.0 && a <= self.mu {
            0.5 * q * self.mu.powf(q - 2.0) * t * t
        } else if self.mu > 0.0 {
            a.powf(q) - (1.0 - 0.5 * q) * self.mu.powf(q)
        } else {
            a.powf(q)
        }
    }

    fn entry_grad(&self, t: f64) -> f64 {
        let q = self.q;
        let a = t.abs();
        if self.mu > 0.0 && a <= self.mu {
            q * self.mu.powf(q - 2.0) * t
        } else if a == 0.0 {
            0.0
        } else {
            q * t.signum() * a.powf(q - 1.0)
        }
    }

    /// `sum_i w_i h(xi_i)` where `h` is the (possibly smoothed) power.
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        self.weights.check_len(xi.len())?;
        Ok(xi
            .iter()
            .enumerate()
            .map(|(i, &t)| self.weights.get(i) * self.entry_value(t))
            .sum())
    }

    /// `argmin_z tau phi(z) + (1/2) ||z - xi||^2`, available in closed form
    /// for the exact penalties with `q = 1` (entrywise soft-thresholding)
    /// and `q = 2`.
    pub fn prox(&self, xi: &[f64], tau: f64) -> Result<Vec<f64>> {
        if !(tau > 0.0) {
            return Err(AnettError::domain("prox step must be positive"));
        }
        if self.mu != 0.0 {
            return Err(AnettError::Unsupported(
                "prox of the Huber-smoothed penalty is not implemented".into(),
            ));
        }
        self.weights.check_len(xi.len())?;
        if self.q == 1.0 {
            Ok(xi
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let thr = tau * self.weights.get(i);
                    t.signum() * (t.abs() - thr).max(0.0)
                })
                .collect())
        } else if self.q == 2.0 {
            Ok(xi
                .iter()
                .enumerate()
                .map(|(i, &t)| t / (1.0 + 2.0 * tau * self.weights.get(i)))
                .collect())
        } else {
            Err(AnettError::Unsupported(format!(
                "prox implemented for q in {{1, 2}}, got q={}",
                self.q
            )))
        }
    }

    /// True when the penalty is differentiable (`q > 1` or `mu > 0`).
    pub fn is_differentiable(&self) -> bool {
        self.q > 1.0 || self.mu > 0.0
    }

    /// Gradient of the penalty; errors on the nonsmooth `q = 1, mu = 0`
    /// configuration.
    pub fn grad(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if !self.is_differentiable() {
            return Err(AnettError::Unsupported(
                "the exact l^1 penalty is not differentiable; use mu > 0".into(),
            ));
        }
        self.weights.check_len(xi.len())?;
        Ok(xi
            .iter()
            .enumerate()
            .map(|(i, &t)| self.weights.get(i) * self.entry_grad(t))
            .collect())
    }

    /// Like [`PhiSpec::grad`] but returns the zero subgradient at kinks,
    /// which is what stochastic training uses for the exact `l^1` penalty.
    pub fn subgradient(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.weights.check_len(xi.len())?;
        Ok(xi
            .iter()
            .enumerate()
            .map(|(i, &t)| self.weights.get(i) * self.entry_grad(t))
            .collect())
    }
}

/// Parameters of the reconstruction functional and its ADMM minimization:
/// `alpha` regularization weight, `c` augmentation weight, `rho` ADMM
/// scaling, `gamma` inner gradient-descent step, `n_iter` outer iterations.
#[derive(Clone, Debug)]
pub struct AnettConfig {
    pub alpha: f64,
    pub c: f64,
    pub rho: f64,
    pub gamma: f64,
    pub n_iter: usize,
    pub similarity: SimilaritySpec,
    pub phi: PhiSpec,
}

impl AnettConfig {
    /// `rho` defaults to `alpha * c`, coupling the splitting scale to the
    /// magnitude of the regularizer.
    pub fn new(
        alpha: f64,
        c: f64,
        gamma: f64,
        n_iter: usize,
        similarity: SimilaritySpec,
        phi: PhiSpec,
    ) -> Result<Self> {
        let cfg = AnettConfig {
            alpha,
            c,
            rho: alpha * c,
            gamma,
            n_iter,
            similarity,
            phi,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        self.rho = rho;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("c", self.c),
            ("rho", self.rho),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(AnettError::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_iter < 1 {
            return Err(AnettError::domain("n_iter must be at least 1"));
        }
        Ok(())
    }

    /// Sparse-view parameter row: `alpha = 1e-4`, `c = 1e2`, `gamma = 0.5`,
    /// 50 outer iterations, squared-norm similarity, `l^1` penalty.
    pub fn sparse_view() -> Self {
        AnettConfig::new(1e-4, 1e2, 0.5, 50, SimilaritySpec::L2Squared, PhiSpec::l1())
            .expect("constants are valid")
    }

    /// Low-dose parameter row: `alpha = 5e-3`, `c = 1e2`, `gamma = 1e-3`,
    /// 20 outer iterations, Kullback-Leibler similarity, `l^1` penalty.
    pub fn low_dose() -> Self {
        AnettConfig::new(5e-3, 1e2, 1e-3, 20, SimilaritySpec::kl(), PhiSpec::l1())
            .expect("constants are valid")
    }
}

/// The augmented regularizer `R(x) = phi(E(x)) + (c/2) ||x - D(E(x))||^2`.
pub fn anett_reg(
    coder: &dyn EncoderDecoder,
    phi: &PhiSpec,
    c: f64,
    x: &[f64],
) -> Result<f64> {
    if x.len() != coder.input_len() {
        return Err(AnettError::dim(format!(
            "input has {} entries, coder expects {}",
            x.len(),
            coder.input_len()
        )));
    }
    let xi = coder.encode(x);
    let nx = coder.decode(&xi);
    let dist: f64 = x.iter().zip(&nx).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(phi.eval(&xi)? + 0.5 * c * dist)
}

/// Gradient of [`anett_reg`]:
/// `E'(x)^T phi'(E(x)) + c (I - N'(x))^T (x - N(x))` with `N = D o E`.
pub fn anett_reg_grad(
    coder: &dyn EncoderDecoder,
    phi: &PhiSpec,
    c: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let xi = coder.encode(x);
    let nx = coder.decode(&xi);
    let residual: Vec<f64> = x.iter().zip(&nx).map(|(a, b)| a - b).collect();
    let phi_grad = phi.grad(&xi)?;
    let mut grad = coder.encode_pullback(x, &phi_grad);
    let pulled = coder.autoencode_pullback(x, &residual);
    for ((g, r), p) in grad.iter_mut().zip(&residual).zip(&pulled) {
        *g += c * (r - p);
    }
    Ok(grad)
}

/// The full variational objective `D(Kx, y) + alpha R(x)`.
pub fn anett_objective(
    op: &dyn LinearOperator,
    config: &AnettConfig,
    coder: &dyn EncoderDecoder,
    y: &[f64],
    x: &[f64],
) -> Result<f64> {
    let kx = op.apply(x);
    let fidelity = config.similarity.eval(&kx, y)?;
    Ok(fidelity + config.alpha * anett_reg(coder, &config.phi, config.c, x)?)
}

/// Absolute Bregman distance
/// `|R(x) - R(x*) - <grad R(x*), x - x*>|` of the augmented regularizer.
/// Requires a differentiable penalty (`q > 1` or Huber smoothing).
pub fn bregman_distance(
    coder: &dyn EncoderDecoder,
    phi: &PhiSpec,
    c: f64,
    x: &[f64],
    x_star: &[f64],
) -> Result<f64> {
    let r_x = anett_reg(coder, phi, c, x)?;
    let r_star = anett_reg(coder, phi, c, x_star)?;
    let grad_star = anett_reg_grad(coder, phi, c, x_star)?;
    let linear: f64 = grad_star
        .iter()
        .zip(x.iter().zip(x_star))
        .map(|(g, (a, b))| g * (a - b))
        .sum();
    Ok((r_x - r_star - linear).abs())
}
