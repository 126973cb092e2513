//! Product-of-Bernoulli mask distribution `q = Bern(λ)`.

use rand::Rng;

use crate::error::{FexError, Result};
use crate::rng;
use crate::types::{Attribution, Mask};

/// Lower clamp on every Bernoulli mean; the upper clamp is `1 - EPS_CLAMP`.
pub const EPS_CLAMP: f64 = 1e-4;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP)
}

/// `true` when `p` lies strictly inside the clamp band, i.e. the clamp
/// passes gradients through.
pub fn is_unclamped(p: f64) -> bool {
    p > EPS_CLAMP && p < 1.0 - EPS_CLAMP
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliPolicy {
    lambda: Vec<f64>,
}

impl BernoulliPolicy {
    /// Builds a policy from raw means in `[0, 1]`, clamping each into
    /// `[EPS_CLAMP, 1 - EPS_CLAMP]`.
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        for (i, &p) in lambda.iter().enumerate() {
            if !p.is_finite() {
                return Err(FexError::Numeric(format!("policy mean {i}")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(FexError::InvalidArgument(format!(
                    "policy mean {i} = {p} outside [0, 1]"
                )));
            }
        }
        Ok(BernoulliPolicy {
            lambda: lambda.into_iter().map(clamp_prob).collect(),
        })
    }

    pub fn uniform(n: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; n])
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn sample_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> Mask {
        Mask::new(self.lambda.iter().map(|&p| rng.gen::<f64>() < p).collect())
    }

    pub fn sample_masks_with<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Vec<Mask> {
        (0..t).map(|_| self.sample_mask(rng)).collect()
    }

    /// `t` independent masks from a generator seeded with `seed`.
    pub fn sample_masks(&self, t: usize, seed: u64) -> Result<Vec<Mask>> {
        if t == 0 {
            return Err(FexError::InvalidArgument("t must be at least 1".into()));
        }
        Ok(self.sample_masks_with(t, &mut rng::seeded(seed)))
    }

    fn check(&self, m: &Mask) -> Result<()> {
        if m.len() != self.lambda.len() {
            return Err(FexError::dim("mask length", self.lambda.len(), m.len()));
        }
        Ok(())
    }

    /// `Σ_i m_i ln λ_i + (1 - m_i) ln(1 - λ_i)`
    pub fn log_prob(&self, m: &Mask) -> Result<f64> {
        self.check(m)?;
        Ok(self
            .lambda
            .iter()
            .zip(m.bits())
            .map(|(&p, &keep)| if keep { p.ln() } else { (1.0 - p).ln() })
            .sum())
    }

    /// `∂ log q(m) / ∂ λ_i = m_i/λ_i - (1 - m_i)/(1 - λ_i)`
    pub fn log_prob_grad(&self, m: &Mask) -> Result<Vec<f64>> {
        self.check(m)?;
        Ok(self
            .lambda
            .iter()
            .zip(m.bits())
            .map(|(&p, &keep)| if keep { 1.0 / p } else { -1.0 / (1.0 - p) })
            .collect())
    }

    pub fn prob(&self, m: &Mask) -> Result<f64> {
        Ok(self.log_prob(m)?.exp())
    }

    pub fn entropy(&self) -> f64 {
        self.lambda.iter().map(|&p| binary_entropy(p)).sum()
    }

    /// `∂H / ∂λ_i = ln((1 - λ_i) / λ_i)`
    pub fn entropy_grad(&self) -> Vec<f64> {
        self.lambda.iter().map(|&p| ((1.0 - p) / p).ln()).collect()
    }

    /// Closed-form mean `E_q[m] = λ`, reported as a normalized attribution.
    pub fn mean(&self) -> Attribution {
        Attribution::new(self.lambda.clone(), true).expect("clamped means lie in [0, 1]")
    }
}

pub fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    h
}
