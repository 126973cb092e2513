//! The classifier under explanation.
//!
//! Anything implementing [`Predictor`] can be explained: the built-in
//! [`MlpPredictor`], an external process behind a [`BlackBoxBridge`], or a
//! closure wrapped in [`FnPredictor`].

mod bridge;
mod builtin;

use std::sync::atomic::{AtomicU64, Ordering};

pub use bridge::{BlackBoxBridge, BRIDGE_SUM_TOL, DEFAULT_BRIDGE_TIMEOUT};
pub use builtin::{
    accuracy, train_builtin, train_builtin_from, MlpPredictor, PredictorTrainConfig, TrainedPredictor,
};

use crate::error::{FexError, Result};
use crate::types::{apply_mask_slice, Mask, ProbVector};

pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn predict_proba(&self, x: &[f64]) -> Result<ProbVector>;

    /// Class with the largest predicted probability.
    fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_proba(x)?.argmax())
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }
    fn predict_proba(&self, x: &[f64]) -> Result<ProbVector> {
        (**self).predict_proba(x)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }
    fn predict_proba(&self, x: &[f64]) -> Result<ProbVector> {
        (**self).predict_proba(x)
    }
}

/// Predictor backed by a closure returning raw class probabilities.
pub struct FnPredictor<F> {
    n_features: usize,
    n_classes: usize,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(n_features: usize, n_classes: usize, f: F) -> Self {
        FnPredictor {
            n_features,
            n_classes,
            f,
        }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn predict_proba(&self, x: &[f64]) -> Result<ProbVector> {
        if x.len() != self.n_features {
            return Err(FexError::dim("predictor input", self.n_features, x.len()));
        }
        let probs = ProbVector::new((self.f)(x))?;
        if probs.len() != self.n_classes {
            return Err(FexError::dim("predictor output", self.n_classes, probs.len()));
        }
        Ok(probs)
    }
}

/// Wraps a predictor and counts how many times it is queried.
pub struct CountingPredictor<P> {
    inner: P,
    queries: AtomicU64,
}

impl<P: Predictor> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        CountingPredictor {
            inner,
            queries: AtomicU64::new(0),
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Predictor> Predictor for CountingPredictor<P> {
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }
    fn predict_proba(&self, x: &[f64]) -> Result<ProbVector> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.inner.predict_proba(x)
    }
}

/// Probability of class `k` for the masked input `m ⊙ x`.
pub fn masked_prob<P: Predictor + ?Sized>(p: &P, mask: &Mask, x: &[f64], k: usize) -> Result<f64> {
    if k >= p.n_classes() {
        return Err(FexError::ClassIndex {
            index: k,
            n_classes: p.n_classes(),
        });
    }
    let z = apply_mask_slice(mask, x)?;
    p.predict_proba(&z)?.get(k)
}

/// Masked prediction split evenly over the retained features,
/// `f_k(m ⊙ x) / K_m`. The empty mask scores 0 without querying `p`.
pub fn naive_score<P: Predictor + ?Sized>(p: &P, mask: &Mask, x: &[f64], k: usize) -> Result<f64> {
    if k >= p.n_classes() {
        return Err(FexError::ClassIndex {
            index: k,
            n_classes: p.n_classes(),
        });
    }
    if mask.len() != x.len() {
        return Err(FexError::dim("mask length", x.len(), mask.len()));
    }
    let kept = mask.retained_count();
    if kept == 0 {
        return Ok(0.0);
    }
    Ok(masked_prob(p, mask, x, k)? / kept as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n: usize) -> FnPredictor<impl Fn(&[f64]) -> Vec<f64> + Send + Sync> {
        FnPredictor::new(n, 1, |_| vec![1.0])
    }

    #[test]
    fn naive_score_examples() {
        // f_k(m ⊙ x) = 0.6 everywhere, K_m = 3
        let p = FnPredictor::new(4, 2, |_| vec![0.4, 0.6]);
        let s = naive_score(&p, &Mask::from_bits(&[1, 1, 0, 1]), &[1.0; 4], 1).unwrap();
        assert!((s - 0.2).abs() < 1e-15);

        assert_eq!(naive_score(&p, &Mask::zeros(4), &[1.0; 4], 1).unwrap(), 0.0);

        let c = constant(2);
        assert_eq!(naive_score(&c, &Mask::ones(2), &[3.0, 4.0], 0).unwrap(), 0.5);
    }

    #[test]
    fn empty_mask_does_not_query() {
        let p = CountingPredictor::new(constant(3));
        naive_score(&p, &Mask::zeros(3), &[1.0; 3], 0).unwrap();
        assert_eq!(p.queries(), 0);
        naive_score(&p, &Mask::ones(3), &[1.0; 3], 0).unwrap();
        assert_eq!(p.queries(), 1);
    }

    #[test]
    fn naive_score_rejects_bad_class() {
        let c = constant(2);
        let err = naive_score(&c, &Mask::ones(2), &[0.0, 0.0], 1).unwrap_err();
        assert_eq!(err.category(), "class-index");
    }

    #[test]
    fn score_is_bounded() {
        let p = FnPredictor::new(3, 2, |x| {
            let s = crate::nnet::sigmoid(x.iter().sum::<f64>());
            vec![1.0 - s, s]
        });
        let x = [0.4, -2.0, 1.5];
        for idx in 0..8u64 {
            let m = Mask::from_index(idx, 3);
            for k in 0..2 {
                let s = naive_score(&p, &m, &x, k).unwrap();
                assert!((0.0..=1.0).contains(&s));
            }
        }
    }

    #[test]
    fn fn_predictor_checks_dimensions() {
        let p = FnPredictor::new(2, 2, |_| vec![0.5, 0.5]);
        assert!(p.predict_proba(&[1.0]).is_err());
        let bad = FnPredictor::new(2, 3, |_| vec![0.5, 0.5]);
        assert!(bad.predict_proba(&[1.0, 2.0]).is_err());
    }
}
