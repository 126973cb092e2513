//! Exhaustive empirical attribution.
//!
//! Every non-empty mask `m` contributes its naive score
//! `c(m, x) = f_k(m ⊙ x) / K_m` to each feature it retains:
//!
//! ```text
//! phi_i = Σ_{m : m_i = 1} c(m, x)          A = Σ_m c(m, x)
//! p(m | x) = c(m, x) / A                   E_p[m] = phi / A
//! ```
//!
//! The empty mask is left out of every sum. Predictor queries run in
//! parallel; all sums are taken sequentially in ascending mask order, so the
//! result does not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FexError, Result};
use crate::predictor::Predictor;
use crate::rng;
use crate::types::{nonzero_mask_count, Attribution, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub phi: Attribution,
    /// `A(x)`
    pub normalization: f64,
    pub normalized_phi: Attribution,
    pub n_masks_evaluated: u64,
}

fn check_inputs<P: Predictor + ?Sized>(p: &P, x: &[f64], k: usize) -> Result<()> {
    if x.len() != p.n_features() {
        return Err(FexError::dim("sample features", p.n_features(), x.len()));
    }
    if k >= p.n_classes() {
        return Err(FexError::ClassIndex {
            index: k,
            n_classes: p.n_classes(),
        });
    }
    Ok(())
}

/// Naive scores of all non-empty masks; entry `j` belongs to the mask with
/// integer value `j + 1`.
pub fn mask_scores<P: Predictor + ?Sized>(p: &P, x: &[f64], k: usize) -> Result<Vec<f64>> {
    check_inputs(p, x, k)?;
    let n = x.len();
    let count = nonzero_mask_count(n)?;
    (1..=count)
        .into_par_iter()
        .map(|idx| {
            let z: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(i, &v)| if (idx >> i) & 1 == 1 { v } else { 0.0 })
                .collect();
            let prob = p.predict_proba(&z)?.get(k)?;
            Ok(prob / idx.count_ones() as f64)
        })
        .collect()
}

pub fn empirical_attribution<P: Predictor + ?Sized>(p: &P, x: &[f64], k: usize) -> Result<OracleReport> {
    let scores = mask_scores(p, x, k)?;
    let n = x.len();
    let mut phi = vec![0.0; n];
    let mut total = 0.0;
    for (j, &s) in scores.iter().enumerate() {
        let idx = j as u64 + 1;
        total += s;
        for (i, v) in phi.iter_mut().enumerate() {
            if (idx >> i) & 1 == 1 {
                *v += s;
            }
        }
    }
    if total.is_nan() || total <= 0.0 {
        return Err(FexError::Normalization(format!(
            "A(x) = {total}: class {k} has zero probability on every masked input"
        )));
    }
    let normalized: Vec<f64> = phi.iter().map(|v| (v / total).min(1.0)).collect();
    Ok(OracleReport {
        phi: Attribution::new(phi, false)?,
        normalization: total,
        normalized_phi: Attribution::new(normalized, true)?,
        n_masks_evaluated: scores.len() as u64,
    })
}

/// The distribution `p(m | x)` over non-empty masks.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskDistribution {
    n_features: usize,
    probs: Vec<f64>,
}

impl MaskDistribution {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Probability of `m`; 0 for the empty mask.
    pub fn prob(&self, m: &Mask) -> Result<f64> {
        if m.len() != self.n_features {
            return Err(FexError::dim("mask length", self.n_features, m.len()));
        }
        let idx = m.to_index().expect("oracle widths fit in 64 bits");
        Ok(if idx == 0 { 0.0 } else { self.probs[idx as usize - 1] })
    }

    /// `(mask, probability)` pairs in ascending mask order.
    pub fn iter(&self) -> impl Iterator<Item = (Mask, f64)> + '_ {
        let n = self.n_features;
        self.probs
            .iter()
            .enumerate()
            .map(move |(j, &p)| (Mask::from_index(j as u64 + 1, n), p))
    }

    /// `Σ_m p(m | x) · m`
    pub fn expectation(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.n_features];
        for (j, &p) in self.probs.iter().enumerate() {
            let idx = j as u64 + 1;
            for (i, v) in e.iter_mut().enumerate() {
                if (idx >> i) & 1 == 1 {
                    *v += p;
                }
            }
        }
        e
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }
}

pub fn exact_mask_distribution<P: Predictor + ?Sized>(p: &P, x: &[f64], k: usize) -> Result<MaskDistribution> {
    let scores = mask_scores(p, x, k)?;
    let total: f64 = scores.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(FexError::Normalization(format!("A(x) = {total}")));
    }
    Ok(MaskDistribution {
        n_features: x.len(),
        probs: scores.into_iter().map(|s| s / total).collect(),
    })
}

/// Uniform draw over the `2^n - 1` non-empty masks.
pub fn sample_nonzero_mask<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mask {
    loop {
        let m = Mask::new((0..n).map(|_| rng.gen::<bool>()).collect());
        if m.retained_count() > 0 {
            return m;
        }
    }
}

/// Unbiased estimate of `phi`:
/// `((2^N - 1) / S) · Σ_s m_s · c(m_s, x)` with `m_s` uniform over non-empty
/// masks. Issues exactly `n_samples` predictor queries.
pub fn monte_carlo_attribution<P: Predictor + ?Sized>(
    p: &P,
    x: &[f64],
    k: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Attribution> {
    check_inputs(p, x, k)?;
    if n_samples == 0 {
        return Err(FexError::InvalidArgument("n_samples must be at least 1".into()));
    }
    let n = x.len();
    if n > 1023 {
        return Err(FexError::Capacity(format!("2^{n} - 1 overflows f64")));
    }
    let mut r = rng::seeded(seed);
    let mut acc = vec![0.0; n];
    let mut z = vec![0.0; n];
    for _ in 0..n_samples {
        let m = sample_nonzero_mask(n, &mut r);
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = if m.get(i) { x[i] } else { 0.0 };
        }
        let score = p.predict_proba(&z)?.get(k)? / m.retained_count() as f64;
        for (i, a) in acc.iter_mut().enumerate() {
            if m.get(i) {
                *a += score;
            }
        }
    }
    let scale = (2f64.powi(n as i32) - 1.0) / n_samples as f64;
    Attribution::new(acc.into_iter().map(|a| a * scale).collect(), false)
}
