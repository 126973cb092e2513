//! Domain types shared by every module: masks, samples, attributions and
//! probability vectors, plus the primitive mask operations.

use serde::{Deserialize, Serialize};

use crate::error::{FexError, Result};

/// Largest feature count for which exhaustive mask enumeration is allowed.
pub const MAX_ORACLE_FEATURES: usize = 20;

/// Tolerance on the unit sum of a [`ProbVector`].
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Binary feature-selection vector. Entry `i` refers to feature `i`;
/// `true` retains the feature, `false` removes it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(bits: Vec<bool>) -> Self {
        Mask { bits }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        Mask {
            bits: bits.iter().map(|&b| b != 0).collect(),
        }
    }

    pub fn ones(n: usize) -> Self {
        Mask { bits: vec![true; n] }
    }

    pub fn zeros(n: usize) -> Self {
        Mask {
            bits: vec![false; n],
        }
    }

    /// Mask whose bit `i` is bit `i` of `index` (feature 0 is the least
    /// significant bit).
    pub fn from_index(index: u64, n: usize) -> Self {
        debug_assert!(n <= 64);
        Mask {
            bits: (0..n).map(|i| (index >> i) & 1 == 1).collect(),
        }
    }

    /// Inverse of [`Mask::from_index`]; `None` when the mask is wider than 64.
    pub fn to_index(&self) -> Option<u64> {
        if self.bits.len() > 64 {
            return None;
        }
        Some(
            self.bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .fold(0u64, |acc, (i, _)| acc | (1 << i)),
        )
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    /// The mask as 0.0/1.0 coordinates.
    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn retained_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// An input together with its optional class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

impl Sample {
    pub fn new(features: Vec<f64>) -> Self {
        Sample {
            features,
            label: None,
        }
    }

    pub fn labeled(features: Vec<f64>, label: usize) -> Self {
        Sample {
            features,
            label: Some(label),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Non-negative per-feature importance vector.
///
/// A normalized attribution is an expectation of mask coordinates, so each
/// entry also lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    values: Vec<f64>,
    normalized: bool,
}

impl Attribution {
    pub fn new(values: Vec<f64>, normalized: bool) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(FexError::Numeric(format!("attribution entry {i}")));
            }
            if v < 0.0 || (normalized && v > 1.0) {
                return Err(FexError::InvalidArgument(format!(
                    "attribution entry {i} = {v} outside {}",
                    if normalized { "[0, 1]" } else { "[0, inf)" }
                )));
            }
        }
        Ok(Attribution { values, normalized })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Feature indices ordered by decreasing importance, ties broken by
    /// ascending index.
    pub fn ranking_desc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx
    }

    /// Feature indices ordered by increasing importance, ties broken by
    /// ascending index.
    pub fn ranking_asc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        idx
    }

    pub fn argmax(&self) -> Option<usize> {
        self.ranking_desc().first().copied()
    }
}

/// Class-probability vector: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, PROB_SUM_TOL)
    }

    pub fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(FexError::InvalidArgument(
                "probability vector is empty".into(),
            ));
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(FexError::Numeric("probability vector".into()));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(FexError::InvalidArgument(format!(
                "negative probability in {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(FexError::InvalidArgument(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(ProbVector { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, k: usize) -> Result<f64> {
        self.probs.get(k).copied().ok_or(FexError::ClassIndex {
            index: k,
            n_classes: self.probs.len(),
        })
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

/// Elementwise product `m ⊙ x`; removed positions become exactly `0.0`.
pub fn apply_mask(mask: &Mask, x: &Sample) -> Result<Sample> {
    Ok(Sample {
        features: apply_mask_slice(mask, &x.features)?,
        label: x.label,
    })
}

pub fn apply_mask_slice(mask: &Mask, x: &[f64]) -> Result<Vec<f64>> {
    if mask.len() != x.len() {
        return Err(FexError::dim("mask length", x.len(), mask.len()));
    }
    Ok(mask
        .bits()
        .iter()
        .zip(x)
        .map(|(&keep, &v)| if keep { v } else { 0.0 })
        .collect())
}

/// Number of retained features, `K_m`.
pub fn retained_count(mask: &Mask) -> usize {
    mask.retained_count()
}

fn check_oracle_width(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ORACLE_FEATURES {
        return Err(FexError::Capacity(format!(
            "exhaustive enumeration supports 1..={MAX_ORACLE_FEATURES} features, got {n}"
        )));
    }
    Ok(())
}

/// Iterator over the `2^n - 1` non-empty masks of width `n`, in ascending
/// integer order.
pub fn enumerate_nonzero_masks(n: usize) -> Result<NonzeroMasks> {
    check_oracle_width(n)?;
    Ok(NonzeroMasks {
        n,
        next: 1,
        end: 1u64 << n,
    })
}

/// See [`enumerate_nonzero_masks`].
#[derive(Debug, Clone)]
pub struct NonzeroMasks {
    n: usize,
    next: u64,
    end: u64,
}

impl Iterator for NonzeroMasks {
    type Item = Mask;

    fn next(&mut self) -> Option<Mask> {
        if self.next >= self.end {
            return None;
        }
        let m = Mask::from_index(self.next, self.n);
        self.next += 1;
        Some(m)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for NonzeroMasks {}

pub(crate) fn nonzero_mask_count(n: usize) -> Result<u64> {
    check_oracle_width(n)?;
    Ok((1u64 << n) - 1)
}
