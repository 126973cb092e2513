//! Masking curves, ground-truth recovery, oracle agreement and inference
//! cost.

use std::collections::HashSet;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FexError, Result};
use crate::oracle::{monte_carlo_attribution, OracleReport};
use crate::predictor::{CountingPredictor, Predictor};
use crate::trainer::ExplainerModel;
use crate::types::{Attribution, Sample};

/// Which end of the importance ranking is masked first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskOrder {
    /// Most important first; its AUC is the positive AUC (lower is better).
    Desc,
    /// Least important first; its AUC is the negative AUC (higher is better).
    Asc,
}

/// Value tracked along the curve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMetric {
    /// `f_k` of the masked input.
    #[default]
    Probability,
    /// 1 if class `k` is still the argmax, else 0.
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
    pub auc: f64,
}

impl CurveReport {
    /// `fraction,score` rows under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,score\n");
        for (f, s) in self.fractions.iter().zip(&self.scores) {
            out.push_str(&format!("{f},{s}\n"));
        }
        out
    }
}

/// Pointwise mean of curves sharing one fraction grid.
pub fn average_curves(curves: &[CurveReport]) -> Result<CurveReport> {
    let first = curves
        .first()
        .ok_or_else(|| FexError::InvalidArgument("no curves to average".into()))?;
    let mut scores = vec![0.0; first.scores.len()];
    for c in curves {
        if c.fractions != first.fractions {
            return Err(FexError::dim("curve points", first.fractions.len(), c.fractions.len()));
        }
        scores.iter_mut().zip(&c.scores).for_each(|(a, s)| *a += s);
    }
    scores.iter_mut().for_each(|s| *s /= curves.len() as f64);
    let auc = trapezoid(&first.fractions, &scores);
    Ok(CurveReport { fractions: first.fractions.clone(), scores, auc })
}

/// Trapezoid rule over the given abscissae.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

pub fn deletion_curve<P: Predictor + ?Sized>(
    attr: &Attribution,
    p: &P,
    x: &[f64],
    k: usize,
    order: MaskOrder,
) -> Result<CurveReport> {
    deletion_curve_with(attr, p, x, k, order, CurveMetric::Probability)
}

/// Masks features one at a time in ranking order, recording the metric
/// after each of the `N+1` steps.
pub fn deletion_curve_with<P: Predictor + ?Sized>(
    attr: &Attribution,
    p: &P,
    x: &[f64],
    k: usize,
    order: MaskOrder,
    metric: CurveMetric,
) -> Result<CurveReport> {
    let n = x.len();
    if attr.len() != n {
        return Err(FexError::dim("attribution", n, attr.len()));
    }
    if n == 0 {
        return Err(FexError::InvalidArgument("cannot build a curve over zero features".into()));
    }
    let ranking = match order {
        MaskOrder::Desc => attr.ranking_desc(),
        MaskOrder::Asc => attr.ranking_asc(),
    };
    let mut masked = x.to_vec();
    let mut scores = Vec::with_capacity(n + 1);
    let measure = |input: &[f64]| -> Result<f64> {
        let probs = p.predict_proba(input)?;
        let pk = probs.get(k)?;
        Ok(match metric {
            CurveMetric::Probability => pk,
            CurveMetric::Accuracy => f64::from(u8::from(probs.argmax() == k)),
        })
    };
    scores.push(measure(&masked)?);
    for &i in &ranking {
        masked[i] = 0.0;
        scores.push(measure(&masked)?);
    }
    let fractions: Vec<f64> = (0..=n).map(|d| d as f64 / n as f64).collect();
    let auc = trapezoid(&fractions, &scores);
    Ok(CurveReport { fractions, scores, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub positive_auc: f64,
    pub negative_auc: f64,
    pub n_samples: usize,
}

/// Mean positive and negative AUC over `samples`, explaining each at its
/// predicted class.
pub fn batch_auc<P, F>(attr_source: F, p: &P, samples: &[Sample]) -> Result<AucSummary>
where
    P: Predictor + ?Sized,
    F: Fn(usize, &Sample, usize) -> Result<Attribution> + Sync,
{
    if samples.is_empty() {
        return Err(FexError::InvalidArgument("empty evaluation set".into()));
    }
    let per: Vec<(f64, f64)> = samples
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            let k = p.predict_class(&s.features)?;
            let attr = attr_source(j, s, k)?;
            let pos = deletion_curve(&attr, p, &s.features, k, MaskOrder::Desc)?.auc;
            let neg = deletion_curve(&attr, p, &s.features, k, MaskOrder::Asc)?.auc;
            Ok((pos, neg))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    Ok(AucSummary {
        positive_auc: per.iter().map(|a| a.0).sum::<f64>() / n,
        negative_auc: per.iter().map(|a| a.1).sum::<f64>() / n,
        n_samples: per.len(),
    })
}

/// i.i.d. uniform scores, the random-attribution baseline.
pub fn random_attribution<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Attribution {
    Attribution::new((0..n).map(|_| rng.gen::<f64>()).collect(), true).expect("uniform draws lie in [0, 1)")
}

/// Fraction of the top-`k` ranked features that are in `true_features`.
pub fn recovery_precision(attr: &Attribution, true_features: &[usize], k: usize) -> Result<f64> {
    if k == 0 || k > attr.len() {
        return Err(FexError::InvalidArgument(format!(
            "top-k with k = {k} over {} features",
            attr.len()
        )));
    }
    let truth: HashSet<usize> = true_features.iter().copied().collect();
    let hits = attr.ranking_desc().iter().take(k).filter(|i| truth.contains(i)).count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub pearson: f64,
    pub spearman: f64,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(FexError::dim("correlation input", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(FexError::Correlation("need at least two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(FexError::Correlation("zero variance input".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Correlation of `attr` with the normalized oracle attribution.
pub fn oracle_agreement(attr: &Attribution, report: &OracleReport) -> Result<Agreement> {
    let truth = report.normalized_phi.values();
    Ok(Agreement {
        pearson: pearson(attr.values(), truth)?,
        spearman: spearman(attr.values(), truth)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceBenchmark {
    pub n_explanations: usize,
    pub mc_samples: usize,
    pub explainer_secs_per_explanation: f64,
    pub mc_secs_per_explanation: f64,
    pub speedup: f64,
    pub explainer_queries_per_explanation: f64,
    pub mc_queries_per_explanation: f64,
}

/// Times `explain` against Monte Carlo with `mc_samples` queries on the
/// same inputs, counting predictor calls on both paths.
pub fn benchmark_inference<P: Predictor>(
    explainer: &ExplainerModel,
    p: &P,
    samples: &[Sample],
    mc_samples: usize,
    seed: u64,
) -> Result<InferenceBenchmark> {
    if samples.is_empty() {
        return Err(FexError::InvalidArgument("empty benchmark set".into()));
    }
    let counted = CountingPredictor::new(p);
    let classes = samples
        .iter()
        .map(|s| counted.predict_class(&s.features))
        .collect::<Result<Vec<_>>>()?;

    // warm-up
    for (s, &k) in samples.iter().zip(&classes).take(8) {
        explainer.explain(&s.features, k)?;
        monte_carlo_attribution(&counted, &s.features, k, mc_samples, seed)?;
    }

    counted.reset();
    let start = Instant::now();
    for (s, &k) in samples.iter().zip(&classes) {
        std::hint::black_box(explainer.explain(&s.features, k)?);
    }
    let explainer_secs = start.elapsed().as_secs_f64();
    let explainer_queries = counted.queries();

    counted.reset();
    let start = Instant::now();
    for (j, (s, &k)) in samples.iter().zip(&classes).enumerate() {
        std::hint::black_box(monte_carlo_attribution(&counted, &s.features, k, mc_samples, seed ^ j as u64)?);
    }
    let mc_secs = start.elapsed().as_secs_f64();
    let mc_queries = counted.queries();

    let n = samples.len() as f64;
    Ok(InferenceBenchmark {
        n_explanations: samples.len(),
        mc_samples,
        explainer_secs_per_explanation: explainer_secs / n,
        mc_secs_per_explanation: mc_secs / n,
        speedup: mc_secs / explainer_secs.max(1e-12),
        explainer_queries_per_explanation: explainer_queries as f64 / n,
        mc_queries_per_explanation: mc_queries as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::empirical_attribution;
    use crate::predictor::FnPredictor;
    use crate::rng;
    use proptest::prelude::{prop, prop_assert, proptest};

    fn attr(v: &[f64]) -> Attribution {
        Attribution::new(v.to_vec(), false).unwrap()
    }

    #[test]
    fn constant_predictor_flat_curve() {
        let p = FnPredictor::new(4, 2, |_| vec![0.3, 0.7]);
        let a = attr(&[0.1, 0.9, 0.5, 0.2]);
        let x = [1.0, 2.0, 3.0, 4.0];
        for order in [MaskOrder::Desc, MaskOrder::Asc] {
            let c = deletion_curve(&a, &p, &x, 1, order).unwrap();
            assert!(c.scores.iter().all(|&s| s == 0.7));
            assert!((c.auc - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn full_fraction_uses_zero_input() {
        let p = FnPredictor::new(3, 2, |x: &[f64]| {
            let s = x.iter().sum::<f64>().min(1.0);
            vec![1.0 - s, s]
        });
        let c = deletion_curve(&attr(&[0.3, 0.2, 0.1]), &p, &[0.2, 0.3, 0.1], 1, MaskOrder::Desc).unwrap();
        assert_eq!(c.fractions.first(), Some(&0.0));
        assert_eq!(c.fractions.last(), Some(&1.0));
        assert!(c.fractions.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*c.scores.last().unwrap(), 0.0);
        assert_eq!(c.scores.len(), 4);
    }

    #[test]
    fn desc_beats_asc_for_the_relevant_feature() {
        // f_1 depends only on feature 2
        let p = FnPredictor::new(4, 2, |x: &[f64]| {
            let z = 1.0 / (1.0 + (-(8.0 * (x[2] - 0.5))).exp());
            vec![1.0 - z, z]
        });
        let x = [0.9, 0.8, 0.95, 0.7];
        let report = empirical_attribution(&p, &x, 1).unwrap();
        let desc = deletion_curve(&report.normalized_phi, &p, &x, 1, MaskOrder::Desc).unwrap();
        let asc = deletion_curve(&report.normalized_phi, &p, &x, 1, MaskOrder::Asc).unwrap();
        assert!(desc.auc < asc.auc, "{} vs {}", desc.auc, asc.auc);
    }

    #[test]
    fn random_attribution_symmetric_predictor() {
        // permutation-symmetric predictor: f depends on the feature sum only
        let p = FnPredictor::new(8, 2, |x: &[f64]| {
            let z = 1.0 / (1.0 + (-(x.iter().sum::<f64>() - 2.0)).exp());
            vec![1.0 - z, z]
        });
        let mut r = rng::seeded(4);
        let samples: Vec<Sample> = (0..500)
            .map(|_| Sample::new((0..8).map(|_| r.gen::<f64>()).collect()))
            .collect();
        let summary = batch_auc(
            |j, s, _| Ok(random_attribution(s.len(), &mut rng::substream(99, j as u64))),
            &p,
            &samples,
        )
        .unwrap();
        assert!((summary.positive_auc - summary.negative_auc).abs() <= 0.03, "{summary:?}");
    }

    #[test]
    fn single_sample_batch_equals_curve() {
        let p = FnPredictor::new(3, 2, |x: &[f64]| {
            let z = (x[0] * 0.5 + x[1] * 0.3).clamp(0.0, 1.0);
            vec![1.0 - z, z]
        });
        let s = Sample::new(vec![0.9, 0.8, 0.1]);
        let a = attr(&[0.2, 0.5, 0.1]);
        let k = p.predict_class(&s.features).unwrap();
        let summary = batch_auc(|_, _, _| Ok(a.clone()), &p, std::slice::from_ref(&s)).unwrap();
        let pos = deletion_curve(&a, &p, &s.features, k, MaskOrder::Desc).unwrap().auc;
        let neg = deletion_curve(&a, &p, &s.features, k, MaskOrder::Asc).unwrap().auc;
        assert_eq!(summary.positive_auc, pos);
        assert_eq!(summary.negative_auc, neg);
    }

    #[test]
    fn recovery_examples() {
        let a = attr(&[0.1, 0.9, 0.3]);
        assert_eq!(recovery_precision(&a, &[1], 1).unwrap(), 1.0);
        assert_eq!(recovery_precision(&a, &[0], 1).unwrap(), 0.0);
        assert_eq!(recovery_precision(&a, &[1, 2], 2).unwrap(), 1.0);
        assert!(recovery_precision(&a, &[0], 4).is_err());
    }

    #[test]
    fn random_recovery_is_one_in_n() {
        let mut r = rng::seeded(12);
        let total: f64 = (0..1000)
            .map(|_| recovery_precision(&random_attribution(10, &mut r), &[3], 1).unwrap())
            .sum();
        let mean = total / 1000.0;
        assert!((mean - 0.1).abs() <= 0.03, "{mean}");
    }

    #[test]
    fn agreement_examples() {
        let p = FnPredictor::new(4, 2, |x: &[f64]| {
            let z = (0.5 + 0.1 * x[0]) * (0.5 + 0.4 * x[1] - 0.1 * x[3]) + 0.05 * x[2];
            vec![z, 1.0 - z]
        });
        let report = empirical_attribution(&p, &[0.9, 0.4, 0.2, 0.6], 0).unwrap();
        let self_agree = oracle_agreement(&report.normalized_phi, &report).unwrap();
        assert!((self_agree.pearson - 1.0).abs() < 1e-12);
        assert!((self_agree.spearman - 1.0).abs() < 1e-12);

        let phi = report.normalized_phi.values();
        // distinct values required for the reversal to be exact
        let mut sorted = phi.to_vec();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted.windows(2).all(|w| w[0] < w[1]));
        let reversed = attr(&phi.iter().map(|v| 1.0 - v).collect::<Vec<_>>());
        assert!((oracle_agreement(&reversed, &report).unwrap().spearman + 1.0).abs() < 1e-12);

        let flat = attr(&[0.5; 4]);
        assert!(matches!(oracle_agreement(&flat, &report), Err(FexError::Correlation(_))));
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn linear_curve_trapezoid() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.8 + (0.2 - 0.8) * x).collect();
        assert!((trapezoid(&xs, &ys) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn averaged_curve_auc_is_mean_auc() {
        let a = CurveReport { fractions: vec![0.0, 0.5, 1.0], scores: vec![1.0, 0.5, 0.0], auc: 0.5 };
        let b = CurveReport { fractions: vec![0.0, 0.5, 1.0], scores: vec![0.6, 0.6, 0.2], auc: 0.5 };
        let m = average_curves(&[a, b]).unwrap();
        assert_eq!(m.scores, vec![0.8, 0.55, 0.1]);
        assert!((m.auc - 0.5).abs() < 1e-12);
        assert!(average_curves(&[]).is_err());
    }

    #[test]
    fn curve_csv_has_header_and_rows() {
        let c = CurveReport { fractions: vec![0.0, 1.0], scores: vec![0.5, 0.25], auc: 0.375 };
        assert_eq!(c.to_csv(), "fraction,score\n0,0.5\n1,0.25\n");
    }

    #[test]
    fn benchmark_counts_queries() {
        let p = FnPredictor::new(4, 2, |x: &[f64]| {
            let z = x[0].clamp(0.0, 1.0);
            vec![1.0 - z, z]
        });
        let g = ExplainerModel::init(4, 2, &[8], 0).unwrap();
        let samples: Vec<Sample> = (0..20).map(|i| Sample::new(vec![i as f64 / 20.0; 4])).collect();
        let b = benchmark_inference(&g, &p, &samples, 100, 1).unwrap();
        assert_eq!(b.explainer_queries_per_explanation, 0.0);
        assert_eq!(b.mc_queries_per_explanation, 100.0);
    }

    #[test]
    fn accuracy_metric_is_binary() {
        let p = FnPredictor::new(2, 2, |x: &[f64]| {
            let z = x[0].clamp(0.0, 1.0);
            vec![1.0 - z, z]
        });
        let c = deletion_curve_with(&attr(&[0.9, 0.1]), &p, &[0.8, 0.3], 1, MaskOrder::Desc, CurveMetric::Accuracy)
            .unwrap();
        assert_eq!(c.scores, vec![1.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn desc_curve_permutation_equivariant(
            x in prop::collection::vec(0.0f64..1.0, 5),
            a in prop::collection::vec(0.0f64..1.0, 5),
            seed in 0u64..1000,
        ) {
            let w = [0.7, -0.4, 1.1, 0.2, -0.9];
            let p = FnPredictor::new(5, 2, move |x: &[f64]| {
                let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
                let z = 1.0 / (1.0 + (-s).exp());
                vec![1.0 - z, z]
            });
            let mut perm: Vec<usize> = (0..5).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng::seeded(seed));
            let wp: Vec<f64> = perm.iter().map(|&j| w[j]).collect();
            let q = FnPredictor::new(5, 2, move |x: &[f64]| {
                let s: f64 = x.iter().zip(&wp).map(|(a, b)| a * b).sum();
                let z = 1.0 / (1.0 + (-s).exp());
                vec![1.0 - z, z]
            });
            let xp: Vec<f64> = perm.iter().map(|&j| x[j]).collect();
            let ap: Vec<f64> = perm.iter().map(|&j| a[j]).collect();
            let c1 = deletion_curve(&attr(&a), &p, &x, 1, MaskOrder::Desc).unwrap();
            let c2 = deletion_curve(&attr(&ap), &q, &xp, 1, MaskOrder::Desc).unwrap();
            // ties in `a` could reorder; they have probability zero here
            prop_assert!((c1.auc - c2.auc).abs() < 1e-12);
        }
    }
}
