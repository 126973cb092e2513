//! Policy-gradient training of the amortized explainer.
//!
//! For every training input `x` the explained class is `y = argmax_k f_k(x)`
//! and the explainer head `g_y(x)` parameterizes `q = Bern(λ)`. A rollout
//! draws `T` i.i.d. masks from `q`, scores each with `c(m, x)` and records
//! its log-probability under the collecting snapshot. The loss minimized
//! per batch is
//!
//! ```text
//! L = -S - λ_en·H + λ_v·L_v + λ_kl·L_kl
//! S    = mean_{j,t} min(r·A, clip(r, 1-ε, 1+ε)·A),  r = q(m)/q_behavior(m),  A = (c - v_y(x))/T
//! H    = mean_j H(Bern(g_y(x_j)))
//! L_v  = mean_j Σ_t (c_t - v_y(x_j))² / T
//! L_kl = mean_j KL(softmax_k(mean_i ln g_{k,i}(x_j)) ‖ f(x_j))
//! ```
//!
//! Only head `y` sees the surrogate, entropy and value terms of a sample;
//! every head sees the KL term.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FexError, Result};
use crate::nnet::{adam_step, Activation, AdamState, GradientBundle, MlpNetwork};
use crate::policy::{clamp_prob, is_unclamped, BernoulliPolicy};
use crate::predictor::{naive_score, Predictor};
use crate::rng;
use crate::types::{Attribution, Mask, ProbVector, Sample};

/// Floor applied to predictor probabilities inside the KL ratio.
pub const KL_PROB_FLOOR: f64 = 1e-9;

fn layer_sizes(n_in: usize, hidden: &[usize], n_out: usize) -> Vec<usize> {
    let mut sizes = vec![n_in];
    sizes.extend_from_slice(hidden);
    sizes.push(n_out);
    sizes
}

/// Explainer network `g`: `K` sigmoid heads of width `N`, laid out
/// head-major in a single `K·N` output.
#[derive(Debug)]
pub struct ExplainerModel {
    net: MlpNetwork,
    n_features: usize,
    n_classes: usize,
    forwards: AtomicU64,
}

impl Clone for ExplainerModel {
    fn clone(&self) -> Self {
        ExplainerModel {
            net: self.net.clone(),
            n_features: self.n_features,
            n_classes: self.n_classes,
            forwards: AtomicU64::new(0),
        }
    }
}

impl PartialEq for ExplainerModel {
    fn eq(&self, other: &Self) -> bool {
        self.net == other.net && self.n_classes == other.n_classes
    }
}

impl ExplainerModel {
    pub fn init(n_features: usize, n_classes: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let sizes = layer_sizes(n_features, hidden, n_features * n_classes);
        let net = MlpNetwork::xavier(&sizes, Activation::Sigmoid, &mut rng::substream(seed, 0xE1))?;
        Self::from_network(net, n_classes)
    }

    pub fn from_network(net: MlpNetwork, n_classes: usize) -> Result<Self> {
        if net.output_activation() != Activation::Sigmoid {
            return Err(FexError::InvalidArgument("explainer heads must be sigmoid".into()));
        }
        let n_features = net.input_size();
        if n_classes == 0 || net.output_size() != n_features * n_classes {
            return Err(FexError::dim("explainer output", n_features * n_classes, net.output_size()));
        }
        Ok(ExplainerModel {
            net,
            n_features,
            n_classes,
            forwards: AtomicU64::new(0),
        })
    }

    pub fn network(&self) -> &MlpNetwork {
        &self.net
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Number of forward passes run through `g` since construction.
    pub fn forward_count(&self) -> u64 {
        self.forwards.load(Ordering::Relaxed)
    }

    fn check_class(&self, k: usize) -> Result<()> {
        if k >= self.n_classes {
            return Err(FexError::ClassIndex {
                index: k,
                n_classes: self.n_classes,
            });
        }
        Ok(())
    }

    /// Raw sigmoid outputs of every head, before clamping.
    pub fn raw_heads(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forwards.fetch_add(1, Ordering::Relaxed);
        self.net.forward(x)
    }

    /// Clamped means of every head.
    pub fn heads(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let raw = self.raw_heads(x)?;
        Ok(raw
            .chunks(self.n_features)
            .map(|h| h.iter().copied().map(clamp_prob).collect())
            .collect())
    }

    pub fn policy(&self, x: &[f64], k: usize) -> Result<BernoulliPolicy> {
        self.check_class(k)?;
        let raw = self.raw_heads(x)?;
        BernoulliPolicy::new(raw[k * self.n_features..(k + 1) * self.n_features].to_vec())
    }

    /// The attribution for class `k`: one forward pass of `g`, no predictor.
    pub fn explain(&self, x: &[f64], k: usize) -> Result<Attribution> {
        Ok(self.policy(x, k)?.mean())
    }
}

/// Value network `v`: one identity output per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueModel {
    net: MlpNetwork,
}

impl ValueModel {
    pub fn init(n_features: usize, n_classes: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let sizes = layer_sizes(n_features, hidden, n_classes);
        Self::from_network(MlpNetwork::xavier(&sizes, Activation::Identity, &mut rng::substream(seed, 0x7A))?)
    }

    pub fn from_network(net: MlpNetwork) -> Result<Self> {
        if net.output_activation() != Activation::Identity {
            return Err(FexError::InvalidArgument("value outputs must be identity".into()));
        }
        Ok(ValueModel { net })
    }

    pub fn network(&self) -> &MlpNetwork {
        &self.net
    }

    pub fn n_classes(&self) -> usize {
        self.net.output_size()
    }

    pub fn value(&self, x: &[f64], k: usize) -> Result<f64> {
        let out = self.net.forward(x)?;
        out.get(k).copied().ok_or(FexError::ClassIndex {
            index: k,
            n_classes: out.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Masks per trajectory, `T`.
    pub trajectory_len: usize,
    pub clip_eps: f64,
    pub lambda_en: f64,
    pub lambda_v: f64,
    pub lambda_kl: f64,
    /// Gradient updates per collected rollout; 1 recollects after every update.
    pub inner_updates: usize,
    /// Rollouts collected per batch.
    pub rollouts_per_batch: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Hidden layer widths shared by the explainer and value networks.
    pub hidden: Vec<usize>,
    /// Standardize advantages within each rollout.
    pub normalize_advantages: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            trajectory_len: 5,
            clip_eps: 0.2,
            lambda_en: 1e-5,
            lambda_v: 0.5,
            lambda_kl: 1.0,
            inner_updates: 4,
            rollouts_per_batch: 1,
            batch_size: 32,
            epochs: 10,
            lr: 1e-3,
            seed: 0,
            hidden: vec![64],
            normalize_advantages: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FexError::InvalidArgument(m.to_string()));
        if self.trajectory_len == 0 {
            return bad("trajectory_len must be at least 1");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if [self.lambda_en, self.lambda_v, self.lambda_kl]
            .iter()
            .any(|&l| l < 0.0 || !l.is_finite())
        {
            return bad("loss coefficients must be finite and non-negative");
        }
        if self.inner_updates == 0 || self.rollouts_per_batch == 0 || self.batch_size == 0 {
            return bad("inner_updates, rollouts_per_batch and batch_size must be positive");
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub masks: Vec<Mask>,
    pub scores: Vec<f64>,
    pub behavior_log_probs: Vec<f64>,
    pub sample_index: usize,
    pub class_index: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// Mean score over the trajectory, `R(τ) = Σ_t c_t / T`.
pub fn trajectory_return(traj: &Trajectory) -> f64 {
    if traj.scores.is_empty() {
        return 0.0;
    }
    traj.scores.iter().sum::<f64>() / traj.scores.len() as f64
}

/// `(c - v) / T`
pub fn advantage(score: f64, value: f64, t: usize) -> f64 {
    (score - value) / t as f64
}

/// One item of a training batch: which sample, which class to explain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchItem {
    pub sample_index: usize,
    pub class_index: usize,
}

/// Rolls out `t` masks per batch item under the current explainer. Item
/// randomness comes from stream `sample_index` of `seed`, so the result does
/// not depend on batch composition or thread count.
pub fn collect_trajectories<P: Predictor + ?Sized>(
    g: &ExplainerModel,
    p: &P,
    samples: &[Sample],
    batch: &[BatchItem],
    t: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if t == 0 {
        return Err(FexError::InvalidArgument("trajectory length must be at least 1".into()));
    }
    batch
        .par_iter()
        .map(|item| {
            let x = &samples
                .get(item.sample_index)
                .ok_or_else(|| FexError::InvalidArgument(format!("no sample {}", item.sample_index)))?
                .features;
            let pol = g.policy(x, item.class_index)?;
            let mut r = rng::substream(seed, item.sample_index as u64);
            let masks = pol.sample_masks_with(t, &mut r);
            let scores = masks
                .iter()
                .map(|m| naive_score(p, m, x, item.class_index))
                .collect::<Result<Vec<f64>>>()?;
            let behavior_log_probs = masks.iter().map(|m| pol.log_prob(m)).collect::<Result<Vec<f64>>>()?;
            Ok(Trajectory {
                masks,
                scores,
                behavior_log_probs,
                sample_index: item.sample_index,
                class_index: item.class_index,
            })
        })
        .collect()
}

/// Per-step advantages `(c_t - v_y(x)) / T` under the value network.
pub fn compute_advantages(v: &ValueModel, samples: &[Sample], trajs: &[Trajectory]) -> Result<Vec<Vec<f64>>> {
    trajs
        .iter()
        .map(|tr| {
            let value = v.value(&samples[tr.sample_index].features, tr.class_index)?;
            let t = tr.len();
            Ok(tr.scores.iter().map(|&c| advantage(c, value, t)).collect())
        })
        .collect()
}

/// Rescales advantages of a rollout to zero mean and unit variance.
pub fn standardize_advantages(adv: &mut [Vec<f64>]) {
    let all: Vec<f64> = adv.iter().flatten().copied().collect();
    if all.len() < 2 {
        return;
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / all.len() as f64;
    let sd = var.sqrt().max(1e-12);
    adv.iter_mut().flatten().for_each(|a| *a = (*a - mean) / sd);
}

/// `L_v` and its gradient with respect to the value network.
pub fn value_loss_grad(v: &ValueModel, samples: &[Sample], trajs: &[Trajectory]) -> Result<(f64, GradientBundle)> {
    let mut grad = GradientBundle::zeros_like(&v.net);
    let mut loss = 0.0;
    let b = trajs.len().max(1) as f64;
    for tr in trajs {
        let x = &samples[tr.sample_index].features;
        let out = v.net.forward(x)?;
        let value = *out.get(tr.class_index).ok_or(FexError::ClassIndex {
            index: tr.class_index,
            n_classes: out.len(),
        })?;
        let t = tr.len() as f64;
        let mut d_value = 0.0;
        for &c in &tr.scores {
            loss += (c - value).powi(2) / t / b;
            d_value += 2.0 * (value - c) / t / b;
        }
        let mut upstream = vec![0.0; out.len()];
        upstream[tr.class_index] = d_value;
        grad.add_scaled(&v.net.backward(x, &upstream)?, 1.0);
    }
    Ok((loss, grad))
}

pub fn value_loss(v: &ValueModel, samples: &[Sample], trajs: &[Trajectory]) -> Result<f64> {
    Ok(value_loss_grad(v, samples, trajs)?.0)
}

/// Divergence between `softmax_k(mean_i ln λ_{k,i})` and `f`, with the
/// derivative with respect to each clamped head mean.
pub fn kl_from_heads(heads: &[Vec<f64>], f: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
    if heads.len() != f.len() {
        return Err(FexError::dim("KL classes", f.len(), heads.len()));
    }
    let s: Vec<f64> = heads
        .iter()
        .map(|h| h.iter().map(|l| l.ln()).sum::<f64>() / h.len() as f64)
        .collect();
    let p_hat = crate::nnet::softmax(&s);
    let log_ratio: Vec<f64> = p_hat
        .iter()
        .zip(f)
        .map(|(&p, &fk)| p.ln() - fk.max(KL_PROB_FLOOR).ln())
        .collect();
    let kl: f64 = p_hat
        .iter()
        .zip(&log_ratio)
        .map(|(&p, &lr)| if p > 0.0 { p * lr } else { 0.0 })
        .sum();
    let d_lambda = heads
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let d_s = p_hat[k] * (log_ratio[k] - kl);
            let n = h.len() as f64;
            h.iter().map(|&l| d_s / (n * l)).collect()
        })
        .collect();
    Ok((kl, d_lambda))
}

fn check_probs(g: &ExplainerModel, f: &ProbVector) -> Result<()> {
    if f.len() != g.n_classes {
        return Err(FexError::dim("predictor classes", g.n_classes, f.len()));
    }
    Ok(())
}

pub fn kl_regularizer(g: &ExplainerModel, f_probs: &ProbVector, x: &[f64]) -> Result<f64> {
    check_probs(g, f_probs)?;
    Ok(kl_from_heads(&g.heads(x)?, f_probs.probs())?.0)
}

/// `L_kl` for one input and its gradient with respect to the explainer.
pub fn kl_regularizer_grad(g: &ExplainerModel, f_probs: &ProbVector, x: &[f64]) -> Result<(f64, GradientBundle)> {
    check_probs(g, f_probs)?;
    let trace = g.net.forward_trace(x)?;
    let raw = trace.output().to_vec();
    let heads: Vec<Vec<f64>> = raw
        .chunks(g.n_features)
        .map(|h| h.iter().copied().map(clamp_prob).collect())
        .collect();
    let (kl, d_lambda) = kl_from_heads(&heads, f_probs.probs())?;
    let upstream = mask_clamped(&raw, d_lambda.into_iter().flatten());
    Ok((kl, g.net.backward_trace(&trace, &upstream)?))
}

fn mask_clamped(raw: &[f64], d: impl Iterator<Item = f64>) -> Vec<f64> {
    raw.iter()
        .zip(d)
        .map(|(&r, d)| if is_unclamped(r) { d } else { 0.0 })
        .collect()
}

/// Value and gradient of the clipped surrogate.
#[derive(Debug, Clone)]
pub struct SurrogateEval {
    pub value: f64,
    pub grad: GradientBundle,
    /// Largest probability ratio `r_t` seen.
    pub max_ratio: f64,
}

/// `min(r·A, clip(r, 1-ε, 1+ε)·A)` and its derivative with respect to
/// `ln q` (zero where the clipped branch is selected).
pub fn clipped_term(ratio: f64, adv: f64, clip_eps: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

/// Sum over one trajectory of the clipped terms, with `∂/∂λ_y` of that sum.
fn surrogate_head(
    raw_head: &[f64],
    traj: &Trajectory,
    adv: &[f64],
    clip_eps: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let lambda: Vec<f64> = raw_head.iter().copied().map(clamp_prob).collect();
    let pol = BernoulliPolicy::new(lambda.clone())?;
    let mut total = 0.0;
    let mut d_lambda = vec![0.0; lambda.len()];
    let mut max_ratio: f64 = 0.0;
    for ((m, &behavior), &a) in traj.masks.iter().zip(&traj.behavior_log_probs).zip(adv) {
        let ratio = (pol.log_prob(m)? - behavior).exp();
        if !ratio.is_finite() {
            return Err(FexError::Numeric("PPO probability ratio".into()));
        }
        max_ratio = max_ratio.max(ratio);
        let (term, d_logq) = clipped_term(ratio, a, clip_eps);
        total += term;
        if d_logq != 0.0 {
            for ((d, &keep), &l) in d_lambda.iter_mut().zip(m.bits()).zip(&lambda) {
                *d += d_logq * if keep { 1.0 / l } else { -1.0 / (1.0 - l) };
            }
        }
    }
    Ok((total, d_lambda, max_ratio))
}

/// Clipped surrogate `S`, averaged over trajectories and steps, with its
/// gradient with respect to the explainer. `S` is to be maximized.
pub fn ppo_surrogate(
    g: &ExplainerModel,
    samples: &[Sample],
    trajs: &[Trajectory],
    advantages: &[Vec<f64>],
    clip_eps: f64,
) -> Result<SurrogateEval> {
    let steps: usize = trajs.iter().map(Trajectory::len).sum();
    let scale = 1.0 / steps.max(1) as f64;
    let mut grad = GradientBundle::zeros_like(&g.net);
    let mut value = 0.0;
    let mut max_ratio: f64 = 0.0;
    for (tr, adv) in trajs.iter().zip(advantages) {
        let x = &samples[tr.sample_index].features;
        let trace = g.net.forward_trace(x)?;
        let raw = trace.output();
        let n = g.n_features;
        let head = &raw[tr.class_index * n..(tr.class_index + 1) * n];
        let (sum, d_lambda, r) = surrogate_head(head, tr, adv, clip_eps)?;
        value += sum * scale;
        max_ratio = max_ratio.max(r);
        let mut upstream = vec![0.0; raw.len()];
        for (i, d) in d_lambda.into_iter().enumerate() {
            if is_unclamped(head[i]) {
                upstream[tr.class_index * n + i] = d * scale;
            }
        }
        grad.add_scaled(&g.net.backward_trace(&trace, &upstream)?, 1.0);
    }
    Ok(SurrogateEval { value, grad, max_ratio })
}

/// Reference estimator `mean_{j,t} A_t ∇ ln q(m_t)` of the plain policy
/// gradient, built from [`BernoulliPolicy::log_prob_grad`].
pub fn vanilla_policy_gradient(
    g: &ExplainerModel,
    samples: &[Sample],
    trajs: &[Trajectory],
    advantages: &[Vec<f64>],
) -> Result<GradientBundle> {
    let steps: usize = trajs.iter().map(Trajectory::len).sum();
    let mut grad = GradientBundle::zeros_like(&g.net);
    for (tr, adv) in trajs.iter().zip(advantages) {
        let x = &samples[tr.sample_index].features;
        let raw = g.net.forward(x)?;
        let n = g.n_features;
        let k = tr.class_index;
        let pol = BernoulliPolicy::new(raw[k * n..(k + 1) * n].to_vec())?;
        let mut d_lambda = vec![0.0; n];
        for (m, &a) in tr.masks.iter().zip(adv) {
            for (d, s) in d_lambda.iter_mut().zip(pol.log_prob_grad(m)?) {
                *d += a * s;
            }
        }
        let mut upstream = vec![0.0; raw.len()];
        for i in 0..n {
            if is_unclamped(raw[k * n + i]) {
                upstream[k * n + i] = d_lambda[i] / steps as f64;
            }
        }
        grad.add_scaled(&g.net.backward(x, &upstream)?, 1.0);
    }
    Ok(grad)
}

/// Scalar loss components of one batch evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub surrogate: f64,
    pub entropy: f64,
    pub value_loss: f64,
    pub kl: f64,
}

/// `L = -S - λ_en·H + λ_v·L_v + λ_kl·L_kl`
pub fn total_loss(c: &LossComponents, cfg: &TrainingConfig) -> f64 {
    -c.surrogate - cfg.lambda_en * c.entropy + cfg.lambda_v * c.value_loss + cfg.lambda_kl * c.kl
}

/// Everything needed to evaluate the loss on a collected rollout.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectories: Vec<Trajectory>,
    pub advantages: Vec<Vec<f64>>,
    /// Predictor probabilities for each trajectory's sample.
    pub f_probs: Vec<ProbVector>,
}

#[derive(Debug, Clone)]
pub struct BatchEval {
    pub components: LossComponents,
    pub total: f64,
    pub grad_explainer: GradientBundle,
    pub grad_value: GradientBundle,
    pub max_ratio: f64,
}

struct ItemEval {
    surrogate: f64,
    entropy: f64,
    kl: f64,
    max_ratio: f64,
    grad: GradientBundle,
}

/// Total loss of a rollout and its gradients for both networks.
pub fn evaluate_batch(
    g: &ExplainerModel,
    v: &ValueModel,
    samples: &[Sample],
    rollout: &Rollout,
    cfg: &TrainingConfig,
) -> Result<BatchEval> {
    let trajs = &rollout.trajectories;
    let b = trajs.len().max(1) as f64;
    let steps: usize = trajs.iter().map(Trajectory::len).sum();
    let step_scale = 1.0 / steps.max(1) as f64;
    let n = g.n_features;

    let items: Vec<ItemEval> = trajs
        .par_iter()
        .zip(&rollout.advantages)
        .zip(&rollout.f_probs)
        .map(|((tr, adv), f)| {
            let x = &samples[tr.sample_index].features;
            let trace = g.net.forward_trace(x)?;
            let raw = trace.output();
            let k = tr.class_index;
            let head = &raw[k * n..(k + 1) * n];

            let (sur, d_sur, max_ratio) = surrogate_head(head, tr, adv, cfg.clip_eps)?;
            let pol = BernoulliPolicy::new(head.to_vec())?;
            let entropy = pol.entropy();
            let d_ent = pol.entropy_grad();

            let heads: Vec<Vec<f64>> = raw
                .chunks(n)
                .map(|h| h.iter().copied().map(clamp_prob).collect())
                .collect();
            let (kl, d_kl) = kl_from_heads(&heads, f.probs())?;

            // d L / d λ for every head coordinate
            let mut d_lambda: Vec<f64> = d_kl.into_iter().flatten().map(|d| cfg.lambda_kl * d / b).collect();
            for i in 0..n {
                d_lambda[k * n + i] += -d_sur[i] * step_scale - cfg.lambda_en * d_ent[i] / b;
            }
            let upstream = mask_clamped(raw, d_lambda.into_iter());
            Ok(ItemEval {
                surrogate: sur,
                entropy,
                kl,
                max_ratio,
                grad: g.net.backward_trace(&trace, &upstream)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grad_explainer = GradientBundle::zeros_like(&g.net);
    let mut components = LossComponents::default();
    let mut max_ratio: f64 = 0.0;
    for it in &items {
        grad_explainer.add_scaled(&it.grad, 1.0);
        components.surrogate += it.surrogate * step_scale;
        components.entropy += it.entropy / b;
        components.kl += it.kl / b;
        max_ratio = max_ratio.max(it.max_ratio);
    }
    let (vl, mut grad_value) = value_loss_grad(v, samples, trajs)?;
    components.value_loss = vl;
    grad_value.scale(cfg.lambda_v);

    let total = total_loss(&components, cfg);
    if !total.is_finite() || !grad_explainer.is_finite() || !grad_value.is_finite() {
        return Err(FexError::Numeric("training loss".into()));
    }
    Ok(BatchEval {
        components,
        total,
        grad_explainer,
        grad_value,
        max_ratio,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub batch: usize,
    pub mean_return: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub explainer: ExplainerModel,
    pub value: ValueModel,
    pub log: Vec<LogRecord>,
    /// Largest PPO ratio observed across all loss evaluations.
    pub max_ratio: f64,
}

/// Samples with their explained class `argmax_k f_k(x)` and the predictor
/// probabilities used by the KL term.
pub fn label_with_predictor<P: Predictor + ?Sized>(p: &P, samples: &[Sample]) -> Result<(Vec<usize>, Vec<ProbVector>)> {
    let probs = samples
        .par_iter()
        .map(|s| p.predict_proba(&s.features))
        .collect::<Result<Vec<_>>>()?;
    Ok((probs.iter().map(ProbVector::argmax).collect(), probs))
}

pub fn run_training<P: Predictor + ?Sized>(samples: &[Sample], p: &P, cfg: &TrainingConfig) -> Result<TrainingOutcome> {
    let g = ExplainerModel::init(p.n_features(), p.n_classes(), &cfg.hidden, cfg.seed)?;
    let v = ValueModel::init(p.n_features(), p.n_classes(), &cfg.hidden, cfg.seed)?;
    run_training_from(g, v, samples, p, cfg)
}

/// Trains the given explainer and value networks.
pub fn run_training_from<P: Predictor + ?Sized>(
    mut g: ExplainerModel,
    mut v: ValueModel,
    samples: &[Sample],
    p: &P,
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(FexError::InvalidArgument("training needs at least one sample".into()));
    }
    if g.n_features != p.n_features() || g.n_classes != p.n_classes() {
        return Err(FexError::dim("explainer shape", p.n_features() * p.n_classes(), g.net.output_size()));
    }
    if v.n_classes() != p.n_classes() || v.net.input_size() != p.n_features() {
        return Err(FexError::dim("value outputs", p.n_classes(), v.n_classes()));
    }
    if let Some(s) = samples.iter().find(|s| s.features.len() != p.n_features()) {
        return Err(FexError::dim("sample features", p.n_features(), s.features.len()));
    }
    let mut log = Vec::new();
    let mut max_ratio: f64 = 0.0;
    if cfg.epochs == 0 {
        return Ok(TrainingOutcome { explainer: g, value: v, log, max_ratio });
    }

    let (classes, f_probs) = label_with_predictor(p, samples)?;
    let mut adam_g = AdamState::new(&g.net);
    let mut adam_v = AdamState::new(&v.net);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle = rng::substream(cfg.seed, 0x5F);
    let mut round: u64 = 0;
    let mut epoch_returns = Vec::with_capacity(cfg.epochs);
    let mut epoch_spread = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut ret_sum, mut spread_sum, mut ret_count) = (0.0, 0.0, 0usize);
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<BatchItem> = chunk
                .iter()
                .map(|&i| BatchItem { sample_index: i, class_index: classes[i] })
                .collect();
            let mut record = None;
            for _ in 0..cfg.rollouts_per_batch {
                let seed = rng::derive_seed(cfg.seed, round);
                round += 1;
                let trajectories = collect_trajectories(&g, p, samples, &batch, cfg.trajectory_len, seed)?;
                let mut advantages = compute_advantages(&v, samples, &trajectories)?;
                if cfg.normalize_advantages {
                    standardize_advantages(&mut advantages);
                }
                let mean_return = trajectories.iter().map(trajectory_return).sum::<f64>() / trajectories.len() as f64;
                let spread = trajectories
                    .iter()
                    .map(|tr| {
                        let x = &samples[tr.sample_index].features;
                        let pol = g.policy(x, tr.class_index)?;
                        Ok(pol.lambda().iter().map(|l| (l - 0.5).abs()).sum::<f64>() / pol.len() as f64)
                    })
                    .collect::<Result<Vec<f64>>>()?
                    .iter()
                    .sum::<f64>()
                    / trajectories.len() as f64;
                ret_sum += mean_return;
                spread_sum += spread;
                ret_count += 1;

                let rollout = Rollout {
                    f_probs: trajectories.iter().map(|tr| f_probs[tr.sample_index].clone()).collect(),
                    trajectories,
                    advantages,
                };
                for u in 0..cfg.inner_updates {
                    let eval = evaluate_batch(&g, &v, samples, &rollout, cfg)?;
                    max_ratio = max_ratio.max(eval.max_ratio);
                    if u == 0 {
                        record = Some(LogRecord {
                            epoch,
                            batch: batch_no,
                            mean_return,
                            surrogate: eval.components.surrogate,
                            value_loss: eval.components.value_loss,
                            kl: eval.components.kl,
                            entropy: eval.components.entropy,
                        });
                    }
                    adam_step(&mut g.net, &eval.grad_explainer, &mut adam_g, cfg.lr)?;
                    adam_step(&mut v.net, &eval.grad_value, &mut adam_v, cfg.lr)?;
                }
            }
            log.extend(record);
        }
        epoch_returns.push(ret_sum / ret_count as f64);
        epoch_spread.push(spread_sum / ret_count as f64);

        if cfg.epochs >= 2 && epoch + 1 == cfg.epochs / 2 {
            let flat_policy = epoch_spread.iter().all(|&s| s < 0.01);
            let lo = epoch_returns.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = epoch_returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if flat_policy && hi - lo < 1e-6 {
                return Err(FexError::Divergence(format!(
                    "no learning signal after {} epochs: mean |λ - 0.5| stayed below 0.01 and the return is flat",
                    epoch + 1
                )));
            }
        }
    }
    Ok(TrainingOutcome { explainer: g, value: v, log, max_ratio })
}
