use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::error::{FexError, Result};
use crate::nnet::{adam_step, Activation, AdamState, GradientBundle, MlpNetwork};
use crate::rng;
use crate::synthdata::LabeledDataset;
use crate::types::ProbVector;

/// Softmax MLP classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPredictor {
    net: MlpNetwork,
}

impl MlpPredictor {
    pub fn new(net: MlpNetwork) -> Result<Self> {
        if net.output_activation() != Activation::Softmax {
            return Err(FexError::InvalidArgument(format!(
                "predictor output must be softmax, got {}",
                net.output_activation().as_str()
            )));
        }
        Ok(MlpPredictor { net })
    }

    /// Xavier-initialized, untrained classifier.
    pub fn init(n_features: usize, hidden: &[usize], n_classes: usize, seed: u64) -> Result<Self> {
        let sizes = layer_sizes(n_features, hidden, n_classes);
        Self::new(MlpNetwork::xavier(&sizes, Activation::Softmax, &mut rng::seeded(seed))?)
    }

    pub fn network(&self) -> &MlpNetwork {
        &self.net
    }

    pub fn into_network(self) -> MlpNetwork {
        self.net
    }
}

fn layer_sizes(n_in: usize, hidden: &[usize], n_out: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(n_in);
    sizes.extend_from_slice(hidden);
    sizes.push(n_out);
    sizes
}

impl Predictor for MlpPredictor {
    fn n_features(&self) -> usize {
        self.net.input_size()
    }

    fn n_classes(&self) -> usize {
        self.net.output_size()
    }

    fn predict_proba(&self, x: &[f64]) -> Result<ProbVector> {
        ProbVector::new(self.net.forward(x)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorTrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PredictorTrainConfig {
    fn default() -> Self {
        PredictorTrainConfig {
            hidden: vec![32],
            epochs: 40,
            lr: 0.01,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPredictor {
    pub predictor: MlpPredictor,
    /// Mean cross-entropy on the training set observed during each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Cross-entropy training of a fresh softmax MLP with Adam.
pub fn train_builtin(data: &LabeledDataset, cfg: &PredictorTrainConfig) -> Result<TrainedPredictor> {
    let init = MlpPredictor::init(data.n_features, &cfg.hidden, data.n_classes, cfg.seed)?;
    train_builtin_from(init.into_network(), data, cfg)
}

/// As [`train_builtin`] but starting from the given network; `cfg.hidden`
/// is ignored.
pub fn train_builtin_from(
    mut net: MlpNetwork,
    data: &LabeledDataset,
    cfg: &PredictorTrainConfig,
) -> Result<TrainedPredictor> {
    if data.is_empty() {
        return Err(FexError::InvalidArgument("cannot train on an empty dataset".into()));
    }
    data.validate()?;
    if net.input_size() != data.n_features || net.output_size() != data.n_classes {
        return Err(FexError::dim("network input", data.n_features, net.input_size()));
    }
    if cfg.batch_size == 0 {
        return Err(FexError::InvalidArgument("batch_size must be positive".into()));
    }
    // validates the head
    MlpPredictor::new(net.clone())?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = rng::substream(cfg.seed, 1);
    let mut adam = AdamState::new(&net);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grad = GradientBundle::zeros_like(&net);
            for &i in chunk {
                let s = &data.samples[i];
                let label = s.label.expect("validated");
                let p = net.forward(&s.features)?;
                total -= p[label].max(1e-300).ln();
                let d_logits: Vec<f64> = p
                    .iter()
                    .enumerate()
                    .map(|(k, &pk)| pk - f64::from(u8::from(k == label)))
                    .collect();
                grad.add_scaled(&net.backward_preactivation(&s.features, &d_logits)?, 1.0);
            }
            grad.scale(1.0 / chunk.len() as f64);
            adam_step(&mut net, &grad, &mut adam, cfg.lr)?;
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(FexError::Numeric("predictor training loss".into()));
        }
        epoch_losses.push(mean);
    }
    Ok(TrainedPredictor {
        predictor: MlpPredictor::new(net)?,
        epoch_losses,
    })
}

pub fn accuracy<P: Predictor + ?Sized>(p: &P, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(FexError::InvalidArgument("empty dataset".into()));
    }
    let mut hits = 0usize;
    for s in &data.samples {
        if Some(p.predict_class(&s.features)?) == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
