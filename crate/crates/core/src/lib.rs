//! Amortized feature attribution for black-box probabilistic classifiers.
//!
//! An explainer network maps an input to the means of a product-of-Bernoulli
//! mask distribution, one head per class. It is trained with a clipped
//! policy-gradient objective so that masks it favours keep the predicted
//! class probability high while retaining few features; at inference the
//! attribution is simply the explainer output. An exhaustive oracle over
//! all `2^N - 1` masks provides ground truth at small `N`.

pub mod error;
pub mod eval;
pub mod nnet;
pub mod oracle;
pub mod policy;
pub mod predictor;
pub mod rng;
pub mod synthdata;
pub mod trainer;
pub mod types;

pub use error::{FexError, Result};
pub use nnet::{Activation, GradientBundle, MlpNetwork};
pub use oracle::{empirical_attribution, exact_mask_distribution, monte_carlo_attribution, OracleReport};
pub use policy::{BernoulliPolicy, EPS_CLAMP};
pub use predictor::{naive_score, BlackBoxBridge, CountingPredictor, FnPredictor, MlpPredictor, Predictor};
pub use synthdata::LabeledDataset;
pub use trainer::{ExplainerModel, TrainingConfig, ValueModel};
pub use types::{apply_mask, enumerate_nonzero_masks, retained_count, Attribution, Mask, ProbVector, Sample};
