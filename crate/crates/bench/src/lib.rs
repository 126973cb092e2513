//! Shared fixtures for the benchmarks.

use fex_core::predictor::{train_builtin, PredictorTrainConfig};
use fex_core::synthdata::gen_planted;
use fex_core::trainer::ExplainerModel;
use fex_core::{MlpPredictor, Sample};

/// A planted-task predictor, a same-sized explainer and inputs to explain.
pub struct Fixture {
    pub predictor: MlpPredictor,
    pub explainer: ExplainerModel,
    pub samples: Vec<Sample>,
}

pub fn planted_fixture(n_features: usize, n_samples: usize) -> Fixture {
    let data = gen_planted(n_samples, n_features, 1, 0.5, 11).expect("valid generator arguments");
    let cfg = PredictorTrainConfig { epochs: 3, seed: 1, ..Default::default() };
    let predictor = train_builtin(&data, &cfg).expect("training succeeds").predictor;
    let explainer = ExplainerModel::init(n_features, 2, &cfg.hidden, 2).expect("valid shape");
    Fixture { predictor, explainer, samples: data.samples }
}
