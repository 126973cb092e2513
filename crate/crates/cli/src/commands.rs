//! Command implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fex_core::eval::{
    average_curves, benchmark_inference, deletion_curve_with, random_attribution, recovery_precision, CurveMetric,
    MaskOrder,
};
use fex_core::oracle::{empirical_attribution, monte_carlo_attribution};
use fex_core::predictor::{accuracy, train_builtin, PredictorTrainConfig};
use fex_core::synthdata::{gen_planted, gen_two_class_disjoint, load_csv, save_csv, LabeledDataset};
use fex_core::trainer::run_training;
use fex_core::{
    rng, Attribution, BlackBoxBridge, ExplainerModel, FexError, MlpPredictor, Predictor, Sample, TrainingConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::{overlay, resolve_seed, resolve_threads, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::{
    BenchArgs, Cli, Command, EvalArgs, ExplainArgs, GenDataArgs, InputArgs, Method, MetricArg, OracleArgs,
    PredictorSource, Task, TrainExplainerArgs, TrainPredictorArgs,
};

struct Ctx {
    seed: u64,
    /// Seed given by flag or the config top level, overriding section seeds.
    seed_override: Option<u64>,
    file: ConfigFile,
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let file = match &cli.global.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let threads = resolve_threads(cli.global.threads, &file)?;
    if threads == Some(0) {
        return Err(CliError::Usage("thread count must be positive".into()));
    }
    let ctx = Ctx {
        seed: resolve_seed(cli.global.seed, &file),
        seed_override: cli.global.seed.or(file.seed),
        file,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::GenData(a) => gen_data(&a, &ctx),
        Command::TrainPredictor(a) => train_predictor(&a, &ctx),
        Command::TrainExplainer(a) => train_explainer(&a, &ctx),
        Command::Explain(a) => explain(&a, &ctx),
        Command::Oracle(a) => oracle(&a, &ctx),
        Command::Eval(a) => eval(&a, &ctx),
        Command::Bench(a) => bench(&a, &ctx),
    })
}

fn echo<T: Serialize>(args: &T, ctx: &Ctx) -> Value {
    json!({ "args": args, "seed": ctx.seed })
}

fn emit(out: Option<&Path>, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("json serializes") + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::io(path, "no such file"))
    }
}

fn load_dataset(path: &Path) -> CliResult<LabeledDataset> {
    require_file(path)?;
    Ok(load_csv(path)?)
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> CliResult<()> {
    if expected != got {
        return Err(FexError::Dimension { what, expected, got }.into());
    }
    Ok(())
}

fn load_predictor(path: &Path) -> CliResult<MlpPredictor> {
    let ckpt = Checkpoint::load_kind(path, ModelKind::Predictor)?;
    Ok(MlpPredictor::new(ckpt.network()?)?)
}

fn open_predictor(src: &PredictorSource) -> CliResult<Option<Box<dyn Predictor>>> {
    match (&src.predictor, &src.bridge) {
        (Some(path), _) => Ok(Some(Box::new(load_predictor(path)?))),
        (None, Some(cmd)) => Ok(Some(Box::new(BlackBoxBridge::open(cmd)?))),
        (None, None) => Ok(None),
    }
}

fn require_predictor(src: &PredictorSource) -> CliResult<Box<dyn Predictor>> {
    open_predictor(src)?.ok_or_else(|| CliError::Usage("one of --predictor or --bridge is required".into()))
}

fn load_explainer(path: &Path) -> CliResult<ExplainerModel> {
    let ckpt = Checkpoint::load_kind(path, ModelKind::Explainer)?;
    Ok(ExplainerModel::from_network(ckpt.network()?, ckpt.architecture.n_classes)?)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InputDoc {
    Raw(Vec<f64>),
    One(Sample),
    ManyRaw(Vec<Vec<f64>>),
    Many(Vec<Sample>),
}

fn load_inputs(a: &InputArgs) -> CliResult<Vec<Sample>> {
    let mut samples = match (&a.input, &a.data) {
        (Some(path), _) => {
            require_file(path)?;
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let doc: InputDoc = serde_json::from_str(&text).map_err(|e| FexError::Parse {
                path: path.clone(),
                line: e.line(),
                message: "expected a feature array, a sample object or a list of either".into(),
            })?;
            match doc {
                InputDoc::Raw(f) => vec![Sample::new(f)],
                InputDoc::One(s) => vec![s],
                InputDoc::ManyRaw(v) => v.into_iter().map(Sample::new).collect(),
                InputDoc::Many(v) => v,
            }
        }
        (None, Some(path)) => load_dataset(path)?.samples,
        (None, None) => return Err(CliError::Usage("one of --input or --data is required".into())),
    };
    if let Some(n) = a.limit {
        samples.truncate(n);
    }
    if samples.is_empty() {
        return Err(CliError::Usage("no inputs to process".into()));
    }
    Ok(samples)
}

fn check_inputs(samples: &[Sample], n_features: usize) -> CliResult<()> {
    for s in samples {
        check_dim("input features", n_features, s.features.len())?;
    }
    Ok(())
}

/// `--class` if given, else the predictor's argmax.
fn class_for(class: Option<usize>, p: Option<&dyn Predictor>, x: &[f64]) -> CliResult<usize> {
    match (class, p) {
        (Some(k), _) => Ok(k),
        (None, Some(p)) => Ok(p.predict_class(x)?),
        (None, None) => Err(CliError::Usage("--class is required without --predictor or --bridge".into())),
    }
}

fn gen_data(a: &GenDataArgs, ctx: &Ctx) -> CliResult<()> {
    let mut ds = match a.task {
        Task::Planted => gen_planted(a.n_samples, a.n_features, a.k_informative, a.threshold, ctx.seed)?,
        Task::TwoClassDisjoint => gen_two_class_disjoint(a.n_samples, a.n_features, ctx.seed)?,
    };
    if a.swap_labels {
        ds = ds.swap_labels()?;
    }
    save_csv(&ds, &a.out)?;
    let line = json!({
        "out": a.out,
        "n_samples": ds.len(),
        "n_features": ds.n_features,
        "n_classes": ds.n_classes,
        "ground_truth": ds.ground_truth,
    });
    println!("{line}");
    Ok(())
}

fn train_predictor(a: &TrainPredictorArgs, ctx: &Ctx) -> CliResult<()> {
    let data = load_dataset(&a.data)?;
    let mut cfg: PredictorTrainConfig =
        overlay(&PredictorTrainConfig::default(), ctx.file.predictor.as_ref(), "predictor")?;
    if let Some(h) = &a.hidden {
        cfg.hidden = h.clone();
    }
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    cfg.seed = ctx.seed_override.unwrap_or(cfg.seed);

    let trained = train_builtin(&data, &cfg)?;
    let acc = accuracy(&trained.predictor, &data)?;
    let config = serde_json::to_value(&cfg).expect("config serializes");
    Checkpoint::new(ModelKind::Predictor, trained.predictor.network(), data.n_classes, config, cfg.seed)
        .save(&a.out)?;
    let line = json!({
        "out": a.out,
        "train_accuracy": acc,
        "final_loss": trained.epoch_losses.last(),
    });
    println!("{line}");
    Ok(())
}

fn train_explainer(a: &TrainExplainerArgs, ctx: &Ctx) -> CliResult<()> {
    let data = load_dataset(&a.data)?;
    let p = require_predictor(&a.source)?;
    check_dim("predictor features", data.n_features, p.n_features())?;

    let mut cfg: TrainingConfig = overlay(&TrainingConfig::default(), ctx.file.explainer.as_ref(), "explainer")?;
    if let Some(h) = &a.hidden {
        cfg.hidden = h.clone();
    }
    cfg.trajectory_len = a.trajectory_len.unwrap_or(cfg.trajectory_len);
    cfg.clip_eps = a.clip_eps.unwrap_or(cfg.clip_eps);
    cfg.lambda_en = a.lambda_en.unwrap_or(cfg.lambda_en);
    cfg.lambda_v = a.lambda_v.unwrap_or(cfg.lambda_v);
    cfg.lambda_kl = a.lambda_kl.unwrap_or(cfg.lambda_kl);
    cfg.inner_updates = a.inner_updates.unwrap_or(cfg.inner_updates);
    cfg.rollouts_per_batch = a.rollouts_per_batch.unwrap_or(cfg.rollouts_per_batch);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.normalize_advantages |= a.normalize_advantages;
    cfg.seed = ctx.seed_override.unwrap_or(cfg.seed);

    let out = run_training(&data.samples, &p, &cfg)?;
    let mut config = serde_json::to_value(&cfg).expect("config serializes");
    if let Some(cmd) = &a.source.bridge {
        config["bridge"] = json!(cmd);
    }
    let k = p.n_classes();
    Checkpoint::new(ModelKind::Explainer, out.explainer.network(), k, config.clone(), cfg.seed).save(&a.out)?;
    let value_out = a.value_out.clone().unwrap_or_else(|| {
        let mut s = a.out.clone().into_os_string();
        s.push(".value");
        PathBuf::from(s)
    });
    Checkpoint::new(ModelKind::Value, out.value.network(), k, config, cfg.seed).save(&value_out)?;

    if let Some(path) = &a.log {
        let mut text = String::new();
        for rec in &out.log {
            text.push_str(&serde_json::to_string(rec).expect("record serializes"));
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    }
    let line = json!({
        "out": a.out,
        "value_out": value_out,
        "batches": out.log.len(),
        "final_mean_return": out.log.last().map(|r| r.mean_return),
    });
    println!("{line}");
    Ok(())
}

fn explain(a: &ExplainArgs, ctx: &Ctx) -> CliResult<()> {
    let g = load_explainer(&a.explainer)?;
    let samples = load_inputs(&a.inputs)?;
    check_inputs(&samples, g.n_features())?;
    let p = open_predictor(&a.source)?;
    if let Some(p) = &p {
        check_dim("predictor classes", g.n_classes(), p.n_classes())?;
    }
    let rows = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let k = class_for(a.class, p.as_deref(), &s.features)?;
            let attr = g.explain(&s.features, k)?;
            Ok(json!({ "index": i, "class": k, "attribution": attr.values() }))
        })
        .collect::<CliResult<Vec<_>>>()?;
    emit(
        a.out.as_deref(),
        &json!({ "kind": "explanations", "config": echo(a, ctx), "explanations": rows }),
    )
}

fn oracle(a: &OracleArgs, ctx: &Ctx) -> CliResult<()> {
    let p = require_predictor(&a.source)?;
    let samples = load_inputs(&a.inputs)?;
    check_inputs(&samples, p.n_features())?;
    let rows = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let k = class_for(a.class, Some(p.as_ref()), &s.features)?;
            let report = empirical_attribution(&p, &s.features, k)?;
            Ok(json!({
                "index": i,
                "class": k,
                "phi": report.phi.values(),
                "normalization": report.normalization,
                "normalized_phi": report.normalized_phi.values(),
                "n_masks_evaluated": report.n_masks_evaluated,
            }))
        })
        .collect::<CliResult<Vec<_>>>()?;
    emit(a.out.as_deref(), &json!({ "kind": "oracle", "config": echo(a, ctx), "reports": rows }))
}

struct EvalRow {
    class: usize,
    positive: fex_core::eval::CurveReport,
    negative: fex_core::eval::CurveReport,
    recovery: Option<f64>,
}

fn eval(a: &EvalArgs, ctx: &Ctx) -> CliResult<()> {
    let data = load_dataset(&a.data)?;
    let p = require_predictor(&a.source)?;
    check_dim("predictor features", data.n_features, p.n_features())?;
    let g = match (a.method, &a.explainer) {
        (Method::Explainer, None) => return Err(CliError::Usage("--method explainer needs --explainer".into())),
        (_, Some(path)) => Some(load_explainer(path)?),
        (_, None) => None,
    };
    if let Some(g) = &g {
        check_dim("explainer features", data.n_features, g.n_features())?;
    }
    let metric = match a.metric {
        MetricArg::Probability => CurveMetric::Probability,
        MetricArg::Accuracy => CurveMetric::Accuracy,
    };

    let mut picked: Vec<(usize, &Sample, usize)> = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| Ok((i, s, p.predict_class(&s.features)?)))
        .collect::<CliResult<Vec<_>>>()?
        .into_iter()
        .filter(|&(_, _, k)| a.only_class.is_none_or(|c| c == k))
        .collect();
    if let Some(n) = a.limit {
        picked.truncate(n);
    }
    if picked.is_empty() {
        return Err(CliError::Usage("no samples left to evaluate".into()));
    }

    let attribute = |i: usize, x: &[f64], k: usize| -> CliResult<Attribution> {
        Ok(match a.method {
            Method::Explainer => g.as_ref().expect("checked above").explain(x, k)?,
            Method::Oracle => empirical_attribution(&p, x, k)?.normalized_phi,
            Method::MonteCarlo => monte_carlo_attribution(&p, x, k, a.mc_samples, rng::derive_seed(ctx.seed, i as u64))?,
            Method::Random => random_attribution(x.len(), &mut rng::substream(ctx.seed, i as u64)),
        })
    };
    let rows: Vec<EvalRow> = picked
        .par_iter()
        .map(|&(i, s, k)| {
            let attr = attribute(i, &s.features, k)?;
            let recovery = match &data.ground_truth {
                Some(gt) => Some(recovery_precision(&attr, &gt[k], gt[k].len())?),
                None => None,
            };
            Ok(EvalRow {
                class: k,
                positive: deletion_curve_with(&attr, &p, &s.features, k, MaskOrder::Desc, metric)?,
                negative: deletion_curve_with(&attr, &p, &s.features, k, MaskOrder::Asc, metric)?,
                recovery,
            })
        })
        .collect::<CliResult<_>>()?;

    let n = rows.len() as f64;
    let positive_auc = rows.iter().map(|r| r.positive.auc).sum::<f64>() / n;
    let negative_auc = rows.iter().map(|r| r.negative.auc).sum::<f64>() / n;
    let recovery = data
        .ground_truth
        .as_ref()
        .map(|_| rows.iter().filter_map(|r| r.recovery).sum::<f64>() / n);
    let by_class: Vec<Value> = (0..data.n_classes)
        .map(|k| {
            let of_k: Vec<&EvalRow> = rows.iter().filter(|r| r.class == k).collect();
            let rec = if of_k.is_empty() || data.ground_truth.is_none() {
                None
            } else {
                Some(of_k.iter().filter_map(|r| r.recovery).sum::<f64>() / of_k.len() as f64)
            };
            json!({ "class": k, "n_samples": of_k.len(), "recovery_precision": rec })
        })
        .collect();

    if let Some(prefix) = &a.curves {
        let pos = average_curves(&rows.iter().map(|r| r.positive.clone()).collect::<Vec<_>>())?;
        let neg = average_curves(&rows.iter().map(|r| r.negative.clone()).collect::<Vec<_>>())?;
        for (suffix, curve) in [("positive.csv", pos), ("negative.csv", neg)] {
            let mut path = prefix.clone().into_os_string();
            path.push(".");
            path.push(suffix);
            let path = PathBuf::from(path);
            fs::write(&path, curve.to_csv()).map_err(|e| CliError::io(&path, e))?;
        }
    }

    emit(
        a.out.as_deref(),
        &json!({
            "kind": "eval",
            "config": echo(a, ctx),
            "n_samples": rows.len(),
            "positive_auc": positive_auc,
            "negative_auc": negative_auc,
            "recovery_precision": recovery,
            "by_class": by_class,
        }),
    )
}

fn bench(a: &BenchArgs, ctx: &Ctx) -> CliResult<()> {
    let data = load_dataset(&a.data)?;
    let p = require_predictor(&a.source)?;
    let g = load_explainer(&a.explainer)?;
    check_dim("predictor features", data.n_features, p.n_features())?;
    check_dim("explainer features", data.n_features, g.n_features())?;
    if a.n_explanations == 0 {
        return Err(CliError::Usage("--n-explanations must be positive".into()));
    }
    // cycle through the dataset when it is shorter than the request
    let samples: Vec<Sample> = data.samples.iter().cycle().take(a.n_explanations).cloned().collect();
    let report = benchmark_inference(&g, &p, &samples, a.mc_samples, ctx.seed)?;
    emit(
        a.out.as_deref(),
        &json!({ "kind": "bench", "config": echo(a, ctx), "report": report }),
    )
}
