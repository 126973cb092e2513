//! Synthetic classification tasks with known informative features, and
//! CSV persistence for labeled datasets.
//!
//! CSV layout is a header `f0,...,f{N-1},label` followed by one row per
//! sample; floats use Rust's shortest round-trip formatting. Class count,
//! ground truth and generator parameters live in a sidecar
//! `<path>.meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FexError, Result};
use crate::rng;
use crate::types::Sample;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMeta {
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_informative: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swapped: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
    pub n_features: usize,
    pub n_classes: usize,
    /// Informative feature indices per class, when known.
    pub ground_truth: Option<Vec<Vec<usize>>>,
    pub meta: GeneratorMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    n_classes: usize,
    n_features: usize,
    ground_truth: Option<Vec<Vec<usize>>>,
    generator: GeneratorMeta,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Sample>, n_features: usize, n_classes: usize) -> Result<Self> {
        let ds = LabeledDataset {
            samples,
            n_features,
            n_classes,
            ground_truth: None,
            meta: GeneratorMeta::default(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.samples.iter().map(|s| s.label.expect("validated"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(FexError::InvalidArgument("dataset needs at least one class".into()));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != self.n_features {
                return Err(FexError::dim("sample features", self.n_features, s.features.len()));
            }
            match s.label {
                Some(l) if l < self.n_classes => {}
                Some(l) => {
                    return Err(FexError::ClassIndex {
                        index: l,
                        n_classes: self.n_classes,
                    })
                }
                None => {
                    return Err(FexError::InvalidArgument(format!("sample {i} has no label")))
                }
            }
        }
        if let Some(gt) = &self.ground_truth {
            if gt.len() != self.n_classes {
                return Err(FexError::dim("ground-truth classes", self.n_classes, gt.len()));
            }
            if let Some(&bad) = gt.iter().flatten().find(|&&j| j >= self.n_features) {
                return Err(FexError::InvalidArgument(format!(
                    "ground-truth feature {bad} outside 0..{}",
                    self.n_features
                )));
            }
        }
        Ok(())
    }

    /// Splits off the last `n_test` samples.
    pub fn split(&self, n_test: usize) -> (LabeledDataset, LabeledDataset) {
        let cut = self.samples.len().saturating_sub(n_test);
        let mut train = self.clone();
        let mut test = self.clone();
        train.samples.truncate(cut);
        test.samples = self.samples[cut..].to_vec();
        (train, test)
    }

    /// Exchanges the two classes of a binary dataset, relabelling every
    /// sample and swapping the ground-truth sets.
    pub fn swap_labels(&self) -> Result<LabeledDataset> {
        if self.n_classes != 2 {
            return Err(FexError::InvalidArgument("label swap needs exactly two classes".into()));
        }
        let mut out = self.clone();
        for s in &mut out.samples {
            s.label = s.label.map(|l| 1 - l);
        }
        if let Some(gt) = &mut out.ground_truth {
            gt.swap(0, 1);
        }
        out.meta.swapped = Some(!self.meta.swapped.unwrap_or(false));
        Ok(out)
    }
}

/// Features i.i.d. `Uniform[0, 1)`; label 1 when the mean of `k_informative`
/// seed-chosen features exceeds `threshold`.
pub fn gen_planted(
    n_samples: usize,
    n_features: usize,
    k_informative: usize,
    threshold: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if k_informative == 0 || k_informative > n_features {
        return Err(FexError::InvalidArgument(format!(
            "k_informative must lie in 1..={n_features}, got {k_informative}"
        )));
    }
    let mut planted = sample_indices(&mut rng::substream(seed, 0), n_features, k_informative).into_vec();
    planted.sort_unstable();

    let samples = (0..n_samples)
        .map(|i| {
            let mut r = rng::substream(seed, i as u64 + 1);
            let features: Vec<f64> = (0..n_features).map(|_| r.gen::<f64>()).collect();
            let mean = planted.iter().map(|&j| features[j]).sum::<f64>() / k_informative as f64;
            Sample::labeled(features, usize::from(mean > threshold))
        })
        .collect();

    let ds = LabeledDataset {
        samples,
        n_features,
        n_classes: 2,
        ground_truth: Some(vec![planted.clone(), planted]),
        meta: GeneratorMeta {
            task: "planted".into(),
            seed: Some(seed),
            threshold: Some(threshold),
            k_informative: Some(k_informative),
            swapped: None,
        },
    };
    ds.validate()?;
    Ok(ds)
}

/// Two classes driven by disjoint feature groups `S0`, `S1` (each of size
/// `max(1, n_features / 5)`): the label is 0 when the mean over `S0`
/// exceeds the mean over `S1`, else 1.
pub fn gen_two_class_disjoint(n_samples: usize, n_features: usize, seed: u64) -> Result<LabeledDataset> {
    if n_features < 4 {
        return Err(FexError::InvalidArgument(format!(
            "two-class task needs at least 4 features, got {n_features}"
        )));
    }
    let group = (n_features / 5).max(1);
    let picked = sample_indices(&mut rng::substream(seed, 0), n_features, 2 * group).into_vec();
    let mut s0 = picked[..group].to_vec();
    let mut s1 = picked[group..].to_vec();
    s0.sort_unstable();
    s1.sort_unstable();

    let samples = (0..n_samples)
        .map(|i| {
            let mut r = rng::substream(seed, i as u64 + 1);
            let features: Vec<f64> = (0..n_features).map(|_| r.gen::<f64>()).collect();
            let m0 = s0.iter().map(|&j| features[j]).sum::<f64>();
            let m1 = s1.iter().map(|&j| features[j]).sum::<f64>();
            Sample::labeled(features, usize::from(m0 <= m1))
        })
        .collect();

    let ds = LabeledDataset {
        samples,
        n_features,
        n_classes: 2,
        ground_truth: Some(vec![s0, s1]),
        meta: GeneratorMeta {
            task: "two-class-disjoint".into(),
            seed: Some(seed),
            threshold: None,
            k_informative: Some(group),
            swapped: None,
        },
    };
    ds.validate()?;
    Ok(ds)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn save_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut out = String::new();
    for j in 0..ds.n_features {
        out.push_str(&format!("f{j},"));
    }
    out.push_str("label\n");
    for s in &ds.samples {
        for v in &s.features {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{}\n", s.label.expect("validated")));
    }
    fs::write(path, out)?;
    let sidecar = Sidecar {
        n_classes: ds.n_classes,
        n_features: ds.n_features,
        ground_truth: ds.ground_truth.clone(),
        generator: ds.meta.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(())
}

/// Reads a dataset written by [`save_csv`]. Without a sidecar the class
/// count is inferred from the largest label.
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path)?;
    let perr = |line: usize, message: String| FexError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols.last() != Some(&"label") {
        return Err(perr(1, "header must be f0,...,f{N-1},label".into()));
    }
    let n_features = cols.len() - 1;
    for (j, c) in cols[..n_features].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(perr(1, format!("expected column f{j}, found {c:?}")));
        }
    }

    let mut samples = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            return Err(perr(line_no, "empty row".into()));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_features + 1 {
            return Err(perr(
                line_no,
                format!("expected {} fields, found {}", n_features + 1, fields.len()),
            ));
        }
        let features = fields[..n_features]
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| perr(line_no, format!("column f{j}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = fields[n_features]
            .trim()
            .parse::<usize>()
            .map_err(|e| perr(line_no, format!("label: {e}")))?;
        samples.push(Sample::labeled(features, label));
    }

    let side = sidecar_path(path);
    let ds = if side.exists() {
        let sc: Sidecar = serde_json::from_str(&fs::read_to_string(&side)?)?;
        if sc.n_features != n_features {
            return Err(perr(
                1,
                format!("header has {n_features} features but sidecar declares {}", sc.n_features),
            ));
        }
        LabeledDataset {
            samples,
            n_features,
            n_classes: sc.n_classes,
            ground_truth: sc.ground_truth,
            meta: sc.generator,
        }
    } else {
        let n_classes = samples.iter().filter_map(|s| s.label).max().map_or(1, |m| m + 1);
        LabeledDataset {
            samples,
            n_features,
            n_classes,
            ground_truth: None,
            meta: GeneratorMeta::default(),
        }
    };
    ds.validate()?;
    Ok(ds)
}
