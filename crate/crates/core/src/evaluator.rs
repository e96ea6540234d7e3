//! Nearest-prototype prediction and the ZSL / GZSL accuracy protocol.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::Distance;
use crate::dataio::Dataset;
use crate::error::{DataError, Error, Result};
use crate::networks::PgnModel;
use crate::tensor_core::Tensor;

/// Evaluation results. Fields a mode does not compute are `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub t: Option<f64>,
    pub u: Option<f64>,
    pub s: Option<f64>,
    pub h: Option<f64>,
    pub per_class: BTreeMap<usize, f64>,
}

impl Metrics {
    /// JSON report with keys `T`, `u`, `s`, `H`, `per_class`,
    /// `config_digest` and `seed`.
    pub fn to_json(&self, config_digest: &str, seed: u64) -> String {
        let per_class: serde_json::Map<String, serde_json::Value> = self
            .per_class
            .iter()
            .map(|(c, v)| (c.to_string(), serde_json::json!(v)))
            .collect();
        let report = serde_json::json!({
            "T": self.t,
            "u": self.u,
            "s": self.s,
            "H": self.h,
            "per_class": per_class,
            "config_digest": config_digest,
            "seed": seed,
        });
        serde_json::to_string_pretty(&report).expect("metrics serialize") + "\n"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTask {
    pub candidates: Vec<usize>,
    /// One generated prototype row per candidate, in candidate order.
    pub prototypes: Tensor,
    pub metric: Distance,
}

/// Generate eval-mode prototypes `G(a_k)` for each candidate class.
pub fn build_task(
    model: &PgnModel,
    semantics: &Tensor,
    candidates: &[usize],
    metric: Distance,
) -> Result<PredictionTask> {
    if let Some(&c) = candidates.iter().find(|&&c| c >= semantics.rows()) {
        return Err(DataError::Invalid(format!("no semantics row for class {c}")).into());
    }
    let a = semantics.select_rows(candidates);
    let prototypes = if candidates.is_empty() {
        Tensor::zeros(&[0, model.feature_dim()])
    } else {
        model.generate_prototypes(&a)?
    };
    if !prototypes.is_finite() {
        return Err(Error::Numeric("generated prototypes".into()));
    }
    Ok(PredictionTask {
        candidates: candidates.to_vec(),
        prototypes,
        metric,
    })
}

fn sq_euclidean(x: &[f64], p: &[f64]) -> f64 {
    x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Distance used by [`predict`]; cosine treats a zero vector as having zero
/// similarity to everything.
pub fn distance(x: &[f64], p: &[f64], metric: Distance) -> f64 {
    match metric {
        Distance::Euclidean => sq_euclidean(x, p),
        Distance::Cosine => {
            let denom = norm(x) * norm(p);
            let dot: f64 = x.iter().zip(p).map(|(a, b)| a * b).sum();
            1.0 - if denom > 0.0 { dot / denom } else { 0.0 }
        }
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var("EPGN_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Nearest-prototype class for every row of `x`; ties go to the earliest
/// candidate. Rows are scored in parallel, capped by `EPGN_THREADS`.
pub fn predict(task: &PredictionTask, x: &Tensor) -> Result<Vec<usize>> {
    if task.candidates.is_empty() {
        return Err(Error::EmptyClassSet);
    }
    let d = task.prototypes.cols();
    if x.rank() != 2 || x.cols() != d {
        return Err(Error::dim(
            "predict",
            format!("features {:?} vs prototypes of width {d}", x.shape()),
        ));
    }
    let nearest = |i: usize| -> usize {
        let row = x.row(i);
        let mut best = (0, f64::INFINITY);
        for k in 0..task.candidates.len() {
            let dist = distance(row, task.prototypes.row(k), task.metric);
            if dist < best.1 {
                best = (k, dist);
            }
        }
        task.candidates[best.0]
    };
    let run = || (0..x.rows()).into_par_iter().map(nearest).collect::<Vec<_>>();
    match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(run))
            .map_err(|e| Error::Config(format!("thread pool: {e}"))),
        None => Ok(run()),
    }
}

/// Class-balanced top-1 accuracy: the mean over classes present in
/// `labels` of each class's accuracy.
pub fn per_class_top1(
    preds: &[usize],
    labels: &[usize],
    classes: &[usize],
) -> Result<(f64, BTreeMap<usize, f64>)> {
    if preds.len() != labels.len() {
        return Err(Error::dim(
            "per_class_top1",
            format!("{} predictions for {} labels", preds.len(), labels.len()),
        ));
    }
    if labels.is_empty() {
        return Err(DataError::Invalid("empty test set".into()).into());
    }
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&p, &l) in preds.iter().zip(labels) {
        if !classes.contains(&l) {
            return Err(DataError::Invalid(format!("label {l} outside the evaluated classes")).into());
        }
        let e = counts.entry(l).or_default();
        e.0 += usize::from(p == l);
        e.1 += 1;
    }
    let per_class: BTreeMap<usize, f64> = counts
        .into_iter()
        .map(|(c, (hit, n))| (c, hit as f64 / n as f64))
        .collect();
    let t = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok((t, per_class))
}

pub fn harmonic_mean(u: f64, s: f64) -> f64 {
    if u + s == 0.0 {
        0.0
    } else {
        2.0 * u * s / (u + s)
    }
}

/// Per-class accuracy of `instances` against prototypes of `candidates`.
pub fn evaluate_on(
    model: &PgnModel,
    ds: &Dataset,
    candidates: &[usize],
    instances: &[usize],
    metric: Distance,
) -> Result<(f64, BTreeMap<usize, f64>)> {
    let task = build_task(model, &ds.semantics, candidates, metric)?;
    let x = ds.features.select_rows(instances);
    let preds = predict(&task, &x)?;
    let labels: Vec<usize> = instances.iter().map(|&i| ds.labels[i]).collect();
    per_class_top1(&preds, &labels, candidates)
}

fn check_width(model: &PgnModel, ds: &Dataset) -> Result<()> {
    if model.feature_dim() != ds.feature_dim() || model.semantic_dim() != ds.semantic_dim() {
        return Err(Error::dim(
            "evaluate",
            format!(
                "model maps {}<->{} but the dataset has D={} K={}",
                model.feature_dim(),
                model.semantic_dim(),
                ds.feature_dim(),
                ds.semantic_dim()
            ),
        ));
    }
    Ok(())
}

/// Traditional ZSL: test-unseen instances against unseen prototypes only.
pub fn zsl_eval(model: &PgnModel, ds: &Dataset, metric: Distance) -> Result<Metrics> {
    check_width(model, ds)?;
    if ds.test_unseen_idx.is_empty() {
        return Err(Error::Split("dataset has no test-unseen instances".into()));
    }
    let (t, per_class) = evaluate_on(model, ds, &ds.unseen_classes, &ds.test_unseen_idx, metric)?;
    Ok(Metrics {
        t: Some(t),
        per_class,
        ..Default::default()
    })
}

/// Generalized ZSL: both test splits against prototypes of every class.
pub fn gzsl_eval(model: &PgnModel, ds: &Dataset, metric: Distance) -> Result<Metrics> {
    check_width(model, ds)?;
    if ds.test_unseen_idx.is_empty() || ds.test_seen_idx.is_empty() {
        return Err(Error::Split("GZSL needs test-seen and test-unseen instances".into()));
    }
    let all: Vec<usize> = (0..ds.num_classes()).collect();
    let task = build_task(model, &ds.semantics, &all, metric)?;
    let split = |idx: &[usize]| -> Result<(f64, BTreeMap<usize, f64>)> {
        let preds = predict(&task, &ds.features.select_rows(idx))?;
        let labels: Vec<usize> = idx.iter().map(|&i| ds.labels[i]).collect();
        per_class_top1(&preds, &labels, &all)
    };
    let (u, mut per_class) = split(&ds.test_unseen_idx)?;
    let (s, seen) = split(&ds.test_seen_idx)?;
    per_class.extend(seen);
    Ok(Metrics {
        t: None,
        u: Some(u),
        s: Some(s),
        h: Some(harmonic_mean(u, s)),
        per_class,
    })
}
