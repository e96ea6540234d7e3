#![allow(dead_code)]
pub mod checks;


use std::path::Path;
use std::process::{Command, Output};

use epgn::config::{Distance, NormStats};
use epgn::dataio::{make_synthetic, normalize_features, Dataset, SynthConfig};
use epgn::evaluator::{distance, per_class_top1};
use nalgebra::DMatrix;

pub const BIN: &str = env!("CARGO_BIN_EXE_epgn");

pub const RIDGE_LAMBDA: f64 = 1e-3;

pub fn epgn(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

pub fn epgn_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

/// The end-to-end dataset: 15 classes, 5 unseen, 16-d features, 8-d semantics.
pub fn e2e_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        classes: 15,
        per_class: 100,
        feature_dim: 16,
        semantic_dim: 8,
        noise: 0.05,
        unseen: 5,
        seed,
    }
}

pub fn small_synth(seed: u64) -> Dataset {
    let raw = make_synthetic(&SynthConfig {
        classes: 6,
        per_class: 20,
        feature_dim: 5,
        semantic_dim: 3,
        noise: 0.05,
        unseen: 2,
        seed,
    })
    .unwrap();
    normalize_features(&raw, NormStats::Train).unwrap()
}

fn class_mean(ds: &Dataset, pool: &[usize], class: usize) -> Vec<f64> {
    let rows = ds.instances_of(pool, &[class]);
    let d = ds.feature_dim();
    let mut mean = vec![0.0; d];
    for &i in &rows {
        for (m, v) in mean.iter_mut().zip(ds.features.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
    mean
}

/// Ridge regression from semantics (with an intercept column) to the seen
/// class means of the training split; unseen test instances are assigned
/// to the nearest predicted mean. Returns per-class top-1 over unseen.
pub fn ridge_oracle(ds: &Dataset, lambda: f64) -> f64 {
    let k = ds.semantic_dim();
    let with_bias = |classes: &[usize]| {
        DMatrix::from_fn(classes.len(), k + 1, |r, c| {
            if c == k {
                1.0
            } else {
                ds.semantics.row(classes[r])[c]
            }
        })
    };
    let seen = &ds.seen_classes;
    let a = with_bias(seen);
    let means: Vec<Vec<f64>> = seen.iter().map(|&c| class_mean(ds, &ds.train_idx, c)).collect();
    let m = DMatrix::from_fn(seen.len(), ds.feature_dim(), |r, c| means[r][c]);
    let gram = a.transpose() * &a + DMatrix::identity(k + 1, k + 1) * lambda;
    let w = gram.lu().solve(&(a.transpose() * m)).expect("ridge system is regular");
    let protos = with_bias(&ds.unseen_classes) * w;

    let preds: Vec<usize> = ds
        .test_unseen_idx
        .iter()
        .map(|&i| {
            let x = ds.features.row(i);
            let mut best = (f64::INFINITY, 0);
            for (j, &c) in ds.unseen_classes.iter().enumerate() {
                let p: Vec<f64> = protos.row(j).iter().copied().collect();
                let d = distance(x, &p, Distance::Euclidean);
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        })
        .collect();
    let labels: Vec<usize> = ds.test_unseen_idx.iter().map(|&i| ds.labels[i]).collect();
    per_class_top1(&preds, &labels, &ds.unseen_classes).unwrap().0
}
