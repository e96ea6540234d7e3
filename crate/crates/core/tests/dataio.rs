mod common;

use std::collections::HashSet;
use std::fs;

use epgn::config::NormStats;
use epgn::dataio::{load_dataset, make_synthetic, normalize_features, save_dataset, SynthConfig};
use epgn::{DataError, Error};
use proptest::prelude::*;

fn synth() -> impl Strategy<Value = SynthConfig> {
    (3usize..8, 5usize..20, 1usize..7, 1usize..5, 0.0f64..0.3, any::<u64>()).prop_flat_map(
        |(classes, per_class, feature_dim, semantic_dim, noise, seed)| {
            (1..classes).prop_map(move |unseen| SynthConfig {
                classes,
                per_class,
                feature_dim,
                semantic_dim,
                noise,
                unseen,
                seed,
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn save_then_load_is_identity(cfg in synth()) {
        let ds = make_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(back.digest(), ds.digest());
    }

    #[test]
    fn synthetic_splits_partition_instances(cfg in synth()) {
        let ds = make_synthetic(&cfg).unwrap();
        ds.validate().unwrap();
        prop_assert_eq!(ds.num_instances(), cfg.classes * cfg.per_class);
        prop_assert_eq!(ds.unseen_classes.len(), cfg.unseen);
        let seen: HashSet<usize> = ds.seen_classes.iter().copied().collect();
        let mut all: Vec<usize> = ds.train_idx.iter().chain(&ds.test_seen_idx).chain(&ds.test_unseen_idx).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..ds.num_instances()).collect::<Vec<_>>());
        for &i in ds.train_idx.iter().chain(&ds.test_seen_idx) {
            prop_assert!(seen.contains(&ds.labels[i]));
        }
        for &i in &ds.test_unseen_idx {
            prop_assert!(!seen.contains(&ds.labels[i]));
        }
    }

    #[test]
    fn normalized_features_lie_in_unit_box(cfg in synth(), all in any::<bool>()) {
        let stats = if all { NormStats::All } else { NormStats::Train };
        let ds = normalize_features(&make_synthetic(&cfg).unwrap(), stats).unwrap();
        prop_assert!(ds.features.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn end_to_end_split_sizes() {
    let ds = make_synthetic(&common::e2e_synth(7)).unwrap();
    assert_eq!(ds.train_idx.len(), 800);
    assert_eq!(ds.test_seen_idx.len(), 200);
    assert_eq!(ds.test_unseen_idx.len(), 500);
    assert_eq!(ds.seen_classes.len(), 10);
}

#[test]
fn noiseless_data_is_solved_by_the_ridge_oracle() {
    for seed in 0..3 {
        let cfg = SynthConfig {
            noise: 0.0,
            ..common::e2e_synth(seed)
        };
        let ds = normalize_features(&make_synthetic(&cfg).unwrap(), NormStats::Train).unwrap();
        assert_eq!(common::ridge_oracle(&ds, common::RIDGE_LAMBDA), 1.0, "seed {seed}");
    }
}

fn saved() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&make_synthetic(&SynthConfig { classes: 4, per_class: 5, feature_dim: 3, semantic_dim: 2, noise: 0.1, unseen: 1, seed: 3 }).unwrap(), dir.path()).unwrap();
    dir
}

#[test]
fn loader_reports_typed_errors() {
    let dir = saved();
    fs::remove_file(dir.path().join("labels.txt")).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Data(DataError::MissingFile(_)))));

    let dir = saved();
    let path = dir.path().join("features.bin");
    let mut bytes = fs::read(&path).unwrap();
    bytes.pop();
    fs::write(&path, bytes).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Data(DataError::HeaderMismatch { .. }))));

    let dir = saved();
    let path = dir.path().join("labels.txt");
    let text = fs::read_to_string(&path).unwrap().replacen('0', "9", 1);
    fs::write(&path, text).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Data(DataError::LabelOutOfRange { .. }))));

    let dir = saved();
    let path = dir.path().join("labels.txt");
    fs::write(&path, fs::read_to_string(&path).unwrap().replacen('0', "x", 1)).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Data(DataError::Parse { .. }))));

    let dir = saved();
    let path = dir.path().join("split.txt");
    let text = fs::read_to_string(&path).unwrap();
    let seen_first = text.lines().skip_while(|l| *l != "[seen]").nth(1).unwrap().to_string();
    let text = text.replace("[unseen]\n", &format!("[unseen]\n{seen_first}\n"));
    fs::write(&path, text).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Data(DataError::OverlappingSplit { .. }))));
}
