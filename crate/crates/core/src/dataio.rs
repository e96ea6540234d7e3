//! Datasets: the on-disk directory format, `[0, 1]` feature scaling and a
//! seeded synthetic benchmark.
//!
//! Directory layout (integers little-endian):
//!
//! * `features.bin`: `"EPGF"`, u32 `N`, u32 `D`, then `N·D` f32 row-major.
//! * `attributes.bin`: `"EPGA"`, u32 `M`, u32 `K`, then `M·K` f32 row-major.
//! * `labels.txt`: `N` lines, one 0-based class id each.
//! * `split.txt`: sections `[seen]`, `[unseen]` (class ids) and
//!   `[test_seen]`, `[test_unseen]` (instance indices). The training set is
//!   every seen-class instance not listed under `[test_seen]`, unless an
//!   explicit `[train]` section is given.
//! * `classes.txt` (optional): `M` class names.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sha2::{Digest, Sha256};

use crate::config::NormStats;
use crate::error::{DataError, Error, Result};
use crate::tensor_core::{RngStreams, Tensor};

const FEATURES_MAGIC: &[u8; 4] = b"EPGF";
const ATTRIBUTES_MAGIC: &[u8; 4] = b"EPGA";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `N × D` visual features.
    pub features: Tensor,
    /// `M × K` class semantics.
    pub semantics: Tensor,
    pub labels: Vec<usize>,
    pub seen_classes: Vec<usize>,
    pub unseen_classes: Vec<usize>,
    pub train_idx: Vec<usize>,
    pub test_seen_idx: Vec<usize>,
    pub test_unseen_idx: Vec<usize>,
    pub class_names: Option<Vec<String>>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Data(DataError::Invalid(msg.into()))
}

fn overlap(file: &Path, what: &str, a: &[usize], b: &[usize]) -> Result<()> {
    let set: HashSet<usize> = a.iter().copied().collect();
    if let Some(x) = b.iter().find(|x| set.contains(x)) {
        return Err(DataError::OverlappingSplit {
            file: file.to_path_buf(),
            detail: format!("{what} share {x}"),
        }
        .into());
    }
    Ok(())
}

impl Dataset {
    pub fn num_instances(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.semantics.rows()
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantics.cols()
    }

    /// Check every structural invariant; `file` names the split source in
    /// error messages.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(Path::new("split.txt"))
    }

    fn validate_with(&self, file: &Path) -> Result<()> {
        let (n, m) = (self.num_instances(), self.num_classes());
        if self.features.rank() != 2 || self.semantics.rank() != 2 {
            return Err(invalid("features and semantics must be matrices"));
        }
        if self.labels.len() != n {
            return Err(invalid(format!("{} labels for {n} instances", self.labels.len())));
        }
        if let Some((row, &label)) = self.labels.iter().enumerate().find(|(_, &l)| l >= m) {
            return Err(DataError::LabelOutOfRange {
                file: PathBuf::from("labels.txt"),
                row: row + 1,
                label,
                classes: m,
            }
            .into());
        }
        if !self.features.is_finite() || !self.semantics.is_finite() {
            return Err(invalid("non-finite feature or semantic value"));
        }
        overlap(file, "seen and unseen classes", &self.seen_classes, &self.unseen_classes)?;
        let classes: BTreeSet<usize> = self
            .seen_classes
            .iter()
            .chain(&self.unseen_classes)
            .copied()
            .collect();
        if classes.len() != self.seen_classes.len() + self.unseen_classes.len()
            || classes.len() != m
            || classes.iter().any(|&c| c >= m)
        {
            return Err(invalid(format!(
                "seen and unseen classes must partition [0, {m})"
            )));
        }
        for (name, set) in [
            ("train", &self.train_idx),
            ("test_seen", &self.test_seen_idx),
            ("test_unseen", &self.test_unseen_idx),
        ] {
            if let Some(&i) = set.iter().find(|&&i| i >= n) {
                return Err(invalid(format!("{name} index {i} outside [0, {n})")));
            }
            let uniq: HashSet<usize> = set.iter().copied().collect();
            if uniq.len() != set.len() {
                return Err(invalid(format!("{name} lists an instance twice")));
            }
        }
        overlap(file, "train and test_seen", &self.train_idx, &self.test_seen_idx)?;
        overlap(file, "train and test_unseen", &self.train_idx, &self.test_unseen_idx)?;
        overlap(file, "test_seen and test_unseen", &self.test_seen_idx, &self.test_unseen_idx)?;
        let seen: HashSet<usize> = self.seen_classes.iter().copied().collect();
        for (name, set, want_seen) in [
            ("train", &self.train_idx, true),
            ("test_seen", &self.test_seen_idx, true),
            ("test_unseen", &self.test_unseen_idx, false),
        ] {
            if let Some(&i) = set
                .iter()
                .find(|&&i| seen.contains(&self.labels[i]) != want_seen)
            {
                return Err(invalid(format!(
                    "{name} instance {i} has class {} from the wrong split",
                    self.labels[i]
                )));
            }
        }
        if let Some(names) = &self.class_names {
            if names.len() != m {
                return Err(invalid(format!("{} class names for {m} classes", names.len())));
            }
        }
        Ok(())
    }

    /// Instances among `pool` whose class is in `classes`, in pool order.
    pub fn instances_of(&self, pool: &[usize], classes: &[usize]) -> Vec<usize> {
        let set: HashSet<usize> = classes.iter().copied().collect();
        pool.iter()
            .copied()
            .filter(|&i| set.contains(&self.labels[i]))
            .collect()
    }

    /// Semantic rows of `classes`, in the given order.
    pub fn class_semantics(&self, classes: &[usize]) -> Result<Tensor> {
        if let Some(&c) = classes.iter().find(|&&c| c >= self.num_classes()) {
            return Err(invalid(format!("no semantics row for class {c}")));
        }
        Ok(self.semantics.select_rows(classes))
    }

    /// In-memory bytes of each file of the directory format.
    pub fn encode_files(&self) -> Vec<(&'static str, Vec<u8>)> {
        let mut files = vec![
            ("features.bin", encode_matrix(FEATURES_MAGIC, &self.features)),
            ("attributes.bin", encode_matrix(ATTRIBUTES_MAGIC, &self.semantics)),
            (
                "labels.txt",
                self.labels
                    .iter()
                    .map(|l| format!("{l}\n"))
                    .collect::<String>()
                    .into_bytes(),
            ),
            ("split.txt", self.encode_split().into_bytes()),
        ];
        if let Some(names) = &self.class_names {
            let text: String = names.iter().map(|n| format!("{n}\n")).collect();
            files.push(("classes.txt", text.into_bytes()));
        }
        files
    }

    fn encode_split(&self) -> String {
        let mut s = String::new();
        for (name, items) in [
            ("seen", &self.seen_classes),
            ("unseen", &self.unseen_classes),
            ("test_seen", &self.test_seen_idx),
            ("test_unseen", &self.test_unseen_idx),
        ] {
            s.push_str(&format!("[{name}]\n"));
            for i in items {
                s.push_str(&format!("{i}\n"));
            }
        }
        if self.train_idx != self.derived_train() {
            s.push_str("[train]\n");
            for i in &self.train_idx {
                s.push_str(&format!("{i}\n"));
            }
        }
        s
    }

    fn derived_train(&self) -> Vec<usize> {
        let seen: HashSet<usize> = self.seen_classes.iter().copied().collect();
        let test: HashSet<usize> = self.test_seen_idx.iter().copied().collect();
        (0..self.num_instances())
            .filter(|i| seen.contains(&self.labels[*i]) && !test.contains(i))
            .collect()
    }

    /// SHA-256 over the encoded files, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, bytes) in self.encode_files() {
            h.update(name.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn encode_matrix(magic: &[u8; 4], t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + t.len() * 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn decode_matrix(path: &Path, magic: &[u8; 4], bytes: &[u8]) -> Result<Tensor> {
    let mismatch = |detail: String| -> Error {
        DataError::HeaderMismatch {
            file: path.to_path_buf(),
            detail,
        }
        .into()
    };
    if bytes.len() < 12 || &bytes[..4] != magic {
        return Err(mismatch(format!(
            "expected magic {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() != rows * cols * 4 {
        return Err(mismatch(format!(
            "header declares {rows}x{cols} values but the body holds {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Tensor::matrix(rows, cols, data)
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(DataError::MissingFile(path).into());
    }
    fs::read(&path).map_err(|e| Error::io(path, e))
}

fn read_text(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    String::from_utf8(read_file(dir, name)?).map_err(|_| {
        DataError::Parse {
            file: path,
            row: 0,
            detail: "not valid UTF-8".into(),
        }
        .into()
    })
}

fn parse_index(path: &Path, row: usize, line: &str) -> Result<usize> {
    line.parse().map_err(|_| {
        DataError::Parse {
            file: path.to_path_buf(),
            row,
            detail: format!("expected a nonnegative integer, got '{line}'"),
        }
        .into()
    })
}

#[derive(Default)]
struct SplitFile {
    seen: Vec<usize>,
    unseen: Vec<usize>,
    test_seen: Vec<usize>,
    test_unseen: Vec<usize>,
    train: Option<Vec<usize>>,
}

fn parse_split(path: &Path, text: &str) -> Result<SplitFile> {
    let mut split = SplitFile::default();
    let mut found = HashSet::new();
    let mut current: Option<&mut Vec<usize>> = None;
    let mut train = Vec::new();
    let mut has_train = false;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if !found.insert(name.to_string()) {
                return Err(DataError::Parse {
                    file: path.to_path_buf(),
                    row: n + 1,
                    detail: format!("section [{name}] repeated"),
                }
                .into());
            }
            current = Some(match name {
                "seen" => &mut split.seen,
                "unseen" => &mut split.unseen,
                "test_seen" => &mut split.test_seen,
                "test_unseen" => &mut split.test_unseen,
                "train" => {
                    has_train = true;
                    &mut train
                }
                other => {
                    return Err(DataError::Parse {
                        file: path.to_path_buf(),
                        row: n + 1,
                        detail: format!("unknown section [{other}]"),
                    }
                    .into())
                }
            });
            continue;
        }
        let value = parse_index(path, n + 1, line)?;
        match current.as_deref_mut() {
            Some(v) => v.push(value),
            None => {
                return Err(DataError::Parse {
                    file: path.to_path_buf(),
                    row: n + 1,
                    detail: "value before any section header".into(),
                }
                .into())
            }
        }
    }
    for required in ["seen", "unseen", "test_seen", "test_unseen"] {
        if !found.contains(required) {
            return Err(DataError::Parse {
                file: path.to_path_buf(),
                row: 0,
                detail: format!("missing section [{required}]"),
            }
            .into());
        }
    }
    if has_train {
        split.train = Some(train);
    }
    Ok(split)
}

/// Read and validate a dataset directory. Features are returned as stored
/// (not rescaled).
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let feat_path = dir.join("features.bin");
    let features = decode_matrix(&feat_path, FEATURES_MAGIC, &read_file(dir, "features.bin")?)?;
    let attr_path = dir.join("attributes.bin");
    let semantics = decode_matrix(&attr_path, ATTRIBUTES_MAGIC, &read_file(dir, "attributes.bin")?)?;

    let labels_path = dir.join("labels.txt");
    let labels_text = read_text(dir, "labels.txt")?;
    let mut labels = Vec::with_capacity(features.rows());
    for (n, line) in labels_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let label = parse_index(&labels_path, n + 1, line)?;
        if label >= semantics.rows() {
            return Err(DataError::LabelOutOfRange {
                file: labels_path,
                row: n + 1,
                label,
                classes: semantics.rows(),
            }
            .into());
        }
        labels.push(label);
    }
    if labels.len() != features.rows() {
        return Err(DataError::HeaderMismatch {
            file: labels_path,
            detail: format!("{} labels for {} feature rows", labels.len(), features.rows()),
        }
        .into());
    }

    let split_path = dir.join("split.txt");
    let split = parse_split(&split_path, &read_text(dir, "split.txt")?)?;

    let class_names = if dir.join("classes.txt").exists() {
        let text = read_text(dir, "classes.txt")?;
        let names: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if names.len() != semantics.rows() {
            return Err(DataError::HeaderMismatch {
                file: dir.join("classes.txt"),
                detail: format!("{} names for {} classes", names.len(), semantics.rows()),
            }
            .into());
        }
        Some(names)
    } else {
        None
    };

    let mut ds = Dataset {
        features,
        semantics,
        labels,
        seen_classes: split.seen,
        unseen_classes: split.unseen,
        train_idx: Vec::new(),
        test_seen_idx: split.test_seen,
        test_unseen_idx: split.test_unseen,
        class_names,
    };
    // Class ids must be checked before deriving the training set from them.
    if let Some(&c) = ds
        .seen_classes
        .iter()
        .chain(&ds.unseen_classes)
        .find(|&&c| c >= ds.num_classes())
    {
        return Err(invalid(format!("{}: class {c} outside [0, {})", split_path.display(), ds.num_classes())));
    }
    ds.train_idx = match split.train {
        Some(t) => t,
        None => ds.derived_train(),
    };
    ds.validate_with(&split_path)?;
    Ok(ds)
}

/// Write `ds` in the directory format, creating `dir` if needed.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in ds.encode_files() {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Per-dimension min-max scaling into `[0, 1]`. Statistics come from the
/// training instances (or all instances with [`NormStats::All`]); values
/// outside the fitted range are clamped and zero-range dimensions map to 0.
pub fn normalize_features(ds: &Dataset, stats: NormStats) -> Result<Dataset> {
    let rows: Vec<usize> = match stats {
        NormStats::Train => ds.train_idx.clone(),
        NormStats::All => (0..ds.num_instances()).collect(),
    };
    if rows.is_empty() {
        return Err(invalid("no instances to compute normalization statistics from"));
    }
    let d = ds.feature_dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for &i in &rows {
        for (j, &v) in ds.features.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let mut out = ds.clone();
    for (idx, v) in out.features.data_mut().iter_mut().enumerate() {
        let j = idx % d;
        let range = hi[j] - lo[j];
        *v = if range > 0.0 {
            ((*v - lo[j]) / range).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    pub semantic_dim: usize,
    pub noise: f64,
    pub unseen: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.per_class == 0 || self.feature_dim == 0 || self.semantic_dim == 0 {
            return Err(Error::Config("synthetic sizes must all be at least 1".into()));
        }
        if self.unseen >= self.classes {
            return Err(Error::Config(format!(
                "unseen count {} must be smaller than the class count {}",
                self.unseen, self.classes
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be a finite nonnegative number".into()));
        }
        Ok(())
    }
}

fn round_f32(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = *v as f32 as f64;
    }
}

/// Synthetic benchmark with a linear semantics→class-mean map.
///
/// Semantics `a_c ~ U[0,1]^K`, hidden map `W` with `N(0, 1/K)` entries,
/// instances `W a_c + ε` with `ε ~ N(0, σ² I)`, then per-dimension min-max
/// scaling over all instances. The last `unseen` class ids are held out;
/// each seen class keeps 80% of its instances for training. Values are
/// rounded to f32 so the directory format round-trips exactly.
pub fn make_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let streams = RngStreams::new(cfg.seed);
    let (m, n, d, k) = (cfg.classes, cfg.per_class, cfg.feature_dim, cfg.semantic_dim);

    let mut attr_rng = streams.stream("synth-semantics");
    let semantics: Vec<f64> = (0..m * k).map(|_| attr_rng.gen::<f64>()).collect();
    let mut semantics = Tensor::matrix(m, k, semantics)?;

    let mut map_rng = streams.stream("synth-map");
    let scale = (1.0 / k as f64).sqrt();
    let map: Vec<f64> = (0..d * k)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut map_rng))
        .collect::<Vec<f64>>();

    let mut noise_rng = streams.stream("synth-noise");
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut features = Vec::with_capacity(m * n * d);
    let mut labels = Vec::with_capacity(m * n);
    for c in 0..m {
        let a = semantics.row(c).to_vec();
        let mean: Vec<f64> = (0..d)
            .map(|i| (0..k).map(|j| map[i * k + j] * a[j]).sum())
            .collect();
        for _ in 0..n {
            for &mu in &mean {
                let eps = if cfg.noise > 0.0 { noise.sample(&mut noise_rng) } else { 0.0 };
                features.push(mu + eps);
            }
            labels.push(c);
        }
    }
    let features = Tensor::matrix(m * n, d, features)?;

    let seen_classes: Vec<usize> = (0..m - cfg.unseen).collect();
    let unseen_classes: Vec<usize> = (m - cfg.unseen..m).collect();
    let mut split_rng = streams.stream("synth-split");
    let mut train_idx = Vec::new();
    let mut test_seen_idx = Vec::new();
    for &c in &seen_classes {
        let mut idx: Vec<usize> = (c * n..(c + 1) * n).collect();
        idx.shuffle(&mut split_rng);
        let n_test = n / 5;
        test_seen_idx.extend_from_slice(&idx[..n_test]);
        train_idx.extend_from_slice(&idx[n_test..]);
    }
    train_idx.sort_unstable();
    test_seen_idx.sort_unstable();
    let test_unseen_idx: Vec<usize> = (seen_classes.len() * n..m * n).collect();

    let mut ds = Dataset {
        features,
        semantics: semantics.clone(),
        labels,
        seen_classes,
        unseen_classes,
        train_idx,
        test_seen_idx,
        test_unseen_idx,
        class_names: None,
    };
    ds = normalize_features(&ds, NormStats::All)?;
    round_f32(&mut ds.features);
    round_f32(&mut semantics);
    ds.semantics = semantics;
    ds.validate()?;
    Ok(ds)
}
