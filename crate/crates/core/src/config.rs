//! Training configuration and its flat `key = value` text form.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distance {
    /// Squared Euclidean distance.
    Euclidean,
    /// `1 - cos(x, p)`.
    Cosine,
}

/// Output layer of the generator. A ReLU tail can leave output units
/// negative for every class from the first step, after which they never
/// recover; `Linear` is the default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GOutput {
    Relu,
    Linear,
}

/// Output layer of the critic. `Relu` is the literal reading that clamps
/// scores at zero; `Linear` keeps the critic unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DOutput {
    Linear,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

/// Which interpolated inputs the gradient penalty differentiates against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyScope {
    /// Visual interpolate only.
    Visual,
    /// Concatenated visual and semantic interpolates.
    Joint,
}

/// Source of the per-dimension min/max used for feature scaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormStats {
    Train,
    All,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} '{}'", stringify!($ty), other
                    ))),
                }
            }
        }
    };
}

text_enum!(Distance { Euclidean => "euclidean", Cosine => "cosine" });
text_enum!(GOutput { Relu => "relu", Linear => "linear" });
text_enum!(DOutput { Linear => "linear", Relu => "relu" });
text_enum!(Reduction { Mean => "mean", Sum => "sum" });
text_enum!(PenaltyScope { Visual => "visual", Joint => "joint" });
text_enum!(NormStats { Train => "train", All => "all" });

/// Every knob of a training run. Defaults are the full-scale setup
/// (widths 1800/1800/1600, base rate 5e-5, 100 epochs per episode,
/// 10 refine epochs, 10 mimetic-unseen classes).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub base_lr: f64,
    pub refine_lr_ratio: f64,
    pub epochs_per_episode: usize,
    pub refine_epochs: usize,
    pub episodes: usize,
    pub batch_size: usize,
    pub n_mimetic: usize,
    pub critic_steps: usize,
    pub distance: Distance,
    pub dropout: f64,
    pub g_output: GOutput,
    pub d_output: DOutput,
    pub loss_reduction: Reduction,
    pub penalty_scope: PenaltyScope,
    pub ce_baseline: bool,
    pub f_hidden: usize,
    pub g_hidden: usize,
    pub d_hidden: usize,
    pub normalization: NormStats,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            lambda: 10.0,
            base_lr: 5e-5,
            refine_lr_ratio: 0.1,
            epochs_per_episode: 100,
            refine_epochs: 10,
            episodes: 20,
            batch_size: 32,
            n_mimetic: 10,
            critic_steps: 5,
            distance: Distance::Euclidean,
            dropout: 0.5,
            g_output: GOutput::Linear,
            d_output: DOutput::Linear,
            loss_reduction: Reduction::Mean,
            penalty_scope: PenaltyScope::Visual,
            ce_baseline: false,
            f_hidden: 1800,
            g_hidden: 1800,
            d_hidden: 1600,
            normalization: NormStats::Train,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{}' for {}", value.trim(), key)))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("invalid value '{other}' for {key}"))),
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 25] = [
        "alpha",
        "beta",
        "gamma",
        "lambda",
        "base_lr",
        "refine_lr_ratio",
        "epochs_per_episode",
        "refine_epochs",
        "episodes",
        "batch_size",
        "n_mimetic",
        "critic_steps",
        "distance",
        "dropout",
        "g_output",
        "d_output",
        "loss_reduction",
        "penalty_scope",
        "ce_baseline",
        "f_hidden",
        "g_hidden",
        "d_hidden",
        "normalization",
        "checkpoint_every",
        "seed",
    ];

    /// Assign one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "alpha" => self.alpha = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "base_lr" => self.base_lr = parse(key, value)?,
            "refine_lr_ratio" => self.refine_lr_ratio = parse(key, value)?,
            "epochs_per_episode" => self.epochs_per_episode = parse(key, value)?,
            "refine_epochs" => self.refine_epochs = parse(key, value)?,
            "episodes" => self.episodes = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "n_mimetic" => self.n_mimetic = parse(key, value)?,
            "critic_steps" => self.critic_steps = parse(key, value)?,
            "distance" => self.distance = value.parse()?,
            "dropout" => self.dropout = parse(key, value)?,
            "g_output" => self.g_output = value.parse()?,
            "d_output" => self.d_output = value.parse()?,
            "loss_reduction" => self.loss_reduction = value.parse()?,
            "penalty_scope" => self.penalty_scope = value.parse()?,
            "ce_baseline" => self.ce_baseline = parse_bool(key, value)?,
            "f_hidden" => self.f_hidden = parse(key, value)?,
            "g_hidden" => self.g_hidden = parse(key, value)?,
            "d_hidden" => self.d_hidden = parse(key, value)?,
            "normalization" => self.normalization = value.parse()?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Apply every `key = value` line of `text`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "gamma" => self.gamma.to_string(),
            "lambda" => self.lambda.to_string(),
            "base_lr" => self.base_lr.to_string(),
            "refine_lr_ratio" => self.refine_lr_ratio.to_string(),
            "epochs_per_episode" => self.epochs_per_episode.to_string(),
            "refine_epochs" => self.refine_epochs.to_string(),
            "episodes" => self.episodes.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "n_mimetic" => self.n_mimetic.to_string(),
            "critic_steps" => self.critic_steps.to_string(),
            "distance" => self.distance.to_string(),
            "dropout" => self.dropout.to_string(),
            "g_output" => self.g_output.to_string(),
            "d_output" => self.d_output.to_string(),
            "loss_reduction" => self.loss_reduction.to_string(),
            "penalty_scope" => self.penalty_scope.to_string(),
            "ce_baseline" => self.ce_baseline.to_string(),
            "f_hidden" => self.f_hidden.to_string(),
            "g_hidden" => self.g_hidden.to_string(),
            "d_hidden" => self.d_hidden.to_string(),
            "normalization" => self.normalization.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    /// Canonical text form; `from_text(to_text())` round-trips exactly.
    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{} = {}\n", k, self.get(k).expect("known key")))
            .collect()
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Check counts and ranges. `n_seen`, when known, bounds `n_mimetic`.
    pub fn validate(&self, n_seen: Option<usize>) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("{name} must be a finite nonnegative number"));
            }
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive".into());
        }
        if !(self.refine_lr_ratio > 0.0 && self.refine_lr_ratio.is_finite()) {
            return bad("refine_lr_ratio must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        for (name, v) in [
            ("refine_epochs", self.refine_epochs),
            ("episodes", self.episodes),
            ("batch_size", self.batch_size),
            ("critic_steps", self.critic_steps),
            ("f_hidden", self.f_hidden),
            ("g_hidden", self.g_hidden),
            ("d_hidden", self.d_hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if let Some(n) = n_seen {
            if self.n_mimetic >= n {
                return bad(format!(
                    "n_mimetic ({}) must be smaller than the number of seen classes ({n})",
                    self.n_mimetic
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.set("distance", "cosine").unwrap();
        cfg.set("base_lr", "0.00123").unwrap();
        cfg.set("ce_baseline", "true").unwrap();
        cfg.set("seed", "99").unwrap();
        let back = TrainConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn comments_and_unknown_keys() {
        let cfg = TrainConfig::from_text("# comment\n\nalpha = 0\n").unwrap();
        assert_eq!(cfg.alpha, 0.0);
        assert!(matches!(
            TrainConfig::from_text("nope = 1"),
            Err(Error::Config(_))
        ));
        assert!(TrainConfig::from_text("distance = manhattan").is_err());
    }

    #[test]
    fn n_mimetic_bound() {
        let cfg = TrainConfig {
            n_mimetic: 10,
            ..Default::default()
        };
        assert!(cfg.validate(Some(11)).is_ok());
        assert!(cfg.validate(Some(10)).is_err());
        let zero = TrainConfig {
            n_mimetic: 0,
            ..Default::default()
        };
        assert!(zero.validate(Some(1)).is_ok());
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = TrainConfig::default();
        let mut other = TrainConfig::default();
        for k in TrainConfig::KEYS {
            other.set(k, &cfg.get(k).unwrap()).unwrap();
        }
        assert_eq!(other, cfg);
    }
}
