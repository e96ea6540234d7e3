//! Command-line entry points: `synth`, `train`, `eval` and `gradcheck`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric error (including a failed gradient check).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Distance, TrainConfig};
use crate::dataio::{load_dataset, make_synthetic, normalize_features, save_dataset, SynthConfig};
use crate::episode::{history_csv, run_training_with};
use crate::error::{Error, Result};
use crate::evaluator::{gzsl_eval, zsl_eval};
use crate::gradsuite::{run_gradient_suite, Fault};
use crate::networks::PgnModel;

pub const CHECKPOINT_FILE: &str = "model.epgn";
pub const CONFIG_FILE: &str = "model.cfg";
pub const HISTORY_FILE: &str = "history.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "epgn", version, about = "Episode-based prototype generating network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic dataset directory.
    Synth(SynthArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a trained model.
    Eval(EvalArgs),
    /// Compare loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 15)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 8)]
    pub attr_dim: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 5)]
    pub unseen: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training flags. Every `TrainConfig` field has a flag; flags override
/// the config file, which overrides the defaults.
#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub base_lr: Option<String>,
    #[arg(long)]
    pub refine_lr_ratio: Option<String>,
    #[arg(long)]
    pub epochs_per_episode: Option<String>,
    #[arg(long)]
    pub refine_epochs: Option<String>,
    #[arg(long)]
    pub episodes: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub n_mimetic: Option<String>,
    #[arg(long)]
    pub critic_steps: Option<String>,
    /// euclidean | cosine
    #[arg(long)]
    pub distance: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    /// relu | linear
    #[arg(long)]
    pub g_output: Option<String>,
    /// linear | relu
    #[arg(long)]
    pub d_output: Option<String>,
    /// mean | sum
    #[arg(long)]
    pub loss_reduction: Option<String>,
    /// visual | joint
    #[arg(long)]
    pub penalty_scope: Option<String>,
    /// Replace the multi-modal cross-entropy with a linear softmax head.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ce_baseline: Option<String>,
    #[arg(long)]
    pub f_hidden: Option<String>,
    #[arg(long)]
    pub g_hidden: Option<String>,
    #[arg(long)]
    pub d_hidden: Option<String>,
    /// train | all
    #[arg(long)]
    pub normalization: Option<String>,
    /// Write a checkpoint every N episodes (0 disables).
    #[arg(long)]
    pub checkpoint_every: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
}

impl TrainArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 25] {
        [
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("lambda", &self.lambda),
            ("base_lr", &self.base_lr),
            ("refine_lr_ratio", &self.refine_lr_ratio),
            ("epochs_per_episode", &self.epochs_per_episode),
            ("refine_epochs", &self.refine_epochs),
            ("episodes", &self.episodes),
            ("batch_size", &self.batch_size),
            ("n_mimetic", &self.n_mimetic),
            ("critic_steps", &self.critic_steps),
            ("distance", &self.distance),
            ("dropout", &self.dropout),
            ("g_output", &self.g_output),
            ("d_output", &self.d_output),
            ("loss_reduction", &self.loss_reduction),
            ("penalty_scope", &self.penalty_scope),
            ("ce_baseline", &self.ce_baseline),
            ("f_hidden", &self.f_hidden),
            ("g_hidden", &self.g_hidden),
            ("d_hidden", &self.d_hidden),
            ("normalization", &self.normalization),
            ("checkpoint_every", &self.checkpoint_every),
            ("seed", &self.seed),
        ]
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Zsl,
    Gzsl,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Training output directory holding the checkpoint and its config.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Zsl)]
    pub mode: Mode,
    /// Defaults to the distance the model was trained with.
    #[arg(long)]
    pub distance: Option<String>,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<String> {
    let ds = make_synthetic(&SynthConfig {
        classes: args.classes,
        per_class: args.per_class,
        feature_dim: args.dim,
        semantic_dim: args.attr_dim,
        noise: args.noise,
        unseen: args.unseen,
        seed: args.seed,
    })?;
    save_dataset(&ds, &args.out)?;
    Ok(ds.digest())
}

/// Train and write the checkpoint, its config, the history and a manifest
/// into `args.out`. Returns the history CSV text.
pub fn cmd_train(args: &TrainArgs) -> Result<String> {
    let started = Instant::now();
    let cfg = args.resolve_config()?;
    cfg.validate(None)?;
    let raw = load_dataset(&args.data)?;
    let ds = normalize_features(&raw, cfg.normalization)?;
    cfg.validate(Some(ds.seen_classes.len()))?;
    let loaded = started.elapsed().as_secs_f64();

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let out = |name: &str| args.out.join(name);
    let mut manifest = serde_json::json!({
        "status": "running",
        "config": cfg.to_text(),
        "config_digest": cfg.digest(),
        "dataset": args.data.display().to_string(),
        "dataset_digest": raw.digest(),
        "seed": cfg.seed,
        "artifacts": {
            "checkpoint": out(CHECKPOINT_FILE).display().to_string(),
            "config": out(CONFIG_FILE).display().to_string(),
            "history": out(HISTORY_FILE).display().to_string(),
        },
        "timings": { "started_unix": unix_seconds(), "load_s": loaded },
    });
    let manifest_path = out(MANIFEST_FILE);
    write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("json") + "\n")?;
    write(&out(CONFIG_FILE), cfg.to_text())?;

    let train_start = Instant::now();
    let every = cfg.checkpoint_every;
    let mut checkpoints = Vec::new();
    let (model, history) = run_training_with(&ds, &cfg, |row, model| {
        if every > 0 && (row.episode + 1) % every == 0 {
            let path = out(&format!("checkpoint_e{:04}.epgn", row.episode + 1));
            write(&path, model.to_checkpoint_bytes())?;
            checkpoints.push(path.display().to_string());
        }
        Ok(())
    })?;
    let history_text = history_csv(&history);
    write(&out(CHECKPOINT_FILE), model.to_checkpoint_bytes())?;
    write(&out(HISTORY_FILE), &history_text)?;

    manifest["status"] = "complete".into();
    manifest["artifacts"]["episode_checkpoints"] = checkpoints.into();
    manifest["timings"]["train_s"] = train_start.elapsed().as_secs_f64().into();
    manifest["timings"]["total_s"] = started.elapsed().as_secs_f64().into();
    write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("json") + "\n")?;
    Ok(history_text)
}

/// Read `model.epgn` and `model.cfg` from a training output directory.
pub fn load_trained(dir: &Path) -> Result<(PgnModel, TrainConfig)> {
    let cfg_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let cfg = TrainConfig::from_text(&text)?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    let file = fs::File::open(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    let model = PgnModel::read_checkpoint(std::io::BufReader::new(file), &cfg)?;
    Ok((model, cfg))
}

/// Evaluate and return the JSON report.
pub fn cmd_eval(args: &EvalArgs) -> Result<String> {
    let (model, cfg) = load_trained(&args.model)?;
    let metric: Distance = match &args.distance {
        Some(d) => d.parse()?,
        None => cfg.distance,
    };
    let ds = normalize_features(&load_dataset(&args.data)?, cfg.normalization)?;
    let metrics = match args.mode {
        Mode::Zsl => zsl_eval(&model, &ds, metric)?,
        Mode::Gzsl => gzsl_eval(&model, &ds, metric)?,
    };
    let report = metrics.to_json(&cfg.digest(), cfg.seed);
    if let Some(path) = &args.out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write(path, &report)?;
    }
    Ok(report)
}

/// Run the gradient suite, one line per loss. Fails with a numeric error
/// when any loss exceeds its tolerance.
pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<String> {
    let fault = args.inject_fault.as_deref().map(str::parse::<Fault>).transpose()?;
    let reports = run_gradient_suite(args.seed, fault)?;
    let text: String = reports.iter().map(|r| format!("{r}\n")).collect();
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(text)
    } else {
        print!("{text}");
        Err(Error::GradCheck(failed.join(", ")))
    }
}

/// Parse `args` (including the program name), run the command and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|digest| format!("{digest}\n")),
        Command::Train(a) => cmd_train(a).map(|_| String::new()),
        Command::Eval(a) => cmd_eval(a).map(|r| if a.out.is_some() { String::new() } else { r }),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            e.exit_code()
        }
    }
}
