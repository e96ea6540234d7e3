//! Episodic training: class-exclusive support/refine splits of the seen
//! classes, the base stage (critic and generator updates over support
//! classes), the refine stage (G only, distance softmax over the refine
//! classes) and the driver that carries parameters across episodes.
//!
//! The driver expects features already scaled into `[0, 1]`.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::config::TrainConfig;
use crate::dataio::Dataset;
use crate::error::{DataError, Error, Result};
use crate::evaluator::evaluate_on;
use crate::losses::{
    critic_objective, draw_tau, refine_loss, total_generator_loss, Batch, Discriminative,
    LossWeights,
};
use crate::networks::{init_model, Activation, Layer, MlpParams, PgnModel};
use crate::tensor_core::{adam_step, grad, AdamState, RngStreams, StreamRng, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Episode {
    /// Sorted ids of the classes the base stage trains on.
    pub support_classes: Vec<usize>,
    /// Sorted ids of the mimetic unseen classes.
    pub refine_classes: Vec<usize>,
}

/// Uniformly random split of `seen` into `n_mimetic` refine classes and the
/// remaining support classes.
pub fn sample_episode(seen: &[usize], n_mimetic: usize, rng: &mut StreamRng) -> Result<Episode> {
    if n_mimetic >= seen.len() {
        return Err(Error::Split(format!(
            "cannot hold out {n_mimetic} of {} seen classes",
            seen.len()
        )));
    }
    let mut order = seen.to_vec();
    order.shuffle(rng);
    let mut refine_classes = order[..n_mimetic].to_vec();
    let mut support_classes = order[n_mimetic..].to_vec();
    refine_classes.sort_unstable();
    support_classes.sort_unstable();
    Ok(Episode {
        support_classes,
        refine_classes,
    })
}

/// One line of the training history. Missing values are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub episode: usize,
    pub base_loss_mean: f64,
    pub refine_loss_mean: f64,
    /// Per-class accuracy on the episode's refine classes after the episode.
    pub refine_t: f64,
}

fn csv_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("episode,base_loss_mean,refine_loss_mean,refine_T\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.episode,
            csv_float(r.base_loss_mean),
            csv_float(r.refine_loss_mean),
            csv_float(r.refine_t)
        );
    }
    s
}

/// Mutable training state: the model, optimizer moments and RNG streams.
/// Everything persists across episodes.
pub struct Trainer<'d> {
    ds: &'d Dataset,
    cfg: TrainConfig,
    model: PgnModel,
    /// Linear head over the seen classes, present with `ce_baseline`.
    head: Option<MlpParams>,
    seen_pos: HashMap<usize, usize>,
    opt_d: AdamState,
    opt_fg: AdamState,
    opt_refine: AdamState,
    episode_rng: StreamRng,
    shuffle_rng: StreamRng,
    dropout_rng: StreamRng,
    tau_rng: StreamRng,
}

fn weights(cfg: &TrainConfig) -> LossWeights {
    LossWeights {
        alpha: cfg.alpha,
        beta: cfg.beta,
        gamma: cfg.gamma,
        lambda: cfg.lambda,
    }
}

fn values(grads: &[Var]) -> Vec<Tensor> {
    grads.iter().map(|g| g.value().clone()).collect()
}

impl<'d> Trainer<'d> {
    /// Validate `cfg` against `ds` and initialize the model from the seed.
    pub fn new(ds: &'d Dataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate(Some(ds.seen_classes.len()))?;
        let streams = RngStreams::new(cfg.seed);
        let model = init_model(ds.feature_dim(), ds.semantic_dim(), cfg, &streams)?;
        Self::with_model(ds, cfg, model)
    }

    /// Start from an existing model (for example a checkpoint).
    pub fn with_model(ds: &'d Dataset, cfg: &TrainConfig, model: PgnModel) -> Result<Self> {
        cfg.validate(Some(ds.seen_classes.len()))?;
        if model.feature_dim() != ds.feature_dim() || model.semantic_dim() != ds.semantic_dim() {
            return Err(Error::dim(
                "trainer",
                format!(
                    "model {}<->{} vs dataset D={} K={}",
                    model.feature_dim(),
                    model.semantic_dim(),
                    ds.feature_dim(),
                    ds.semantic_dim()
                ),
            ));
        }
        let streams = RngStreams::new(cfg.seed);
        let head = cfg.ce_baseline.then(|| {
            MlpParams::new(vec![Layer::zeros(
                ds.feature_dim(),
                ds.seen_classes.len(),
                Activation::Linear,
                0.0,
            )])
        });
        let head = head.transpose()?;
        let mut fg: Vec<&Tensor> = model.f.params();
        fg.extend(model.g.params());
        if let Some(h) = &head {
            fg.extend(h.params());
        }
        Ok(Trainer {
            ds,
            cfg: cfg.clone(),
            opt_d: AdamState::new(&model.d.params()),
            opt_fg: AdamState::new(&fg),
            opt_refine: AdamState::new(&model.g.params()),
            head,
            seen_pos: ds
                .seen_classes
                .iter()
                .enumerate()
                .map(|(i, &c)| (c, i))
                .collect(),
            model,
            episode_rng: streams.stream("episode"),
            shuffle_rng: streams.stream("shuffle"),
            dropout_rng: streams.stream("dropout"),
            tau_rng: streams.stream("tau"),
        })
    }

    pub fn model(&self) -> &PgnModel {
        &self.model
    }

    pub fn into_model(self) -> PgnModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn sample_episode(&mut self) -> Result<Episode> {
        sample_episode(&self.ds.seen_classes, self.cfg.n_mimetic, &mut self.episode_rng)
    }

    fn check_episode(&self, ep: &Episode) -> Result<()> {
        let seen = |c: &usize| self.seen_pos.contains_key(c);
        if !ep.support_classes.iter().all(seen) || !ep.refine_classes.iter().all(seen) {
            return Err(Error::Split("episode uses a class that is not seen".into()));
        }
        if ep.support_classes.iter().any(|c| ep.refine_classes.contains(c)) {
            return Err(Error::Split("support and refine classes overlap".into()));
        }
        Ok(())
    }

    fn shuffled(&mut self, idx: &[usize]) -> Vec<usize> {
        let mut order = idx.to_vec();
        order.shuffle(&mut self.shuffle_rng);
        order
    }

    /// `epochs_per_episode` epochs of WGAN-GP critic updates and generator
    /// updates over support-class training instances. Returns the mean
    /// generator objective (NaN with zero epochs).
    pub fn train_base_stage(&mut self, ep: &Episode) -> Result<f64> {
        self.check_episode(ep)?;
        let instances = self.ds.instances_of(&self.ds.train_idx, &ep.support_classes);
        if instances.is_empty() {
            return Err(DataError::Invalid("no training instances for the support classes".into()).into());
        }
        let support = self.ds.class_semantics(&ep.support_classes)?;
        let pos: HashMap<usize, usize> = ep
            .support_classes
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i))
            .collect();
        let (mut total, mut steps) = (0.0, 0usize);
        for _ in 0..self.cfg.epochs_per_episode {
            let order = self.shuffled(&instances);
            for chunk in order.chunks(self.cfg.batch_size) {
                let classes: Vec<usize> = chunk.iter().map(|&i| self.ds.labels[i]).collect();
                let batch = Batch::new(
                    self.ds.features.select_rows(chunk),
                    classes.iter().map(|c| pos[c]).collect(),
                    support.clone(),
                )?;
                for _ in 0..self.cfg.critic_steps {
                    self.critic_step(&batch)?;
                }
                total += self.generator_step(&batch, &classes)?;
                steps += 1;
            }
        }
        Ok(if steps == 0 { f64::NAN } else { total / steps as f64 })
    }

    fn critic_step(&mut self, batch: &Batch) -> Result<()> {
        let grads = {
            let tape = Tape::new();
            let bound = self.model.bind(&tape);
            let bv = batch.bind(&tape);
            let x_fake = bound.g_forward(&bv.a, None)?.detach();
            let a_fake = bound.f_forward(&bv.x, Some(&mut self.dropout_rng))?.detach();
            let tau = draw_tau(batch.len(), &mut self.tau_rng);
            let terms = critic_objective(
                &bound,
                &bv.x,
                &bv.a,
                &x_fake,
                &a_fake,
                &tau,
                self.cfg.lambda,
                self.cfg.penalty_scope,
                Some(&mut self.dropout_rng),
            )?;
            let wrt: Vec<&Var> = bound.d_vars().iter().collect();
            values(&grad(&terms.objective, &wrt, false)?)
        };
        let refs: Vec<&Tensor> = grads.iter().collect();
        adam_step(&mut self.model.d.params_mut(), &refs, &mut self.opt_d, self.cfg.base_lr)
    }

    fn generator_step(&mut self, batch: &Batch, classes: &[usize]) -> Result<f64> {
        let (loss, grads) = {
            let tape = Tape::new();
            let bound = self.model.bind(&tape);
            let bv = batch.bind(&tape);
            let head = self.head.as_ref().map(|h| h.bind(&tape));
            let labels: Vec<usize> = classes.iter().map(|c| self.seen_pos[c]).collect();
            let disc = match &head {
                Some(h) => Discriminative::CrossEntropy {
                    head: h,
                    labels: &labels,
                },
                None => Discriminative::Mce,
            };
            let loss = total_generator_loss(
                &bound,
                &bv,
                &weights(&self.cfg),
                self.cfg.loss_reduction,
                &disc,
                Some(&mut self.dropout_rng),
            )?;
            let mut wrt: Vec<&Var> = bound.f_vars().iter().chain(bound.g_vars()).collect();
            if let Some(h) = &head {
                wrt.extend(h.vars());
            }
            (loss.total.item(), values(&grad(&loss.total, &wrt, false)?))
        };
        let refs: Vec<&Tensor> = grads.iter().collect();
        let mut params = self.model.f.params_mut();
        params.extend(self.model.g.params_mut());
        if let Some(h) = self.head.as_mut() {
            params.extend(h.params_mut());
        }
        adam_step(&mut params, &refs, &mut self.opt_fg, self.cfg.base_lr)?;
        Ok(loss)
    }

    /// `refine_epochs` epochs of the distance-softmax loss over refine-class
    /// training instances, updating G only at `base_lr · refine_lr_ratio`.
    /// Returns the mean per-instance loss, or `None` when there are no
    /// refine classes.
    pub fn refine_stage(&mut self, ep: &Episode) -> Result<Option<f64>> {
        self.check_episode(ep)?;
        if ep.refine_classes.is_empty() {
            return Ok(None);
        }
        let instances = self.ds.instances_of(&self.ds.train_idx, &ep.refine_classes);
        if instances.is_empty() {
            return Ok(None);
        }
        let semantics = self.ds.class_semantics(&ep.refine_classes)?;
        let pos: HashMap<usize, usize> = ep
            .refine_classes
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i))
            .collect();
        let lr = self.cfg.base_lr * self.cfg.refine_lr_ratio;
        let (mut total, mut count) = (0.0, 0usize);
        for _ in 0..self.cfg.refine_epochs {
            let order = self.shuffled(&instances);
            for chunk in order.chunks(self.cfg.batch_size) {
                let labels: Vec<usize> = chunk.iter().map(|&i| pos[&self.ds.labels[i]]).collect();
                let (loss, grads) = {
                    let tape = Tape::new();
                    let g = self.model.g.bind(&tape);
                    let x = tape.constant(self.ds.features.select_rows(chunk));
                    let a = tape.constant(semantics.clone());
                    let loss = refine_loss(&g, &x, &a, &labels, self.cfg.distance)?;
                    let wrt: Vec<&Var> = g.vars().iter().collect();
                    (loss.item(), values(&grad(&loss, &wrt, false)?))
                };
                let refs: Vec<&Tensor> = grads.iter().collect();
                adam_step(&mut self.model.g.params_mut(), &refs, &mut self.opt_refine, lr)?;
                total += loss;
                count += chunk.len();
            }
        }
        Ok(Some(total / count as f64))
    }

    /// Per-class accuracy on the refine classes' training instances, with
    /// the refine classes as the only candidates.
    pub fn validate_episode(&self, ep: &Episode) -> Result<Option<f64>> {
        if ep.refine_classes.is_empty() {
            return Ok(None);
        }
        let instances = self.ds.instances_of(&self.ds.train_idx, &ep.refine_classes);
        if instances.is_empty() {
            return Ok(None);
        }
        let (t, _) = evaluate_on(&self.model, self.ds, &ep.refine_classes, &instances, self.cfg.distance)?;
        Ok(Some(t))
    }

    /// Sample an episode, run both stages and validate.
    pub fn run_episode(&mut self, index: usize) -> Result<HistoryRow> {
        let ep = self.sample_episode()?;
        let base = self.train_base_stage(&ep)?;
        let refine = self.refine_stage(&ep)?;
        let t = self.validate_episode(&ep)?;
        if !self.model.is_finite() {
            return Err(Error::Numeric(format!("parameters diverged in episode {index}")));
        }
        Ok(HistoryRow {
            episode: index,
            base_loss_mean: base,
            refine_loss_mean: refine.unwrap_or(f64::NAN),
            refine_t: t.unwrap_or(f64::NAN),
        })
    }
}

/// Full training run; `on_episode` sees each history row and the model
/// leaving that episode.
pub fn run_training_with<F>(
    ds: &Dataset,
    cfg: &TrainConfig,
    mut on_episode: F,
) -> Result<(PgnModel, Vec<HistoryRow>)>
where
    F: FnMut(&HistoryRow, &PgnModel) -> Result<()>,
{
    let mut trainer = Trainer::new(ds, cfg)?;
    let mut history = Vec::with_capacity(cfg.episodes);
    for e in 0..cfg.episodes {
        let row = trainer.run_episode(e)?;
        on_episode(&row, trainer.model())?;
        history.push(row);
    }
    Ok((trainer.into_model(), history))
}

pub fn run_training(ds: &Dataset, cfg: &TrainConfig) -> Result<(PgnModel, Vec<HistoryRow>)> {
    run_training_with(ds, cfg, |_, _| Ok(()))
}
