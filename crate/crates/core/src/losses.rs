//! Training objectives: the two cross-modal regressions, the adversarial
//! critic/generator pair with gradient penalty, the multi-modal
//! cross-entropy, their weighted combination, the distance-softmax refining
//! loss and a plain cross-entropy head used as a baseline.

use crate::config::{Distance, PenaltyScope, Reduction};
use crate::error::{Error, Result};
use crate::networks::{BoundMlp, BoundPgn, PgnModel};
use crate::tensor_core::{grad, StreamRng, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Gradient-penalty coefficient.
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            lambda: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for w in [self.alpha, self.beta, self.gamma, self.lambda] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("loss weight {w} must be nonnegative")));
            }
        }
        Ok(())
    }
}

/// A minibatch plus the semantic buffer of the classes it may belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `b × D` features.
    pub x: Tensor,
    /// `b × K` semantics of each instance's class.
    pub a: Tensor,
    /// Row of `support` holding each instance's class.
    pub y: Vec<usize>,
    /// `S × K` semantic prototypes of the candidate classes.
    pub support: Tensor,
}

impl Batch {
    pub fn new(x: Tensor, y: Vec<usize>, support: Tensor) -> Result<Self> {
        if let Some(&bad) = y.iter().find(|&&c| c >= support.rows()) {
            return Err(Error::Batch(format!(
                "label {bad} outside a buffer of {} classes",
                support.rows()
            )));
        }
        let a = support.select_rows(&y);
        let b = Batch { x, a, y, support };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.rank() != 2 || self.x.rows() != n || self.a.rank() != 2 || self.a.rows() != n {
            return Err(Error::Batch(format!(
                "x {:?}, a {:?}, {} labels",
                self.x.shape(),
                self.a.shape(),
                n
            )));
        }
        if self.support.rank() != 2 || self.support.cols() != self.a.cols() {
            return Err(Error::Batch(format!(
                "support buffer {:?} vs semantics {:?}",
                self.support.shape(),
                self.a.shape()
            )));
        }
        for (i, &c) in self.y.iter().enumerate() {
            if c >= self.support.rows() || self.a.row(i) != self.support.row(c) {
                return Err(Error::Batch(format!(
                    "row {i} does not match its support prototype"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// A batch placed on a tape as constants.
pub struct BatchVars<'b> {
    pub x: Var,
    pub a: Var,
    pub support: Var,
    pub y: &'b [usize],
}

impl Batch {
    pub fn bind(&self, tape: &Tape) -> BatchVars<'_> {
        BatchVars {
            x: tape.constant(self.x.clone()),
            a: tape.constant(self.a.clone()),
            support: tape.constant(self.support.clone()),
            y: &self.y,
        }
    }
}

fn reduce(per_row: &Var, reduction: Reduction) -> Result<Var> {
    match reduction {
        Reduction::Sum => per_row.sum(),
        Reduction::Mean => per_row.mean(),
    }
}

fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &c) in labels.iter().enumerate() {
        if c >= classes {
            return Err(Error::Batch(format!("label {c} outside {classes} classes")));
        }
        t.data_mut()[i * classes + c] = 1.0;
    }
    Ok(t)
}

/// Row-wise squared error `Σ_j (pred_ij - target_ij)²`, reduced over rows.
pub fn regression_loss(pred: &Var, target: &Var, reduction: Reduction) -> Result<Var> {
    reduce(&pred.sub(target)?.sq_norm_rows()?, reduction)
}

/// `-log softmax(logits)[y]` per row, reduced over rows.
pub fn cross_entropy(logits: &Var, labels: &[usize], reduction: Reduction) -> Result<Var> {
    let (rows, classes) = (logits.value().rows(), logits.value().cols());
    if rows != labels.len() {
        return Err(Error::Batch(format!("{rows} logit rows, {} labels", labels.len())));
    }
    let mask = logits.tape().constant(one_hot(labels, classes)?);
    let picked = logits.mul(&mask)?.sum_axis1()?;
    reduce(&logits.logsumexp_rows()?.sub(&picked)?, reduction)
}

/// Numerically stable row softmax of plain logits.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let tape = Tape::untracked();
    Ok(tape
        .constant(logits.clone())
        .log_softmax_rows()?
        .exp()?
        .value()
        .clone())
}

/// Semantic→visual regression, `Σᵢ ‖F(xᵢ) - aᵢ‖²` (or its batch mean).
pub fn loss_v2a(
    model: &BoundPgn,
    batch: &BatchVars,
    reduction: Reduction,
    rng: Option<&mut StreamRng>,
) -> Result<Var> {
    regression_loss(&model.f_forward(&batch.x, rng)?, &batch.a, reduction)
}

/// Visual-prototype regression, `Σᵢ ‖G(aᵢ) - xᵢ‖²` (or its batch mean).
pub fn loss_a2v(model: &BoundPgn, batch: &BatchVars, reduction: Reduction) -> Result<Var> {
    regression_loss(&model.g_forward(&batch.a, None)?, &batch.x, reduction)
}

/// Logits `⟨xᵢ, G(a_j)⟩` over the support buffer.
pub fn visual_logits(model: &BoundPgn, x: &Var, support: &Var) -> Result<Var> {
    x.matmul_nt(&model.g_forward(support, None)?)
}

/// Logits `⟨F(xᵢ), a_j⟩` given precomputed `F(x)`.
pub fn semantic_logits(inferred: &Var, support: &Var) -> Result<Var> {
    inferred.matmul_nt(support)
}

/// Visual-space class probabilities for a batch, evaluation mode.
pub fn mce_probs_visual(model: &PgnModel, batch: &Batch) -> Result<Tensor> {
    let tape = Tape::untracked();
    let m = model.bind(&tape);
    let b = batch.bind(&tape);
    softmax_rows(visual_logits(&m, &b.x, &b.support)?.value())
}

/// Semantic-space class probabilities for a batch, evaluation mode.
pub fn mce_probs_semantic(model: &PgnModel, batch: &Batch) -> Result<Tensor> {
    let tape = Tape::untracked();
    let m = model.bind(&tape);
    let b = batch.bind(&tape);
    let inferred = m.f_forward(&b.x, None)?;
    softmax_rows(semantic_logits(&inferred, &b.support)?.value())
}

/// Multi-modal cross-entropy from precomputed `F(x)`: the visual and the
/// semantic softmax losses added together. No parameters beyond F and G.
pub fn mce_from_inferred(
    model: &BoundPgn,
    batch: &BatchVars,
    inferred: &Var,
    reduction: Reduction,
) -> Result<Var> {
    let visual = cross_entropy(&visual_logits(model, &batch.x, &batch.support)?, batch.y, reduction)?;
    let semantic = cross_entropy(&semantic_logits(inferred, &batch.support)?, batch.y, reduction)?;
    visual.add(&semantic)
}

pub fn mce_loss(
    model: &BoundPgn,
    batch: &BatchVars,
    reduction: Reduction,
    rng: Option<&mut StreamRng>,
) -> Result<Var> {
    let inferred = model.f_forward(&batch.x, rng)?;
    mce_from_inferred(model, batch, &inferred, reduction)
}

/// Per-row mixing weights for the penalty interpolates.
pub fn draw_tau(rows: usize, rng: &mut StreamRng) -> Tensor {
    use rand::Rng;
    Tensor::vector((0..rows).map(|_| rng.gen::<f64>()).collect())
}

/// `τ·real + (1 - τ)·fake`, one `τ` per row.
pub fn interpolate(real: &Var, fake: &Var, tau: &Tensor) -> Result<Var> {
    let tape = real.tape();
    let cols = real.value().cols();
    let t = tape.constant(tau.clone()).broadcast_cols(cols)?.detach();
    let one_minus = tape.constant(t.value().map(|v| 1.0 - v));
    real.mul(&t)?.add(&fake.mul(&one_minus)?)
}

/// `mean (‖∇ D(x̂, â)‖₂ - 1)²`, differentiated with respect to `x̂` (or
/// `[x̂ ‖ â]` under [`PenaltyScope::Joint`]). The inner gradient is recorded,
/// so the result is differentiable with respect to D's parameters.
pub fn gradient_penalty(
    model: &BoundPgn,
    x_hat: &Var,
    a_hat: &Var,
    scope: PenaltyScope,
    rng: Option<&mut StreamRng>,
) -> Result<Var> {
    let tape = x_hat.tape();
    let x_hat = if x_hat.is_tracked() { x_hat.clone() } else { tape.leaf(x_hat.value().clone()) };
    let a_hat = if a_hat.is_tracked() { a_hat.clone() } else { tape.leaf(a_hat.value().clone()) };
    let score = model.d_forward(&x_hat, &a_hat, rng)?.sum()?;
    let sq_norm = match scope {
        PenaltyScope::Visual => grad(&score, &[&x_hat], true)?[0].sq_norm_rows()?,
        PenaltyScope::Joint => {
            let g = grad(&score, &[&x_hat, &a_hat], true)?;
            g[0].sq_norm_rows()?.add(&g[1].sq_norm_rows()?)?
        }
    };
    let penalty = sq_norm.sqrt()?.affine(1.0, -1.0)?.square()?.mean()?;
    if !penalty.item().is_finite() {
        return Err(Error::Numeric("gradient penalty".into()));
    }
    Ok(penalty)
}

/// Pieces of the critic objective.
pub struct CriticTerms {
    /// `-(E D(real) - E D(fake) - λ·penalty)`, minimized over D.
    pub objective: Var,
    pub real_mean: Var,
    pub fake_mean: Var,
    pub penalty: Var,
}

/// Critic objective for given fake pairs. `tau` holds one interpolation
/// weight per row.
#[allow(clippy::too_many_arguments)]
pub fn critic_objective(
    model: &BoundPgn,
    x: &Var,
    a: &Var,
    x_fake: &Var,
    a_fake: &Var,
    tau: &Tensor,
    lambda: f64,
    scope: PenaltyScope,
    mut rng: Option<&mut StreamRng>,
) -> Result<CriticTerms> {
    let real_mean = model.d_forward(x, a, rng.as_deref_mut())?.mean()?;
    let fake_mean = model.d_forward(x_fake, a_fake, rng.as_deref_mut())?.mean()?;
    let x_hat = interpolate(x, x_fake, tau)?;
    let a_hat = interpolate(a, a_fake, tau)?;
    let penalty = gradient_penalty(model, &x_hat, &a_hat, scope, rng)?;
    let objective = real_mean
        .sub(&fake_mean)?
        .sub(&penalty.scale(lambda)?)?
        .neg()?;
    Ok(CriticTerms {
        objective,
        real_mean,
        fake_mean,
        penalty,
    })
}

/// `-E D(x̃, ã)`, minimized over F and G.
pub fn generator_adversarial(
    model: &BoundPgn,
    x_fake: &Var,
    a_fake: &Var,
    rng: Option<&mut StreamRng>,
) -> Result<Var> {
    model.d_forward(x_fake, a_fake, rng)?.mean()?.neg()
}

/// Critic and generator objectives for one batch, with `x̃ = G(a)`,
/// `ã = F(x)` and per-row `τ ~ U(0, 1)` drawn from `tau_rng`.
pub fn wgan_losses(
    model: &BoundPgn,
    batch: &BatchVars,
    lambda: f64,
    scope: PenaltyScope,
    tau_rng: &mut StreamRng,
    mut rng: Option<&mut StreamRng>,
) -> Result<(Var, Var)> {
    let x_fake = model.g_forward(&batch.a, None)?;
    let a_fake = model.f_forward(&batch.x, rng.as_deref_mut())?;
    let tau = draw_tau(batch.y.len(), tau_rng);
    let critic = critic_objective(
        model,
        &batch.x,
        &batch.a,
        &x_fake,
        &a_fake,
        &tau,
        lambda,
        scope,
        rng.as_deref_mut(),
    )?;
    let generator = generator_adversarial(model, &x_fake, &a_fake, rng)?;
    Ok((critic.objective, generator))
}

/// Discriminative term of the generator objective.
pub enum Discriminative<'a> {
    /// Multi-modal cross-entropy over the support buffer.
    Mce,
    /// Auxiliary affine head applied to real features and to the generated
    /// prototypes of each instance; `labels` index the head's outputs.
    CrossEntropy {
        head: &'a BoundMlp<'a>,
        labels: &'a [usize],
    },
}

/// Weighted generator objective and its components. Terms whose weight is
/// zero are not computed.
pub struct GeneratorLoss {
    pub total: Var,
    pub adversarial: Var,
    pub v2a: Option<Var>,
    pub a2v: Option<Var>,
    pub discriminative: Option<Var>,
}

/// `adversarial + α·L_v2a + β·L_a2v + γ·L_mce`, to be minimized over F and G.
pub fn total_generator_loss(
    model: &BoundPgn,
    batch: &BatchVars,
    weights: &LossWeights,
    reduction: Reduction,
    discriminative: &Discriminative,
    mut rng: Option<&mut StreamRng>,
) -> Result<GeneratorLoss> {
    let inferred = model.f_forward(&batch.x, rng.as_deref_mut())?;
    let generated = model.g_forward(&batch.a, None)?;
    let adversarial = generator_adversarial(model, &generated, &inferred, rng)?;

    let mut total = adversarial.clone();
    let v2a = if weights.alpha != 0.0 {
        let l = regression_loss(&inferred, &batch.a, reduction)?;
        total = total.add(&l.scale(weights.alpha)?)?;
        Some(l)
    } else {
        None
    };
    let a2v = if weights.beta != 0.0 {
        let l = regression_loss(&generated, &batch.x, reduction)?;
        total = total.add(&l.scale(weights.beta)?)?;
        Some(l)
    } else {
        None
    };
    let disc = if weights.gamma != 0.0 {
        let l = match discriminative {
            Discriminative::Mce => mce_from_inferred(model, batch, &inferred, reduction)?,
            Discriminative::CrossEntropy { head, labels } => {
                let real = ce_baseline_loss(head, &batch.x, labels, reduction)?;
                let fake = ce_baseline_loss(head, &generated, labels, reduction)?;
                real.add(&fake)?
            }
        };
        total = total.add(&l.scale(weights.gamma)?)?;
        Some(l)
    } else {
        None
    };
    Ok(GeneratorLoss {
        total,
        adversarial,
        v2a,
        a2v,
        discriminative: disc,
    })
}

/// Pairwise distances between rows of `x` (`T × D`) and `protos`
/// (`R × D`) as tape operations. Euclidean is the squared distance.
pub fn distance_matrix(x: &Var, protos: &Var, metric: Distance) -> Result<Var> {
    let (t, r) = (x.value().rows(), protos.value().rows());
    match metric {
        Distance::Euclidean => {
            let xx = x.sq_norm_rows()?.broadcast_cols(r)?;
            let pp = protos.sq_norm_rows()?.broadcast_rows(t)?;
            xx.add(&pp)?.sub(&x.matmul_nt(protos)?.scale(2.0)?)
        }
        Distance::Cosine => {
            let unit = |v: &Var| -> Result<Var> {
                let cols = v.value().cols();
                let inv = v.sq_norm_rows()?.sqrt()?.safe_recip()?.broadcast_cols(cols)?;
                v.mul(&inv)
            };
            unit(x)?.matmul_nt(&unit(protos)?)?.affine(-1.0, 1.0)
        }
    }
}

/// Distance-softmax negative log-likelihood, `-Σ_t log p(y_t | x_t)` with
/// `p(k | x) ∝ exp(-d(x, G(a_k)))` over the refine classes, with `g` the
/// bound generator.
pub fn refine_loss(
    g: &BoundMlp,
    x: &Var,
    semantics: &Var,
    labels: &[usize],
    metric: Distance,
) -> Result<Var> {
    if semantics.value().rows() == 0 {
        return Err(Error::EmptyClassSet);
    }
    let protos = g.forward(semantics, None)?;
    let logits = distance_matrix(x, &protos, metric)?.neg()?;
    cross_entropy(&logits, labels, Reduction::Sum)
}

/// Softmax cross-entropy of an affine head over `inputs`.
pub fn ce_baseline_loss(
    head: &BoundMlp,
    inputs: &Var,
    labels: &[usize],
    reduction: Reduction,
) -> Result<Var> {
    cross_entropy(&head.forward(inputs, None)?, labels, reduction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::networks::{init_model, Activation, Layer, MlpParams};
    use crate::tensor_core::RngStreams;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            f_hidden: 5,
            g_hidden: 6,
            d_hidden: 4,
            dropout: 0.0,
            ..Default::default()
        }
    }

    /// Two-layer identity maps (ReLU both layers) over a `n`-wide space.
    fn identity_mlp(n: usize, act: Activation) -> MlpParams {
        let layer = |a| Layer {
            weight: Tensor::identity(n),
            bias: Tensor::zeros(&[n]),
            activation: a,
            dropout: 0.0,
        };
        MlpParams::new(vec![layer(Activation::Relu), layer(act)]).unwrap()
    }

    #[test]
    fn v2a_perfect_and_hand_values() {
        let n = 2;
        let mut model = PgnModel::shape_template(n, n, &TrainConfig { f_hidden: n, g_hidden: n, d_hidden: 3, ..tiny_cfg() });
        model.f = identity_mlp(n, Activation::Relu);
        let x = m(2, 2, &[0.2, 0.7, 0.9, 0.1]);
        let batch = Batch::new(x.clone(), vec![0, 1], x.clone()).unwrap();
        let tape = Tape::new();
        let bm = model.bind(&tape);
        let l = loss_v2a(&bm, &batch.bind(&tape), Reduction::Sum, None).unwrap();
        assert_eq!(l.item(), 0.0);

        let zero = PgnModel::shape_template(2, 2, &tiny_cfg());
        let bz = zero.bind(&tape);
        let single = Batch::new(m(1, 2, &[0.5, 0.5]), vec![0], m(1, 2, &[3.0, 4.0])).unwrap();
        let l = loss_v2a(&bz, &single.bind(&tape), Reduction::Sum, None).unwrap();
        assert_eq!(l.item(), 25.0);

        let doubled = Batch::new(m(2, 2, &[0.5, 0.5, 0.1, 0.2]), vec![0, 0], m(1, 2, &[3.0, 4.0])).unwrap();
        let l2 = loss_v2a(&bz, &doubled.bind(&tape), Reduction::Sum, None).unwrap();
        assert_eq!(l2.item(), 50.0);
        let mean = loss_v2a(&bz, &doubled.bind(&tape), Reduction::Mean, None).unwrap();
        assert_eq!(mean.item(), 25.0);
    }

    #[test]
    fn a2v_hand_value() {
        let zero = PgnModel::shape_template(3, 2, &tiny_cfg());
        let tape = Tape::new();
        let b = Batch::new(m(1, 3, &[1.0, 1.0, 1.0]), vec![0], m(1, 2, &[0.3, 0.4])).unwrap();
        let l = loss_a2v(&zero.bind(&tape), &b.bind(&tape), Reduction::Sum).unwrap();
        assert_eq!(l.item(), 3.0);
    }

    #[test]
    fn a2v_perfect_fit() {
        let n = 3;
        let mut model = PgnModel::shape_template(n, n, &TrainConfig { f_hidden: n, g_hidden: n, d_hidden: 2, ..tiny_cfg() });
        // G with a linear tail through ReLU'd identity reproduces nonnegative inputs.
        model.g = identity_mlp(n, Activation::Relu);
        let x = m(2, 3, &[0.1, 0.5, 0.9, 0.3, 0.0, 0.2]);
        let b = Batch::new(x.clone(), vec![0, 1], x).unwrap();
        let tape = Tape::new();
        let l = loss_a2v(&model.bind(&tape), &b.bind(&tape), Reduction::Sum).unwrap();
        assert_eq!(l.item(), 0.0);
    }

    #[test]
    fn batch_rejects_inconsistent_rows() {
        let mut b = Batch::new(m(1, 2, &[0.0, 0.0]), vec![0], m(1, 2, &[1.0, 2.0])).unwrap();
        b.a = m(1, 2, &[1.0, 3.0]);
        assert!(matches!(b.validate(), Err(Error::Batch(_))));
        assert!(Batch::new(m(1, 2, &[0.0, 0.0]), vec![1], m(1, 2, &[1.0, 2.0])).is_err());
    }

    #[test]
    fn softmax_hand_values_and_stability() {
        let e = std::f64::consts::E;
        let p = softmax_rows(&m(1, 2, &[1.0, 0.0])).unwrap();
        assert!((p.data()[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / (e + 1.0)).abs() < 1e-15);

        let big = softmax_rows(&m(2, 3, &[1e4, -1e4, 9999.0, -1e4, -1e4, -1e4])).unwrap();
        for r in 0..2 {
            assert!((big.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mce_hand_value() {
        // Logits (1, 0) in both spaces, true class 0.
        let tape = Tape::new();
        let logits = tape.constant(m(1, 2, &[1.0, 0.0]));
        let ce = cross_entropy(&logits, &[0], Reduction::Sum).unwrap();
        let two = ce.scale(2.0).unwrap().item();
        let e = std::f64::consts::E;
        assert!((two - 2.0 * -(e / (e + 1.0)).ln()).abs() < 1e-15);
        assert!((two - 0.6265).abs() < 1e-4);
    }

    #[test]
    fn mce_single_class_is_zero() {
        let model = init_model(4, 3, &tiny_cfg(), &RngStreams::new(3)).unwrap();
        let b = Batch::new(m(2, 4, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]), vec![0, 0], m(1, 3, &[0.2, 0.9, 0.4])).unwrap();
        let tape = Tape::new();
        let l = mce_loss(&model.bind(&tape), &b.bind(&tape), Reduction::Sum, None).unwrap();
        assert_eq!(l.item(), 0.0);
        assert_eq!(mce_probs_visual(&model, &b).unwrap().data(), &[1.0, 1.0]);
        assert_eq!(mce_probs_semantic(&model, &b).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn uniform_probabilities_give_two_ln_s() {
        // Zero model: G(a) = 0 and F(x) = 0, so all logits vanish.
        let zero = PgnModel::shape_template(3, 2, &tiny_cfg());
        let support = m(4, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let b = Batch::new(m(1, 3, &[0.4, 0.1, 0.9]), vec![2], support).unwrap();
        let tape = Tape::new();
        let l = mce_loss(&zero.bind(&tape), &b.bind(&tape), Reduction::Sum, None).unwrap();
        assert!((l.item() - 2.0 * 4f64.ln()).abs() < 1e-12);
        let p = mce_probs_visual(&zero, &b).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn zero_critic_penalty_is_lambda() {
        let zero = PgnModel::shape_template(3, 2, &tiny_cfg());
        let b = Batch::new(m(2, 3, &[0.1, 0.2, 0.3, 0.6, 0.5, 0.4]), vec![0, 1], m(2, 2, &[0.3, 0.1, 0.8, 0.5])).unwrap();
        let tape = Tape::new();
        let mut tau = RngStreams::new(0).stream("tau");
        let (critic, generator) = wgan_losses(
            &zero.bind(&tape),
            &b.bind(&tape),
            10.0,
            PenaltyScope::Visual,
            &mut tau,
            None,
        )
        .unwrap();
        assert_eq!(critic.item(), 10.0);
        assert_eq!(generator.item(), 0.0);
    }

    #[test]
    fn refine_loss_edge_cases() {
        let zero = PgnModel::shape_template(3, 2, &tiny_cfg());
        let tape = Tape::new();
        let bm = zero.g.bind(&tape);
        let x = tape.constant(m(3, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.9, 0.8, 0.7]));
        let sem = tape.constant(m(4, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]));
        // Zero G: every prototype is the origin, so all distances tie.
        let l = refine_loss(&bm, &x, &sem, &[0, 3, 1], Distance::Euclidean).unwrap();
        assert!((l.item() - 3.0 * 4f64.ln()).abs() < 1e-12);
        let one = tape.constant(m(1, 2, &[0.5, 0.5]));
        let l = refine_loss(&bm, &x, &one, &[0, 0, 0], Distance::Cosine).unwrap();
        assert_eq!(l.item(), 0.0);
        let empty = tape.constant(Tensor::zeros(&[0, 2]));
        assert!(matches!(
            refine_loss(&bm, &x, &empty, &[], Distance::Euclidean),
            Err(Error::EmptyClassSet)
        ));
    }

    #[test]
    fn ce_head_zero_weights() {
        let head = MlpParams::new(vec![Layer::zeros(3, 5, Activation::Linear, 0.0)]).unwrap();
        let tape = Tape::new();
        let bh = head.bind(&tape);
        let x = tape.constant(m(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
        let l = ce_baseline_loss(&bh, &x, &[1, 4], Reduction::Sum).unwrap();
        assert!((l.item() - 2.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_head_large_margin_saturates() {
        let mut layer = Layer::zeros(2, 2, Activation::Linear, 0.0);
        layer.weight = m(2, 2, &[100.0, -100.0, -100.0, 100.0]);
        let head = MlpParams::new(vec![layer]).unwrap();
        let tape = Tape::new();
        let x = tape.constant(m(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let l = ce_baseline_loss(&head.bind(&tape), &x, &[0, 1], Reduction::Sum).unwrap();
        assert!(l.item() < 1e-80);
    }
}
