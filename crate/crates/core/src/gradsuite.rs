//! Finite-difference self-check of every training loss on a small random
//! problem.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{Distance, PenaltyScope, Reduction, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::{
    critic_objective, draw_tau, gradient_penalty, interpolate, loss_a2v, loss_v2a, mce_loss,
    refine_loss, total_generator_loss, Batch, Discriminative, LossWeights,
};
use crate::networks::{init_model, Activation, BoundMlp, BoundPgn, Layer, MlpParams, PgnModel};
use crate::tensor_core::{grad_check, RngStreams, StreamRng, Tape, Tensor, Var};

pub const LOSS_TOLERANCE: f64 = 1e-4;
pub const PENALTY_TOLERANCE: f64 = 1e-3;
const EPS: f64 = 1e-6;

/// Deliberate bugs the suite must catch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Negate the gradient of the visual-prototype regression while keeping
    /// its value.
    A2vSign,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a2v-sign" => Ok(Fault::A2vSign),
            other => Err(Error::Config(format!("unknown fault '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<20} max_rel_err={:.3e} tol={:.0e} {}",
            self.name,
            self.max_rel_err,
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

#[derive(Clone, Copy)]
struct Nets {
    f: bool,
    g: bool,
    d: bool,
}

const F: Nets = Nets { f: true, g: false, d: false };
const G: Nets = Nets { f: false, g: true, d: false };
const FG: Nets = Nets { f: true, g: true, d: false };
const D: Nets = Nets { f: false, g: false, d: true };

struct Toy {
    model: PgnModel,
    head: MlpParams,
    batch: Batch,
    /// Seen-class index of each batch row for the CE head.
    head_labels: Vec<usize>,
    tau: Tensor,
    seed: u64,
}

fn uniform(rows: usize, cols: usize, rng: &mut StreamRng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen::<f64>()).collect())
        .expect("sized above")
}

fn jitter(params: Vec<&mut Tensor>, rng: &mut StreamRng) {
    let noise = Normal::new(0.0, 0.1).expect("valid sigma");
    for p in params {
        for v in p.data_mut() {
            *v += noise.sample(rng);
        }
    }
}

impl Toy {
    fn new(seed: u64) -> Result<Self> {
        let streams = RngStreams::new(seed);
        let mut rng = streams.stream("gradcheck");
        let dim = rng.gen_range(3..=6);
        let k = rng.gen_range(2..=4);
        let rows = rng.gen_range(3..=6);
        let classes = rng.gen_range(2..=4);
        let cfg = TrainConfig {
            f_hidden: rng.gen_range(3..=7),
            g_hidden: rng.gen_range(3..=7),
            d_hidden: rng.gen_range(3..=7),
            dropout: 0.3,
            seed,
            ..Default::default()
        };
        let mut model = init_model(dim, k, &cfg, &streams)?;
        jitter(model.f.params_mut(), &mut rng);
        jitter(model.g.params_mut(), &mut rng);
        jitter(model.d.params_mut(), &mut rng);
        let mut head = MlpParams::new(vec![Layer::zeros(dim, classes + 1, Activation::Linear, 0.0)])?;
        jitter(head.params_mut(), &mut rng);
        let support = uniform(classes, k, &mut rng);
        let y: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..classes)).collect();
        let head_labels = y.iter().map(|&c| c + 1).collect();
        let batch = Batch::new(uniform(rows, dim, &mut rng), y, support)?;
        let tau = draw_tau(rows, &mut rng);
        Ok(Toy {
            model,
            head,
            batch,
            head_labels,
            tau,
            seed,
        })
    }

    fn dropout_rng(&self) -> StreamRng {
        RngStreams::new(self.seed).stream("gradcheck-dropout")
    }

    fn params(&self, nets: Nets) -> Vec<Tensor> {
        let mut out = Vec::new();
        for (on, mlp) in [(nets.f, &self.model.f), (nets.g, &self.model.g), (nets.d, &self.model.d)] {
            if on {
                out.extend(mlp.params().into_iter().cloned());
            }
        }
        out
    }

    /// Bind the model with the checked networks taken from `vars` and the
    /// rest as constants. Returns the unused tail of `vars`.
    fn bind<'a, 'v>(
        &'a self,
        tape: &Tape,
        nets: Nets,
        mut vars: &'v [Var],
    ) -> Result<(BoundPgn<'a>, &'v [Var])> {
        let mut take = |mlp: &'a MlpParams, on: bool| -> Result<BoundMlp<'a>> {
            if on {
                let (head, tail) = vars.split_at(mlp.params().len());
                vars = tail;
                mlp.bind_vars(head.to_vec())
            } else {
                mlp.bind_vars(mlp.params().into_iter().map(|p| tape.constant(p.clone())).collect())
            }
        };
        let bound = BoundPgn {
            f: take(&self.model.f, nets.f)?,
            g: take(&self.model.g, nets.g)?,
            d: take(&self.model.d, nets.d)?,
        };
        Ok((bound, vars))
    }

    fn check<L>(&self, name: &'static str, tolerance: f64, nets: Nets, extra: &[Tensor], loss: L) -> Result<GradReport>
    where
        L: Fn(&BoundPgn, &[Var], &Tape) -> Result<Var>,
    {
        let mut params = self.params(nets);
        params.extend_from_slice(extra);
        let max_rel_err = grad_check(
            |tape, vars| {
                let (bound, rest) = self.bind(tape, nets, vars)?;
                loss(&bound, rest, tape)
            },
            &params,
            EPS,
            self.seed,
        )?;
        Ok(GradReport {
            name,
            max_rel_err,
            tolerance,
        })
    }
}

fn mutate(loss: Var, fault: Option<Fault>) -> Result<Var> {
    match fault {
        // 2·stop(L) - L keeps the value and flips the gradient.
        Some(Fault::A2vSign) => loss.detach().scale(2.0)?.sub(&loss),
        None => Ok(loss),
    }
}

/// Check every loss on the toy problem drawn from `seed`.
pub fn run_gradient_suite(seed: u64, fault: Option<Fault>) -> Result<Vec<GradReport>> {
    let toy = Toy::new(seed)?;
    let red = Reduction::Mean;
    let mut reports = Vec::new();

    reports.push(toy.check("v2a", LOSS_TOLERANCE, F, &[], |m, _, t| {
        let b = toy.batch.bind(t);
        loss_v2a(m, &b, red, Some(&mut toy.dropout_rng()))
    })?);
    reports.push(toy.check("a2v", LOSS_TOLERANCE, G, &[], |m, _, t| {
        let b = toy.batch.bind(t);
        mutate(loss_a2v(m, &b, red)?, fault)
    })?);
    reports.push(toy.check("mce", LOSS_TOLERANCE, FG, &[], |m, _, t| {
        let b = toy.batch.bind(t);
        mce_loss(m, &b, red, Some(&mut toy.dropout_rng()))
    })?);
    for (name, metric) in [("refine-euclidean", Distance::Euclidean), ("refine-cosine", Distance::Cosine)] {
        reports.push(toy.check(name, LOSS_TOLERANCE, G, &[], |m, _, t| {
            let b = toy.batch.bind(t);
            refine_loss(&m.g, &b.x, &b.support, &toy.batch.y, metric)
        })?);
    }
    let head_params: Vec<Tensor> = toy.head.params().into_iter().cloned().collect();
    reports.push(toy.check("ce-baseline", LOSS_TOLERANCE, G, &head_params, |m, rest, t| {
        let b = toy.batch.bind(t);
        let head = toy.head.bind_vars(rest.to_vec())?;
        let disc = Discriminative::CrossEntropy {
            head: &head,
            labels: &toy.head_labels,
        };
        let weights = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        Ok(total_generator_loss(m, &b, &weights, red, &disc, None)?
            .discriminative
            .expect("gamma is nonzero"))
    })?);
    reports.push(toy.check("generator-total", LOSS_TOLERANCE, FG, &[], |m, _, t| {
        let b = toy.batch.bind(t);
        let weights = LossWeights {
            alpha: 0.7,
            beta: 1.3,
            gamma: 0.5,
            lambda: 10.0,
        };
        Ok(total_generator_loss(m, &b, &weights, red, &Discriminative::Mce, Some(&mut toy.dropout_rng()))?.total)
    })?);
    for (name, scope) in [("penalty-visual", PenaltyScope::Visual), ("penalty-joint", PenaltyScope::Joint)] {
        reports.push(toy.check(name, PENALTY_TOLERANCE, D, &[], |m, _, t| {
            let b = toy.batch.bind(t);
            let x_fake = m.g_forward(&b.a, None)?;
            let a_fake = m.f_forward(&b.x, None)?;
            let x_hat = interpolate(&b.x, &x_fake, &toy.tau)?;
            let a_hat = interpolate(&b.a, &a_fake, &toy.tau)?;
            gradient_penalty(m, &x_hat, &a_hat, scope, Some(&mut toy.dropout_rng()))
        })?);
    }
    reports.push(toy.check("critic", PENALTY_TOLERANCE, D, &[], |m, _, t| {
        let b = toy.batch.bind(t);
        let x_fake = m.g_forward(&b.a, None)?;
        let a_fake = m.f_forward(&b.x, None)?;
        let terms = critic_objective(
            m,
            &b.x,
            &b.a,
            &x_fake,
            &a_fake,
            &toy.tau,
            10.0,
            PenaltyScope::Visual,
            Some(&mut toy.dropout_rng()),
        )?;
        Ok(terms.objective)
    })?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let reports = run_gradient_suite(0, None).unwrap();
        assert_eq!(reports.len(), 10);
        for r in &reports {
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn fault_is_caught() {
        let reports = run_gradient_suite(0, Some(Fault::A2vSign)).unwrap();
        let a2v = reports.iter().find(|r| r.name == "a2v").unwrap();
        assert!(!a2v.passed());
        assert!(reports.iter().filter(|r| r.name != "a2v").all(GradReport::passed));
    }
}
