//! Property checks shared by the integration tests and the acceptance
//! report. Each returns `Err` with a description of the first violation.

use epgn::config::{Distance, PenaltyScope, Reduction, TrainConfig};
use epgn::evaluator::{harmonic_mean, per_class_top1, predict, PredictionTask};
use epgn::losses::{
    distance_matrix, generator_adversarial, gradient_penalty, loss_a2v, loss_v2a, mce_from_inferred, mce_loss,
    refine_loss, regression_loss, softmax_rows, total_generator_loss, Batch, Discriminative, LossWeights,
};
use epgn::networks::{init_model, Activation, Layer, MlpParams, PgnModel};
use epgn::tensor_core::{grad, RngStreams, StreamRng, Tape, Tensor, Var};
use rand::Rng;

pub type Check = std::result::Result<(), String>;

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut StreamRng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn identity_mlp(n: usize) -> MlpParams {
    let layer = || Layer {
        weight: Tensor::identity(n),
        bias: Tensor::zeros(&[n]),
        activation: Activation::Relu,
        dropout: 0.0,
    };
    MlpParams::new(vec![layer(), layer()]).unwrap()
}

fn square_model(n: usize) -> PgnModel {
    let cfg = TrainConfig {
        f_hidden: n,
        g_hidden: n,
        d_hidden: 3,
        dropout: 0.0,
        ..Default::default()
    };
    let mut model = PgnModel::shape_template(n, n, &cfg);
    model.f = identity_mlp(n);
    model.g = identity_mlp(n);
    model
}

/// Regression, MCE and refine losses vanish on their perfect-fit cases.
pub fn perfect_fit_zeros(seed: u64) -> Check {
    let mut rng = RngStreams::new(seed).stream("checks");
    let n = 4;
    let model = square_model(n);
    let x = uniform(5, n, 0.0, 1.0, &mut rng);
    let y: Vec<usize> = (0..5).collect();
    let batch = Batch::new(x.clone(), y, x.clone()).unwrap();
    let tape = Tape::new();
    let m = model.bind(&tape);
    let b = batch.bind(&tape);
    let v2a = loss_v2a(&m, &b, Reduction::Sum, None).unwrap().item();
    ensure(v2a == 0.0, || format!("v2a perfect fit gave {v2a}"))?;
    let a2v = loss_a2v(&m, &b, Reduction::Sum).unwrap().item();
    ensure(a2v == 0.0, || format!("a2v perfect fit gave {a2v}"))?;

    let single = Batch::new(x.clone(), vec![0; 5], x.select_rows(&[0])).unwrap();
    let mce = mce_loss(&m, &single.bind(&tape), Reduction::Sum, None).unwrap().item();
    ensure(mce == 0.0, || format!("single-class mce gave {mce}"))?;

    let one = tape.constant(x.select_rows(&[0]));
    let xs = tape.constant(x.clone());
    let r1 = refine_loss(&m.g, &xs, &one, &[0; 5], Distance::Euclidean).unwrap().item();
    ensure(r1 == 0.0, || format!("single-class refine gave {r1}"))?;

    // Instances sit on their prototype, every rival at squared distance 36.
    let protos = Tensor::matrix(3, n, vec![0.0, 0.0, 0.0, 0.0, 6.0, 0.0, 0.0, 0.0, 0.0, 6.0, 0.0, 0.0]).unwrap();
    let at = tape.constant(protos.select_rows(&[0, 1, 2, 0]));
    let sem = tape.constant(protos);
    let labels = [0, 1, 2, 0];
    let gap = refine_loss(&m.g, &at, &sem, &labels, Distance::Euclidean).unwrap().item();
    ensure(gap / 4.0 < 1e-12, || format!("refine with a gap of 36 gave {gap}"))
}

/// Softmax rows sum to one for logits up to `1e4` in magnitude.
pub fn softmax_stability(seed: u64, trials: usize) -> Check {
    let mut rng = RngStreams::new(seed).stream("checks");
    for t in 0..trials {
        let rows = rng.gen_range(1..8);
        let cols = rng.gen_range(1..12);
        let scale = [1.0, 1e2, 1e4][t % 3];
        let logits = uniform(rows, cols, -scale, scale, &mut rng);
        let p = softmax_rows(&logits).unwrap();
        for r in 0..rows {
            let s: f64 = p.row(r).iter().sum();
            ensure((s - 1.0).abs() <= 1e-9 && p.row(r).iter().all(|v| v.is_finite()), || {
                format!("row sum {s} for logits {:?}", logits.row(r))
            })?;
        }
    }
    Ok(())
}

/// A critic linear in `x` with a unit-norm weight has a zero penalty on
/// any interpolates.
pub fn unit_norm_critic(seed: u64, trials: usize) -> Check {
    let mut rng = RngStreams::new(seed).stream("checks");
    for _ in 0..trials {
        let dim = rng.gen_range(1..7);
        let k = rng.gen_range(1..5);
        let hidden = rng.gen_range(1..6);
        let rows = rng.gen_range(1..9);
        // Hidden unit 0 reads ±e_j from x plus arbitrary semantics weights;
        // the other units are muted by the output layer.
        let mut w0 = uniform(dim + k, hidden, -2.0, 2.0, &mut rng);
        let j = rng.gen_range(0..dim);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        for i in 0..dim {
            w0.data_mut()[i * hidden] = if i == j { sign } else { 0.0 };
        }
        let mut w1 = Tensor::zeros(&[hidden, 1]);
        w1.data_mut()[0] = 1.0;
        let d = MlpParams::new(vec![
            Layer {
                weight: w0,
                bias: Tensor::vector((0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect()),
                activation: Activation::Linear,
                dropout: 0.0,
            },
            Layer {
                weight: w1,
                bias: Tensor::vector(vec![rng.gen_range(-1.0..1.0)]),
                activation: Activation::Linear,
                dropout: 0.0,
            },
        ])
        .unwrap();
        let cfg = TrainConfig {
            f_hidden: 2,
            g_hidden: 2,
            d_hidden: hidden,
            ..Default::default()
        };
        let mut model = PgnModel::shape_template(dim, k, &cfg);
        model.d = d;
        let tape = Tape::new();
        let m = model.bind(&tape);
        let x_hat = tape.constant(uniform(rows, dim, -3.0, 3.0, &mut rng));
        let a_hat = tape.constant(uniform(rows, k, -3.0, 3.0, &mut rng));
        let p = gradient_penalty(&m, &x_hat, &a_hat, PenaltyScope::Visual, None).unwrap().item();
        ensure(p == 0.0, || format!("penalty {p} for a unit-norm linear critic"))?;
    }
    Ok(())
}

fn bits(vs: &[Var]) -> Vec<u64> {
    vs.iter().flat_map(|v| v.value().data().iter().map(|x| x.to_bits())).collect()
}

/// Zeroing a loss weight leaves exactly the gradient of the remaining
/// weighted sum, bit for bit under the same dropout draws.
pub fn weight_zeroing(seed: u64) -> Check {
    let streams = RngStreams::new(seed);
    let mut rng = streams.stream("checks");
    let (dim, k, classes, rows) = (5, 3, 3, 6);
    let cfg = TrainConfig {
        f_hidden: 7,
        g_hidden: 6,
        d_hidden: 5,
        dropout: 0.3,
        seed,
        ..Default::default()
    };
    let model = init_model(dim, k, &cfg, &streams).unwrap();
    let y: Vec<usize> = (0..rows).map(|i| i % classes).collect();
    let batch = Batch::new(uniform(rows, dim, 0.0, 1.0, &mut rng), y, uniform(classes, k, 0.0, 1.0, &mut rng)).unwrap();
    let base = LossWeights {
        alpha: 0.7,
        beta: 1.3,
        gamma: 0.4,
        lambda: 10.0,
    };
    let fg_grads = |build: &dyn Fn(&epgn::networks::BoundPgn, &epgn::losses::BatchVars, &mut StreamRng) -> Var| {
        let tape = Tape::new();
        let m = model.bind(&tape);
        let b = batch.bind(&tape);
        let mut drop = streams.stream("dropout");
        let loss = build(&m, &b, &mut drop);
        let wrt: Vec<&Var> = m.f_vars().iter().chain(m.g_vars()).collect();
        (loss.item().to_bits(), bits(&grad(&loss, &wrt, false).unwrap()))
    };
    for zeroed in 0..3 {
        let mut w = base;
        match zeroed {
            0 => w.alpha = 0.0,
            1 => w.beta = 0.0,
            _ => w.gamma = 0.0,
        }
        let via_total = fg_grads(&|m, b, drop| {
            total_generator_loss(m, b, &w, Reduction::Mean, &Discriminative::Mce, Some(drop)).unwrap().total
        });
        let by_hand = fg_grads(&|m, b, drop| {
            let inferred = m.f_forward(&b.x, Some(&mut *drop)).unwrap();
            let generated = m.g_forward(&b.a, None).unwrap();
            let mut total = generator_adversarial(m, &generated, &inferred, Some(drop)).unwrap();
            if zeroed != 0 {
                let l = regression_loss(&inferred, &b.a, Reduction::Mean).unwrap();
                total = total.add(&l.scale(w.alpha).unwrap()).unwrap();
            }
            if zeroed != 1 {
                let l = regression_loss(&generated, &b.x, Reduction::Mean).unwrap();
                total = total.add(&l.scale(w.beta).unwrap()).unwrap();
            }
            if zeroed != 2 {
                let l = mce_from_inferred(m, b, &inferred, Reduction::Mean).unwrap();
                total = total.add(&l.scale(w.gamma).unwrap()).unwrap();
            }
            total
        });
        ensure(via_total == by_hand, || format!("weight {zeroed} zeroed: gradients differ"))?;
    }
    Ok(())
}

/// `min(u, s) ≤ H ≤ max(u, s)` on random accuracy pairs.
pub fn harmonic_bounds(seed: u64, pairs: usize) -> Check {
    let mut rng = RngStreams::new(seed).stream("checks");
    for i in 0..pairs {
        let (u, s): (f64, f64) = match i {
            0 => (0.0, 0.0),
            1 => (1.0, 0.0),
            2 => (1.0, 1.0),
            _ => (rng.gen(), rng.gen()),
        };
        let h = harmonic_mean(u, s);
        ensure(u.min(s) <= h && h <= u.max(s), || format!("H({u}, {s}) = {h}"))?;
    }
    Ok(())
}

/// Duplicating every instance of one class leaves per-class T unchanged.
pub fn duplication_invariance(seed: u64, trials: usize) -> Check {
    let mut rng = RngStreams::new(seed).stream("checks");
    for _ in 0..trials {
        let classes: Vec<usize> = (0..rng.gen_range(1..7)).collect();
        let n = rng.gen_range(1..40);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes.len())).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes.len())).collect();
        let (t, _) = per_class_top1(&preds, &labels, &classes).unwrap();
        let c = labels[rng.gen_range(0..n)];
        let copies = rng.gen_range(1..4);
        let (mut p2, mut l2) = (preds.clone(), labels.clone());
        for (&p, &l) in preds.iter().zip(&labels) {
            if l == c {
                for _ in 0..copies {
                    p2.push(p);
                    l2.push(l);
                }
            }
        }
        let (t2, _) = per_class_top1(&p2, &l2, &classes).unwrap();
        ensure(t == t2, || format!("T {t} became {t2} after duplicating class {c}"))?;
    }
    Ok(())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Nearest-prototype predictions coincide with the mode of the
/// distance softmax used for refinement.
pub fn argmax_agreement(seed: u64, instances: usize, metric: Distance) -> Check {
    let mut rng = RngStreams::new(seed).stream("checks");
    let dim = 6;
    let r = 7;
    let candidates: Vec<usize> = (0..r).map(|c| 3 * c + 1).collect();
    let prototypes = uniform(r, dim, -1.0, 1.0, &mut rng);
    let x = uniform(instances, dim, -1.0, 1.0, &mut rng);
    let task = PredictionTask {
        candidates: candidates.clone(),
        prototypes: prototypes.clone(),
        metric,
    };
    let nearest = predict(&task, &x).unwrap();
    let tape = Tape::untracked();
    let d = distance_matrix(&tape.constant(x), &tape.constant(prototypes), metric).unwrap();
    let probs = softmax_rows(&d.neg().unwrap().value().clone()).unwrap();
    for (i, &p) in nearest.iter().enumerate() {
        let mode = candidates[argmax(probs.row(i))];
        ensure(mode == p, || format!("instance {i}: nearest {p}, softmax mode {mode}"))?;
    }
    Ok(())
}
