use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{grad, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Coordinates sampled per parameter tensor (all of them if fewer).
const SAMPLES_PER_TENSOR: usize = 50;

/// Compare tape gradients of `f` against central differences.
///
/// `f` is rebuilt on a fresh tape for every evaluation and must be
/// deterministic; any dropout inside it should draw from a stream it
/// re-seeds itself. Returns the largest
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)` over the sampled
/// coordinates.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64, rng_seed: u64) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::Contract(format!("eps must lie in (0, 1e-2], got {eps}")));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let v = f(&tape, &vars)?.item();
        if !v.is_finite() {
            return Err(Error::Numeric("grad_check objective".into()));
        }
        Ok(v)
    };

    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&tape, &vars)?;
        if !out.item().is_finite() {
            return Err(Error::Numeric("grad_check objective".into()));
        }
        let refs: Vec<&Var> = vars.iter().collect();
        grad(&out, &refs, false)?
            .into_iter()
            .map(|g| g.value().clone())
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst: f64 = 0.0;
    for (pi, p) in params.iter().enumerate() {
        let n = p.len();
        let coords: Vec<usize> = if n <= SAMPLES_PER_TENSOR {
            (0..n).collect()
        } else {
            index::sample(&mut rng, n, SAMPLES_PER_TENSOR).into_vec()
        };
        for c in coords {
            let orig = p.data()[c];
            work[pi].data_mut()[c] = orig + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[c] = orig - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi].data()[c];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
