//! Dense tensors, tape-based differentiation (including gradients of
//! gradients), Adam, dropout and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::grad_check;
pub use rng::{RngStreams, StreamRng};
pub use tape::{grad, Tape, Var};
pub use tensor::Tensor;

use rand::Rng;

use crate::error::Result;

/// Inverted dropout: in training, each unit is zeroed with probability
/// `rate` and survivors are scaled by `1/(1 - rate)`. Outside training, or
/// with a zero rate, the input is returned unchanged.
pub fn dropout(x: &Var, rate: f64, rng: Option<&mut StreamRng>) -> Result<Var> {
    let Some(rng) = rng else {
        return Ok(x.clone());
    };
    if rate <= 0.0 {
        return Ok(x.clone());
    }
    let keep = if rate >= 1.0 { 0.0 } else { 1.0 / (1.0 - rate) };
    let data = (0..x.value().len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mask = Tensor::new(x.shape().to_vec(), data)?;
    x.mul(&x.tape().constant(mask))
}
