//! Episode-trained prototype generating network for zero-shot learning.

pub mod cli;
pub mod config;
pub mod dataio;
pub mod episode;
pub mod error;
pub mod evaluator;
pub mod gradsuite;
pub mod losses;
pub mod networks;
pub mod tensor_core;

pub use error::{DataError, Error, Result};
