//! Minimal dense tensors with reverse-mode differentiation.

mod conv;
mod optim;
mod tape;
mod tensor;

pub use optim::{Adam, AdamConfig};
pub use tape::{ElementwiseKind, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::sigmoid;
