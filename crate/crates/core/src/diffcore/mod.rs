//! Dense matrices, parameters and a tape-based reverse-mode engine covering
//! the handful of operations the frame-graph model needs.

mod matrix;
mod param;
mod tape;

pub use matrix::Matrix;
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Tape, Var};
