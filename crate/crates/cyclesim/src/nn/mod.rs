//! Minimal reverse-mode autodiff engine used by every trainable model here.
//!
//! f64 end to end: desk-scale models are small enough that the extra
//! precision is free, and it keeps finite-difference gradient checks tight.

pub mod kernels;
pub mod layers;
pub mod optim;
pub mod tape;
pub mod weights;

pub use layers::{BoundConv2d, BoundInstanceNorm, BoundLinear, Conv2d, Init, InitScheme, InstanceNorm, Linear, Params};
pub use optim::Adam;
pub use tape::{Gradients, Tape, VarId};
