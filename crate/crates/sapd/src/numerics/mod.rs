//! Minimal deterministic numerics layer: dense f32 tensors, convolution,
//! fully-connected layers, activations, SGD with momentum, seeded Gaussian
//! initialization and the finite-difference gradient oracle.
//!
//! There is no autodiff graph. Every layer pairs an explicit forward with a
//! hand-derived backward, and the detector composes them in a fixed topology.
//! All forward ops are single-threaded and bit-reproducible given identical
//! inputs and seeds.

mod conv;
mod gradcheck;
mod linear;
mod ops;
mod optim;
mod rng;
mod tensor;

pub use conv::{conv2d_backward, conv2d_forward, conv2d_output_size, Conv2d};
pub use gradcheck::{finite_difference_oracle, gradient_mismatch};
pub use linear::{linear_backward, linear_forward, Linear};
pub use ops::{relu_backward, relu_forward, sigmoid, sigmoid_f64, softmax, softmax_backward};
pub use optim::{Param, Sgd};
pub use rng::{bias_init, gaussian_from, gaussian_init, he_init, SplitMix64};
pub use tensor::{Tensor, TENSOR_MAGIC};
