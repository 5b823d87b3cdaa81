//! Numeric core of the DYGAN-VC layer stack: dense tensors, lightweight and
//! dynamic convolution, AdaIN/WadaIN conditioning, the generator and
//! discriminator networks, least-squares GAN losses, Adam, and a
//! finite-difference gradient-check oracle.
//!
//! The crate is `no_std` (with `alloc`) so the numeric kernels stay free of
//! I/O; file formats, checkpoints and the CLI live in the companion
//! `dygan-cli` crate.
//!
//! Every backward pass here is written by hand and validated against central
//! finite differences (see [`gradcheck`]); there is no autodiff graph.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Dtype, Real, Tensor};
