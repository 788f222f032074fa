//! Primitives and planning for sliding-window inference of 3D convolutional
//! networks.
//!
//! The crate is `no_std` (with `alloc`) unless the default `std` feature is
//! enabled; `std` only adds a thread-backed [`parallel::Threads`] executor and
//! a threaded task-graph runner. Everything else is pure computation:
//!
//! * [`tensor`]: 5D real tensors and permutable complex tensors.
//! * [`fft`]: pruned real-to-complex 3D transforms (nested and batched/permuted).
//! * [`layers`]: direct and FFT-based convolution, max pooling, max-pooling
//!   fragments and fragment recombination, all with memory accounting.
//! * [`cost`]: FLOP and memory models, theoretical speedup, field of view.
//! * [`planner`]: shape propagation, exhaustive plan search, device sub-layer
//!   decomposition, split and pipelined plans, and plan execution.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cost;
pub mod error;
pub mod fft;
pub mod layers;
pub mod memory;
pub mod network;
pub mod oracle;
pub mod parallel;
pub mod planner;
pub mod real;
pub mod tensor;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::{Axis, ComplexTensor, Shape5, Tensor5};

pub use num_complex::Complex;
