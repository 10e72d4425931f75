//! Progressive entropy coding of quantized latent tensors.
//!
//! Each latent integer `y_i` is modeled as a discretized Gaussian `N(0, σ_i)`
//! clipped to a support of `3^L_i` (or `2^L_i`) integers. The support is
//! repeatedly split into equal sub-intervals, one digit per split, and the
//! digits of every element are sent plane by plane. Inside a plane, digits go
//! out in order of expected distortion reduction per bit, so any byte prefix
//! of the stream decodes to a usable reconstruction.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod codec;
pub mod entropy;
pub mod gaussian;
pub mod priority;
pub mod slicing;
pub mod synth;
pub mod tensor;

pub use codec::{decode, encode, DecodeOutput, EncodeOptions, Encoded, SigmaMode};
pub use gaussian::{build_element_model, Base, ElementModel};
pub use priority::{NaiveEngine, PriorityEngine, VectorizedEngine};
pub use tensor::Shape;
