//! Executable model of a near-sensor spiking feature extractor.
//!
//! The pipeline is: oriented edge filters followed by per-pixel 1-WTA
//! lateral inhibition ([`encoder`]), a single very wide layer of
//! binary-weight integrate-and-fire neurons ([`network`]), a stochastic
//! binary STDP rule that swaps ineffective synapses onto ineffective
//! spikes ([`learning`]), and a cycle/energy model of the hardware that
//! runs it ([`costmodel`]). [`data`] holds dataset loaders and the
//! collage/sliding-window corpora, [`scan`] evaluates a layer over every
//! window of a frame at once.

pub mod costmodel;
pub mod data;
pub mod encoder;
pub mod error;
pub mod learning;
pub mod network;
pub mod rng;
pub mod scan;
pub mod vector;

pub use error::{Error, Result};
pub use rng::Rng;
pub use vector::{CompressedVector, WeightVector};
