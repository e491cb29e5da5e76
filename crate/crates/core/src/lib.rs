//! Conditional action-video synthesis at desk scale.
//!
//! A single actor frame plus an action label drive a generative pipeline:
//! a motion generator produces latent action features from the label,
//! position and noise; a recurrent gated integrator rewrites the encoded
//! appearance under those features at several spatial scales; a video
//! decoder emits the clip. Training combines motion-matching, Wasserstein
//! critics with gradient penalty, a frame-remix adversarial objective,
//! reconstruction and perceptual terms.
//!
//! Crate layout follows the pipeline: [`dataio`] (datasets and synthetic
//! clips), [`embeddings`] (label conditioning), [`networks`] (all
//! parameterized functions), [`losses`], [`training`], [`metrics`], and
//! [`plot`] for the chart output the CLI exposes.

pub mod dataio;
pub mod embeddings;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod plot;
pub mod training;

pub use larnet_tensor as tensor;

/// Training element type. Gradient checks instantiate the networks at `f64`.
pub type F = f32;
