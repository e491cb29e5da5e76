//! All parameterized functions: appearance encoder, motion generator, real
//! -video motion extractor, recurrent motion integrator, video decoder, the
//! two Wasserstein critics, and the classifier oracle used for evaluation.

pub mod classifier;
pub mod integrator;
pub mod layers;
pub mod model;

pub use classifier::{ClipClassifier, FrameClassifier, OracleClassifier};
pub use integrator::{integrate_sequence, integrate_step, BoundIntegrator, IntegratorKernels};
pub use model::{
    bind_critics, bind_generator, BoundCritics, BoundGenerator, ModelBundle, MotionSource,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("input shape {got:?} does not match expected {expected}")]
    BadInput { got: Vec<usize>, expected: String },
    #[error("driving clip required when motion source is `extracted`")]
    MissingDrivingClip,
}

/// How appearance and motion are combined per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMode {
    /// Gated convolutional recurrence, one step per frame.
    Recurrent,
    /// Single fused convolution over tiled appearance and motion (no recurrence).
    Fusion,
    /// No motion generator at all; the decoder is conditioned on the label
    /// embedding directly (joint appearance/motion modeling).
    LabelOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoAdvMode {
    None,
    Plain,
    Mix,
}

/// Architecture hyper-configuration. Serialized into checkpoints and compared
/// on load before any weight assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub resolution: usize,
    pub clip_len: usize,
    pub levels: usize,
    pub base_channels: usize,
    pub embed_dim: usize,
    pub noise_dim: usize,
    pub motion_channels: usize,
    pub integrator: IntegratorMode,
    pub motion_supervision: bool,
    pub motion_adv: bool,
    pub video_adv: VideoAdvMode,
    /// Keep the motion extractor fixed at initialization (parity experiments).
    pub frozen_extractor: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            resolution: 56,
            clip_len: 16,
            levels: 3,
            base_channels: 256,
            embed_dim: 8,
            noise_dim: 64,
            motion_channels: 64,
            integrator: IntegratorMode::Recurrent,
            motion_supervision: true,
            motion_adv: true,
            video_adv: VideoAdvMode::Mix,
            frozen_extractor: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: String| Err(NetworkError::BadConfig(m));
        if self.resolution % 8 != 0 || self.resolution < 32 {
            return bad(format!("resolution {} must be a multiple of 8, at least 32", self.resolution));
        }
        if self.clip_len % 4 != 0 || self.clip_len == 0 {
            return bad(format!("clip_len {} must be a positive multiple of 4", self.clip_len));
        }
        if !(1..=3).contains(&self.levels) {
            return bad(format!("levels {} must be 1..=3", self.levels));
        }
        if self.base_channels < 16 || self.base_channels % 8 != 0 {
            return bad(format!("base_channels {} must be >= 16 and divisible by 8", self.base_channels));
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive".into());
        }
        if self.motion_channels < 4 {
            return bad("motion_channels must be at least 4".into());
        }
        if self.integrator == IntegratorMode::LabelOnly && (self.motion_supervision || self.motion_adv) {
            return bad("label-only mode has no motion pathway to supervise".into());
        }
        Ok(())
    }

    /// Spatial size of the coarsest level.
    pub fn coarse(&self) -> usize {
        self.resolution / 8
    }

    /// Spatial size of level `l` (level 0 is coarsest; sizes double per level).
    pub fn spatial(&self, l: usize) -> usize {
        self.coarse() << l
    }

    /// Channel count of level `l` (halves per finer level).
    pub fn channels(&self, l: usize) -> usize {
        self.base_channels >> l
    }

    /// Conditioning row width: label embedding + position + noise.
    pub fn cond_dim(&self) -> usize {
        self.embed_dim + 1 + self.noise_dim
    }

    pub fn uses_motion_generator(&self) -> bool {
        self.integrator != IntegratorMode::LabelOnly
    }

    /// Expected per-level `[T, H, W, C]` shapes of the motion/feature pyramid.
    pub fn pyramid_shapes(&self) -> Vec<[usize; 4]> {
        (0..self.levels)
            .map(|l| [self.clip_len, self.spatial(l), self.spatial(l), self.channels(l)])
            .collect()
    }
}
