//! Action-classifier oracle: a frame-level 2D trunk and a clip-level 3D
//! trunk. Once trained on real data it is frozen and reused as
//!  - the feature extractor behind the Frechet-distance metrics,
//!  - the perceptual-loss feature net,
//!  - the label oracle that checks generated clips express their class.
//!
//! Widths are fixed (not tied to the generator config) so scores stay
//! comparable across ablations.

use larnet_tensor::{Graph, Scalar, Var};
use ndarray::ArrayD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{lrelu, Binder, BoundConv2d, BoundConv3d, BoundLinear, Conv2d, Conv3d, Linear};

pub const FRAME_FEATURE_DIM: usize = 64;
pub const CLIP_FEATURE_DIM: usize = 64;

#[derive(Debug, Clone)]
pub struct FrameClassifier<T> {
    pub convs: Vec<Conv2d<T>>,
    pub head: Linear<T>,
}

pub struct BoundFrameClassifier {
    convs: Vec<BoundConv2d>,
    head: BoundLinear,
}

impl<T: Scalar> FrameClassifier<T> {
    pub fn new(rng: &mut ChaCha8Rng, num_classes: usize) -> Self {
        let widths = [3, 16, 32, FRAME_FEATURE_DIM];
        let convs = (0..3)
            .map(|i| Conv2d::new(rng, 3, widths[i], widths[i + 1], (2, 2), (1, 1)))
            .collect();
        FrameClassifier { convs, head: Linear::new(rng, FRAME_FEATURE_DIM, num_classes) }
    }

    pub fn bind(&self, b: &mut Binder<'_, T>) -> BoundFrameClassifier {
        BoundFrameClassifier {
            convs: self.convs.iter().map(|c| c.bind(b)).collect(),
            head: self.head.bind(b),
        }
    }

    pub fn visit(&self, p: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&format!("{p}.conv{i}"), f);
        }
        self.head.visit(&format!("{p}.head"), f);
    }

    pub fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit_mut(&format!("{p}.conv{i}"), f);
        }
        self.head.visit_mut(&format!("{p}.head"), f);
    }
}

impl BoundFrameClassifier {
    /// Per-stage feature maps for perceptual distances, frames `[N,S,S,3]`.
    pub fn feature_maps<T: Scalar>(&self, g: &Graph<T>, frames: Var) -> Vec<Var> {
        let mut h = frames;
        let mut maps = Vec::with_capacity(self.convs.len());
        for c in &self.convs {
            h = lrelu(g, c.forward(g, h));
            maps.push(h);
        }
        maps
    }

    /// Pooled feature vector `[N, 64]`.
    pub fn features<T: Scalar>(&self, g: &Graph<T>, frames: Var) -> Var {
        let maps = self.feature_maps(g, frames);
        let last = *maps.last().unwrap();
        let s = g.shape(last);
        let pooled = g.sum_axis(g.sum_axis(last, 2), 1);
        g.scalar_mul(pooled, T::one() / T::of((s[1] * s[2]) as f64))
    }

    pub fn logits<T: Scalar>(&self, g: &Graph<T>, frames: Var) -> Var {
        let feats = self.features(g, frames);
        self.head.forward(g, feats)
    }
}

#[derive(Debug, Clone)]
pub struct ClipClassifier<T> {
    pub convs: Vec<Conv3d<T>>,
    pub head: Linear<T>,
}

pub struct BoundClipClassifier {
    convs: Vec<BoundConv3d>,
    head: BoundLinear,
}

impl<T: Scalar> ClipClassifier<T> {
    pub fn new(rng: &mut ChaCha8Rng, num_classes: usize) -> Self {
        let widths = [3, 16, 32, CLIP_FEATURE_DIM];
        let strides = [(1, 2, 2), (2, 2, 2), (2, 2, 2)];
        let convs = (0..3)
            .map(|i| Conv3d::new(rng, (3, 3, 3), widths[i], widths[i + 1], strides[i], (1, 1, 1)))
            .collect();
        ClipClassifier { convs, head: Linear::new(rng, CLIP_FEATURE_DIM, num_classes) }
    }

    pub fn bind(&self, b: &mut Binder<'_, T>) -> BoundClipClassifier {
        BoundClipClassifier {
            convs: self.convs.iter().map(|c| c.bind(b)).collect(),
            head: self.head.bind(b),
        }
    }

    pub fn visit(&self, p: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&format!("{p}.conv{i}"), f);
        }
        self.head.visit(&format!("{p}.head"), f);
    }

    pub fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit_mut(&format!("{p}.conv{i}"), f);
        }
        self.head.visit_mut(&format!("{p}.head"), f);
    }
}

impl BoundClipClassifier {
    /// Pooled clip feature `[N, 64]` from clips `[N,T,S,S,3]`.
    pub fn features<T: Scalar>(&self, g: &Graph<T>, clips: Var) -> Var {
        let mut h = clips;
        for c in &self.convs {
            h = lrelu(g, c.forward(g, h));
        }
        let s = g.shape(h);
        let pooled = g.sum_axis(g.sum_axis(g.sum_axis(h, 3), 2), 1);
        g.scalar_mul(pooled, T::one() / T::of((s[1] * s[2] * s[3]) as f64))
    }

    pub fn logits<T: Scalar>(&self, g: &Graph<T>, clips: Var) -> Var {
        let feats = self.features(g, clips);
        self.head.forward(g, feats)
    }
}

/// Both trunks plus the metadata needed to validate inputs.
#[derive(Debug, Clone)]
pub struct OracleClassifier<T> {
    pub frame: FrameClassifier<T>,
    pub clip: ClipClassifier<T>,
    pub num_classes: usize,
    pub resolution: usize,
    pub clip_len: usize,
}

impl<T: Scalar> OracleClassifier<T> {
    pub fn new(num_classes: usize, resolution: usize, clip_len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OracleClassifier {
            frame: FrameClassifier::new(&mut rng, num_classes),
            clip: ClipClassifier::new(&mut rng, num_classes),
            num_classes,
            resolution,
            clip_len,
        }
    }

    pub fn visit_all(&self, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        self.frame.visit("frame", f);
        self.clip.visit("clip", f);
    }

    pub fn visit_all_mut(&mut self, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        self.frame.visit_mut("frame", f);
        self.clip.visit_mut("clip", f);
    }
}
