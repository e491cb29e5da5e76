//! Network definitions and the bundle that owns every parameter.

use larnet_tensor::{Graph, Scalar, Var};
use ndarray::ArrayD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::integrator::{integrate_sequence, BoundIntegrator, IntegratorKernels};
use super::layers::{
    lrelu, Binder, BoundConv2d, BoundConv3d, BoundLinear, BoundTConv3d, Conv2d, Conv3d, Linear,
    TConv3d,
};
use super::{IntegratorMode, ModelConfig, NetworkError, VideoAdvMode};

// ---------------------------------------------------------------------------
// Appearance encoder
// ---------------------------------------------------------------------------

/// 2D conv pyramid over the actor frame; taps expose one map per level.
#[derive(Debug, Clone)]
pub struct AppearanceEncoder<T> {
    stem: Conv2d<T>,
    downs: Vec<Conv2d<T>>,
    taps: Vec<Conv2d<T>>,
}

pub struct BoundAppearanceEncoder {
    stem: BoundConv2d,
    downs: Vec<BoundConv2d>,
    taps: Vec<BoundConv2d>,
}

impl<T: Scalar> AppearanceEncoder<T> {
    fn new(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Self {
        let w = |i: usize| cfg.base_channels >> (3 - i); // stage widths, stem upward
        let stem = Conv2d::new(rng, 3, 3, w(0), (1, 1), (1, 1));
        let downs = (0..3).map(|i| Conv2d::new(rng, 4, w(i), w(i + 1), (2, 2), (1, 1))).collect();
        let taps = (0..cfg.levels)
            .map(|l| Conv2d::new(rng, 3, cfg.channels(l), cfg.channels(l), (1, 1), (1, 1)))
            .collect();
        AppearanceEncoder { stem, downs, taps }
    }

    fn bind(&self, b: &mut Binder<'_, T>) -> BoundAppearanceEncoder {
        BoundAppearanceEncoder {
            stem: self.stem.bind(b),
            downs: self.downs.iter().map(|c| c.bind(b)).collect(),
            taps: self.taps.iter().map(|c| c.bind(b)).collect(),
        }
    }

    fn visit(&self, p: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        self.stem.visit(&format!("{p}.stem"), f);
        for (i, c) in self.downs.iter().enumerate() {
            c.visit(&format!("{p}.down{i}"), f);
        }
        for (i, c) in self.taps.iter().enumerate() {
            c.visit(&format!("{p}.tap{i}"), f);
        }
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        self.stem.visit_mut(&format!("{p}.stem"), f);
        for (i, c) in self.downs.iter().enumerate() {
            c.visit_mut(&format!("{p}.down{i}"), f);
        }
        for (i, c) in self.taps.iter().enumerate() {
            c.visit_mut(&format!("{p}.tap{i}"), f);
        }
    }
}

/// Encode `x0 [N, S, S, 3]` into per-level appearance maps, coarsest first.
pub fn appearance_encode<T: Scalar>(
    g: &Graph<T>,
    enc: &BoundAppearanceEncoder,
    x0: Var,
) -> Vec<Var> {
    let mut h = lrelu(g, enc.stem.forward(g, x0));
    let mut stages = Vec::with_capacity(3);
    for d in &enc.downs {
        h = lrelu(g, d.forward(g, h));
        stages.push(h);
    }
    // level l taps stage 2-l (coarsest stage is last)
    enc.taps
        .iter()
        .enumerate()
        .map(|(l, tap)| tap.forward(g, stages[2 - l]))
        .collect()
}

// ---------------------------------------------------------------------------
// Motion generator
// ---------------------------------------------------------------------------

/// Decodes (label embedding, position, noise) into a motion pyramid via a
/// projected seed and transposed 3D convolutions.
#[derive(Debug, Clone)]
pub struct MotionGenerator<T> {
    lin: Linear<T>,
    tup1: TConv3d<T>,
    tup2: TConv3d<T>,
    ups: Vec<Conv3d<T>>,
    heads: Vec<Conv3d<T>>,
    seed_hw: usize,
    seed_t: usize,
}

pub struct BoundMotionGenerator {
    lin: BoundLinear,
    tup1: BoundTConv3d,
    tup2: BoundTConv3d,
    ups: Vec<BoundConv3d>,
    heads: Vec<BoundConv3d>,
    seed_hw: usize,
    seed_t: usize,
    motion_channels: usize,
    coarse: usize,
}

impl<T: Scalar> MotionGenerator<T> {
    fn new(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Self {
        let mc = cfg.motion_channels;
        let seed_hw = cfg.coarse().div_ceil(2);
        let seed_t = cfg.clip_len / 4;
        let lin = Linear::new(rng, cfg.cond_dim(), mc * seed_t * seed_hw * seed_hw);
        let tup1 = TConv3d::new(rng, (4, 4, 4), mc, mc, (2, 2, 2), (1, 1, 1));
        let tup2 = TConv3d::new(rng, (4, 3, 3), mc, mc, (2, 1, 1), (1, 1, 1));
        let ups = (1..cfg.levels)
            .map(|_| Conv3d::new(rng, (3, 3, 3), mc, mc, (1, 1, 1), (1, 1, 1)))
            .collect();
        let heads = (0..cfg.levels)
            .map(|l| Conv3d::new(rng, (3, 3, 3), mc, cfg.channels(l), (1, 1, 1), (1, 1, 1)))
            .collect();
        MotionGenerator { lin, tup1, tup2, ups, heads, seed_hw, seed_t }
    }

    fn bind(&self, b: &mut Binder<'_, T>, cfg: &ModelConfig) -> BoundMotionGenerator {
        BoundMotionGenerator {
            lin: self.lin.bind(b),
            tup1: self.tup1.bind(b),
            tup2: self.tup2.bind(b),
            ups: self.ups.iter().map(|c| c.bind(b)).collect(),
            heads: self.heads.iter().map(|c| c.bind(b)).collect(),
            seed_hw: self.seed_hw,
            seed_t: self.seed_t,
            motion_channels: cfg.motion_channels,
            coarse: cfg.coarse(),
        }
    }

    fn visit(&self, p: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        self.lin.visit(&format!("{p}.lin"), f);
        self.tup1.visit(&format!("{p}.tup1"), f);
        self.tup2.visit(&format!("{p}.tup2"), f);
        for (i, c) in self.ups.iter().enumerate() {
            c.visit(&format!("{p}.up{i}"), f);
        }
        for (i, c) in self.heads.iter().enumerate() {
            c.visit(&format!("{p}.head{i}"), f);
        }
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        self.lin.visit_mut(&format!("{p}.lin"), f);
        self.tup1.visit_mut(&format!("{p}.tup1"), f);
        self.tup2.visit_mut(&format!("{p}.tup2"), f);
        for (i, c) in self.ups.iter().enumerate() {
            c.visit_mut(&format!("{p}.up{i}"), f);
        }
        for (i, c) in self.heads.iter().enumerate() {
            c.visit_mut(&format!("{p}.head{i}"), f);
        }
    }
}

/// Generate the motion pyramid from a conditioning batch `[N, D_e + 1 + D_z]`.
pub fn motion_generate<T: Scalar>(
    g: &Graph<T>,
    gm: &BoundMotionGenerator,
    cond: Var,
) -> Vec<Var> {
    let n = g.shape(cond)[0];
    let (mc, shw, st, coarse) = (gm.motion_channels, gm.seed_hw, gm.seed_t, gm.coarse);
    let mut h = lrelu(g, gm.lin.forward(g, cond));
    h = g.reshape(h, &[n, st, shw, shw, mc]);
    h = lrelu(g, gm.tup1.forward(g, h)); // [N, T/2, 2*shw, 2*shw, mc]
    // transposed conv can overshoot odd extents by one; crop back
    if g.shape(h)[2] > coarse {
        h = g.slice(h, 2, 0, coarse);
        h = g.slice(h, 3, 0, coarse);
    }
    h = lrelu(g, gm.tup2.forward(g, h)); // [N, T, coarse, coarse, mc]
    let mut trunk = h;
    let mut pyramid = Vec::with_capacity(gm.heads.len());
    for (l, head) in gm.heads.iter().enumerate() {
        if l > 0 {
            trunk = lrelu(g, gm.ups[l - 1].forward(g, g.upsample3d(trunk, [1, 2, 2])));
        }
        pyramid.push(head.forward(g, trunk));
    }
    pyramid
}

// ---------------------------------------------------------------------------
// Real-video motion extractor
// ---------------------------------------------------------------------------

/// 3D conv encoder of a real clip; emits the same pyramid shapes as the
/// motion generator so its features can serve as regression targets.
#[derive(Debug, Clone)]
pub struct MotionExtractor<T> {
    convs: Vec<Conv3d<T>>,
    taps: Vec<Conv3d<T>>,
}

pub struct BoundMotionExtractor {
    convs: Vec<BoundConv3d>,
    taps: Vec<BoundConv3d>,
}

impl<T: Scalar> MotionExtractor<T> {
    fn new(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Self {
        let w = |i: usize| cfg.base_channels >> (2 - i); // widths at res/2, res/4, res/8
        let mut convs = Vec::with_capacity(3);
        convs.push(Conv3d::new(rng, (3, 3, 3), 3, w(0), (1, 2, 2), (1, 1, 1)));
        convs.push(Conv3d::new(rng, (3, 3, 3), w(0), w(1), (1, 2, 2), (1, 1, 1)));
        convs.push(Conv3d::new(rng, (3, 3, 3), w(1), w(2), (1, 2, 2), (1, 1, 1)));
        let taps = (0..cfg.levels)
            .map(|l| Conv3d::new(rng, (3, 3, 3), cfg.channels(l), cfg.channels(l), (1, 1, 1), (1, 1, 1)))
            .collect();
        MotionExtractor { convs, taps }
    }

    fn bind(&self, b: &mut Binder<'_, T>) -> BoundMotionExtractor {
        BoundMotionExtractor {
            convs: self.convs.iter().map(|c| c.bind(b)).collect(),
            taps: self.taps.iter().map(|c| c.bind(b)).collect(),
        }
    }

    fn visit(&self, p: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&format!("{p}.conv{i}"), f);
        }
        for (i, c) in self.taps.iter().enumerate() {
            c.visit(&format!("{p}.tap{i}"), f);
        }
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit_mut(&format!("{p}.conv{i}"), f);
        }
        for (i, c) in self.taps.iter().enumerate() {
            c.visit_mut(&format!("{p}.tap{i}"), f);
        }
    }
}

/// Extract the motion pyramid of a real clip `[N, T, S, S, 3]`.
pub fn motion_extract<T: Scalar>(
    g: &Graph<T>,
    ev: &BoundMotionExtractor,
    clip: Var,
) -> Vec<Var> {
    let mut h = clip;
    let mut stages = Vec::with_capacity(3);
    for c in &ev.convs {
        h = lrelu(g, c.forward(g, h));
        stages.push(h);
    }
    ev.taps
        .iter()
        .enumerate()
        .map(|(l, tap)| tap.forward(g, stages[2 - l]))
        .collect()
}

// ---------------------------------------------------------------------------
// Non-recurrent combination paths (ablations)
// ---------------------------------------------------------------------------

/// One fused convolution per level: `<tiled e_a, e_m (, carry)> -> e_v`.
#[derive(Debug, Clone)]
pub struct FusionBlock<T> {
    conv: Conv3d<T>,
}

pub struct BoundFusionBlock {
    conv: BoundConv3d,
}

impl<T: Scalar> FusionBlock<T> {
    fn new(rng: &mut ChaCha8Rng, channels: usize, carry_channels: usize) -> Self {
        FusionBlock {
            conv: Conv3d::new(rng, (3, 3, 3), 2 * channels + carry_channels, channels, (1, 1, 1), (1, 1, 1)),
        }
    }
}

/// Label-conditioned injection for the no-motion-generator baseline.
#[derive(Debug, Clone)]
pub struct CondInject<T> {
    lin: Linear<T>,
    mix: Conv3d<T>,
    code_channels: usize,
}

pub struct BoundCondInject {
    lin: BoundLinear,
    mix: BoundConv3d,
    code_channels: usize,
}

impl<T: Scalar> CondInject<T> {
    fn new(rng: &mut ChaCha8Rng, cfg: &ModelConfig, channels: usize, carry_channels: usize) -> Self {
        let code_channels = (cfg.base_channels >> 4).max(8);
        CondInject {
            lin: Linear::new(rng, cfg.cond_dim(), cfg.clip_len * code_channels),
            mix: Conv3d::new(
                rng,
                (3, 3, 3),
                channels + code_channels + carry_channels,
                channels,
                (1, 1, 1),
                (1, 1, 1),
            ),
            code_channels,
        }
    }
}

// ---------------------------------------------------------------------------
// Video decoder
// ---------------------------------------------------------------------------

/// Per-level upsampling blocks followed by a tanh output convolution. Each
/// block doubles the spatial extent and halves the channel count; its output
/// both carries into the next level's integration and continues upward.
#[derive(Debug, Clone)]
pub struct VideoDecoder<T> {
    blocks: Vec<(Conv3d<T>, Conv3d<T>)>,
    out: Conv3d<T>,
}

pub struct BoundVideoDecoder {
    blocks: Vec<(BoundConv3d, BoundConv3d)>,
    out: BoundConv3d,
}

impl<T: Scalar> VideoDecoder<T> {
    fn new(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Self {
        // widths walk base>>l down to base>>3 regardless of level count
        let mut blocks = Vec::with_capacity(3);
        for i in 0..3 {
            let w = cfg.base_channels >> i;
            blocks.push((
                Conv3d::new(rng, (3, 3, 3), w, w, (1, 1, 1), (1, 1, 1)),
                Conv3d::new(rng, (3, 3, 3), w, w / 2, (1, 1, 1), (1, 1, 1)),
            ));
        }
        let out = Conv3d::new(rng, (3, 3, 3), cfg.base_channels >> 3, 3, (1, 1, 1), (1, 1, 1));
        VideoDecoder { blocks, out }
    }

    fn bind(&self, b: &mut Binder<'_, T>) -> BoundVideoDecoder {
        BoundVideoDecoder {
            blocks: self.blocks.iter().map(|(a, c)| (a.bind(b), c.bind(b))).collect(),
            out: self.out.bind(b),
        }
    }

    fn visit(&self, p: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        for (i, (a, c)) in self.blocks.iter().enumerate() {
            a.visit(&format!("{p}.block{i}a"), f);
            c.visit(&format!("{p}.block{i}b"), f);
        }
        self.out.visit(&format!("{p}.out"), f);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        for (i, (a, c)) in self.blocks.iter().enumerate() {
            a.visit_mut(&format!("{p}.block{i}a"), f);
            c.visit_mut(&format!("{p}.block{i}b"), f);
        }
        self.out.visit_mut(&format!("{p}.out"), f);
    }
}

fn decoder_block<T: Scalar>(g: &Graph<T>, blk: &(BoundConv3d, BoundConv3d), x: Var) -> Var {
    let h = lrelu(g, blk.0.forward(g, x));
    let h = g.upsample3d(h, [1, 2, 2]);
    lrelu(g, blk.1.forward(g, h))
}

// ---------------------------------------------------------------------------
// Critics
// ---------------------------------------------------------------------------

/// 3D convolutional Wasserstein critic over clips (no normalization layers,
/// unbounded scalar output).
#[derive(Debug, Clone)]
pub struct VideoCritic<T> {
    convs: Vec<Conv3d<T>>,
    lin: Linear<T>,
}

pub struct BoundVideoCritic {
    convs: Vec<BoundConv3d>,
    lin: BoundLinear,
}

fn conv_out(n: usize, k: usize, s: usize, p: usize) -> usize {
    (n + 2 * p - k) / s + 1
}

impl<T: Scalar> VideoCritic<T> {
    fn new(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Self {
        let dc = (cfg.base_channels >> 3).max(8);
        let plan: [((usize, usize, usize), (usize, usize, usize), usize, usize); 4] = [
            ((3, 3, 3), (1, 2, 2), 3, dc),
            ((4, 4, 4), (2, 2, 2), dc, 2 * dc),
            ((4, 4, 4), (2, 2, 2), 2 * dc, 4 * dc),
            ((3, 3, 3), (2, 2, 2), 4 * dc, 4 * dc),
        ];
        let mut t = cfg.clip_len;
        let mut s = cfg.resolution;
        let mut convs = Vec::with_capacity(4);
        for (k, st, cin, cout) in plan {
            convs.push(Conv3d::new(rng, k, cin, cout, st, (1, 1, 1)));
            t = conv_out(t, k.0, st.0, 1);
            s = conv_out(s, k.1, st.1, 1);
        }
        let flat = t * s * s * 4 * dc;
        VideoCritic { convs, lin: Linear::new(rng, flat, 1) }
    }

    fn bind(&self, b: &mut Binder<'_, T>) -> BoundVideoCritic {
        BoundVideoCritic {
            convs: self.convs.iter().map(|c| c.bind(b)).collect(),
            lin: self.lin.bind(b),
        }
    }

    fn visit(&self, p: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&format!("{p}.conv{i}"), f);
        }
        self.lin.visit(&format!("{p}.lin"), f);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit_mut(&format!("{p}.conv{i}"), f);
        }
        self.lin.visit_mut(&format!("{p}.lin"), f);
    }
}

/// Score a clip batch `[N, T, S, S, 3]` -> `[N, 1]` (unbounded).
pub fn discriminate_video<T: Scalar>(g: &Graph<T>, d: &BoundVideoCritic, clip: Var) -> Var {
    let mut h = clip;
    for c in &d.convs {
        h = lrelu(g, c.forward(g, h));
    }
    let s = g.shape(h);
    let flat = g.reshape(h, &[s[0], s[1] * s[2] * s[3] * s[4]]);
    d.lin.forward(g, flat)
}

/// Per-level 3D critic over motion features.
#[derive(Debug, Clone)]
pub struct MotionCritic<T> {
    c1: Conv3d<T>,
    c2: Conv3d<T>,
    lin: Linear<T>,
}

pub struct BoundMotionCritic {
    c1: BoundConv3d,
    c2: BoundConv3d,
    lin: BoundLinear,
}

impl<T: Scalar> MotionCritic<T> {
    fn new(rng: &mut ChaCha8Rng, cfg: &ModelConfig, level: usize) -> Self {
        let cin = cfg.channels(level);
        let dm = (cin >> 2).max(8);
        let c1 = Conv3d::new(rng, (3, 3, 3), cin, dm, (1, 2, 2), (1, 1, 1));
        let c2 = Conv3d::new(rng, (4, 4, 4), dm, dm, (2, 2, 2), (1, 1, 1));
        let t = conv_out(conv_out(cfg.clip_len, 3, 1, 1), 4, 2, 1);
        let s = conv_out(conv_out(cfg.spatial(level), 3, 2, 1), 4, 2, 1);
        MotionCritic { c1, c2, lin: Linear::new(rng, t * s * s * dm, 1) }
    }

    fn bind(&self, b: &mut Binder<'_, T>) -> BoundMotionCritic {
        BoundMotionCritic { c1: self.c1.bind(b), c2: self.c2.bind(b), lin: self.lin.bind(b) }
    }

    fn visit(&self, p: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        self.c1.visit(&format!("{p}.c1"), f);
        self.c2.visit(&format!("{p}.c2"), f);
        self.lin.visit(&format!("{p}.lin"), f);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        self.c1.visit_mut(&format!("{p}.c1"), f);
        self.c2.visit_mut(&format!("{p}.c2"), f);
        self.lin.visit_mut(&format!("{p}.lin"), f);
    }
}

/// Score one motion-pyramid level `[N, T, H, W, C]` -> `[N, 1]`.
pub fn discriminate_motion<T: Scalar>(g: &Graph<T>, d: &BoundMotionCritic, e: Var) -> Var {
    let h = lrelu(g, d.c1.forward(g, e));
    let h = lrelu(g, d.c2.forward(g, h));
    let s = g.shape(h);
    let flat = g.reshape(h, &[s[0], s[1] * s[2] * s[3] * s[4]]);
    d.lin.forward(g, flat)
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

/// Every parameter of the pipeline, plus the architecture config. Which
/// subnets exist follows the config (ablations allocate nothing for the
/// parts they disable).
#[derive(Debug, Clone)]
pub struct ModelBundle<T> {
    pub config: ModelConfig,
    pub ea: AppearanceEncoder<T>,
    pub gm: Option<MotionGenerator<T>>,
    pub ev: Option<MotionExtractor<T>>,
    pub mi: Option<Vec<IntegratorKernels<T>>>,
    pub fusion: Option<Vec<FusionBlock<T>>>,
    pub inject: Option<Vec<CondInject<T>>>,
    pub gv: VideoDecoder<T>,
    pub dv: Option<VideoCritic<T>>,
    pub dm: Option<Vec<MotionCritic<T>>>,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NetworkError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let carry = |l: usize| if l == 0 { 0 } else { config.channels(l) };

        let ea = AppearanceEncoder::new(&mut rng, &config);
        let gm = config
            .uses_motion_generator()
            .then(|| MotionGenerator::new(&mut rng, &config));
        let needs_ev = config.motion_supervision || config.motion_adv;
        let ev = (config.uses_motion_generator() && needs_ev)
            .then(|| MotionExtractor::new(&mut rng, &config));
        let mi = (config.integrator == IntegratorMode::Recurrent).then(|| {
            (0..config.levels)
                .map(|l| IntegratorKernels::new(&mut rng, config.channels(l), carry(l)))
                .collect()
        });
        let fusion = (config.integrator == IntegratorMode::Fusion).then(|| {
            (0..config.levels)
                .map(|l| FusionBlock::new(&mut rng, config.channels(l), carry(l)))
                .collect()
        });
        let inject = (config.integrator == IntegratorMode::LabelOnly).then(|| {
            (0..config.levels)
                .map(|l| CondInject::new(&mut rng, &config, config.channels(l), carry(l)))
                .collect()
        });
        let gv = VideoDecoder::new(&mut rng, &config);
        let dv = (config.video_adv != VideoAdvMode::None).then(|| VideoCritic::new(&mut rng, &config));
        let dm = (config.motion_adv && config.uses_motion_generator()).then(|| {
            (0..config.levels)
                .map(|l| MotionCritic::new(&mut rng, &config, l))
                .collect()
        });

        Ok(ModelBundle { config, ea, gm, ev, mi, fusion, inject, gv, dv, dm })
    }

    /// Generator-side parameters (everything the generator update touches).
    /// The extractor is excluded when frozen.
    pub fn visit_gen(&self, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        self.ea.visit("ea", f);
        if let Some(gm) = &self.gm {
            gm.visit("gm", f);
        }
        if !self.config.frozen_extractor {
            if let Some(ev) = &self.ev {
                ev.visit("ev", f);
            }
        }
        if let Some(mi) = &self.mi {
            for (l, k) in mi.iter().enumerate() {
                k.visit(&format!("mi{l}"), f);
            }
        }
        if let Some(fu) = &self.fusion {
            for (l, b) in fu.iter().enumerate() {
                b.conv.visit(&format!("fusion{l}"), f);
            }
        }
        if let Some(inj) = &self.inject {
            for (l, b) in inj.iter().enumerate() {
                b.lin.visit(&format!("inject{l}.lin"), f);
                b.mix.visit(&format!("inject{l}.mix"), f);
            }
        }
        self.gv.visit("gv", f);
    }

    pub fn visit_gen_mut(&mut self, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        let frozen = self.config.frozen_extractor;
        self.ea.visit_mut("ea", f);
        if let Some(gm) = &mut self.gm {
            gm.visit_mut("gm", f);
        }
        if !frozen {
            if let Some(ev) = &mut self.ev {
                ev.visit_mut("ev", f);
            }
        }
        if let Some(mi) = &mut self.mi {
            for (l, k) in mi.iter_mut().enumerate() {
                k.visit_mut(&format!("mi{l}"), f);
            }
        }
        if let Some(fu) = &mut self.fusion {
            for (l, b) in fu.iter_mut().enumerate() {
                b.conv.visit_mut(&format!("fusion{l}"), f);
            }
        }
        if let Some(inj) = &mut self.inject {
            for (l, b) in inj.iter_mut().enumerate() {
                b.lin.visit_mut(&format!("inject{l}.lin"), f);
                b.mix.visit_mut(&format!("inject{l}.mix"), f);
            }
        }
        self.gv.visit_mut("gv", f);
    }

    /// Critic-side parameters.
    pub fn visit_critic(&self, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        if let Some(dv) = &self.dv {
            dv.visit("dv", f);
        }
        if let Some(dm) = &self.dm {
            for (l, d) in dm.iter().enumerate() {
                d.visit(&format!("dm{l}"), f);
            }
        }
    }

    pub fn visit_critic_mut(&mut self, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        if let Some(dv) = &mut self.dv {
            dv.visit_mut("dv", f);
        }
        if let Some(dm) = &mut self.dm {
            for (l, d) in dm.iter_mut().enumerate() {
                d.visit_mut(&format!("dm{l}"), f);
            }
        }
    }

    /// All parameters, for checkpointing. The frozen-extractor flag does not
    /// change this traversal.
    pub fn visit_all(&self, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        self.ea.visit("ea", f);
        if let Some(gm) = &self.gm {
            gm.visit("gm", f);
        }
        if let Some(ev) = &self.ev {
            ev.visit("ev", f);
        }
        if let Some(mi) = &self.mi {
            for (l, k) in mi.iter().enumerate() {
                k.visit(&format!("mi{l}"), f);
            }
        }
        if let Some(fu) = &self.fusion {
            for (l, b) in fu.iter().enumerate() {
                b.conv.visit(&format!("fusion{l}"), f);
            }
        }
        if let Some(inj) = &self.inject {
            for (l, b) in inj.iter().enumerate() {
                b.lin.visit(&format!("inject{l}.lin"), f);
                b.mix.visit(&format!("inject{l}.mix"), f);
            }
        }
        self.gv.visit("gv", f);
        if let Some(dv) = &self.dv {
            dv.visit("dv", f);
        }
        if let Some(dm) = &self.dm {
            for (l, d) in dm.iter().enumerate() {
                d.visit(&format!("dm{l}"), f);
            }
        }
    }

    pub fn visit_all_mut(&mut self, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        self.ea.visit_mut("ea", f);
        if let Some(gm) = &mut self.gm {
            gm.visit_mut("gm", f);
        }
        if let Some(ev) = &mut self.ev {
            ev.visit_mut("ev", f);
        }
        if let Some(mi) = &mut self.mi {
            for (l, k) in mi.iter_mut().enumerate() {
                k.visit_mut(&format!("mi{l}"), f);
            }
        }
        if let Some(fu) = &mut self.fusion {
            for (l, b) in fu.iter_mut().enumerate() {
                b.conv.visit_mut(&format!("fusion{l}"), f);
            }
        }
        if let Some(inj) = &mut self.inject {
            for (l, b) in inj.iter_mut().enumerate() {
                b.lin.visit_mut(&format!("inject{l}.lin"), f);
                b.mix.visit_mut(&format!("inject{l}.mix"), f);
            }
        }
        self.gv.visit_mut("gv", f);
        if let Some(dv) = &mut self.dv {
            dv.visit_mut("dv", f);
        }
        if let Some(dm) = &mut self.dm {
            for (l, d) in dm.iter_mut().enumerate() {
                d.visit_mut(&format!("dm{l}"), f);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Bound model and forward paths
// ---------------------------------------------------------------------------

/// Where the motion pyramid for synthesis comes from.
pub enum MotionSource {
    /// From the motion generator: conditioning row `[N, D_e + 1 + D_z]`.
    Generated,
    /// Extracted from a driving clip `[N, T, S, S, 3]`.
    Extracted(Var),
}

pub struct BoundGenerator {
    pub ea: BoundAppearanceEncoder,
    pub gm: Option<BoundMotionGenerator>,
    pub ev: Option<BoundMotionExtractor>,
    pub mi: Option<Vec<BoundIntegrator>>,
    pub fusion: Option<Vec<BoundFusionBlock>>,
    pub inject: Option<Vec<BoundCondInject>>,
    pub gv: BoundVideoDecoder,
    pub clip_len: usize,
    pub mode: IntegratorMode,
}

pub struct BoundCritics {
    pub dv: Option<BoundVideoCritic>,
    pub dm: Option<Vec<BoundMotionCritic>>,
}

/// Bind generator-side nets onto a graph. `train` makes them leaves whose
/// gradients are later extracted in the same order as `visit_gen`.
pub fn bind_generator<'g, T: Scalar>(
    bundle: &ModelBundle<T>,
    b: &mut Binder<'g, T>,
) -> BoundGenerator {
    let ea = bundle.ea.bind(b);
    let gm = bundle.gm.as_ref().map(|gm| gm.bind(b, &bundle.config));
    let ev = bundle.ev.as_ref().map(|ev| {
        if bundle.config.frozen_extractor {
            // constants regardless of the binder's train flag
            let mut frozen = Binder::new(b.graph, false);
            ev.bind(&mut frozen)
        } else {
            ev.bind(b)
        }
    });
    let mi = bundle
        .mi
        .as_ref()
        .map(|mi| mi.iter().map(|k| k.bind(b)).collect());
    let fusion = bundle.fusion.as_ref().map(|fu| {
        fu.iter()
            .map(|blk| BoundFusionBlock { conv: blk.conv.bind(b) })
            .collect()
    });
    let inject = bundle.inject.as_ref().map(|inj| {
        inj.iter()
            .map(|blk| BoundCondInject {
                lin: blk.lin.bind(b),
                mix: blk.mix.bind(b),
                code_channels: blk.code_channels,
            })
            .collect()
    });
    let gv = bundle.gv.bind(b);
    BoundGenerator {
        ea,
        gm,
        ev,
        mi,
        fusion,
        inject,
        gv,
        clip_len: bundle.config.clip_len,
        mode: bundle.config.integrator,
    }
}

/// Bind critic-side nets onto a graph.
pub fn bind_critics<'g, T: Scalar>(bundle: &ModelBundle<T>, b: &mut Binder<'g, T>) -> BoundCritics {
    BoundCritics {
        dv: bundle.dv.as_ref().map(|d| d.bind(b)),
        dm: bundle
            .dm
            .as_ref()
            .map(|dm| dm.iter().map(|d| d.bind(b)).collect()),
    }
}

/// Tile a `[N,H,W,C]` map along a new time axis.
fn tile_time<T: Scalar>(g: &Graph<T>, x: Var, t: usize) -> Var {
    let s = g.shape(x);
    let r = g.reshape(x, &[s[0], 1, s[1], s[2], s[3]]);
    g.broadcast(r, &[s[0], t, s[1], s[2], s[3]])
}

/// Output of the full synthesis path.
pub struct SynthOutput {
    /// `[N, T, S, S, 3]` in `[-1, 1]`.
    pub video: Var,
    /// Motion pyramid actually used (absent in label-only mode).
    pub motion: Option<Vec<Var>>,
}

/// Compose encoder, motion source, per-level integration and decoding.
///
/// `cond` is the conditioning row batch (used by the motion generator and by
/// the label-only baseline). For [`MotionSource::Extracted`] the driving
/// clip's features replace generated motion.
pub fn hierarchical_synthesize<T: Scalar>(
    g: &Graph<T>,
    net: &BoundGenerator,
    x0: Var,
    cond: Var,
    source: MotionSource,
) -> Result<SynthOutput, NetworkError> {
    let e_a = appearance_encode(g, &net.ea, x0);
    let levels = e_a.len();
    let t_len = net.clip_len;

    let motion: Option<Vec<Var>> = match (&net.mode, source) {
        (IntegratorMode::LabelOnly, _) => None,
        (_, MotionSource::Generated) => {
            let gm = net.gm.as_ref().expect("motion generator allocated");
            Some(motion_generate(g, gm, cond))
        }
        (_, MotionSource::Extracted(drive)) => {
            let ev = net.ev.as_ref().ok_or(NetworkError::MissingDrivingClip)?;
            Some(motion_extract(g, ev, drive))
        }
    };

    let mut carry: Option<Var> = None;
    let mut decoded = None;
    for l in 0..levels {
        let e_v = match net.mode {
            IntegratorMode::Recurrent => {
                let k = &net.mi.as_ref().expect("integrator kernels")[l];
                integrate_sequence(g, k, e_a[l], motion.as_ref().unwrap()[l], carry)
            }
            IntegratorMode::Fusion => {
                let blk = &net.fusion.as_ref().expect("fusion blocks")[l];
                let tiled = tile_time(g, e_a[l], t_len);
                let mut parts = vec![tiled, motion.as_ref().unwrap()[l]];
                if let Some(c) = carry {
                    parts.push(c);
                }
                blk.conv.forward(g, g.concat(&parts, 4))
            }
            IntegratorMode::LabelOnly => {
                let blk = &net.inject.as_ref().expect("label injection blocks")[l];
                let tiled = tile_time(g, e_a[l], t_len);
                let s = g.shape(tiled);
                let code = blk.lin.forward(g, cond);
                let code = g.reshape(code, &[s[0], t_len, 1, 1, blk.code_channels]);
                let code = g.broadcast(code, &[s[0], t_len, s[2], s[3], blk.code_channels]);
                let mut parts = vec![tiled, code];
                if let Some(c) = carry {
                    parts.push(c);
                }
                blk.mix.forward(g, g.concat(&parts, 4))
            }
        };
        let d = decoder_block(g, &net.gv.blocks[l], e_v);
        carry = Some(d);
        decoded = Some(d);
    }

    // extra upsampling blocks when fewer than three levels integrate motion
    let mut h = decoded.expect("at least one level");
    for blk in net.gv.blocks.iter().skip(levels) {
        h = decoder_block(g, blk, h);
    }
    let video = g.tanh(net.gv.out.forward(g, h));
    Ok(SynthOutput { video, motion })
}
