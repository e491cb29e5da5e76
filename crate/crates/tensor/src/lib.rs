//! Eager reverse-mode autodiff over `ndarray`, sized for small video models.
//!
//! Every operation computes its value immediately and records itself on a
//! [`Graph`]. Backward passes emit ordinary graph operations, so gradients are
//! themselves differentiable (second-order terms such as gradient-norm
//! penalties work without special cases).
//!
//! Tensors are channels-last: frames are `[N, H, W, C]`, clips are
//! `[N, T, H, W, C]`. Convolutions lower to an im2col gather plus one matrix
//! product per call.

pub mod gradcheck;
mod graph;
mod kernels;
pub mod parallel;

pub use graph::{Graph, Var};

use ndarray::{ArcArray, IxDyn};

/// Element type for graph values. Training runs at `f32`; gradient checks
/// instantiate `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Lossy cast from `f64`, for constants woven into generic code.
    fn of(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("finite constant")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shared-ownership dynamic-dimensional array used for node values.
pub type Value<T> = ArcArray<T, IxDyn>;

/// Geometry of a 2D convolution lowering, kept on unfold/fold nodes so the
/// transpose direction can reconstruct the input extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dDims {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub ho: usize,
    pub wo: usize,
}

/// Geometry of a 3D convolution lowering over `[N, T, H, W, C]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv3dDims {
    pub n: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kt: usize,
    pub kh: usize,
    pub kw: usize,
    pub st: usize,
    pub sh: usize,
    pub sw: usize,
    pub pt: usize,
    pub ph: usize,
    pub pw: usize,
    pub to: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Conv2dDims {
    pub fn infer(
        in_shape: &[usize],
        kh: usize,
        kw: usize,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Self {
        assert_eq!(in_shape.len(), 4, "conv2d expects [N,H,W,C], got {in_shape:?}");
        let (n, h, w, c) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
        let (sh, sw) = stride;
        let (ph, pw) = pad;
        assert!(h + 2 * ph >= kh && w + 2 * pw >= kw, "kernel larger than padded input");
        let ho = (h + 2 * ph - kh) / sh + 1;
        let wo = (w + 2 * pw - kw) / sw + 1;
        Conv2dDims { n, h, w, c, kh, kw, sh, sw, ph, pw, ho, wo }
    }
}

impl Conv3dDims {
    pub fn infer(
        in_shape: &[usize],
        k: (usize, usize, usize),
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Self {
        assert_eq!(in_shape.len(), 5, "conv3d expects [N,T,H,W,C], got {in_shape:?}");
        let (n, t, h, w, c) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3], in_shape[4]);
        let (kt, kh, kw) = k;
        let (st, sh, sw) = stride;
        let (pt, ph, pw) = pad;
        assert!(
            t + 2 * pt >= kt && h + 2 * ph >= kh && w + 2 * pw >= kw,
            "kernel larger than padded input"
        );
        let to = (t + 2 * pt - kt) / st + 1;
        let ho = (h + 2 * ph - kh) / sh + 1;
        let wo = (w + 2 * pw - kw) / sw + 1;
        Conv3dDims { n, t, h, w, c, kt, kh, kw, st, sh, sw, pt, ph, pw, to, ho, wo }
    }
}
