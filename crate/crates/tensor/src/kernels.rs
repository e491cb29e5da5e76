//! Dense kernels behind the graph ops: im2col gather/scatter, matrix products,
//! nearest upsampling and its sum-pool transpose, zero-stuffing for transposed
//! convolutions.
//!
//! All kernels write disjoint output regions per work item, so the parallel
//! and sequential paths are bit-identical.

use crate::{parallel, Conv2dDims, Conv3dDims, Scalar};
use ndarray::{Array2, ArrayD, ArrayView2, ArrayViewD, IxDyn};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Run `f(i, chunk)` for every `chunk_len` chunk of `out`, in parallel when enabled.
fn for_each_chunk<T: Send, F>(out: &mut [T], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel::enabled() {
        out.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk));
        return;
    }
    let _ = parallel::enabled();
    for (i, chunk) in out.chunks_mut(chunk_len).enumerate() {
        f(i, chunk);
    }
}

fn as_slice<'a, T: Scalar>(a: &'a ArrayViewD<'_, T>) -> &'a [T] {
    a.as_slice().expect("kernel input must be standard layout")
}

/// im2col over `[N,H,W,C]` -> `[N*Ho*Wo, kh*kw*C]` with implicit zero padding.
pub fn unfold2d<T: Scalar>(x: &ArrayViewD<'_, T>, d: &Conv2dDims) -> ArrayD<T> {
    let xs = as_slice(x);
    let row_len = d.kh * d.kw * d.c;
    let rows = d.n * d.ho * d.wo;
    let mut out = vec![T::zero(); rows * row_len];
    for_each_chunk(&mut out, row_len, |r, row| {
        let ox = r % d.wo;
        let oy = (r / d.wo) % d.ho;
        let n = r / (d.wo * d.ho);
        for ky in 0..d.kh {
            let iy = (oy * d.sh + ky) as isize - d.ph as isize;
            if iy < 0 || iy >= d.h as isize {
                continue;
            }
            for kx in 0..d.kw {
                let ix = (ox * d.sw + kx) as isize - d.pw as isize;
                if ix < 0 || ix >= d.w as isize {
                    continue;
                }
                let src = ((n * d.h + iy as usize) * d.w + ix as usize) * d.c;
                let dst = (ky * d.kw + kx) * d.c;
                row[dst..dst + d.c].copy_from_slice(&xs[src..src + d.c]);
            }
        }
    });
    ArrayD::from_shape_vec(IxDyn(&[rows, row_len]), out).unwrap()
}

/// Transpose of [`unfold2d`]: scatter-add columns back to `[N,H,W,C]`.
pub fn fold2d<T: Scalar>(cols: &ArrayViewD<'_, T>, d: &Conv2dDims) -> ArrayD<T> {
    let cs = as_slice(cols);
    let row_len = d.kh * d.kw * d.c;
    let sample = d.h * d.w * d.c;
    let mut out = vec![T::zero(); d.n * sample];
    // Parallel over samples: each sample's windows overlap only within itself.
    for_each_chunk(&mut out, sample, |n, img| {
        for oy in 0..d.ho {
            for ox in 0..d.wo {
                let row = &cs[((n * d.ho + oy) * d.wo + ox) * row_len..][..row_len];
                for ky in 0..d.kh {
                    let iy = (oy * d.sh + ky) as isize - d.ph as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for kx in 0..d.kw {
                        let ix = (ox * d.sw + kx) as isize - d.pw as isize;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        let dst = (iy as usize * d.w + ix as usize) * d.c;
                        let src = (ky * d.kw + kx) * d.c;
                        for c in 0..d.c {
                            img[dst + c] = img[dst + c] + row[src + c];
                        }
                    }
                }
            }
        }
    });
    ArrayD::from_shape_vec(IxDyn(&[d.n, d.h, d.w, d.c]), out).unwrap()
}

/// im2col over `[N,T,H,W,C]` -> `[N*To*Ho*Wo, kt*kh*kw*C]`.
pub fn unfold3d<T: Scalar>(x: &ArrayViewD<'_, T>, d: &Conv3dDims) -> ArrayD<T> {
    let xs = as_slice(x);
    let row_len = d.kt * d.kh * d.kw * d.c;
    let rows = d.n * d.to * d.ho * d.wo;
    let mut out = vec![T::zero(); rows * row_len];
    for_each_chunk(&mut out, row_len, |r, row| {
        let ox = r % d.wo;
        let oy = (r / d.wo) % d.ho;
        let ot = (r / (d.wo * d.ho)) % d.to;
        let n = r / (d.wo * d.ho * d.to);
        for kt in 0..d.kt {
            let it = (ot * d.st + kt) as isize - d.pt as isize;
            if it < 0 || it >= d.t as isize {
                continue;
            }
            for ky in 0..d.kh {
                let iy = (oy * d.sh + ky) as isize - d.ph as isize;
                if iy < 0 || iy >= d.h as isize {
                    continue;
                }
                for kx in 0..d.kw {
                    let ix = (ox * d.sw + kx) as isize - d.pw as isize;
                    if ix < 0 || ix >= d.w as isize {
                        continue;
                    }
                    let src = (((n * d.t + it as usize) * d.h + iy as usize) * d.w + ix as usize) * d.c;
                    let dst = ((kt * d.kh + ky) * d.kw + kx) * d.c;
                    row[dst..dst + d.c].copy_from_slice(&xs[src..src + d.c]);
                }
            }
        }
    });
    ArrayD::from_shape_vec(IxDyn(&[rows, row_len]), out).unwrap()
}

/// Transpose of [`unfold3d`].
pub fn fold3d<T: Scalar>(cols: &ArrayViewD<'_, T>, d: &Conv3dDims) -> ArrayD<T> {
    let cs = as_slice(cols);
    let row_len = d.kt * d.kh * d.kw * d.c;
    let sample = d.t * d.h * d.w * d.c;
    let mut out = vec![T::zero(); d.n * sample];
    for_each_chunk(&mut out, sample, |n, clip| {
        for ot in 0..d.to {
            for oy in 0..d.ho {
                for ox in 0..d.wo {
                    let row = &cs[(((n * d.to + ot) * d.ho + oy) * d.wo + ox) * row_len..][..row_len];
                    for kt in 0..d.kt {
                        let it = (ot * d.st + kt) as isize - d.pt as isize;
                        if it < 0 || it >= d.t as isize {
                            continue;
                        }
                        for ky in 0..d.kh {
                            let iy = (oy * d.sh + ky) as isize - d.ph as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            for kx in 0..d.kw {
                                let ix = (ox * d.sw + kx) as isize - d.pw as isize;
                                if ix < 0 || ix >= d.w as isize {
                                    continue;
                                }
                                let dst = ((it as usize * d.h + iy as usize) * d.w + ix as usize) * d.c;
                                let src = ((kt * d.kh + ky) * d.kw + kx) * d.c;
                                for c in 0..d.c {
                                    clip[dst + c] = clip[dst + c] + row[src + c];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    ArrayD::from_shape_vec(IxDyn(&[d.n, d.t, d.h, d.w, d.c]), out).unwrap()
}

/// `op(a) . op(b)` where each flag transposes its operand. Row blocks of the
/// result are computed in parallel when the left operand is untransposed.
pub fn matmul<T: Scalar>(
    a: &ArrayViewD<'_, T>,
    b: &ArrayViewD<'_, T>,
    ta: bool,
    tb: bool,
) -> ArrayD<T> {
    let a2: ArrayView2<'_, T> = a.view().into_dimensionality().expect("matmul lhs must be 2-D");
    let b2: ArrayView2<'_, T> = b.view().into_dimensionality().expect("matmul rhs must be 2-D");
    let av = if ta { a2.t() } else { a2 };
    let bv = if tb { b2.t() } else { b2 };
    let (m, ka) = (av.nrows(), av.ncols());
    let (kb, n) = (bv.nrows(), bv.ncols());
    assert_eq!(ka, kb, "matmul inner dims {ka} vs {kb}");
    let mut out = Array2::<T>::zeros((m, n));

    #[cfg(feature = "parallel")]
    if parallel::enabled() && !ta && m >= 128 {
        let threads = rayon::current_num_threads().max(1);
        let block = m.div_ceil(threads).max(64);
        out.as_slice_mut()
            .unwrap()
            .par_chunks_mut(block * n)
            .enumerate()
            .for_each(|(i, chunk)| {
                let rows = chunk.len() / n;
                let ab = av.slice(ndarray::s![i * block..i * block + rows, ..]);
                let mut cb = ndarray::ArrayViewMut2::from_shape((rows, n), chunk).unwrap();
                ndarray::linalg::general_mat_mul(T::one(), &ab, &bv, T::zero(), &mut cb);
            });
        return out.into_dyn();
    }

    ndarray::linalg::general_mat_mul(T::one(), &av, &bv, T::zero(), &mut out);
    out.into_dyn()
}

/// Nearest-neighbour upsample of `[N,T,H,W,C]` by integer factors.
pub fn upsample3d<T: Scalar>(x: &ArrayViewD<'_, T>, f: [usize; 3]) -> ArrayD<T> {
    let s = x.shape();
    let (n, t, h, w, c) = (s[0], s[1], s[2], s[3], s[4]);
    let (to, ho, wo) = (t * f[0], h * f[1], w * f[2]);
    let xs = as_slice(x);
    let mut out = vec![T::zero(); n * to * ho * wo * c];
    for_each_chunk(&mut out, wo * c, |r, row| {
        let oy = r % ho;
        let ot = (r / ho) % to;
        let nn = r / (ho * to);
        let src_base = (((nn * t + ot / f[0]) * h + oy / f[1]) * w) * c;
        for ox in 0..wo {
            let src = src_base + (ox / f[2]) * c;
            row[ox * c..(ox + 1) * c].copy_from_slice(&xs[src..src + c]);
        }
    });
    ArrayD::from_shape_vec(IxDyn(&[n, to, ho, wo, c]), out).unwrap()
}

/// Sum over `f`-blocks; transpose of [`upsample3d`]. Input `[N,To,Ho,Wo,C]`.
pub fn sumpool3d<T: Scalar>(x: &ArrayViewD<'_, T>, f: [usize; 3]) -> ArrayD<T> {
    let s = x.shape();
    let (n, to, ho, wo, c) = (s[0], s[1], s[2], s[3], s[4]);
    assert!(to % f[0] == 0 && ho % f[1] == 0 && wo % f[2] == 0, "sumpool factors must divide extent");
    let (t, h, w) = (to / f[0], ho / f[1], wo / f[2]);
    let xs = as_slice(x);
    let mut out = vec![T::zero(); n * t * h * w * c];
    for_each_chunk(&mut out, w * c, |r, row| {
        let oy = r % h;
        let ot = (r / h) % t;
        let nn = r / (h * t);
        for ox in 0..w {
            for dt in 0..f[0] {
                for dy in 0..f[1] {
                    for dx in 0..f[2] {
                        let src = ((((nn * to + ot * f[0] + dt) * ho) + oy * f[1] + dy) * wo
                            + ox * f[2]
                            + dx)
                            * c;
                        for ch in 0..c {
                            row[ox * c + ch] = row[ox * c + ch] + xs[src + ch];
                        }
                    }
                }
            }
        }
    });
    ArrayD::from_shape_vec(IxDyn(&[n, t, h, w, c]), out).unwrap()
}

/// Insert `f-1` zeros between elements along T/H/W; `[N,T,H,W,C]` ->
/// `[(T-1)f+1, ...]`. This is the stride part of a transposed convolution.
pub fn zerostuff3d<T: Scalar>(x: &ArrayViewD<'_, T>, f: [usize; 3]) -> ArrayD<T> {
    let s = x.shape();
    let (n, t, h, w, c) = (s[0], s[1], s[2], s[3], s[4]);
    let (to, ho, wo) = ((t - 1) * f[0] + 1, (h - 1) * f[1] + 1, (w - 1) * f[2] + 1);
    let xs = as_slice(x);
    let mut out = vec![T::zero(); n * to * ho * wo * c];
    for_each_chunk(&mut out, wo * c, |r, row| {
        let oy = r % ho;
        let ot = (r / ho) % to;
        let nn = r / (ho * to);
        if ot % f[0] != 0 || oy % f[1] != 0 {
            return;
        }
        let src_base = (((nn * t + ot / f[0]) * h + oy / f[1]) * w) * c;
        for ix in 0..w {
            let src = src_base + ix * c;
            let dst = ix * f[2] * c;
            row[dst..dst + c].copy_from_slice(&xs[src..src + c]);
        }
    });
    ArrayD::from_shape_vec(IxDyn(&[n, to, ho, wo, c]), out).unwrap()
}

/// Pick every `f`-th element along T/H/W; transpose of [`zerostuff3d`].
pub fn subsample3d<T: Scalar>(x: &ArrayViewD<'_, T>, f: [usize; 3]) -> ArrayD<T> {
    let s = x.shape();
    let (n, to, ho, wo, c) = (s[0], s[1], s[2], s[3], s[4]);
    assert!(
        (to - 1) % f[0] == 0 && (ho - 1) % f[1] == 0 && (wo - 1) % f[2] == 0,
        "subsample extent must be (k-1)*f+1"
    );
    let (t, h, w) = ((to - 1) / f[0] + 1, (ho - 1) / f[1] + 1, (wo - 1) / f[2] + 1);
    let xs = as_slice(x);
    let mut out = vec![T::zero(); n * t * h * w * c];
    for_each_chunk(&mut out, w * c, |r, row| {
        let oy = r % h;
        let ot = (r / h) % t;
        let nn = r / (h * t);
        let src_base = (((nn * to + ot * f[0]) * ho + oy * f[1]) * wo) * c;
        for ox in 0..w {
            let src = src_base + ox * f[2] * c;
            row[ox * c..(ox + 1) * c].copy_from_slice(&xs[src..src + c]);
        }
    });
    ArrayD::from_shape_vec(IxDyn(&[n, t, h, w, c]), out).unwrap()
}

/// Elementwise map that fans out across chunks when parallelism is on.
pub fn map_elems<T: Scalar>(x: &ArrayViewD<'_, T>, f: impl Fn(T) -> T + Send + Sync) -> ArrayD<T> {
    let xs = as_slice(x);
    let mut out = vec![T::zero(); xs.len()];
    const CHUNK: usize = 1 << 14;
    for_each_chunk(&mut out, CHUNK, |i, chunk| {
        let base = i * CHUNK;
        for (j, o) in chunk.iter_mut().enumerate() {
            *o = f(xs[base + j]);
        }
    });
    ArrayD::from_shape_vec(x.raw_dim(), out).unwrap()
}

/// Elementwise binary map over same-shape operands.
pub fn zip_elems<T: Scalar>(
    a: &ArrayViewD<'_, T>,
    b: &ArrayViewD<'_, T>,
    f: impl Fn(T, T) -> T + Send + Sync,
) -> ArrayD<T> {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    let (xs, ys) = (as_slice(a), as_slice(b));
    let mut out = vec![T::zero(); xs.len()];
    const CHUNK: usize = 1 << 14;
    for_each_chunk(&mut out, CHUNK, |i, chunk| {
        let base = i * CHUNK;
        for (j, o) in chunk.iter_mut().enumerate() {
            *o = f(xs[base + j], ys[base + j]);
        }
    });
    ArrayD::from_shape_vec(a.raw_dim(), out).unwrap()
}
