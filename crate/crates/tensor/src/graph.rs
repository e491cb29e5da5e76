use std::cell::RefCell;

use ndarray::{concatenate, ArrayD, Axis, IxDyn, Slice};

use crate::kernels;
use crate::{Conv2dDims, Conv3dDims, Scalar, Value};

/// Handle to a node on a [`Graph`]. Plain index; cheap to copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf { trainable: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    ScalarMul(Var, T),
    ScalarAdd(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, T),
    Sqrt(Var),
    Exp(Var),
    Ln(Var),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Broadcast(Var),
    SumAxis(Var, usize),
    SumAll(Var),
    Concat(Vec<Var>, usize),
    Slice { x: Var, axis: usize, start: usize, len: usize },
    PadAxis { x: Var, axis: usize, before: usize },
    Unfold2d { x: Var, d: Conv2dDims },
    Fold2d { x: Var, d: Conv2dDims },
    Unfold3d { x: Var, d: Conv3dDims },
    Fold3d { x: Var, d: Conv3dDims },
    Upsample3d { x: Var, f: [usize; 3] },
    SumPool3d { x: Var, f: [usize; 3] },
    ZeroStuff3d { x: Var, f: [usize; 3] },
    Subsample3d { x: Var, f: [usize; 3] },
}

impl<T> Op<T> {
    fn parents(&self, out: &mut Vec<Var>) {
        use Op::*;
        match self {
            Leaf { .. } => {}
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => out.extend([*a, *b]),
            MatMul { a, b, .. } => out.extend([*a, *b]),
            Neg(a) | ScalarMul(a, _) | ScalarAdd(a, _) | Sigmoid(a) | Tanh(a) | LeakyRelu(a, _)
            | Sqrt(a) | Exp(a) | Ln(a) | Reshape(a) | Permute(a, _) | Broadcast(a)
            | SumAxis(a, _) | SumAll(a) => out.push(*a),
            Concat(xs, _) => out.extend(xs.iter().copied()),
            Slice { x, .. } | PadAxis { x, .. } | Unfold2d { x, .. } | Fold2d { x, .. }
            | Unfold3d { x, .. } | Fold3d { x, .. } | Upsample3d { x, .. } | SumPool3d { x, .. }
            | ZeroStuff3d { x, .. } | Subsample3d { x, .. } => out.push(*x),
        }
    }
}

struct Node<T: Scalar> {
    value: Value<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Eager autodiff tape. Operations record themselves as they compute; values
/// live for the lifetime of the graph, which is typically one training step.
pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: ArrayD<T>, op: Op<T>) -> Var {
        debug_assert!(value.is_standard_layout());
        let needs_grad = match &op {
            Op::Leaf { trainable } => *trainable,
            other => {
                let mut ps = Vec::new();
                other.parents(&mut ps);
                let nodes = self.nodes.borrow();
                ps.iter().any(|p| nodes[p.0].needs_grad)
            }
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: value.into_shared(), op, needs_grad });
        Var(nodes.len() - 1)
    }

    /// Record an input that gradients are not requested for.
    pub fn constant(&self, value: ArrayD<T>) -> Var {
        let value = if value.is_standard_layout() { value } else { value.as_standard_layout().into_owned() };
        self.push(value, Op::Leaf { trainable: false })
    }

    /// Record an input that participates in gradients (parameters, or data
    /// points that a gradient penalty differentiates against).
    pub fn leaf(&self, value: ArrayD<T>) -> Var {
        let value = if value.is_standard_layout() { value } else { value.as_standard_layout().into_owned() };
        self.push(value, Op::Leaf { trainable: true })
    }

    pub fn scalar(&self, v: T) -> Var {
        self.constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    /// Shared handle to a node's value.
    pub fn value(&self, v: Var) -> Value<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// Extract a scalar result; panics unless the node holds exactly one element.
    pub fn scalar_value(&self, v: Var) -> T {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "expected scalar node, shape {:?}", val.shape());
        *val.iter().next().unwrap()
    }

    /// Re-enter a value as a constant, severing its gradient history.
    pub fn detach(&self, v: Var) -> Var {
        let val = self.value(v);
        self.push(val.to_owned(), Op::Leaf { trainable: false })
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].needs_grad
    }

    fn binop(&self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T + Send + Sync) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "binary op shape mismatch {:?} vs {:?}", va.shape(), vb.shape());
        let out = kernels::zip_elems(&va.view(), &vb.view(), f);
        self.push(out, op)
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        self.binop(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        self.binop(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        self.binop(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&self, a: Var, b: Var) -> Var {
        self.binop(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn neg(&self, a: Var) -> Var {
        let out = kernels::map_elems(&self.value(a).view(), |x| -x);
        self.push(out, Op::Neg(a))
    }

    pub fn scalar_mul(&self, a: Var, s: T) -> Var {
        let out = kernels::map_elems(&self.value(a).view(), |x| x * s);
        self.push(out, Op::ScalarMul(a, s))
    }

    pub fn scalar_add(&self, a: Var, s: T) -> Var {
        let out = kernels::map_elems(&self.value(a).view(), |x| x + s);
        self.push(out, Op::ScalarAdd(a, s))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = kernels::map_elems(&self.value(a).view(), |x| {
            if x >= T::zero() {
                T::one() / (T::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::one() + e)
            }
        });
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = kernels::map_elems(&self.value(a).view(), |x| x.tanh());
        self.push(out, Op::Tanh(a))
    }

    pub fn leaky_relu(&self, a: Var, alpha: T) -> Var {
        let out = kernels::map_elems(&self.value(a).view(), move |x| {
            if x > T::zero() {
                x
            } else {
                x * alpha
            }
        });
        self.push(out, Op::LeakyRelu(a, alpha))
    }

    pub fn sqrt(&self, a: Var) -> Var {
        let out = kernels::map_elems(&self.value(a).view(), |x| x.sqrt());
        self.push(out, Op::Sqrt(a))
    }

    pub fn exp(&self, a: Var) -> Var {
        let out = kernels::map_elems(&self.value(a).view(), |x| x.exp());
        self.push(out, Op::Exp(a))
    }

    pub fn ln(&self, a: Var) -> Var {
        let out = kernels::map_elems(&self.value(a).view(), |x| x.ln());
        self.push(out, Op::Ln(a))
    }

    pub fn square(&self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn matmul(&self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let out = kernels::matmul(&self.value(a).view(), &self.value(b).view(), ta, tb);
        self.push(out, Op::MatMul { a, b, ta, tb })
    }

    pub fn reshape(&self, a: Var, dims: &[usize]) -> Var {
        let val = self.value(a);
        assert_eq!(val.len(), dims.iter().product::<usize>(), "reshape {:?} -> {dims:?}", val.shape());
        let out = val
            .to_owned()
            .into_shape_with_order(IxDyn(dims))
            .expect("reshape of standard-layout value");
        self.push(out, Op::Reshape(a))
    }

    pub fn permute(&self, a: Var, perm: &[usize]) -> Var {
        let val = self.value(a);
        let out = val.view().permuted_axes(IxDyn(perm)).as_standard_layout().into_owned();
        self.push(out, Op::Permute(a, perm.to_vec()))
    }

    pub fn broadcast(&self, a: Var, dims: &[usize]) -> Var {
        let val = self.value(a);
        if val.shape() == dims {
            return a;
        }
        let out = val
            .broadcast(IxDyn(dims))
            .unwrap_or_else(|| panic!("cannot broadcast {:?} to {dims:?}", val.shape()))
            .to_owned();
        self.push(out, Op::Broadcast(a))
    }

    /// Sum along one axis, removing it.
    pub fn sum_axis(&self, a: Var, axis: usize) -> Var {
        let out = self.value(a).sum_axis(Axis(axis));
        self.push(out, Op::SumAxis(a, axis))
    }

    /// Sum to a 0-d scalar.
    pub fn sum_all(&self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(ArrayD::from_elem(IxDyn(&[]), s), Op::SumAll(a))
    }

    pub fn mean_all(&self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum_all(a);
        self.scalar_mul(s, T::one() / T::of(n as f64))
    }

    pub fn concat(&self, xs: &[Var], axis: usize) -> Var {
        assert!(!xs.is_empty(), "concat of zero tensors");
        let vals: Vec<Value<T>> = xs.iter().map(|v| self.value(*v)).collect();
        let views: Vec<_> = vals.iter().map(|v| v.view()).collect();
        let out = concatenate(Axis(axis), &views).expect("concat shape mismatch");
        let out = if out.is_standard_layout() { out } else { out.as_standard_layout().into_owned() };
        self.push(out, Op::Concat(xs.to_vec(), axis))
    }

    pub fn slice(&self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let val = self.value(a);
        assert!(start + len <= val.shape()[axis], "slice out of range");
        let out = val
            .slice_axis(Axis(axis), Slice::from(start..start + len))
            .as_standard_layout()
            .into_owned();
        self.push(out, Op::Slice { x: a, axis, start, len })
    }

    pub fn pad_axis(&self, a: Var, axis: usize, before: usize, after: usize) -> Var {
        let val = self.value(a);
        let mut dims = val.shape().to_vec();
        dims[axis] += before + after;
        let mut out = ArrayD::zeros(IxDyn(&dims));
        out.slice_axis_mut(Axis(axis), Slice::from(before..before + val.shape()[axis]))
            .assign(&val);
        self.push(out, Op::PadAxis { x: a, axis, before })
    }

    pub fn unfold2d(&self, a: Var, d: Conv2dDims) -> Var {
        let out = kernels::unfold2d(&self.value(a).view(), &d);
        self.push(out, Op::Unfold2d { x: a, d })
    }

    pub fn fold2d(&self, a: Var, d: Conv2dDims) -> Var {
        let out = kernels::fold2d(&self.value(a).view(), &d);
        self.push(out, Op::Fold2d { x: a, d })
    }

    pub fn unfold3d(&self, a: Var, d: Conv3dDims) -> Var {
        let out = kernels::unfold3d(&self.value(a).view(), &d);
        self.push(out, Op::Unfold3d { x: a, d })
    }

    pub fn fold3d(&self, a: Var, d: Conv3dDims) -> Var {
        let out = kernels::fold3d(&self.value(a).view(), &d);
        self.push(out, Op::Fold3d { x: a, d })
    }

    pub fn upsample3d(&self, a: Var, f: [usize; 3]) -> Var {
        let out = kernels::upsample3d(&self.value(a).view(), f);
        self.push(out, Op::Upsample3d { x: a, f })
    }

    pub fn sumpool3d(&self, a: Var, f: [usize; 3]) -> Var {
        let out = kernels::sumpool3d(&self.value(a).view(), f);
        self.push(out, Op::SumPool3d { x: a, f })
    }

    pub fn zerostuff3d(&self, a: Var, f: [usize; 3]) -> Var {
        let out = kernels::zerostuff3d(&self.value(a).view(), f);
        self.push(out, Op::ZeroStuff3d { x: a, f })
    }

    pub fn subsample3d(&self, a: Var, f: [usize; 3]) -> Var {
        let out = kernels::subsample3d(&self.value(a).view(), f);
        self.push(out, Op::Subsample3d { x: a, f })
    }

    // ---- composites -------------------------------------------------------

    /// `x [N,H,W,Cin] * w [kh,kw,Cin,Cout] (+ b [Cout])`.
    pub fn conv2d(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Var {
        let xs = self.shape(x);
        let ws = self.shape(w);
        assert_eq!(ws.len(), 4, "conv2d weight must be [kh,kw,Cin,Cout]");
        assert_eq!(xs[3], ws[2], "conv2d channel mismatch: input {} vs weight {}", xs[3], ws[2]);
        let d = Conv2dDims::infer(&xs, ws[0], ws[1], stride, pad);
        let cols = self.unfold2d(x, d);
        let w2 = self.reshape(w, &[ws[0] * ws[1] * ws[2], ws[3]]);
        let y = self.matmul(cols, w2, false, false);
        let y = self.reshape(y, &[d.n, d.ho, d.wo, ws[3]]);
        self.maybe_bias(y, b)
    }

    /// `x [N,T,H,W,Cin] * w [kt,kh,kw,Cin,Cout] (+ b [Cout])`.
    pub fn conv3d(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Var {
        let xs = self.shape(x);
        let ws = self.shape(w);
        assert_eq!(ws.len(), 5, "conv3d weight must be [kt,kh,kw,Cin,Cout]");
        assert_eq!(xs[4], ws[3], "conv3d channel mismatch: input {} vs weight {}", xs[4], ws[3]);
        let d = Conv3dDims::infer(&xs, (ws[0], ws[1], ws[2]), stride, pad);
        let cols = self.unfold3d(x, d);
        let w2 = self.reshape(w, &[ws[0] * ws[1] * ws[2] * ws[3], ws[4]]);
        let y = self.matmul(cols, w2, false, false);
        let y = self.reshape(y, &[d.n, d.to, d.ho, d.wo, ws[4]]);
        self.maybe_bias(y, b)
    }

    /// Transposed 3D convolution: zero-stuff by `stride`, then convolve with
    /// pad `k-1-p`. Output extent is `(in-1)*stride + k - 2p` per axis.
    pub fn conv3d_transpose(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Var {
        let ws = self.shape(w);
        assert_eq!(ws.len(), 5, "conv3d_transpose weight must be [kt,kh,kw,Cin,Cout]");
        let k = (ws[0], ws[1], ws[2]);
        assert!(
            k.0 > pad.0 && k.1 > pad.1 && k.2 > pad.2,
            "transposed conv needs k > pad per axis"
        );
        let stuffed = self.zerostuff3d(x, [stride.0, stride.1, stride.2]);
        self.conv3d(stuffed, w, b, (1, 1, 1), (k.0 - 1 - pad.0, k.1 - 1 - pad.1, k.2 - 1 - pad.2))
    }

    /// `x [N,Din] * w [Din,Dout] + b [Dout]`.
    pub fn linear(&self, x: Var, w: Var, b: Option<Var>) -> Var {
        let y = self.matmul(x, w, false, false);
        self.maybe_bias(y, b)
    }

    fn maybe_bias(&self, y: Var, b: Option<Var>) -> Var {
        let Some(b) = b else { return y };
        let ys = self.shape(y);
        let bs = self.shape(b);
        assert_eq!(bs.len(), 1, "bias must be rank 1");
        assert_eq!(*ys.last().unwrap(), bs[0], "bias length mismatch");
        let mut view = vec![1usize; ys.len()];
        *view.last_mut().unwrap() = bs[0];
        let bb = self.reshape(b, &view);
        let bb = self.broadcast(bb, &ys);
        self.add(y, bb)
    }

    /// Stack per-timestep maps `[N,H,W,C]` into a clip `[N,T,H,W,C]`.
    pub fn stack_time(&self, frames: &[Var]) -> Var {
        let expanded: Vec<Var> = frames
            .iter()
            .map(|f| {
                let s = self.shape(*f);
                assert_eq!(s.len(), 4, "stack_time expects [N,H,W,C] frames");
                self.reshape(*f, &[s[0], 1, s[1], s[2], s[3]])
            })
            .collect();
        self.concat(&expanded, 1)
    }

    /// Extract timestep `t` of a clip `[N,T,H,W,C]` as `[N,H,W,C]`.
    pub fn index_time(&self, clip: Var, t: usize) -> Var {
        let s = self.shape(clip);
        assert_eq!(s.len(), 5, "index_time expects [N,T,H,W,C]");
        let sl = self.slice(clip, 1, t, 1);
        self.reshape(sl, &[s[0], s[2], s[3], s[4]])
    }

    /// Sum over all axes except `keep`, yielding a rank-1 tensor.
    pub fn sum_keeping(&self, a: Var, keep: usize) -> Var {
        let rank = self.shape(a).len();
        let mut v = a;
        for axis in (0..rank).rev() {
            if axis != keep {
                v = self.sum_axis(v, axis);
            }
        }
        v
    }

    // ---- autodiff ---------------------------------------------------------

    /// Gradients of scalar `y` with respect to each of `xs`.
    ///
    /// Gradient computation emits ordinary ops, so the returned vars can be
    /// differentiated again. Disconnected inputs get zero gradients.
    pub fn grad(&self, y: Var, xs: &[Var]) -> Vec<Var> {
        let limit = y.0 + 1;
        let y_shape = self.shape(y);
        assert_eq!(y_shape.iter().product::<usize>(), 1, "grad target must be scalar, got {y_shape:?}");
        let mut grads: Vec<Option<Var>> = vec![None; limit];
        grads[y.0] = Some(self.constant(ArrayD::ones(IxDyn(&y_shape))));

        for id in (0..limit).rev() {
            let Some(g) = grads[id] else { continue };
            let (op, needs) = {
                let nodes = self.nodes.borrow();
                (nodes[id].op.clone(), nodes[id].needs_grad)
            };
            if !needs {
                continue;
            }
            self.vjp(Var(id), &op, g, &mut |parent: Var, contrib: Var| {
                debug_assert!(parent.0 < id || matches!(op, Op::Leaf { .. }));
                grads[parent.0] = Some(match grads[parent.0] {
                    None => contrib,
                    Some(acc) => self.add(acc, contrib),
                });
            });
        }

        xs.iter()
            .map(|x| {
                grads.get(x.0).copied().flatten().unwrap_or_else(|| {
                    self.constant(ArrayD::zeros(IxDyn(&self.shape(*x))))
                })
            })
            .collect()
    }

    /// Emit vector-Jacobian contributions of node `out` into its parents.
    fn vjp(&self, out: Var, op: &Op<T>, g: Var, sink: &mut impl FnMut(Var, Var)) {
        use Op::*;
        macro_rules! wants {
            ($v:expr) => {
                self.needs_grad(*$v)
            };
        }
        match op {
            Leaf { .. } => {}
            Add(a, b) => {
                if wants!(a) {
                    sink(*a, g);
                }
                if wants!(b) {
                    sink(*b, g);
                }
            }
            Sub(a, b) => {
                if wants!(a) {
                    sink(*a, g);
                }
                if wants!(b) {
                    sink(*b, self.neg(g));
                }
            }
            Mul(a, b) => {
                if wants!(a) {
                    sink(*a, self.mul(g, *b));
                }
                if wants!(b) {
                    sink(*b, self.mul(g, *a));
                }
            }
            Div(a, b) => {
                if wants!(a) {
                    sink(*a, self.div(g, *b));
                }
                if wants!(b) {
                    let bb = self.mul(*b, *b);
                    let num = self.mul(g, *a);
                    sink(*b, self.neg(self.div(num, bb)));
                }
            }
            Neg(a) => {
                if wants!(a) {
                    sink(*a, self.neg(g));
                }
            }
            ScalarMul(a, s) => {
                if wants!(a) {
                    sink(*a, self.scalar_mul(g, *s));
                }
            }
            ScalarAdd(a, _) => {
                if wants!(a) {
                    sink(*a, g);
                }
            }
            Sigmoid(a) => {
                if wants!(a) {
                    // y' = y (1 - y), written on the output node
                    let one_minus = self.scalar_add(self.neg(out), T::one());
                    sink(*a, self.mul(g, self.mul(out, one_minus)));
                }
            }
            Tanh(a) => {
                if wants!(a) {
                    let sq = self.mul(out, out);
                    let d = self.scalar_add(self.neg(sq), T::one());
                    sink(*a, self.mul(g, d));
                }
            }
            LeakyRelu(a, alpha) => {
                if wants!(a) {
                    // Piecewise-constant slope; second derivative vanishes a.e.
                    let alpha = *alpha;
                    let mask = kernels::map_elems(&self.value(*a).view(), move |x| {
                        if x > T::zero() {
                            T::one()
                        } else {
                            alpha
                        }
                    });
                    let mask = self.constant(mask);
                    sink(*a, self.mul(g, mask));
                }
            }
            Sqrt(a) => {
                if wants!(a) {
                    let half_g = self.scalar_mul(g, T::of(0.5));
                    sink(*a, self.div(half_g, out));
                }
            }
            Exp(a) => {
                if wants!(a) {
                    sink(*a, self.mul(g, out));
                }
            }
            Ln(a) => {
                if wants!(a) {
                    sink(*a, self.div(g, *a));
                }
            }
            MatMul { a, b, ta, tb } => {
                if wants!(a) {
                    let da = if *ta {
                        self.matmul(*b, g, *tb, true)
                    } else {
                        self.matmul(g, *b, false, !*tb)
                    };
                    sink(*a, da);
                }
                if wants!(b) {
                    let db = if *tb {
                        self.matmul(g, *a, true, *ta)
                    } else {
                        self.matmul(*a, g, !*ta, false)
                    };
                    sink(*b, db);
                }
            }
            Reshape(a) => {
                if wants!(a) {
                    let ps = self.shape(*a);
                    sink(*a, self.reshape(g, &ps));
                }
            }
            Permute(a, perm) => {
                if wants!(a) {
                    let mut inv = vec![0usize; perm.len()];
                    for (i, &p) in perm.iter().enumerate() {
                        inv[p] = i;
                    }
                    sink(*a, self.permute(g, &inv));
                }
            }
            Broadcast(a) => {
                if wants!(a) {
                    let ps = self.shape(*a);
                    let os = self.shape(out);
                    let lead = os.len() - ps.len();
                    let mut v = g;
                    // Sum out broadcast axes from the back so indices stay valid.
                    for axis in (0..os.len()).rev() {
                        let from_parent = axis >= lead;
                        let p_dim = if from_parent { ps[axis - lead] } else { 1 };
                        if p_dim == 1 && os[axis] != 1 {
                            v = self.sum_axis(v, axis);
                        } else if !from_parent {
                            v = self.sum_axis(v, axis);
                        }
                    }
                    sink(*a, self.reshape(v, &ps));
                }
            }
            SumAxis(a, axis) => {
                if wants!(a) {
                    let ps = self.shape(*a);
                    let mut keep = ps.clone();
                    keep[*axis] = 1;
                    let v = self.reshape(g, &keep);
                    sink(*a, self.broadcast(v, &ps));
                }
            }
            SumAll(a) => {
                if wants!(a) {
                    let ps = self.shape(*a);
                    sink(*a, self.broadcast(g, &ps));
                }
            }
            Concat(xs, axis) => {
                let mut start = 0usize;
                for x in xs {
                    let len = self.shape(*x)[*axis];
                    if wants!(x) {
                        sink(*x, self.slice(g, *axis, start, len));
                    }
                    start += len;
                }
            }
            Slice { x, axis, start, len } => {
                if wants!(x) {
                    let total = self.shape(*x)[*axis];
                    sink(*x, self.pad_axis(g, *axis, *start, total - start - len));
                }
            }
            PadAxis { x, axis, before, .. } => {
                if wants!(x) {
                    let len = self.shape(*x)[*axis];
                    sink(*x, self.slice(g, *axis, *before, len));
                }
            }
            Unfold2d { x, d } => {
                if wants!(x) {
                    sink(*x, self.fold2d(g, *d));
                }
            }
            Fold2d { x, d } => {
                if wants!(x) {
                    sink(*x, self.unfold2d(g, *d));
                }
            }
            Unfold3d { x, d } => {
                if wants!(x) {
                    sink(*x, self.fold3d(g, *d));
                }
            }
            Fold3d { x, d } => {
                if wants!(x) {
                    sink(*x, self.unfold3d(g, *d));
                }
            }
            Upsample3d { x, f } => {
                if wants!(x) {
                    sink(*x, self.sumpool3d(g, *f));
                }
            }
            SumPool3d { x, f } => {
                if wants!(x) {
                    sink(*x, self.upsample3d(g, *f));
                }
            }
            ZeroStuff3d { x, f } => {
                if wants!(x) {
                    sink(*x, self.subsample3d(g, *f));
                }
            }
            Subsample3d { x, f } => {
                if wants!(x) {
                    sink(*x, self.zerostuff3d(g, *f));
                }
            }
        }
    }
}
