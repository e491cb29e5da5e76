//! Parameterized layers: plain structs of arrays plus bound mirrors on a graph.
//!
//! Parameter traversal conventions: `bind` registers arrays on a graph (as
//! trainable leaves or frozen constants) in the same order that `visit`/
//! `visit_mut` walk them, so optimizers, checkpoints and gradient extraction
//! all agree on ordering.

use larnet_tensor::{Graph, Scalar, Var};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Registers parameters on a graph and remembers the vars in visit order.
pub struct Binder<'g, T: Scalar> {
    pub graph: &'g Graph<T>,
    pub train: bool,
    pub vars: Vec<Var>,
}

impl<'g, T: Scalar> Binder<'g, T> {
    pub fn new(graph: &'g Graph<T>, train: bool) -> Self {
        Binder { graph, train, vars: Vec::new() }
    }

    pub fn register(&mut self, arr: &ArrayD<T>) -> Var {
        let v = if self.train {
            self.graph.leaf(arr.clone())
        } else {
            self.graph.constant(arr.clone())
        };
        self.vars.push(v);
        v
    }
}

/// Visitor over named parameter tensors.
pub type Visit<'a, T> = dyn FnMut(String, &'a ArrayD<T>) + 'a;

fn kaiming_bound(fan_in: usize) -> f64 {
    // leaky-relu gain, slope 0.2
    let gain = (2.0 / (1.0 + 0.2f64 * 0.2)).sqrt();
    gain * (3.0 / fan_in as f64).sqrt()
}

pub fn init_uniform<T: Scalar>(rng: &mut ChaCha8Rng, dims: &[usize], fan_in: usize) -> ArrayD<T> {
    let bound = kaiming_bound(fan_in);
    ArrayD::from_shape_fn(IxDyn(dims), |_| T::of(rng.gen_range(-bound..bound)))
}

macro_rules! visit_fields {
    ($self:ident, $prefix:ident, $f:ident; $($name:ident),+) => {
        $( $f(format!("{}.{}", $prefix, stringify!($name)), &$self.$name); )+
    };
}

macro_rules! visit_fields_mut {
    ($self:ident, $prefix:ident, $f:ident; $($name:ident),+) => {
        $( $f(format!("{}.{}", $prefix, stringify!($name)), &mut $self.$name); )+
    };
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub w: ArrayD<T>,
    pub b: ArrayD<T>,
}

pub struct BoundLinear {
    pub w: Var,
    pub b: Var,
}

impl<T: Scalar> Linear<T> {
    pub fn new(rng: &mut ChaCha8Rng, din: usize, dout: usize) -> Self {
        Linear {
            w: init_uniform(rng, &[din, dout], din),
            b: ArrayD::zeros(IxDyn(&[dout])),
        }
    }

    pub fn bind(&self, b: &mut Binder<'_, T>) -> BoundLinear {
        BoundLinear { w: b.register(&self.w), b: b.register(&self.b) }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        visit_fields!(self, prefix, f; w, b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        visit_fields_mut!(self, prefix, f; w, b);
    }
}

impl BoundLinear {
    pub fn forward<T: Scalar>(&self, g: &Graph<T>, x: Var) -> Var {
        g.linear(x, self.w, Some(self.b))
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub w: ArrayD<T>,
    pub b: ArrayD<T>,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

pub struct BoundConv2d {
    pub w: Var,
    pub b: Var,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        rng: &mut ChaCha8Rng,
        k: usize,
        cin: usize,
        cout: usize,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Self {
        Conv2d {
            w: init_uniform(rng, &[k, k, cin, cout], k * k * cin),
            b: ArrayD::zeros(IxDyn(&[cout])),
            stride,
            pad,
        }
    }

    pub fn bind(&self, b: &mut Binder<'_, T>) -> BoundConv2d {
        BoundConv2d {
            w: b.register(&self.w),
            b: b.register(&self.b),
            stride: self.stride,
            pad: self.pad,
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        visit_fields!(self, prefix, f; w, b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        visit_fields_mut!(self, prefix, f; w, b);
    }
}

impl BoundConv2d {
    pub fn forward<T: Scalar>(&self, g: &Graph<T>, x: Var) -> Var {
        g.conv2d(x, self.w, Some(self.b), self.stride, self.pad)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Conv3d<T> {
    pub w: ArrayD<T>,
    pub b: ArrayD<T>,
    pub stride: (usize, usize, usize),
    pub pad: (usize, usize, usize),
}

pub struct BoundConv3d {
    pub w: Var,
    pub b: Var,
    pub stride: (usize, usize, usize),
    pub pad: (usize, usize, usize),
}

impl<T: Scalar> Conv3d<T> {
    pub fn new(
        rng: &mut ChaCha8Rng,
        k: (usize, usize, usize),
        cin: usize,
        cout: usize,
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Self {
        Conv3d {
            w: init_uniform(rng, &[k.0, k.1, k.2, cin, cout], k.0 * k.1 * k.2 * cin),
            b: ArrayD::zeros(IxDyn(&[cout])),
            stride,
            pad,
        }
    }

    pub fn bind(&self, b: &mut Binder<'_, T>) -> BoundConv3d {
        BoundConv3d {
            w: b.register(&self.w),
            b: b.register(&self.b),
            stride: self.stride,
            pad: self.pad,
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        visit_fields!(self, prefix, f; w, b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        visit_fields_mut!(self, prefix, f; w, b);
    }
}

impl BoundConv3d {
    pub fn forward<T: Scalar>(&self, g: &Graph<T>, x: Var) -> Var {
        g.conv3d(x, self.w, Some(self.b), self.stride, self.pad)
    }
}

// ---------------------------------------------------------------------------

/// Transposed 3D convolution (zero-stuff + conv).
#[derive(Debug, Clone)]
pub struct TConv3d<T> {
    pub w: ArrayD<T>,
    pub b: ArrayD<T>,
    pub stride: (usize, usize, usize),
    pub pad: (usize, usize, usize),
}

pub struct BoundTConv3d {
    pub w: Var,
    pub b: Var,
    pub stride: (usize, usize, usize),
    pub pad: (usize, usize, usize),
}

impl<T: Scalar> TConv3d<T> {
    pub fn new(
        rng: &mut ChaCha8Rng,
        k: (usize, usize, usize),
        cin: usize,
        cout: usize,
        stride: (usize, usize, usize),
        pad: (usize, usize, usize),
    ) -> Self {
        TConv3d {
            w: init_uniform(rng, &[k.0, k.1, k.2, cin, cout], k.0 * k.1 * k.2 * cin),
            b: ArrayD::zeros(IxDyn(&[cout])),
            stride,
            pad,
        }
    }

    pub fn bind(&self, b: &mut Binder<'_, T>) -> BoundTConv3d {
        BoundTConv3d {
            w: b.register(&self.w),
            b: b.register(&self.b),
            stride: self.stride,
            pad: self.pad,
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        visit_fields!(self, prefix, f; w, b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        visit_fields_mut!(self, prefix, f; w, b);
    }
}

impl BoundTConv3d {
    pub fn forward<T: Scalar>(&self, g: &Graph<T>, x: Var) -> Var {
        g.conv3d_transpose(x, self.w, Some(self.b), self.stride, self.pad)
    }
}

pub fn lrelu<T: Scalar>(g: &Graph<T>, x: Var) -> Var {
    g.leaky_relu(x, T::of(0.2))
}
