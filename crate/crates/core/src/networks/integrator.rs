//! Recurrent gated motion integration.
//!
//! One step rewrites the appearance map under the motion features:
//!
//! ```text
//! b   = sigmoid(W_b * <e_a_prev, e_m_t>)
//! f   = sigmoid(W_f * <e_a_prev, e_m_t>)
//! e_v = b .* e_a_prev + (1 - b) .* tanh(W_a * <e_m_t, f .* e_a_prev>)
//! ```
//!
//! where `<.,.>` is channel concatenation and `e_v` doubles as the next
//! step's hidden state. The unrolled sequence starts from the level's
//! appearance map; when a finer level receives decoded features from the
//! level below, those are fused into the motion input per timestep through a
//! 1x1 convolution.

use larnet_tensor::{Graph, Scalar, Var};
use ndarray::ArrayD;
use rand_chacha::ChaCha8Rng;

use super::layers::{Binder, Conv2d};

/// Learnable kernels of one integrator level.
#[derive(Debug, Clone)]
pub struct IntegratorKernels<T> {
    pub w_b: Conv2d<T>,
    pub w_f: Conv2d<T>,
    pub w_a: Conv2d<T>,
    /// 1x1 fusion of (motion, carried decoder features), finer levels only.
    pub fuse: Option<Conv2d<T>>,
}

pub struct BoundIntegrator {
    pub w_b: super::layers::BoundConv2d,
    pub w_f: super::layers::BoundConv2d,
    pub w_a: super::layers::BoundConv2d,
    pub fuse: Option<super::layers::BoundConv2d>,
}

impl<T: Scalar> IntegratorKernels<T> {
    /// `channels` is the level width; gates consume `2*channels` after
    /// concatenation. `carry_channels` is nonzero on levels that receive
    /// decoded features from the previous level.
    pub fn new(rng: &mut ChaCha8Rng, channels: usize, carry_channels: usize) -> Self {
        IntegratorKernels {
            w_b: Conv2d::new(rng, 3, 2 * channels, channels, (1, 1), (1, 1)),
            w_f: Conv2d::new(rng, 3, 2 * channels, channels, (1, 1), (1, 1)),
            w_a: Conv2d::new(rng, 3, 2 * channels, channels, (1, 1), (1, 1)),
            fuse: (carry_channels > 0)
                .then(|| Conv2d::new(rng, 1, channels + carry_channels, channels, (1, 1), (0, 0))),
        }
    }

    pub fn bind(&self, b: &mut Binder<'_, T>) -> BoundIntegrator {
        BoundIntegrator {
            w_b: self.w_b.bind(b),
            w_f: self.w_f.bind(b),
            w_a: self.w_a.bind(b),
            fuse: self.fuse.as_ref().map(|f| f.bind(b)),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &ArrayD<T>)) {
        self.w_b.visit(&format!("{prefix}.w_b"), f);
        self.w_f.visit(&format!("{prefix}.w_f"), f);
        self.w_a.visit(&format!("{prefix}.w_a"), f);
        if let Some(fu) = &self.fuse {
            fu.visit(&format!("{prefix}.fuse"), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut ArrayD<T>)) {
        self.w_b.visit_mut(&format!("{prefix}.w_b"), f);
        self.w_f.visit_mut(&format!("{prefix}.w_f"), f);
        self.w_a.visit_mut(&format!("{prefix}.w_a"), f);
        if let Some(fu) = &mut self.fuse {
            fu.visit_mut(&format!("{prefix}.fuse"), f);
        }
    }
}

/// One gated update of the hidden appearance map.
///
/// `e_a_prev` and `e_m_t` are `[N, H, W, C]` with matching shapes; the result
/// has the same shape and serves as the next hidden state.
pub fn integrate_step<T: Scalar>(
    g: &Graph<T>,
    k: &BoundIntegrator,
    e_a_prev: Var,
    e_m_t: Var,
) -> Var {
    assert_eq!(
        g.shape(e_a_prev),
        g.shape(e_m_t),
        "appearance/motion maps must agree per level"
    );
    let cat_am = g.concat(&[e_a_prev, e_m_t], 3);
    let b = g.sigmoid(k.w_b.forward(g, cat_am));
    let f = g.sigmoid(k.w_f.forward(g, cat_am));
    let gated_appearance = g.mul(f, e_a_prev);
    let cat_mf = g.concat(&[e_m_t, gated_appearance], 3);
    let content = g.tanh(k.w_a.forward(g, cat_mf));
    let keep = g.mul(b, e_a_prev);
    let one_minus_b = g.scalar_add(g.neg(b), T::one());
    g.add(keep, g.mul(one_minus_b, content))
}

/// Unroll [`integrate_step`] over a motion clip `[N, T, H, W, C]`, starting
/// from the appearance map `e_a` `[N, H, W, C]`. `carry` optionally holds
/// decoded features from the previous level (same T, same spatial extent),
/// fused into the motion input per timestep.
pub fn integrate_sequence<T: Scalar>(
    g: &Graph<T>,
    k: &BoundIntegrator,
    e_a: Var,
    e_m: Var,
    carry: Option<Var>,
) -> Var {
    let t_len = g.shape(e_m)[1];
    assert!(t_len >= 1, "integrate_sequence needs at least one timestep");
    if carry.is_some() {
        assert!(k.fuse.is_some(), "carry features supplied but level has no fusion kernel");
    }
    let mut hidden = e_a;
    let mut steps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut m_t = g.index_time(e_m, t);
        if let (Some(c), Some(fu)) = (carry, &k.fuse) {
            let c_t = g.index_time(c, t);
            m_t = fu.forward(g, g.concat(&[m_t, c_t], 3));
        }
        hidden = integrate_step(g, k, hidden, m_t);
        steps.push(hidden);
    }
    g.stack_time(&steps)
}
