//! Training objectives: reconstruction and motion-matching MSE, Wasserstein
//! critics with gradient penalty, the frame-remix adversarial variant, the
//! perceptual term, and their weighted sum.
//!
//! Every function is pure in its inputs plus an explicit rng handle; random
//! draws (interpolation coefficients, remix masks) are sampled up front so
//! the same values can be replayed across the critic and generator sides.

use larnet_tensor::{Graph, Scalar, Var};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;

use crate::networks::classifier::BoundFrameClassifier;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: Vec<usize>, b: Vec<usize> },
    #[error("loss weights must be non-negative, got {0}")]
    NegativeWeight(f64),
    #[error("mix probability must lie in [0,1], got {0}")]
    BadMixProb(f64),
}

/// Weights of the five objective components plus the gradient-penalty
/// coefficient.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    /// Motion-feature regression.
    pub motion_mse: f64,
    /// Motion critic (Wasserstein).
    pub motion_adv: f64,
    /// Video reconstruction.
    pub video_mse: f64,
    /// Video critic (plain or remixed, per config).
    pub video_adv: f64,
    /// Perceptual feature distance.
    pub perceptual: f64,
    pub gp_coefficient: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            motion_mse: 1.0,
            motion_adv: 0.1,
            video_mse: 10.0,
            video_adv: 0.1,
            perceptual: 1.0,
            gp_coefficient: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        for w in [
            self.motion_mse,
            self.motion_adv,
            self.video_mse,
            self.video_adv,
            self.perceptual,
            self.gp_coefficient,
        ] {
            if w < 0.0 || !w.is_finite() {
                return Err(LossError::NegativeWeight(w));
            }
        }
        Ok(())
    }
}

/// Mean squared difference of two same-shape tensors.
pub fn mse_loss<T: Scalar>(g: &Graph<T>, a: Var, b: Var) -> Result<Var, LossError> {
    let (sa, sb) = (g.shape(a), g.shape(b));
    if sa != sb {
        return Err(LossError::ShapeMismatch { a: sa, b: sb });
    }
    let d = g.sub(a, b);
    Ok(g.mean_all(g.square(d)))
}

/// Interpolates `eps*real + (1-eps)*fake` per sample and penalizes the
/// critic's input-gradient norm away from one:
/// `mean_i (||grad_x critic(x_i)||_2 - 1)^2`.
///
/// `eps` holds one coefficient per batch element. The critic closure must
/// score a `[N, ...]` batch as `[N, 1]`.
pub fn gradient_penalty<T: Scalar>(
    g: &Graph<T>,
    critic: impl Fn(&Graph<T>, Var) -> Var,
    real: &ArrayD<T>,
    fake: &ArrayD<T>,
    eps: &[T],
) -> Result<Var, LossError> {
    if real.shape() != fake.shape() {
        return Err(LossError::ShapeMismatch { a: real.shape().to_vec(), b: fake.shape().to_vec() });
    }
    let n = real.shape()[0];
    assert_eq!(eps.len(), n, "one interpolation coefficient per sample");

    let mut interp = real.clone();
    for (i, mut row) in interp.outer_iter_mut().enumerate() {
        let e = eps[i];
        row.zip_mut_with(&fake.index_axis(ndarray::Axis(0), i), |r, f| {
            *r = e * *r + (T::one() - e) * *f;
        });
    }
    // Differentiable input point; the critic's parameter gradients flow
    // through the gradient computation below (second-order).
    let x_hat = g.leaf(interp);
    let scores = critic(g, x_hat);
    let total = g.sum_all(scores);
    let gx = g.grad(total, &[x_hat])[0];
    let norms = g.sqrt(g.sum_keeping(g.square(gx), 0));
    Ok(g.mean_all(g.square(g.scalar_add(norms, -T::one()))))
}

/// Critic-side Wasserstein loss: `E[critic(fake)] - E[critic(real)] +
/// lambda * gradient_penalty`. `real`/`fake` enter as constants (the critic
/// update does not differentiate them).
pub fn wgan_critic_loss<T: Scalar>(
    g: &Graph<T>,
    critic: impl Fn(&Graph<T>, Var) -> Var,
    real: &ArrayD<T>,
    fake: &ArrayD<T>,
    lambda: T,
    eps: &[T],
) -> Result<Var, LossError> {
    if real.shape() != fake.shape() {
        return Err(LossError::ShapeMismatch { a: real.shape().to_vec(), b: fake.shape().to_vec() });
    }
    let real_v = g.constant(real.clone());
    let fake_v = g.constant(fake.clone());
    let gap = g.sub(g.mean_all(critic(g, fake_v)), g.mean_all(critic(g, real_v)));
    let gp = gradient_penalty(g, &critic, real, fake, eps)?;
    Ok(g.add(gap, g.scalar_mul(gp, lambda)))
}

/// Generator-side Wasserstein loss: `-E[critic(fake)]` with gradients
/// flowing into `fake`.
pub fn wgan_generator_loss<T: Scalar>(
    g: &Graph<T>,
    critic: impl Fn(&Graph<T>, Var) -> Var,
    fake: Var,
) -> Var {
    g.neg(g.mean_all(critic(g, fake)))
}

/// Which source each timestep of a remixed clip takes the frame from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixMask {
    /// True: the real frame; false: the generated frame.
    pub take_real: Vec<bool>,
}

impl MixMask {
    pub fn sample(t: usize, mix_prob: f64, rng: &mut impl Rng) -> Result<Self, LossError> {
        if !(0.0..=1.0).contains(&mix_prob) {
            return Err(LossError::BadMixProb(mix_prob));
        }
        Ok(MixMask { take_real: (0..t).map(|_| rng.gen_bool(mix_prob)).collect() })
    }
}

/// Sample one mask per batch element.
pub fn sample_mix_masks(
    n: usize,
    t: usize,
    mix_prob: f64,
    rng: &mut impl Rng,
) -> Result<Vec<MixMask>, LossError> {
    (0..n).map(|_| MixMask::sample(t, mix_prob, rng)).collect()
}

/// Dense `[N, T, 1, 1, 1]` selector built from per-sample masks.
fn mask_tensor<T: Scalar>(masks: &[MixMask]) -> ArrayD<T> {
    let n = masks.len();
    let t = masks[0].take_real.len();
    let mut m = ArrayD::zeros(IxDyn(&[n, t, 1, 1, 1]));
    for (i, mk) in masks.iter().enumerate() {
        assert_eq!(mk.take_real.len(), t, "ragged mix masks");
        for (ti, &take) in mk.take_real.iter().enumerate() {
            m[[i, ti, 0, 0, 0]] = if take { T::one() } else { T::zero() };
        }
    }
    m
}

/// Interleave whole frames of two clips under the mask. Every output frame
/// equals exactly one input frame; gradients flow only where the generated
/// clip was taken.
pub fn remix_videos<T: Scalar>(
    g: &Graph<T>,
    v_gen: Var,
    v_real: Var,
    masks: &[MixMask],
) -> Result<Var, LossError> {
    let (sg, sr) = (g.shape(v_gen), g.shape(v_real));
    if sg != sr {
        return Err(LossError::ShapeMismatch { a: sg, b: sr });
    }
    let m = g.constant(mask_tensor::<T>(masks));
    let m = g.broadcast(m, &sg);
    let keep_real = g.mul(m, v_real);
    let inv = g.scalar_add(g.neg(m), T::one());
    Ok(g.add(keep_real, g.mul(inv, v_gen)))
}

/// Critic-side remixed adversarial loss: the fake sample is the frame
/// interleave of generated and real clips; the penalty interpolates between
/// real and the mix.
pub fn mix_critic_loss<T: Scalar>(
    g: &Graph<T>,
    critic: impl Fn(&Graph<T>, Var) -> Var,
    v_gen: &ArrayD<T>,
    v_real: &ArrayD<T>,
    masks: &[MixMask],
    lambda: T,
    eps: &[T],
) -> Result<Var, LossError> {
    let gen_v = g.constant(v_gen.clone());
    let real_v = g.constant(v_real.clone());
    let mixed = remix_videos(g, gen_v, real_v, masks)?;
    let mixed_val = g.value(mixed).to_owned();
    let gap = g.sub(g.mean_all(critic(g, mixed)), g.mean_all(critic(g, real_v)));
    let gp = gradient_penalty(g, &critic, v_real, &mixed_val, eps)?;
    Ok(g.add(gap, g.scalar_mul(gp, lambda)))
}

/// Generator-side remixed adversarial loss: `-E[critic(Mix(v_gen, v_real))]`
/// with gradients reaching only the generated frames.
pub fn mix_generator_loss<T: Scalar>(
    g: &Graph<T>,
    critic: impl Fn(&Graph<T>, Var) -> Var,
    v_gen: Var,
    v_real: Var,
    masks: &[MixMask],
) -> Result<Var, LossError> {
    let mixed = remix_videos(g, v_gen, v_real, masks)?;
    Ok(g.neg(g.mean_all(critic(g, mixed))))
}

/// Convenience wrapper producing both sides on one graph, as a single
/// operation (tests use this; the trainer calls the split variants).
pub fn mix_adversarial_losses<T: Scalar>(
    g: &Graph<T>,
    critic: impl Fn(&Graph<T>, Var) -> Var,
    v_gen: Var,
    v_real: Var,
    masks: &[MixMask],
    lambda: T,
    eps: &[T],
) -> Result<(Var, Var), LossError> {
    let gen_val = g.value(v_gen).to_owned();
    let real_val = g.value(v_real).to_owned();
    let critic_loss = mix_critic_loss(g, &critic, &gen_val, &real_val, masks, lambda, eps)?;
    let gen_loss = mix_generator_loss(g, &critic, v_gen, v_real, masks)?;
    Ok((critic_loss, gen_loss))
}

/// Mean squared distance between frame-classifier feature maps of two clips,
/// averaged over trunk stages. Clips are `[N,T,S,S,3]`.
pub fn perceptual_loss<T: Scalar>(
    g: &Graph<T>,
    feature_net: &BoundFrameClassifier,
    v: Var,
    v_ref: Var,
) -> Result<Var, LossError> {
    let (sa, sb) = (g.shape(v), g.shape(v_ref));
    if sa != sb {
        return Err(LossError::ShapeMismatch { a: sa, b: sb });
    }
    let flat = |x: Var| {
        let s = g.shape(x);
        g.reshape(x, &[s[0] * s[1], s[2], s[3], s[4]])
    };
    let maps_a = feature_net.feature_maps(g, flat(v));
    let maps_b = feature_net.feature_maps(g, flat(v_ref));
    let mut acc = None;
    let stages = maps_a.len();
    for (a, b) in maps_a.into_iter().zip(maps_b) {
        let term = mse_loss(g, a, b)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => g.add(prev, term),
        });
    }
    Ok(g.scalar_mul(acc.expect("classifier has stages"), T::one() / T::of(stages as f64)))
}

/// The five weighted components, in objective order.
#[derive(Debug, Clone, Copy)]
pub struct LossComponents {
    pub motion_mse: f64,
    pub motion_adv: f64,
    pub video_mse: f64,
    pub video_adv: f64,
    pub perceptual: f64,
}

impl LossComponents {
    pub const ZERO: LossComponents = LossComponents {
        motion_mse: 0.0,
        motion_adv: 0.0,
        video_mse: 0.0,
        video_adv: 0.0,
        perceptual: 0.0,
    };
}

/// Weighted sum of the component values.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64, LossError> {
    w.validate()?;
    Ok(w.motion_mse * c.motion_mse
        + w.motion_adv * c.motion_adv
        + w.video_mse * c.video_mse
        + w.video_adv * c.video_adv
        + w.perceptual * c.perceptual)
}

/// Linear anneal of the remix probability over training.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for MixSchedule {
    fn default() -> Self {
        MixSchedule { start: 0.5, end: 0.2 }
    }
}

impl MixSchedule {
    pub fn at(&self, step: usize, total_steps: usize) -> f64 {
        if total_steps <= 1 {
            return self.end;
        }
        let frac = (step as f64 / (total_steps - 1) as f64).clamp(0.0, 1.0);
        self.start + (self.end - self.start) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    fn arr(dims: &[usize], v: f64) -> ArrayD<f64> {
        ArrayD::from_elem(IxDyn(dims), v)
    }

    #[test]
    fn mse_constants() {
        let g = Graph::<f64>::new();
        let a = g.constant(arr(&[2, 3], 0.0));
        let b = g.constant(arr(&[2, 3], 0.5));
        assert_eq!(g.scalar_value(mse_loss(&g, a, a).unwrap()), 0.0);
        assert!((g.scalar_value(mse_loss(&g, a, b).unwrap()) - 0.25).abs() < 1e-12);
        let ab = g.scalar_value(mse_loss(&g, a, b).unwrap());
        let ba = g.scalar_value(mse_loss(&g, b, a).unwrap());
        assert_eq!(ab, ba);
    }

    #[test]
    fn mse_rejects_shape_mismatch() {
        let g = Graph::<f64>::new();
        let a = g.constant(arr(&[2, 3], 0.0));
        let b = g.constant(arr(&[3, 2], 0.0));
        assert!(matches!(mse_loss(&g, a, b), Err(LossError::ShapeMismatch { .. })));
    }

    /// Linear critic w.x: gradient is w everywhere, so the penalty depends
    /// only on ||w||.
    #[test]
    fn gradient_penalty_linear_critic() {
        let run = |wnorm: f64| {
            let g = Graph::<f64>::new();
            // w = (wnorm, 0, 0): ||w|| = wnorm
            let w = g.constant(ArrayD::from_shape_vec(IxDyn(&[3, 1]), vec![wnorm, 0.0, 0.0]).unwrap());
            let critic = move |g: &Graph<f64>, x: Var| g.matmul(x, w, false, false);
            let real = arr(&[4, 3], 0.3);
            let fake = arr(&[4, 3], -0.7);
            let eps = vec![0.1, 0.5, 0.9, 0.2];
            g.scalar_value(gradient_penalty(&g, critic, &real, &fake, &eps).unwrap())
        };
        assert!((run(2.0) - 1.0).abs() < 1e-9, "||w||=2 gives (2-1)^2 = 1");
        assert!(run(1.0).abs() < 1e-12, "unit-norm critic gradient");
        assert!(run(0.3) >= 0.0);
    }

    /// Constant critic: expectation gap 0, zero input gradient, penalty 1.
    #[test]
    fn wgan_losses_constant_critic() {
        let g = Graph::<f64>::new();
        let c_val = 1.75;
        let critic = move |g: &Graph<f64>, x: Var| {
            let n = g.shape(x)[0];
            let zero = g.scalar_mul(g.sum_keeping(x, 0), 0.0);
            let zero = g.reshape(zero, &[n, 1]);
            g.scalar_add(zero, c_val)
        };
        let real = arr(&[3, 4], 0.25);
        let fake = arr(&[3, 4], -0.5);
        let eps = vec![0.3, 0.6, 0.9];
        let lam = 10.0;
        let loss = wgan_critic_loss(&g, &critic, &real, &fake, lam, &eps).unwrap();
        assert!((g.scalar_value(loss) - lam).abs() < 1e-9, "loss = lambda * (0-1)^2");
        let fake_v = g.constant(fake);
        let gl = wgan_generator_loss(&g, &critic, fake_v);
        assert!((g.scalar_value(gl) + c_val).abs() < 1e-12);
    }

    #[test]
    fn remix_degenerate_probs() {
        let g = Graph::<f64>::new();
        let v_gen = g.constant(arr(&[1, 4, 2, 2, 3], -0.5));
        let v_real = g.constant(arr(&[1, 4, 2, 2, 3], 0.5));
        let all_false = vec![MixMask { take_real: vec![false; 4] }];
        let all_true = vec![MixMask { take_real: vec![true; 4] }];
        let m0 = remix_videos(&g, v_gen, v_real, &all_false).unwrap();
        assert_eq!(g.value(m0), g.value(v_gen));
        let m1 = remix_videos(&g, v_gen, v_real, &all_true).unwrap();
        assert_eq!(g.value(m1), g.value(v_real));
    }

    #[test]
    fn remix_alternating_mask_interleaves_exactly() {
        let g = Graph::<f64>::new();
        let mut gen = arr(&[1, 4, 1, 1, 1], 0.0);
        let mut real = arr(&[1, 4, 1, 1, 1], 0.0);
        for t in 0..4 {
            gen[[0, t, 0, 0, 0]] = t as f64;
            real[[0, t, 0, 0, 0]] = 10.0 + t as f64;
        }
        let v_gen = g.constant(gen);
        let v_real = g.constant(real);
        let masks = vec![MixMask { take_real: vec![false, true, false, true] }];
        let m = remix_videos(&g, v_gen, v_real, &masks).unwrap();
        let out = g.value(m);
        let got: Vec<f64> = out.iter().copied().collect();
        assert_eq!(got, vec![0.0, 11.0, 2.0, 13.0]);
    }

    #[test]
    fn total_loss_identities() {
        let w = LossWeights { motion_mse: 1.0, motion_adv: 0.0, video_mse: 0.0, video_adv: 0.0, perceptual: 0.0, gp_coefficient: 10.0 };
        let c = LossComponents { motion_mse: 0.3, ..LossComponents::ZERO };
        assert!((total_loss(&c, &w).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(total_loss(&LossComponents::ZERO, &LossWeights::default()).unwrap(), 0.0);

        // homogeneity: doubling every weight doubles the total
        let c = LossComponents { motion_mse: 0.1, motion_adv: 0.2, video_mse: 0.3, video_adv: 0.4, perceptual: 0.5 };
        let w1 = LossWeights::default();
        let w2 = LossWeights {
            motion_mse: 2.0 * w1.motion_mse,
            motion_adv: 2.0 * w1.motion_adv,
            video_mse: 2.0 * w1.video_mse,
            video_adv: 2.0 * w1.video_adv,
            perceptual: 2.0 * w1.perceptual,
            gp_coefficient: w1.gp_coefficient,
        };
        let t1 = total_loss(&c, &w1).unwrap();
        let t2 = total_loss(&c, &w2).unwrap();
        assert!((t2 - 2.0 * t1).abs() < 1e-12);
    }

    #[test]
    fn negative_weight_rejected() {
        let w = LossWeights { motion_mse: -0.1, ..LossWeights::default() };
        assert!(matches!(total_loss(&LossComponents::ZERO, &w), Err(LossError::NegativeWeight(_))));
    }

    #[test]
    fn mix_schedule_endpoints() {
        let s = MixSchedule { start: 0.5, end: 0.2 };
        assert_eq!(s.at(0, 100), 0.5);
        assert!((s.at(99, 100) - 0.2).abs() < 1e-12);
        let mid = s.at(50, 101);
        assert!((mid - 0.35).abs() < 1e-12);
    }
}
