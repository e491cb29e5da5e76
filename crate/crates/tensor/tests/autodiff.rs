use larnet_tensor::{gradcheck, Graph, Var};
use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randn(rng: &mut ChaCha8Rng, dims: &[usize]) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(dims), |_| {
        // Box-Muller keeps this dependency-light.
        let u1: f64 = rng.gen_range(1e-9..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

/// Generic check: builds `expr` over leaves of the given shapes, compares
/// autodiff gradients of sum(expr^2) against central differences.
fn check(shapes: &[&[usize]], expr: impl Fn(&Graph<f64>, &[Var]) -> Var, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inits: Vec<ArrayD<f64>> = shapes.iter().map(|s| randn(&mut rng, s)).collect();

    let eval = |params: &[ArrayD<f64>]| -> f64 {
        let g = Graph::<f64>::new();
        let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
        let out = expr(&g, &vars);
        let loss = g.mean_all(g.square(out));
        g.scalar_value(loss)
    };

    let g = Graph::<f64>::new();
    let vars: Vec<Var> = inits.iter().map(|p| g.leaf(p.clone())).collect();
    let out = expr(&g, &vars);
    let loss = g.mean_all(g.square(out));
    let grads = g.grad(loss, &vars);
    let analytic: Vec<ArrayD<f64>> = grads.iter().map(|gv| g.value(*gv).to_owned()).collect();

    let err = gradcheck::max_rel_error(eval, &inits, &analytic, 1e-5);
    assert!(err < 1e-6, "gradcheck failed: rel err {err:.3e}");
}

#[test]
fn elementwise_chain_grads() {
    check(&[&[3, 4], &[3, 4]], |g, v| {
        let s = g.add(v[0], v[1]);
        let m = g.mul(s, v[0]);
        let t = g.tanh(m);
        let sg = g.sigmoid(v[1]);
        g.sub(t, sg)
    }, 1);
}

#[test]
fn div_sqrt_exp_ln_grads() {
    check(&[&[5], &[5]], |g, v| {
        let a = g.scalar_add(g.square(v[0]), 1.5); // keep positive
        let b = g.scalar_add(g.square(v[1]), 2.0);
        let d = g.div(a, b);
        let r = g.sqrt(d);
        let e = g.exp(g.scalar_mul(r, 0.3));
        g.ln(e)
    }, 2);
}

#[test]
fn matmul_flag_grads() {
    for (ta, tb) in [(false, false), (false, true), (true, false), (true, true)] {
        let a_shape: &[usize] = if ta { &[4, 3] } else { &[3, 4] };
        let b_shape: &[usize] = if tb { &[5, 4] } else { &[4, 5] };
        check(&[a_shape, b_shape], move |g, v| g.matmul(v[0], v[1], ta, tb), 3);
    }
}

#[test]
fn reshape_permute_concat_slice_grads() {
    check(&[&[2, 3, 4], &[2, 3, 4]], |g, v| {
        let p = g.permute(v[0], &[2, 0, 1]);
        let r = g.reshape(p, &[2, 3, 4]);
        let c = g.concat(&[r, v[1]], 2);
        g.slice(c, 2, 1, 5)
    }, 4);
}

#[test]
fn broadcast_and_reduce_grads() {
    check(&[&[1, 3, 1], &[2, 3, 4]], |g, v| {
        let b = g.broadcast(v[0], &[2, 3, 4]);
        let m = g.mul(b, v[1]);
        let s = g.sum_axis(m, 1);
        g.scalar_mul(s, 0.7)
    }, 5);
}

#[test]
fn conv2d_grads() {
    check(&[&[2, 5, 5, 3], &[3, 3, 3, 4], &[4]], |g, v| {
        g.conv2d(v[0], v[1], Some(v[2]), (2, 2), (1, 1))
    }, 6);
}

#[test]
fn conv3d_and_upsample_grads() {
    check(&[&[1, 3, 4, 4, 2], &[2, 3, 3, 2, 3], &[3]], |g, v| {
        let y = g.conv3d(v[0], v[1], Some(v[2]), (1, 1, 1), (0, 1, 1));
        g.upsample3d(y, [1, 2, 2])
    }, 7);
}

#[test]
fn conv3d_transpose_grads() {
    check(&[&[1, 2, 3, 3, 2], &[4, 4, 4, 2, 2], &[2]], |g, v| {
        g.conv3d_transpose(v[0], v[1], Some(v[2]), (2, 2, 2), (1, 1, 1))
    }, 8);
}

#[test]
fn conv3d_transpose_doubles_extent() {
    let g = Graph::<f64>::new();
    let x = g.leaf(ArrayD::zeros(IxDyn(&[1, 4, 3, 3, 2])));
    let w = g.leaf(ArrayD::zeros(IxDyn(&[4, 4, 4, 2, 5])));
    let y = g.conv3d_transpose(x, w, None, (2, 2, 2), (1, 1, 1));
    assert_eq!(g.shape(y), vec![1, 8, 6, 6, 5]);
}

#[test]
fn leaky_relu_grad_matches_slope() {
    let g = Graph::<f64>::new();
    let x = g.leaf(ArrayD::from_shape_vec(IxDyn(&[4]), vec![-2.0, -0.5, 0.5, 2.0]).unwrap());
    let y = g.leaky_relu(x, 0.1);
    let s = g.sum_all(y);
    let gx = g.grad(s, &[x])[0];
    let got = g.value(gx);
    assert_eq!(got.as_slice().unwrap(), &[0.1, 0.1, 1.0, 1.0]);
}

#[test]
fn disconnected_input_gets_zero_grad() {
    let g = Graph::<f64>::new();
    let a = g.leaf(ArrayD::ones(IxDyn(&[2])));
    let b = g.leaf(ArrayD::ones(IxDyn(&[2])));
    let loss = g.sum_all(g.square(a));
    let gb = g.grad(loss, &[b])[1 - 1];
    let _ = gb;
    let gs = g.grad(loss, &[a, b]);
    assert_eq!(g.value(gs[1]).as_slice().unwrap(), &[0.0, 0.0]);
}

#[test]
fn detach_blocks_gradient() {
    let g = Graph::<f64>::new();
    let a = g.leaf(ArrayD::from_elem(IxDyn(&[3]), 2.0));
    let d = g.detach(g.square(a));
    let loss = g.sum_all(g.mul(d, a));
    let ga = g.grad(loss, &[a])[0];
    // d treated as constant 4 => dloss/da = 4
    assert_eq!(g.value(ga).as_slice().unwrap(), &[4.0, 4.0, 4.0]);
}

/// Second-order check in the shape of a gradient-norm penalty: the parameter
/// gradient of (||∇_x D(x)||_2 - 1)^2 must match finite differences.
#[test]
fn double_backprop_gradient_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x0 = randn(&mut rng, &[2, 6]);
    let w0 = randn(&mut rng, &[6, 4]);
    let b0 = randn(&mut rng, &[4]);
    let w1 = randn(&mut rng, &[4, 1]);

    let penalty = |params: &[ArrayD<f64>]| -> (Graph<f64>, Vec<Var>, Var) {
        let g = Graph::<f64>::new();
        let w0 = g.leaf(params[0].clone());
        let b0 = g.leaf(params[1].clone());
        let w1 = g.leaf(params[2].clone());
        let x = g.leaf(x0.clone());
        // small critic: tanh MLP -> scalar per row
        let h = g.tanh(g.linear(x, w0, Some(b0)));
        let score = g.matmul(h, w1, false, false);
        let total = g.sum_all(score);
        let gx = g.grad(total, &[x])[0];
        let sq = g.square(gx);
        let norms = g.sqrt(g.sum_keeping(sq, 0));
        let pen = g.mean_all(g.square(g.scalar_add(norms, -1.0)));
        (g, vec![w0, b0, w1], pen)
    };

    let inits = vec![w0, b0, w1];
    let (g, vars, pen) = penalty(&inits);
    let grads = g.grad(pen, &vars);
    let analytic: Vec<ArrayD<f64>> = grads.iter().map(|v| g.value(*v).to_owned()).collect();

    let eval = |params: &[ArrayD<f64>]| -> f64 {
        let (g, _, pen) = penalty(params);
        g.scalar_value(pen)
    };
    let err = gradcheck::max_rel_error(eval, &inits, &analytic, 1e-5);
    assert!(err < 1e-6, "double backprop mismatch: rel err {err:.3e}");
}

/// The parallel toggle must not change results at all.
#[test]
fn parallel_and_sequential_paths_agree_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = randn(&mut rng, &[3, 9, 9, 4]);
    let w = randn(&mut rng, &[3, 3, 4, 8]);
    let run = || {
        let g = Graph::<f64>::new();
        let xv = g.leaf(x.clone());
        let wv = g.leaf(w.clone());
        let y = g.conv2d(xv, wv, None, (1, 1), (1, 1));
        let loss = g.mean_all(g.square(y));
        let gw = g.grad(loss, &[wv])[0];
        (g.value(y).to_owned(), g.value(gw).to_owned())
    };
    larnet_tensor::parallel::set_enabled(true);
    let (y_par, g_par) = run();
    larnet_tensor::parallel::set_enabled(false);
    let (y_seq, g_seq) = run();
    larnet_tensor::parallel::set_enabled(true);
    assert_eq!(y_par, y_seq);
    assert_eq!(g_par, g_seq);
}
