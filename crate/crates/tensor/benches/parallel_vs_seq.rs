//! Rayon vs sequential comparison on the kernels that dominate training:
//! 2D/3D convolution forward+backward and a gated recurrent integration step.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use larnet_tensor::{parallel, Graph};
use ndarray::{ArrayD, IxDyn};

fn filled(dims: &[usize]) -> ArrayD<f32> {
    let n: usize = dims.iter().product();
    ArrayD::from_shape_vec(IxDyn(dims), (0..n).map(|i| ((i % 97) as f32) * 0.01 - 0.5).collect())
        .unwrap()
}

fn conv2d_fwd_bwd(x: &ArrayD<f32>, w: &ArrayD<f32>) -> f32 {
    let g = Graph::<f32>::new();
    let xv = g.constant(x.clone());
    let wv = g.leaf(w.clone());
    let y = g.conv2d(xv, wv, None, (1, 1), (1, 1));
    let loss = g.mean_all(g.square(y));
    let gw = g.grad(loss, &[wv])[0];
    g.value(gw).sum()
}

fn conv3d_fwd_bwd(x: &ArrayD<f32>, w: &ArrayD<f32>) -> f32 {
    let g = Graph::<f32>::new();
    let xv = g.constant(x.clone());
    let wv = g.leaf(w.clone());
    let y = g.conv3d(xv, wv, None, (1, 2, 2), (1, 1, 1));
    let loss = g.mean_all(g.square(y));
    let gw = g.grad(loss, &[wv])[0];
    g.value(gw).sum()
}

fn gated_step(ea: &ArrayD<f32>, em: &ArrayD<f32>, wb: &ArrayD<f32>, wa: &ArrayD<f32>) -> f32 {
    let g = Graph::<f32>::new();
    let ea = g.constant(ea.clone());
    let em = g.constant(em.clone());
    let wb = g.leaf(wb.clone());
    let wa = g.leaf(wa.clone());
    let cat = g.concat(&[ea, em], 3);
    let b = g.sigmoid(g.conv2d(cat, wb, None, (1, 1), (1, 1)));
    let content = g.tanh(g.conv2d(cat, wa, None, (1, 1), (1, 1)));
    let keep = g.mul(b, ea);
    let one_minus = g.scalar_add(g.neg(b), 1.0);
    let out = g.add(keep, g.mul(one_minus, content));
    let loss = g.mean_all(g.square(out));
    let gw = g.grad(loss, &[wa])[0];
    g.value(gw).sum()
}

fn bench_modes(c: &mut Criterion) {
    let x2 = filled(&[4, 28, 28, 32]);
    let w2 = filled(&[3, 3, 32, 32]);
    let x3 = filled(&[2, 16, 28, 28, 8]);
    let w3 = filled(&[3, 3, 3, 8, 16]);
    let ea = filled(&[4, 14, 14, 32]);
    let em = filled(&[4, 14, 14, 32]);
    let wb = filled(&[3, 3, 64, 32]);
    let wa = filled(&[3, 3, 64, 32]);

    let mut group = c.benchmark_group("fwd_bwd");
    for par in [true, false] {
        let mode = if par { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::new("conv2d", mode), &par, |bch, &p| {
            parallel::set_enabled(p);
            bch.iter(|| conv2d_fwd_bwd(&x2, &w2));
        });
        group.bench_with_input(BenchmarkId::new("conv3d", mode), &par, |bch, &p| {
            parallel::set_enabled(p);
            bch.iter(|| conv3d_fwd_bwd(&x3, &w3));
        });
        group.bench_with_input(BenchmarkId::new("gated_step", mode), &par, |bch, &p| {
            parallel::set_enabled(p);
            bch.iter(|| gated_step(&ea, &em, &wb, &wa));
        });
    }
    group.finish();
    parallel::set_enabled(true);
}

criterion_group!(benches, bench_modes);
criterion_main!(benches);
