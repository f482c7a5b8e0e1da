use alanet::gradcheck::grad_check;
use alanet::{BinaryOp, Error, Graph, PoolMode, Tensor, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape, data.to_vec()).unwrap()
}

fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(shape, -1.0, 1.0, &mut rng).unwrap()
}

fn eval1(x: Tensor, f: impl Fn(&mut Graph, Var) -> alanet::Result<Var>) -> Tensor {
    let mut g = Graph::new();
    let v = g.constant(x);
    let out = f(&mut g, v).unwrap();
    g.value(out).clone()
}

// ---- matmul ---------------------------------------------------------------

#[test]
fn matmul_examples() {
    let mut g = Graph::new();
    let i2 = g.constant(t(&[2, 2], &[1., 0., 0., 1.]));
    let out = g.matmul(i2, i2).unwrap();
    assert_eq!(g.value(out).data(), &[1., 0., 0., 1.]);

    let a = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
    let b = g.constant(t(&[2, 1], &[0., 1.]));
    let out = g.matmul(a, b).unwrap();
    assert_eq!(g.value(out).shape(), &[2, 1]);
    assert_eq!(g.value(out).data(), &[2., 4.]);

    let row = g.constant(Tensor::full([1, 4], 1.0).unwrap());
    let col = g.constant(Tensor::full([4, 1], 1.0).unwrap());
    let out = g.matmul(row, col).unwrap();
    assert_eq!(g.value(out).data(), &[4.]);
}

#[test]
fn matmul_shape_mismatch_is_dimension_error() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros([2, 3]).unwrap());
    let b = g.constant(Tensor::zeros([2, 3]).unwrap());
    assert!(matches!(g.matmul(a, b), Err(Error::Dimension(_))));
}

// ---- conv2d ---------------------------------------------------------------

/// Direct sliding window: for each output pixel, sum over (c, ky, kx).
fn naive_conv(x: &Tensor, k: &Tensor, stride: usize) -> Tensor {
    let (ci, h, w) = x.chw().unwrap();
    let (co, kk) = (k.shape()[0], k.shape()[2]);
    let pad = kk / 2;
    let (oh, ow) = ((h + 2 * pad - kk) / stride + 1, (w + 2 * pad - kk) / stride + 1);
    let mut out = vec![0.0; co * oh * ow];
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for c in 0..ci {
                    for ky in 0..kk {
                        for kx in 0..kk {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            s += k.at(&[o, c, ky, kx]) * x.at(&[c, iy as usize, ix as usize]);
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = s;
            }
        }
    }
    Tensor::new([co, oh, ow], out).unwrap()
}

fn conv(x: &Tensor, k: &Tensor, stride: usize) -> alanet::Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let kv = g.constant(k.clone());
    let out = g.conv2d(xv, kv, stride)?;
    Ok(g.value(out).clone())
}

#[test]
fn conv_identity_kernel_is_identity() {
    let x = rand_t(&[1, 5, 6], 1);
    let out = conv(&x, &t(&[1, 1, 1, 1], &[1.0]), 1).unwrap();
    assert!(out.bit_eq(&x));
}

#[test]
fn conv_all_ones_on_constant_interior_is_nine() {
    let x = Tensor::full([1, 5, 5], 1.0).unwrap();
    let out = conv(&x, &Tensor::full([1, 1, 3, 3], 1.0).unwrap(), 1).unwrap();
    assert_eq!(out.at(&[0, 2, 2]), 9.0);
    assert_eq!(out.at(&[0, 0, 0]), 4.0);
    assert_eq!(out.shape(), &[1, 5, 5]);
}

#[test]
fn conv_matches_sliding_window_bit_exactly() {
    let x = rand_t(&[1, 4, 4], 2);
    let k = rand_t(&[1, 1, 3, 3], 3);
    assert!(conv(&x, &k, 1).unwrap().bit_eq(&naive_conv(&x, &k, 1)));
    let x = rand_t(&[3, 7, 6], 4);
    let k = rand_t(&[2, 3, 5, 5], 5);
    assert!(conv(&x, &k, 1).unwrap().bit_eq(&naive_conv(&x, &k, 1)));
    let x = rand_t(&[2, 8, 8], 6);
    let k = rand_t(&[3, 2, 3, 3], 7);
    let out = conv(&x, &k, 2).unwrap();
    assert_eq!(out.shape(), &[3, 4, 4]);
    assert!(out.bit_eq(&naive_conv(&x, &k, 2)));
    // kernel wider than the image
    let x = rand_t(&[1, 2, 2], 8);
    let k = rand_t(&[1, 1, 7, 7], 9);
    assert!(conv(&x, &k, 1).unwrap().bit_eq(&naive_conv(&x, &k, 1)));
}

#[test]
fn conv_rejects_even_kernels() {
    let x = rand_t(&[1, 4, 4], 2);
    let k = rand_t(&[1, 1, 2, 2], 3);
    assert!(matches!(conv(&x, &k, 1), Err(Error::UnsupportedKernel(2))));
}

// ---- softmax / sigmoid ----------------------------------------------------

#[test]
fn softmax_examples() {
    let s = eval1(t(&[2], &[0., 0.]), |g, v| g.softmax(v, 0));
    assert_eq!(s.data(), &[0.5, 0.5]);
    let s = eval1(t(&[2], &[1000., 1000.]), |g, v| g.softmax(v, 0));
    assert_eq!(s.data(), &[0.5, 0.5]);
    let s = eval1(t(&[2], &[0., 3f64.ln()]), |g, v| g.softmax(v, 0));
    assert!((s.data()[0] - 0.25).abs() < 1e-15);
    assert!((s.data()[1] - 0.75).abs() < 1e-15);
}

#[test]
fn softmax_rejects_bad_axis() {
    let mut g = Graph::new();
    let v = g.constant(Tensor::zeros([2, 2]).unwrap());
    assert!(g.softmax(v, 2).is_err());
}

#[test]
fn sigmoid_examples() {
    let s = eval1(t(&[3], &[0., 100., -100.]), |g, v| g.sigmoid(v));
    assert_eq!(s.data()[0], 0.5);
    assert!((s.data()[1] - 1.0).abs() < 1e-12);
    assert!(s.data()[2] > 0.0);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-1e3f64..1e3, 12), axis in 0usize..2) {
        let s = eval1(Tensor::new([3, 4], vals).unwrap(), |g, v| g.softmax(v, axis));
        if axis == 1 {
            for row in s.data().chunks(4) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        } else {
            for j in 0..4 {
                let col: f64 = (0..3).map(|i| s.at(&[i, j])).sum();
                prop_assert!((col - 1.0).abs() < 1e-9);
            }
        }
        prop_assert!(s.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn sigmoid_symmetry(x in -50f64..50.0) {
        let s = eval1(t(&[2], &[x, -x]), |g, v| g.sigmoid(v));
        prop_assert!((s.data()[0] + s.data()[1] - 1.0).abs() < 1e-15);
        prop_assert!(s.data()[0] > 0.0 && s.data()[0] < 1.0 || x.abs() > 36.0);
    }

    #[test]
    fn ops_are_deterministic(seed in 0u64..1000) {
        let x = rand_t(&[2, 4, 4], seed);
        let k = rand_t(&[3, 2, 3, 3], seed + 1);
        let run = || {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let kv = g.constant(k.clone());
            let c = g.conv2d(xv, kv, 1).unwrap();
            let s = g.sigmoid(c).unwrap();
            let p = g.pool(s, PoolMode::SpatialAverage).unwrap();
            let sm = g.softmax(p, 1).unwrap();
            g.value(sm).clone()
        };
        prop_assert!(run().bit_eq(&run()));
    }
}

// ---- pooling --------------------------------------------------------------

#[test]
fn pool_examples() {
    let c = Tensor::full([3, 2, 2], 0.7).unwrap();
    for mode in [PoolMode::SpatialAverage, PoolMode::ChannelAverage, PoolMode::SpatialMax] {
        let p = eval1(c.clone(), |g, v| g.pool(v, mode));
        assert!(p.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }
    let p = eval1(t(&[2, 1, 1], &[2., 4.]), |g, v| g.pool(v, PoolMode::ChannelAverage));
    assert_eq!(p.shape(), &[1, 1]);
    assert_eq!(p.data(), &[3.]);

    let x = rand_t(&[3, 4, 4], 11);
    let p = eval1(x.clone(), |g, v| g.pool(v, PoolMode::SpatialAverage));
    assert_eq!(p.shape(), &[1, 3]);
    for ch in 0..3 {
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                s += x.at(&[ch, i, j]);
            }
        }
        assert!((p.data()[ch] - s / 16.0).abs() < 1e-12);
    }
    let p = eval1(x.clone(), |g, v| g.pool(v, PoolMode::ChannelAverage));
    assert_eq!(p.shape(), &[16, 1]);
    let p = eval1(x.clone(), |g, v| g.pool(v, PoolMode::SpatialMax));
    let m = x.data()[..16].iter().copied().fold(f64::MIN, f64::max);
    assert_eq!(p.data()[0], m);
}

#[test]
fn pool_requires_image_layout() {
    let mut g = Graph::new();
    let v = g.constant(Tensor::zeros([4]).unwrap());
    assert!(matches!(g.pool(v, PoolMode::SpatialAverage), Err(Error::Dimension(_))));
}

// ---- linear / elementwise -------------------------------------------------

#[test]
fn linear_examples() {
    let mut g = Graph::new();
    let x = g.constant(t(&[1, 2], &[0.3, -1.7]));
    let eye = g.constant(t(&[2, 2], &[1., 0., 0., 1.]));
    let zero_b = g.constant(Tensor::zeros([2]).unwrap());
    let out = g.linear(x, eye, zero_b).unwrap();
    assert_eq!(g.value(out).data(), &[0.3, -1.7]);

    let ones = g.constant(t(&[1, 2], &[1., 1.]));
    let w = g.constant(t(&[2, 1], &[1., 1.]));
    let b = g.constant(t(&[1], &[1.]));
    let out = g.linear(ones, w, b).unwrap();
    assert_eq!(g.value(out).data(), &[3.]);

    let zw = g.constant(Tensor::zeros([2, 3]).unwrap());
    let bias = g.constant(t(&[3], &[0.5, -0.5, 2.0]));
    let out = g.linear(x, zw, bias).unwrap();
    assert_eq!(g.value(out).data(), &[0.5, -0.5, 2.0]);

    let bad = g.constant(Tensor::zeros([3, 1]).unwrap());
    assert!(matches!(g.linear(x, bad, b), Err(Error::Dimension(_))));
}

#[test]
fn elementwise_examples() {
    let x = rand_t(&[2, 3, 3], 12);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let zero = g.constant(Tensor::zeros([2, 3, 3]).unwrap());
    let s = g.add(xv, zero).unwrap();
    assert!(g.value(s).bit_eq(&x));

    // σ⊙x + (1−σ)⊙x == x
    let sigma = g.constant(rand_t(&[2, 3, 3], 13).map(|v| (v + 1.0) / 2.0));
    let comp = g.complement(sigma).unwrap();
    let a = g.mul(sigma, xv).unwrap();
    let b = g.mul(comp, xv).unwrap();
    let c = g.add(a, b).unwrap();
    assert!(g.value(c).max_abs_diff(&x).unwrap() < 1e-15);
}

#[test]
fn channel_broadcast_matches_explicit_tiling() {
    let x = rand_t(&[2, 2, 2], 14);
    let gate = t(&[1, 2], &[0.25, -3.0]);
    let mut tiled = vec![0.0; 8];
    for c in 0..2 {
        for j in 0..4 {
            tiled[c * 4 + j] = gate.data()[c];
        }
    }
    let tiled = Tensor::new([2, 2, 2], tiled).unwrap();
    for op in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul] {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let gv = g.constant(gate.clone());
        let tv = g.constant(tiled.clone());
        let a = g.elementwise(xv, gv, op).unwrap();
        let b = g.elementwise(xv, tv, op).unwrap();
        assert!(g.value(a).bit_eq(g.value(b)));
    }
    let mut g = Graph::new();
    let xv = g.constant(x);
    let bad = g.constant(Tensor::zeros([1, 3]).unwrap());
    assert!(matches!(g.mul(xv, bad), Err(Error::Dimension(_))));
}

#[test]
fn non_finite_results_are_errors() {
    let mut g = Graph::new();
    let x = g.constant(t(&[1], &[1e300]));
    assert!(matches!(g.square(x), Err(Error::NonFinite("square"))));
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros([2]).unwrap());
    assert!(g.backward(x).is_err());
}

// ---- gradient checks -----------------------------------------------------

fn check(name: &str, f: impl Fn(&mut Graph, &[Var]) -> alanet::Result<Var>, inputs: &[Tensor]) {
    let r = grad_check(name, f, inputs, 1e-5, 1e-4).unwrap();
    assert!(r.passed, "{r}");
}

/// Weighted sum so that every output element gets a distinct cotangent.
fn wsum(g: &mut Graph, v: Var, seed: u64) -> alanet::Result<Var> {
    let w = rand_t(g.shape(v), seed);
    let wv = g.constant(w);
    let p = g.mul(v, wv)?;
    g.sum(p)
}

#[test]
fn gradients_of_every_op() {
    check(
        "matmul",
        |g, v| {
            let m = g.matmul(v[0], v[1])?;
            wsum(g, m, 1)
        },
        &[rand_t(&[3, 4], 1), rand_t(&[4, 2], 2)],
    );
    check(
        "transpose",
        |g, v| {
            let m = g.transpose(v[0])?;
            wsum(g, m, 1)
        },
        &[rand_t(&[3, 4], 1)],
    );
    check(
        "reshape",
        |g, v| {
            let m = g.reshape(v[0], &[2, 6])?;
            wsum(g, m, 1)
        },
        &[rand_t(&[3, 4], 1)],
    );
    check(
        "conv2d",
        |g, v| {
            let m = g.conv2d(v[0], v[1], 1)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 5, 5], 3), rand_t(&[3, 2, 3, 3], 4)],
    );
    check(
        "conv2d_stride2",
        |g, v| {
            let m = g.conv2d(v[0], v[1], 2)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 6, 6], 5), rand_t(&[2, 2, 3, 3], 6)],
    );
    check(
        "conv2d_k5",
        |g, v| {
            let m = g.conv2d(v[0], v[1], 1)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[1, 4, 4], 7), rand_t(&[2, 1, 5, 5], 8)],
    );
    check(
        "softmax_last",
        |g, v| {
            let m = g.softmax(v[0], 1)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[3, 4], 9)],
    );
    check(
        "softmax_first",
        |g, v| {
            let m = g.softmax(v[0], 0)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[3, 4], 10)],
    );
    check(
        "sigmoid",
        |g, v| {
            let m = g.sigmoid(v[0])?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 3], 11)],
    );
    check(
        "silu",
        |g, v| {
            let m = g.silu(v[0])?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 3], 12)],
    );
    check(
        "abs",
        |g, v| {
            let m = g.abs(v[0])?;
            wsum(g, m, 1)
        },
        &[t(&[3], &[0.5, -0.25, 0.9])],
    );
    check(
        "square",
        |g, v| {
            let m = g.square(v[0])?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 3], 13)],
    );
    check(
        "scale",
        |g, v| {
            let m = g.scale(v[0], -2.5)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 3], 14)],
    );
    check(
        "complement",
        |g, v| {
            let m = g.complement(v[0])?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 3], 15)],
    );
    for op in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul] {
        check(
            "elementwise",
            |g, v| {
                let m = g.elementwise(v[0], v[1], op)?;
                wsum(g, m, 1)
            },
            &[rand_t(&[2, 3, 3], 16), rand_t(&[2, 3, 3], 17)],
        );
        check(
            "elementwise_channel",
            |g, v| {
                let m = g.elementwise(v[0], v[1], op)?;
                wsum(g, m, 1)
            },
            &[rand_t(&[2, 3, 3], 18), rand_t(&[1, 2], 19)],
        );
        check(
            "elementwise_scalar",
            |g, v| {
                let m = g.elementwise(v[0], v[1], op)?;
                wsum(g, m, 1)
            },
            &[rand_t(&[2, 3], 20), rand_t(&[1], 21)],
        );
    }
    for mode in [PoolMode::SpatialAverage, PoolMode::ChannelAverage, PoolMode::SpatialMax] {
        check(
            "pool",
            |g, v| {
                let m = g.pool(v[0], mode)?;
                wsum(g, m, 1)
            },
            &[rand_t(&[3, 3, 4], 22)],
        );
    }
    check(
        "linear",
        |g, v| {
            let m = g.linear(v[0], v[1], v[2])?;
            wsum(g, m, 1)
        },
        &[rand_t(&[3, 4], 23), rand_t(&[4, 2], 24), rand_t(&[2], 25)],
    );
    check(
        "mean_axis0",
        |g, v| {
            let m = g.mean_axis(v[0], 0)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[3, 4], 26)],
    );
    check(
        "mean_axis1",
        |g, v| {
            let m = g.mean_axis(v[0], 1)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[3, 4], 27)],
    );
    check("mean", |g, v| g.mean(v[0]), &[rand_t(&[3, 4], 28)]);
    check(
        "concat0",
        |g, v| {
            let m = g.concat(&[v[0], v[1]], 0)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[1, 2, 2], 29), rand_t(&[2, 2, 2], 30)],
    );
    check(
        "concat1",
        |g, v| {
            let m = g.concat(&[v[0], v[1], v[0]], 1)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[1, 3], 31), rand_t(&[1, 2], 32)],
    );
    check(
        "slice",
        |g, v| {
            let m = g.slice(v[0], 0, 1, 2)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[4, 2, 2], 33)],
    );
    check(
        "upsample2x",
        |g, v| {
            let m = g.upsample2x(v[0])?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 2, 3], 34)],
    );
    check(
        "channel_norm",
        |g, v| {
            let m = g.channel_norm(v[0])?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 3, 3], 35)],
    );
    check(
        "forward_diff_rows",
        |g, v| {
            let m = g.forward_diff(v[0], 1)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 3, 4], 36)],
    );
    check(
        "forward_diff_cols",
        |g, v| {
            let m = g.forward_diff(v[0], 2)?;
            wsum(g, m, 1)
        },
        &[rand_t(&[2, 3, 4], 37)],
    );
}

#[test]
fn shared_inputs_accumulate() {
    // f(x) = sum(x ⊙ x) has gradient 2x
    let x = rand_t(&[5], 40);
    let mut g = Graph::new();
    let v = g.input(x.clone());
    let sq = g.mul(v, v).unwrap();
    let s = g.sum(sq).unwrap();
    g.backward(s).unwrap();
    for (d, xv) in g.grad(v).unwrap().iter().zip(x.data()) {
        assert!((d - 2.0 * xv).abs() < 1e-15);
    }
}

#[test]
fn constants_get_no_gradient() {
    let mut g = Graph::new();
    let c = g.constant(rand_t(&[3], 41));
    let x = g.input(rand_t(&[3], 42));
    let p = g.mul(c, x).unwrap();
    let s = g.sum(p).unwrap();
    g.backward(s).unwrap();
    assert!(g.grad(c).is_none());
    assert!(g.grad(x).is_some());
}
