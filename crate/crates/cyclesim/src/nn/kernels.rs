//! Shared numeric kernels: im2col convolution, nearest-neighbour upsampling.
//!
//! All tensors are NCHW `f64`. Convolutions are lowered to GEMM via im2col;
//! batches are distributed with [`crate::par`], and every output slot is
//! produced by an independent sequential dot product, which keeps results
//! bitwise reproducible under any thread schedule.

use ndarray::{Array1, Array2, Array4, ArrayView4, Axis};

use crate::par::{self, Parallelism};

/// Output spatial size of a convolution.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Unrolls one sample `[C, H, W]` into a `[C*kh*kw, Ho*Wo]` patch matrix.
fn im2col_sample(
    x: &ArrayView4<f64>,
    n: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array2<f64> {
    let (_, c, h, w) = x.dim();
    let ho = conv_out_size(h, kh, stride, pad);
    let wo = conv_out_size(w, kw, stride, pad);
    let mut col = Array2::<f64>::zeros((c * kh * kw, ho * wo));
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                for oi in 0..ho {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..wo {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        col[[row, oi * wo + oj]] = x[[n, ci, ii as usize, jj as usize]];
                    }
                }
            }
        }
    }
    col
}

/// Scatters a patch-matrix gradient back onto the input plane (accumulating).
fn col2im_sample(
    gcol: &Array2<f64>,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> ndarray::Array3<f64> {
    let ho = conv_out_size(h, kh, stride, pad);
    let wo = conv_out_size(w, kw, stride, pad);
    let mut gx = ndarray::Array3::<f64>::zeros((c, h, w));
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                for oi in 0..ho {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..wo {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        gx[[ci, ii as usize, jj as usize]] += gcol[[row, oi * wo + oj]];
                    }
                }
            }
        }
    }
    gx
}

/// 2-D convolution forward pass.
///
/// `x: [N, Cin, H, W]`, `w: [Cout, Cin, kh, kw]`, optional `b: [Cout]`.
pub fn conv2d_forward(
    x: &ArrayView4<f64>,
    w: &ArrayView4<f64>,
    b: Option<&Array1<f64>>,
    stride: usize,
    pad: usize,
    par: Parallelism,
) -> Array4<f64> {
    let (n, cin, h, wdim) = x.dim();
    let (cout, cin_w, kh, kw) = w.dim();
    assert_eq!(cin, cin_w, "conv2d: channel mismatch");
    let ho = conv_out_size(h, kh, stride, pad);
    let wo = conv_out_size(wdim, kw, stride, pad);
    let w2 = w
        .to_shape((cout, cin * kh * kw))
        .expect("conv weight reshape")
        .to_owned();

    let samples = par::map_indexed(par, n, |i| {
        let col = im2col_sample(x, i, kh, kw, stride, pad);
        let mut out = w2.dot(&col); // [Cout, Ho*Wo]
        if let Some(bias) = b {
            for (mut row, &bv) in out.rows_mut().into_iter().zip(bias.iter()) {
                row.mapv_inplace(|v| v + bv);
            }
        }
        out
    });

    let mut out = Array4::<f64>::zeros((n, cout, ho, wo));
    for (i, sample) in samples.into_iter().enumerate() {
        let reshaped = sample.into_shape_with_order((cout, ho, wo)).unwrap();
        out.index_axis_mut(Axis(0), i).assign(&reshaped);
    }
    out
}

/// Gradients of a 2-D convolution. Returns `(gx, gw, gb)`.
pub fn conv2d_backward(
    x: &ArrayView4<f64>,
    w: &ArrayView4<f64>,
    gout: &ArrayView4<f64>,
    stride: usize,
    pad: usize,
    par: Parallelism,
) -> (Array4<f64>, Array4<f64>, Array1<f64>) {
    let (n, cin, h, wdim) = x.dim();
    let (cout, _, kh, kw) = w.dim();
    let (_, _, ho, wo) = gout.dim();
    let w2 = w
        .to_shape((cout, cin * kh * kw))
        .expect("conv weight reshape")
        .to_owned();

    // Per-sample partials, reduced afterwards in index order so the result
    // does not depend on thread scheduling.
    let partials = par::map_indexed(par, n, |i| {
        let col = im2col_sample(x, i, kh, kw, stride, pad);
        let go2 = gout
            .index_axis(Axis(0), i)
            .to_shape((cout, ho * wo))
            .unwrap()
            .to_owned();
        let gw_i = go2.dot(&col.t()); // [Cout, Cin*kh*kw]
        let gcol = w2.t().dot(&go2); // [Cin*kh*kw, Ho*Wo]
        let gx_i = col2im_sample(&gcol, cin, h, wdim, kh, kw, stride, pad);
        let gb_i = go2.sum_axis(Axis(1)); // [Cout]
        (gx_i, gw_i, gb_i)
    });

    let mut gx = Array4::<f64>::zeros((n, cin, h, wdim));
    let mut gw2 = Array2::<f64>::zeros((cout, cin * kh * kw));
    let mut gb = Array1::<f64>::zeros(cout);
    for (i, (gx_i, gw_i, gb_i)) in partials.into_iter().enumerate() {
        gx.index_axis_mut(Axis(0), i).assign(&gx_i);
        gw2 += &gw_i;
        gb += &gb_i;
    }
    let gw = gw2.into_shape_with_order((cout, cin, kh, kw)).unwrap();
    (gx, gw, gb)
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample_nearest2_forward(x: &ArrayView4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let mut out = Array4::<f64>::zeros((n, c, h * 2, w * 2));
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let v = x[[ni, ci, i, j]];
                    out[[ni, ci, 2 * i, 2 * j]] = v;
                    out[[ni, ci, 2 * i + 1, 2 * j]] = v;
                    out[[ni, ci, 2 * i, 2 * j + 1]] = v;
                    out[[ni, ci, 2 * i + 1, 2 * j + 1]] = v;
                }
            }
        }
    }
    out
}

/// Gradient of nearest-neighbour 2x upsampling: 2x2 block sums.
pub fn upsample_nearest2_backward(gout: &ArrayView4<f64>) -> Array4<f64> {
    let (n, c, h2, w2) = gout.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gx = Array4::<f64>::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    gx[[ni, ci, i, j]] = gout[[ni, ci, 2 * i, 2 * j]]
                        + gout[[ni, ci, 2 * i + 1, 2 * j]]
                        + gout[[ni, ci, 2 * i, 2 * j + 1]]
                        + gout[[ni, ci, 2 * i + 1, 2 * j + 1]];
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array4, ArrayD};

    fn seq() -> Parallelism {
        Parallelism::Sequential
    }

    /// Direct 7-loop convolution used as an oracle for the im2col path.
    fn conv2d_naive(
        x: &Array4<f64>,
        w: &Array4<f64>,
        b: Option<&Array1<f64>>,
        stride: usize,
        pad: usize,
    ) -> Array4<f64> {
        let (n, cin, h, wdim) = x.dim();
        let (cout, _, kh, kw) = w.dim();
        let ho = conv_out_size(h, kh, stride, pad);
        let wo = conv_out_size(wdim, kw, stride, pad);
        let mut out = Array4::<f64>::zeros((n, cout, ho, wo));
        for ni in 0..n {
            for co in 0..cout {
                for oi in 0..ho {
                    for oj in 0..wo {
                        let mut acc = b.map_or(0.0, |bias| bias[co]);
                        for ci in 0..cin {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let ii = (oi * stride + ki) as isize - pad as isize;
                                    let jj = (oj * stride + kj) as isize - pad as isize;
                                    if ii >= 0
                                        && jj >= 0
                                        && (ii as usize) < h
                                        && (jj as usize) < wdim
                                    {
                                        acc += x[[ni, ci, ii as usize, jj as usize]]
                                            * w[[co, ci, ki, kj]];
                                    }
                                }
                            }
                        }
                        out[[ni, co, oi, oj]] = acc;
                    }
                }
            }
        }
        out
    }

    fn rand_array4(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_simple_fn(shape, || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn conv_matches_naive_oracle() {
        for &(stride, pad, k) in &[(1usize, 1usize, 3usize), (2, 1, 4), (1, 3, 7)] {
            let x = rand_array4((2, 3, 8, 8), 42 + stride as u64);
            let w = rand_array4((5, 3, k, k), 7 + k as u64);
            let b = Array1::from_shape_fn(5, |i| i as f64 * 0.1 - 0.2);
            let fast = conv2d_forward(&x.view(), &w.view(), Some(&b), stride, pad, seq());
            let slow = conv2d_naive(&x, &w, Some(&b), stride, pad);
            let diff = (&fast - &slow).mapv(f64::abs).sum();
            assert!(diff < 1e-10, "stride={stride} pad={pad} k={k} diff={diff}");
        }
    }

    #[test]
    fn conv_parallel_is_bitwise_equal() {
        let x = rand_array4((4, 3, 9, 9), 1);
        let w = rand_array4((6, 3, 3, 3), 2);
        let a = conv2d_forward(&x.view(), &w.view(), None, 2, 1, seq());
        let b = conv2d_forward(&x.view(), &w.view(), None, 2, 1, Parallelism::auto());
        assert_eq!(
            a.as_slice().unwrap(),
            b.as_slice().unwrap(),
            "parallel conv must be bitwise equal to sequential"
        );
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let x = rand_array4((1, 2, 5, 5), 3);
        let w = rand_array4((3, 2, 3, 3), 4);
        let b = Array1::from_shape_fn(3, |i| 0.05 * i as f64);
        // Scalar objective: sum of outputs.
        let loss = |x: &Array4<f64>, w: &Array4<f64>, b: &Array1<f64>| {
            conv2d_forward(&x.view(), &w.view(), Some(b), 2, 1, seq()).sum()
        };
        let out = conv2d_forward(&x.view(), &w.view(), Some(&b), 2, 1, seq());
        let gout = Array4::<f64>::ones(out.dim());
        let (gx, gw, gb) = conv2d_backward(&x.view(), &w.view(), &gout.view(), 2, 1, seq());

        let eps = 1e-6;
        let mut x2 = x.clone();
        for idx in [[0, 0, 0, 0], [0, 1, 2, 3], [0, 0, 4, 4]] {
            x2[idx] += eps;
            let up = loss(&x2, &w, &b);
            x2[idx] -= 2.0 * eps;
            let down = loss(&x2, &w, &b);
            x2[idx] += eps;
            let num = (up - down) / (2.0 * eps);
            assert!((num - gx[idx]).abs() < 1e-6, "gx mismatch at {idx:?}");
        }
        let mut w2 = w.clone();
        for idx in [[0, 0, 0, 0], [2, 1, 2, 2]] {
            w2[idx] += eps;
            let up = loss(&x, &w2, &b);
            w2[idx] -= 2.0 * eps;
            let down = loss(&x, &w2, &b);
            w2[idx] += eps;
            let num = (up - down) / (2.0 * eps);
            assert!((num - gw[idx]).abs() < 1e-6, "gw mismatch at {idx:?}");
        }
        let mut b2 = b.clone();
        b2[1] += eps;
        let up = loss(&x, &w, &b2);
        b2[1] -= 2.0 * eps;
        let down = loss(&x, &w, &b2);
        let num = (up - down) / (2.0 * eps);
        assert!((num - gb[1]).abs() < 1e-6, "gb mismatch");
    }

    #[test]
    fn upsample_round_trip_gradient() {
        let x = rand_array4((1, 2, 3, 3), 9);
        let up = upsample_nearest2_forward(&x.view());
        assert_eq!(up.dim(), (1, 2, 6, 6));
        assert_eq!(up[[0, 1, 4, 5]], x[[0, 1, 2, 2]]);
        let gout = Array4::<f64>::ones((1, 2, 6, 6));
        let gx = upsample_nearest2_backward(&gout.view());
        assert!(gx.iter().all(|&v| (v - 4.0).abs() < 1e-12));
        let _: ArrayD<f64> = gx.into_dyn();
    }
}
