//! Same-padded stride-1 convolutions and 2× max pooling.
//!
//! Activations are `[n, c, h, w]` (planar) or `[n, c, d, h, w]` (volumetric)
//! with the innermost axis contiguous, so the hot loops are long unit-stride
//! AXPY row updates. Kernels are `[c_out, c_in, k...]` with odd spatial
//! extents; "same" zero padding keeps spatial dims unchanged.
//!
//! Backward passes reuse the forward kernel routine: the input gradient is
//! the output gradient convolved with the spatially flipped,
//! in/out-swapped kernel, and the kernel gradient is a row-dot reduction
//! over the padded input.

use ndarray::{s, Array4, Array5, ArrayD, ArrayView4, ArrayView5};

use crate::real::Real;
use crate::tape::{Tape, Var};

/// Eight-lane unrolled dot product; fixed summation order, vectorizable.
#[inline]
fn dot8<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let off = c * 8;
        for l in 0..8 {
            lanes[l] = lanes[l] + a[off + l] * b[off + l];
        }
    }
    let mut s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for i in chunks * 8..a.len() {
        s = s + a[i] * b[i];
    }
    s
}

#[inline]
fn axpy<T: Real>(acc: &mut [T], w: T, x: &[T]) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, &xv) in acc.iter_mut().zip(x) {
        *a = *a + w * xv;
    }
}

// ---------------------------------------------------------------------------
// 3-D convolution
// ---------------------------------------------------------------------------

fn pad3<T: Real>(x: &ArrayView5<T>, pd: usize, ph: usize, pw: usize) -> Array5<T> {
    let (n, c, d, h, w) = x.dim();
    let mut xp = Array5::zeros((n, c, d + 2 * pd, h + 2 * ph, w + 2 * pw));
    xp.slice_mut(s![.., .., pd..pd + d, ph..ph + h, pw..pw + w])
        .assign(x);
    xp
}

/// Same-padded stride-1 3-D convolution of `x: [n, ci, d, h, w]` with
/// `k: [co, ci, kd, kh, kw]` (odd kernel dims).
pub fn conv3d_raw<T: Real>(x: &ArrayView5<T>, k: &ArrayView5<T>) -> Array5<T> {
    let (n, ci, d, h, w) = x.dim();
    let (co, ci2, kd, kh, kw) = k.dim();
    assert_eq!(ci, ci2, "conv3d channel mismatch");
    assert!(kd % 2 == 1 && kh % 2 == 1 && kw % 2 == 1, "odd kernels only");
    let (pd, ph, pw) = (kd / 2, kh / 2, kw / 2);
    let xp = pad3(x, pd, ph, pw);
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let dp = d + 2 * pd;
    let xs = xp.as_slice().unwrap();
    let ks = k.to_owned();
    let ks = ks.as_slice().unwrap();

    let mut y = Array5::zeros((n, co, d, h, w));
    let ys = y.as_slice_mut().unwrap();
    let mut acc = vec![T::zero(); w];
    for nn in 0..n {
        for co_ in 0..co {
            for od in 0..d {
                for oh in 0..h {
                    acc.fill(T::zero());
                    for ci_ in 0..ci {
                        for kd_ in 0..kd {
                            for kh_ in 0..kh {
                                let row =
                                    (((nn * ci + ci_) * dp + od + kd_) * hp + oh + kh_) * wp;
                                let kbase = (((co_ * ci + ci_) * kd + kd_) * kh + kh_) * kw;
                                for kw_ in 0..kw {
                                    axpy(&mut acc, ks[kbase + kw_], &xs[row + kw_..row + kw_ + w]);
                                }
                            }
                        }
                    }
                    let yoff = (((nn * co + co_) * d + od) * h + oh) * w;
                    ys[yoff..yoff + w].copy_from_slice(&acc);
                }
            }
        }
    }
    y
}

/// Kernel gradient for [`conv3d_raw`]: `dk[co,ci,kd,kh,kw] = Σ xp·dy`.
fn conv3d_grad_kernel<T: Real>(
    x: &ArrayView5<T>,
    dy: &ArrayView5<T>,
    kdims: (usize, usize, usize, usize, usize),
) -> Array5<T> {
    let (n, ci, d, h, w) = x.dim();
    let (co, _, kd, kh, kw) = kdims;
    let (pd, ph, pw) = (kd / 2, kh / 2, kw / 2);
    let xp = pad3(x, pd, ph, pw);
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let dp = d + 2 * pd;
    let xs = xp.as_slice().unwrap();
    let dyo = dy.to_owned();
    let dys = dyo.as_slice().unwrap();

    let mut dk = Array5::zeros(kdims);
    let dks = dk.as_slice_mut().unwrap();
    for nn in 0..n {
        for co_ in 0..co {
            for od in 0..d {
                for oh in 0..h {
                    let yoff = (((nn * co + co_) * d + od) * h + oh) * w;
                    let yrow = &dys[yoff..yoff + w];
                    for ci_ in 0..ci {
                        for kd_ in 0..kd {
                            for kh_ in 0..kh {
                                let row =
                                    (((nn * ci + ci_) * dp + od + kd_) * hp + oh + kh_) * wp;
                                let kbase = (((co_ * ci + ci_) * kd + kd_) * kh + kh_) * kw;
                                for kw_ in 0..kw {
                                    dks[kbase + kw_] = dks[kbase + kw_]
                                        + dot8(&xs[row + kw_..row + kw_ + w], yrow);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    dk
}

/// Spatially flip a kernel and swap its in/out channel axes.
fn flip_swap3<T: Real>(k: &ArrayView5<T>) -> Array5<T> {
    let (co, ci, kd, kh, kw) = k.dim();
    let mut out = Array5::zeros((ci, co, kd, kh, kw));
    for a in 0..co {
        for b in 0..ci {
            for i in 0..kd {
                for j in 0..kh {
                    for l in 0..kw {
                        out[[b, a, kd - 1 - i, kh - 1 - j, kw - 1 - l]] = k[[a, b, i, j, l]];
                    }
                }
            }
        }
    }
    out
}

/// Tape op: same-padded 3-D convolution.
pub fn conv3d<T: Real>(tape: &mut Tape<T>, x: Var, k: Var) -> Var {
    let xv = tape.val(x).view().into_dimensionality().unwrap();
    let kv = tape.val(k).view().into_dimensionality().unwrap();
    let y = conv3d_raw(&xv, &kv).into_dyn();
    let (xi, ki) = (x.index(), k.index());
    tape.push(
        y,
        Some(Box::new(move |vals, g| {
            let xv = vals[xi].view().into_dimensionality::<ndarray::Ix5>().unwrap();
            let kv = vals[ki].view().into_dimensionality::<ndarray::Ix5>().unwrap();
            let gv = g.view().into_dimensionality::<ndarray::Ix5>().unwrap();
            let kf = flip_swap3(&kv);
            let dx = conv3d_raw(&gv, &kf.view()).into_dyn();
            let dk = conv3d_grad_kernel(&xv, &gv, kv.dim()).into_dyn();
            vec![(xi, dx), (ki, dk)]
        })),
    )
}

// ---------------------------------------------------------------------------
// 2-D convolution
// ---------------------------------------------------------------------------

fn pad2<T: Real>(x: &ArrayView4<T>, ph: usize, pw: usize) -> Array4<T> {
    let (n, c, h, w) = x.dim();
    let mut xp = Array4::zeros((n, c, h + 2 * ph, w + 2 * pw));
    xp.slice_mut(s![.., .., ph..ph + h, pw..pw + w]).assign(x);
    xp
}

/// Same-padded stride-1 2-D convolution of `x: [n, ci, h, w]` with
/// `k: [co, ci, kh, kw]` (odd kernel dims).
pub fn conv2d_raw<T: Real>(x: &ArrayView4<T>, k: &ArrayView4<T>) -> Array4<T> {
    let (n, ci, h, w) = x.dim();
    let (co, ci2, kh, kw) = k.dim();
    assert_eq!(ci, ci2, "conv2d channel mismatch");
    assert!(kh % 2 == 1 && kw % 2 == 1, "odd kernels only");
    let (ph, pw) = (kh / 2, kw / 2);
    let xp = pad2(x, ph, pw);
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let xs = xp.as_slice().unwrap();
    let ks = k.to_owned();
    let ks = ks.as_slice().unwrap();

    let mut y = Array4::zeros((n, co, h, w));
    let ys = y.as_slice_mut().unwrap();
    let mut acc = vec![T::zero(); w];
    for nn in 0..n {
        for co_ in 0..co {
            for oh in 0..h {
                acc.fill(T::zero());
                for ci_ in 0..ci {
                    for kh_ in 0..kh {
                        let row = ((nn * ci + ci_) * hp + oh + kh_) * wp;
                        let kbase = ((co_ * ci + ci_) * kh + kh_) * kw;
                        for kw_ in 0..kw {
                            axpy(&mut acc, ks[kbase + kw_], &xs[row + kw_..row + kw_ + w]);
                        }
                    }
                }
                let yoff = ((nn * co + co_) * h + oh) * w;
                ys[yoff..yoff + w].copy_from_slice(&acc);
            }
        }
    }
    y
}

fn conv2d_grad_kernel<T: Real>(
    x: &ArrayView4<T>,
    dy: &ArrayView4<T>,
    kdims: (usize, usize, usize, usize),
) -> Array4<T> {
    let (n, ci, h, w) = x.dim();
    let (co, _, kh, kw) = kdims;
    let (ph, pw) = (kh / 2, kw / 2);
    let xp = pad2(x, ph, pw);
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let xs = xp.as_slice().unwrap();
    let dyo = dy.to_owned();
    let dys = dyo.as_slice().unwrap();

    let mut dk = Array4::zeros(kdims);
    let dks = dk.as_slice_mut().unwrap();
    for nn in 0..n {
        for co_ in 0..co {
            for oh in 0..h {
                let yoff = ((nn * co + co_) * h + oh) * w;
                let yrow = &dys[yoff..yoff + w];
                for ci_ in 0..ci {
                    for kh_ in 0..kh {
                        let row = ((nn * ci + ci_) * hp + oh + kh_) * wp;
                        let kbase = ((co_ * ci + ci_) * kh + kh_) * kw;
                        for kw_ in 0..kw {
                            dks[kbase + kw_] =
                                dks[kbase + kw_] + dot8(&xs[row + kw_..row + kw_ + w], yrow);
                        }
                    }
                }
            }
        }
    }
    dk
}

fn flip_swap2<T: Real>(k: &ArrayView4<T>) -> Array4<T> {
    let (co, ci, kh, kw) = k.dim();
    let mut out = Array4::zeros((ci, co, kh, kw));
    for a in 0..co {
        for b in 0..ci {
            for j in 0..kh {
                for l in 0..kw {
                    out[[b, a, kh - 1 - j, kw - 1 - l]] = k[[a, b, j, l]];
                }
            }
        }
    }
    out
}

/// Tape op: same-padded 2-D convolution.
pub fn conv2d<T: Real>(tape: &mut Tape<T>, x: Var, k: Var) -> Var {
    let xv = tape.val(x).view().into_dimensionality().unwrap();
    let kv = tape.val(k).view().into_dimensionality().unwrap();
    let y = conv2d_raw(&xv, &kv).into_dyn();
    let (xi, ki) = (x.index(), k.index());
    tape.push(
        y,
        Some(Box::new(move |vals, g| {
            let xv = vals[xi].view().into_dimensionality::<ndarray::Ix4>().unwrap();
            let kv = vals[ki].view().into_dimensionality::<ndarray::Ix4>().unwrap();
            let gv = g.view().into_dimensionality::<ndarray::Ix4>().unwrap();
            let kf = flip_swap2(&kv);
            let dx = conv2d_raw(&gv, &kf.view()).into_dyn();
            let dk = conv2d_grad_kernel(&xv, &gv, kv.dim()).into_dyn();
            vec![(xi, dx), (ki, dk)]
        })),
    )
}

// ---------------------------------------------------------------------------
// Max pooling (window 2, stride 2, floor semantics)
// ---------------------------------------------------------------------------

fn maxpool_flat<T: Real>(
    xs: &[T],
    in_dims: &[usize],
    spatial_from: usize,
) -> (Vec<T>, Vec<u32>, Vec<usize>) {
    // Generic 2x pooling over the trailing spatial axes; `in_dims` is the
    // full shape, spatial axes start at `spatial_from`.
    let out_dims: Vec<usize> = in_dims
        .iter()
        .enumerate()
        .map(|(i, &d)| if i >= spatial_from { d / 2 } else { d })
        .collect();
    let n_out: usize = out_dims.iter().product();
    let spatial = &in_dims[spatial_from..];
    let n_spatial_axes = spatial.len();
    assert!(n_spatial_axes == 2 || n_spatial_axes == 3);

    let in_strides: Vec<usize> = {
        let mut s = vec![1usize; in_dims.len()];
        for i in (0..in_dims.len() - 1).rev() {
            s[i] = s[i + 1] * in_dims[i + 1];
        }
        s
    };

    let mut vals = vec![T::zero(); n_out];
    let mut wins = vec![0u32; n_out];
    let lead: usize = out_dims[..spatial_from].iter().product();

    // Window corner offsets in flat input coordinates.
    let mut corners = Vec::new();
    if n_spatial_axes == 2 {
        let (sh, sw) = (in_strides[spatial_from], in_strides[spatial_from + 1]);
        for a in 0..2usize {
            for b in 0..2usize {
                corners.push(a * sh + b * sw);
            }
        }
    } else {
        let (sd, sh, sw) = (
            in_strides[spatial_from],
            in_strides[spatial_from + 1],
            in_strides[spatial_from + 2],
        );
        for a in 0..2usize {
            for b in 0..2usize {
                for c in 0..2usize {
                    corners.push(a * sd + b * sh + c * sw);
                }
            }
        }
    }

    let out_spatial: Vec<usize> = out_dims[spatial_from..].to_vec();
    let lead_in_stride = in_strides[spatial_from - 1];
    let mut oi = 0usize;
    for l in 0..lead {
        let base_l = l * lead_in_stride;
        if n_spatial_axes == 2 {
            let (oh, ow) = (out_spatial[0], out_spatial[1]);
            let (sh, sw) = (in_strides[spatial_from], in_strides[spatial_from + 1]);
            for i in 0..oh {
                for j in 0..ow {
                    let base = base_l + 2 * i * sh + 2 * j * sw;
                    let (v, widx) = window_max(xs, base, &corners);
                    vals[oi] = v;
                    wins[oi] = widx as u32;
                    oi += 1;
                }
            }
        } else {
            let (od, oh, ow) = (out_spatial[0], out_spatial[1], out_spatial[2]);
            let (sd, sh, sw) = (
                in_strides[spatial_from],
                in_strides[spatial_from + 1],
                in_strides[spatial_from + 2],
            );
            for dd in 0..od {
                for i in 0..oh {
                    for j in 0..ow {
                        let base = base_l + 2 * dd * sd + 2 * i * sh + 2 * j * sw;
                        let (v, widx) = window_max(xs, base, &corners);
                        vals[oi] = v;
                        wins[oi] = widx as u32;
                        oi += 1;
                    }
                }
            }
        }
    }
    (vals, wins, out_dims)
}

#[inline]
fn window_max<T: Real>(xs: &[T], base: usize, corners: &[usize]) -> (T, usize) {
    let mut best = xs[base + corners[0]];
    let mut bidx = base + corners[0];
    for &c in &corners[1..] {
        let v = xs[base + c];
        if v > best {
            best = v;
            bidx = base + c;
        }
    }
    (best, bidx)
}

fn maxpool_op<T: Real>(tape: &mut Tape<T>, x: Var, spatial_from: usize) -> Var {
    let in_dims = tape.val(x).shape().to_vec();
    let xs = tape.val(x).as_slice().expect("pool input must be contiguous");
    let (vals, wins, out_dims) = maxpool_flat(xs, &in_dims, spatial_from);
    let y = ArrayD::from_shape_vec(ndarray::IxDyn(&out_dims), vals).unwrap();
    let xi = x.index();
    tape.push(
        y,
        Some(Box::new(move |vals_all, g| {
            let mut dx = ArrayD::zeros(vals_all[xi].raw_dim());
            {
                let dxs = dx.as_slice_mut().unwrap();
                let gs = g.as_slice().unwrap();
                for (i, &w) in wins.iter().enumerate() {
                    dxs[w as usize] = dxs[w as usize] + gs[i];
                }
            }
            vec![(xi, dx)]
        })),
    )
}

/// 2×2 max pooling, stride 2, on `[n, c, h, w]` (floor on odd dims).
pub fn maxpool2d<T: Real>(tape: &mut Tape<T>, x: Var) -> Var {
    assert_eq!(tape.val(x).ndim(), 4);
    maxpool_op(tape, x, 2)
}

/// 2×2×2 max pooling, stride 2, on `[n, c, d, h, w]` (floor on odd dims).
pub fn maxpool3d<T: Real>(tape: &mut Tape<T>, x: Var) -> Var {
    assert_eq!(tape.val(x).ndim(), 5);
    maxpool_op(tape, x, 2)
}
