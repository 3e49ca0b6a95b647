//! Elementwise, shape, and linear-algebra ops.

use ndarray::{concatenate, ArrayD, Axis, Ix1, Ix2, IxDyn, Slice};

use crate::real::Real;
use crate::tape::{Tape, Var};

/// Elementwise sum of two same-shape tensors.
pub fn add<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Var {
    let val = tape.val(a) + tape.val(b);
    let (ai, bi) = (a.index(), b.index());
    tape.push(
        val,
        Some(Box::new(move |_, g| {
            vec![(ai, g.clone()), (bi, g.clone())]
        })),
    )
}

/// Add a constant tensor (no gradient flows into the constant).
pub fn add_const<T: Real>(tape: &mut Tape<T>, a: Var, c: &ArrayD<T>) -> Var {
    let val = tape.val(a) + c;
    let ai = a.index();
    tape.push(val, Some(Box::new(move |_, g| vec![(ai, g.clone())])))
}

/// Multiply by a compile-time-known scalar.
pub fn scale<T: Real>(tape: &mut Tape<T>, a: Var, k: T) -> Var {
    let val = tape.val(a).mapv(|v| v * k);
    let ai = a.index();
    tape.push(
        val,
        Some(Box::new(move |_, g| vec![(ai, g.mapv(|v| v * k))])),
    )
}

/// Rectified linear unit; subgradient 0 at the kink.
pub fn relu<T: Real>(tape: &mut Tape<T>, a: Var) -> Var {
    let val = tape.val(a).mapv(|v| if v > T::zero() { v } else { T::zero() });
    let ai = a.index();
    tape.push(
        val,
        Some(Box::new(move |vals, g| {
            let mut dx = g.clone();
            dx.zip_mut_with(&vals[ai], |d, &x| {
                if x <= T::zero() {
                    *d = T::zero();
                }
            });
            vec![(ai, dx)]
        })),
    )
}

/// Sum of all elements, producing a rank-0 scalar node.
pub fn sum_all<T: Real>(tape: &mut Tape<T>, a: Var) -> Var {
    let s = tape.val(a).sum();
    let ai = a.index();
    tape.push(
        ArrayD::from_elem(IxDyn(&[]), s),
        Some(Box::new(move |vals, g| {
            let gs = g.sum();
            vec![(ai, ArrayD::from_elem(vals[ai].raw_dim(), gs))]
        })),
    )
}

/// Row-major reshape.
pub fn reshape<T: Real>(tape: &mut Tape<T>, a: Var, shape: &[usize]) -> Var {
    let val = tape
        .val(a)
        .clone()
        .into_shape_with_order(IxDyn(shape))
        .expect("reshape must preserve element count");
    let ai = a.index();
    tape.push(
        val,
        Some(Box::new(move |vals, g| {
            let orig = vals[ai].raw_dim();
            vec![(ai, g.clone().into_shape_with_order(orig).unwrap())]
        })),
    )
}

/// 2-D transpose.
pub fn transpose2<T: Real>(tape: &mut Tape<T>, a: Var) -> Var {
    let val = tape.val(a).t().to_owned();
    let ai = a.index();
    tape.push(
        val,
        Some(Box::new(move |_, g| vec![(ai, g.t().to_owned())])),
    )
}

/// Matrix product of two rank-2 tensors.
pub fn matmul<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Var {
    let av = tape.val(a).view().into_dimensionality::<Ix2>().unwrap();
    let bv = tape.val(b).view().into_dimensionality::<Ix2>().unwrap();
    assert_eq!(av.ncols(), bv.nrows(), "matmul inner dimensions");
    let val = av.dot(&bv).into_dyn();
    let (ai, bi) = (a.index(), b.index());
    tape.push(
        val,
        Some(Box::new(move |vals, g| {
            let a2 = vals[ai].view().into_dimensionality::<Ix2>().unwrap();
            let b2 = vals[bi].view().into_dimensionality::<Ix2>().unwrap();
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            vec![
                (ai, g2.dot(&b2.t()).into_dyn()),
                (bi, a2.t().dot(&g2).into_dyn()),
            ]
        })),
    )
}

/// Rows `[start, start+len)` of a rank-2 tensor.
pub fn slice_rows<T: Real>(tape: &mut Tape<T>, a: Var, start: usize, len: usize) -> Var {
    let val = tape
        .val(a)
        .slice_axis(Axis(0), Slice::from(start..start + len))
        .to_owned();
    let ai = a.index();
    tape.push(
        val,
        Some(Box::new(move |vals, g| {
            let mut dx = ArrayD::zeros(vals[ai].raw_dim());
            dx.slice_axis_mut(Axis(0), Slice::from(start..start + len))
                .assign(g);
            vec![(ai, dx)]
        })),
    )
}

/// Columns `[start, start+len)` of a rank-2 tensor.
pub fn slice_cols<T: Real>(tape: &mut Tape<T>, a: Var, start: usize, len: usize) -> Var {
    let val = tape
        .val(a)
        .slice_axis(Axis(1), Slice::from(start..start + len))
        .to_owned();
    let ai = a.index();
    tape.push(
        val,
        Some(Box::new(move |vals, g| {
            let mut dx = ArrayD::zeros(vals[ai].raw_dim());
            dx.slice_axis_mut(Axis(1), Slice::from(start..start + len))
                .assign(g);
            vec![(ai, dx)]
        })),
    )
}

/// Concatenate rank-2 tensors along columns.
pub fn concat_cols<T: Real>(tape: &mut Tape<T>, parts: &[Var]) -> Var {
    concat_axis(tape, parts, 1)
}

/// Concatenate rank-1 tensors end to end.
pub fn concat1d<T: Real>(tape: &mut Tape<T>, parts: &[Var]) -> Var {
    concat_axis(tape, parts, 0)
}

fn concat_axis<T: Real>(tape: &mut Tape<T>, parts: &[Var], axis: usize) -> Var {
    assert!(!parts.is_empty());
    let views: Vec<_> = parts.iter().map(|p| tape.val(*p).view()).collect();
    let val = concatenate(Axis(axis), &views).expect("concat shapes must agree");
    let idxs: Vec<usize> = parts.iter().map(|p| p.index()).collect();
    let widths: Vec<usize> = parts.iter().map(|p| tape.val(*p).shape()[axis]).collect();
    tape.push(
        val,
        Some(Box::new(move |_, g| {
            let mut out = Vec::with_capacity(idxs.len());
            let mut off = 0;
            for (&i, &w) in idxs.iter().zip(&widths) {
                out.push((
                    i,
                    g.slice_axis(Axis(axis), Slice::from(off..off + w)).to_owned(),
                ));
                off += w;
            }
            out
        })),
    )
}

/// Mean over axis 0: `[t, d]` to `[d]`.
pub fn mean_axis0<T: Real>(tape: &mut Tape<T>, a: Var) -> Var {
    let t = tape.val(a).shape()[0];
    let val = tape.val(a).mean_axis(Axis(0)).unwrap();
    let ai = a.index();
    let inv = T::from_f64c(1.0 / t as f64);
    tape.push(
        val,
        Some(Box::new(move |vals, g| {
            let shape = vals[ai].raw_dim();
            let mut dx = ArrayD::zeros(shape);
            for mut row in dx.axis_iter_mut(Axis(0)) {
                row.zip_mut_with(g, |d, &gv| *d = gv * inv);
            }
            vec![(ai, dx)]
        })),
    )
}

/// Global average pool: `[n, c, spatial...]` to `[n, c]`.
pub fn global_avg_pool<T: Real>(tape: &mut Tape<T>, a: Var) -> Var {
    let shape = tape.val(a).shape().to_vec();
    assert!(shape.len() >= 3, "expected [n, c, spatial...]");
    let (n, c) = (shape[0], shape[1]);
    let vol: usize = shape[2..].iter().product();
    let inv = T::from_f64c(1.0 / vol as f64);
    let flat = tape
        .val(a)
        .view()
        .into_shape_with_order(IxDyn(&[n, c, vol]))
        .unwrap();
    let val = flat.sum_axis(Axis(2)).mapv(|v| v * inv).into_dyn();
    let ai = a.index();
    tape.push(
        val,
        Some(Box::new(move |vals, g| {
            let full = vals[ai].raw_dim();
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let mut dx = ArrayD::zeros(IxDyn(&[n, c, vol]));
            for nn in 0..n {
                for cc in 0..c {
                    let gv = g2[[nn, cc]] * inv;
                    dx.slice_mut(ndarray::s![nn, cc, ..]).fill(gv);
                }
            }
            vec![(ai, dx.into_shape_with_order(full).unwrap())]
        })),
    )
}

/// Add a per-channel bias to `[n, c, spatial...]`.
pub fn add_bias_channel<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Var {
    let c = tape.val(a).shape()[1];
    assert_eq!(tape.val(b).len(), c, "bias length must equal channels");
    let bvec = tape.val(b).view().into_dimensionality::<Ix1>().unwrap().to_owned();
    let mut val = tape.val(a).clone();
    for (cc, mut ch) in val.axis_iter_mut(Axis(1)).enumerate() {
        let bc = bvec[cc];
        ch.map_inplace(|v| *v = *v + bc);
    }
    let (ai, bi) = (a.index(), b.index());
    tape.push(
        val,
        Some(Box::new(move |_, g| {
            let mut db = ArrayD::zeros(IxDyn(&[c]));
            for (cc, ch) in g.axis_iter(Axis(1)).enumerate() {
                db[[cc]] = ch.sum();
            }
            vec![(ai, g.clone()), (bi, db)]
        })),
    )
}

/// Add a per-feature bias to `[n, f]`.
pub fn add_bias_row<T: Real>(tape: &mut Tape<T>, a: Var, b: Var) -> Var {
    let f = tape.val(a).shape()[1];
    assert_eq!(tape.val(b).len(), f, "bias length must equal features");
    let mut val = tape.val(a).clone();
    let bv = tape.val(b).view().into_dimensionality::<Ix1>().unwrap().to_owned();
    for mut row in val.axis_iter_mut(Axis(0)) {
        row.zip_mut_with(&bv, |v, &bb| *v = *v + bb);
    }
    let (ai, bi) = (a.index(), b.index());
    tape.push(
        val,
        Some(Box::new(move |_, g| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            vec![(ai, g.clone()), (bi, g2.sum_axis(Axis(0)).into_dyn())]
        })),
    )
}

/// Linear layer `x·w + b` for `x: [n, f]`, `w: [f, o]`, `b: [o]`.
pub fn linear<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Var {
    let xw = matmul(tape, x, w);
    add_bias_row(tape, xw, b)
}

/// Row-wise softmax of a rank-2 tensor (max-subtracted for stability).
pub fn softmax_rows<T: Real>(tape: &mut Tape<T>, a: Var) -> Var {
    let x = tape.val(a).view().into_dimensionality::<Ix2>().unwrap();
    let mut y = x.to_owned();
    for mut row in y.axis_iter_mut(Axis(0)) {
        let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
        row.map_inplace(|v| *v = (*v - m).exp());
        let s = row.sum();
        row.map_inplace(|v| *v = *v / s);
    }
    let ai = a.index();
    let y_back = y.clone();
    tape.push(
        y.into_dyn(),
        Some(Box::new(move |_, g| {
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let mut dx = y_back.clone();
            for ((mut drow, yrow), grow) in dx
                .axis_iter_mut(Axis(0))
                .zip(y_back.axis_iter(Axis(0)))
                .zip(g2.axis_iter(Axis(0)))
            {
                let dot = yrow
                    .iter()
                    .zip(grow.iter())
                    .fold(T::zero(), |acc, (&yv, &gv)| acc + yv * gv);
                for (d, (&yv, &gv)) in drow.iter_mut().zip(yrow.iter().zip(grow.iter())) {
                    *d = yv * (gv - dot);
                }
            }
            vec![(ai, dx.into_dyn())]
        })),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::fdtest::{check_grads, rand_arr};
    use ndarray::{arr1, arr2};

    #[test]
    fn add_and_scale_values() {
        let mut t: Tape<f64> = Tape::new();
        let a = t.leaf(arr1(&[1.0, 2.0]).into_dyn());
        let b = t.leaf(arr1(&[10.0, 20.0]).into_dyn());
        let s = add(&mut t, a, b);
        let k = scale(&mut t, s, 0.5);
        assert_eq!(t.val(k).as_slice().unwrap(), &[5.5, 11.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut t: Tape<f64> = Tape::new();
        let a = t.leaf(arr1(&[-1.0, 0.0, 2.5]).into_dyn());
        let r = relu(&mut t, a);
        assert_eq!(t.val(r).as_slice().unwrap(), &[0.0, 0.0, 2.5]);
    }

    #[test]
    fn matmul_matches_hand_product() {
        let mut t: Tape<f64> = Tape::new();
        let a = t.leaf(arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn());
        let b = t.leaf(arr2(&[[5.0], [6.0]]).into_dyn());
        let c = matmul(&mut t, a, b);
        assert_eq!(t.val(c).as_slice().unwrap(), &[17.0, 39.0]);
    }

    #[test]
    fn softmax_rows_are_probabilities() {
        let mut t: Tape<f64> = Tape::new();
        let a = t.leaf(arr2(&[[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]).into_dyn());
        let p = softmax_rows(&mut t, a);
        let v = t.val(p).view().into_dimensionality::<ndarray::Ix2>().unwrap().to_owned();
        for row in v.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
        assert!((v[[1, 0]] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn grad_add_scale_relu() {
        check_grads(
            &[rand_arr(&[3, 2], 1), rand_arr(&[3, 2], 2)],
            |t, v| {
                let s = add(t, v[0], v[1]);
                let k = scale(t, s, 0.7);
                let r = relu(t, k);
                sum_all(t, r)
            },
            1e-6,
        );
    }

    #[test]
    fn grad_matmul_transpose() {
        check_grads(
            &[rand_arr(&[3, 4], 3), rand_arr(&[4, 2], 4)],
            |t, v| {
                let m = matmul(t, v[0], v[1]);
                let tr = transpose2(t, m);
                sum_all(t, tr)
            },
            1e-6,
        );
    }

    #[test]
    fn grad_softmax_rows() {
        check_grads(
            &[rand_arr(&[4, 5], 5), rand_arr(&[4, 5], 6)],
            |t, v| {
                let p = softmax_rows(t, v[0]);
                // Weight the probabilities so the gradient is nontrivial.
                let w = add(t, p, v[1]);
                let r = relu(t, w);
                sum_all(t, r)
            },
            1e-5,
        );
    }

    #[test]
    fn grad_slices_and_concat() {
        check_grads(
            &[rand_arr(&[4, 6], 7), rand_arr(&[4, 3], 8)],
            |t, v| {
                let a = slice_cols(t, v[0], 1, 3);
                let b = slice_rows(t, v[0], 0, 2);
                let c = concat_cols(t, &[a, v[1]]);
                let s1 = sum_all(t, c);
                let s2 = sum_all(t, b);
                add(t, s1, s2)
            },
            1e-6,
        );
    }

    #[test]
    fn grad_pool_bias_mean() {
        check_grads(
            &[
                rand_arr(&[2, 3, 4, 2], 9),
                rand_arr(&[3], 10),
                rand_arr(&[2, 3], 11),
            ],
            |t, v| {
                let b = add_bias_channel(t, v[0], v[1]);
                let p = global_avg_pool(t, b);
                let q = add(t, p, v[2]);
                let m = mean_axis0(t, q);
                sum_all(t, m)
            },
            1e-6,
        );
    }

    #[test]
    fn grad_linear_and_reshape() {
        check_grads(
            &[
                rand_arr(&[2, 6], 12),
                rand_arr(&[6, 4], 13),
                rand_arr(&[4], 14),
            ],
            |t, v| {
                let l = linear(t, v[0], v[1], v[2]);
                let r = reshape(t, l, &[8]);
                let c = concat1d(t, &[r]);
                sum_all(t, c)
            },
            1e-6,
        );
    }
}
