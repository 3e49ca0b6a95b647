//! Batch normalization over the channel axis of `[n, c, spatial...]`.

use ndarray::{Array1, ArrayD, Axis};

use crate::real::Real;
use crate::tape::{Tape, Var};

/// Per-channel batch mean and biased variance of `[n, c, spatial...]`.
pub fn channel_stats<T: Real>(x: &ArrayD<T>) -> (Array1<T>, Array1<T>) {
    let c = x.shape()[1];
    let m = x.len() / c;
    let inv_m = T::from_f64c(1.0 / m as f64);
    let mut mean = Array1::zeros(c);
    let mut var = Array1::zeros(c);
    for (cc, ch) in x.axis_iter(Axis(1)).enumerate() {
        let mu = ch.iter().fold(T::zero(), |a, &v| a + v) * inv_m;
        let ss = ch.iter().fold(T::zero(), |a, &v| a + (v - mu) * (v - mu));
        mean[cc] = mu;
        var[cc] = ss * inv_m;
    }
    (mean, var)
}

/// Training-mode batch norm: normalizes with the batch statistics of `x`
/// and returns the op output together with those statistics so the caller
/// can fold them into running averages.
pub fn batchnorm_train<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    eps: T,
) -> (Var, Array1<T>, Array1<T>) {
    let (mean, var) = channel_stats(tape.val(x));
    let c = mean.len();
    let gv: Array1<T> = tape.val(gamma).iter().cloned().collect();
    let bv: Array1<T> = tape.val(beta).iter().cloned().collect();
    assert_eq!(gv.len(), c);
    assert_eq!(bv.len(), c);

    let mut y = tape.val(x).clone();
    let inv_std: Array1<T> = var.mapv(|v| T::one() / (v + eps).sqrt());
    for (cc, mut ch) in y.axis_iter_mut(Axis(1)).enumerate() {
        let (mu, s, g, b) = (mean[cc], inv_std[cc], gv[cc], bv[cc]);
        ch.map_inplace(|v| *v = (*v - mu) * s * g + b);
    }

    let (xi, gi, bi) = (x.index(), gamma.index(), beta.index());
    let (mean_c, inv_std_c, gamma_c) = (mean.clone(), inv_std.clone(), gv.clone());
    let out = tape.push(
        y,
        Some(Box::new(move |vals, g| {
            let x = &vals[xi];
            let m = x.len() / c;
            let inv_m = T::from_f64c(1.0 / m as f64);
            let mut dx = ArrayD::zeros(x.raw_dim());
            let mut dgamma = ArrayD::zeros(ndarray::IxDyn(&[c]));
            let mut dbeta = ArrayD::zeros(ndarray::IxDyn(&[c]));
            for cc in 0..c {
                let xc = x.index_axis(Axis(1), cc);
                let gc = g.index_axis(Axis(1), cc);
                let (mu, s) = (mean_c[cc], inv_std_c[cc]);
                // Channel-wise sums of g and g*xhat.
                let mut sum_g = T::zero();
                let mut sum_gx = T::zero();
                ndarray::Zip::from(&xc).and(&gc).for_each(|&xv, &gv2| {
                    sum_g = sum_g + gv2;
                    sum_gx = sum_gx + gv2 * (xv - mu) * s;
                });
                dgamma[[cc]] = sum_gx;
                dbeta[[cc]] = sum_g;
                let coef = gamma_c[cc] * s * inv_m;
                let mf = T::from_f64c(m as f64);
                let mut dxc = dx.index_axis_mut(Axis(1), cc);
                ndarray::Zip::from(&mut dxc)
                    .and(&xc)
                    .and(&gc)
                    .for_each(|d, &xv, &gv2| {
                        let xhat = (xv - mu) * s;
                        *d = coef * (mf * gv2 - sum_g - xhat * sum_gx);
                    });
            }
            vec![(xi, dx), (gi, dgamma), (bi, dbeta)]
        })),
    );
    (out, mean, var)
}

/// Evaluation-mode batch norm: affine transform with fixed running stats.
pub fn batchnorm_eval<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    run_mean: &Array1<T>,
    run_var: &Array1<T>,
    eps: T,
) -> Var {
    let c = run_mean.len();
    let gv: Array1<T> = tape.val(gamma).iter().cloned().collect();
    let bv: Array1<T> = tape.val(beta).iter().cloned().collect();
    let inv_std: Array1<T> = run_var.mapv(|v| T::one() / (v + eps).sqrt());
    let mut y = tape.val(x).clone();
    for (cc, mut ch) in y.axis_iter_mut(Axis(1)).enumerate() {
        let (mu, s, g, b) = (run_mean[cc], inv_std[cc], gv[cc], bv[cc]);
        ch.map_inplace(|v| *v = (*v - mu) * s * g + b);
    }
    let (xi, gi, bi) = (x.index(), gamma.index(), beta.index());
    let (mean_c, inv_std_c, gamma_c) = (run_mean.clone(), inv_std, gv);
    tape.push(
        y,
        Some(Box::new(move |vals, g| {
            let x = &vals[xi];
            let mut dx = ArrayD::zeros(x.raw_dim());
            let mut dgamma = ArrayD::zeros(ndarray::IxDyn(&[c]));
            let mut dbeta = ArrayD::zeros(ndarray::IxDyn(&[c]));
            for cc in 0..c {
                let xc = x.index_axis(Axis(1), cc);
                let gc = g.index_axis(Axis(1), cc);
                let (mu, s) = (mean_c[cc], inv_std_c[cc]);
                let mut sum_g = T::zero();
                let mut sum_gx = T::zero();
                ndarray::Zip::from(&xc).and(&gc).for_each(|&xv, &gv2| {
                    sum_g = sum_g + gv2;
                    sum_gx = sum_gx + gv2 * (xv - mu) * s;
                });
                dgamma[[cc]] = sum_gx;
                dbeta[[cc]] = sum_g;
                let coef = gamma_c[cc] * s;
                let mut dxc = dx.index_axis_mut(Axis(1), cc);
                ndarray::Zip::from(&mut dxc).and(&gc).for_each(|d, &gv2| {
                    *d = coef * gv2;
                });
            }
            vec![(xi, dx), (gi, dgamma), (bi, dbeta)]
        })),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::fdtest::{check_grads, rand_arr};
    use crate::ops::{relu, sum_all};

    #[test]
    fn train_mode_normalizes_batch() {
        let mut t: Tape<f64> = Tape::new();
        let x = t.leaf(rand_arr(&[4, 3, 5], 41));
        let gamma = t.leaf(ndarray::arr1(&[1.0, 1.0, 1.0]).into_dyn());
        let beta = t.leaf(ndarray::arr1(&[0.0, 0.0, 0.0]).into_dyn());
        let (y, _, _) = batchnorm_train(&mut t, x, gamma, beta, 1e-5);
        let (m, v) = channel_stats(t.val(y));
        for cc in 0..3 {
            assert!(m[cc].abs() < 1e-4, "post-BN channel mean {}", m[cc]);
            assert!((v[cc] - 1.0).abs() < 1e-3, "post-BN channel var {}", v[cc]);
        }
    }

    #[test]
    fn eval_mode_is_plain_affine() {
        let mut t: Tape<f64> = Tape::new();
        let x = t.leaf(ndarray::arr3(&[[[2.0, 4.0]], [[6.0, 8.0]]]).into_dyn());
        let gamma = t.leaf(ndarray::arr1(&[3.0]).into_dyn());
        let beta = t.leaf(ndarray::arr1(&[1.0]).into_dyn());
        let rm = Array1::from_vec(vec![2.0]);
        let rv = Array1::from_vec(vec![4.0]);
        let y = batchnorm_eval(&mut t, x, gamma, beta, &rm, &rv, 0.0);
        // (x - 2)/2*3 + 1
        let want = [1.0, 4.0, 7.0, 10.0];
        for (got, w) in t.val(y).iter().zip(want) {
            assert!((got - w).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_batchnorm_train() {
        check_grads(
            &[rand_arr(&[3, 2, 4], 42), rand_arr(&[2], 43), rand_arr(&[2], 44)],
            |t, v| {
                let (y, _, _) = batchnorm_train(t, v[0], v[1], v[2], 1e-5);
                let r = relu(t, y);
                sum_all(t, r)
            },
            // Loose enough to absorb FD round-off at dead-ReLU coordinates.
            1e-4,
        );
    }

    #[test]
    fn grad_batchnorm_eval() {
        let rm = Array1::from_vec(vec![0.1, -0.2]);
        let rv = Array1::from_vec(vec![0.9, 1.4]);
        check_grads(
            &[rand_arr(&[3, 2, 4], 45), rand_arr(&[2], 46), rand_arr(&[2], 47)],
            |t, v| {
                let y = batchnorm_eval(t, v[0], v[1], v[2], &rm, &rv, 1e-5);
                let r = relu(t, y);
                sum_all(t, r)
            },
            1e-5,
        );
    }
}
