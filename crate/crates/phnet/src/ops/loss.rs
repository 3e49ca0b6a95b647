//! Softmax and cross-entropy.

use ndarray::{Array1, ArrayD, ArrayView1, IxDyn};

use crate::real::Real;
use crate::tape::{Tape, Var};

/// Numerically stable softmax of a vector (max-subtracted).
pub fn softmax_vec<T: Real>(logits: &ArrayView1<T>) -> Array1<T> {
    let m = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut p = logits.mapv(|v| (v - m).exp());
    let s = p.sum();
    p.map_inplace(|v| *v = *v / s);
    p
}

/// Cross-entropy of a rank-1 logits node against an integer label:
/// `L = -log softmax(logits)[label]`, returned as a rank-0 scalar node.
pub fn softmax_cross_entropy<T: Real>(tape: &mut Tape<T>, logits: Var, label: usize) -> Var {
    let lv = tape.val(logits);
    assert_eq!(lv.ndim(), 1, "logits must be rank-1");
    let n = lv.len();
    assert!(label < n, "label out of range");
    let p = softmax_vec(&lv.view().into_dimensionality().unwrap());
    let loss = -(p[label].ln());
    let li = logits.index();
    tape.push(
        ArrayD::from_elem(IxDyn(&[]), loss),
        Some(Box::new(move |_, g| {
            let gs = g.sum();
            let mut d = p.clone();
            d[label] = d[label] - T::one();
            vec![(li, d.mapv(|v| v * gs).into_dyn())]
        })),
    )
}
