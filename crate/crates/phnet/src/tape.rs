//! A minimal reverse-mode autodiff tape over dynamic-rank `ndarray` tensors.
//!
//! Every forward value is appended to the tape in topological order; each
//! non-leaf node carries a backward closure that maps the upstream gradient
//! to gradient contributions for its inputs. [`Tape::grad`] replays the tape
//! in reverse and accumulates contributions in strict index order, so a
//! gradient computation is bit-deterministic for a fixed op sequence.
//!
//! The tape is deliberately small: no graph optimization, no in-place
//! aliasing, one closure per op. Model code builds a fresh tape per
//! forward/backward pass.

use ndarray::ArrayD;

use crate::real::Real;

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    /// Index of this node on its tape.
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward closure: `(all forward values, upstream gradient)` to a list of
/// `(input node index, gradient contribution)` pairs.
pub type BackFn<T> = Box<dyn Fn(&[ArrayD<T>], &ArrayD<T>) -> Vec<(usize, ArrayD<T>)>>;

pub struct Tape<T: Real> {
    vals: Vec<ArrayD<T>>,
    backs: Vec<Option<BackFn<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            vals: Vec::new(),
            backs: Vec::new(),
        }
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Record an input node (no backward function).
    pub fn leaf(&mut self, val: ArrayD<T>) -> Var {
        self.push(val, None)
    }

    /// Record an op output together with its backward closure.
    pub fn push(&mut self, val: ArrayD<T>, back: Option<BackFn<T>>) -> Var {
        debug_assert!(val.iter().all(|v| v.is_finite()), "non-finite tape value");
        self.vals.push(val);
        self.backs.push(back);
        Var(self.vals.len() - 1)
    }

    /// Forward value of a node.
    pub fn val(&self, v: Var) -> &ArrayD<T> {
        &self.vals[v.0]
    }

    /// Reverse-mode gradients of a scalar `loss` with respect to `wrt`.
    ///
    /// `loss` must hold exactly one element. Nodes outside the ancestry of
    /// `loss` receive zero gradients of their own shape.
    pub fn grad(&self, loss: Var, wrt: &[Var]) -> Vec<ArrayD<T>> {
        assert_eq!(
            self.vals[loss.0].len(),
            1,
            "grad target must be a scalar node"
        );
        let mut keep = vec![false; self.vals.len()];
        for v in wrt {
            keep[v.0] = true;
        }

        let mut grads: Vec<Option<ArrayD<T>>> = (0..self.vals.len()).map(|_| None).collect();
        grads[loss.0] = Some(ArrayD::ones(self.vals[loss.0].raw_dim()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            // Backward closures may assume contiguous row-major gradients.
            let g = if g.is_standard_layout() {
                g
            } else {
                g.as_standard_layout().to_owned()
            };
            if let Some(back) = &self.backs[i] {
                for (j, contrib) in back(&self.vals, &g) {
                    debug_assert!(j < i, "backward edge must point to an earlier node");
                    debug_assert_eq!(
                        contrib.shape(),
                        self.vals[j].shape(),
                        "gradient shape must match value shape"
                    );
                    match &mut grads[j] {
                        Some(acc) => acc.zip_mut_with(&contrib, |a, b| *a = *a + *b),
                        slot @ None => *slot = Some(contrib),
                    }
                }
            }
            if keep[i] {
                grads[i] = Some(g);
            }
            // Gradients of unneeded intermediates are dropped here, which
            // keeps peak memory at roughly one live activation layer.
        }

        wrt.iter()
            .map(|v| {
                let g = grads[v.0]
                    .take()
                    .unwrap_or_else(|| ArrayD::zeros(self.vals[v.0].raw_dim()));
                if g.is_standard_layout() {
                    g
                } else {
                    g.as_standard_layout().to_owned()
                }
            })
            .collect()
    }
}
