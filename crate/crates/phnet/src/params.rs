//! Named model parameters: the single source of truth for tensor names,
//! shapes, and initialization.
//!
//! A [`ParamSet`] holds trainable tensors plus the batch-norm running
//! statistics (non-trainable). Initialization draws from a seeded stream in
//! the fixed order of [`param_specs`], so a `(config, seed)` pair always
//! produces the same bytes regardless of platform or thread count.

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::config::ModelConfig;
use crate::error::{PhnetError, Result};
use crate::real::Real;

/// How a tensor is filled at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    UniformFanIn(usize),
    Zeros,
    Ones,
    /// Constant [`POSITIVE_BIAS`], for biases that feed a ReLU directly
    /// (no batch norm in between): keeps those units off the kink and
    /// alive at initialization. With zero bias the narrow GCN layers can
    /// start with every unit dead — ReLU inputs are nonnegative there —
    /// which freezes all upstream gradients at exactly zero.
    PositiveBias,
}

/// Value used by [`Init::PositiveBias`].
pub const POSITIVE_BIAS: f64 = 0.05;

/// Declared name, shape, and init of one tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn spec(name: impl Into<String>, shape: &[usize], init: Init) -> TensorSpec {
    TensorSpec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
    }
}

/// Trainable tensors of the model described by `cfg`, in canonical order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let e = &cfg.encoder;
    let f = &cfg.fusion;
    let [c1, c2] = e.channels;
    let k = e.kernel;
    let d = e.d_model;
    let mut v = Vec::new();

    for (m, nd) in [("sax", 3usize), ("ch4", 2usize)] {
        let kk: Vec<usize> = std::iter::repeat(k).take(nd).collect();
        let mut w1 = vec![c1, 1];
        w1.extend(&kk);
        let mut w2 = vec![c2, c1];
        w2.extend(&kk);
        let fan1 = k.pow(nd as u32);
        let fan2 = c1 * k.pow(nd as u32);
        v.push(spec(format!("{m}.conv1.w"), &w1, Init::UniformFanIn(fan1)));
        v.push(spec(format!("{m}.conv1.b"), &[c1], Init::Zeros));
        v.push(spec(format!("{m}.bn1.gamma"), &[c1], Init::Ones));
        v.push(spec(format!("{m}.bn1.beta"), &[c1], Init::Zeros));
        v.push(spec(format!("{m}.conv2.w"), &w2, Init::UniformFanIn(fan2)));
        v.push(spec(format!("{m}.conv2.b"), &[c2], Init::Zeros));
        v.push(spec(format!("{m}.bn2.gamma"), &[c2], Init::Ones));
        v.push(spec(format!("{m}.bn2.beta"), &[c2], Init::Zeros));
        v.push(spec(
            format!("{m}.token.w"),
            &[c2, d],
            Init::UniformFanIn(c2),
        ));
        v.push(spec(format!("{m}.token.b"), &[d], Init::Zeros));
        for p in ["wq", "wk", "wv", "wo"] {
            v.push(spec(
                format!("{m}.attn.{p}"),
                &[d, d],
                Init::UniformFanIn(d),
            ));
        }
    }

    v.push(spec("nodes.w", &[2 * d, e.n_image_nodes], Init::UniformFanIn(2 * d)));
    v.push(spec("nodes.b", &[e.n_image_nodes], Init::Zeros));

    let n_nodes = cfg.n_nodes();
    let head_in = if f.use_gcn {
        let [g1, g2] = f.gcn_widths;
        v.push(spec("gcn.l1.w", &[1, g1], Init::UniformFanIn(1)));
        v.push(spec("gcn.l1.b", &[g1], Init::PositiveBias));
        v.push(spec("gcn.l2.w", &[g1, g2], Init::UniformFanIn(g1)));
        v.push(spec("gcn.l2.b", &[g2], Init::PositiveBias));
        n_nodes * g2
    } else {
        n_nodes
    };
    v.push(spec(
        "head.w1",
        &[head_in, f.mlp_hidden],
        Init::UniformFanIn(head_in),
    ));
    v.push(spec("head.b1", &[f.mlp_hidden], Init::PositiveBias));
    v.push(spec(
        "head.w2",
        &[f.mlp_hidden, 3],
        Init::UniformFanIn(f.mlp_hidden),
    ));
    v.push(spec("head.b2", &[3], Init::Zeros));
    v
}

/// Non-trainable running statistics (batch-norm running mean/variance).
pub fn stat_specs(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let [c1, c2] = cfg.encoder.channels;
    let mut v = Vec::new();
    for m in ["sax", "ch4"] {
        for (layer, c) in [("bn1", c1), ("bn2", c2)] {
            v.push(spec(format!("{m}.{layer}.running_mean"), &[c], Init::Zeros));
            v.push(spec(format!("{m}.{layer}.running_var"), &[c], Init::Ones));
        }
    }
    v
}

/// Trainable parameters plus running statistics, both addressed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub params: BTreeMap<String, ArrayD<T>>,
    pub stats: BTreeMap<String, ArrayD<T>>,
}

impl<T: Real> ParamSet<T> {
    /// Seeded initialization. Uniform draws happen element-by-element in
    /// the order of [`param_specs`]; zero/one tensors consume no draws.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for ts in param_specs(cfg) {
            let arr = match ts.init {
                Init::UniformFanIn(fan_in) => {
                    let a = 1.0 / (fan_in.max(1) as f64).sqrt();
                    let mut arr = ArrayD::<T>::zeros(IxDyn(&ts.shape));
                    for v in arr.iter_mut() {
                        *v = T::from_f64c(rng.gen_range(-a..a));
                    }
                    arr
                }
                Init::Zeros => ArrayD::zeros(IxDyn(&ts.shape)),
                Init::Ones => ArrayD::from_elem(IxDyn(&ts.shape), T::one()),
                Init::PositiveBias => {
                    ArrayD::from_elem(IxDyn(&ts.shape), T::from_f64c(POSITIVE_BIAS))
                }
            };
            params.insert(ts.name, arr);
        }
        let mut stats = BTreeMap::new();
        for ts in stat_specs(cfg) {
            let arr = match ts.init {
                Init::Ones => ArrayD::from_elem(IxDyn(&ts.shape), T::one()),
                _ => ArrayD::zeros(IxDyn(&ts.shape)),
            };
            stats.insert(ts.name, arr);
        }
        ParamSet { params, stats }
    }

    /// Convert every tensor to another precision (used by the `f64`
    /// gradient-check path).
    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        let conv = |m: &BTreeMap<String, ArrayD<T>>| {
            m.iter()
                .map(|(k, v)| (k.clone(), v.mapv(|x| U::from_f64c(x.to_f64c()))))
                .collect()
        };
        ParamSet {
            params: conv(&self.params),
            stats: conv(&self.stats),
        }
    }

    pub fn n_trainable(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }

    pub fn get(&self, name: &str) -> &ArrayD<T> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter tensor '{name}'"))
    }

    pub fn get_stat(&self, name: &str) -> &ArrayD<T> {
        self.stats
            .get(name)
            .unwrap_or_else(|| panic!("missing stats tensor '{name}'"))
    }

    /// Check that the set matches the declared table for `cfg`.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let expect = param_specs(cfg);
        if expect.len() != self.params.len() {
            return Err(PhnetError::InvalidConfig(format!(
                "parameter count mismatch: expected {} tensors, got {}",
                expect.len(),
                self.params.len()
            )));
        }
        for ts in expect.iter().chain(stat_specs(cfg).iter()) {
            let map = if self.params.contains_key(&ts.name) {
                &self.params
            } else {
                &self.stats
            };
            let arr = map.get(&ts.name).ok_or_else(|| {
                PhnetError::InvalidConfig(format!("missing tensor '{}'", ts.name))
            })?;
            if arr.shape() != ts.shape.as_slice() {
                return Err(PhnetError::ShapeMismatch {
                    context: format!("parameter '{}'", ts.name),
                    expected: format!("{:?}", ts.shape),
                    got: format!("{:?}", arr.shape()),
                });
            }
        }
        Ok(())
    }
}
