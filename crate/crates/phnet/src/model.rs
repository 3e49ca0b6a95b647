//! Full multimodal model: parameter wiring, input preparation, and the
//! batched forward pass used by training, evaluation, and the gradient
//! checker.
//!
//! Input preparation z-scores each modality series per sample (image
//! intensities are scanner-arbitrary; the clinical vector is already
//! normalized) and rearranges frames into one convolution batch of
//! `batch * frames` items so both conv stages run once per batch. Frame
//! tokens are then regrouped per sample for temporal attention.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayD, Ix1, IxDyn};

use crate::config::{AdjacencyMode, ModelConfig};
use crate::encoder::{self, BnUse, EncoderVars, StageVars};
use crate::error::{PhnetError, Result};
use crate::fusion::{self, GcnVars, HeadVars};
use crate::ops::*;
use crate::params::ParamSet;
use crate::preprocess::Sample;
use crate::real::Real;
use crate::tape::{Tape, Var};

/// Configuration, parameters, and the precomputed normalized adjacency.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    pub cfg: ModelConfig,
    pub params: ParamSet<T>,
    /// `A_hat`, present when the GCN is enabled.
    pub a_hat: Option<Array2<T>>,
}

impl<T: Real> Model<T> {
    /// Fresh model with seeded initialization.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Self::from_params(cfg.clone(), ParamSet::init(cfg, seed))
    }

    /// Wrap existing parameters (e.g. loaded from a checkpoint).
    pub fn from_params(cfg: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        cfg.validate()?;
        params.check_against(&cfg)?;
        let a_hat = if cfg.fusion.use_gcn {
            let custom = match cfg.fusion.adjacency {
                AdjacencyMode::Custom => {
                    let path = cfg.fusion.custom_adjacency.as_ref().ok_or_else(|| {
                        PhnetError::InvalidConfig(
                            "custom adjacency mode requires custom_adjacency path".into(),
                        )
                    })?;
                    Some(fusion::read_adjacency_file(std::path::Path::new(path))?)
                }
                _ => None,
            };
            let a = fusion::build_adjacency(
                cfg.fusion.adjacency,
                cfg.encoder.n_image_nodes,
                cfg.fusion.n_clinical_nodes,
                custom.as_ref(),
            )?;
            Some(fusion::normalize_adjacency(&a)?.mapv(T::from_f64c))
        } else {
            None
        };
        Ok(Model { cfg, params, a_hat })
    }

    /// Convert the whole model to another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            a_hat: self
                .a_hat
                .as_ref()
                .map(|a| a.mapv(|v| U::from_f64c(v.to_f64c()))),
        }
    }
}

/// Tape leaves for every trainable tensor, bound in sorted-name order.
pub struct ParamVars {
    map: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn bind<T: Real>(tape: &mut Tape<T>, params: &ParamSet<T>) -> Self {
        let map = params
            .params
            .iter()
            .map(|(name, arr)| (name.clone(), tape.leaf(arr.clone())))
            .collect();
        ParamVars { map }
    }

    pub fn get(&self, name: &str) -> Var {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter '{name}'"))
    }

    /// `(name, var)` pairs in sorted-name order — the canonical gradient
    /// ordering.
    pub fn ordered(&self) -> Vec<(String, Var)> {
        self.map.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }
}

/// A model-ready mini-batch.
#[derive(Debug, Clone)]
pub struct BatchInput<T> {
    /// `[B*T, 1, D, H, W]` z-scored short-axis frames.
    pub sax: ArrayD<T>,
    /// `[B*T, 1, H, W]` z-scored four-chamber frames.
    pub ch4: ArrayD<T>,
    /// Per-sample clinical node vectors, length `n_clinical_nodes`.
    pub clinical: Vec<Array1<T>>,
    pub labels: Vec<usize>,
    pub t_frames: usize,
}

fn zscore_stats<T: Real, D: ndarray::Dimension>(a: &ndarray::Array<T, D>) -> (f64, f64) {
    let n = a.len() as f64;
    let mean = a.iter().map(|v| v.to_f64c()).sum::<f64>() / n;
    let var = a
        .iter()
        .map(|v| {
            let d = v.to_f64c() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Assemble a batch: per-sample z-scoring of each modality series, then
/// frame-major layout `[B*T, 1, spatial...]` with the SAX depth axis moved
/// in front of the in-plane axes.
pub fn prepare_batch<T: Real>(samples: &[&Sample<T>], cfg: &ModelConfig) -> Result<BatchInput<T>> {
    if samples.is_empty() {
        return Err(PhnetError::InvalidConfig("empty batch".into()));
    }
    let t_len = cfg.encoder.frames;
    let s0 = samples[0];
    let (h, w, d, tf) = s0.sax.dim();
    let (h4, w4, tf4) = s0.ch4.dim();
    if tf != t_len || tf4 != t_len {
        return Err(PhnetError::ShapeMismatch {
            context: "prepare_batch frames".into(),
            expected: format!("{t_len} frames per series"),
            got: format!("sax {tf}, ch4 {tf4}"),
        });
    }
    for s in samples {
        if s.sax.dim() != s0.sax.dim() || s.ch4.dim() != s0.ch4.dim() {
            return Err(PhnetError::ShapeMismatch {
                context: format!("prepare_batch sample '{}'", s.id),
                expected: format!("sax {:?}, ch4 {:?}", s0.sax.dim(), s0.ch4.dim()),
                got: format!("sax {:?}, ch4 {:?}", s.sax.dim(), s.ch4.dim()),
            });
        }
        if s.clinical.len() != cfg.fusion.n_clinical_nodes {
            return Err(PhnetError::ShapeMismatch {
                context: format!("prepare_batch clinical of '{}'", s.id),
                expected: format!("{} node scalars", cfg.fusion.n_clinical_nodes),
                got: format!("{}", s.clinical.len()),
            });
        }
    }

    let b = samples.len();
    let mut sax = ArrayD::<T>::zeros(IxDyn(&[b * t_len, 1, d, h, w]));
    let mut ch4 = ArrayD::<T>::zeros(IxDyn(&[b * t_len, 1, h4, w4]));
    for (s_idx, s) in samples.iter().enumerate() {
        let (mean, std) = zscore_stats(&s.sax);
        let denom = if std > 0.0 { std } else { 1.0 };
        for t in 0..t_len {
            for dd in 0..d {
                for yy in 0..h {
                    for xx in 0..w {
                        let v = (s.sax[[yy, xx, dd, t]].to_f64c() - mean) / denom;
                        sax[[s_idx * t_len + t, 0, dd, yy, xx]] = T::from_f64c(v);
                    }
                }
            }
        }
        let (mean, std) = zscore_stats(&s.ch4);
        let denom = if std > 0.0 { std } else { 1.0 };
        for t in 0..t_len {
            for yy in 0..h4 {
                for xx in 0..w4 {
                    let v = (s.ch4[[yy, xx, t]].to_f64c() - mean) / denom;
                    ch4[[s_idx * t_len + t, 0, yy, xx]] = T::from_f64c(v);
                }
            }
        }
    }

    Ok(BatchInput {
        sax,
        ch4,
        clinical: samples.iter().map(|s| s.clinical.clone()).collect(),
        labels: samples.iter().map(|s| s.label).collect(),
        t_frames: t_len,
    })
}

/// Whether batch-norm layers use batch statistics (train) or the stored
/// running statistics (eval).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Handles produced by one forward pass.
pub struct ForwardOut<T> {
    /// Mean cross-entropy over the batch (scalar).
    pub loss: Var,
    /// Per-sample logits `[3]`.
    pub logits: Vec<Var>,
    /// Per-sample graph input `H^(0)` node scalars
    /// (`n_image_nodes + n_clinical_nodes`).
    pub nodes: Vec<Var>,
    /// Batch statistics `(layer, mean, var)` captured by train-mode batch
    /// norm, in emission order: sax.bn1, sax.bn2, ch4.bn1, ch4.bn2.
    pub bn_updates: Vec<(String, Array1<T>, Array1<T>)>,
}

fn encoder_vars(pv: &ParamVars, m: &str) -> EncoderVars {
    EncoderVars {
        stage1: StageVars {
            conv_w: pv.get(&format!("{m}.conv1.w")),
            conv_b: pv.get(&format!("{m}.conv1.b")),
            gamma: pv.get(&format!("{m}.bn1.gamma")),
            beta: pv.get(&format!("{m}.bn1.beta")),
        },
        stage2: StageVars {
            conv_w: pv.get(&format!("{m}.conv2.w")),
            conv_b: pv.get(&format!("{m}.conv2.b")),
            gamma: pv.get(&format!("{m}.bn2.gamma")),
            beta: pv.get(&format!("{m}.bn2.beta")),
        },
        token_w: pv.get(&format!("{m}.token.w")),
        token_b: pv.get(&format!("{m}.token.b")),
        wq: pv.get(&format!("{m}.attn.wq")),
        wk: pv.get(&format!("{m}.attn.wk")),
        wv: pv.get(&format!("{m}.attn.wv")),
        wo: pv.get(&format!("{m}.attn.wo")),
    }
}

fn stat1<T: Real>(model: &Model<T>, name: &str) -> Array1<T> {
    model
        .params
        .get_stat(name)
        .clone()
        .into_dimensionality::<Ix1>()
        .expect("running stats are rank 1")
}

/// Run one modality: conv stages over all frames, then per-sample temporal
/// attention. Returns per-sample modality features and BN captures.
fn run_modality<T: Real>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    model: &Model<T>,
    m: &str,
    frames: &ArrayD<T>,
    n_samples: usize,
    t_len: usize,
    phase: Phase,
) -> (Vec<Var>, Vec<(String, Array1<T>, Array1<T>)>) {
    let enc = encoder_vars(pv, m);
    let x = tape.leaf(frames.clone());
    let (m1, v1, m2, v2);
    let (bn1, bn2) = match phase {
        Phase::Train => (BnUse::Train, BnUse::Train),
        Phase::Eval => {
            m1 = stat1(model, &format!("{m}.bn1.running_mean"));
            v1 = stat1(model, &format!("{m}.bn1.running_var"));
            m2 = stat1(model, &format!("{m}.bn2.running_mean"));
            v2 = stat1(model, &format!("{m}.bn2.running_var"));
            (
                BnUse::Eval { mean: &m1, var: &v1 },
                BnUse::Eval { mean: &m2, var: &v2 },
            )
        }
    };
    let (tokens, caps) = encoder::encode_tokens(tape, x, &enc, bn1, bn2);
    let bn_updates = caps
        .into_iter()
        .zip(["bn1", "bn2"])
        .map(|((mean, var), layer)| (format!("{m}.{layer}"), mean, var))
        .collect();

    let feats = (0..n_samples)
        .map(|s| {
            let toks = slice_rows(tape, tokens, s * t_len, t_len);
            encoder::temporal_attend(
                tape,
                toks,
                &enc,
                model.cfg.encoder.n_heads,
                model.cfg.encoder.use_positional_encoding,
            )
        })
        .collect();
    (feats, bn_updates)
}

/// Full batched forward pass: encoders, node projection, graph fusion, and
/// the mean cross-entropy loss.
pub fn forward_batch<T: Real>(
    tape: &mut Tape<T>,
    pv: &ParamVars,
    model: &Model<T>,
    batch: &BatchInput<T>,
    phase: Phase,
) -> Result<ForwardOut<T>> {
    let b = batch.labels.len();
    let t_len = batch.t_frames;
    if batch.sax.shape()[0] != b * t_len || batch.ch4.shape()[0] != b * t_len {
        return Err(PhnetError::ShapeMismatch {
            context: "forward_batch".into(),
            expected: format!("{} frame rows", b * t_len),
            got: format!(
                "sax {}, ch4 {}",
                batch.sax.shape()[0],
                batch.ch4.shape()[0]
            ),
        });
    }

    let (sax_feats, mut bn_updates) =
        run_modality(tape, pv, model, "sax", &batch.sax, b, t_len, phase);
    let (ch4_feats, bn2) = run_modality(tape, pv, model, "ch4", &batch.ch4, b, t_len, phase);
    bn_updates.extend(bn2);

    let nodes_w = pv.get("nodes.w");
    let nodes_b = pv.get("nodes.b");
    let gcn_vars = model.cfg.fusion.use_gcn.then(|| GcnVars {
        l1w: pv.get("gcn.l1.w"),
        l1b: pv.get("gcn.l1.b"),
        l2w: pv.get("gcn.l2.w"),
        l2b: pv.get("gcn.l2.b"),
    });
    let head = HeadVars {
        w1: pv.get("head.w1"),
        b1: pv.get("head.b1"),
        w2: pv.get("head.w2"),
        b2: pv.get("head.b2"),
    };

    let mut logits = Vec::with_capacity(b);
    let mut nodes_out = Vec::with_capacity(b);
    let mut losses = Vec::with_capacity(b);
    for s in 0..b {
        let img = encoder::project_to_nodes(tape, sax_feats[s], ch4_feats[s], nodes_w, nodes_b);
        let clin = tape.leaf(batch.clinical[s].clone().into_dyn());
        let h0 = concat1d(tape, &[img, clin]);
        let gcn = match (&model.a_hat, &gcn_vars) {
            (Some(a), Some(g)) => Some((a, g)),
            _ => None,
        };
        let lg = fusion::fuse_and_classify(tape, h0, gcn.map(|(a, g)| (a, g)), &head);
        losses.push(softmax_cross_entropy(tape, lg, batch.labels[s]));
        logits.push(lg);
        nodes_out.push(h0);
    }
    let mut total = losses[0];
    for &l in &losses[1..] {
        total = add(tape, total, l);
    }
    let loss = scale(tape, total, T::from_f64c(1.0 / b as f64));

    Ok(ForwardOut {
        loss,
        logits,
        nodes: nodes_out,
        bn_updates,
    })
}

/// Class probabilities for a set of samples (eval mode, processed in small
/// chunks to bound memory).
pub fn predict_proba<T: Real>(model: &Model<T>, samples: &[&Sample<T>]) -> Result<Vec<[f64; 3]>> {
    const CHUNK: usize = 4;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(CHUNK) {
        let batch = prepare_batch(chunk, &model.cfg)?;
        let mut tape: Tape<T> = Tape::new();
        let pv = ParamVars::bind(&mut tape, &model.params);
        let fwd = forward_batch(&mut tape, &pv, model, &batch, Phase::Eval)?;
        for lg in &fwd.logits {
            let v = tape.val(*lg).clone().into_dimensionality::<Ix1>().unwrap();
            let p = crate::ops::softmax_vec(&v.view());
            out.push([p[0].to_f64c(), p[1].to_f64c(), p[2].to_f64c()]);
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::{Array3, Array4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Small architecture + random samples for fast model-level tests.
    pub(crate) fn tiny_cfg() -> ModelConfig {
        let mut cfg = ModelConfig::default();
        cfg.encoder.channels = [2, 3];
        cfg.encoder.d_model = 8;
        cfg.encoder.n_heads = 2;
        cfg.encoder.n_image_nodes = 3;
        cfg.encoder.frames = 2;
        cfg.fusion.gcn_widths = [4, 2];
        cfg.fusion.mlp_hidden = 6;
        cfg
    }

    pub(crate) fn tiny_sample(cfg: &ModelConfig, seed: u64, label: usize) -> Sample<f32> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let t = cfg.encoder.frames;
        let sax = Array4::from_shape_simple_fn((12, 12, 4, t), || rng.gen_range(-1.0f32..1.0));
        let ch4 = Array3::from_shape_simple_fn((12, 12, t), || rng.gen_range(-1.0f32..1.0));
        let clinical =
            Array1::from_shape_simple_fn(cfg.fusion.n_clinical_nodes, || rng.gen_range(0.0..1.0));
        Sample {
            id: format!("t{seed}"),
            sax,
            ch4,
            clinical,
            label,
        }
    }

    #[test]
    fn forward_shapes_and_updates() {
        let cfg = tiny_cfg();
        let model = Model::<f32>::new(&cfg, 5).unwrap();
        let s0 = tiny_sample(&cfg, 0, 0);
        let s1 = tiny_sample(&cfg, 1, 2);
        let batch = prepare_batch(&[&s0, &s1], &cfg).unwrap();
        assert_eq!(batch.sax.shape(), &[4, 1, 4, 12, 12]);
        assert_eq!(batch.ch4.shape(), &[4, 1, 12, 12]);

        let mut tape: Tape<f32> = Tape::new();
        let pv = ParamVars::bind(&mut tape, &model.params);
        let fwd = forward_batch(&mut tape, &pv, &model, &batch, Phase::Train).unwrap();
        assert!(tape.val(fwd.loss).iter().all(|v| v.is_finite()));
        assert_eq!(fwd.logits.len(), 2);
        assert_eq!(tape.val(fwd.logits[0]).len(), 3);
        // H0 rows: image nodes + clinical nodes.
        assert_eq!(tape.val(fwd.nodes[0]).len(), cfg.n_nodes());
        // Four train-mode BN captures in emission order.
        let names: Vec<&str> = fwd.bn_updates.iter().map(|(n, _, _)| n.as_str()).collect();
        assert_eq!(names, ["sax.bn1", "sax.bn2", "ch4.bn1", "ch4.bn2"]);

        // Eval mode captures nothing.
        let mut tape2: Tape<f32> = Tape::new();
        let pv2 = ParamVars::bind(&mut tape2, &model.params);
        let fwd2 = forward_batch(&mut tape2, &pv2, &model, &batch, Phase::Eval).unwrap();
        assert!(fwd2.bn_updates.is_empty());
        assert!(tape2.val(fwd2.loss).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = tiny_cfg();
        let model = Model::<f32>::new(&cfg, 9).unwrap();
        let s0 = tiny_sample(&cfg, 3, 1);
        let batch = prepare_batch(&[&s0], &cfg).unwrap();
        let run = || {
            let mut tape: Tape<f32> = Tape::new();
            let pv = ParamVars::bind(&mut tape, &model.params);
            let fwd = forward_batch(&mut tape, &pv, &model, &batch, Phase::Train).unwrap();
            tape.val(fwd.loss).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zscore_normalizes_each_modality() {
        let cfg = tiny_cfg();
        let s0 = tiny_sample(&cfg, 7, 0);
        let batch = prepare_batch(&[&s0], &cfg).unwrap();
        for series in [&batch.sax, &batch.ch4] {
            let n = series.len() as f64;
            let mean: f64 = series.iter().map(|v| *v as f64).sum::<f64>() / n;
            let var: f64 = series
                .iter()
                .map(|v| (*v as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            assert!(mean.abs() < 1e-4, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }

    #[test]
    fn shape_contract_violations_are_typed_errors() {
        let cfg = tiny_cfg();
        let good = tiny_sample(&cfg, 1, 0);

        let mut short_clin = good.clone();
        short_clin.clinical = Array1::zeros(7);
        assert!(matches!(
            prepare_batch(&[&short_clin], &cfg),
            Err(PhnetError::ShapeMismatch { .. })
        ));

        let mut bad_frames = good.clone();
        bad_frames.sax = Array4::zeros((12, 12, 4, 3));
        bad_frames.ch4 = Array3::zeros((12, 12, 3));
        assert!(matches!(
            prepare_batch(&[&bad_frames], &cfg),
            Err(PhnetError::ShapeMismatch { .. })
        ));

        let mut mixed = good.clone();
        mixed.sax = Array4::zeros((10, 12, 4, 2));
        assert!(matches!(
            prepare_batch(&[&good, &mixed], &cfg),
            Err(PhnetError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn no_gcn_variant_runs_end_to_end() {
        let mut cfg = tiny_cfg();
        cfg.fusion.use_gcn = false;
        let model = Model::<f32>::new(&cfg, 2).unwrap();
        assert!(model.a_hat.is_none());
        let s0 = tiny_sample(&cfg, 4, 1);
        let p = predict_proba(&model, &[&s0]).unwrap();
        assert_eq!(p.len(), 1);
        let sum: f64 = p[0].iter().sum();
        assert!((sum - 1.0).abs() < 1e-5);
    }

    #[test]
    fn predict_proba_matches_forward_eval() {
        let cfg = tiny_cfg();
        let model = Model::<f32>::new(&cfg, 11).unwrap();
        let samples: Vec<Sample<f32>> = (0..5).map(|i| tiny_sample(&cfg, 100 + i, 0)).collect();
        let refs: Vec<&Sample<f32>> = samples.iter().collect();
        let probs = predict_proba(&model, &refs).unwrap();
        assert_eq!(probs.len(), 5);
        // Chunked prediction must equal one-at-a-time prediction.
        for (i, s) in refs.iter().enumerate() {
            let single = predict_proba(&model, &[s]).unwrap();
            for k in 0..3 {
                assert!((single[0][k] - probs[i][k]).abs() < 1e-6);
            }
        }
    }
}
