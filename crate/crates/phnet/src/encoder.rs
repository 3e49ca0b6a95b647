//! Dual-stage convolutional encoder with temporal self-attention.
//!
//! Each imaging modality runs the same recipe, differing only in the
//! dimensionality of its convolutions (3-D for the short-axis volume,
//! 2-D for the four-chamber plane):
//!
//! 1. every retained frame passes two `conv -> batchnorm -> ReLU ->
//!    2x maxpool` stages and a global average pool, then a linear map to a
//!    `d_model`-wide frame token;
//! 2. the `T` frame tokens of one sample attend to each other with
//!    multi-head self-attention. Sinusoidal positional encodings are added
//!    to the attention inputs only; the residual connection adds the raw
//!    (pre-encoding) tokens. Mean-pooling over frames yields the modality
//!    feature;
//! 3. the two modality features are concatenated and projected (a plain
//!    linear map, no activation) to the image-side graph nodes.

use ndarray::{Array1, Array2};

use crate::ops::*;
use crate::real::Real;
use crate::tape::{Tape, Var};

/// Batch-norm epsilon shared by train and eval modes.
pub const BN_EPS: f64 = 1e-5;

/// Tape handles of one `conv -> bn` stage.
#[derive(Debug, Clone, Copy)]
pub struct StageVars {
    pub conv_w: Var,
    pub conv_b: Var,
    pub gamma: Var,
    pub beta: Var,
}

/// Tape handles of one modality encoder.
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub stage1: StageVars,
    pub stage2: StageVars,
    pub token_w: Var,
    pub token_b: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
}

/// Batch-norm behaviour for one layer: training mode normalizes with batch
/// statistics (and reports them so the caller can fold the running stats);
/// eval mode applies the stored running statistics.
pub enum BnUse<'a, T> {
    Train,
    Eval {
        mean: &'a Array1<T>,
        var: &'a Array1<T>,
    },
}

/// Batch statistics captured by a training-mode batch-norm layer.
pub type BnCapture<T> = (Array1<T>, Array1<T>);

/// One convolution stage: conv (same padding) + bias, batch norm, ReLU,
/// 2x max pooling. Rank-5 inputs use 3-D convolution, rank-4 inputs 2-D.
pub fn conv_stage<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    s: &StageVars,
    bn: BnUse<'_, T>,
) -> (Var, Option<BnCapture<T>>) {
    let ndim = tape.val(x).ndim();
    let y = match ndim {
        5 => conv3d(tape, x, s.conv_w),
        4 => conv2d(tape, x, s.conv_w),
        r => panic!("conv_stage expects rank 4 or 5 input, got rank {r}"),
    };
    let y = add_bias_channel(tape, y, s.conv_b);
    let eps = T::from_f64c(BN_EPS);
    let (y, cap) = match bn {
        BnUse::Train => {
            let (y, mean, var) = batchnorm_train(tape, y, s.gamma, s.beta, eps);
            (y, Some((mean, var)))
        }
        BnUse::Eval { mean, var } => {
            (batchnorm_eval(tape, y, s.gamma, s.beta, mean, var, eps), None)
        }
    };
    let y = relu(tape, y);
    let y = match ndim {
        5 => maxpool3d(tape, y),
        _ => maxpool2d(tape, y),
    };
    (y, cap)
}

/// Encode a batch of frames `[N, 1, spatial...]` into tokens `[N, d_model]`.
/// Returns the batch-norm captures (stage 1 then stage 2) in train mode.
pub fn encode_tokens<T: Real>(
    tape: &mut Tape<T>,
    frames: Var,
    enc: &EncoderVars,
    bn1: BnUse<'_, T>,
    bn2: BnUse<'_, T>,
) -> (Var, Vec<BnCapture<T>>) {
    let (y, c1) = conv_stage(tape, frames, &enc.stage1, bn1);
    let (y, c2) = conv_stage(tape, y, &enc.stage2, bn2);
    let pooled = global_avg_pool(tape, y); // [N, c2]
    let tokens = linear(tape, pooled, enc.token_w, enc.token_b); // [N, d]
    (tokens, c1.into_iter().chain(c2).collect())
}

/// Sinusoidal positional encodings `[t_len, d]`:
/// `pe[t, 2i] = sin(t / 10000^(2i/d))`, `pe[t, 2i+1] = cos(...)`.
pub fn positional_encoding<T: Real>(t_len: usize, d: usize) -> Array2<T> {
    Array2::from_shape_fn((t_len, d), |(t, j)| {
        let i = j / 2;
        let angle = t as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
        T::from_f64c(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Multi-head self-attention over one sample's frame tokens `[T, d]`,
/// followed by a residual connection to the raw tokens and mean-pooling
/// over frames. Returns the modality feature `[d]`.
pub fn temporal_attend<T: Real>(
    tape: &mut Tape<T>,
    tokens: Var,
    enc: &EncoderVars,
    n_heads: usize,
    use_pe: bool,
) -> Var {
    let shape = tape.val(tokens).shape().to_vec();
    assert_eq!(shape.len(), 2, "tokens must be [T, d]");
    let (t_len, d) = (shape[0], shape[1]);
    assert_eq!(d % n_heads, 0, "d_model must divide into heads");
    let dk = d / n_heads;

    // Positional information goes into Q/K/V only; the residual path below
    // sees the raw tokens.
    let xin = if use_pe {
        let pe = positional_encoding::<T>(t_len, d).into_dyn();
        add_const(tape, tokens, &pe)
    } else {
        tokens
    };
    let q = matmul(tape, xin, enc.wq);
    let k = matmul(tape, xin, enc.wk);
    let v = matmul(tape, xin, enc.wv);

    let inv_sqrt_dk = T::from_f64c(1.0 / (dk as f64).sqrt());
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = slice_cols(tape, q, h * dk, dk);
        let kh = slice_cols(tape, k, h * dk, dk);
        let vh = slice_cols(tape, v, h * dk, dk);
        let kt = transpose2(tape, kh);
        let scores = matmul(tape, qh, kt);
        let scores = scale(tape, scores, inv_sqrt_dk);
        let attn = softmax_rows(tape, scores);
        heads.push(matmul(tape, attn, vh));
    }
    let o = concat_cols(tape, &heads);
    let o = matmul(tape, o, enc.wo);
    let res = add(tape, tokens, o);
    mean_axis0(tape, res)
}

/// Concatenate the two modality features and project them to the image-side
/// node scalars (linear, no activation). Returns `[n_image_nodes]`.
pub fn project_to_nodes<T: Real>(
    tape: &mut Tape<T>,
    sax_feat: Var,
    ch4_feat: Var,
    w: Var,
    b: Var,
) -> Var {
    let cat = concat1d(tape, &[sax_feat, ch4_feat]);
    let width = tape.val(cat).len();
    let n_out = tape.val(b).len();
    let row = reshape(tape, cat, &[1, width]);
    let y = linear(tape, row, w, b);
    reshape(tape, y, &[n_out])
}
