//! The convolutional-recurrent network.
//!
//! Two convolutions (3x3, stride 2 along frequency only) with batch norm,
//! a clipped ReLU and dropout; optional frame doubling; two bidirectional
//! LSTM layers each followed by batch norm; dropout; a linear projection
//! and softmax over the vocabulary. Every layer has an exact backward pass.
//!
//! Batch norm always normalizes with the running statistics, so a sample's
//! output never depends on the other members of its batch. The trainer
//! refreshes the running statistics from batch statistics between updates.

mod checkpoint;
mod grid;
mod layers;
mod optim;
mod params;

use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{Spectrogram, BINS};
use layers::{BnCache, LstmCache};

pub use checkpoint::{Checkpoint, CheckpointError, TrainProgress, CHECKPOINT_VERSION};
pub use grid::PosteriorGrid;
pub use optim::{clip_grad_norm, lr_at_epoch, sgd_nesterov_step, LrSchedule, Velocity, MOMENTUM};
pub use params::{BnBatchStats, Gradients, Layout, ModelParams, Tensor, BN_EPS};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("feature dimension {0} is odd and cannot be split in half")]
    OddFeatureDim(usize),
    #[error("cache was computed with parameter version {cached}, parameters are now at {current}")]
    StaleCache { cached: u64, current: u64 },
    #[error("gradient for `{0}` is not finite")]
    NonFiniteGradient(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub conv_filters: usize,
    pub conv_kernel: usize,
    pub conv_freq_stride: usize,
    pub conv_layers: usize,
    pub recurrent_layers: usize,
    pub hidden_units: usize,
    pub dropout_p: f64,
    pub frame_doubling: bool,
    pub vocab_size: usize,
    pub input_bins: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv_filters: 16,
            conv_kernel: 3,
            conv_freq_stride: 2,
            conv_layers: 2,
            recurrent_layers: 2,
            hidden_units: 64,
            dropout_p: 0.1,
            frame_doubling: true,
            vocab_size: 2,
            input_bins: BINS,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidConfig(m.to_string()));
        if self.hidden_units == 0 {
            return bad("hidden_units must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2");
        }
        if self.conv_kernel == 0 || self.conv_kernel % 2 == 0 {
            return bad("conv_kernel must be odd");
        }
        if self.conv_freq_stride == 0 || self.conv_filters == 0 || self.input_bins == 0 {
            return bad("conv_freq_stride, conv_filters and input_bins must be positive");
        }
        if self.conv_layers == 0 || self.recurrent_layers == 0 {
            return bad("at least one convolutional and one recurrent layer are required");
        }
        if self.frame_doubling && self.conv_output_dim() % 2 == 1 {
            return Err(NetError::OddFeatureDim(self.conv_output_dim()));
        }
        Ok(())
    }

    /// Frequency positions after the convolutional block.
    pub fn conv_output_bins(&self) -> usize {
        (0..self.conv_layers).fold(self.input_bins, |f, _| layers::strided_len(f, self.conv_freq_stride))
    }

    /// Features per frame after flattening the convolutional output.
    pub fn conv_output_dim(&self) -> usize {
        self.conv_output_bins() * self.conv_filters
    }

    pub fn recurrent_input_dim(&self) -> usize {
        if self.frame_doubling {
            self.conv_output_dim() / 2
        } else {
            self.conv_output_dim()
        }
    }

    /// Posterior frames produced for `w` spectrogram frames.
    pub fn output_frames(&self, w: usize) -> usize {
        if self.frame_doubling {
            2 * w
        } else {
            w
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; activations kept for the backward pass.
    Train,
    Eval,
}

/// Splits every row in half: row `i` becomes rows `2i` (first half) and
/// `2i + 1` (second half).
pub fn frame_double(features: &Array2<f64>) -> Result<Array2<f64>, NetError> {
    let (l, f) = features.dim();
    if f % 2 == 1 {
        return Err(NetError::OddFeatureDim(f));
    }
    let flat: Vec<f64> = features.iter().copied().collect();
    Ok(Array2::from_shape_vec((2 * l, f / 2), flat).expect("same element count"))
}

/// Inverse of [`frame_double`].
pub fn frame_undouble(frames: &Array2<f64>) -> Result<Array2<f64>, NetError> {
    let (l2, half) = frames.dim();
    if l2 % 2 == 1 {
        return Err(NetError::ShapeMismatch(format!("{l2} frames cannot be paired")));
    }
    let flat: Vec<f64> = frames.iter().copied().collect();
    Ok(Array2::from_shape_vec((l2 / 2, 2 * half), flat).expect("same element count"))
}

struct ConvCache {
    cols: Array2<f64>,
    bn: BnCache,
    pre_act: Array2<f64>,
    mask: Option<Array2<f64>>,
    f_in: usize,
    cin: usize,
}

struct RnnCache {
    fwd: LstmCache,
    bwd: LstmCache,
    bn: BnCache,
}

/// Activations of a training-mode forward pass.
pub struct ForwardCache {
    version: u64,
    frames: usize,
    conv: Vec<ConvCache>,
    rnn: Vec<RnnCache>,
    final_mask: Option<Array2<f64>>,
    fc_input: Array2<f64>,
    /// Batch-norm input statistics of this sample, conv layers first.
    pub bn_stats: Vec<BnBatchStats>,
}

fn view<'a>(t: &'a Tensor) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape(t.matrix_dims(), &t.data).expect("tensor shape")
}

fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Option<Array2<f64>> {
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < p { 0.0 } else { keep }))
}

fn check_shapes(params: &ModelParams, config: &ModelConfig) -> Result<(), NetError> {
    if params.matches(config) {
        Ok(())
    } else {
        Err(NetError::ShapeMismatch("parameters do not match the model config".into()))
    }
}

/// Runs the network on a spectrogram. In [`Mode::Train`] dropout masks
/// are drawn from `rng_seed` and the returned cache feeds [`backward`];
/// in [`Mode::Eval`] the result is a pure function of the inputs.
pub fn forward(
    params: &ModelParams,
    config: &ModelConfig,
    spec: &Spectrogram,
    mode: Mode,
    rng_seed: u64,
) -> Result<(PosteriorGrid, Option<ForwardCache>), NetError> {
    let (logits, cache) = forward_features(params, config, &spec.frames, mode, rng_seed)?;
    Ok((PosteriorGrid::from_logits(&logits), cache))
}

/// Eval-mode shorthand.
pub fn infer(params: &ModelParams, config: &ModelConfig, spec: &Spectrogram) -> Result<PosteriorGrid, NetError> {
    Ok(forward(params, config, spec, Mode::Eval, 0)?.0)
}

/// [`forward`] on a raw `[W, bins]` matrix, returning pre-softmax scores.
pub fn forward_features(
    params: &ModelParams,
    config: &ModelConfig,
    input: &Array2<f64>,
    mode: Mode,
    rng_seed: u64,
) -> Result<(Array2<f64>, Option<ForwardCache>), NetError> {
    config.validate()?;
    check_shapes(params, config)?;
    let (w, bins) = input.dim();
    if bins != config.input_bins {
        return Err(NetError::ShapeMismatch(format!(
            "input has {bins} bins, model expects {}",
            config.input_bins
        )));
    }
    if w == 0 {
        return Err(NetError::ShapeMismatch("input has no frames".into()));
    }
    let train = mode == Mode::Train;
    let p = if train { config.dropout_p } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let layout = Layout::new(config);
    let t = params.tensors();
    let run = params.running();
    let (c, k, stride) = (config.conv_filters, config.conv_kernel, config.conv_freq_stride);
    let mut stats = Vec::new();

    let mut x = input.clone();
    let mut cin = 1;
    let mut conv_caches = Vec::new();
    for l in 0..config.conv_layers {
        let base = layout.conv(l);
        let f_in = x.ncols() / cin;
        let f_out = layers::strided_len(f_in, stride);
        let cols = layers::im2col(x.view(), cin, k, stride);
        let weight = ArrayView2::from_shape((c, cin * k * k), &t[base].data).expect("conv weight");
        let mut z = cols.dot(&weight.t());
        layers::add_bias(&mut z, &t[base + 1].data);
        stats.push(layers::batch_stats(z.view()));
        let r = layout.conv_running(l);
        let (y, bn) = layers::bn_forward(z.view(), &t[base + 2].data, &t[base + 3].data, &run[r].data, &run[r + 1].data);
        let mut a = layers::clipped_relu(&y);
        let mask = dropout_mask(&mut rng, a.dim(), p);
        if let Some(m) = &mask {
            a *= m;
        }
        x = a.into_shape_with_order((w, f_out * c)).expect("flatten");
        conv_caches.push(ConvCache {
            cols,
            bn,
            pre_act: y,
            mask,
            f_in,
            cin,
        });
        cin = c;
    }

    if config.frame_doubling {
        x = frame_double(&x)?;
    }

    let mut rnn_caches = Vec::new();
    for r in 0..config.recurrent_layers {
        let fi = layout.lstm(r, 0);
        let bi = layout.lstm(r, 1);
        let fwd = layers::lstm_forward(x.view(), view(&t[fi]), view(&t[fi + 1]), &t[fi + 2].data, false);
        let bwd = layers::lstm_forward(x.view(), view(&t[bi]), view(&t[bi + 1]), &t[bi + 2].data, true);
        let h = layers::concat_directions(&fwd.h, &bwd.h);
        stats.push(layers::batch_stats(h.view()));
        let g = layout.rnn_bn(r);
        let ri = layout.rnn_running(r);
        let (y, bn) = layers::bn_forward(h.view(), &t[g].data, &t[g + 1].data, &run[ri].data, &run[ri + 1].data);
        x = y;
        rnn_caches.push(RnnCache { fwd, bwd, bn });
    }

    let final_mask = dropout_mask(&mut rng, x.dim(), p);
    if let Some(m) = &final_mask {
        x *= m;
    }
    let fc = layout.fc();
    let mut logits = x.dot(&view(&t[fc]).t());
    layers::add_bias(&mut logits, &t[fc + 1].data);

    let cache = train.then(|| ForwardCache {
        version: params.version(),
        frames: w,
        conv: conv_caches,
        rnn: rnn_caches,
        final_mask,
        fc_input: x,
        bn_stats: stats,
    });
    Ok((logits, cache))
}

/// Exact parameter gradients given the loss gradient on the pre-softmax
/// scores (for CTC, [`crate::ctc::ctc_grad`]).
pub fn backward(
    params: &ModelParams,
    config: &ModelConfig,
    cache: &ForwardCache,
    grad_logits: &Array2<f64>,
) -> Result<Gradients, NetError> {
    if cache.version != params.version() {
        return Err(NetError::StaleCache {
            cached: cache.version,
            current: params.version(),
        });
    }
    let expected = (cache.fc_input.nrows(), config.vocab_size);
    if grad_logits.dim() != expected {
        return Err(NetError::ShapeMismatch(format!(
            "upstream gradient is {:?}, expected {expected:?}",
            grad_logits.dim()
        )));
    }
    let layout = Layout::new(config);
    let t = params.tensors();
    let mut grads = Gradients::zeros_like(params);
    let store = |grads: &mut Gradients, i: usize, values: &[f64]| {
        for (g, v) in grads.tensors[i].iter_mut().zip(values) {
            *g += v;
        }
    };

    let fc = layout.fc();
    let dw = grad_logits.t().dot(&cache.fc_input);
    store(&mut grads, fc, dw.as_slice().expect("standard layout"));
    store(&mut grads, fc + 1, &layers::column_sums(grad_logits.view()));
    let mut dx = grad_logits.dot(&view(&t[fc]));
    if let Some(m) = &cache.final_mask {
        dx *= m;
    }

    for r in (0..config.recurrent_layers).rev() {
        let rc = &cache.rnn[r];
        let g = layout.rnn_bn(r);
        let (dh, dscale, dshift) = layers::bn_backward(dx.view(), &rc.bn, &t[g].data);
        store(&mut grads, g, &dscale);
        store(&mut grads, g + 1, &dshift);
        let hidden = config.hidden_units;
        let mut dinput: Option<Array2<f64>> = None;
        for (dir, lc, cols) in [(0, &rc.fwd, s![.., ..hidden]), (1, &rc.bwd, s![.., hidden..])] {
            let i = layout.lstm(r, dir);
            let lg = layers::lstm_backward(lc, dh.slice(cols), view(&t[i]), view(&t[i + 1]));
            store(&mut grads, i, lg.dw_x.as_slice().expect("standard layout"));
            store(&mut grads, i + 1, lg.dw_h.as_slice().expect("standard layout"));
            store(&mut grads, i + 2, &lg.dbias);
            dinput = Some(match dinput {
                Some(acc) => acc + lg.dx,
                None => lg.dx,
            });
        }
        dx = dinput.expect("two directions");
    }

    if config.frame_doubling {
        dx = frame_undouble(&dx)?;
    }

    let (c, k, stride) = (config.conv_filters, config.conv_kernel, config.conv_freq_stride);
    for l in (0..config.conv_layers).rev() {
        let cc = &cache.conv[l];
        let base = layout.conv(l);
        let f_out = layers::strided_len(cc.f_in, stride);
        let mut da = dx.into_shape_with_order((cache.frames * f_out, c)).expect("unflatten");
        if let Some(m) = &cc.mask {
            da *= m;
        }
        layers::clipped_relu_backward(&mut da, &cc.pre_act);
        let (dz, dscale, dshift) = layers::bn_backward(da.view(), &cc.bn, &t[base + 2].data);
        store(&mut grads, base + 2, &dscale);
        store(&mut grads, base + 3, &dshift);
        let dw = dz.t().dot(&cc.cols);
        store(&mut grads, base, dw.as_slice().expect("standard layout"));
        store(&mut grads, base + 1, &layers::column_sums(dz.view()));
        if l == 0 {
            break;
        }
        let weight = ArrayView2::from_shape((c, cc.cin * k * k), &t[base].data).expect("conv weight");
        let dcols = dz.dot(&weight);
        dx = layers::col2im(dcols.view(), cache.frames, cc.f_in, cc.cin, k, stride);
    }
    Ok(grads)
}
