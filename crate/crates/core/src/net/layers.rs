//! Building blocks with hand-written backward passes. Activations are
//! matrices with one row per position and one column per feature.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::params::{BnBatchStats, BN_EPS};

/// Output length of a same-padded strided axis.
pub(crate) fn strided_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Patches of a `[W, F_in * Cin]` input (frequency-major, channel-minor)
/// as rows of a `[W * F_out, Cin * K * K]` matrix. Time has stride 1,
/// frequency `stride`; output frequency `fo` is centred on input `stride * fo`.
pub(crate) fn im2col(x: ArrayView2<f64>, cin: usize, k: usize, stride: usize) -> Array2<f64> {
    let (w, width) = x.dim();
    let f_in = width / cin;
    let f_out = strided_len(f_in, stride);
    let pad = (k / 2) as isize;
    let mut cols = Array2::zeros((w * f_out, cin * k * k));
    for t in 0..w {
        for fo in 0..f_out {
            let mut row = cols.row_mut(t * f_out + fo);
            for dt in 0..k {
                let ti = t as isize + dt as isize - pad;
                if ti < 0 || ti >= w as isize {
                    continue;
                }
                for df in 0..k {
                    let fi = (stride * fo) as isize + df as isize - pad;
                    if fi < 0 || fi >= f_in as isize {
                        continue;
                    }
                    for ci in 0..cin {
                        row[(ci * k + dt) * k + df] = x[[ti as usize, fi as usize * cin + ci]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im(
    dcols: ArrayView2<f64>,
    w: usize,
    f_in: usize,
    cin: usize,
    k: usize,
    stride: usize,
) -> Array2<f64> {
    let f_out = strided_len(f_in, stride);
    let pad = (k / 2) as isize;
    let mut dx = Array2::zeros((w, f_in * cin));
    for t in 0..w {
        for fo in 0..f_out {
            let row = dcols.row(t * f_out + fo);
            for dt in 0..k {
                let ti = t as isize + dt as isize - pad;
                if ti < 0 || ti >= w as isize {
                    continue;
                }
                for df in 0..k {
                    let fi = (stride * fo) as isize + df as isize - pad;
                    if fi < 0 || fi >= f_in as isize {
                        continue;
                    }
                    for ci in 0..cin {
                        dx[[ti as usize, fi as usize * cin + ci]] += row[(ci * k + dt) * k + df];
                    }
                }
            }
        }
    }
    dx
}

pub(crate) fn add_bias(x: &mut Array2<f64>, bias: &[f64]) {
    let b = ArrayView1::from(bias);
    for mut row in x.rows_mut() {
        row += &b;
    }
}

pub(crate) fn column_sums(x: ArrayView2<f64>) -> Vec<f64> {
    x.sum_axis(Axis(0)).to_vec()
}

/// Batch norm with fixed statistics, per column.
pub(crate) struct BnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn bn_forward(
    x: ArrayView2<f64>,
    scale: &[f64],
    shift: &[f64],
    mean: &[f64],
    var: &[f64],
) -> (Array2<f64>, BnCache) {
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = x.to_owned();
    for mut row in xhat.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean[j]) * inv_std[j];
        }
    }
    let mut y = xhat.clone();
    for mut row in y.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = *v * scale[j] + shift[j];
        }
    }
    (y, BnCache { xhat, inv_std })
}

/// Returns `(dx, dscale, dshift)`.
pub(crate) fn bn_backward(dy: ArrayView2<f64>, cache: &BnCache, scale: &[f64]) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
    let dshift = column_sums(dy);
    let dscale = column_sums((&dy * &cache.xhat).view());
    let mut dx = dy.to_owned();
    for mut row in dx.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= scale[j] * cache.inv_std[j];
        }
    }
    (dx, dscale, dshift)
}

pub(crate) fn batch_stats(x: ArrayView2<f64>) -> BnBatchStats {
    BnBatchStats {
        sum: column_sums(x),
        sum_sq: column_sums(x.mapv(|v| v * v).view()),
        count: x.nrows(),
    }
}

/// ReLU clipped at this ceiling.
pub(crate) const RELU_CEILING: f64 = 20.0;

pub(crate) fn clipped_relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.clamp(0.0, RELU_CEILING))
}

pub(crate) fn clipped_relu_backward(dy: &mut Array2<f64>, pre: &Array2<f64>) {
    ndarray::Zip::from(dy).and(pre).for_each(|d, &p| {
        if p <= 0.0 || p >= RELU_CEILING {
            *d = 0.0;
        }
    });
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one LSTM direction over a sequence.
pub(crate) struct LstmCache {
    pub x: Array2<f64>,
    /// Activated gates `[L, 4H]`: input, forget, cell, output.
    pub gates: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
    pub reverse: bool,
}

fn order(len: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..len).rev())
    } else {
        Box::new(0..len)
    }
}

/// Runs one direction; `reverse` processes frames last to first.
pub(crate) fn lstm_forward(
    x: ArrayView2<f64>,
    w_x: ArrayView2<f64>,
    w_h: ArrayView2<f64>,
    bias: &[f64],
    reverse: bool,
) -> LstmCache {
    let len = x.nrows();
    let hidden = w_h.ncols();
    let mut z = x.dot(&w_x.t());
    add_bias(&mut z, bias);
    let mut gates = Array2::zeros((len, 4 * hidden));
    let mut c = Array2::zeros((len, hidden));
    let mut tanh_c = Array2::zeros((len, hidden));
    let mut h = Array2::zeros((len, hidden));
    let mut h_prev = Array1::<f64>::zeros(hidden);
    let mut c_prev = Array1::<f64>::zeros(hidden);
    for t in order(len, reverse) {
        let pre = &z.row(t) + &w_h.dot(&h_prev);
        let mut g = gates.row_mut(t);
        for j in 0..4 * hidden {
            g[j] = if (2 * hidden..3 * hidden).contains(&j) {
                pre[j].tanh()
            } else {
                sigmoid(pre[j])
            };
        }
        for j in 0..hidden {
            let (i, f, gg, o) = (g[j], g[hidden + j], g[2 * hidden + j], g[3 * hidden + j]);
            let cell = f * c_prev[j] + i * gg;
            let tc = cell.tanh();
            c[[t, j]] = cell;
            tanh_c[[t, j]] = tc;
            h[[t, j]] = o * tc;
        }
        h_prev = h.row(t).to_owned();
        c_prev = c.row(t).to_owned();
    }
    LstmCache {
        x: x.to_owned(),
        gates,
        c,
        tanh_c,
        h,
        reverse,
    }
}

pub(crate) struct LstmGrads {
    pub dx: Array2<f64>,
    pub dw_x: Array2<f64>,
    pub dw_h: Array2<f64>,
    pub dbias: Vec<f64>,
}

/// Backpropagation through time for one direction, given the loss
/// gradient on every output `h`.
pub(crate) fn lstm_backward(
    cache: &LstmCache,
    dh_out: ArrayView2<f64>,
    w_x: ArrayView2<f64>,
    w_h: ArrayView2<f64>,
) -> LstmGrads {
    let (len, hidden) = cache.h.dim();
    let steps: Vec<usize> = order(len, cache.reverse).collect();
    let mut dz = Array2::zeros((len, 4 * hidden));
    // h and c of the previous step in processing order, zero at the start
    let mut h_prev = Array2::zeros((len, hidden));
    let mut c_prev = Array2::zeros((len, hidden));
    for pair in steps.windows(2) {
        h_prev.row_mut(pair[1]).assign(&cache.h.row(pair[0]));
        c_prev.row_mut(pair[1]).assign(&cache.c.row(pair[0]));
    }
    let mut dh_next = Array1::<f64>::zeros(hidden);
    let mut dc_next = Array1::<f64>::zeros(hidden);
    for &t in steps.iter().rev() {
        let g = cache.gates.row(t);
        let mut row = dz.row_mut(t);
        for j in 0..hidden {
            let (i, f, gg, o) = (g[j], g[hidden + j], g[2 * hidden + j], g[3 * hidden + j]);
            let tc = cache.tanh_c[[t, j]];
            let dh = dh_out[[t, j]] + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            row[j] = dc * gg * i * (1.0 - i);
            row[hidden + j] = dc * c_prev[[t, j]] * f * (1.0 - f);
            row[2 * hidden + j] = dc * i * (1.0 - gg * gg);
            row[3 * hidden + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        dh_next = w_h.t().dot(&row);
    }
    LstmGrads {
        dx: dz.dot(&w_x),
        dw_x: dz.t().dot(&cache.x),
        dw_h: dz.t().dot(&h_prev),
        dbias: column_sums(dz.view()),
    }
}

/// Concatenates the two directions' outputs, `[L, 2H]`.
pub(crate) fn concat_directions(fwd: &Array2<f64>, bwd: &Array2<f64>) -> Array2<f64> {
    let (len, hidden) = fwd.dim();
    let mut out = Array2::zeros((len, 2 * hidden));
    out.slice_mut(s![.., ..hidden]).assign(fwd);
    out.slice_mut(s![.., hidden..]).assign(bwd);
    out
}
