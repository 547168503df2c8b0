use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;

/// Batch-norm denominator offset.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn filled(name: String, shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            name,
            shape,
            data: vec![value; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows and columns of the tensor viewed as a matrix over its first axis.
    pub(crate) fn matrix_dims(&self) -> (usize, usize) {
        let rows = self.shape[0];
        (rows, self.data.len() / rows.max(1))
    }
}

/// Positions of each layer's tensors in [`ModelParams::tensors`].
///
/// Per conv layer: weight `[C, Cin, K, K]`, bias, BN scale, BN shift.
/// Per recurrent layer: forward `w_x [4H, D]`, `w_h [4H, H]`, `b [4H]`,
/// the same for the backward direction, then BN scale and shift over the
/// `2H` outputs. Last the output projection `[V, 2H]` and its bias. Gate
/// blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    conv_layers: usize,
    recurrent_layers: usize,
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        Layout {
            conv_layers: config.conv_layers,
            recurrent_layers: config.recurrent_layers,
        }
    }

    pub fn conv(&self, layer: usize) -> usize {
        4 * layer
    }

    /// First tensor of one direction (`0` forward, `1` backward).
    pub fn lstm(&self, layer: usize, direction: usize) -> usize {
        4 * self.conv_layers + 8 * layer + 3 * direction
    }

    pub fn rnn_bn(&self, layer: usize) -> usize {
        4 * self.conv_layers + 8 * layer + 6
    }

    pub fn fc(&self) -> usize {
        4 * self.conv_layers + 8 * self.recurrent_layers
    }

    /// Running mean index in [`ModelParams::running`]; the variance follows.
    pub fn conv_running(&self, layer: usize) -> usize {
        2 * layer
    }

    pub fn rnn_running(&self, layer: usize) -> usize {
        2 * self.conv_layers + 2 * layer
    }
}

enum Init {
    Uniform { fan_in: usize },
    Constant(f64),
}

struct TensorSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
    running: bool,
}

fn tensor_specs(config: &ModelConfig) -> Vec<TensorSpec> {
    let mut specs = Vec::new();
    let mut add = |name: String, shape: Vec<usize>, init: Init, running: bool| {
        specs.push(TensorSpec { name, shape, init, running })
    };
    let (c, k) = (config.conv_filters, config.conv_kernel);
    for l in 0..config.conv_layers {
        let cin = if l == 0 { 1 } else { c };
        let fan_in = cin * k * k;
        add(format!("conv{l}.weight"), vec![c, cin, k, k], Init::Uniform { fan_in }, false);
        add(format!("conv{l}.bias"), vec![c], Init::Uniform { fan_in }, false);
        add(format!("conv{l}.bn.scale"), vec![c], Init::Constant(1.0), false);
        add(format!("conv{l}.bn.shift"), vec![c], Init::Constant(0.0), false);
        add(format!("conv{l}.bn.mean"), vec![c], Init::Constant(0.0), true);
        add(format!("conv{l}.bn.var"), vec![c], Init::Constant(1.0), true);
    }
    let h = config.hidden_units;
    let mut input = config.recurrent_input_dim();
    for r in 0..config.recurrent_layers {
        for dir in ["fwd", "bwd"] {
            let fan_in = input + h;
            add(format!("lstm{r}.{dir}.w_x"), vec![4 * h, input], Init::Uniform { fan_in }, false);
            add(format!("lstm{r}.{dir}.w_h"), vec![4 * h, h], Init::Uniform { fan_in }, false);
            add(format!("lstm{r}.{dir}.bias"), vec![4 * h], Init::Uniform { fan_in }, false);
        }
        add(format!("lstm{r}.bn.scale"), vec![2 * h], Init::Constant(1.0), false);
        add(format!("lstm{r}.bn.shift"), vec![2 * h], Init::Constant(0.0), false);
        add(format!("lstm{r}.bn.mean"), vec![2 * h], Init::Constant(0.0), true);
        add(format!("lstm{r}.bn.var"), vec![2 * h], Init::Constant(1.0), true);
        input = 2 * h;
    }
    let fan_in = 2 * h;
    add("fc.weight".into(), vec![config.vocab_size, 2 * h], Init::Uniform { fan_in }, false);
    add("fc.bias".into(), vec![config.vocab_size], Init::Uniform { fan_in }, false);
    specs
}

/// Trainable tensors plus batch-norm running statistics.
///
/// Every value is kept exactly representable as `f32` so a checkpoint
/// stores the model without loss.
#[derive(Debug, Clone)]
pub struct ModelParams {
    tensors: Vec<Tensor>,
    running: Vec<Tensor>,
    version: u64,
}

/// Equality of values; the mutation counter is ignored.
impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.tensors == other.tensors && self.running == other.running
    }
}

pub(crate) fn to_f32_grid(v: f64) -> f64 {
    v as f32 as f64
}

impl ModelParams {
    /// Uniform `±1/sqrt(fan_in)` weights, LSTM forget bias 1, identity
    /// batch norm.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = tensor_specs(config);
        let h = config.hidden_units;
        let mut tensors = Vec::new();
        let mut running = Vec::new();
        for spec in specs {
            let mut t = match spec.init {
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let n: usize = spec.shape.iter().product();
                    let data = (0..n)
                        .map(|_| to_f32_grid(rng.gen_range(-bound..=bound)))
                        .collect();
                    Tensor {
                        name: spec.name,
                        shape: spec.shape,
                        data,
                    }
                }
                Init::Constant(v) => Tensor::filled(spec.name, spec.shape, v),
            };
            if t.name.ends_with(".bias") && t.name.starts_with("lstm") {
                t.data[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
            }
            if spec.running {
                running.push(t);
            } else {
                tensors.push(t);
            }
        }
        ModelParams {
            tensors,
            running,
            version: 0,
        }
    }

    /// Whether every tensor has the shape `config` calls for.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        let specs = tensor_specs(config);
        let (run, train): (Vec<_>, Vec<_>) = specs.iter().partition(|s| s.running);
        train.len() == self.tensors.len()
            && run.len() == self.running.len()
            && train.iter().zip(&self.tensors).all(|(s, t)| s.shape == t.shape)
            && run.iter().zip(&self.running).all(|(s, t)| s.shape == t.shape)
    }

    pub(crate) fn from_parts(tensors: Vec<Tensor>, running: Vec<Tensor>) -> Self {
        ModelParams {
            tensors,
            running,
            version: 0,
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn running(&self) -> &[Tensor] {
        &self.running
    }

    /// Mutable access; invalidates caches of earlier forward passes.
    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        self.version += 1;
        &mut self.tensors
    }

    pub fn running_mut(&mut self) -> &mut [Tensor] {
        self.version += 1;
        &mut self.running
    }

    /// Incremented on every mutation.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .chain(&self.running)
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Moves running statistics towards batch statistics:
    /// `running = (1 - momentum) * running + momentum * batch`.
    pub fn update_running_stats(&mut self, stats: &[BnBatchStats], momentum: f64) {
        debug_assert_eq!(stats.len() * 2, self.running.len());
        for (i, s) in stats.iter().enumerate() {
            if s.count == 0 {
                continue;
            }
            let (mean, var) = s.mean_var();
            for (r, m) in self.running[2 * i].data.iter_mut().zip(&mean) {
                *r = to_f32_grid((1.0 - momentum) * *r + momentum * m);
            }
            for (r, v) in self.running[2 * i + 1].data.iter_mut().zip(&var) {
                *r = to_f32_grid((1.0 - momentum) * *r + momentum * v);
            }
        }
        self.version += 1;
    }
}

/// Per-feature sums of one batch-norm input, accumulated over samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BnBatchStats {
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub count: usize,
}

impl BnBatchStats {
    pub fn zeros(features: usize) -> Self {
        BnBatchStats {
            sum: vec![0.0; features],
            sum_sq: vec![0.0; features],
            count: 0,
        }
    }

    pub fn merge(&mut self, other: &BnBatchStats) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.count += other.count;
    }

    /// Mean and biased variance.
    pub fn mean_var(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.count.max(1) as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let var = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n - m * m).max(0.0))
            .collect();
        (mean, var)
    }
}

/// One gradient buffer per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            tensors: params.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, weight: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += weight * y;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors
            .iter_mut()
            .flatten()
            .for_each(|g| *g *= factor);
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|g| g.is_finite())
    }
}
