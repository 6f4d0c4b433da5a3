//! Graph convolutional rainfall regressor, trained with hand-written
//! backpropagation and Adam.
//!
//! One layer computes `relu(A_hat * H * W)`: every station mixes its
//! neighbours' features through the normalized adjacency, then projects them
//! through a learned weight matrix. A stack of such layers feeds a dense
//! relu layer and a final linear unit that emits one rainfall value per
//! station. Gradients are derived and coded out by hand — the matrix caches
//! in [`ForwardTrace`] are exactly the terms the chain rule needs — and
//! verified against finite differences in the test suite.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};

use crate::data::{SampleSet, Split};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(&'static str),
    #[error("EmptySplit: training requires non-empty train and validation blocks")]
    EmptySplit,
}

/// Everything that determines a training run, including the RNG seed, so a
/// config plus a dataset reproduces a model bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnConfig {
    /// Output width of each graph convolution, in order.
    pub gcl_widths: Vec<usize>,
    /// Width of the dense relu layer after the convolutions.
    pub fc_width: usize,
    /// Days of rainfall history per feature window.
    pub window_length: usize,
    pub learning_rate: f64,
    /// Graph-days per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Rainfall at or above this flags a heavy-rain day.
    pub heavy_threshold_mm: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            gcl_widths: vec![10, 10, 10, 10],
            fc_width: 32,
            window_length: 7,
            learning_rate: 0.01,
            batch_size: 64,
            max_epochs: 500,
            patience: 10,
            seed: 42,
            heavy_threshold_mm: 8.0,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.gcl_widths.is_empty() || self.gcl_widths.iter().any(|&w| w == 0) {
            return Err(ModelError::InvalidConfig("gcl_widths must be non-empty positive"));
        }
        if self.fc_width == 0 {
            return Err(ModelError::InvalidConfig("fc_width must be positive"));
        }
        if self.window_length == 0 {
            return Err(ModelError::InvalidConfig("window_length must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidConfig("learning_rate must be positive and finite"));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(ModelError::InvalidConfig("max_epochs must be positive"));
        }
        if self.patience == 0 {
            return Err(ModelError::InvalidConfig("patience must be positive"));
        }
        if !(self.heavy_threshold_mm >= 0.0 && self.heavy_threshold_mm.is_finite()) {
            return Err(ModelError::InvalidConfig("heavy_threshold_mm must be non-negative"));
        }
        Ok(())
    }
}

/// Built-in layer-width presets selectable from the CLI as models A through D.
pub fn model_preset(name: &str) -> Option<Vec<usize>> {
    match name {
        "A" => Some(vec![10, 10, 10, 10]),
        "B" => Some(vec![16, 32, 64, 128]),
        "C" => Some(vec![128, 64, 32]),
        "D" => Some(vec![32, 64, 128]),
        _ => None,
    }
}

/// The learnable parameters plus the config that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub config: GcnConfig,
    /// Width of the per-node input features this model expects.
    pub feature_dim: usize,
    /// One `in x out` weight matrix per graph convolution.
    pub gcl_weights: Vec<Matrix>,
    pub fc_weight: Matrix,
    pub fc_bias: Vec<f64>,
    /// Final linear readout: one weight per dense unit, plus a bias.
    pub out_weight: Vec<f64>,
    pub out_bias: f64,
}

/// Uniform in [0, 1) from the top 53 bits of a u64.
fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Glorot-uniform sample in +/- sqrt(6 / (fan_in + fan_out)).
fn glorot(rng: &mut impl RngCore, fan_in: usize, fan_out: usize) -> f64 {
    let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    (2.0 * unit_f64(rng) - 1.0) * bound
}

impl GcnModel {
    /// Initializes weights Glorot-uniform (biases zero) from a seeded RNG, so
    /// the same seed always yields bit-identical parameters. Draw order is
    /// fixed: each convolution weight in layer order (row-major), then the
    /// dense weight, then the readout weights.
    pub fn init(config: GcnConfig, feature_dim: usize, seed: u64) -> Result<GcnModel, ModelError> {
        config.validate()?;
        if feature_dim == 0 {
            return Err(ModelError::InvalidConfig("feature_dim must be positive"));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

        let mut gcl_weights = Vec::with_capacity(config.gcl_widths.len());
        let mut fan_in = feature_dim;
        for &width in &config.gcl_widths {
            gcl_weights.push(Matrix::from_fn(fan_in, width, |_, _| glorot(&mut rng, fan_in, width)));
            fan_in = width;
        }
        let fc_weight = Matrix::from_fn(fan_in, config.fc_width, |_, _| {
            glorot(&mut rng, fan_in, config.fc_width)
        });
        let fc_bias = vec![0.0; config.fc_width];
        let out_weight: Vec<f64> = (0..config.fc_width)
            .map(|_| glorot(&mut rng, config.fc_width, 1))
            .collect();

        Ok(GcnModel {
            config,
            feature_dim,
            gcl_weights,
            fc_weight,
            fc_bias,
            out_weight,
            out_bias: 0.0,
        })
    }

    /// Verifies the weight shapes still chain together; guards checkpoints
    /// edited or corrupted outside this process.
    pub fn validate_shapes(&self) -> Result<(), ModelError> {
        let mut width = self.feature_dim;
        if self.gcl_weights.len() != self.config.gcl_widths.len() {
            return Err(ModelError::ShapeMismatch("convolution layer count differs from config"));
        }
        for (w, &expect) in self.gcl_weights.iter().zip(&self.config.gcl_widths) {
            if w.shape() != (width, expect) {
                return Err(ModelError::ShapeMismatch("convolution weight shape breaks the chain"));
            }
            width = expect;
        }
        if self.fc_weight.shape() != (width, self.config.fc_width) {
            return Err(ModelError::ShapeMismatch("dense weight shape breaks the chain"));
        }
        if self.fc_bias.len() != self.config.fc_width
            || self.out_weight.len() != self.config.fc_width
        {
            return Err(ModelError::ShapeMismatch("bias or readout width differs from fc_width"));
        }
        Ok(())
    }

    fn restore_from(&mut self, snapshot: &GcnModel) {
        self.gcl_weights = snapshot.gcl_weights.clone();
        self.fc_weight = snapshot.fc_weight.clone();
        self.fc_bias = snapshot.fc_bias.clone();
        self.out_weight = snapshot.out_weight.clone();
        self.out_bias = snapshot.out_bias;
    }

    /// All parameter tensors as mutable flat slices, in the same order as
    /// [`Gradients::tensors`]; this is the order Adam walks.
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let GcnModel { gcl_weights, fc_weight, fc_bias, out_weight, out_bias, .. } = self;
        let mut t: Vec<&mut [f64]> = gcl_weights.iter_mut().map(|w| w.data_mut()).collect();
        t.push(fc_weight.data_mut());
        t.push(fc_bias.as_mut_slice());
        t.push(out_weight.as_mut_slice());
        t.push(core::slice::from_mut(out_bias));
        t
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 { x } else { 0.0 }
}

/// Subgradient of relu; 0 at the kink.
fn relu_prime(x: f64) -> f64 {
    if x > 0.0 { 1.0 } else { 0.0 }
}

/// One graph convolution: `relu(a_hat * h * w)`.
///
/// `h` is `nodes x in_width`, `a_hat` is `nodes x nodes`, `w` is
/// `in_width x out_width`. The aggregation runs first — each node averages
/// its neighbourhood — and the projection and relu follow.
pub fn gcl_forward(h: &Matrix, a_hat: &Matrix, w: &Matrix) -> Result<Matrix, ModelError> {
    if a_hat.rows() != a_hat.cols() {
        return Err(ModelError::ShapeMismatch("a_hat must be square"));
    }
    if a_hat.cols() != h.rows() {
        return Err(ModelError::ShapeMismatch("a_hat and h disagree on node count"));
    }
    if h.cols() != w.rows() {
        return Err(ModelError::ShapeMismatch("h and w disagree on feature width"));
    }
    Ok(a_hat.matmul(h).matmul(w).map(relu))
}

/// Intermediate values captured on the way forward; the backward pass
/// consumes them instead of recomputing. The aggregates M_l = A_hat * H_l
/// stand in for the layer inputs: dW_l = M_l^T dZ_l needs M_l, never H_l.
struct ForwardTrace {
    /// M_l = A_hat * H_l, the neighbourhood aggregate at each layer.
    gcl_aggregates: Vec<Matrix>,
    /// Z_l = M_l * W_l, pre-activation at each layer.
    gcl_pre: Vec<Matrix>,
    /// H_L, the last convolution's activation and the dense layer's input.
    fc_input: Matrix,
    /// Pre-activation of the dense layer.
    fc_pre: Matrix,
    /// relu(fc_pre), input to the readout.
    fc_out: Matrix,
    /// One raw (unclamped) output per node.
    output: Vec<f64>,
}

fn check_forward_shapes(model: &GcnModel, a_hat: &Matrix, x: &Matrix) -> Result<(), ModelError> {
    model.validate_shapes()?;
    if a_hat.rows() != a_hat.cols() {
        return Err(ModelError::ShapeMismatch("a_hat must be square"));
    }
    if a_hat.cols() != x.rows() {
        return Err(ModelError::ShapeMismatch("a_hat and features disagree on node count"));
    }
    if x.cols() != model.feature_dim {
        return Err(ModelError::ShapeMismatch("feature width differs from model feature_dim"));
    }
    Ok(())
}

fn forward_trace(model: &GcnModel, a_hat: &Matrix, x: &Matrix) -> Result<ForwardTrace, ModelError> {
    check_forward_shapes(model, a_hat, x)?;
    let n = x.rows();

    let mut gcl_aggregates = Vec::with_capacity(model.gcl_weights.len());
    let mut gcl_pre = Vec::with_capacity(model.gcl_weights.len());
    let mut h = x.clone();
    for w in &model.gcl_weights {
        let m = a_hat.matmul(&h);
        let z = m.matmul(w);
        gcl_aggregates.push(m);
        h = z.map(relu);
        gcl_pre.push(z);
    }
    let fc_input = h;

    // Dense layer with a bias per unit, shared across nodes.
    let mut fc_pre = fc_input.matmul(&model.fc_weight);
    for i in 0..n {
        for (j, &b) in model.fc_bias.iter().enumerate() {
            fc_pre[(i, j)] += b;
        }
    }
    let fc_out = fc_pre.map(relu);

    let output: Vec<f64> = (0..n)
        .map(|i| {
            let row = fc_out.row(i);
            row.iter().zip(&model.out_weight).map(|(a, b)| a * b).sum::<f64>() + model.out_bias
        })
        .collect();

    Ok(ForwardTrace {
        gcl_aggregates,
        gcl_pre,
        fc_input,
        fc_pre,
        fc_out,
        output,
    })
}

/// Runs the model on one graph-day of features, returning a raw (possibly
/// negative) output per node in graph order.
pub fn forward(model: &GcnModel, a_hat: &Matrix, x: &Matrix) -> Result<Vec<f64>, ModelError> {
    Ok(forward_trace(model, a_hat, x)?.output)
}

/// Gradients of the per-sample loss with respect to every parameter,
/// shaped exactly like the model's tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub gcl_weights: Vec<Matrix>,
    pub fc_weight: Matrix,
    pub fc_bias: Vec<f64>,
    pub out_weight: Vec<f64>,
    pub out_bias: f64,
}

impl Gradients {
    fn zeros_like(model: &GcnModel) -> Gradients {
        Gradients {
            gcl_weights: model
                .gcl_weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            fc_weight: Matrix::zeros(model.fc_weight.rows(), model.fc_weight.cols()),
            fc_bias: vec![0.0; model.fc_bias.len()],
            out_weight: vec![0.0; model.out_weight.len()],
            out_bias: 0.0,
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.gcl_weights.iter_mut().zip(&other.gcl_weights) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        for (x, y) in self.fc_weight.data_mut().iter_mut().zip(other.fc_weight.data()) {
            *x += y;
        }
        for (x, y) in self.fc_bias.iter_mut().zip(&other.fc_bias) {
            *x += y;
        }
        for (x, y) in self.out_weight.iter_mut().zip(&other.out_weight) {
            *x += y;
        }
        self.out_bias += other.out_bias;
    }

    fn scale(&mut self, s: f64) {
        for w in &mut self.gcl_weights {
            for x in w.data_mut() {
                *x *= s;
            }
        }
        for x in self.fc_weight.data_mut() {
            *x *= s;
        }
        for x in &mut self.fc_bias {
            *x *= s;
        }
        for x in &mut self.out_weight {
            *x *= s;
        }
        self.out_bias *= s;
    }

    /// Flat views in the same order as `GcnModel::tensors_mut`.
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = self.gcl_weights.iter().map(|w| w.data()).collect();
        t.push(self.fc_weight.data());
        t.push(&self.fc_bias);
        t.push(&self.out_weight);
        t.push(core::slice::from_ref(&self.out_bias));
        t
    }
}

/// The per-sample training loss: mean over nodes of squared error between
/// the raw outputs and the targets.
pub fn sample_loss(model: &GcnModel, a_hat: &Matrix, x: &Matrix, y: &[f64]) -> Result<f64, ModelError> {
    let out = forward(model, a_hat, x)?;
    if out.len() != y.len() {
        return Err(ModelError::ShapeMismatch("target length differs from node count"));
    }
    let n = y.len() as f64;
    Ok(out
        .iter()
        .zip(y)
        .map(|(o, t)| (o - t) * (o - t))
        .sum::<f64>()
        / n)
}

/// Backpropagates [`sample_loss`] through the whole network for one
/// graph-day. Every step below is the transpose of the matching forward
/// step, consuming the cached aggregates so no term is recomputed.
pub fn backward(
    model: &GcnModel,
    a_hat: &Matrix,
    x: &Matrix,
    y: &[f64],
) -> Result<Gradients, ModelError> {
    let trace = forward_trace(model, a_hat, x)?;
    if trace.output.len() != y.len() {
        return Err(ModelError::ShapeMismatch("target length differs from node count"));
    }
    let n = y.len();
    let mut grads = Gradients::zeros_like(model);

    // d loss / d output_i for loss = (1/n) * sum (out - y)^2.
    let d_out: Vec<f64> = trace
        .output
        .iter()
        .zip(y)
        .map(|(o, t)| 2.0 * (o - t) / n as f64)
        .collect();

    // Readout: out_i = fc_out[i] . out_weight + out_bias.
    for (i, &d) in d_out.iter().enumerate() {
        let row = trace.fc_out.row(i);
        for (j, &f) in row.iter().enumerate() {
            grads.out_weight[j] += d * f;
        }
        grads.out_bias += d;
    }
    let mut d_fc_out = Matrix::from_fn(n, model.out_weight.len(), |i, j| {
        d_out[i] * model.out_weight[j]
    });

    // Dense relu layer: fc_out = relu(H_L * W_fc + b).
    d_fc_out = d_fc_out.zip_map(&trace.fc_pre, |g, z| g * relu_prime(z));
    grads.fc_weight = trace.fc_input.transposed().matmul(&d_fc_out);
    for j in 0..model.fc_bias.len() {
        grads.fc_bias[j] = (0..n).map(|i| d_fc_out[(i, j)]).sum();
    }
    let mut d_h = d_fc_out.matmul(&model.fc_weight.transposed());

    // Convolutions, last to first: Z_l = (A_hat * H_l) * W_l, H_{l+1} = relu(Z_l).
    for l in (0..model.gcl_weights.len()).rev() {
        let d_z = d_h.zip_map(&trace.gcl_pre[l], |g, z| g * relu_prime(z));
        grads.gcl_weights[l] = trace.gcl_aggregates[l].transposed().matmul(&d_z);
        // d H_l = A_hat^T * (d Z_l * W_l^T).
        d_h = a_hat
            .transposed()
            .matmul(&d_z.matmul(&model.gcl_weights[l].transposed()));
    }

    Ok(grads)
}

/// Adam hyper-parameters; the defaults are the standard ones.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamParams {
    pub fn with_learning_rate(learning_rate: f64) -> AdamParams {
        AdamParams {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update on a flat parameter slice. `t` is the 1-based step count;
/// the bias correction divides by `1 - beta^t` so early steps are not damped
/// by the zero-initialized moments.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    hp: &AdamParams,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), m.len());
    assert_eq!(params.len(), v.len());
    let bias1 = 1.0 - libm::pow(hp.beta1, t as f64);
    let bias2 = 1.0 - libm::pow(hp.beta2, t as f64);
    for i in 0..params.len() {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * grads[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        params[i] -= hp.learning_rate * m_hat / (libm::sqrt(v_hat) + hp.epsilon);
    }
}

/// First and second moment buffers for every tensor, plus the step counter.
struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    fn new(model: &mut GcnModel) -> AdamState {
        let sizes: Vec<usize> = model.tensors_mut().iter().map(|s| s.len()).collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut GcnModel, grads: &Gradients, hp: &AdamParams) {
        self.t += 1;
        let grad_tensors = grads.tensors();
        for ((params, g), (m, v)) in model
            .tensors_mut()
            .into_iter()
            .zip(grad_tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            adam_step(params, g, m, v, self.t, hp);
        }
    }
}

/// What a training run did, epoch by epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Mean training loss of each epoch, in order.
    pub train_loss_history: Vec<f64>,
    /// Validation loss after each epoch, in order.
    pub val_loss_history: Vec<f64>,
    /// 1-based epoch whose weights the model keeps.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Improvements smaller than this don't reset patience.
const EARLY_STOP_MIN_DELTA: f64 = 1e-6;

/// Trains in place: mini-batches of whole graph-days in chronological order,
/// one Adam step per batch, early stopping on validation loss. Whatever ends
/// the run, the model keeps the weights of its best validation epoch.
pub fn train(
    model: &mut GcnModel,
    a_hat: &Matrix,
    samples: &SampleSet,
    split: &Split,
) -> Result<TrainReport, ModelError> {
    model.config.validate()?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(ModelError::EmptySplit);
    }
    if split.test.end > samples.len() || split.val.end > samples.len() {
        return Err(ModelError::ShapeMismatch("split ranges exceed the sample set"));
    }
    // Validate dimensions once up front, on the first sample.
    check_forward_shapes(model, a_hat, &samples.features[split.train.start])?;

    let hp = AdamParams::with_learning_rate(model.config.learning_rate);
    let mut adam = AdamState::new(model);
    let train_idx: Vec<usize> = split.train.clone().collect();

    let mut report = TrainReport {
        epochs_run: 0,
        train_loss_history: Vec::new(),
        val_loss_history: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_val = f64::INFINITY;
    let mut best_weights = model.clone();
    let mut stale_epochs = 0usize;

    for epoch in 1..=model.config.max_epochs {
        let mut epoch_loss_sum = 0.0;
        for batch in train_idx.chunks(model.config.batch_size) {
            let mut batch_grads = Gradients::zeros_like(model);
            for &k in batch {
                epoch_loss_sum +=
                    sample_loss(model, a_hat, &samples.features[k], &samples.targets[k])?;
                let g = backward(model, a_hat, &samples.features[k], &samples.targets[k])?;
                batch_grads.add_assign(&g);
            }
            batch_grads.scale(1.0 / batch.len() as f64);
            adam.step(model, &batch_grads, &hp);
        }
        let train_loss = epoch_loss_sum / train_idx.len() as f64;

        let mut val_loss_sum = 0.0;
        for k in split.val.clone() {
            val_loss_sum += sample_loss(model, a_hat, &samples.features[k], &samples.targets[k])?;
        }
        let val_loss = val_loss_sum / split.val.len() as f64;

        report.epochs_run = epoch;
        report.train_loss_history.push(train_loss);
        report.val_loss_history.push(val_loss);

        if best_val - val_loss > EARLY_STOP_MIN_DELTA {
            best_val = val_loss;
            report.best_epoch = epoch;
            best_weights = model.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= model.config.patience {
                report.stopped_early = true;
                break;
            }
        }
    }

    model.restore_from(&best_weights);
    Ok(report)
}

/// A per-station forecast: rainfall clamped to physical range, plus the
/// heavy-rain flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub rain_mm: f64,
    pub heavy: bool,
}

/// Runs the model and applies the output policy: negative raw rainfall
/// clamps to zero, and `heavy` is set when the clamped value reaches
/// `threshold_mm` (inclusive).
pub fn predict_with_flags(
    model: &GcnModel,
    a_hat: &Matrix,
    x: &Matrix,
    threshold_mm: f64,
) -> Result<Vec<Forecast>, ModelError> {
    let raw = forward(model, a_hat, x)?;
    Ok(raw
        .into_iter()
        .map(|r| {
            let rain_mm = r.max(0.0);
            Forecast {
                rain_mm,
                heavy: rain_mm >= threshold_mm,
            }
        })
        .collect())
}
