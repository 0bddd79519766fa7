//! Minimal training engine for chain networks.
//!
//! Everything runs in `f64`. Weights for Dense layers are stored `[in][out]`
//! row-major; Conv2D weights are `[out][in][k][k]`. Cross-entropy is taken on
//! the input of a trailing Softmax when the graph ends `Softmax -> Output`,
//! otherwise on the raw network output.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{LabeledDataset, Split};
use crate::netgraph::{LayerKind, NetworkGraph, TensorShape};
use crate::rng::{self, stream};

const EVAL_CHUNK: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("non-finite activation at vertex '{0}'")]
    NonFinite(String),
    #[error("split '{0}' is empty")]
    EmptySplit(Split),
    #[error("input has {found} values, expected a multiple of {sample_size}")]
    BatchShape { found: usize, sample_size: usize },
    #[error("dataset samples have shape {found}, network expects {expected}")]
    DatasetShape {
        expected: TensorShape,
        found: TensorShape,
    },
    #[error("label {label} out of range for {classes} output classes")]
    Label { label: usize, classes: usize },
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 32,
            learning_rate: 0.1,
            momentum: 0.9,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub fan_in: usize,
}

/// Weights for every trainable vertex, aligned with the graph's vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    layers: Vec<Option<LayerWeights>>,
}

impl WeightStore {
    pub fn zeros(g: &NetworkGraph) -> Self {
        let layers = g
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let input = g.input_of(i);
                let (n_w, n_b, fan_in) = match v.kind {
                    LayerKind::Dense { units } => (input.numel() * units, units, input.numel()),
                    LayerKind::Conv2D {
                        out_channels,
                        kernel,
                        ..
                    } => {
                        let fan_in = input.units() * kernel * kernel;
                        (fan_in * out_channels, out_channels, fan_in)
                    }
                    _ => return None,
                };
                Some(LayerWeights {
                    weight: vec![0.0; n_w],
                    bias: vec![0.0; n_b],
                    fan_in,
                })
            })
            .collect();
        Self { layers }
    }

    pub fn layer(&self, vertex: usize) -> Option<&LayerWeights> {
        self.layers.get(vertex).and_then(Option::as_ref)
    }

    pub fn layer_mut(&mut self, vertex: usize) -> Option<&mut LayerWeights> {
        self.layers.get_mut(vertex).and_then(Option::as_mut)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|l| l.weight.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    fn zip_mut(&mut self, other: &WeightStore, mut f: impl FnMut(&mut f64, f64)) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                a.weight
                    .iter_mut()
                    .zip(&b.weight)
                    .for_each(|(x, y)| f(x, *y));
                a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| f(x, *y));
            }
        }
    }
}

/// He-uniform weights in `[-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
pub fn init_weights(g: &NetworkGraph, seed: u64) -> WeightStore {
    let mut rng = rng::chacha(rng::derive_seed(&[stream::WEIGHT_INIT, seed]));
    let mut store = WeightStore::zeros(g);
    for layer in store.layers.iter_mut().flatten() {
        let bound = (6.0 / layer.fan_in as f64).sqrt();
        for w in &mut layer.weight {
            *w = rng.random_range(-bound..bound);
        }
    }
    store
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub loss: f64,
}

/// Activations of every vertex for one batch; `activations[i]` holds
/// `batch * numel(shape_i)` values.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub batch: usize,
    pub activations: Vec<Vec<f64>>,
    logit_vertex: usize,
}

impl ForwardPass {
    /// Final network output (probabilities when the graph ends in Softmax).
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("graph has vertices")
    }

    /// Pre-softmax scores used for the loss and for argmax.
    pub fn logits(&self) -> &[f64] {
        &self.activations[self.logit_vertex]
    }
}

/// Index of the vertex whose output is treated as logits, and whether the
/// graph applies its own softmax on top of it.
fn logit_vertex(g: &NetworkGraph) -> (usize, bool) {
    let n = g.vertices().len();
    if n >= 3 && matches!(g.vertices()[n - 2].kind, LayerKind::Softmax) {
        (n - 3, true)
    } else {
        (n - 1, false)
    }
}

fn softmax_rows(z: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    for (row, dst) in z.chunks(k).zip(out.chunks_mut(k)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (d, &x) in dst.iter_mut().zip(row) {
            *d = (x - m).exp();
            sum += *d;
        }
        dst.iter_mut().for_each(|d| *d /= sum);
    }
    out
}

fn forward_vertex(
    kind: &LayerKind,
    weights: Option<&LayerWeights>,
    x: &[f64],
    batch: usize,
    in_shape: &TensorShape,
    out_shape: &TensorShape,
) -> Vec<f64> {
    let n_in = in_shape.numel();
    let n_out = out_shape.numel();
    match *kind {
        LayerKind::Input | LayerKind::Output | LayerKind::Flatten => x.to_vec(),
        LayerKind::ReLU => x.iter().map(|&v| v.max(0.0)).collect(),
        LayerKind::Softmax => softmax_rows(x, n_in),
        LayerKind::Dense { units } => {
            let w = weights.expect("dense weights");
            let mut y = Vec::with_capacity(batch * units);
            for xb in x.chunks(n_in) {
                let start = y.len();
                y.extend_from_slice(&w.bias);
                let yb = &mut y[start..];
                for (i, &xi) in xb.iter().enumerate() {
                    if xi != 0.0 {
                        let row = &w.weight[i * units..(i + 1) * units];
                        yb.iter_mut().zip(row).for_each(|(a, &r)| *a += xi * r);
                    }
                }
            }
            y
        }
        LayerKind::Conv2D {
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let w = weights.expect("conv weights");
            let (c_in, h, wd) = (in_shape.dims()[0], in_shape.dims()[1], in_shape.dims()[2]);
            let (ho, wo) = (out_shape.dims()[1], out_shape.dims()[2]);
            let mut y = vec![0.0; batch * n_out];
            for b in 0..batch {
                let xb = &x[b * n_in..(b + 1) * n_in];
                let yb = &mut y[b * n_out..(b + 1) * n_out];
                for o in 0..out_channels {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut acc = w.bias[o];
                            for c in 0..c_in {
                                for ky in 0..kernel {
                                    let iy = (oy * stride + ky) as isize - padding as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kernel {
                                        let ix = (ox * stride + kx) as isize - padding as isize;
                                        if ix < 0 || ix >= wd as isize {
                                            continue;
                                        }
                                        acc += w.weight
                                            [((o * c_in + c) * kernel + ky) * kernel + kx]
                                            * xb[(c * h + iy as usize) * wd + ix as usize];
                                    }
                                }
                            }
                            yb[(o * ho + oy) * wo + ox] = acc;
                        }
                    }
                }
            }
            y
        }
        LayerKind::MaxPool2D { kernel, stride } => {
            let (c_n, h, wd) = (in_shape.dims()[0], in_shape.dims()[1], in_shape.dims()[2]);
            let (ho, wo) = (out_shape.dims()[1], out_shape.dims()[2]);
            let mut y = vec![0.0; batch * n_out];
            for b in 0..batch {
                for c in 0..c_n {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut m = f64::NEG_INFINITY;
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let v = x[b * n_in
                                        + (c * h + oy * stride + ky) * wd
                                        + ox * stride
                                        + kx];
                                    m = m.max(v);
                                }
                            }
                            y[b * n_out + (c * ho + oy) * wo + ox] = m;
                        }
                    }
                }
            }
            y
        }
        LayerKind::GlobalAvgPool => {
            let spatial = in_shape.spatial();
            x.chunks(spatial)
                .map(|s| s.iter().sum::<f64>() / spatial as f64)
                .collect()
        }
    }
}

/// Run `inputs` (`batch` samples laid out back to back) through the network.
pub fn forward(
    g: &NetworkGraph,
    w: &WeightStore,
    inputs: &[f64],
) -> Result<ForwardPass, TrainError> {
    let sample_size = g.input_shape().numel();
    if inputs.is_empty() || !inputs.len().is_multiple_of(sample_size) {
        return Err(TrainError::BatchShape {
            found: inputs.len(),
            sample_size,
        });
    }
    let batch = inputs.len() / sample_size;
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(g.vertices().len());
    for (i, v) in g.vertices().iter().enumerate() {
        let x = if i == 0 { inputs } else { &activations[i - 1] };
        let y = forward_vertex(&v.kind, w.layer(i), x, batch, g.input_of(i), &g.shapes()[i]);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite(v.id.clone()));
        }
        activations.push(y);
    }
    Ok(ForwardPass {
        batch,
        activations,
        logit_vertex: logit_vertex(g).0,
    })
}

/// Per-sample cross-entropy summed over the batch, and `d(sum)/d(logits)`.
fn cross_entropy(logits: &[f64], labels: &[usize], k: usize) -> (f64, Vec<f64>) {
    let probs = softmax_rows(logits, k);
    let mut total = 0.0;
    let mut grad = probs;
    for ((row, g), &y) in logits.chunks(k).zip(grad.chunks_mut(k)).zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
        g[y] -= 1.0;
    }
    (total, grad)
}

fn check_labels(labels: &[usize], classes: usize) -> Result<(), TrainError> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(TrainError::Label { label, classes }),
        None => Ok(()),
    }
}

/// Mean cross-entropy over the batch.
pub fn loss(
    g: &NetworkGraph,
    w: &WeightStore,
    inputs: &[f64],
    labels: &[usize],
) -> Result<f64, TrainError> {
    let pass = forward(g, w, inputs)?;
    let k = g.shapes()[pass.logit_vertex].numel();
    check_labels(labels, k)?;
    Ok(cross_entropy(pass.logits(), labels, k).0 / pass.batch as f64)
}

/// Mean cross-entropy and its gradient with respect to every weight.
pub fn loss_and_grad(
    g: &NetworkGraph,
    w: &WeightStore,
    inputs: &[f64],
    labels: &[usize],
) -> Result<(f64, WeightStore), TrainError> {
    let pass = forward(g, w, inputs)?;
    let batch = pass.batch;
    let (start, _) = logit_vertex(g);
    let k = g.shapes()[start].numel();
    check_labels(labels, k)?;
    let (total, mut grad) = cross_entropy(pass.logits(), labels, k);
    grad.iter_mut().for_each(|d| *d /= batch as f64);

    let mut grads = WeightStore::zeros(g);
    for i in (1..=start).rev() {
        let v = &g.vertices()[i];
        let in_shape = g.input_of(i);
        let out_shape = &g.shapes()[i];
        let x = &pass.activations[i - 1];
        let y = &pass.activations[i];
        grad = backward_vertex(
            &v.kind,
            w.layer(i),
            grads.layer_mut(i),
            x,
            y,
            &grad,
            batch,
            in_shape,
            out_shape,
        );
    }
    Ok((total / batch as f64, grads))
}

#[allow(clippy::too_many_arguments)]
fn backward_vertex(
    kind: &LayerKind,
    weights: Option<&LayerWeights>,
    grads: Option<&mut LayerWeights>,
    x: &[f64],
    y: &[f64],
    gy: &[f64],
    batch: usize,
    in_shape: &TensorShape,
    out_shape: &TensorShape,
) -> Vec<f64> {
    let n_in = in_shape.numel();
    let n_out = out_shape.numel();
    match *kind {
        LayerKind::Input | LayerKind::Output | LayerKind::Flatten => gy.to_vec(),
        LayerKind::ReLU => x
            .iter()
            .zip(gy)
            .map(|(&xi, &g)| if xi > 0.0 { g } else { 0.0 })
            .collect(),
        LayerKind::Softmax => {
            let mut gx = vec![0.0; gy.len()];
            for ((yr, gr), dst) in y.chunks(n_in).zip(gy.chunks(n_in)).zip(gx.chunks_mut(n_in)) {
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((d, &yi), &gi) in dst.iter_mut().zip(yr).zip(gr) {
                    *d = yi * (gi - dot);
                }
            }
            gx
        }
        LayerKind::Dense { units } => {
            let w = weights.expect("dense weights");
            let gw = grads.expect("dense grads");
            let mut gx = vec![0.0; batch * n_in];
            for b in 0..batch {
                let xb = &x[b * n_in..(b + 1) * n_in];
                let gb = &gy[b * units..(b + 1) * units];
                gw.bias.iter_mut().zip(gb).for_each(|(a, &g)| *a += g);
                for i in 0..n_in {
                    let row = &w.weight[i * units..(i + 1) * units];
                    let grow = &mut gw.weight[i * units..(i + 1) * units];
                    let xi = xb[i];
                    let mut acc = 0.0;
                    for o in 0..units {
                        grow[o] += xi * gb[o];
                        acc += row[o] * gb[o];
                    }
                    gx[b * n_in + i] = acc;
                }
            }
            gx
        }
        LayerKind::Conv2D {
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let w = weights.expect("conv weights");
            let gw = grads.expect("conv grads");
            let (c_in, h, wd) = (in_shape.dims()[0], in_shape.dims()[1], in_shape.dims()[2]);
            let (ho, wo) = (out_shape.dims()[1], out_shape.dims()[2]);
            let mut gx = vec![0.0; batch * n_in];
            for b in 0..batch {
                let xb = &x[b * n_in..(b + 1) * n_in];
                let gxb = &mut gx[b * n_in..(b + 1) * n_in];
                for o in 0..out_channels {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let g = gy[b * n_out + (o * ho + oy) * wo + ox];
                            gw.bias[o] += g;
                            for c in 0..c_in {
                                for ky in 0..kernel {
                                    let iy = (oy * stride + ky) as isize - padding as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kernel {
                                        let ix = (ox * stride + kx) as isize - padding as isize;
                                        if ix < 0 || ix >= wd as isize {
                                            continue;
                                        }
                                        let wi = ((o * c_in + c) * kernel + ky) * kernel + kx;
                                        let xi = (c * h + iy as usize) * wd + ix as usize;
                                        gw.weight[wi] += g * xb[xi];
                                        gxb[xi] += g * w.weight[wi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            gx
        }
        LayerKind::MaxPool2D { kernel, stride } => {
            let (c_n, h, wd) = (in_shape.dims()[0], in_shape.dims()[1], in_shape.dims()[2]);
            let (ho, wo) = (out_shape.dims()[1], out_shape.dims()[2]);
            let mut gx = vec![0.0; batch * n_in];
            for b in 0..batch {
                for c in 0..c_n {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            // First maximal element in the window receives the gradient.
                            let mut best = (f64::NEG_INFINITY, 0);
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let idx = b * n_in
                                        + (c * h + oy * stride + ky) * wd
                                        + ox * stride
                                        + kx;
                                    if x[idx] > best.0 {
                                        best = (x[idx], idx);
                                    }
                                }
                            }
                            gx[best.1] += gy[b * n_out + (c * ho + oy) * wo + ox];
                        }
                    }
                }
            }
            gx
        }
        LayerKind::GlobalAvgPool => {
            let spatial = in_shape.spatial();
            let mut gx = vec![0.0; batch * n_in];
            for (dst, &g) in gx.chunks_mut(spatial).zip(gy) {
                dst.iter_mut().for_each(|d| *d = g / spatial as f64);
            }
            gx
        }
    }
}

fn gather(ds: &LabeledDataset, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut x = Vec::with_capacity(indices.len() * ds.shape().numel());
    let mut y = Vec::with_capacity(indices.len());
    for &i in indices {
        x.extend_from_slice(ds.sample(i));
        y.push(ds.labels()[i]);
    }
    (x, y)
}

fn check_dataset(g: &NetworkGraph, ds: &LabeledDataset) -> Result<(), TrainError> {
    if ds.shape() != g.input_shape() {
        return Err(TrainError::DatasetShape {
            expected: g.input_shape().clone(),
            found: ds.shape().clone(),
        });
    }
    Ok(())
}

/// Minibatch SGD with momentum on the train split. Returns the trained weights
/// and the mean train-split loss before and after training.
pub fn fit(
    g: &NetworkGraph,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(WeightStore, [f64; 2]), TrainError> {
    cfg.validate()?;
    check_dataset(g, ds)?;
    let mut order = ds.indices(Split::Train);
    if order.is_empty() {
        return Err(TrainError::EmptySplit(Split::Train));
    }
    let mut w = init_weights(g, cfg.seed);
    let initial =
        evaluate(g, &w, ds, Split::Train).map_err(|_| TrainError::Diverged { epoch: 0 })?;
    let mut velocity = WeightStore::zeros(g);
    let mut rng = rng::chacha(rng::derive_seed(&[stream::SHUFFLE, cfg.seed]));
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = gather(ds, chunk);
            let (batch_loss, grads) = match loss_and_grad(g, &w, &x, &y) {
                Ok(r) => r,
                Err(TrainError::NonFinite(_)) => return Err(TrainError::Diverged { epoch }),
                Err(e) => return Err(e),
            };
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            let (lr, mu) = (cfg.learning_rate, cfg.momentum);
            velocity.zip_mut(&grads, |v, gr| *v = mu * *v - lr * gr);
            w.zip_mut(&velocity, |p, v| *p += v);
        }
    }
    let last = cfg.epochs.saturating_sub(1);
    let final_eval =
        evaluate(g, &w, ds, Split::Train).map_err(|_| TrainError::Diverged { epoch: last })?;
    if !final_eval.loss.is_finite() {
        return Err(TrainError::Diverged { epoch: last });
    }
    Ok((w, [initial.loss, final_eval.loss]))
}

/// Train on the train split and evaluate on the val split.
pub fn train(
    g: &NetworkGraph,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(WeightStore, EvalResult), TrainError> {
    let (w, _) = fit(g, ds, cfg)?;
    let eval = evaluate(g, &w, ds, Split::Val)?;
    Ok((w, eval))
}

/// Argmax accuracy (ties go to the lowest class index) and mean cross-entropy.
pub fn evaluate(
    g: &NetworkGraph,
    w: &WeightStore,
    ds: &LabeledDataset,
    split: Split,
) -> Result<EvalResult, TrainError> {
    check_dataset(g, ds)?;
    let indices = ds.indices(split);
    if indices.is_empty() {
        return Err(TrainError::EmptySplit(split));
    }
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = gather(ds, chunk);
        let pass = forward(g, w, &x)?;
        let k = g.shapes()[pass.logit_vertex].numel();
        check_labels(&y, k)?;
        let (batch_loss, _) = cross_entropy(pass.logits(), &y, k);
        total_loss += batch_loss;
        for (row, &label) in pass.logits().chunks(k).zip(&y) {
            if argmax(row) == label {
                correct += 1;
            }
        }
    }
    Ok(EvalResult {
        accuracy: correct as f64 / indices.len() as f64,
        loss: total_loss / indices.len() as f64,
    })
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// Vertex id, parameter index (weights then biases), analytic, numeric.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Weight `c` of vertex `i`, with biases numbered after the weights.
fn param_mut(store: &mut WeightStore, i: usize, c: usize) -> &mut f64 {
    let l = store.layer_mut(i).expect("aligned layer");
    let n_w = l.weight.len();
    if c < n_w {
        &mut l.weight[c]
    } else {
        &mut l.bias[c - n_w]
    }
}

pub const GRAD_CHECK_MIN_COORDS: usize = 50;

/// Compare analytic gradients with central differences on a sample of at
/// least 50 coordinates per trainable vertex (all of them if fewer exist).
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn grad_check(
    g: &NetworkGraph,
    w: &WeightStore,
    inputs: &[f64],
    labels: &[usize],
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport, TrainError> {
    let (_, analytic) = loss_and_grad(g, w, inputs, labels)?;
    let mut rng = rng::chacha(seed);
    let mut probe = w.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coordinates: 0,
        worst: None,
    };
    for (i, v) in g.vertices().iter().enumerate() {
        let Some(layer) = w.layer(i) else { continue };
        let n_w = layer.weight.len();
        let total = n_w + layer.bias.len();
        let mut coords: Vec<usize> = (0..total).collect();
        coords.shuffle(&mut rng);
        coords.truncate(GRAD_CHECK_MIN_COORDS);
        let grads = analytic.layer(i).expect("aligned grads");
        for c in coords {
            let original = *param_mut(&mut probe, i, c);
            *param_mut(&mut probe, i, c) = original + eps;
            let plus = loss(g, &probe, inputs, labels)?;
            *param_mut(&mut probe, i, c) = original - eps;
            let minus = loss(g, &probe, inputs, labels)?;
            *param_mut(&mut probe, i, c) = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = if c < n_w {
                grads.weight[c]
            } else {
                grads.bias[c - n_w]
            };
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((v.id.clone(), c, a, numeric));
            }
        }
    }
    Ok(report)
}
