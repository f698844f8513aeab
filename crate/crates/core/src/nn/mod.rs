//! Minimal deterministic dense-network trainer.
//!
//! Forward pass with ReLU hidden layers, reverse-mode gradients, Adam
//! updates, and a seeded minibatch loop. Everything is `f64` and every bit
//! of randomness comes from the configured seed, so retraining with the same
//! configuration reproduces the exact same parameters.

mod adam;
mod loss;

pub use adam::AdamState;
pub use loss::{soft_cross_entropy, softmax_probs, LossSpec, LpNorm, CE_LOG_EPS};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label::{argmax, SoftLabel};
use crate::seed::{derive_seed, stream};

/// Weights and biases of a dense ReLU network, together with the
/// architecture and the seed that produced the initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>, // per layer, shape (fan_in, fan_out)
    biases: Vec<Array1<f64>>,
    seed: u64,
}

/// A trained model is just its final parameters.
pub type TrainedModel = ModelParams;

impl ModelParams {
    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    #[cfg(test)]
    pub(crate) fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    #[cfg(test)]
    pub(crate) fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    /// Width of the input layer.
    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Width of the output (logits) layer.
    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// All parameters as a flat vector; used by gradient checks.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten); used by gradient checks.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for l in 0..self.weights.len() {
            for w in self.weights[l].iter_mut() {
                *w = *it.next().expect("flat vector too short");
            }
            for b in self.biases[l].iter_mut() {
                *b = *it.next().expect("flat vector too short");
            }
        }
        assert!(it.next().is_none(), "flat vector too long");
    }
}

/// Per-layer parameter gradients, same shapes as [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Vec<Array2<f64>>,
    pub d_biases: Vec<Array1<f64>>,
}

impl Gradients {
    /// Flat view matching [`ModelParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.d_weights.iter().zip(&self.d_biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.d_weights
            .iter()
            .all(|w| w.iter().all(|v| v.is_finite()))
            && self
                .d_biases
                .iter()
                .all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            *a += b;
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            *a += b;
        }
    }
}

/// Glorot-uniform initialization: weights drawn from
/// `U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))`, biases zero.
/// Fully determined by `seed`.
pub fn init_mlp(layer_sizes: &[usize], seed: u64) -> Result<ModelParams> {
    if layer_sizes.len() < 2 {
        return Err(Error::config(format!(
            "need at least input and output layer sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::config(format!(
            "layer sizes must all be >= 1, got {layer_sizes:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new(-limit, limit);
        let vals: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| dist.sample(&mut rng))
            .collect();
        weights.push(Array2::from_shape_vec((fan_in, fan_out), vals).expect("shape is consistent"));
        biases.push(Array1::zeros(fan_out));
    }
    Ok(ModelParams {
        layer_sizes: layer_sizes.to_vec(),
        weights,
        biases,
        seed,
    })
}

/// Activations recorded during a forward pass, for reverse-mode gradients.
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l+1]` is the output of
    /// hidden layer `l` after ReLU.
    activations: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre_activations: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }
}

/// Forward pass keeping intermediate activations.
pub fn forward_with_cache(
    params: &ModelParams,
    features: &ArrayView2<f64>,
) -> Result<ForwardCache> {
    if features.ncols() != params.input_dim() {
        return Err(Error::shape(format!(
            "feature width {} does not match input layer size {}",
            features.ncols(),
            params.input_dim()
        )));
    }
    let n_layers = params.num_layers();
    let mut activations = Vec::with_capacity(n_layers);
    let mut pre_activations = Vec::with_capacity(n_layers - 1);
    activations.push(features.to_owned());
    for l in 0..n_layers {
        let z = activations[l].dot(&params.weights[l]) + &params.biases[l];
        if l + 1 < n_layers {
            activations.push(z.mapv(|v| v.max(0.0)));
            pre_activations.push(z);
        } else {
            return Ok(ForwardCache {
                activations,
                pre_activations,
                logits: z,
            });
        }
    }
    unreachable!("networks always have at least one layer")
}

/// Logits of `features`: affine layers with ReLU on all hidden layers and no
/// activation on the output.
pub fn forward_logits(params: &ModelParams, features: &ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(forward_with_cache(params, features)?.logits)
}

/// Reverse-mode gradients of a scalar loss given its gradient at the logits.
pub fn backprop(params: &ModelParams, cache: &ForwardCache, dlogits: &Array2<f64>) -> Gradients {
    let n_layers = params.num_layers();
    let mut d_weights = vec![Array2::zeros((0, 0)); n_layers];
    let mut d_biases = vec![Array1::zeros(0); n_layers];
    let mut delta = dlogits.clone();
    for l in (0..n_layers).rev() {
        d_weights[l] = cache.activations[l].t().dot(&delta);
        d_biases[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let upstream = delta.dot(&params.weights[l].t());
            let gate = cache.pre_activations[l - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            delta = upstream * &gate;
        }
    }
    Gradients {
        d_weights,
        d_biases,
    }
}

/// A minibatch: feature rows with one soft target per row.
#[derive(Debug, Clone)]
pub struct Batch {
    features: Array2<f64>,
    targets: Array2<f64>,
}

impl Batch {
    /// Validates that the batch is non-empty, shapes agree, and every target
    /// row is on the probability simplex.
    pub fn new(features: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::shape(
                "batch must contain at least one example".to_string(),
            ));
        }
        if features.nrows() != targets.nrows() {
            return Err(Error::shape(format!(
                "batch has {} feature rows but {} target rows",
                features.nrows(),
                targets.nrows()
            )));
        }
        for (i, row) in targets.outer_iter().enumerate() {
            let sum: f64 = row.sum();
            if row.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::shape(format!(
                    "target row {i} is not on the probability simplex (sum = {sum})"
                )));
            }
        }
        Ok(Batch { features, targets })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One gradient step: reverse-mode gradients of `loss` on `batch`, then an
/// Adam update with bias correction. Returns the loss value.
pub fn train_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    batch: &Batch,
    loss: &LossSpec,
) -> Result<f64> {
    let cache = forward_with_cache(params, &batch.features.view())?;
    let (value, dlogits) = loss.value_and_logit_grad(&cache.logits, &batch.targets)?;
    if !value.is_finite() {
        return Err(Error::numeric(format!(
            "loss {value} is not finite at step {}",
            adam.step_count() + 1
        )));
    }
    let grads = backprop(params, &cache, &dlogits);
    if !grads.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite gradient at step {}",
            adam.step_count() + 1
        )));
    }
    adam.apply(params, &grads);
    Ok(value)
}

/// Training hyperparameters. Defaults: minibatch size 128, Adam with
/// learning rate 0.001 and (0.9, 0.999, 1e-8).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub loss: LossSpec,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size: 128,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed,
            loss: LossSpec::SoftCrossEntropy,
        }
    }

    pub fn with_loss(mut self, loss: LossSpec) -> Self {
        self.loss = loss;
        self
    }
}

/// Assemble the minibatch for `rows` of the training set.
fn gather_batch(features: &Array2<f64>, targets: &Array2<f64>, rows: &[usize]) -> Result<Batch> {
    let f = features.select(Axis(0), rows);
    let t = targets.select(Axis(0), rows);
    Batch::new(f, t)
}

/// Train a fresh network on `(features, targets)`.
///
/// Minibatches are formed by a seeded shuffle each epoch (a distinct stream
/// per epoch derived from the run seed); the trailing partial batch is kept.
/// Fully deterministic given the configuration.
pub fn train(
    features: &Array2<f64>,
    targets: &Array2<f64>,
    layer_sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    train_with(features, targets, layer_sizes, cfg, |batch, _| Ok(batch))
}

/// [`train`] with a per-batch hook (used by mixup). The hook receives the
/// gathered batch and the global step index before the gradient step.
pub fn train_with(
    features: &Array2<f64>,
    targets: &Array2<f64>,
    layer_sizes: &[usize],
    cfg: &TrainConfig,
    mut batch_fn: impl FnMut(Batch, u64) -> Result<Batch>,
) -> Result<TrainedModel> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::config(
            "cannot train on an empty dataset".to_string(),
        ));
    }
    if targets.nrows() != n {
        return Err(Error::shape(format!(
            "{} feature rows but {} target rows",
            n,
            targets.nrows()
        )));
    }
    if cfg.epochs == 0 {
        return Err(Error::config("epochs must be >= 1".to_string()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be >= 1".to_string()));
    }

    let mut params = init_mlp(layer_sizes, cfg.seed)?;
    let mut adam = AdamState::new(&params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    let shuffle_base = derive_seed(cfg.seed, stream::SHUFFLE);
    let mut step: u64 = 0;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(shuffle_base, epoch as u64));
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for rows in order.chunks(cfg.batch_size) {
            let batch = gather_batch(features, targets, rows)?;
            let batch = batch_fn(batch, step)?;
            train_step(&mut params, &mut adam, &batch, &cfg.loss)?;
            step += 1;
        }
    }
    Ok(params)
}

/// Predicted class per row (argmax of the softmax, ties toward the lowest
/// class index) together with the full probability rows.
pub fn predict(
    params: &ModelParams,
    features: &ArrayView2<f64>,
) -> Result<(Vec<usize>, Array2<f64>)> {
    let logits = forward_logits(params, features)?;
    let probs = softmax_probs(&logits.view())?;
    let classes = probs
        .outer_iter()
        .map(|row| argmax(row.as_slice().unwrap()))
        .collect();
    Ok((classes, probs))
}

/// Convert a slice of soft labels to a dense row-per-example target matrix.
pub fn targets_matrix(labels: &[SoftLabel]) -> Result<Array2<f64>> {
    if labels.is_empty() {
        return Err(Error::shape("no labels given".to_string()));
    }
    let width = labels[0].num_classes();
    if labels.iter().any(|l| l.num_classes() != width) {
        return Err(Error::shape(
            "labels have inconsistent class counts".to_string(),
        ));
    }
    let mut m = Array2::zeros((labels.len(), width));
    for (i, l) in labels.iter().enumerate() {
        for (j, &p) in l.probs().iter().enumerate() {
            m[(i, j)] = p;
        }
    }
    Ok(m)
}
