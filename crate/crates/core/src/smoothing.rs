//! Label smoothing: global, locally adaptive k-NN, and the two-phase deep
//! k-NN pipeline.
//!
//! Global smoothing pulls every label toward the uniform distribution by the
//! same amount. The k-NN variant adds a second knob that trades the uniform
//! component against the average label of the example's neighbors in the
//! logits space of a preliminary model.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::knn::knn_label;
use crate::label::SoftLabel;
use crate::nn::{forward_logits, targets_matrix, train, TrainConfig, TrainedModel};

/// Hyperparameters of k-NN label smoothing: `a` weights original label vs.
/// smoothing, `b` weights global-uniform vs. local k-NN smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    pub k: usize,
    pub a: f64,
    pub b: f64,
}

impl SmoothingParams {
    pub fn new(k: usize, a: f64, b: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k must be >= 1".to_string()));
        }
        check_unit("a", a)?;
        check_unit("b", b)?;
        Ok(SmoothingParams { k, a, b })
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be in [0, 1], got {v}")))
    }
}

/// Global label smoothing: `(1-a) * y + (a/L) * 1_L`.
pub fn global_label_smooth(y: &SoftLabel, a: f64) -> Result<SoftLabel> {
    check_unit("a", a)?;
    let uniform = a / y.num_classes() as f64;
    let smoothed = y.probs().iter().map(|&p| (1.0 - a) * p + uniform).collect();
    Ok(SoftLabel::new_unchecked(smoothed))
}

/// k-NN label smoothing:
/// `(1-a) * y + a * (b * (1/L) * 1_L + (1-b) * eta_k)`.
pub fn knn_smooth_label(y: &SoftLabel, eta_k: &SoftLabel, a: f64, b: f64) -> Result<SoftLabel> {
    check_unit("a", a)?;
    check_unit("b", b)?;
    if y.num_classes() != eta_k.num_classes() {
        return Err(Error::shape(format!(
            "label has {} classes but k-NN label has {}",
            y.num_classes(),
            eta_k.num_classes()
        )));
    }
    let uniform = 1.0 / y.num_classes() as f64;
    let smoothed = y
        .probs()
        .iter()
        .zip(eta_k.probs())
        .map(|(&yj, &ej)| (1.0 - a) * yj + a * (b * uniform + (1.0 - b) * ej))
        .collect();
    Ok(SoftLabel::new_unchecked(smoothed))
}

/// Smooth every label of a set against the whole set: label `i` becomes
/// `knn_smooth_label(y_i, eta_k(points_i), a, b)` where the neighbor set is
/// taken over all rows of `points` (including the point itself).
pub fn knn_smooth_dataset(
    points: &Array2<f64>,
    labels: &[SoftLabel],
    params: &SmoothingParams,
) -> Result<Vec<SoftLabel>> {
    if labels.len() != points.nrows() {
        return Err(Error::shape(format!(
            "{} labels for {} points",
            labels.len(),
            points.nrows()
        )));
    }
    if params.k > points.nrows() {
        return Err(Error::param(format!(
            "k = {} exceeds the number of points {}",
            params.k,
            points.nrows()
        )));
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let eta = knn_label(&points.row(i), &points.view(), labels, params.k)?;
            knn_smooth_label(y, &eta, params.a, params.b)
        })
        .collect()
}

/// Seeds and shared training hyperparameters of the two-phase pipeline.
///
/// The two phases have independent seeds; `train.seed` is ignored in favor
/// of these.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub phase1_seed: u64,
    pub phase2_seed: u64,
}

/// Everything the two-phase pipeline produces. The phase-1 model and the
/// smoothed labels are kept for inspection; `model` is the deliverable.
#[derive(Debug)]
pub struct PipelineOutput {
    pub model: TrainedModel,
    pub phase1_model: TrainedModel,
    pub smoothed_labels: Vec<SoftLabel>,
}

/// Deep k-NN locally adaptive label smoothing.
///
/// Phase 1 trains a model on the original labels with plain soft
/// cross-entropy. Its logits over the training points become the embedding
/// space: each label is replaced by its k-NN smoothed version computed
/// against `(logits_1..logits_n, y_1..y_n)`. Phase 2 retrains from scratch
/// on the smoothed labels.
pub fn deep_knn_pipeline(
    features: &Array2<f64>,
    labels: &[SoftLabel],
    layer_sizes: &[usize],
    cfg: &PipelineConfig,
    smoothing: &SmoothingParams,
) -> Result<PipelineOutput> {
    if smoothing.k > features.nrows() {
        return Err(Error::param(format!(
            "k = {} exceeds the number of training points {}",
            smoothing.k,
            features.nrows()
        )));
    }
    let targets = targets_matrix(labels)?;

    let mut phase1_cfg = cfg.train.clone();
    phase1_cfg.seed = cfg.phase1_seed;
    phase1_cfg.loss = crate::nn::LossSpec::SoftCrossEntropy;
    let phase1_model = train(features, &targets, layer_sizes, &phase1_cfg)?;

    let logits = forward_logits(&phase1_model, &features.view())?;
    let smoothed_labels = knn_smooth_dataset(&logits, labels, smoothing)?;
    let smoothed_targets = targets_matrix(&smoothed_labels)?;

    let mut phase2_cfg = cfg.train.clone();
    phase2_cfg.seed = cfg.phase2_seed;
    phase2_cfg.loss = crate::nn::LossSpec::SoftCrossEntropy;
    let model = train(features, &smoothed_targets, layer_sizes, &phase2_cfg)?;

    Ok(PipelineOutput {
        model,
        phase1_model,
        smoothed_labels,
    })
}
