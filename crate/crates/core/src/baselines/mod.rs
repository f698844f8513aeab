//! Churn-reduction baselines: output regularization, anchoring, mixup,
//! co-distillation, bi-tempered loss, and ensembling.

pub mod bitempered;

pub use bitempered::bitempered_loss;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{argmax, SoftLabel};
use crate::nn::{
    backprop, forward_with_cache, softmax_probs, AdamState, Batch, Gradients, LossSpec, LpNorm,
    ModelParams, TrainConfig, CE_LOG_EPS,
};
use crate::seed::{derive_seed, stream};

/// A training method together with its hyperparameters.
///
/// This is the unit a sweep iterates over; [`std::fmt::Display`] renders the
/// stable fingerprint used in reports and seed derivation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    /// Train for accuracy only.
    Control,
    /// Globally smoothed targets.
    LabelSmoothing { a: f64 },
    /// Two-phase locally adaptive k-NN label smoothing.
    KnnLs { k: usize, a: f64, b: f64 },
    /// Cross-entropy plus an `l1`/`l2` penalty on the logits.
    LpReg { a: f64, p: LpNorm },
    /// Targets blended toward a fixed preliminary model's predictions.
    Anchor { a: f64 },
    /// Two peer models with a prediction-divergence penalty.
    Codistill { a: f64, psi: PsiKind, n_warm: u64 },
    /// Bi-tempered logistic loss.
    #[serde(rename = "bitempered")]
    BiTempered {
        t1: f64,
        t2: f64,
        #[serde(default = "default_bitempered_iters")]
        n_iters: usize,
    },
    /// Convex combinations of random example pairs.
    Mixup { a: f64 },
    /// `m` independently trained models, predictions uniformly averaged.
    Ensemble { m: usize },
}

fn default_bitempered_iters() -> usize {
    5
}

impl MethodSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        match self {
            MethodSpec::Control => Ok(()),
            MethodSpec::LabelSmoothing { a } => unit("a", *a),
            MethodSpec::KnnLs { k, a, b } => {
                if *k == 0 {
                    return Err(Error::param("k must be >= 1".to_string()));
                }
                unit("a", *a)?;
                unit("b", *b)
            }
            MethodSpec::LpReg { a, .. } => {
                if *a >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::param(format!("a must be >= 0, got {a}")))
                }
            }
            MethodSpec::Anchor { a } => unit("a", *a),
            MethodSpec::Codistill { a, .. } => {
                if *a >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::param(format!("a must be >= 0, got {a}")))
                }
            }
            MethodSpec::BiTempered { t1, t2, n_iters } => {
                if !(*t1 > 0.0 && *t1 <= 1.0) {
                    Err(Error::param(format!("t1 must be in (0, 1], got {t1}")))
                } else if t2.is_nan() || *t2 < 1.0 {
                    Err(Error::param(format!("t2 must be >= 1, got {t2}")))
                } else if *n_iters == 0 {
                    Err(Error::param("n_iters must be >= 1".to_string()))
                } else {
                    Ok(())
                }
            }
            MethodSpec::Mixup { a } => {
                if *a > 0.0 {
                    Ok(())
                } else {
                    Err(Error::param(format!("mixup a must be > 0, got {a}")))
                }
            }
            MethodSpec::Ensemble { m } => {
                if *m >= 1 {
                    Ok(())
                } else {
                    Err(Error::param("ensemble needs m >= 1".to_string()))
                }
            }
        }
    }
}

impl std::fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MethodSpec::Control => write!(f, "control"),
            MethodSpec::LabelSmoothing { a } => write!(f, "label_smoothing(a={a})"),
            MethodSpec::KnnLs { k, a, b } => write!(f, "knn_ls(k={k},a={a},b={b})"),
            MethodSpec::LpReg { a, p } => write!(f, "lp_reg(a={a},p={p})"),
            MethodSpec::Anchor { a } => write!(f, "anchor(a={a})"),
            MethodSpec::Codistill { a, psi, n_warm } => {
                write!(f, "codistill(a={a},psi={psi},n_warm={n_warm})")
            }
            MethodSpec::BiTempered { t1, t2, n_iters } => {
                write!(f, "bitempered(t1={t1},t2={t2},n_iters={n_iters})")
            }
            MethodSpec::Mixup { a } => write!(f, "mixup(a={a})"),
            MethodSpec::Ensemble { m } => write!(f, "ensemble(m={m})"),
        }
    }
}

/// Coupling divergence for co-distillation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiKind {
    /// Cross-entropy `-sum_j p1_j ln p2_j`.
    Ce,
    /// `KL(p1 || p2)`.
    Kl,
}

impl std::fmt::Display for PsiKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PsiKind::Ce => write!(f, "ce"),
            PsiKind::Kl => write!(f, "kl"),
        }
    }
}

/// Loss of logits under cross-entropy plus `a * ||logits||_p`, averaged over
/// the batch.
pub fn lp_reg_loss(
    logits: &ArrayView2<f64>,
    targets: &ArrayView2<f64>,
    a: f64,
    p: LpNorm,
) -> Result<f64> {
    let spec = LossSpec::LpRegularized { weight: a, norm: p };
    let (value, _) = spec.value_and_logit_grad(&logits.to_owned(), &targets.to_owned())?;
    Ok(value)
}

/// Blend a label toward a fixed preliminary model's prediction:
/// `(1-a)*y + a*prelim`.
pub fn anchor_labels(y: &SoftLabel, prelim_probs: &SoftLabel, a: f64) -> Result<SoftLabel> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::param(format!("anchor a must be in [0, 1], got {a}")));
    }
    if y.num_classes() != prelim_probs.num_classes() {
        return Err(Error::shape(format!(
            "label has {} classes but preliminary prediction has {}",
            y.num_classes(),
            prelim_probs.num_classes()
        )));
    }
    let mixed = y
        .probs()
        .iter()
        .zip(prelim_probs.probs())
        .map(|(&yj, &pj)| (1.0 - a) * yj + a * pj)
        .collect();
    Ok(SoftLabel::new_unchecked(mixed))
}

/// Deterministic core of mixup: row `i` of the output is
/// `lambda_i * row(first_i) + (1 - lambda_i) * row(second_i)` for features
/// and targets alike.
pub fn mix_rows(batch: &Batch, pairs: &[(usize, usize)], lambdas: &[f64]) -> Result<Batch> {
    if pairs.len() != lambdas.len() {
        return Err(Error::shape(format!(
            "{} pairs but {} lambdas",
            pairs.len(),
            lambdas.len()
        )));
    }
    let m = batch.len();
    let d = batch.features().ncols();
    let l = batch.targets().ncols();
    let mut features = Array2::zeros((pairs.len(), d));
    let mut targets = Array2::zeros((pairs.len(), l));
    for (row, (&(i, j), &lam)) in pairs.iter().zip(lambdas).enumerate() {
        if i >= m || j >= m {
            return Err(Error::param(format!(
                "mixup pair ({i}, {j}) out of range for batch of {m}"
            )));
        }
        if !(0.0..=1.0).contains(&lam) {
            return Err(Error::param(format!("mixup lambda {lam} outside [0, 1]")));
        }
        for c in 0..d {
            features[(row, c)] =
                lam * batch.features()[(i, c)] + (1.0 - lam) * batch.features()[(j, c)];
        }
        for c in 0..l {
            targets[(row, c)] =
                lam * batch.targets()[(i, c)] + (1.0 - lam) * batch.targets()[(j, c)];
        }
    }
    Batch::new(features, targets)
}

/// Mixup: every output row combines the matching input row with a random
/// partner (drawn with replacement) under a `Beta(a, a)` weight.
pub fn mixup_batch(batch: &Batch, a: f64, rng: &mut impl Rng) -> Result<Batch> {
    if a <= 0.0 || !a.is_finite() {
        return Err(Error::param(format!("mixup a must be > 0, got {a}")));
    }
    if batch.len() < 2 {
        return Err(Error::param(
            "mixup needs a batch of at least 2 examples".to_string(),
        ));
    }
    let beta = Beta::new(a, a).expect("a > 0 checked above");
    let m = batch.len();
    let mut pairs = Vec::with_capacity(m);
    let mut lambdas = Vec::with_capacity(m);
    for i in 0..m {
        lambdas.push(beta.sample(rng));
        pairs.push((i, rng.gen_range(0..m)));
    }
    mix_rows(batch, &pairs, &lambdas)
}

/// Co-distillation loss for one example:
/// `CE(p1, y) + CE(p2, y) + gate * Psi(p1, p2)` where `gate` is 0 before
/// `n_warm` steps and `a` afterwards.
pub fn codistill_loss(
    probs1: &SoftLabel,
    probs2: &SoftLabel,
    target: &SoftLabel,
    a: f64,
    psi: PsiKind,
    step: u64,
    n_warm: u64,
) -> Result<f64> {
    if a < 0.0 || !a.is_finite() {
        return Err(Error::param(format!("codistill a must be >= 0, got {a}")));
    }
    if probs1.num_classes() != probs2.num_classes() || probs1.num_classes() != target.num_classes()
    {
        return Err(Error::shape(
            "codistill inputs have mismatched class counts".to_string(),
        ));
    }
    let ce = |p: &SoftLabel| -> f64 {
        target
            .probs()
            .iter()
            .zip(p.probs())
            .map(|(&t, &q)| -t * q.max(CE_LOG_EPS).ln())
            .sum()
    };
    let gate = if step < n_warm { 0.0 } else { a };
    Ok(ce(probs1) + ce(probs2) + gate * psi_value(probs1.probs(), probs2.probs(), psi))
}

/// `Psi(p1, p2)`: cross-entropy or KL, single direction, probabilities
/// clamped at [`CE_LOG_EPS`] inside logarithms.
fn psi_value(p1: &[f64], p2: &[f64], psi: PsiKind) -> f64 {
    match psi {
        PsiKind::Ce => p1
            .iter()
            .zip(p2)
            .map(|(&a, &b)| -a * b.max(CE_LOG_EPS).ln())
            .sum(),
        PsiKind::Kl => p1
            .iter()
            .zip(p2)
            .map(|(&a, &b)| a * (a.max(CE_LOG_EPS).ln() - b.max(CE_LOG_EPS).ln()))
            .sum(),
    }
}

/// `d Psi / d p1` and `d Psi / d p2` for one example.
fn psi_prob_grads(p1: &[f64], p2: &[f64], psi: PsiKind) -> (Vec<f64>, Vec<f64>) {
    let d2: Vec<f64> = p1
        .iter()
        .zip(p2)
        .map(|(&a, &b)| if b > CE_LOG_EPS { -a / b } else { 0.0 })
        .collect();
    let d1: Vec<f64> = match psi {
        PsiKind::Ce => p2.iter().map(|&b| -b.max(CE_LOG_EPS).ln()).collect(),
        PsiKind::Kl => p1
            .iter()
            .zip(p2)
            .map(|(&a, &b)| {
                let da = if a > CE_LOG_EPS { 1.0 } else { 0.0 };
                a.max(CE_LOG_EPS).ln() + da - b.max(CE_LOG_EPS).ln()
            })
            .collect(),
    };
    (d1, d2)
}

/// Pull a probability-space gradient back through the softmax:
/// `dz_j = p_j * (g_j - <g, p>)`.
fn softmax_backward(probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(dprobs).map(|(&p, &g)| p * g).sum();
    probs
        .iter()
        .zip(dprobs)
        .map(|(&p, &g)| p * (g - dot))
        .collect()
}

/// Combined co-distillation loss over a batch plus the parameter gradients
/// of both peer models. `gate` is the already-resolved coupling weight.
pub fn codistill_value_and_grads(
    params1: &ModelParams,
    params2: &ModelParams,
    batch: &Batch,
    gate: f64,
    psi: PsiKind,
) -> Result<(f64, Gradients, Gradients)> {
    let cache1 = forward_with_cache(params1, &batch.features().view())?;
    let cache2 = forward_with_cache(params2, &batch.features().view())?;
    let probs1 = softmax_probs(&cache1.logits().view())?;
    let probs2 = softmax_probs(&cache2.logits().view())?;
    let targets = batch.targets();
    let m = batch.len() as f64;

    let (ce1, mut dlogits1) =
        LossSpec::SoftCrossEntropy.value_and_logit_grad(cache1.logits(), targets)?;
    let (ce2, mut dlogits2) =
        LossSpec::SoftCrossEntropy.value_and_logit_grad(cache2.logits(), targets)?;

    let mut value = ce1 + ce2;
    if gate != 0.0 {
        for i in 0..batch.len() {
            let p1 = probs1.row(i);
            let p1 = p1.as_slice().unwrap();
            let p2 = probs2.row(i);
            let p2 = p2.as_slice().unwrap();
            value += gate * psi_value(p1, p2, psi) / m;
            let (d1, d2) = psi_prob_grads(p1, p2, psi);
            for (j, g) in softmax_backward(p1, &d1).into_iter().enumerate() {
                dlogits1[(i, j)] += gate * g / m;
            }
            for (j, g) in softmax_backward(p2, &d2).into_iter().enumerate() {
                dlogits2[(i, j)] += gate * g / m;
            }
        }
    }

    let grads1 = backprop(params1, &cache1, &dlogits1);
    let grads2 = backprop(params2, &cache2, &dlogits2);
    Ok((value, grads1, grads2))
}

/// Train two peer models in lockstep on shared minibatches, coupling their
/// predictions once `n_warm` steps have passed. Returns both models; the
/// first one is the one whose predictions an experiment records.
pub fn codistill_train(
    features: &Array2<f64>,
    targets: &Array2<f64>,
    layer_sizes: &[usize],
    cfg: &TrainConfig,
    a: f64,
    psi: PsiKind,
    n_warm: u64,
) -> Result<(ModelParams, ModelParams)> {
    if a < 0.0 || !a.is_finite() {
        return Err(Error::param(format!("codistill a must be >= 0, got {a}")));
    }
    let n = features.nrows();
    if n == 0 {
        return Err(Error::config(
            "cannot train on an empty dataset".to_string(),
        ));
    }
    if cfg.epochs == 0 {
        return Err(Error::config("epochs must be >= 1".to_string()));
    }

    let mut params1 = crate::nn::init_mlp(layer_sizes, derive_seed(cfg.seed, stream::MEMBER))?;
    let mut params2 = crate::nn::init_mlp(layer_sizes, derive_seed(cfg.seed, stream::MEMBER + 1))?;
    let mut adam1 = AdamState::new(&params1, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    let mut adam2 = AdamState::new(&params2, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);

    let shuffle_base = derive_seed(cfg.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step: u64 = 0;
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(shuffle_base, epoch as u64));
        order.shuffle(&mut rng);
        for rows in order.chunks(cfg.batch_size) {
            let f = features.select(Axis(0), rows);
            let t = targets.select(Axis(0), rows);
            let batch = Batch::new(f, t)?;
            let gate = if step < n_warm { 0.0 } else { a };
            let (value, g1, g2) = codistill_value_and_grads(&params1, &params2, &batch, gate, psi)?;
            if !value.is_finite() {
                return Err(Error::numeric(format!(
                    "codistill loss {value} at step {step}"
                )));
            }
            adam1.apply(&mut params1, &g1);
            adam2.apply(&mut params2, &g2);
            step += 1;
        }
    }
    Ok((params1, params2))
}

/// Uniformly average the softmax outputs of `m` models and take the argmax
/// (ties toward the lowest class index).
pub fn ensemble_predict(
    models: &[ModelParams],
    features: &ArrayView2<f64>,
) -> Result<(Vec<usize>, Array2<f64>)> {
    if models.is_empty() {
        return Err(Error::param(
            "ensemble_predict needs at least one model".to_string(),
        ));
    }
    let arch = models[0].layer_sizes();
    if models.iter().any(|m| m.layer_sizes() != arch) {
        return Err(Error::param(
            "ensemble members must share an architecture".to_string(),
        ));
    }
    let mut mean: Array2<f64> = Array2::zeros((features.nrows(), models[0].output_dim()));
    for model in models {
        let logits = crate::nn::forward_logits(model, features)?;
        mean += &softmax_probs(&logits.view())?;
    }
    mean /= models.len() as f64;
    let classes = mean
        .outer_iter()
        .map(|row| argmax(row.as_slice().unwrap()))
        .collect();
    Ok((classes, mean))
}
