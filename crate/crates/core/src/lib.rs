//! churn-lab: a training-stability laboratory.
//!
//! Retraining the same network on the same data with a different seed yields
//! a different model, and the two disagree on a surprising fraction of test
//! points even at equal accuracy. This crate measures that prediction churn
//! and implements a family of mitigations around one idea: replace each
//! training label with a locally adaptive smoothed version built from the
//! average label of its nearest neighbors in a preliminary model's logits
//! space.
//!
//! The pieces:
//!
//! * [`nn`] — a small deterministic dense-network trainer (ReLU MLPs,
//!   soft-target cross-entropy, exact reverse-mode gradients, Adam);
//! * [`knn`] / [`smoothing`] — k-NN queries with tie-inclusive neighbor
//!   sets, global and k-NN label smoothing, and the two-phase deep k-NN
//!   pipeline;
//! * [`baselines`] — output regularization, anchoring, mixup,
//!   co-distillation, bi-tempered loss, ensembles;
//! * [`churn`] — churn, correctness-sliced churn, pairwise aggregation,
//!   Pareto frontiers, and accuracy-first model selection;
//! * [`theory`] — evaluators for the k-NN label convergence bounds and
//!   Monte Carlo rate experiments against known label functions;
//! * [`data`] — synthetic generators, CSV ingestion, deterministic splits;
//! * [`harness`] — the config-driven experiment runner behind the CLI.
//!
//! Everything is deterministic: a configuration and its seeds fully
//! determine every trained weight and every output byte.

pub mod baselines;
pub mod churn;
pub mod data;
pub mod error;
pub mod harness;
pub mod knn;
pub mod label;
pub mod nn;
pub mod seed;
pub mod smoothing;
pub mod theory;

pub use error::{Error, Result};
pub use label::{one_hot, SoftLabel};
