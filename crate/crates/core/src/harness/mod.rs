//! Config-driven experiment runner: repeated-seed runs per method, grid
//! sweeps, and persisted reports.
//!
//! Determinism contract: a config (plus its base seed) fully determines
//! every output byte. Run `r` of an experiment uses seed `base_seed + r`;
//! sweep grid points offset the base seed by a stable hash of their
//! hyperparameters, so results do not depend on scheduling or worker count.

pub mod config;
pub mod report;

pub use config::{ConfigFile, DatasetConfig, ExperimentSection, SweepSection, TheorySection};
pub use report::{write_report, MethodResult, RenderedReport};

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::baselines::{codistill_train, ensemble_predict, mixup_batch, MethodSpec};
use crate::churn::{pairwise_stats, ChurnReport, RunRecord};
use crate::data::{gen_smooth_problem, gen_two_gaussians, load_csv, split, Dataset};
use crate::error::{Error, Result};
use crate::label::SoftLabel;
use crate::nn::{predict, targets_matrix, train, train_with, LossSpec, ModelParams, TrainConfig};
use crate::seed::{derive_seed, rng_for, stable_hash, stream};
use crate::smoothing::{deep_knn_pipeline, PipelineConfig, SmoothingParams};
use crate::theory::{
    rate_csv, rate_experiment, theorem1_bound, theorem2_bound, KSchedule, RateConfig,
    SyntheticProblem, Theorem1Params,
};

/// A fixed train/test split shared by every method and run of an experiment.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Materialize the dataset named by the config and split it once.
pub fn prepare_data(cfg: &DatasetConfig) -> Result<SplitData> {
    let (dataset, test_fraction, split_seed) = match cfg {
        DatasetConfig::TwoGaussians {
            n,
            flip_fraction,
            seed,
            test_fraction,
            split_seed,
        } => (
            gen_two_gaussians(*n, *flip_fraction, *seed)?,
            *test_fraction,
            *split_seed,
        ),
        DatasetConfig::Smooth {
            n,
            dim,
            eta,
            eta_value,
            seed,
            test_fraction,
            split_seed,
        } => {
            let spec = eta.to_spec(*eta_value)?;
            let (dataset, _) = gen_smooth_problem(*n, *dim, spec, *seed)?;
            (dataset, *test_fraction, *split_seed)
        }
        DatasetConfig::Csv {
            path,
            label_column,
            has_header,
            test_fraction,
            split_seed,
        } => (
            load_csv(path, label_column, *has_header)?,
            *test_fraction,
            *split_seed,
        ),
    };
    let (train, test) = split(&dataset, test_fraction, split_seed)?;
    Ok(SplitData { train, test })
}

/// Architecture and optimizer settings shared by all runs.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl TrainSettings {
    pub fn from_config(cfg: &ConfigFile) -> Self {
        TrainSettings {
            hidden_layers: cfg.model.hidden_layers.clone(),
            epochs: cfg.train.epochs,
            batch_size: cfg.train.batch_size,
            learning_rate: cfg.train.learning_rate,
        }
    }

    fn layer_sizes(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(num_classes);
        sizes
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.epochs, seed);
        cfg.batch_size = self.batch_size;
        cfg.learning_rate = self.learning_rate;
        cfg
    }
}

/// A trained predictor; ensembles carry all their members.
enum Predictor {
    Single(ModelParams),
    Ensemble(Vec<ModelParams>),
}

impl Predictor {
    fn predict(&self, features: &Array2<f64>) -> Result<(Vec<usize>, Array2<f64>)> {
        match self {
            Predictor::Single(model) => predict(model, &features.view()),
            Predictor::Ensemble(models) => ensemble_predict(models, &features.view()),
        }
    }
}

/// Artifacts fixed across the runs of one experiment.
struct SharedArtifacts {
    /// The anchor baseline's preliminary predictions on the training set.
    anchor_prelim: Option<Vec<SoftLabel>>,
}

/// Everything `run_experiment` produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub report: ChurnReport,
}

/// Run one method `n_runs` times on a fixed split and aggregate the churn
/// report. Run `r` uses seed `base_seed + r`; the split and the anchor
/// preliminary model are fixed across runs.
pub fn run_experiment_on(
    data: &SplitData,
    settings: &TrainSettings,
    method: &MethodSpec,
    n_runs: usize,
    base_seed: u64,
    anchor_prelim_seed: Option<u64>,
) -> Result<RunOutcome> {
    method.validate()?;
    if n_runs < 2 {
        return Err(Error::param(format!(
            "churn needs n_runs >= 2, got {n_runs}"
        )));
    }
    let layer_sizes = settings.layer_sizes(data.train.meta.dim, data.train.num_classes());
    let shared = SharedArtifacts {
        anchor_prelim: match method {
            MethodSpec::Anchor { .. } => {
                let seed = anchor_prelim_seed
                    .unwrap_or_else(|| derive_seed(base_seed, stream::ANCHOR_PRELIM));
                Some(train_anchor_prelim(data, settings, &layer_sizes, seed)?)
            }
            _ => None,
        },
    };

    let records: Vec<RunRecord> = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let run_seed = base_seed.wrapping_add(r as u64);
            run_once(data, settings, &layer_sizes, method, run_seed, &shared).map_err(|e| {
                Error::Run {
                    run: r,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<_>>()?;
    let report = pairwise_stats(&records, &data.test.hard_labels)?;
    Ok(RunOutcome { records, report })
}

fn train_anchor_prelim(
    data: &SplitData,
    settings: &TrainSettings,
    layer_sizes: &[usize],
    seed: u64,
) -> Result<Vec<SoftLabel>> {
    let targets = targets_matrix(&data.train.soft_labels)?;
    let model = train(
        &data.train.features,
        &targets,
        layer_sizes,
        &settings.train_config(seed),
    )?;
    let (_, probs) = predict(&model, &data.train.features.view())?;
    Ok(probs
        .outer_iter()
        .map(|row| SoftLabel::new_unchecked(row.to_vec()))
        .collect())
}

fn run_once(
    data: &SplitData,
    settings: &TrainSettings,
    layer_sizes: &[usize],
    method: &MethodSpec,
    run_seed: u64,
    shared: &SharedArtifacts,
) -> Result<RunRecord> {
    let predictor = train_method(data, settings, layer_sizes, method, run_seed, shared)?;
    let (classes, probs) = predictor.predict(&data.test.features)?;
    RunRecord::new(
        method.to_string(),
        run_seed,
        classes,
        probs.outer_iter().map(|row| row.to_vec()).collect(),
    )
}

fn train_method(
    data: &SplitData,
    settings: &TrainSettings,
    layer_sizes: &[usize],
    method: &MethodSpec,
    run_seed: u64,
    shared: &SharedArtifacts,
) -> Result<Predictor> {
    let features = &data.train.features;
    let labels = &data.train.soft_labels;
    let cfg = settings.train_config(run_seed);
    match method {
        MethodSpec::Control => {
            let targets = targets_matrix(labels)?;
            Ok(Predictor::Single(train(
                features,
                &targets,
                layer_sizes,
                &cfg,
            )?))
        }
        MethodSpec::LabelSmoothing { a } => {
            let smoothed = labels
                .iter()
                .map(|y| crate::smoothing::global_label_smooth(y, *a))
                .collect::<Result<Vec<_>>>()?;
            let targets = targets_matrix(&smoothed)?;
            Ok(Predictor::Single(train(
                features,
                &targets,
                layer_sizes,
                &cfg,
            )?))
        }
        MethodSpec::KnnLs { k, a, b } => {
            let pipeline_cfg = PipelineConfig {
                train: cfg,
                phase1_seed: derive_seed(run_seed, stream::KNN_PHASE1),
                phase2_seed: run_seed,
            };
            let smoothing = SmoothingParams::new(*k, *a, *b)?;
            let out = deep_knn_pipeline(features, labels, layer_sizes, &pipeline_cfg, &smoothing)?;
            Ok(Predictor::Single(out.model))
        }
        MethodSpec::LpReg { a, p } => {
            let targets = targets_matrix(labels)?;
            let cfg = cfg.with_loss(LossSpec::LpRegularized {
                weight: *a,
                norm: *p,
            });
            Ok(Predictor::Single(train(
                features,
                &targets,
                layer_sizes,
                &cfg,
            )?))
        }
        MethodSpec::Anchor { a } => {
            let prelim = shared
                .anchor_prelim
                .as_ref()
                .expect("anchor artifacts prepared by run_experiment_on");
            let anchored = labels
                .iter()
                .zip(prelim)
                .map(|(y, p)| crate::baselines::anchor_labels(y, p, *a))
                .collect::<Result<Vec<_>>>()?;
            let targets = targets_matrix(&anchored)?;
            Ok(Predictor::Single(train(
                features,
                &targets,
                layer_sizes,
                &cfg,
            )?))
        }
        MethodSpec::Codistill { a, psi, n_warm } => {
            let targets = targets_matrix(labels)?;
            let (first, _second) =
                codistill_train(features, &targets, layer_sizes, &cfg, *a, *psi, *n_warm)?;
            Ok(Predictor::Single(first))
        }
        MethodSpec::BiTempered { t1, t2, n_iters } => {
            let targets = targets_matrix(labels)?;
            let cfg = cfg.with_loss(LossSpec::BiTempered {
                t1: *t1,
                t2: *t2,
                n_iters: *n_iters,
            });
            Ok(Predictor::Single(train(
                features,
                &targets,
                layer_sizes,
                &cfg,
            )?))
        }
        MethodSpec::Mixup { a } => {
            let targets = targets_matrix(labels)?;
            let mix_a = *a;
            let mut rng = rng_for(run_seed, stream::MIXUP);
            let model = train_with(features, &targets, layer_sizes, &cfg, move |batch, _| {
                if batch.len() < 2 {
                    return Ok(batch);
                }
                mixup_batch(&batch, mix_a, &mut rng)
            })?;
            Ok(Predictor::Single(model))
        }
        MethodSpec::Ensemble { m } => {
            let targets = targets_matrix(labels)?;
            let member_base = derive_seed(run_seed, stream::MEMBER);
            let models = (0..*m)
                .map(|j| {
                    let cfg = settings.train_config(derive_seed(member_base, j as u64));
                    train(features, &targets, layer_sizes, &cfg)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Predictor::Ensemble(models))
        }
    }
}

/// Expand the configured method into the sweep grid, taking value lists from
/// `[sweep]` where present and from the built-in search grid otherwise.
/// Points are ordered lexicographically over the declared hyperparameter
/// order of the method.
pub fn expand_grid(base: &MethodSpec, sweep: &SweepSection) -> Vec<MethodSpec> {
    let a_smooth = || vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.5, 0.8, 0.9, 1.0];
    let a_reg = || vec![0.001, 0.01, 0.05, 0.1, 0.2, 0.5];
    match base {
        MethodSpec::Control => vec![MethodSpec::Control],
        MethodSpec::LabelSmoothing { .. } => sweep
            .a
            .clone()
            .unwrap_or_else(a_smooth)
            .into_iter()
            .map(|a| MethodSpec::LabelSmoothing { a })
            .collect(),
        MethodSpec::KnnLs { .. } => {
            let ks = sweep.k.clone().unwrap_or_else(|| vec![5, 10, 100, 500]);
            let avals = sweep.a.clone().unwrap_or_else(a_smooth);
            let bvals = sweep
                .b
                .clone()
                .unwrap_or_else(|| vec![0.0, 0.05, 0.1, 0.5, 0.9]);
            let mut grid = Vec::new();
            for &k in &ks {
                for &a in &avals {
                    for &b in &bvals {
                        grid.push(MethodSpec::KnnLs { k, a, b });
                    }
                }
            }
            grid
        }
        MethodSpec::LpReg { p, .. } => {
            let avals = sweep.a.clone().unwrap_or_else(a_reg);
            let ps = sweep.p.clone().unwrap_or_else(|| vec![*p]);
            let mut grid = Vec::new();
            for &a in &avals {
                for &p in &ps {
                    grid.push(MethodSpec::LpReg { a, p });
                }
            }
            grid
        }
        MethodSpec::Anchor { .. } => sweep
            .a
            .clone()
            .unwrap_or_else(a_smooth)
            .into_iter()
            .map(|a| MethodSpec::Anchor { a })
            .collect(),
        MethodSpec::Codistill { psi, .. } => {
            let avals = sweep.a.clone().unwrap_or_else(a_reg);
            let psis = sweep.psi.clone().unwrap_or_else(|| vec![*psi]);
            let warms = sweep.n_warm.clone().unwrap_or_else(|| vec![1000, 2000]);
            let mut grid = Vec::new();
            for &a in &avals {
                for &psi in &psis {
                    for &n_warm in &warms {
                        grid.push(MethodSpec::Codistill { a, psi, n_warm });
                    }
                }
            }
            grid
        }
        MethodSpec::BiTempered { n_iters, .. } => {
            let t1s = sweep.t1.clone().unwrap_or_else(|| vec![0.3, 0.5, 0.7, 0.9]);
            let t2s = sweep.t2.clone().unwrap_or_else(|| vec![1.0, 2.0, 3.0, 4.0]);
            let mut grid = Vec::new();
            for &t1 in &t1s {
                for &t2 in &t2s {
                    grid.push(MethodSpec::BiTempered {
                        t1,
                        t2,
                        n_iters: *n_iters,
                    });
                }
            }
            grid
        }
        MethodSpec::Mixup { .. } => sweep
            .a
            .clone()
            .unwrap_or_else(|| vec![0.2, 0.3, 0.4, 0.5])
            .into_iter()
            .map(|a| MethodSpec::Mixup { a })
            .collect(),
        MethodSpec::Ensemble { .. } => sweep
            .m
            .clone()
            .unwrap_or_else(|| vec![3, 5])
            .into_iter()
            .map(|m| MethodSpec::Ensemble { m })
            .collect(),
    }
}

/// One sweep grid point: the method and its outcome (failures are recorded,
/// the sweep continues).
pub struct SweepEntry {
    pub method: MethodSpec,
    pub outcome: Result<RunOutcome>,
}

/// Run a whole sweep in grid order. The per-point base seed is
/// `base_seed + stable_hash(fingerprint)`, so every point is independent of
/// scheduling; the anchor preliminary seed is resolved once for the sweep.
pub fn run_sweep(
    data: &SplitData,
    settings: &TrainSettings,
    grid: &[MethodSpec],
    n_runs: usize,
    base_seed: u64,
    anchor_prelim_seed: Option<u64>,
    mut on_point: impl FnMut(&SweepEntry),
) -> Result<Vec<SweepEntry>> {
    if grid.is_empty() {
        return Err(Error::param("sweep grid is empty".to_string()));
    }
    let anchor_seed =
        Some(anchor_prelim_seed.unwrap_or_else(|| derive_seed(base_seed, stream::ANCHOR_PRELIM)));
    let mut entries = Vec::with_capacity(grid.len());
    for method in grid {
        let point_seed = base_seed.wrapping_add(stable_hash(&method.to_string()));
        let outcome = run_experiment_on(data, settings, method, n_runs, point_seed, anchor_seed);
        let entry = SweepEntry {
            method: method.clone(),
            outcome,
        };
        on_point(&entry);
        entries.push(entry);
    }
    Ok(entries)
}

/// `run` subcommand: one experiment, reports written under `out_dir`.
pub fn execute_run(cfg: &ConfigFile, out_dir: &Path) -> Result<RenderedReport> {
    let data = prepare_data(cfg.require_dataset()?)?;
    let settings = TrainSettings::from_config(cfg);
    let method = cfg.require_method()?;
    let outcome = run_experiment_on(
        &data,
        &settings,
        method,
        cfg.experiment.n_runs,
        cfg.experiment.base_seed,
        cfg.experiment.anchor_prelim_seed,
    )?;
    let results = vec![MethodResult {
        method: method.clone(),
        records: outcome.records,
        report: outcome.report,
    }];
    write_report(&results, &data.test.hard_labels, out_dir)
}

/// `sweep` subcommand: every grid point of the configured method, run
/// records flushed to `runs.jsonl` as each point completes.
pub fn execute_sweep(cfg: &ConfigFile, out_dir: &Path) -> Result<RenderedReport> {
    let data = prepare_data(cfg.require_dataset()?)?;
    let settings = TrainSettings::from_config(cfg);
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let grid = expand_grid(cfg.require_method()?, &sweep);

    std::fs::create_dir_all(out_dir)?;
    let mut flusher =
        report::IncrementalJsonl::create(&out_dir.join("runs.jsonl"), &data.test.hard_labels)?;
    let entries = run_sweep(
        &data,
        &settings,
        &grid,
        cfg.experiment.n_runs,
        cfg.experiment.base_seed,
        cfg.experiment.anchor_prelim_seed,
        |entry| flusher.record_entry(entry),
    )?;
    flusher.finish()?;

    let results: Vec<MethodResult> = entries
        .into_iter()
        .filter_map(|e| match e.outcome {
            Ok(outcome) => Some(MethodResult {
                method: e.method,
                records: outcome.records,
                report: outcome.report,
            }),
            Err(_) => None,
        })
        .collect();
    if results.is_empty() {
        return Err(Error::config("every sweep point failed".to_string()));
    }
    report::write_summaries(&results, out_dir)
}

/// `theory` subcommand: rate experiment or bound evaluation, written as CSV
/// under `out_dir`. Returns the CSV text.
pub fn execute_theory(cfg: &ConfigFile, out_dir: &Path) -> Result<String> {
    let theory = cfg.require_theory()?;
    let eta = theory.eta.to_spec(theory.eta_value)?;
    let problem = SyntheticProblem::uniform_cube(theory.dim, eta)?;
    let schedule = match theory.schedule {
        config::ScheduleName::Power => KSchedule::PowerLaw {
            exponent: theory.exponent,
        },
        config::ScheduleName::LinearFraction => KSchedule::LinearFraction { beta: theory.beta },
    };
    std::fs::create_dir_all(out_dir)?;
    match theory.kind {
        config::TheoryKind::Rate => {
            let rate_cfg = RateConfig {
                n_grid: theory.n_grid.clone(),
                trials: theory.trials,
                seed: theory.seed,
                grid_per_axis: theory.grid_per_axis,
                delta: theory.delta,
                oracle_sample_size: theory.oracle_sample_size,
            };
            let result = rate_experiment(&problem, &schedule, &rate_cfg)?;
            let csv = rate_csv(&result);
            std::fs::write(out_dir.join("rate_curve.csv"), &csv)?;
            std::fs::write(
                out_dir.join("rate_result.json"),
                serde_json::to_string_pretty(&result)
                    .map_err(|e| Error::Config(format!("serialize rate result: {e}")))?,
            )?;
            Ok(csv)
        }
        config::TheoryKind::Bounds => {
            let mut csv = String::from("n,k,bound,k_in_range\n");
            for &n in &theory.n_grid {
                let k = schedule.k_for(n)?;
                match schedule {
                    KSchedule::PowerLaw { .. } => {
                        let b = theorem1_bound(
                            k,
                            n,
                            problem.dim,
                            &Theorem1Params::from_problem(&problem, theory.delta),
                        )?;
                        csv.push_str(&format!("{n},{k},{},{}\n", b.value, b.k_in_range));
                    }
                    KSchedule::LinearFraction { beta } => {
                        let b = theorem2_bound(n, problem.dim, beta, theory.delta)?;
                        csv.push_str(&format!("{n},{k},{b},\n"));
                    }
                }
            }
            std::fs::write(out_dir.join("bounds.csv"), &csv)?;
            Ok(csv)
        }
    }
}

/// `report` subcommand: re-render summaries from a persisted `runs.jsonl`.
pub fn execute_report(jsonl: &Path, out_dir: &Path) -> Result<RenderedReport> {
    report::rerender_from_jsonl(jsonl, out_dir)
}
