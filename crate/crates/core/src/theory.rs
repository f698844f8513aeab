//! Empirical verification of the k-NN label convergence guarantees.
//!
//! Two regimes are exercised on synthetic binary problems with a known label
//! function `eta`:
//!
//! * sublinear `k`: the k-NN label converges uniformly to `eta` at the
//!   nonparametric rate, with an explicit finite-sample bound;
//! * linear `k = floor(beta * n)`: the k-NN label converges to the
//!   beta-smoothed label function (the average of `eta` over the smallest
//!   ball of probability mass `beta`).
//!
//! The bound evaluators are exact arithmetic; the sup norms are approximated
//! on a fixed evaluation grid.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::knn::knn_label;
use crate::label::SoftLabel;
use crate::seed::{derive_seed, stream};

/// Known label functions `eta(x) = P(Y = 1 | X = x)` with their smoothness
/// constants. All are defined through the mean coordinate of `x`, so they
/// work in any dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "eta", content = "value")]
pub enum EtaSpec {
    /// `eta(x) = c`.
    Constant(f64),
    /// `eta(x) = mean(x)`; 1-Lipschitz constants: `alpha = 1`,
    /// `C = 1/sqrt(D)`.
    MeanCoordinate,
    /// `eta(x) = (1 + sin(2 pi mean(x))) / 2`; `alpha = 1`,
    /// `C = pi/sqrt(D)`.
    SineMean,
    /// `eta(x) = mean(x)^2`; `alpha = 1`, `C = 2/sqrt(D)` on the unit cube.
    SquareMean,
}

impl EtaSpec {
    pub fn value(&self, x: &ArrayView1<f64>) -> f64 {
        let mean = x.sum() / x.len() as f64;
        match self {
            EtaSpec::Constant(c) => *c,
            EtaSpec::MeanCoordinate => mean,
            EtaSpec::SineMean => (1.0 + (2.0 * std::f64::consts::PI * mean).sin()) / 2.0,
            EtaSpec::SquareMean => mean * mean,
        }
    }

    /// `(alpha, C_alpha)` valid on the unit cube in the given dimension.
    pub fn smoothness(&self, dim: usize) -> (f64, f64) {
        let root_d = (dim as f64).sqrt();
        match self {
            EtaSpec::Constant(_) => (1.0, 1.0),
            EtaSpec::MeanCoordinate => (1.0, 1.0 / root_d),
            EtaSpec::SineMean => (1.0, std::f64::consts::PI / root_d),
            EtaSpec::SquareMean => (1.0, 2.0 / root_d),
        }
    }

    /// Antiderivative of `eta` on `[0, 1]` (1-D), zero at 0.
    fn antiderivative_1d(&self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            EtaSpec::Constant(c) => c * x,
            EtaSpec::MeanCoordinate => x * x / 2.0,
            EtaSpec::SineMean => x / 2.0 - (2.0 * PI * x).cos() / (4.0 * PI),
            EtaSpec::SquareMean => x * x * x / 3.0,
        }
    }
}

/// Feature densities of synthetic problems.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "density")]
pub enum DensitySpec {
    /// Uniform on `[0, 1]^D`.
    UniformCube,
    /// Equally weighted isotropic Gaussians.
    GaussianMixture { means: Vec<Vec<f64>>, std_dev: f64 },
}

/// A synthetic problem with a known label function and the regularity
/// constants the bounds are evaluated with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticProblem {
    pub dim: usize,
    pub density: DensitySpec,
    pub eta: EtaSpec,
    /// Holder exponent of `eta`.
    pub alpha: f64,
    /// Holder constant of `eta`.
    pub c_alpha: f64,
    /// Support-regularity constant.
    pub omega: f64,
    /// Radius up to which support regularity holds.
    pub r0: f64,
    /// Infimum of the feature density on the support.
    pub density_floor: f64,
}

impl SyntheticProblem {
    /// Uniform density on the unit cube. The support-regularity constant is
    /// the corner worst case `2^-D`; density floor 1; `r0 = 1`.
    pub fn uniform_cube(dim: usize, eta: EtaSpec) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dimension must be >= 1".to_string()));
        }
        let (alpha, c_alpha) = eta.smoothness(dim);
        Ok(SyntheticProblem {
            dim,
            density: DensitySpec::UniformCube,
            eta,
            alpha,
            c_alpha,
            omega: 0.5f64.powi(dim as i32),
            r0: 1.0,
            density_floor: 1.0,
        })
    }

    pub fn eta_at(&self, x: &ArrayView1<f64>) -> f64 {
        self.eta.value(x)
    }

    /// Draw `n` feature vectors from the density.
    pub fn sample_points(&self, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut points = Array2::zeros((n, self.dim));
        match &self.density {
            DensitySpec::UniformCube => {
                for v in points.iter_mut() {
                    *v = rng.gen_range(0.0..1.0);
                }
            }
            DensitySpec::GaussianMixture { means, std_dev } => {
                use rand_distr::{Distribution, StandardNormal};
                for mut row in points.outer_iter_mut() {
                    let m = &means[rng.gen_range(0..means.len())];
                    for (v, &c) in row.iter_mut().zip(m) {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = c + std_dev * z;
                    }
                }
            }
        }
        points
    }
}

/// Feature points with soft labels whose FIRST component estimates
/// `P(Y = 1 | x)`.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub points: Array2<f64>,
    pub labels: Vec<SoftLabel>,
}

impl LabeledSample {
    pub fn new(points: Array2<f64>, labels: Vec<SoftLabel>) -> Result<Self> {
        if points.nrows() != labels.len() || labels.is_empty() {
            return Err(Error::shape(format!(
                "{} points with {} labels",
                points.nrows(),
                labels.len()
            )));
        }
        Ok(LabeledSample { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Draw a sample from the problem with hard Bernoulli labels:
/// `y ~ Bernoulli(eta(x))`, one-hot encoded as `[1, 0]` for the positive
/// class so the first label component estimates `eta`.
pub fn sample_problem(problem: &SyntheticProblem, n: usize, seed: u64) -> Result<LabeledSample> {
    if n == 0 {
        return Err(Error::param("sample size must be >= 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = problem.sample_points(n, &mut rng);
    let labels = points
        .outer_iter()
        .map(|row| {
            let eta = problem.eta_at(&row);
            let positive = rng.gen_range(0.0..1.0) < eta;
            SoftLabel::new_unchecked(if positive {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            })
        })
        .collect();
    LabeledSample::new(points, labels)
}

/// Regular evaluation lattice on `[0, 1]^D` with `per_axis` points per axis
/// (endpoints included).
pub fn grid_on_cube(dim: usize, per_axis: usize) -> Result<Array2<f64>> {
    if dim == 0 || per_axis < 2 {
        return Err(Error::param(format!(
            "grid needs dim >= 1 and per_axis >= 2, got {dim} and {per_axis}"
        )));
    }
    let total = per_axis.pow(dim as u32);
    let mut grid = Array2::zeros((total, dim));
    for i in 0..total {
        let mut rest = i;
        for d in 0..dim {
            let idx = rest % per_axis;
            rest /= per_axis;
            grid[(i, d)] = idx as f64 / (per_axis - 1) as f64;
        }
    }
    Ok(grid)
}

/// Volume of the D-dimensional unit ball, `pi^(D/2) / Gamma(D/2 + 1)`,
/// evaluated through the log-gamma of half-integers.
pub fn unit_ball_volume(dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::param("dimension must be >= 1".to_string()));
    }
    let half_d = dim as f64 / 2.0;
    // ln Gamma(D/2 + 1) for integer or half-integer argument.
    let ln_gamma = if dim.is_multiple_of(2) {
        // Gamma(m + 1) = m!
        let m = dim / 2;
        (1..=m).map(|i| (i as f64).ln()).sum::<f64>()
    } else {
        // Gamma(m + 3/2) = Gamma(1/2) * prod_{j=0}^{m} (j + 1/2)
        let m = (dim - 1) / 2;
        0.5 * std::f64::consts::PI.ln() + (0..=m).map(|j| (j as f64 + 0.5).ln()).sum::<f64>()
    };
    Ok((half_d * std::f64::consts::PI.ln() - ln_gamma).exp())
}

/// The constants the sublinear-k bound is evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Params {
    pub alpha: f64,
    pub c_alpha: f64,
    pub omega: f64,
    pub density_floor: f64,
    pub r0: f64,
    pub delta: f64,
}

impl Theorem1Params {
    pub fn from_problem(problem: &SyntheticProblem, delta: f64) -> Self {
        Theorem1Params {
            alpha: problem.alpha,
            c_alpha: problem.c_alpha,
            omega: problem.omega,
            density_floor: problem.density_floor,
            r0: problem.r0,
            delta,
        }
    }
}

/// Evaluated sublinear-k bound together with the admissible k-range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Bound {
    /// `bias_term + deviation_term`.
    pub value: f64,
    /// `C_alpha * (2k / (omega * v_D * n * p_0))^(alpha/D)`.
    pub bias_term: f64,
    /// `sqrt((2 ln(4D/delta) + 2D ln n) / k)`.
    pub deviation_term: f64,
    /// `2^8 * D * ln^2(4/delta) * ln n`.
    pub k_lower: f64,
    /// `omega * p_0 * v_D * r0^D * n / 2`.
    pub k_upper: f64,
    /// Whether `k_lower <= k <= k_upper`. Informational only: the
    /// theoretical constants make the range empty at small `n`, and the
    /// bound is still evaluated outside it.
    pub k_in_range: bool,
}

/// Finite-sample uniform bound on `|eta_k - eta|` for sublinear `k`.
pub fn theorem1_bound(k: usize, n: usize, dim: usize, p: &Theorem1Params) -> Result<Theorem1Bound> {
    if k == 0 || n == 0 {
        return Err(Error::param("k and n must be >= 1".to_string()));
    }
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(Error::param(format!(
            "delta must be in (0, 1), got {}",
            p.delta
        )));
    }
    for (name, v) in [
        ("alpha", p.alpha),
        ("c_alpha", p.c_alpha),
        ("omega", p.omega),
        ("density_floor", p.density_floor),
        ("r0", p.r0),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(format!("{name} must be positive, got {v}")));
        }
    }
    let v_d = unit_ball_volume(dim)?;
    let (kf, nf, df) = (k as f64, n as f64, dim as f64);
    let bias_term =
        p.c_alpha * (2.0 * kf / (p.omega * v_d * nf * p.density_floor)).powf(p.alpha / df);
    let deviation_term = ((2.0 * (4.0 * df / p.delta).ln() + 2.0 * df * nf.ln()) / kf).sqrt();
    let k_lower = 256.0 * df * (4.0 / p.delta).ln().powi(2) * nf.ln();
    let k_upper = 0.5 * p.omega * p.density_floor * v_d * p.r0.powf(df) * nf;
    Ok(Theorem1Bound {
        value: bias_term + deviation_term,
        bias_term,
        deviation_term,
        k_lower,
        k_upper,
        k_in_range: k_lower <= kf && kf <= k_upper,
    })
}

/// Uniform bound on `|eta_k - eta_tilde_beta|` for `k = floor(beta * n)`:
/// `3 * sqrt((2 ln(4D/delta) + 2D ln n) / (beta * n))`.
pub fn theorem2_bound(n: usize, dim: usize, beta: f64, delta: f64) -> Result<f64> {
    if n == 0 || dim == 0 {
        return Err(Error::param("n and D must be >= 1".to_string()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::param(format!("beta must be in (0, 1), got {beta}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    let (nf, df) = (n as f64, dim as f64);
    Ok(3.0 * ((2.0 * (4.0 * df / delta).ln() + 2.0 * df * nf.ln()) / (beta * nf)).sqrt())
}

/// Grid approximation of `sup_x |eta_k(x) - eta(x)|`: the first component of
/// the k-NN label of each grid point is compared to the true label function.
pub fn sup_error_estimate(
    problem: &SyntheticProblem,
    sample: &LabeledSample,
    k: usize,
    grid: &Array2<f64>,
) -> Result<f64> {
    if grid.nrows() == 0 {
        return Err(Error::param("evaluation grid is empty".to_string()));
    }
    let mut sup = 0.0f64;
    for row in grid.outer_iter() {
        let eta_k = knn_label(&row, &sample.points.view(), &sample.labels, k)?;
        sup = sup.max((eta_k[0] - problem.eta_at(&row)).abs());
    }
    Ok(sup)
}

/// Monte Carlo settings for the beta-smoothed oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleSettings {
    pub sample_size: usize,
    pub seed: u64,
}

/// Closed-form beta-smoothed label function for 1-D uniform problems:
/// the ball of mass `beta` around `x` is the interval
/// `[lo, lo + beta]` with `lo = max(0, min(x - beta/2, 1 - beta))`, and the
/// smoothed value is the average of `eta` over it.
pub fn beta_smoothed_closed_form(
    problem: &SyntheticProblem,
    x: &ArrayView1<f64>,
    beta: f64,
) -> Option<f64> {
    if problem.dim != 1 || problem.density != DensitySpec::UniformCube {
        return None;
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return None;
    }
    let xv = x[0];
    let lo = (xv - beta / 2.0).min(1.0 - beta).max(0.0);
    let hi = lo + beta;
    Some((problem.eta.antiderivative_1d(hi) - problem.eta.antiderivative_1d(lo)) / beta)
}

/// Monte Carlo beta-smoothed oracle: draw `N` points from the density, take
/// the `ceil(beta * N)` nearest to `x`, and average `eta` over them.
pub fn beta_smoothed_monte_carlo(
    problem: &SyntheticProblem,
    x: &ArrayView1<f64>,
    beta: f64,
    settings: &OracleSettings,
) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param(format!("beta must be in (0, 1], got {beta}")));
    }
    if settings.sample_size == 0 {
        return Err(Error::param("oracle sample size must be >= 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let points = problem.sample_points(settings.sample_size, &mut rng);
    let mut dist_eta: Vec<(f64, f64)> = points
        .outer_iter()
        .map(|row| {
            let d = row
                .iter()
                .zip(x.iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            (d, problem.eta_at(&row))
        })
        .collect();
    let m = ((beta * settings.sample_size as f64).ceil() as usize).clamp(1, settings.sample_size);
    dist_eta.select_nth_unstable_by(m - 1, |a, b| a.0.total_cmp(&b.0));
    Ok(dist_eta[..m].iter().map(|&(_, e)| e).sum::<f64>() / m as f64)
}

/// Beta-smoothed label function; prefers the closed form where available
/// (1-D uniform density) and falls back to Monte Carlo.
pub fn beta_smoothed_oracle(
    problem: &SyntheticProblem,
    x: &ArrayView1<f64>,
    beta: f64,
    settings: &OracleSettings,
) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::param(format!("beta must be in (0, 1], got {beta}")));
    }
    match beta_smoothed_closed_form(problem, x, beta) {
        Some(v) => Ok(v),
        None => beta_smoothed_monte_carlo(problem, x, beta, settings),
    }
}

/// Grid approximation of `sup_x |eta_k(x) - eta_tilde_beta(x)|` with
/// `k = floor(beta * n)`.
pub fn sup_beta_error_estimate(
    problem: &SyntheticProblem,
    sample: &LabeledSample,
    beta: f64,
    grid: &Array2<f64>,
    settings: &OracleSettings,
) -> Result<f64> {
    let k = KSchedule::LinearFraction { beta }.k_for(sample.len())?;
    let mut sup = 0.0f64;
    for (i, row) in grid.outer_iter().enumerate() {
        let eta_k = knn_label(&row, &sample.points.view(), &sample.labels, k)?;
        let oracle = beta_smoothed_oracle(
            problem,
            &row,
            beta,
            &OracleSettings {
                sample_size: settings.sample_size,
                seed: derive_seed(settings.seed, i as u64),
            },
        )?;
        sup = sup.max((eta_k[0] - oracle).abs());
    }
    Ok(sup)
}

/// How `k` grows with `n` in a rate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "schedule")]
pub enum KSchedule {
    /// `k = ceil(n^exponent)`; errors are measured against `eta`.
    PowerLaw { exponent: f64 },
    /// `k = floor(beta * n)`; errors are measured against the beta-smoothed
    /// label function.
    LinearFraction { beta: f64 },
}

impl KSchedule {
    pub fn k_for(&self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::param("n must be >= 1".to_string()));
        }
        let k = match self {
            KSchedule::PowerLaw { exponent } => {
                if !(*exponent > 0.0 && *exponent <= 1.0) {
                    return Err(Error::param(format!(
                        "power-law exponent must be in (0, 1], got {exponent}"
                    )));
                }
                (n as f64).powf(*exponent).ceil() as usize
            }
            KSchedule::LinearFraction { beta } => {
                if !(*beta > 0.0 && *beta < 1.0) {
                    return Err(Error::param(format!("beta must be in (0, 1), got {beta}")));
                }
                (beta * n as f64).floor() as usize
            }
        };
        Ok(k.clamp(1, n))
    }
}

/// Settings of a rate experiment.
#[derive(Debug, Clone)]
pub struct RateConfig {
    /// Strictly increasing sample sizes.
    pub n_grid: Vec<usize>,
    /// Independent trials per sample size (>= 3).
    pub trials: usize,
    pub seed: u64,
    /// Evaluation-grid resolution per axis.
    pub grid_per_axis: usize,
    /// Confidence level the per-n bound column is evaluated at.
    pub delta: f64,
    /// Monte Carlo size for the beta-smoothed oracle when no closed form
    /// applies.
    pub oracle_sample_size: usize,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            n_grid: vec![1000, 4000, 16000, 64000],
            trials: 5,
            seed: 0,
            grid_per_axis: 512,
            delta: 0.05,
            oracle_sample_size: 200_000,
        }
    }
}

/// Per-n sup-error estimates, the matching bound values, and the fitted
/// log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResult {
    pub sample_sizes: Vec<usize>,
    /// Mean sup error over trials, per n.
    pub mean_errors: Vec<f64>,
    /// Sample standard deviation over trials, per n.
    pub std_errors: Vec<f64>,
    /// Theoretical bound per n (sublinear or linear regime, matching the
    /// schedule).
    pub bounds: Vec<f64>,
    /// Least-squares slope of `ln(mean error)` against `ln n`.
    pub slope: f64,
    pub trials: usize,
    pub seed: u64,
    pub grid_per_axis: usize,
}

/// Least-squares slope of `ln(err)` vs `ln(n)`.
pub fn fit_loglog_slope(ns: &[usize], errors: &[f64]) -> Result<f64> {
    if ns.len() != errors.len() || ns.len() < 2 {
        return Err(Error::param(format!(
            "slope fit needs >= 2 matched points, got {} and {}",
            ns.len(),
            errors.len()
        )));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors
        .iter()
        .map(|&e| e.max(f64::MIN_POSITIVE).ln())
        .collect();
    let xm = xs.iter().sum::<f64>() / xs.len() as f64;
    let ym = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    Ok(sxy / sxx)
}

/// Run the rate experiment: for each `n`, average the sup-error estimate
/// over independent trials (per-trial derived seeds; trials run
/// concurrently) and fit the log-log slope.
pub fn rate_experiment(
    problem: &SyntheticProblem,
    schedule: &KSchedule,
    cfg: &RateConfig,
) -> Result<RateResult> {
    if cfg.n_grid.is_empty() || cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param(format!(
            "n_grid must be non-empty and strictly increasing, got {:?}",
            cfg.n_grid
        )));
    }
    if cfg.trials < 3 {
        return Err(Error::param(format!(
            "trials must be >= 3, got {}",
            cfg.trials
        )));
    }
    if problem.density != DensitySpec::UniformCube {
        return Err(Error::config(
            "rate experiments support uniform-cube densities only".to_string(),
        ));
    }
    let grid = grid_on_cube(problem.dim, cfg.grid_per_axis)?;
    let trial_base = derive_seed(cfg.seed, stream::TRIAL);

    let mut mean_errors = Vec::with_capacity(cfg.n_grid.len());
    let mut std_errors = Vec::with_capacity(cfg.n_grid.len());
    let mut bounds = Vec::with_capacity(cfg.n_grid.len());
    for (ni, &n) in cfg.n_grid.iter().enumerate() {
        let k = schedule.k_for(n)?;
        let errors: Vec<f64> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let s = derive_seed(trial_base, ((ni as u64) << 32) | t as u64);
                let sample = sample_problem(problem, n, s)?;
                match schedule {
                    KSchedule::PowerLaw { .. } => sup_error_estimate(problem, &sample, k, &grid),
                    KSchedule::LinearFraction { beta } => sup_beta_error_estimate(
                        problem,
                        &sample,
                        *beta,
                        &grid,
                        &OracleSettings {
                            sample_size: cfg.oracle_sample_size,
                            seed: derive_seed(s, 1),
                        },
                    ),
                }
            })
            .collect::<Result<_>>()?;
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let var =
            errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (errors.len() - 1) as f64;
        mean_errors.push(mean);
        std_errors.push(var.sqrt());
        bounds.push(match schedule {
            KSchedule::PowerLaw { .. } => {
                theorem1_bound(
                    k,
                    n,
                    problem.dim,
                    &Theorem1Params::from_problem(problem, cfg.delta),
                )?
                .value
            }
            KSchedule::LinearFraction { beta } => theorem2_bound(n, problem.dim, *beta, cfg.delta)?,
        });
    }
    let slope = fit_loglog_slope(&cfg.n_grid, &mean_errors)?;
    Ok(RateResult {
        sample_sizes: cfg.n_grid.clone(),
        mean_errors,
        std_errors,
        bounds,
        slope,
        trials: cfg.trials,
        seed: cfg.seed,
        grid_per_axis: cfg.grid_per_axis,
    })
}

/// Render a rate curve as CSV with columns `n,mean_error,std_error,bound`.
pub fn rate_csv(result: &RateResult) -> String {
    let mut out = String::from("n,mean_error,std_error,bound\n");
    for i in 0..result.sample_sizes.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            result.sample_sizes[i], result.mean_errors[i], result.std_errors[i], result.bounds[i]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn unit_ball_volumes_match_closed_forms() {
        assert!((unit_ball_volume(1).unwrap() - 2.0).abs() < 1e-12);
        assert!((unit_ball_volume(2).unwrap() - std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_ball_volume(3).unwrap() - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
        assert!(unit_ball_volume(0).is_err());
    }

    fn unit_params(delta: f64) -> Theorem1Params {
        Theorem1Params {
            alpha: 1.0,
            c_alpha: 1.0,
            omega: 1.0,
            density_floor: 1.0,
            r0: 1.0,
            delta,
        }
    }

    #[test]
    fn theorem1_bound_hand_values() {
        let b = theorem1_bound(100, 10_000, 1, &unit_params(0.05)).unwrap();
        assert!((b.bias_term - 0.01).abs() < 1e-12);
        assert!((b.deviation_term - 0.5213898159084058).abs() < 1e-9);
        assert!((b.value - 0.5313898159084058).abs() < 1e-9);

        let b = theorem1_bound(400, 10_000, 1, &unit_params(0.05)).unwrap();
        assert!((b.value - 0.3006949079542029).abs() < 1e-9);
    }

    #[test]
    fn theorem1_admissible_range_is_empty_at_small_n() {
        let b = theorem1_bound(100, 10_000, 1, &unit_params(0.05)).unwrap();
        assert!((b.k_lower - 45275.75187938824).abs() < 1e-6);
        assert!((b.k_upper - 10_000.0).abs() < 1e-9);
        assert!(!b.k_in_range);
    }

    #[test]
    fn theorem1_range_holds_at_large_n() {
        // delta = 0.5, n = 1e5: lower ~ 2.2e4 * ... check 2e4 inside.
        let b = theorem1_bound(20_000, 100_000, 1, &unit_params(0.5)).unwrap();
        assert!(b.k_in_range, "lower {} upper {}", b.k_lower, b.k_upper);
        assert!((b.value - 0.23686782744704396).abs() < 1e-9);
    }

    #[test]
    fn theorem1_rejects_bad_constants() {
        assert!(theorem1_bound(0, 10, 1, &unit_params(0.05)).is_err());
        assert!(theorem1_bound(5, 10, 1, &unit_params(0.0)).is_err());
        let mut p = unit_params(0.05);
        p.omega = 0.0;
        assert!(theorem1_bound(5, 10, 1, &p).is_err());
    }

    #[test]
    fn theorem2_bound_hand_value_and_monotonicity() {
        let b = theorem2_bound(10_000, 2, 0.1, 0.05).unwrap();
        assert!((b - 0.6503271346525158).abs() < 1e-9);
        // Quadrupling n roughly halves the bound.
        let b4 = theorem2_bound(40_000, 2, 0.1, 0.05).unwrap();
        assert!((b4 / b - 0.5).abs() < 0.05, "ratio {}", b4 / b);
        // Strictly decreasing in beta.
        let mut prev = f64::INFINITY;
        for beta in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let v = theorem2_bound(10_000, 2, beta, 0.05).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(theorem2_bound(10, 1, 0.0, 0.05).is_err());
        assert!(theorem2_bound(10, 1, 0.5, 1.0).is_err());
    }

    #[test]
    fn sup_error_constant_eta_with_exact_soft_labels_is_zero() {
        let problem = SyntheticProblem::uniform_cube(1, EtaSpec::Constant(0.3)).unwrap();
        let sample = LabeledSample::new(
            Array2::from_shape_vec((5, 1), vec![0.1, 0.3, 0.5, 0.7, 0.9]).unwrap(),
            vec![SoftLabel::new(vec![0.3, 0.7]).unwrap(); 5],
        )
        .unwrap();
        let grid = grid_on_cube(1, 11).unwrap();
        for k in 1..=5 {
            let err = sup_error_estimate(&problem, &sample, k, &grid).unwrap();
            assert!(err <= 1e-12, "k = {k}: err = {err}");
        }
    }

    #[test]
    fn sup_error_hand_enumeration() {
        let problem = SyntheticProblem::uniform_cube(1, EtaSpec::MeanCoordinate).unwrap();
        let sample = LabeledSample::new(
            Array2::from_shape_vec((3, 1), vec![0.1, 0.5, 0.9]).unwrap(),
            vec![
                SoftLabel::new(vec![0.1, 0.9]).unwrap(),
                SoftLabel::new(vec![0.5, 0.5]).unwrap(),
                SoftLabel::new(vec![0.9, 0.1]).unwrap(),
            ],
        )
        .unwrap();
        let grid = Array2::from_shape_vec((3, 1), vec![0.0, 0.5, 1.0]).unwrap();
        let err = sup_error_estimate(&problem, &sample, 1, &grid).unwrap();
        assert!((err - 0.1).abs() < 1e-12, "err = {err}");
    }

    #[test]
    fn sup_error_concentrates_with_hard_labels() {
        // Linear eta on [0, 1] with Bernoulli labels, n = 1e4, k = n^(2/3):
        // the sup estimate lands below 0.1 in at least 18 of 20 seeded
        // trials.
        let problem = SyntheticProblem::uniform_cube(1, EtaSpec::MeanCoordinate).unwrap();
        let grid = grid_on_cube(1, 512).unwrap();
        let k = KSchedule::PowerLaw {
            exponent: 2.0 / 3.0,
        }
        .k_for(10_000)
        .unwrap();
        let below = (0..20u64)
            .filter(|trial| {
                let sample = sample_problem(&problem, 10_000, 500 + trial).unwrap();
                sup_error_estimate(&problem, &sample, k, &grid).unwrap() < 0.1
            })
            .count();
        assert!(below >= 18, "only {below}/20 trials below 0.1");
    }

    #[test]
    fn beta_oracle_closed_forms() {
        // Symmetric window of a linear eta: the center value.
        let linear = SyntheticProblem::uniform_cube(1, EtaSpec::MeanCoordinate).unwrap();
        let v = beta_smoothed_closed_form(&linear, &array![0.5].view(), 0.2).unwrap();
        assert!((v - 0.5).abs() < 1e-12);

        // eta = x^2 around 0.5 with beta = 0.2.
        let square = SyntheticProblem::uniform_cube(1, EtaSpec::SquareMean).unwrap();
        let v = beta_smoothed_closed_form(&square, &array![0.5].view(), 0.2).unwrap();
        assert!((v - 0.25333333333333324).abs() < 1e-12);

        // beta = 1: the global mean, independent of x.
        let a = beta_smoothed_closed_form(&square, &array![0.1].view(), 1.0).unwrap();
        let b = beta_smoothed_closed_form(&square, &array![0.9].view(), 1.0).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((a - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn beta_oracle_monte_carlo_agrees_with_closed_form() {
        let problem = SyntheticProblem::uniform_cube(1, EtaSpec::SineMean).unwrap();
        for (i, x) in [0.05, 0.3, 0.5, 0.85].into_iter().enumerate() {
            let xv = array![x];
            let exact = beta_smoothed_closed_form(&problem, &xv.view(), 0.2).unwrap();
            let mc = beta_smoothed_monte_carlo(
                &problem,
                &xv.view(),
                0.2,
                &OracleSettings {
                    sample_size: 1_000_000,
                    seed: 31 + i as u64,
                },
            )
            .unwrap();
            assert!(
                (mc - exact).abs() < 0.01,
                "x = {x}: mc = {mc}, exact = {exact}"
            );
        }
    }

    #[test]
    fn beta_oracle_rejects_bad_beta() {
        let problem = SyntheticProblem::uniform_cube(1, EtaSpec::SineMean).unwrap();
        let x = array![0.5];
        let s = OracleSettings {
            sample_size: 100,
            seed: 0,
        };
        assert!(beta_smoothed_oracle(&problem, &x.view(), 0.0, &s).is_err());
        assert!(beta_smoothed_oracle(&problem, &x.view(), 1.5, &s).is_err());
    }

    #[test]
    fn schedule_k_values() {
        let pow = KSchedule::PowerLaw {
            exponent: 2.0 / 3.0,
        };
        assert_eq!(pow.k_for(1000).unwrap(), 100);
        let lin = KSchedule::LinearFraction { beta: 0.1 };
        assert_eq!(lin.k_for(1000).unwrap(), 100);
        assert_eq!(lin.k_for(5).unwrap(), 1); // floor(0.5) clamped up to 1
    }

    #[test]
    fn rate_experiment_is_deterministic() {
        let problem = SyntheticProblem::uniform_cube(1, EtaSpec::SineMean).unwrap();
        let cfg = RateConfig {
            n_grid: vec![200, 400],
            trials: 3,
            seed: 5,
            grid_per_axis: 32,
            delta: 0.05,
            oracle_sample_size: 1000,
        };
        let schedule = KSchedule::PowerLaw {
            exponent: 2.0 / 3.0,
        };
        let a = rate_experiment(&problem, &schedule, &cfg).unwrap();
        let b = rate_experiment(&problem, &schedule, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rate_experiment_k_equals_n_plateaus_at_smoothing_gap() {
        // With k = n the k-NN label estimates the global mean label, so the
        // error against a non-constant eta stays near sup|mean(eta) - eta|
        // instead of vanishing.
        let problem = SyntheticProblem::uniform_cube(1, EtaSpec::SineMean).unwrap();
        let cfg = RateConfig {
            n_grid: vec![500, 2000],
            trials: 3,
            seed: 9,
            grid_per_axis: 64,
            delta: 0.05,
            oracle_sample_size: 1000,
        };
        let schedule = KSchedule::PowerLaw { exponent: 1.0 };
        let r = rate_experiment(&problem, &schedule, &cfg).unwrap();
        for err in &r.mean_errors {
            assert!((err - 0.5).abs() < 0.1, "plateau error {err}");
        }
        assert!(r.slope.abs() < 0.15, "slope {}", r.slope);
    }

    #[test]
    fn rate_experiment_validates_inputs() {
        let problem = SyntheticProblem::uniform_cube(1, EtaSpec::SineMean).unwrap();
        let schedule = KSchedule::PowerLaw { exponent: 0.5 };
        let mut cfg = RateConfig {
            n_grid: vec![100, 100],
            ..RateConfig::default()
        };
        assert!(rate_experiment(&problem, &schedule, &cfg).is_err());
        cfg.n_grid = vec![100, 200];
        cfg.trials = 2;
        assert!(rate_experiment(&problem, &schedule, &cfg).is_err());
    }

    #[test]
    fn eta_smoothness_constants_hold_on_sampled_pairs() {
        for eta in [
            EtaSpec::MeanCoordinate,
            EtaSpec::SineMean,
            EtaSpec::SquareMean,
        ] {
            for dim in [1usize, 2, 3] {
                let problem = SyntheticProblem::uniform_cube(dim, eta).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + dim as u64);
                for _ in 0..2000 {
                    let a = problem.sample_points(1, &mut rng);
                    let b = problem.sample_points(1, &mut rng);
                    let da = problem.eta_at(&a.row(0)) - problem.eta_at(&b.row(0));
                    let dist: f64 = a
                        .row(0)
                        .iter()
                        .zip(b.row(0).iter())
                        .map(|(&x, &y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                    assert!(
                        da.abs() <= problem.c_alpha * dist.powf(problem.alpha) + 1e-12,
                        "{eta:?} dim {dim}: |d eta| = {} > C d^a = {}",
                        da.abs(),
                        problem.c_alpha * dist.powf(problem.alpha)
                    );
                }
            }
        }
    }

    #[test]
    fn grid_covers_endpoints() {
        let g = grid_on_cube(1, 5).unwrap();
        assert_eq!(g.nrows(), 5);
        assert_eq!(g[(0, 0)], 0.0);
        assert_eq!(g[(4, 0)], 1.0);
        let g2 = grid_on_cube(2, 4).unwrap();
        assert_eq!(g2.nrows(), 16);
    }
}
