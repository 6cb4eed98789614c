//! Regularization paths and BIC-based choice of `λ`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MixedModelData, ModelParameters, VarianceSpec, SIGMA2_FLOOR};
use crate::penalty::{PenaltyFamily, PenaltySpec};
use crate::solver::{cgd_fit, cgd_null_fit, lasso_init, FitResult, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub n_points: usize,
    pub ratio: f64,
    /// Explicit grid; replaces the automatic one when set.
    pub lambdas: Option<Vec<f64>>,
    pub folds: usize,
    pub seed: u64,
    /// Fit every `λ` independently from the Lasso start, in parallel. This is
    /// the protocol of the simulation harness.
    pub cold_start: bool,
    /// Largest active set accepted before the path is cut off; `None` means
    /// `n / 2`.
    pub max_active: Option<usize>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            n_points: 30,
            ratio: 1e-3,
            lambdas: None,
            folds: 10,
            seed: 0,
            cold_start: false,
            max_active: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathResult {
    /// Strictly descending.
    pub grid: Vec<f64>,
    /// `None` marks a failed fit.
    pub fits: Vec<Option<FitResult>>,
    /// `+∞` for failed fits.
    pub bic_values: Vec<f64>,
    pub selected_index: usize,
    pub failures: Vec<(usize, String)>,
    pub lasso_lambda: f64,
}

impl PathResult {
    pub fn selected_fit(&self) -> &FitResult {
        self.fits[self.selected_index]
            .as_ref()
            .expect("selected fit is always a successful one")
    }

    pub fn selected_lambda(&self) -> f64 {
        self.grid[self.selected_index]
    }
}

/// Degrees of freedom `|{j : β̂_j ≠ 0}| + dim(η)`.
pub fn degrees_of_freedom(fit: &FitResult, spec: &VarianceSpec) -> usize {
    fit.active_set.len() + spec.eta_dim()
}

/// `−2 l_n(β̂, η̂) + log(n) · df`.
pub fn bic(fit: &FitResult, data: &MixedModelData, spec: &VarianceSpec) -> f64 {
    bic_from(fit.neg_loglik, degrees_of_freedom(fit, spec), data.n())
}

pub fn bic_from(neg_loglik: f64, df: usize, n: usize) -> f64 {
    2.0 * neg_loglik + (n as f64).ln() * df as f64
}

/// A fit at which the likelihood has run off to its unbounded end: the
/// residual variance sits at its floor or the active set is beyond `max_active`.
pub fn is_degenerate(fit: &FitResult, max_active: usize) -> bool {
    fit.params.sigma2 <= SIGMA2_FLOOR * (1.0 + 1e-6) || fit.active_set.len() > max_active
}

/// Index of the smallest value, first one on ties.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] <= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// `n_points` log-spaced values from `lambda_max` down to `ratio·lambda_max`.
pub fn log_grid(lambda_max: f64, n_points: usize, ratio: f64) -> Vec<f64> {
    if n_points == 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (n_points - 1) as f64;
    (0..n_points)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else if k == n_points - 1 {
                lambda_max * ratio
            } else {
                lambda_max * (step * k as f64).exp()
            }
        })
        .collect()
}

/// Top of the automatic grid: `max_j |x_jᵀ (y − ŷ₀)| / n` over penalized `j`,
/// where `ŷ₀` is the GLS fit on the unpenalized columns at the variance
/// components of the maximum-likelihood null model.
///
/// The residual is not weighted by `V̂⁻¹`. At the null model's own `V̂` the
/// weighted version is the exact L1 zero threshold, but that `V̂` absorbs the
/// whole signal into the variance components; warm-started fits at
/// realistic `V̂` need the larger unweighted bound to reach the sparse end.
pub fn lambda_max(
    data: &MixedModelData,
    spec: &VarianceSpec,
    config: &SolverConfig,
) -> Result<(f64, FitResult)> {
    let penalized: Vec<usize> = (0..data.p()).filter(|&j| data.is_penalized(j)).collect();
    if penalized.is_empty() {
        return Err(Error::DegenerateData("no penalized columns".into()));
    }
    let y = data.stacked_y();
    let mean = y.mean();
    let var = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / data.n() as f64).max(1e-8);
    let init = ModelParameters::new(
        vec![0.0; data.p()],
        var,
        vec![var / 2.0; spec.theta_dim()],
    )?;
    let null = cgd_null_fit(data, spec, &init, config)?;
    let x = data.stacked_x();
    let r = &y - &x * DVector::from_column_slice(&null.params.beta);
    let n = data.n() as f64;
    let lmax = penalized
        .iter()
        .map(|&j| x.column(j).dot(&r).abs() / n)
        .fold(0.0, f64::max);
    if !(lmax > 0.0) {
        return Err(Error::DegenerateData(
            "penalized columns carry no signal (λ_max = 0)".into(),
        ));
    }
    Ok((lmax, null))
}

pub fn lambda_grid(
    data: &MixedModelData,
    spec: &VarianceSpec,
    n_points: usize,
    ratio: f64,
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::InvalidInput("a λ grid needs at least two points".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!("grid ratio {ratio} outside (0, 1)")));
    }
    let (lmax, _) = lambda_max(data, spec, config)?;
    Ok(log_grid(lmax, n_points, ratio))
}

/// Fits the whole path and picks the BIC minimizer (ties → larger `λ`).
///
/// The first fit starts from the cross-validated Lasso. Each later fit is run
/// from its predecessor and again from the Lasso start, keeping the lower
/// objective; a lone warm start can sit at the null model past the point
/// where a sparse local minimum appears. With `cold_start` only the Lasso
/// start is used and the grid is fitted in parallel.
///
/// The path stops at the first degenerate fit (see [`is_degenerate`]): once
/// `σ²` collapses the likelihood is unbounded and BIC would always prefer the
/// interpolating fit. That fit and every smaller `λ` are recorded as failures.
pub fn fit_path(
    data: &MixedModelData,
    spec: &VarianceSpec,
    family: PenaltyFamily,
    solver: &SolverConfig,
    path: &PathConfig,
) -> Result<PathResult> {
    let grid = match &path.lambdas {
        Some(l) => {
            if l.is_empty() || l.windows(2).any(|w| !(w[0] > w[1])) || l.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidInput(
                    "explicit λ grid must be nonempty, nonnegative and strictly descending".into(),
                ));
            }
            l.clone()
        }
        None => lambda_grid(data, spec, path.n_points, path.ratio, solver)?,
    };
    let max_active = path.max_active.unwrap_or(data.n() / 2);
    let init = lasso_init(data, spec, path.folds, path.seed, solver)?;

    let fit_one = |lam: f64, start: &ModelParameters| -> Result<FitResult> {
        let pen = PenaltySpec::new(family, lam)?;
        cgd_fit(data, spec, &pen, start, solver)
    };

    let mut outcomes: Vec<Result<FitResult>> = if path.cold_start {
        // chunks of one pool's width, so a degenerate fit ends the work early
        let width = rayon::current_num_threads().max(1);
        let mut out = Vec::with_capacity(grid.len());
        for chunk in grid.chunks(width) {
            let part: Vec<Result<FitResult>> =
                chunk.par_iter().map(|&lam| fit_one(lam, &init.params)).collect();
            let stop = part
                .iter()
                .any(|o| matches!(o, Ok(f) if is_degenerate(f, max_active)));
            out.extend(part);
            if stop {
                break;
            }
        }
        out
    } else {
        let mut start: Option<ModelParameters> = None;
        let mut out = Vec::with_capacity(grid.len());
        for &lam in &grid {
            let warm = start.as_ref().map(|s| fit_one(lam, s));
            let res = match warm {
                None => fit_one(lam, &init.params),
                Some(w) => match (w, fit_one(lam, &init.params)) {
                    (Ok(a), Ok(b)) => Ok(if b.objective < a.objective { b } else { a }),
                    (Ok(a), Err(_)) => Ok(a),
                    (Err(_), b) => b,
                },
            };
            let stop = matches!(&res, Ok(f) if is_degenerate(f, max_active));
            if let Ok(f) = &res {
                start = Some(f.params.clone());
            }
            out.push(res);
            if stop {
                break;
            }
        }
        out
    };

    let cut = outcomes
        .iter()
        .position(|o| matches!(o, Ok(f) if is_degenerate(f, max_active)));
    if let Some(k) = cut {
        for o in outcomes.iter_mut().skip(k) {
            *o = Err(Error::Degenerate);
        }
    }
    outcomes.resize_with(grid.len(), || Err(Error::Degenerate));

    let mut fits = Vec::with_capacity(grid.len());
    let mut bic_values = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    for (k, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(fit) => {
                bic_values.push(bic(&fit, data, spec));
                fits.push(Some(fit));
            }
            Err(e) => {
                bic_values.push(f64::INFINITY);
                failures.push((k, e.to_string()));
                fits.push(None);
            }
        }
    }
    if fits.iter().all(Option::is_none) {
        return Err(Error::PathFailed);
    }
    let selected_index = argmin_first(&bic_values).ok_or(Error::PathFailed)?;
    Ok(PathResult {
        grid,
        fits,
        bic_values,
        selected_index,
        failures,
        lasso_lambda: init.lambda,
    })
}
