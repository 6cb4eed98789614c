//! Minimizers of the penalized objective
//! `Q(β, η) = −l_n(β, η) + n Σ_{j penalized} p_λ(|β_j|)`.
//!
//! [`cgd_fit`] is the coordinate gradient descent solver used everywhere by
//! default; [`newton_lqa_fit`] is the Newton–Raphson iteration on the local
//! quadratic approximation, usable when `p < n`.

mod armijo;
mod cgd;
mod lasso;
mod newton;
mod variance;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{neg_log_likelihood, MixedModelData, ModelParameters, VarianceSpec};
use crate::penalty::{PenaltySpec, DEFAULT_ZERO_CLAMP};

pub use armijo::{armijo_step, ArmijoOutcome};
pub use cgd::cgd_fit;
pub(crate) use cgd::cgd_null_fit;
pub use lasso::{lasso_init, plain_lasso, LassoInit};
pub use newton::newton_lqa_fit;
pub use variance::update_variance_components;
#[cfg(test)]
pub(crate) use cgd::tests::toy;

/// Largest objective increase tolerated between consecutive accepted
/// iterates before the solver reports an internal error.
pub const DESCENT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtaSearch {
    /// Geometric bracket growth factor.
    pub expansion: f64,
    pub tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for EtaSearch {
    fn default() -> Self {
        Self {
            expansion: 10.0,
            tolerance: 1e-8,
            max_evaluations: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub c_min: f64,
    pub c_max: f64,
    pub armijo_delta: f64,
    pub armijo_rho: f64,
    pub armijo_gamma: f64,
    pub armijo_alpha0: f64,
    pub max_backtracks: usize,
    pub max_outer_iterations: usize,
    /// Relative objective decrease below which an outer iteration counts
    /// as stalled.
    pub objective_tolerance: f64,
    pub zero_clamp: f64,
    pub eta_search: EtaSearch,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            c_min: 1e-6,
            c_max: 1e8,
            armijo_delta: 0.1,
            armijo_rho: 0.001,
            armijo_gamma: 0.0,
            armijo_alpha0: 1.0,
            max_backtracks: 50,
            max_outer_iterations: 200,
            objective_tolerance: 1e-6,
            zero_clamp: DEFAULT_ZERO_CLAMP,
            eta_search: EtaSearch::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.armijo_delta > 0.0 && self.armijo_delta < 1.0) {
            return bad("armijo_delta must lie in (0, 1)");
        }
        if !(self.armijo_rho > 0.0 && self.armijo_rho < 0.5) {
            return bad("armijo_rho must lie in (0, 1/2)");
        }
        if !(self.armijo_gamma >= 0.0 && self.armijo_alpha0 > 0.0) {
            return bad("armijo_gamma must be ≥ 0 and armijo_alpha0 > 0");
        }
        if !(self.c_min > 0.0 && self.c_min <= self.c_max) {
            return bad("need 0 < c_min ≤ c_max");
        }
        if !(self.objective_tolerance > 0.0 && self.zero_clamp > 0.0) {
            return bad("tolerances must be positive");
        }
        let e = &self.eta_search;
        if !(e.expansion > 1.0 && e.tolerance > 0.0 && e.max_evaluations > 0) {
            return bad("eta_search needs expansion > 1, tolerance > 0, max_evaluations > 0");
        }
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be positive");
        }
        Ok(())
    }

    /// A configuration that iterates to near machine precision.
    pub fn tight() -> Self {
        Self {
            objective_tolerance: 1e-14,
            max_outer_iterations: 2000,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParameters,
    /// Indices with `β̂_j ≠ 0`.
    pub active_set: Vec<usize>,
    /// Objective after initialization and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub objective: f64,
    pub neg_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub penalty: PenaltySpec,
    pub n: usize,
    /// Largest increase of the objective between consecutive iterates
    /// (nonpositive for a well-behaved fit).
    pub max_objective_increase: f64,
    /// Set when a singular Newton system was solved with a ridge term.
    #[serde(default)]
    pub ridge_fallback: bool,
}

impl FitResult {
    pub fn active_size(&self) -> usize {
        self.active_set.len()
    }

    pub fn lambda(&self) -> f64 {
        self.penalty.lambda
    }
}

pub(crate) fn penalty_sum(data: &MixedModelData, penalty: &PenaltySpec, beta: &[f64]) -> f64 {
    beta.iter()
        .enumerate()
        .filter(|(j, _)| data.is_penalized(*j))
        .map(|(_, b)| penalty.eval(b.abs()))
        .sum::<f64>()
        * data.n() as f64
}

/// `Q(β, η) = −l_n(β, η) + n Σ_{j penalized} p_λ(|β_j|)`.
pub fn penalized_objective(
    data: &MixedModelData,
    spec: &VarianceSpec,
    penalty: &PenaltySpec,
    params: &ModelParameters,
) -> Result<f64> {
    Ok(neg_log_likelihood(data, params, spec)? + penalty_sum(data, penalty, &params.beta))
}

pub(crate) fn active_set(beta: &[f64]) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Stopping rule shared by both solvers: the relative decrease stays below
/// tolerance for two consecutive iterations with an unchanged active set.
#[derive(Debug, Default)]
pub(crate) struct ConvergenceMonitor {
    stalled: usize,
    last_active: Option<Vec<usize>>,
}

impl ConvergenceMonitor {
    pub fn update(&mut self, previous: f64, current: f64, beta: &[f64], tol: f64) -> bool {
        let rel = (previous - current) / previous.abs().max(1.0);
        if rel < tol {
            self.stalled += 1;
        } else {
            self.stalled = 0;
        }
        let active = active_set(beta);
        let unchanged = self.last_active.as_ref() == Some(&active);
        self.last_active = Some(active);
        self.stalled >= 2 && unchanged
    }
}
